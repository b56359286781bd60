import os
import json

import matplotlib
import numpy as np
import pandas as pd

from matplotlib.figure import Figure

from tangentcones.discrete_space import FiniteMetricSpace

FLOAT_FORMAT = "%.12g"
MATRIX_FORMAT = "%.17g"
SVG_HASH_SALT = "tangentcones"


def save_output(filepath, data, **kwargs):
    """Save an experiment output in the format given by the extension.

    Args:
        filepath (str): Destination. Accepted extensions are '.dm', '.csv',
            '.json' and '.svg'.
        data: A FiniteMetricSpace for '.dm', a pandas.DataFrame for '.csv',
            a JSON-serialisable mapping for '.json' and a pandas.DataFrame
            for '.svg'.
    """
    filepath_extension = os.path.splitext(filepath)[-1]

    if filepath_extension == ".dm":
        save_metric_space(filepath, data, **kwargs)

    elif filepath_extension == ".csv":
        save_table(filepath, data, **kwargs)

    elif filepath_extension == ".json":
        save_json(filepath, data, **kwargs)

    elif filepath_extension == ".svg":
        save_plot(filepath, data, **kwargs)

    else:
        raise ValueError(
            f"Filepath extension '{filepath_extension}' is invalid! Accepted "
            "extensions are '.dm', '.csv', '.json' and '.svg'."
        )


def load_input(filepath):
    """Load a '.dm', '.csv' or '.json' file written by ``save_output``."""
    filepath_extension = os.path.splitext(filepath)[-1]

    if filepath_extension == ".dm":
        return load_metric_space(filepath)

    if filepath_extension == ".csv":
        return pd.read_csv(filepath, comment="#")

    if filepath_extension == ".json":
        with open(filepath) as f:
            return json.load(f)

    raise ValueError(
        f"Filepath extension '{filepath_extension}' is invalid! Accepted "
        "extensions are '.dm', '.csv' and '.json'."
    )


def save_metric_space(filepath, space):
    """Write a finite metric space as text.

    Provenance and labels go on '#' lines as JSON. The first other line is
    the point count n, followed by the rows i = 1..n-1 listing
    d(i, 0), ..., d(i, i - 1).

    Args:
        filepath (str): Filepath ending in '.dm'.
        space (FiniteMetricSpace): The space.
    """
    D = space.distances
    with open(filepath, "w") as f:
        f.write(f"# provenance = {json.dumps(_builtin(space.provenance), sort_keys=True)}\n")
        f.write(f"# labels = {json.dumps(_builtin(space.labels))}\n")
        f.write(f"{space.n}\n")
        for i in range(1, space.n):
            f.write(" ".join(MATRIX_FORMAT % value for value in D[i, :i]) + "\n")


def _header_entry(line):
    key, separator, value = line[1:].partition("=")
    if not separator or key.strip() not in ("provenance", "labels"):
        return None
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return None


def load_metric_space(filepath):
    """Read a '.dm' file: '#' comments, the point count, then lower-triangular rows.

    Comments other than the JSON provenance and labels written by
    ``save_metric_space`` are ignored, as are blank lines.

    Raises:
        ValueError: If the count is missing or a row has the wrong number of entries.
    """
    header, lines = {}, []
    with open(filepath) as f:
        for line in f:
            line = line.strip()
            if line.startswith("#"):
                entry = _header_entry(line)
                if entry is not None:
                    header[entry[0]] = entry[1]
            elif line:
                lines.append(line)

    if not lines or not lines[0].isdigit():
        raise ValueError(f"Metric space file '{filepath}' does not start with its point count!")
    n, rows = int(lines[0]), lines[1:]
    if len(rows) != max(n - 1, 0):
        raise ValueError(f"Metric space file '{filepath}' has {len(rows)} rows, expected {max(n - 1, 0)}!")
    D = np.zeros((n, n))
    for i, row in enumerate(rows, start=1):
        values = np.array(row.split(), dtype=float)
        if values.size != i:
            raise ValueError(
                f"Row {i} of metric space file '{filepath}' has {values.size} entries, expected {i}!"
            )
        D[i, :i] = values
    D = D + D.T

    labels = header.get("labels")
    labels = np.array(labels, dtype=int) if labels is not None else None
    return FiniteMetricSpace(D, header.get("provenance", {}), labels)


def save_table(filepath, table, comments=(), **kwargs):
    """Save a DataFrame as csv with optional '#' comment lines on top."""
    filepath_extension = os.path.splitext(filepath)[-1]
    if filepath_extension != ".csv":
        raise ValueError(
            f"Extension {filepath_extension} is not valid for "
            "the specified filetype! Check the input filepath."
        )
    kwargs.setdefault("float_format", FLOAT_FORMAT)
    with open(filepath, "w", newline="") as f:
        for comment in comments:
            f.write(f"# {comment}\n")
        table.to_csv(f, index=False, **kwargs)


def save_json(filepath, data, **kwargs):
    kwargs.setdefault("indent", 2)
    kwargs.setdefault("sort_keys", True)
    with open(filepath, "w") as f:
        json.dump(_builtin(data), f, **kwargs)
        f.write("\n")


def save_plot(filepath, table, x, series, errors=None, xlabel=None, ylabel=None, loglog=True, title=None):
    """Line plot of table columns against ``x`` as a reproducible SVG.

    Args:
        filepath (str): Filepath ending in '.svg'.
        table (pandas.DataFrame): Plotted data.
        x (str): Column on the horizontal axis.
        series (sequence): Columns drawn as lines.
        errors (dict, optional): Maps a series column to a column of lower
            values drawn as error bars below it.
        loglog (bool, optional): Logarithmic axes.
    """
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.subplots()
    errors = errors or {}
    for column in series:
        if column in errors:
            below = np.maximum(table[column] - table[errors[column]], 0.0)
            axes.errorbar(
                table[x], table[column], yerr=[below, np.zeros(len(table))],
                marker="o", capsize=3, label=column,
            )
        else:
            axes.plot(table[x], table[column], marker="o", label=column)
    if loglog:
        axes.set_xscale("log")
        axes.set_yscale("log")
    axes.set_xlabel(xlabel or x)
    if ylabel:
        axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    axes.legend()

    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        figure.savefig(filepath, format="svg", metadata={"Date": None})


def _builtin(value):
    """Numpy scalars and arrays converted for json."""
    if isinstance(value, dict):
        return {str(key): _builtin(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_builtin(item) for item in value]
    if isinstance(value, np.ndarray):
        return _builtin(value.tolist())
    if isinstance(value, np.generic):
        return _builtin(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value
