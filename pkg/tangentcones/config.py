import re
import hashlib
import logging
import configparser
from typing import NamedTuple

from tangentcones.errors import ConfigError
from tangentcones.example_spaces import EXAMPLE_A_CONSTANTS, EXAMPLE_B_CONSTANTS

logger = logging.getLogger(__name__)

METRIC_NAMES = ("A", "A-limit", "B", "flat", "round")

METRIC_CONSTANTS = {
    "A": EXAMPLE_A_CONSTANTS,
    "A-limit": EXAMPLE_A_CONSTANTS,
    "B": EXAMPLE_B_CONSTANTS,
    "flat": {},
    "round": {},
}

RUN_DEFAULTS = {"seed": 0, "jobs": 1, "out_dir": "out"}

GH_BUDGET = {"restarts": 8, "iters": 2000, "net_size": 64}

EXPERIMENT_SCHEMAS = {
    "curvature": {
        "metric": "A",
        "metric_file": "",
        "grid": 50,
    },
    "holder-balls": {
        "metric": "A-limit",
        "metric_file": "",
        "centre": 0.5,
        "gaps": (0.025, 0.05, 0.1, 0.2),
        "radii": (0.05,),
        "length": 1.0,
        "delta": 0.1,
        "n": 2000,
        "k": 12,
        **GH_BUDGET,
    },
    "holder-cones": {
        "metric": "B",
        "metric_file": "",
        "centre": 1.0,
        "scales": (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625),
        "fiber_n": 2000,
        "n": 400,
        "k": 12,
        **GH_BUDGET,
    },
    "reifenberg": {
        "metric": "flat",
        "metric_file": "",
        "anchor_r": 1.0,
        "anchor_s": 1.5707963267948966,
        "radii": (0.05, 0.1, 0.2),
        "n": 200,
        "fiber_n": 400,
        "k": 12,
        **GH_BUDGET,
    },
    "heat": {
        "metric": "flat",
        "metric_file": "",
        "p_time": 0.8,
        "q_time": 1.2,
        "r_lo": 0.5,
        "r_hi": 1.5,
        "n": 1500,
        "k": 12,
        "eps": 0.2,
        "delta": 0.1,
        "substeps": 20,
        "c0": 0.0,
    },
    "cutlocus": {
        "metric": "flat",
        "metric_file": "",
        "anchor_time": 1.0,
        "r_lo": 0.5,
        "r_hi": 1.5,
        "n": 150,
        "k": 12,
        "delta": 0.2,
        "eps": 0.05,
        "radii": (0.05, 0.1, 0.2, 0.4, 0.8),
    },
    "excess": {
        "metric": "A",
        "metric_file": "",
        "p_time": 0.2,
        "q_time": 1.2,
        "r_lo": 0.1,
        "r_hi": 1.3,
        "s_hi": 0.6,
        "centers": (0.5, 0.7, 0.9),
        "radii": (0.1, 0.15, 0.2, 0.3),
        "n": 3000,
        "k": 12,
    },
}

_SECTION = re.compile(r"^\[(?P<header>.+)\]")
_OPTION = re.compile(r"^(?P<key>[^=:\s][^=:]*?)\s*[=:]")


class MetricSpec(NamedTuple):
    name: str
    constants: dict


class ExperimentSpec(NamedTuple):
    name: str
    kind: str
    params: dict


class RunConfig(NamedTuple):
    seed: int
    jobs: int
    out_dir: str
    experiments: list
    digest: str
    source: str = None


def _line_numbers(text):
    """Maps (section, key) and (section, None) to 1-based line numbers."""
    lines, section = {}, None
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip()[0] in "#;" or line[0].isspace():
            continue
        header = _SECTION.match(line.strip())
        if header:
            section = header.group("header").strip()
            lines.setdefault((section, None), number)
            continue
        option = _OPTION.match(line)
        if option:
            lines.setdefault((section, option.group("key").strip()), number)
    return lines


def _error_line(error):
    if isinstance(error, configparser.ParsingError) and error.errors:
        return error.errors[0][0]
    return getattr(error, "lineno", None)


def _read(filepath):
    with open(filepath) as f:
        text = f.read()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(filepath))
    except configparser.Error as error:
        raise ConfigError(f"Config file cannot be parsed! {error.message}", filepath, _error_line(error)) from error
    lines = _line_numbers(text)
    if parser.defaults():
        raise ConfigError(
            f"Section '[{parser.default_section}]' is invalid! Keys must sit in a named section.",
            filepath, lines.get((parser.default_section, None)),
        )
    return text, parser, lines


def parse_value(default, value):
    """Parses a string into the type of ``default``; tuples are comma lists of floats."""
    if isinstance(default, tuple):
        return tuple(float(item) for item in value.replace(",", " ").split())
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value.strip()


def _parse_section(schema, items, filepath, lines, section):
    values = dict(schema)
    for key, value in items:
        if key not in schema:
            raise ConfigError(
                f"Key '{key}' is invalid! Accepted keys are {sorted(schema)}.",
                filepath, lines.get((section, key)),
            )
        try:
            values[key] = parse_value(schema[key], value)
        except ValueError as error:
            raise ConfigError(
                f"Value '{value}' of key '{key}' is invalid! {error}",
                filepath, lines.get((section, key)),
            ) from error
    return values


def experiment_params(kind, values=None, filepath=None, lines=None, section=None):
    """Complete and validate the parameters of an experiment.

    Args:
        kind (str): Experiment kind, a key of ``EXPERIMENT_SCHEMAS``.
        values (dict, optional): Overrides. Strings are parsed; other
            values are taken as given.

    Returns:
        dict: Every key of the schema.

    Raises:
        ConfigError: For unknown kinds, keys or metric names.
    """
    lines = lines or {}
    if kind not in EXPERIMENT_SCHEMAS:
        raise ConfigError(
            f"Experiment kind '{kind}' is invalid! Accepted kinds are {sorted(EXPERIMENT_SCHEMAS)}.",
            filepath, lines.get((section, "kind")),
        )
    schema = EXPERIMENT_SCHEMAS[kind]
    values = dict(values or {})
    raw = [(key, value) for key, value in values.items() if isinstance(value, str)]
    params = _parse_section(schema, raw, filepath, lines, section)
    for key, value in values.items():
        if isinstance(value, str):
            continue
        if key not in schema:
            raise ConfigError(f"Key '{key}' is invalid! Accepted keys are {sorted(schema)}.", filepath)
        params[key] = tuple(value) if isinstance(schema[key], tuple) else value

    if params["metric"] not in METRIC_NAMES:
        raise ConfigError(
            f"Metric name '{params['metric']}' is invalid! Accepted names are {METRIC_NAMES}.",
            filepath, lines.get((section, "metric")),
        )
    return params


def load_metric_config(filepath):
    """Reads a ``[metric]`` descriptor.

    The file is ``configparser`` syntax with one ``[metric]`` section::

        [metric]
        name = B
        delta = 0.2

    Returns:
        MetricSpec: Metric name and the constants that override the
        canonical bundle.

    Raises:
        ConfigError: If the section or name is missing or a constant does
            not belong to the named metric.
    """
    _, parser, lines = _read(filepath)
    extra = [section for section in parser.sections() if section != "metric"]
    if extra or not parser.has_section("metric"):
        line = lines.get((extra[0], None)) if extra else None
        raise ConfigError("Metric file must hold exactly one '[metric]' section!", filepath, line)

    section = parser["metric"]
    name = section.get("name")
    if name not in METRIC_NAMES:
        raise ConfigError(
            f"Metric name '{name}' is invalid! Accepted names are {METRIC_NAMES}.",
            filepath, lines.get(("metric", "name"), lines.get(("metric", None))),
        )
    schema = METRIC_CONSTANTS[name]
    items = [(key, value) for key, value in section.items() if key != "name"]
    values = _parse_section(schema, items, filepath, lines, "metric")
    constants = {key: values[key] for key, _ in items}
    logger.info("Loaded metric '%s' with %d constant overrides from %s", name, len(constants), filepath)
    return MetricSpec(name, constants)


def write_metric_config(filepath, name, constants=None):
    """Writes a metric descriptor with the canonical constants of ``name``."""
    if name not in METRIC_NAMES:
        raise ValueError(f"Metric name '{name}' is invalid! Accepted names are {METRIC_NAMES}.")
    values = dict(METRIC_CONSTANTS[name])
    values.update(constants or {})
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["metric"] = {"name": name, **{key: repr(value) for key, value in values.items()}}
    with open(filepath, "w") as f:
        parser.write(f)


def load_run_config(filepath):
    """Reads a run file into its run settings and experiment list.

    An optional ``[run]`` section is followed by one section per
    experiment::

        [run]
        seed = 7
        out_dir = out

        [experiment.sharpness]
        kind = holder-cones
        scales = 0.2, 0.1, 0.05

    Missing keys take the defaults in ``EXPERIMENT_SCHEMAS``.

    Returns:
        RunConfig: Settings, experiments in file order and the sha256 of
        the file contents.

    Raises:
        ConfigError: On unknown keys, bad values or unknown kinds, with
            the offending line number.
    """
    text, parser, lines = _read(filepath)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()

    run = dict(RUN_DEFAULTS)
    experiments = []
    for section in parser.sections():
        items = list(parser[section].items())
        if section == "run":
            run = _parse_section(RUN_DEFAULTS, items, filepath, lines, section)
            continue
        if not section.startswith("experiment.") or not section[len("experiment."):]:
            raise ConfigError(
                f"Section '[{section}]' is invalid! Accepted sections are '[run]' and '[experiment.<name>]'.",
                filepath, lines.get((section, None)),
            )
        values = dict(items)
        kind = values.pop("kind", None)
        if kind is None:
            raise ConfigError(
                f"Section '[{section}]' has no 'kind' key!", filepath, lines.get((section, None)),
            )
        params = experiment_params(kind, values, filepath, lines, section)
        experiments.append(ExperimentSpec(section[len("experiment."):], kind, params))

    if run["jobs"] < 1:
        raise ConfigError(
            f"Worker count {run['jobs']} is invalid! Accepted counts are positive.",
            filepath, lines.get(("run", "jobs")),
        )
    logger.info("Loaded %d experiments from %s", len(experiments), filepath)
    return RunConfig(run["seed"], run["jobs"], run["out_dir"], experiments, digest, str(filepath))
