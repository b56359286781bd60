import os
import json
import logging
import argparse

import numpy as np
import pandas as pd

from tangentcones.config import (
    EXPERIMENT_SCHEMAS,
    ExperimentSpec,
    experiment_params,
    load_metric_config,
    write_metric_config,
    METRIC_NAMES,
)
from tangentcones.discrete_space import (
    Region,
    ball,
    build_graph,
    distances_from,
    graph_metric_space,
    sample_cloud,
)
from tangentcones.example_spaces import build_named_metric
from tangentcones.experiments import run_config, run_experiment
from tangentcones.gh_metric import gh_bounds
from tangentcones.utils import load_input, save_output

logger = logging.getLogger(__name__)

EXPERIMENT_VERBS = ("curvature", "heat", "cutlocus", "holder-balls", "holder-cones", "reifenberg", "excess")


def _common_options():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0, or the run file's)")
    common.add_argument("--out-dir", default=None, help="Output directory (default 'out', or the run file's)")
    common.add_argument("--jobs", type=int, default=None, help="Parallel workers")
    common.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level",
    )
    return common


def _metric_options(parser):
    parser.add_argument("--metric", default="A", choices=METRIC_NAMES, help="Built-in metric")
    parser.add_argument("--metric-file", default=None, help="Metric descriptor with a [metric] section")


def build_parser():
    """Parser for ``lab``.

    Experiment verbs take one option per parameter of their kind, named
    after the config key with dashes, e.g. ``lab holder-cones --fiber-n 500``.
    """
    common = _common_options()
    parser = argparse.ArgumentParser(prog="lab", description="Tangent cone experiments on warped products")
    verbs = parser.add_subparsers(dest="verb", required=True)

    example = verbs.add_parser("example", parents=[common], help="Write a metric descriptor")
    example.add_argument("--name", required=True, choices=METRIC_NAMES, help="Built-in metric to describe")
    example.add_argument("--out", default=None, help="Descriptor path (default <out-dir>/<name>.cfg)")

    sample = verbs.add_parser("sample", parents=[common], help="Volume-uniform sample of a region")
    _metric_options(sample)
    sample.add_argument("--region", type=float, nargs="+", required=True, help="r_lo r_hi [s_lo s_hi]")
    sample.add_argument("--n", type=int, default=1000)
    sample.add_argument("--out", default="cloud.csv")

    ball_verb = verbs.add_parser("ball", parents=[common], help="Graph ball around a chart point")
    _metric_options(ball_verb)
    ball_verb.add_argument("--region", type=float, nargs="+", required=True, help="r_lo r_hi [s_lo s_hi]")
    ball_verb.add_argument("--center", type=float, nargs=2, required=True, metavar=("R", "S"))
    ball_verb.add_argument("--radius", type=float, required=True)
    ball_verb.add_argument("--n", type=int, default=1000)
    ball_verb.add_argument("--k", type=int, default=12)
    ball_verb.add_argument("--rescale", action="store_true", help="Divide distances by the radius")
    ball_verb.add_argument("--out", default="ball.dm")

    gh = verbs.add_parser("gh", parents=[common], help="Gromov-Hausdorff bounds of two .dm files")
    gh.add_argument("first")
    gh.add_argument("second")
    gh.add_argument("--restarts", type=int, default=8)
    gh.add_argument("--iters", type=int, default=2000)
    gh.add_argument("--net-size", type=int, default=64)
    gh.add_argument("--pointed", action="store_true", help="Pin the first rows of both spaces")
    gh.add_argument("--out", default="gh.json")

    for kind in EXPERIMENT_VERBS:
        verb = verbs.add_parser(kind, parents=[common], help=f"Run a {kind} experiment")
        verb.add_argument("--label", default=kind, help="Basename of the output files")
        for key in EXPERIMENT_SCHEMAS[kind]:
            verb.add_argument("--" + key.replace("_", "-"), dest=key, default=None)

    run = verbs.add_parser("run", parents=[common], help="Run every experiment of a run file")
    run.add_argument("config")
    return parser


def _metric(args):
    if args.metric_file:
        spec = load_metric_config(args.metric_file)
        return build_named_metric(spec.name, spec.constants)
    return build_named_metric(args.metric)


def _output(args, filename):
    out_dir = args.out_dir or "out"
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, filename)


def _example(args):
    path = args.out or _output(args, f"{args.name}.cfg")
    write_metric_config(path, args.name)
    return {"metric": args.name, "path": path}


def _sample(args):
    cloud = sample_cloud(_metric(args), Region(*args.region), args.n, args.seed or 0)
    table = pd.DataFrame({
        "r": cloud.r, "s": cloud.s,
        "xi_w": cloud.xi[:, 0], "xi_x": cloud.xi[:, 1], "xi_y": cloud.xi[:, 2], "xi_z": cloud.xi[:, 3],
    })
    path = _output(args, args.out)
    save_output(path, table, comments=[f"metric = {cloud.metric.name}", f"seed = {cloud.seed}"])
    return {"points": cloud.n, "path": path}


def _ball(args):
    W = _metric(args)
    cloud = sample_cloud(W, Region(*args.region), args.n, args.seed or 0, anchors=[tuple(args.center)])
    graph = build_graph(cloud, args.k)
    row = distances_from(graph, 0, args.jobs or 1)
    inside = np.flatnonzero(row <= args.radius)
    space = graph_metric_space(graph, inside, args.jobs or 1)
    result = ball(space, 0, args.radius, rescale=args.rescale)
    path = _output(args, args.out)
    save_output(path, result)
    return {"points": result.n, "path": path}


def _gh(args):
    X, Y = load_input(args.first), load_input(args.second)
    bounds = gh_bounds(
        X, Y, args.seed or 0, args.restarts, args.iters, args.net_size,
        pointed=(0, 0) if args.pointed else None, jobs=args.jobs or 1,
    )
    report = {
        "lower": bounds.lower,
        "upper": bounds.upper,
        "net_radius": bounds.net_radius,
        "witness_pairs": int(bounds.witness.pairs.shape[0]),
    }
    path = _output(args, args.out)
    save_output(path, report)
    return dict(report, path=path)


def _experiment(args):
    values = {key: getattr(args, key) for key in EXPERIMENT_SCHEMAS[args.verb] if getattr(args, key) is not None}
    params = experiment_params(args.verb, values)
    entry = run_experiment(ExperimentSpec(args.label, args.verb, params), args.out_dir or "out", args.seed or 0,
                           args.jobs or 1)
    return entry["summary"]


def _run(args):
    manifest = run_config(args.config, args.out_dir, args.seed, args.jobs)
    return {name: entry["outputs"] for name, entry in manifest["experiments"].items()}


def main(argv=None):
    """Parses ``argv``, runs the verb and prints its summary as JSON.

    Returns:
        int: Exit status, 1 when the input was rejected.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    handlers = {"example": _example, "sample": _sample, "ball": _ball, "gh": _gh, "run": _run}
    handler = handlers.get(args.verb, _experiment)
    try:
        summary = handler(args)
    except ValueError as error:
        logger.error("%s", error)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
