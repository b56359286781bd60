import os
import logging
import platform
from dataclasses import dataclass
from typing import NamedTuple

import joblib
import matplotlib
import numpy as np
import pandas as pd
import scipy
import sklearn

from scipy.spatial.distance import pdist, squareform

from tangentcones.config import METRIC_CONSTANTS, MetricSpec, load_metric_config, load_run_config
from tangentcones.cutlocus import measure_decay
from tangentcones.discrete_space import (
    FiniteMetricSpace,
    Region,
    build_graph,
    distances_from,
    fiber_metric_space,
    graph_metric_space,
    haar_quaternions,
    ray_anchors,
    sample_cloud,
)
from tangentcones.errors import PopulationError
from tangentcones.example_spaces import build_named_metric, tangent_cone_fiber
from tangentcones.gh_metric import cone_ball, gh_bounds, net_lower, unit_ball_sample
from tangentcones.heat_analysis import excess_mean_check, graph_laplacian, harnack_check, parabolic_approx
from tangentcones.utils import save_output
from tangentcones.warped_geometry import (
    chart_metric,
    christoffel_symbols,
    curvature_report,
    default_grid,
)

logger = logging.getLogger(__name__)

DIMENSION = 5
BOOTSTRAP_RESAMPLES = 200
MIN_FIT_POINTS = 5
# Sampling tube around a ray ball, in units of its radius.
TUBE_MARGIN = 1.5

BALL_COLUMNS = ["radius", "s", "t", "gap", "lower", "upper", "net_radius", "noise_floor", "points_s", "points_t"]
CONE_COLUMNS = ["scale", "r", "lower", "upper", "identity", "fiber_lower", "net_radius"]
REIFENBERG_COLUMNS = ["radius", "anchor", "lower", "upper", "identity", "net_radius"]


def theorem_exponent(dimension=DIMENSION):
    """Worst-case exponent 1 / (2 (1 + 2n)) of the general continuity theorem."""
    return 1.0 / (2.0 * (1.0 + 2.0 * dimension))


class HolderFit(NamedTuple):
    points: pd.DataFrame
    exponent: float
    intercept: float
    residual: float
    interval: tuple
    noise_floor: float
    theorem_exponent: float


class SweepResult(NamedTuple):
    table: pd.DataFrame
    fit: HolderFit
    summary: dict


@dataclass(frozen=True)
class SweepConfig:
    """Ball sweep along the ray gamma(t) = (t, 0) on [0, length].

    Pairs are (centre - gap / 2, centre + gap / 2); gap 0 is always added
    as the identity control.
    """

    metric: str = "A-limit"
    centre: float = 0.5
    gaps: tuple = (0.025, 0.05, 0.1, 0.2)
    radii: tuple = (0.05,)
    length: float = 1.0
    delta: float = 0.1
    n: int = 2000
    k: int = 12
    restarts: int = 8
    iters: int = 2000
    net_size: int = 64
    seed: int = 0

    def pairs(self):
        gaps = [0.0] + sorted(float(gap) for gap in self.gaps)
        return [(gap, self.centre - 0.5 * gap, self.centre + 0.5 * gap) for gap in gaps]

    def validate(self):
        margin = self.delta * self.length
        for gap, s, t in self.pairs():
            if not (margin < s <= t < self.length - margin):
                raise ValueError(
                    f"Sweep pair ({s:g}, {t:g}) is invalid! Accepted pairs satisfy "
                    f"{margin:g} < s <= t < {self.length - margin:g}."
                )
        if not self.radii or min(self.radii) <= 0:
            raise ValueError(f"Ball radii {self.radii} are invalid! Accepted radii are positive.")


def fit_holder(gaps, values, noise_floor=0.0, subtract_floor=True, resamples=BOOTSTRAP_RESAMPLES, seed=0):
    """Least-squares fit of log(value - floor) against log(gap).

    The 95% interval of the exponent comes from a seeded residual
    bootstrap.

    Args:
        gaps (sequence): Parameter gaps; zero gaps are skipped.
        values (sequence): Measured distances.
        noise_floor (float or sequence, optional): Floor per value.
        subtract_floor (bool, optional): Fit value - floor instead of value.

    Returns:
        HolderFit: The fit.

    Raises:
        PopulationError: If fewer than two distinct gaps carry signal.
    """
    gaps = np.asarray(gaps, dtype=float)
    values = np.asarray(values, dtype=float)
    floor = np.broadcast_to(np.asarray(noise_floor, dtype=float), values.shape)
    signal = values - floor if subtract_floor else values
    keep = (gaps > 0) & (signal > 0)
    if np.unique(gaps[keep]).size < 2:
        raise PopulationError(
            f"Only {np.unique(gaps[keep]).size} distinct gaps carry signal above the floor! A fit needs 2."
        )
    if keep.sum() < MIN_FIT_POINTS:
        logger.warning("Exponent fit uses %d points, fewer than %d", keep.sum(), MIN_FIT_POINTS)

    x, y = np.log(gaps[keep]), np.log(signal[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    residuals = y - fitted

    rng = np.random.default_rng(seed)
    slopes = [np.polyfit(x, fitted + rng.choice(residuals, size=x.size), 1)[0] for _ in range(resamples)]
    interval = tuple(float(v) for v in np.percentile(slopes, [2.5, 97.5]))

    points = pd.DataFrame({"log_gap": x, "log_value": y})
    return HolderFit(
        points,
        float(slope),
        float(intercept),
        float(np.sqrt(np.mean(residuals ** 2))),
        interval,
        float(floor.max()) if floor.size else 0.0,
        theorem_exponent(),
    )


def _try_fit(*args, **kwargs):
    try:
        return fit_holder(*args, **kwargs)
    except PopulationError as error:
        logger.warning("No exponent fit: %s", error)
        return None


def _fit_summary(fit, noise_floor):
    summary = {"noise_floor": float(noise_floor), "theorem_exponent": theorem_exponent()}
    if fit is None:
        summary.update(exponent=None, intercept=None, residual=None, interval=None, points=0)
    else:
        summary.update(
            exponent=fit.exponent,
            intercept=fit.intercept,
            residual=fit.residual,
            interval=list(fit.interval),
            points=len(fit.points),
        )
    return summary


def ray_ball(W, time, radius, n=2000, k=12, seed=0, jobs=1):
    """Graph-sampled ball B_radius(gamma(time)) rescaled to unit radius.

    The cloud fills a tube of TUBE_MARGIN radii around the ball with the
    ray point anchored first, so the centre is row 0 of the ball.

    Returns:
        FiniteMetricSpace: The rescaled ball.
    """
    margin = TUBE_MARGIN * radius
    r_lo = max(time - margin, 1e-6)
    scale = float(np.asarray(W.radial.value(np.array([time])))[0])
    s_hi = min(np.pi, margin / scale) if scale > 0 else np.pi
    cloud = sample_cloud(W, Region(r_lo, time + margin, 0.0, s_hi), n, seed, anchors=ray_anchors([time]))
    graph = build_graph(cloud, k)

    row = distances_from(graph, 0, jobs)
    inside = np.flatnonzero(row <= radius)
    inside = np.concatenate([[0], inside[inside != 0]])
    ball = graph_metric_space(graph, inside, jobs)
    provenance = dict(ball.provenance, time=float(time), radius=float(radius))
    logger.info("Ball of radius %g at gamma(%g) holds %d points", radius, time, inside.size)
    return FiniteMetricSpace(ball.distances / radius, provenance, ball.labels)


def holder_ball_sweep(config, jobs=1, W=None):
    """GH distances between small balls centred on the ray.

    For each radius r and pair (s, t) the unit-rescaled balls at gamma(s)
    and gamma(t) are compared with centres pinned. The noise floor at each
    r is the upper bound between two independent samplings of the ball at
    the centre time; it is subtracted before the pooled fit. Table values
    are already d_GH / r. Exponents are fitted on the witness-backed upper
    bounds and lower bounds travel along as error bars.

    Args:
        config (SweepConfig): The sweep.
        jobs (int, optional): Parallel workers.
        W (WarpedMetric, optional): Metric, built from ``config.metric``
            when omitted.

    Returns:
        SweepResult: Table with BALL_COLUMNS, fit (None without signal)
        and summary.
    """
    config.validate()
    W = W if W is not None else build_named_metric(config.metric)
    pairs = config.pairs()
    times = sorted({time for _, s, t in pairs for time in (s, t)})
    budget = dict(seed=config.seed, restarts=config.restarts, iters=config.iters, net_size=config.net_size)

    records = []
    for radius in config.radii:
        balls = {time: ray_ball(W, time, radius, config.n, config.k, config.seed, jobs) for time in times}
        replica = ray_ball(W, config.centre, radius, config.n, config.k, config.seed + 1, jobs)
        floor = gh_bounds(balls[config.centre], replica, pointed=(0, 0), jobs=jobs, **budget).upper

        for gap, s, t in pairs:
            if gap == 0:
                lower = upper = net_radius = 0.0
            else:
                lower, upper, _, net_radius = gh_bounds(balls[s], balls[t], pointed=(0, 0), jobs=jobs, **budget)
            records.append({
                "radius": float(radius), "s": s, "t": t, "gap": gap,
                "lower": lower, "upper": upper, "net_radius": net_radius, "noise_floor": floor,
                "points_s": balls[s].n, "points_t": balls[t].n,
            })
        logger.info("Ball sweep at r = %g done; noise floor %.4g", radius, floor)

    table = pd.DataFrame(records, columns=BALL_COLUMNS)
    fit = _try_fit(table["gap"], table["upper"], table["noise_floor"], seed=config.seed)
    return SweepResult(table, fit, _fit_summary(fit, table["noise_floor"].max()))


def _coregistered_bound(W, centre, h, xi, sample, k):
    """Half distortion of the identity between the cone balls at centre and centre + h."""
    base = cone_ball(fiber_metric_space(tangent_cone_fiber(W, centre), xi, k), *sample)
    moved = cone_ball(fiber_metric_space(tangent_cone_fiber(W, centre + h), xi, k), *sample)
    return 0.5 * float(np.abs(base.distances - moved.distances).max())


def holder_cone_sweep(W, centre=1.0, scales=None, fiber_n=2000, n=400, k=12, seed=0,
                      restarts=8, iters=2000, net_size=64, jobs=1):
    """GH distances between unit balls of tangent cones R x C(S^3, g(r)).

    All balls are co-registered: one Haar sample of S^3 and one sample of
    the unit ball are reused for every r, so the identity is a
    correspondence and its half distortion an upper bound. The noise floor
    is the spread of that co-registered bound at the smallest scale between
    the sampling of ``seed`` and an independent one; it is reported, not
    subtracted.

    Args:
        W (WarpedMetric): Metric whose ray carries the fiber curve.
        centre (float, optional): Base point r of the comparison.
        scales (sequence, optional): Offsets h, comparing r and r + h.
        fiber_n (int, optional): Fiber sample size.
        n (int, optional): Ball sample size.

    Returns:
        SweepResult: Table with CONE_COLUMNS, fit and summary with the
        target exponent (1 + delta) / 2 and the excluded 1/2 + delta for
        metric B.
    """
    if scales is None:
        scales = 0.2 * 2.0 ** -np.arange(6)
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError(f"Sweep scales {scales.tolist()} are invalid! Accepted scales are positive.")
    budget = dict(seed=seed, restarts=restarts, iters=iters, net_size=net_size, jobs=jobs)

    xi = haar_quaternions(fiber_n, seed)
    sample = unit_ball_sample(n, fiber_n, seed)
    base_fiber = fiber_metric_space(tangent_cone_fiber(W, centre), xi, k)
    base = cone_ball(base_fiber, *sample)

    smallest = float(scales.min())
    spread = [
        _coregistered_bound(
            W, centre, smallest, haar_quaternions(fiber_n, replica), unit_ball_sample(n, fiber_n, replica), k,
        )
        for replica in (seed, seed + 1)
    ]
    floor = abs(spread[1] - spread[0])

    records = [{
        "scale": 0.0, "r": float(centre), "lower": 0.0, "upper": 0.0,
        "identity": 0.0, "fiber_lower": 0.0, "net_radius": 0.0,
    }]
    for h in scales:
        fiber = fiber_metric_space(tangent_cone_fiber(W, centre + h), xi, k)
        moved = cone_ball(fiber, *sample)
        identity = 0.5 * float(np.abs(base.distances - moved.distances).max())
        bounds = gh_bounds(base, moved, **budget)
        upper = min(identity, bounds.upper)
        records.append({
            "scale": float(h), "r": float(centre + h), "lower": min(bounds.lower, upper), "upper": upper,
            "identity": identity, "fiber_lower": net_lower(base_fiber, fiber, net_size),
            "net_radius": bounds.net_radius,
        })
        logger.info("Cone sweep at h = %g: upper %.4g", h, upper)

    table = pd.DataFrame(records, columns=CONE_COLUMNS)
    fit = _try_fit(table["scale"], table["upper"], floor, subtract_floor=False, seed=seed)
    summary = _fit_summary(fit, floor)
    summary.update(target=None, forbidden=None, rejects_forbidden=None)
    if W.name == "B":
        delta = float(W.constants.get("delta", 0.2))
        summary.update(target=0.5 * (1.0 + delta), forbidden=0.5 + delta)
        if fit is not None:
            summary["rejects_forbidden"] = bool(fit.interval[1] < 0.5 + delta)
    return SweepResult(table, fit, summary)


def _chart_distances(W, x):
    """Lengths of chart-straight segments between all points by Simpson's rule."""
    i, j = np.triu_indices(x.shape[0], k=1)
    step = x[j] - x[i]
    speeds = []
    for tau in (0.0, 0.5, 1.0):
        g = chart_metric(W, x[i] + tau * step)
        speeds.append(np.sqrt(np.einsum("ka,kab,kb->k", step, g, step)))
    D = np.zeros((x.shape[0], x.shape[0]))
    D[i, j] = (speeds[0] + 4.0 * speeds[1] + speeds[2]) / 6.0
    return D + D.T


def reifenberg_check(W, anchor, radii, n=200, fiber_n=400, k=12, seed=0,
                     restarts=8, iters=2000, net_size=64, jobs=1):
    """d_GH / r between B_r(anchor) and the Euclidean unit 5-ball.

    A smooth anchor (r, s) carries the Euclidean sample into the chart by
    second-order normal coordinates, exp(v) = x + v - Gamma(v, v) / 2,
    with v orthonormal for g at the anchor. An anchor on a ray is compared
    at cone level: the cone over the sampled fiber (S^3, g(r)) against the
    cone over the round fiber on the same sample. Cone balls do not depend
    on r, so every radius repeats one row.

    Returns:
        pandas.DataFrame: REIFENBERG_COLUMNS per radius.
    """
    r0, s0 = float(anchor[0]), float(anchor[1])
    radii = [float(radius) for radius in radii]
    budget = dict(seed=seed, restarts=restarts, iters=iters, net_size=net_size, jobs=jobs)
    xi = haar_quaternions(fiber_n, seed)
    line, rho, index = unit_ball_sample(n, fiber_n, seed)

    records = []
    if s0 <= 0.0 or s0 >= np.pi:
        cone = cone_ball(fiber_metric_space(tangent_cone_fiber(W, r0), xi, k), line, rho, index)
        round_cone = cone_ball(fiber_metric_space(np.zeros(3), xi, k), line, rho, index)
        identity = 0.5 * float(np.abs(cone.distances - round_cone.distances).max())
        bounds = gh_bounds(cone, round_cone, **budget)
        for radius in radii:
            records.append({
                "radius": radius, "anchor": "ray", "lower": min(bounds.lower, identity),
                "upper": min(identity, bounds.upper), "identity": identity, "net_radius": bounds.net_radius,
            })
        return pd.DataFrame(records, columns=REIFENBERG_COLUMNS)

    points = np.column_stack([line, rho[:, None] * xi[index]])
    euclidean = FiniteMetricSpace(squareform(pdist(points)), {"kind": "euclidean_ball", "n": int(n)})
    x0 = np.array([r0, s0, 0.0, 0.0, 0.0])
    frame = np.linalg.cholesky(chart_metric(W, x0))
    gamma = christoffel_symbols(W, x0)
    for radius in radii:
        v = radius * np.linalg.solve(frame.T, points.T).T
        x = x0 + v - 0.5 * np.einsum("mab,ka,kb->km", gamma, v, v)
        ball = FiniteMetricSpace(_chart_distances(W, x) / radius, {"kind": "chart_ball", "radius": radius})
        identity = 0.5 * float(np.abs(ball.distances - euclidean.distances).max())
        bounds = gh_bounds(ball, euclidean, **budget)
        records.append({
            "radius": radius, "anchor": "smooth", "lower": min(bounds.lower, identity),
            "upper": min(identity, bounds.upper), "identity": identity, "net_radius": bounds.net_radius,
        })
        logger.info("Reifenberg check at r = %g: d_GH / r <= %.4g", radius, records[-1]["upper"])
    return pd.DataFrame(records, columns=REIFENBERG_COLUMNS)


def resolve_metric(params):
    """Metric of an experiment from ``metric_file`` or the ``metric`` name."""
    if params.get("metric_file"):
        spec = load_metric_config(params["metric_file"])
    else:
        spec = MetricSpec(params["metric"], {})
    return build_named_metric(spec.name, spec.constants), spec


def _run_curvature(name, params, out_dir, seed, jobs):
    W, spec = resolve_metric(params)
    constants = dict(METRIC_CONSTANTS[spec.name], **spec.constants)
    report = curvature_report(W, default_grid(constants, n=params["grid"]))
    outputs = [_write(out_dir, f"{name}.csv", report, comments=[f"metric = {spec.name}"])]
    return outputs, {"min_eig": float(report["min_eig"].min()), "points": len(report)}


def _run_holder_balls(name, params, out_dir, seed, jobs):
    W, spec = resolve_metric(params)
    config = SweepConfig(
        metric=spec.name, centre=params["centre"], gaps=params["gaps"], radii=params["radii"],
        length=params["length"], delta=params["delta"], n=params["n"], k=params["k"],
        restarts=params["restarts"], iters=params["iters"], net_size=params["net_size"], seed=seed,
    )
    result = holder_ball_sweep(config, jobs, W)
    outputs = [
        _write(out_dir, f"{name}.csv", result.table),
        _write(
            out_dir, f"{name}.svg", result.table[result.table["gap"] > 0], x="gap",
            series=["upper", "noise_floor"], errors={"upper": "lower"}, ylabel="d_GH / r",
        ),
    ]
    return outputs, result.summary


def _run_holder_cones(name, params, out_dir, seed, jobs):
    W, _ = resolve_metric(params)
    result = holder_cone_sweep(
        W, params["centre"], params["scales"], params["fiber_n"], params["n"], params["k"], seed,
        params["restarts"], params["iters"], params["net_size"], jobs,
    )
    outputs = [
        _write(out_dir, f"{name}.csv", result.table),
        _write(
            out_dir, f"{name}.svg", result.table[result.table["scale"] > 0], x="scale",
            series=["upper", "fiber_lower"], errors={"upper": "lower"}, ylabel="d_GH",
        ),
    ]
    return outputs, result.summary


def _run_reifenberg(name, params, out_dir, seed, jobs):
    W, _ = resolve_metric(params)
    table = reifenberg_check(
        W, (params["anchor_r"], params["anchor_s"]), params["radii"], params["n"], params["fiber_n"],
        params["k"], seed, params["restarts"], params["iters"], params["net_size"], jobs,
    )
    outputs = [
        _write(out_dir, f"{name}.csv", table),
        _write(out_dir, f"{name}.svg", table, x="radius", series=["upper"], errors={"upper": "lower"},
               ylabel="d_GH / r"),
    ]
    return outputs, {"max_ratio": float(table["upper"].max())}


def _run_heat(name, params, out_dir, seed, jobs):
    W, _ = resolve_metric(params)
    anchors = ray_anchors([params["p_time"], params["q_time"]])
    cloud = sample_cloud(W, Region(params["r_lo"], params["r_hi"]), params["n"], seed, anchors)
    graph = build_graph(cloud, params["k"])
    laplacian = graph_laplacian(graph)
    approx = parabolic_approx(graph, 0, 1, params["eps"], params["delta"], laplacian, substeps=params["substeps"])

    space = graph_metric_space(graph, jobs=jobs)
    radius = 0.25 * approx.report["distance"]
    harnack = harnack_check(
        laplacian, space, space.distances[0], 0, radius, substeps=params["substeps"], c0=params["c0"],
    )

    fields = pd.DataFrame({
        "r": cloud.r, "s": cloud.s, "h_minus": approx.h_minus, "h_plus": approx.h_plus, "excess": approx.excess,
    })
    summary = dict(
        approx.report,
        mean_value_constant=harnack.mean_value_constant,
        diagonal_constant=harnack.diagonal_constant,
        tail_slope=harnack.tail_slope,
    )
    outputs = [_write(out_dir, f"{name}.csv", fields), _write(out_dir, f"{name}.json", summary)]
    return outputs, summary


def _run_cutlocus(name, params, out_dir, seed, jobs):
    W, _ = resolve_metric(params)
    cloud = sample_cloud(
        W, Region(params["r_lo"], params["r_hi"]), params["n"], seed, ray_anchors([params["anchor_time"]]),
    )
    space = graph_metric_space(build_graph(cloud, params["k"]), jobs=jobs)
    report = measure_decay(space, [0], params["delta"], params["radii"], params["eps"], seed=seed, jobs=jobs)
    outputs = [
        _write(out_dir, f"{name}.csv", report.table),
        _write(out_dir, f"{name}.svg", report.table[report.table["fraction"] > 0], x="radius",
               series=["fraction"]),
    ]
    return outputs, {"slope": report.slope, "intercept": report.intercept}


def _run_excess(name, params, out_dir, seed, jobs):
    W, _ = resolve_metric(params)
    times = [params["p_time"], params["q_time"], *params["centers"]]
    region = Region(params["r_lo"], params["r_hi"], 0.0, params["s_hi"])
    cloud = sample_cloud(W, region, params["n"], seed, ray_anchors(times))
    space = graph_metric_space(build_graph(cloud, params["k"]), jobs=jobs)
    centers = np.arange(2, len(times))
    report = excess_mean_check(space, 0, 1, centers, params["radii"])
    outputs = [_write(out_dir, f"{name}.csv", report.table)]
    return outputs, {"slope": report.slope, "intercept": report.intercept}


RUNNERS = {
    "curvature": _run_curvature,
    "holder-balls": _run_holder_balls,
    "holder-cones": _run_holder_cones,
    "reifenberg": _run_reifenberg,
    "heat": _run_heat,
    "cutlocus": _run_cutlocus,
    "excess": _run_excess,
}


def _write(out_dir, filename, data, **kwargs):
    save_output(os.path.join(out_dir, filename), data, **kwargs)
    return filename


def versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "scikit-learn": sklearn.__version__,
        "joblib": joblib.__version__,
        "matplotlib": matplotlib.__version__,
    }


def run_experiment(experiment, out_dir, seed=0, jobs=1):
    """Runs one experiment and writes its outputs into ``out_dir``.

    Returns:
        dict: Manifest entry with kind, parameters, output files and summary.
    """
    os.makedirs(out_dir, exist_ok=True)
    logger.info("Running experiment '%s' of kind %s", experiment.name, experiment.kind)
    outputs, summary = RUNNERS[experiment.kind](experiment.name, experiment.params, out_dir, seed, jobs)
    return {"kind": experiment.kind, "params": experiment.params, "outputs": outputs, "summary": summary}


def run_config(filepath, out_dir=None, seed=None, jobs=None):
    """Runs every experiment of a run file and writes ``manifest.json``.

    Command-line values override the ``[run]`` section. The manifest holds
    the sha256 of the config, the seed, library versions and one entry per
    experiment; it is written once, after all experiments.

    Returns:
        dict: The manifest.
    """
    config = load_run_config(filepath)
    out_dir = out_dir or config.out_dir
    seed = config.seed if seed is None else seed
    jobs = config.jobs if jobs is None else jobs
    os.makedirs(out_dir, exist_ok=True)

    entries = {}
    for experiment in config.experiments:
        entries[experiment.name] = run_experiment(experiment, out_dir, seed, jobs)

    manifest = {
        "config": os.path.basename(str(filepath)),
        "config_sha256": config.digest,
        "seed": seed,
        "versions": versions(),
        "experiments": entries,
    }
    save_output(os.path.join(out_dir, "manifest.json"), manifest)
    logger.info("Wrote manifest with %d experiments to %s", len(entries), out_dir)
    return manifest
