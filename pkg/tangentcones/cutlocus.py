import logging
from typing import NamedTuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from tangentcones.errors import PopulationError
from tangentcones.heat_analysis import RegressionReport

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
MAX_PAIRS = 100_000
EXCESS_TOLERANCE = 1e-9


class ProductPoint(NamedTuple):
    x: int
    y: int


class CutlocusSet(NamedTuple):
    radius: float
    eps: float
    pairs: np.ndarray
    members: np.ndarray

    @property
    def member_pairs(self):
        return self.pairs[self.members]

    @property
    def fraction(self):
        return float(self.members.mean()) if self.members.size else 0.0


class MidpointReport(NamedTuple):
    midpoint: int
    diagonal_distance: float
    midpoint_error: float
    join_excess: float
    passed: bool


def _distances(space):
    return np.asarray(getattr(space, "distances", space), dtype=float)


def product_distance(space, a, b):
    D = _distances(space)
    return float(np.hypot(D[a[0], b[0]], D[a[1], b[1]]))


def diagonal_excess(space, point, other):
    """e_{(z,w)}(x,y) = d(x,y)/sqrt2 + d((x,y),(z,w)) - d(z,w)/sqrt2.

    M x M carries the l2 metric, so d(x, y) / sqrt2 is the distance from
    (x, y) to the diagonal whenever x and y have a sampled midpoint.
    """
    D = _distances(space)
    (x, y), (z, w) = point, other
    return float(D[x, y] / SQRT2 + product_distance(D, point, other) - D[z, w] / SQRT2)


def _exterior_excess(D, x, y, radius):
    """Smallest excess at (x, y) over product points outside B_{sqrt2 r}(x, y)."""
    product = np.sqrt(D[x][:, None] ** 2 + D[y][None, :] ** 2)
    exterior = product > SQRT2 * radius
    if not np.any(exterior):
        return np.inf, None
    excess = np.where(exterior, (D[x, y] - D) / SQRT2 + product, np.inf)
    flat = int(np.argmin(excess))
    return float(excess.flat[flat]), ProductPoint(*np.unravel_index(flat, D.shape))


def extension_witness(space, point, radius, tolerance=EXCESS_TOLERANCE):
    """A product point beyond sqrt2 r whose excess at ``point`` is within tolerance.

    Its existence means (x, y) sits inside a sampled minimizing path from
    the diagonal, extended past r on both sides.

    Returns:
        ProductPoint or None.
    """
    value, witness = _exterior_excess(_distances(space), point[0], point[1], radius)
    return witness if value <= tolerance else None


def candidate_pairs(rows, cap=MAX_PAIRS, seed=0):
    """Ordered pairs of distinct rows, uniformly subsampled to at most ``cap``."""
    rows = np.asarray(rows)
    x, y = np.meshgrid(rows, rows, indexing="ij")
    keep = x != y
    pairs = np.column_stack([x[keep], y[keep]])
    if pairs.shape[0] > cap:
        chosen = np.random.default_rng(seed).choice(pairs.shape[0], cap, replace=False)
        pairs = pairs[np.sort(chosen)]
        logger.info("Subsampled %d of %d product pairs", cap, keep.sum())
    return pairs


def _scan(D, pairs, radius, eps):
    minima = np.array([_exterior_excess(D, x, y, radius)[0] for x, y in pairs])
    return minima >= max(eps ** 2, EXCESS_TOLERANCE)


def effective_cutlocus(space, radius, eps, pairs=None, cap=MAX_PAIRS, seed=0, jobs=1):
    """Members of Cl(M, r, eps) among sampled product pairs.

    A pair belongs when e_{(z,w)}(x, y) >= max(eps^2, EXCESS_TOLERANCE) for
    every (z, w) outside B_{sqrt2 r}(x, y), so pairs with an extension
    witness are excluded and membership shrinks as eps grows.

    Args:
        space (FiniteMetricSpace): The sample.
        radius (float): Depth r > 0.
        eps (float): Slack >= 0.
        pairs (numpy.ndarray, optional): Pairs to test, shape (m, 2).
        cap (int, optional): Most pairs drawn when ``pairs`` is omitted.
        seed (int, optional): Seed of the pair subsample.
        jobs (int, optional): Parallel workers.

    Returns:
        CutlocusSet: The tested pairs with their membership flags.
    """
    if not radius > 0:
        raise ValueError(f"Depth r = {radius} is invalid! Accepted depths are positive.")
    if eps < 0:
        raise ValueError(f"Slack eps = {eps} is invalid! Accepted slacks are nonnegative.")
    D = _distances(space)
    if pairs is None:
        pairs = candidate_pairs(np.arange(D.shape[0]), cap, seed)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)

    if jobs == 1 or pairs.shape[0] < 2 * jobs:
        members = _scan(D, pairs, radius, eps)
    else:
        chunks = np.array_split(pairs, jobs)
        members = np.concatenate(
            Parallel(n_jobs=jobs)(delayed(_scan)(D, chunk, radius, eps) for chunk in chunks)
        )
    logger.debug("Cutlocus scan at r = %g, eps = %g: %d of %d pairs", radius, eps, members.sum(), members.size)
    return CutlocusSet(float(radius), float(eps), pairs, members.astype(bool))


def measure_decay(space, anchors, delta, radii, eps, cap=MAX_PAIRS, seed=0, min_pairs=10, jobs=1):
    """Fraction of annulus pairs in Cl(M, r, eps) against r, with a log-log fit.

    Args:
        space (FiniteMetricSpace): The sample.
        anchors (sequence): Rows of the set S.
        delta (float): Annulus A_{delta, 1/delta}(S) parameter in (0, 1).
        radii (sequence): Depths r.
        eps (float): Slack.

    Returns:
        RegressionReport: Table of (radius, fraction, pairs), slope and
        intercept of log fraction against log r.

    Raises:
        PopulationError: If the annulus holds fewer than ``min_pairs`` pairs
            or fewer than two radii have members.
    """
    if not 0 < delta < 1:
        raise ValueError(f"Annulus delta = {delta} is invalid! Accepted range is (0, 1).")
    D = _distances(space)
    to_anchors = D[np.atleast_1d(anchors)].min(axis=0)
    annulus = np.flatnonzero((to_anchors >= delta) & (to_anchors <= 1.0 / delta))
    pairs = candidate_pairs(annulus, cap, seed)
    if pairs.shape[0] < min_pairs:
        raise PopulationError(
            f"Annulus A({delta:g}, {1 / delta:g}) holds {pairs.shape[0]} pairs, fewer than {min_pairs}!"
        )

    records = []
    for radius in radii:
        found = effective_cutlocus(D, radius, eps, pairs=pairs, jobs=jobs)
        records.append({"radius": float(radius), "fraction": found.fraction, "pairs": int(pairs.shape[0])})
    table = pd.DataFrame(records, columns=["radius", "fraction", "pairs"])

    positive = table[table["fraction"] > 0]
    if len(positive) < 2:
        raise PopulationError("Fewer than two depths have cutlocus members!")
    slope, intercept = np.polyfit(np.log(positive["radius"]), np.log(positive["fraction"]), 1)
    return RegressionReport(table, float(slope), float(intercept))


def midpoint_check(space, x, y, tolerance=0.02):
    """Checks that the sample point nearest the diagonal from (x, y) is a midpoint.

    The nearest diagonal point (z, z) minimizes d(x, z)^2 + d(y, z)^2.
    Errors are relative to d(x, y).
    """
    D = _distances(space)
    z = int(np.argmin(D[x] ** 2 + D[y] ** 2))
    distance = D[x, y]
    diagonal = float(np.hypot(D[x, z], D[y, z]))
    if distance == 0:
        return MidpointReport(z, diagonal, 0.0, 0.0, True)
    midpoint_error = abs(D[x, z] - D[z, y]) / distance
    join_excess = (D[x, z] + D[z, y] - distance) / distance
    passed = bool(midpoint_error <= tolerance and join_excess <= tolerance)
    return MidpointReport(z, diagonal, float(midpoint_error), float(join_excess), passed)
