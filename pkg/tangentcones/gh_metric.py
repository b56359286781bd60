import logging
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from tangentcones.discrete_space import FiniteMetricSpace
from tangentcones.errors import SizeError

logger = logging.getLogger(__name__)

EXACT_LIMIT = 6
POLISH_LIMIT = 12
COOLING = 0.95
COOLING_BLOCK = 50
# Bounds further apart than this ratio are reported as uninformative.
LOOSENESS = 10.0
# Graph fibers overestimate distances slightly; only larger overflows are reported.
ANGLE_SLACK = 1.05


class Correspondence(NamedTuple):
    """Relation R between X and Y as an (m, 2) index array."""

    pairs: np.ndarray
    distortion: float


class UpperBound(NamedTuple):
    value: float
    witness: Correspondence


class GhBounds(NamedTuple):
    lower: float
    upper: float
    witness: Correspondence
    net_radius: float = 0.0


def _matrix(space):
    if isinstance(space, FiniteMetricSpace):
        return space.distances
    return np.asarray(space, dtype=float)


def distortion(X, Y, pairs):
    """max |d_X(x, x') - d_Y(y, y')| over pairs (x, y), (x', y') of R."""
    DX, DY = _matrix(X), _matrix(Y)
    pairs = np.asarray(pairs)
    a, b = pairs[:, 0], pairs[:, 1]
    return float(np.max(np.abs(DX[np.ix_(a, a)] - DY[np.ix_(b, b)])))


def _pairs(forward, backward):
    """Correspondence graph(f) u graph(g)^T with duplicate pairs removed."""
    pairs = np.concatenate([
        np.column_stack([np.arange(forward.size), forward]),
        np.column_stack([backward, np.arange(backward.size)]),
    ])
    return np.unique(pairs, axis=0)


def gh_exact(X, Y):
    """Exact Gromov-Hausdorff distance of two spaces with at most 6 points.

    Every minimal correspondence is graph(f) together with one pair for
    each y outside f(X), so a depth-first search over maps f: X -> Y and
    partners of the uncovered y, pruned by the best distortion so far,
    enumerates all candidates.

    Args:
        X (FiniteMetricSpace or numpy.ndarray): First space.
        Y (FiniteMetricSpace or numpy.ndarray): Second space.

    Returns:
        float: Half the minimal distortion.

    Raises:
        SizeError: If either space has more than 6 points.
    """
    DX, DY = _matrix(X), _matrix(Y)
    nX, nY = DX.shape[0], DY.shape[0]
    if max(nX, nY) > EXACT_LIMIT:
        raise SizeError(
            f"Exact Gromov-Hausdorff oracle got {nX} x {nY} points! Accepted sizes are "
            f"at most {EXACT_LIMIT} x {EXACT_LIMIT}."
        )

    best = [np.inf]
    left, right = [], []

    def added_distortion(x, y):
        if not left:
            return 0.0
        return float(np.max(np.abs(DX[x, left] - DY[y, right])))

    def extend(level, current):
        if current >= best[0]:
            return
        if level < nX:
            for y in range(nY):
                step = max(current, added_distortion(level, y))
                left.append(level)
                right.append(y)
                extend(level + 1, step)
                left.pop()
                right.pop()
            return
        uncovered = [y for y in range(nY) if y not in right]
        if not uncovered:
            best[0] = current
            return
        y = uncovered[0]
        for x in range(nX):
            step = max(current, added_distortion(x, y))
            left.append(x)
            right.append(y)
            extend(level, step)
            left.pop()
            right.pop()

    extend(0, 0.0)
    return 0.5 * best[0]


def profile_distances(X, Y):
    """Hausdorff distances between the distance-value sets of every x and y.

    Returns:
        numpy.ndarray: Shape (nX, nY); entry (x, y) is H({d(x, .)}, {d(y, .)}).
    """
    DX, DY = _matrix(X), _matrix(Y)
    result = np.empty((DX.shape[0], DY.shape[0]))
    for x in range(DX.shape[0]):
        gaps = np.abs(DX[x][None, :, None] - DY[:, None, :])
        result[x] = np.maximum(gaps.min(axis=2).max(axis=1), gaps.min(axis=1).max(axis=1))
    return result


def gh_lower(X, Y):
    """Certified lower bound on the Gromov-Hausdorff distance.

    The larger of half the diameter gap and half the distance-profile
    bound max(max_x min_y H, max_y min_x H), where H compares the sets of
    distances seen from x and from y. Partners in any correspondence see
    each other's distance sets within the distortion.
    """
    DX, DY = _matrix(X), _matrix(Y)
    diameter = 0.5 * abs(DX.max() - DY.max())
    profiles = profile_distances(DX, DY)
    profile = 0.5 * max(profiles.min(axis=1).max(), profiles.min(axis=0).max())
    return float(max(diameter, profile))


def _energy(DX, DY, forward, backward):
    pairs = _pairs(forward, backward)
    gaps = np.abs(DX[np.ix_(pairs[:, 0], pairs[:, 0])] - DY[np.ix_(pairs[:, 1], pairs[:, 1])])
    return float(gaps.max()), float(np.sqrt(np.mean(gaps ** 2)))


def _polish(DX, DY, forward, backward, pinned):
    """Coordinate descent over single reassignments until no move helps."""
    forward, backward = forward.copy(), backward.copy()
    best, _ = _energy(DX, DY, forward, backward)
    improved = True
    while improved:
        improved = False
        for mapping, size in ((forward, DY.shape[0]), (backward, DX.shape[0])):
            for index in range(mapping.size):
                if pinned is not None and mapping is forward and index == pinned[0]:
                    continue
                if pinned is not None and mapping is backward and index == pinned[1]:
                    continue
                original = mapping[index]
                for candidate in range(size):
                    mapping[index] = candidate
                    value, _ = _energy(DX, DY, forward, backward)
                    if value < best - 1e-15:
                        best, original, improved = value, candidate, True
                mapping[index] = original
    return best, forward, backward


def _anneal(DX, DY, forward, backward, iters, temperature, pinned, seed_sequence):
    rng = np.random.default_rng(seed_sequence)
    nX, nY = DX.shape[0], DY.shape[0]
    polish = nX + nY <= POLISH_LIMIT
    free_x = np.array([x for x in range(nX) if pinned is None or x != pinned[0]])
    free_y = np.array([y for y in range(nY) if pinned is None or y != pinned[1]])

    current, smooth = _energy(DX, DY, forward, backward)
    best = (current, forward.copy(), backward.copy())
    if polish:
        candidate = _polish(DX, DY, forward, backward, pinned)
        if candidate[0] < best[0]:
            best = candidate

    for it in range(iters):
        t = temperature * COOLING ** (it // COOLING_BLOCK)
        proposal_f, proposal_g = forward.copy(), backward.copy()
        move = rng.integers(3)
        if move == 0 and free_x.size:
            proposal_f[rng.choice(free_x)] = rng.integers(nY)
        elif move == 1 and free_y.size:
            proposal_g[rng.choice(free_y)] = rng.integers(nX)
        elif free_x.size >= 2:
            i, j = rng.choice(free_x, size=2, replace=False)
            proposal_f[i], proposal_f[j] = proposal_f[j], proposal_f[i]

        value, proposal_smooth = _energy(DX, DY, proposal_f, proposal_g)
        delta = (value - current) + 0.01 * (proposal_smooth - smooth)
        if delta <= 0 or rng.random() < np.exp(-delta / max(t, 1e-12)):
            forward, backward = proposal_f, proposal_g
            current, smooth = value, proposal_smooth
            if current < best[0]:
                best = (current, forward.copy(), backward.copy())
                if polish:
                    candidate = _polish(DX, DY, forward, backward, pinned)
                    if candidate[0] < best[0]:
                        best = candidate
    return best


def gh_upper(X, Y, seed=0, restarts=8, iters=2000, pointed=None, jobs=1):
    """Witness-backed upper bound on the Gromov-Hausdorff distance.

    Each restart anneals the pair of maps (f, g) behind the correspondence
    graph(f) u graph(g)^T from a greedy distance-profile matching, with
    Metropolis acceptance at T_k = T0 0.95^k. Small instances are polished
    by coordinate descent whenever the best state improves, so the result
    never increases with ``iters``.

    Args:
        X (FiniteMetricSpace or numpy.ndarray): First space.
        Y (FiniteMetricSpace or numpy.ndarray): Second space.
        seed (int, optional): Seed of all restarts.
        restarts (int, optional): Independent annealing runs.
        iters (int, optional): Moves per run.
        pointed (tuple, optional): Pair (i, j) kept in every candidate.
        jobs (int, optional): Parallel workers for the restarts.

    Returns:
        UpperBound: Half the best distortion and its correspondence.
    """
    DX, DY = _matrix(X), _matrix(Y)
    profiles = profile_distances(DX, DY)
    forward = profiles.argmin(axis=1)
    backward = profiles.argmin(axis=0)
    if pointed is not None:
        forward[pointed[0]] = pointed[1]
        backward[pointed[1]] = pointed[0]

    temperature = 0.1 * max(DX.max(), DY.max(), 1e-12)
    streams = np.random.SeedSequence(seed).spawn(restarts)
    results = Parallel(n_jobs=jobs)(
        delayed(_anneal)(DX, DY, forward, backward, iters, temperature, pointed, stream)
        for stream in streams
    )
    value, best_f, best_g = min(results, key=lambda result: result[0])
    pairs = _pairs(best_f, best_g)
    logger.debug("Gromov-Hausdorff upper bound %.6g over %d restarts", 0.5 * value, restarts)
    return UpperBound(0.5 * value, Correspondence(pairs, value))


def farthest_point_subsample(space, size, start=0):
    """Greedy farthest-point net of at most ``size`` points.

    Returns:
        tuple: ``(indices, net_radius)`` where every point lies within
        ``net_radius`` of the net.
    """
    D = _matrix(space)
    n = D.shape[0]
    if n <= size:
        return np.arange(n), 0.0
    chosen = [start]
    gaps = D[start].copy()
    while len(chosen) < size:
        nxt = int(np.argmax(gaps))
        chosen.append(nxt)
        gaps = np.minimum(gaps, D[nxt])
    return np.array(chosen), float(gaps.max())


def _restrict(space, indices):
    if isinstance(space, FiniteMetricSpace):
        return FiniteMetricSpace(
            space.distances[np.ix_(indices, indices)], dict(space.provenance), space.labels[indices]
        )
    D = _matrix(space)
    return D[np.ix_(indices, indices)]


def net_lower(X, Y, net_size=64):
    """gh_lower on farthest-point nets, reduced by the sum of the net radii."""
    x_net, x_radius = farthest_point_subsample(X, net_size)
    y_net, y_radius = farthest_point_subsample(Y, net_size)
    return max(gh_lower(_restrict(X, x_net), _restrict(Y, y_net)) - x_radius - y_radius, 0.0)


def gh_bounds(X, Y, seed=0, restarts=8, iters=2000, net_size=64, pointed=None, jobs=1):
    """Lower and upper bounds, subsampling both spaces to nets first.

    The net radii enter the error budget: the upper bound grows and the
    lower bound shrinks by their sum. With ``pointed`` the nets start at
    the pinned points.

    Returns:
        GhBounds: Bounds, witness on the nets and the combined net radius.
    """
    start_x, start_y = pointed if pointed is not None else (0, 0)
    x_net, x_radius = farthest_point_subsample(X, net_size, start_x)
    y_net, y_radius = farthest_point_subsample(Y, net_size, start_y)
    X_net, Y_net = _restrict(X, x_net), _restrict(Y, y_net)
    net_radius = x_radius + y_radius

    upper = gh_upper(
        X_net, Y_net, seed, restarts, iters, pointed=None if pointed is None else (0, 0), jobs=jobs,
    )
    lower = max(gh_lower(X_net, Y_net) - net_radius, 0.0)
    value = upper.value + net_radius
    if lower > 0 and value / lower > LOOSENESS:
        logger.warning("Gromov-Hausdorff bounds [%.4g, %.4g] are too loose", lower, value)
    return GhBounds(min(lower, value), value, upper.witness, net_radius)


def unit_ball_sample(n, fiber_n, seed=0):
    """Uniform sample of the unit ball of R x C(S^3) in coordinates (t, rho, fiber).

    The cone over a 3-dimensional fiber has volume element rho^3, so points
    are drawn by rejection from the box with that weight.

    Returns:
        tuple: Arrays ``(line, radii, fiber_index)`` of length n.
    """
    rng = np.random.default_rng(seed)
    line, radii = [], []
    while len(line) < n:
        t = rng.uniform(-1.0, 1.0, size=4 * n)
        rho = rng.uniform(size=4 * n) ** 0.25
        keep = t ** 2 + rho ** 2 <= 1.0
        line.extend(t[keep])
        radii.extend(rho[keep])
    fiber_index = rng.integers(fiber_n, size=n)
    return np.array(line[:n]), np.array(radii[:n]), fiber_index


def cone_ball(fiber_space, line, radii, fiber_index):
    """Distances of points (t, rho, xi) of R x C(fiber).

    Cone legs use the law of cosines with angle min(d_fiber, pi), combined
    with the line coordinate in quadrature.

    Args:
        fiber_space (FiniteMetricSpace or numpy.ndarray): The fiber sample.
        line (numpy.ndarray): Line coordinates t.
        radii (numpy.ndarray): Cone radii rho >= 0.
        fiber_index (numpy.ndarray): Fiber point of each sample.

    Returns:
        FiniteMetricSpace: The sampled ball.
    """
    D = _matrix(fiber_space)
    if D.max() > ANGLE_SLACK * np.pi:
        logger.warning("Fiber diameter %.4g exceeds pi; cone angles are clamped", D.max())
    line = np.asarray(line, dtype=float)
    radii = np.asarray(radii, dtype=float)
    fiber_index = np.asarray(fiber_index)

    angle = np.minimum(D[np.ix_(fiber_index, fiber_index)], np.pi)
    legs = radii[:, None] ** 2 + radii[None, :] ** 2 - 2.0 * np.outer(radii, radii) * np.cos(angle)
    distances = np.sqrt(np.maximum(legs, 0.0) + (line[:, None] - line[None, :]) ** 2)
    np.fill_diagonal(distances, 0.0)
    return FiniteMetricSpace(distances, {"kind": "cone_ball", "n": int(line.size)})
