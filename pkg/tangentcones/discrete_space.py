import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from joblib import Parallel, delayed
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path
from sklearn.neighbors import NearestNeighbors

from tangentcones.errors import (
    DisconnectedGraphError,
    EmptyBallError,
    EmptyRegionError,
    OvershootError,
)

logger = logging.getLogger(__name__)

# Shortest-path predecessors are accepted up to this relative slack.
PATH_TOLERANCE = 1e-9
MIN_EDGE_LENGTH = 1e-12
RAY_TOLERANCE = 1e-12
# Chords passing nearer the apex than this fraction of their end radius are not edges.
APEX_CLEARANCE = 0.5
CHORD_NODES = 5
CANDIDATE_FACTOR = 3
GROWTH_REFERENCE = 1000
CHORD_CHUNK = 200000
CONJUGATE = np.array([1.0, -1.0, -1.0, -1.0])


class Region(NamedTuple):
    r_lo: float
    r_hi: float
    s_lo: float = 0.0
    s_hi: float = np.pi


@dataclass(frozen=True)
class SampleCloud:
    """Chart points (r, s, xi) with xi a unit quaternion (w, x, y, z).

    Points on the singular rays have s = 0 or s = pi and a zero xi row.
    Anchors occupy the first ``n_anchors`` rows.
    """

    metric: object
    r: np.ndarray
    s: np.ndarray
    xi: np.ndarray
    seed: int = 0
    n_anchors: int = 0

    @property
    def n(self):
        return int(self.r.size)

    @property
    def on_ray(self):
        return (self.s <= 0.0) | (self.s >= np.pi)


@dataclass
class FiniteMetricSpace:
    """Distance matrix with its provenance.

    ``labels`` maps rows to vertex indices of the graph the space came from.
    """

    distances: np.ndarray
    provenance: dict = field(default_factory=dict)
    labels: np.ndarray = None

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        if self.labels is None:
            self.labels = np.arange(self.n)

    @property
    def n(self):
        return int(self.distances.shape[0])

    @property
    def diameter(self):
        return float(self.distances.max()) if self.n else 0.0

    def scaled(self, factor):
        return FiniteMetricSpace(self.distances * factor, dict(self.provenance), self.labels.copy())

    def check_metric(self, tolerance=1e-9):
        """Raises ValueError if D is not a metric up to ``tolerance``."""
        D = self.distances
        if not np.allclose(D, D.T, rtol=0.0, atol=tolerance):
            raise ValueError("Distance matrix is not symmetric!")
        if np.any(np.diag(D) != 0):
            raise ValueError("Distance matrix has a nonzero diagonal!")
        off_diagonal = ~np.eye(self.n, dtype=bool)
        if np.any(D[off_diagonal] <= 0):
            raise ValueError("Distance matrix has coincident points!")
        for k in range(self.n):
            if np.any(D > D[:, k:k + 1] + D[k:k + 1, :] + tolerance):
                raise ValueError(f"Triangle inequality fails through point {k}!")


@dataclass(frozen=True)
class MetricGraph:
    """Symmetric kNN graph whose edge weights are Riemannian segment lengths."""

    cloud: SampleCloud
    weights: sp.csr_matrix
    k: int

    @property
    def n(self):
        return self.cloud.n


class ExcessField(NamedTuple):
    p: int
    q: int
    values: np.ndarray


class DiscretePath(NamedTuple):
    vertices: tuple
    length: float


def quaternion_multiply(p, q):
    """Hamilton product of quaternions stored as (..., 4) arrays (w, x, y, z)."""
    pw, pv = p[..., :1], p[..., 1:]
    qw, qv = q[..., :1], q[..., 1:]
    w = pw * qw - np.sum(pv * qv, axis=-1, keepdims=True)
    v = pw * qv + qw * pv + np.cross(pv, qv)
    return np.concatenate([w, v], axis=-1)


def quaternion_log(q):
    """Vector u with exp(u) = q for unit quaternions q, |u| <= pi."""
    w = np.clip(q[..., 0], -1.0, 1.0)
    v = q[..., 1:]
    norm = np.linalg.norm(v, axis=-1)
    angle = np.arctan2(norm, w)
    scale = np.where(norm > 1e-15, angle / np.where(norm > 1e-15, norm, 1.0), 1.0)
    return scale[..., None] * v


def _marginal_inverse(density, lo, hi, uniforms, size=4001):
    grid = np.linspace(lo, hi, size)
    cdf = cumulative_trapezoid(density(grid), grid, initial=0.0)
    if not cdf[-1] > 0:
        raise EmptyRegionError(f"Region [{lo:.6g}, {hi:.6g}] carries no volume!")
    return np.interp(uniforms * cdf[-1], cdf, grid)


def _stratified(rng, n):
    return (rng.permutation(n) + rng.uniform(size=n)) / n


def _haar(rng, n):
    xi = rng.standard_normal((n, 4))
    return xi / np.linalg.norm(xi, axis=1, keepdims=True)


def haar_quaternions(n, seed=0):
    """Unit quaternions drawn from the Haar measure of S^3."""
    return _haar(np.random.default_rng(seed), n)


def sample_cloud(W, region, n, seed=0, anchors=()):
    """Volume-uniform stratified sample of a region of the metric.

    The Riemannian volume density is a(r)^4 b(s)^3 exp(sum m_j), separable
    because sum m_j is constant, so r and s are drawn from their marginals
    by Latin-hypercube inversion and xi from the Haar measure.

    Args:
        W (WarpedMetric): The metric.
        region (Region): Coordinate box; s may touch the rays 0 and pi.
        n (int): Total number of points, anchors included.
        seed (int, optional): RNG seed.
        anchors (sequence, optional): Points ``(r, s)`` or ``(r, s, xi)``
            placed verbatim at the start of the cloud.

    Returns:
        SampleCloud: The sample.

    Raises:
        EmptyRegionError: If the region has empty interior.
    """
    region = Region(*region)
    if not (0 <= region.r_lo < region.r_hi and 0 <= region.s_lo < region.s_hi <= np.pi):
        raise EmptyRegionError(
            f"Sampling region {tuple(region)} is empty! Require 0 <= r_lo < r_hi "
            "and 0 <= s_lo < s_hi <= pi."
        )
    if n < max(len(anchors), 1):
        raise ValueError(f"Point count {n} is invalid! It must cover the {len(anchors)} anchors.")

    rng = np.random.default_rng(seed)
    count = n - len(anchors)

    r_lo = max(region.r_lo, 1e-9)
    s_lo, s_hi = max(region.s_lo, 1e-9), min(region.s_hi, np.pi - 1e-9)
    r = _marginal_inverse(lambda x: W.radial.value(x) ** 4, r_lo, region.r_hi, _stratified(rng, count))
    s = _marginal_inverse(lambda x: W.angular.value(x) ** 3, s_lo, s_hi, _stratified(rng, count))
    xi = _haar(rng, count)

    anchor_r, anchor_s, anchor_xi = [], [], []
    for anchor in anchors:
        anchor_r.append(float(anchor[0]))
        anchor_s.append(float(anchor[1]))
        if len(anchor) > 2:
            anchor_xi.append(np.asarray(anchor[2], dtype=float))
        elif 0 < anchor[1] < np.pi:
            anchor_xi.append(np.array([1.0, 0.0, 0.0, 0.0]))
        else:
            anchor_xi.append(np.zeros(4))

    cloud = SampleCloud(
        W,
        np.concatenate([np.array(anchor_r, dtype=float), r]),
        np.concatenate([np.array(anchor_s, dtype=float), s]),
        np.vstack([np.array(anchor_xi).reshape(-1, 4), xi]),
        seed,
        len(anchors),
    )
    logger.info("Sampled %d points (%d anchors) with seed %d", cloud.n, len(anchors), seed)
    return cloud


def ray_anchors(times, ray=0.0):
    """Anchors gamma(t) = (t, ray) on a singular ray."""
    return [(float(t), float(ray)) for t in np.atleast_1d(times)]


def embed_cloud(cloud):
    """Flat-cone coordinates r (cos s, sin s xi) in R^5.

    The map is an isometry for the flat cone. Graph edges are the straight
    chords between these coordinates, measured in the metric of the cloud.
    """
    rho = np.where(cloud.on_ray, 0.0, cloud.r * np.sin(cloud.s))
    return np.column_stack([cloud.r * np.cos(cloud.s), rho[:, None] * cloud.xi])


def _chord_speeds(W, y, velocity):
    """Metric speed of the chord through the points y with the given velocity.

    The chart velocity splits into r', s' and the fiber rotation
    imag(xi' conj(xi)); at ray points the fiber direction is that of the
    lateral velocity, so the chord leaves the ray through s' alone.
    """
    r = np.linalg.norm(y, axis=1)
    lateral = y[:, 1:]
    lateral_velocity = velocity[:, 1:]
    rho = np.linalg.norm(lateral, axis=1)
    on_ray = rho <= RAY_TOLERANCE * r

    xi = np.where(on_ray[:, None], lateral_velocity, lateral)
    norm = np.linalg.norm(xi, axis=1)
    xi = xi / np.where(norm > 0, norm, 1.0)[:, None]
    along = np.sum(xi * lateral_velocity, axis=1)
    normal = lateral_velocity - along[:, None] * xi

    s = np.arctan2(rho, y[:, 0])
    r_rate = np.sum(y * velocity, axis=1) / r
    s_rate = (y[:, 0] * along - rho * velocity[:, 0]) / r ** 2

    safe_s = np.where(on_ray, 0.5 * np.pi, s)
    a = W.radial.value(r)
    b = W.angular.value(safe_s)
    weights = np.exp(2.0 * W.fiber.evaluate(r, safe_s).m)
    rotation = quaternion_multiply(normal, xi * CONJUGATE)[:, 1:]
    scale = np.where(on_ray, 0.0, a * b / np.where(on_ray, 1.0, rho))
    fiber = scale ** 2 * np.sum(weights * rotation.T ** 2, axis=0)
    return np.sqrt(r_rate ** 2 + (a * s_rate) ** 2 + fiber)


def segment_lengths(cloud, i, j):
    """Lengths of the chords between points i and j in the metric of the cloud.

    Chords are straight in the flat-cone coordinates of ``embed_cloud``, so
    on the flat cone their lengths are exact distances. Lengths come from
    Simpson's rule on CHORD_NODES speeds. A chord passing closer to the
    apex than APEX_CLEARANCE times its smaller end radius has infinite
    length.
    """
    i = np.atleast_1d(np.asarray(i))
    j = np.atleast_1d(np.asarray(j))
    y = embed_cloud(cloud)
    start, velocity = y[i], y[j] - y[i]

    squared = np.sum(velocity ** 2, axis=1)
    nearest = np.clip(-np.sum(start * velocity, axis=1) / np.where(squared > 0, squared, 1.0), 0.0, 1.0)
    closest = np.linalg.norm(start + nearest[:, None] * velocity, axis=1)
    open_chord = closest >= APEX_CLEARANCE * np.minimum(cloud.r[i], cloud.r[j])

    lengths = np.full(i.size, np.inf)
    tau = np.linspace(0.0, 1.0, CHORD_NODES)
    start, velocity = start[open_chord], velocity[open_chord]
    if open_chord.any():
        speeds = np.array([_chord_speeds(cloud.metric, start + t * velocity, velocity) for t in tau])
        lengths[open_chord] = simpson(speeds, x=tau, axis=0)
    return lengths


def chord_matrix(cloud, indices=None):
    """Chord lengths between all pairs of ``indices``, zero on the diagonal."""
    indices = np.arange(cloud.n) if indices is None else np.asarray(indices)
    i, j = np.triu_indices(indices.size, k=1)
    lengths = np.empty(i.size)
    for start in range(0, i.size, CHORD_CHUNK):
        stop = start + CHORD_CHUNK
        lengths[start:stop] = segment_lengths(cloud, indices[i[start:stop]], indices[j[start:stop]])
    chords = np.zeros((indices.size, indices.size))
    chords[i, j] = lengths
    return chords + chords.T


def neighbour_count(k, n):
    """Neighbours per vertex: k up to GROWTH_REFERENCE points, then growing like log n."""
    return max(int(k), int(np.ceil(k * np.log(max(n, 2)) / np.log(GROWTH_REFERENCE))))


def build_graph(cloud, k=12):
    """Symmetric nearest-neighbour graph with Riemannian chord weights.

    Candidates come from the flat-cone coordinates; each vertex keeps the
    ``neighbour_count(k, n)`` candidates with the shortest chords in the
    metric of the cloud.

    Args:
        cloud (SampleCloud): The points.
        k (int, optional): Neighbour count, at least 4.

    Returns:
        MetricGraph: The graph, with the neighbour count actually used.

    Raises:
        DisconnectedGraphError: If the graph has several components.
    """
    if k < 4:
        raise ValueError(f"Neighbour count k = {k} is invalid! Accepted values are k >= 4.")
    n = cloud.n
    keep = min(neighbour_count(k, n), n - 1)
    candidates = min(CANDIDATE_FACTOR * keep, n - 1)
    coordinates = embed_cloud(cloud)
    _, indices = NearestNeighbors(n_neighbors=candidates + 1).fit(coordinates).kneighbors(coordinates)

    rows = np.repeat(np.arange(n), candidates)
    cols = indices[:, 1:].ravel()
    lengths = segment_lengths(cloud, rows, cols).reshape(n, candidates)
    shortest = np.argsort(lengths, axis=1, kind="stable")[:, :keep]
    chosen = (np.arange(n)[:, None] * candidates + shortest).ravel()

    pairs = np.sort(np.column_stack([rows[chosen], cols[chosen]]), axis=1)
    lengths = lengths.ravel()[chosen]
    usable = (pairs[:, 0] != pairs[:, 1]) & np.isfinite(lengths)
    pairs, first = np.unique(pairs[usable], axis=0, return_index=True)
    lengths = np.maximum(lengths[usable][first], MIN_EDGE_LENGTH)

    weights = sp.csr_matrix((lengths, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    weights = (weights + weights.T).tocsr()
    weights.sort_indices()

    count, labels = connected_components(weights, directed=False)
    if count > 1:
        raise DisconnectedGraphError(np.bincount(labels))
    logger.info("Built %d-NN graph with %d vertices and %d edges", keep, n, pairs.shape[0])
    return MetricGraph(cloud, weights, keep)


def shortest_paths(graph, sources=None, jobs=1):
    """Graph distances from the sources to every vertex.

    Args:
        graph (MetricGraph): The graph.
        sources (sequence, optional): Source vertices; all vertices by default.
        jobs (int, optional): Parallel Dijkstra workers.

    Returns:
        numpy.ndarray: Shape (len(sources), n).
    """
    sources = np.arange(graph.n) if sources is None else np.atleast_1d(sources)
    if jobs == 1 or sources.size < 2 * jobs:
        rows = dijkstra(graph.weights, directed=False, indices=sources)
    else:
        chunks = np.array_split(sources, jobs)
        parts = Parallel(n_jobs=jobs)(
            delayed(dijkstra)(graph.weights, directed=False, indices=chunk) for chunk in chunks
        )
        rows = np.vstack(parts)
    rows = np.atleast_2d(rows)
    if not np.all(np.isfinite(rows)):
        _, labels = connected_components(graph.weights, directed=False)
        raise DisconnectedGraphError(np.bincount(labels))
    return rows


def graph_metric_space(graph, indices=None, jobs=1):
    """FiniteMetricSpace of piecewise-chord distances restricted to ``indices``.

    Graph distances between the chosen vertices are lowered to the direct
    chord wherever that is shorter, then closed under the triangle
    inequality. Entries are lengths of paths made of chords, so they only
    overestimate the Riemannian distance.
    """
    indices = np.arange(graph.n) if indices is None else np.asarray(indices)
    rows = shortest_paths(graph, indices, jobs)[:, indices]
    distances = np.minimum(0.5 * (rows + rows.T), chord_matrix(graph.cloud, indices))
    distances = np.maximum(distances, MIN_EDGE_LENGTH)
    np.fill_diagonal(distances, 0.0)
    distances = shortest_path(distances, method="FW", directed=False)
    provenance = {
        "metric": graph.cloud.metric.name,
        "n": int(indices.size),
        "k": graph.k,
        "seed": graph.cloud.seed,
    }
    return FiniteMetricSpace(distances, provenance, indices.copy())


def distances_from(graph, source, jobs=1):
    """Distances from ``source`` to every vertex: graph path or direct chord, whichever is shorter."""
    row = shortest_paths(graph, [source], jobs)[0]
    chords = segment_lengths(graph.cloud, np.full(graph.n, source), np.arange(graph.n))
    chords[source] = 0.0
    return np.minimum(row, chords)


def fiber_metric_space(m, xi, k=12):
    """Graph distances on S^3 with the right-invariant metric exp(2 m_j) delta_jk.

    Neighbours are found on the unit quaternions in R^4; an edge follows the
    one-parameter subgroup from xi_i to xi_j, so its length is
    |u|_m with u = log(xi_j xi_i^-1).

    Args:
        m (sequence): Log-scale factors m_1, m_2, m_3.
        xi (numpy.ndarray): Unit quaternions, shape (n, 4).
        k (int, optional): Neighbour count.

    Returns:
        FiniteMetricSpace: The sampled fiber.
    """
    m = np.asarray(m, dtype=float).reshape(3)
    n = xi.shape[0]
    neighbours = min(k, n - 1) + 1
    _, indices = NearestNeighbors(n_neighbors=neighbours).fit(xi).kneighbors(xi)
    rows = np.repeat(np.arange(n), neighbours - 1)
    pairs = np.unique(np.sort(np.column_stack([rows, indices[:, 1:].ravel()]), axis=1), axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]

    conjugate = xi[pairs[:, 0]] * np.array([1.0, -1.0, -1.0, -1.0])
    u = quaternion_log(quaternion_multiply(xi[pairs[:, 1]], conjugate))
    lengths = np.maximum(np.sqrt(np.sum(np.exp(2.0 * m) * u ** 2, axis=1)), MIN_EDGE_LENGTH)
    weights = sp.csr_matrix((lengths, (pairs[:, 0], pairs[:, 1])), shape=(n, n))

    distances = dijkstra(weights, directed=False)
    if not np.all(np.isfinite(distances)):
        _, labels = connected_components(weights, directed=False)
        raise DisconnectedGraphError(np.bincount(labels))
    distances = 0.5 * (distances + distances.T)
    np.fill_diagonal(distances, 0.0)
    return FiniteMetricSpace(distances, {"kind": "fiber", "m": m.tolist(), "n": int(n), "k": int(k)})


def ball(space, center, radius, rescale=False):
    """Closed ball of the space around row ``center``.

    Args:
        space (FiniteMetricSpace): The space.
        center (int): Row index of the centre.
        radius (float): Positive radius.
        rescale (bool, optional): Divide distances by the radius.

    Returns:
        FiniteMetricSpace: The ball, the centre first.
    """
    if not radius > 0:
        raise ValueError(f"Ball radius {radius} is invalid! Accepted radii are positive.")
    inside = np.flatnonzero(space.distances[center] <= radius)
    if inside.size == 0:
        raise EmptyBallError(f"Ball of radius {radius:g} around {center} is empty!")
    inside = np.concatenate([[center], inside[inside != center]])

    distances = space.distances[np.ix_(inside, inside)]
    if rescale:
        distances = distances / radius
    provenance = dict(space.provenance, center=int(space.labels[center]), radius=float(radius))
    return FiniteMetricSpace(distances, provenance, space.labels[inside])


def excess_field(space, p, q):
    D = space.distances
    return ExcessField(p, q, D[p] + D[:, q] - D[p, q])


def path_to(graph, distances, source):
    """Shortest path from ``source`` down the distance row ``distances``.

    At each step the smallest-index neighbour realising the distance is
    taken, so the vertex sequence is the lexicographically smallest one.

    Returns:
        list: Vertices from ``source`` to the zero of ``distances``.
    """
    weights = graph.weights
    path = [int(source)]
    current = int(source)
    while distances[current] > 0:
        start, stop = weights.indptr[current], weights.indptr[current + 1]
        neighbours = weights.indices[start:stop]
        lengths = weights.data[start:stop]
        slack = PATH_TOLERANCE * max(1.0, distances[current])
        tight = np.abs(distances[neighbours] + lengths - distances[current]) <= slack
        tight &= distances[neighbours] < distances[current]
        if not np.any(tight):
            raise ValueError(
                f"Vertex {current} has no predecessor! The distance row does not belong to this graph."
            )
        current = int(neighbours[tight].min())
        path.append(current)
    return path


def path_length(graph, vertices):
    return float(sum(graph.weights[a, b] for a, b in zip(vertices[:-1], vertices[1:])))


def eps_geodesics(graph, p, q, eps, rows=None):
    """Shortest paths p -> x -> q through every vertex x of excess <= eps^2 d(p, q).

    Args:
        graph (MetricGraph): The graph.
        p, q (int): End vertices.
        eps (float): Slack in (0, 1).
        rows (numpy.ndarray, optional): Precomputed distance rows from p and q.

    Returns:
        list: Distinct DiscretePath objects sorted by vertex sequence.
    """
    if not 0 < eps < 1:
        raise ValueError(f"Slack eps = {eps} is invalid! Accepted range is (0, 1).")
    if rows is None:
        rows = shortest_paths(graph, [p, q])
    from_p, from_q = rows
    distance = from_p[q]
    excess = from_p + from_q - distance
    paths = {}
    for x in np.flatnonzero(excess <= eps ** 2 * distance):
        vertices = tuple(path_to(graph, from_p, x)[::-1] + path_to(graph, from_q, x)[1:])
        if vertices not in paths:
            paths[vertices] = DiscretePath(vertices, path_length(graph, vertices))
    return [paths[key] for key in sorted(paths)]


def gradient_flow_map(graph, p, x, step, row=None):
    """Moves x a graph arc ``step`` towards p along its shortest path.

    Returns the path vertex whose arc length from x is closest to ``step``.

    Raises:
        OvershootError: If step >= d(p, x).
    """
    if row is None:
        row = shortest_paths(graph, [p])[0]
    if step < 0:
        raise ValueError(f"Flow step {step} is invalid! Accepted steps are nonnegative.")
    if step == 0:
        return int(x)
    if step >= row[x]:
        raise OvershootError(f"Flow step {step:.6g} reaches past p at distance {row[x]:.6g}!")
    path = np.array(path_to(graph, row, x))
    arcs = row[x] - row[path]
    return int(path[np.argmin(np.abs(arcs - step))])


def volume_ratio(space, center_s, center_t, radius):
    """|B_r(gamma(s))| / |B_r(gamma(t))| by point counts of a volume-uniform sample."""
    counts = [np.count_nonzero(space.distances[c] <= radius) for c in (center_s, center_t)]
    if min(counts) == 0:
        raise EmptyBallError(f"A ball of radius {radius:g} is empty!")
    return counts[0] / counts[1]


def separation_curve(graph, p, pairs, steps, row=None):
    """Change |D(flow_s x, flow_s y) - D(x, y)| of pair distances under the flow.

    Pairs where a step overshoots p are skipped at that step.

    Returns:
        pandas.DataFrame: Columns step, x, y, distance, change.
    """
    if row is None:
        row = shortest_paths(graph, [p])[0]
    pairs = [tuple(map(int, pair)) for pair in pairs]
    vertices = sorted({v for pair in pairs for v in pair})
    base = dict(zip(vertices, shortest_paths(graph, vertices)))

    records = []
    for step in steps:
        for x, y in pairs:
            try:
                fx = gradient_flow_map(graph, p, x, step, row)
                fy = gradient_flow_map(graph, p, y, step, row)
            except OvershootError:
                continue
            moved = shortest_paths(graph, [fx])[0][fy]
            records.append({
                "step": float(step),
                "x": x,
                "y": y,
                "distance": float(base[x][y]),
                "change": float(abs(moved - base[x][y])),
            })
    return pd.DataFrame(records, columns=["step", "x", "y", "distance", "change"])
