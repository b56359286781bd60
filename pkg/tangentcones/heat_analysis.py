import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.integrate import solve_ivp, trapezoid
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import splu

from tangentcones.discrete_space import MetricGraph, path_to, shortest_paths
from tangentcones.errors import (
    DisconnectedGraphError,
    DomainError,
    IntegrationError,
    PopulationError,
    ScaleError,
)
from tangentcones.example_spaces import smoothstep
from tangentcones.warped_geometry import (
    chart_metric,
    christoffel_derivatives,
    christoffel_symbols,
)

logger = logging.getLogger(__name__)

DIMENSION = 5
MAX_EPS = 0.5
MIN_BALL_POPULATION = 5


@dataclass(frozen=True)
class GraphLaplacian:
    """Random-walk Laplacian L = M^-1 (C - D) of a weighted graph.

    C holds the conductances 1 / length^2, D their row sums and M the vertex
    masses k_i / (2 d), with k_i the neighbour count and d the dimension.
    """

    operator: sp.csr_matrix
    conductance: sp.csr_matrix
    mass: np.ndarray
    calibration: float

    @property
    def n(self):
        return self.mass.size


class HeatField(NamedTuple):
    values: np.ndarray
    time: float = 0.0


class CutoffField(NamedTuple):
    values: np.ndarray
    support: tuple
    plateau: tuple


class ParabolicApprox(NamedTuple):
    h_minus: np.ndarray
    h_plus: np.ndarray
    excess: np.ndarray
    time: float
    report: dict


class RegressionReport(NamedTuple):
    table: pd.DataFrame
    slope: float
    intercept: float


class HarnackReport(NamedTuple):
    ball_mean: float
    flowed_value: float
    mean_value_constant: float
    diagonal_constant: float
    tails: pd.DataFrame
    tail_slope: float


class HessianProfile(NamedTuple):
    arcs: np.ndarray
    norms: np.ndarray
    integral: float


class JacobiProfile(NamedTuple):
    fractions: np.ndarray
    norms: np.ndarray
    constant: float

    @property
    def ratios(self):
        return self.norms / self.norms[0]


def graph_laplacian(graph, dimension=DIMENSION):
    """Builds the calibrated random-walk Laplacian of a graph.

    The factor 2 d / k_i makes L approximate the Laplace-Beltrami operator
    on a kNN graph of a d-dimensional sample; on a unit path graph it is the
    standard second difference.

    Args:
        graph (MetricGraph or scipy.sparse matrix): Graph with positive
            symmetric edge lengths.
        dimension (int, optional): Dimension used in the calibration.

    Returns:
        GraphLaplacian: The operator with its conductances and masses.

    Raises:
        DisconnectedGraphError: If the graph has several components.
    """
    weights = graph.weights if isinstance(graph, MetricGraph) else sp.csr_matrix(graph, dtype=float)
    if weights.nnz == 0 or np.any(weights.data <= 0):
        raise ValueError("Edge lengths are invalid! Accepted lengths are positive.")
    count, labels = connected_components(weights, directed=False)
    if count > 1:
        raise DisconnectedGraphError(np.bincount(labels))

    conductance = weights.copy()
    conductance.data = 1.0 / conductance.data ** 2
    calibration = 2.0 * dimension
    mass = np.diff(conductance.indptr) / calibration
    strength = np.asarray(conductance.sum(axis=1)).ravel()
    operator = sp.diags(1.0 / mass) @ (conductance - sp.diags(strength))
    return GraphLaplacian(sp.csr_matrix(operator), conductance, mass, calibration)


def _implicit_step(laplacian, step):
    system = sp.identity(laplacian.n, format="csc") - step * laplacian.operator.tocsc()
    return splu(sp.csc_matrix(system))


def heat_flow(laplacian, u0, t, substeps=10):
    """Flows a field by implicit Euler steps of size t / substeps.

    Args:
        laplacian (GraphLaplacian): The generator.
        u0 (HeatField or numpy.ndarray): Initial values, shape (n,) or (n, m).
        t (float): Nonnegative flow time.
        substeps (int, optional): Number of implicit steps.

    Returns:
        HeatField: Values at time u0.time + t.
    """
    field = u0 if isinstance(u0, HeatField) else HeatField(np.asarray(u0, dtype=float))
    if t < 0:
        raise ValueError(f"Flow time {t} is invalid! Accepted times are nonnegative.")
    if substeps < 1:
        raise ValueError(f"Substeps {substeps} is invalid! Accepted values are positive.")
    values = np.array(field.values, dtype=float)
    if t == 0:
        return HeatField(values, field.time)

    solver = _implicit_step(laplacian, t / substeps)
    for _ in range(substeps):
        values = solver.solve(values)
    logger.debug("Heat flow over t = %g in %d steps", t, substeps)
    return HeatField(values, field.time + t)


def heat_kernel_rows(laplacian, sources, t, substeps=10):
    """Rows of the propagator at time t; each row is a probability vector."""
    sources = np.atleast_1d(sources)
    rows = np.zeros((laplacian.n, sources.size))
    rows[sources, np.arange(sources.size)] = 1.0
    if t > 0:
        solver = _implicit_step(laplacian, t / substeps)
        for _ in range(substeps):
            rows = solver.solve(rows, trans="T")
    return rows.T


def ramp_cutoff(distances, support, plateau):
    """Smoothstep cutoff of a distance field, 1 on the plateau, 0 off the support."""
    distances = np.asarray(distances, dtype=float)
    if not support[0] < plateau[0] <= plateau[1] < support[1]:
        raise ValueError(
            f"Plateau {tuple(plateau)} is invalid! Accepted plateaus lie strictly "
            f"inside the support {tuple(support)}."
        )
    inner = smoothstep((distances - support[0]) / (plateau[0] - support[0])).value
    outer = smoothstep((support[1] - distances) / (support[1] - plateau[1])).value
    return CutoffField(np.clip(inner * outer, 0.0, 1.0), tuple(support), tuple(plateau))


def annulus_cutoff(distances, r0, r1):
    """Cutoff equal to 1 on A_{3 r0, r1 / 3} and 0 off A_{2 r0, r1 / 2}."""
    if not 0 < 9.0 * r0 <= r1:
        raise ValueError(f"Annulus ({r0}, {r1}) is invalid! Accepted annuli have 0 < 9 r0 <= r1.")
    return ramp_cutoff(distances, (2.0 * r0, r1 / 2.0), (3.0 * r0, r1 / 3.0))


def _edge_slopes(graph, values):
    edges = sp.triu(graph.weights, k=1).tocoo()
    slopes = np.abs(values[edges.row] - values[edges.col]) / edges.data
    return edges.row, edges.col, slopes


def _vertex_slopes(graph, values):
    """Steepest incident edge slope per vertex, a surrogate for |grad h|."""
    row, col, slopes = _edge_slopes(graph, values)
    steepest = np.zeros(graph.n)
    np.maximum.at(steepest, row, slopes)
    np.maximum.at(steepest, col, slopes)
    return steepest


def _second_derivative_integral(arcs, values):
    spacing = np.diff(arcs)
    keep = spacing > 0
    arcs = np.concatenate([arcs[:1], arcs[1:][keep]])
    values = np.concatenate([values[:1], values[1:][keep]])
    if arcs.size < 3:
        return 0.0
    slopes = np.diff(values) / np.diff(arcs)
    middles = 0.5 * (arcs[1:] + arcs[:-1])
    curvature = np.diff(slopes) / np.diff(middles)
    return float(np.sum(curvature ** 2 * np.diff(middles)))


def parabolic_approx(graph, p, q, eps, delta, laplacian=None, rows=None, substeps=20):
    """Heat-flow approximations of the cut-off distance functions to p and q.

    The initial fields psi d^-, psi d^+ and psi e use the cutoff psi of the
    annuli with plateau A_{delta/4, 8} and support A_{delta/16, 16} around
    both ends, in units of d(p, q). They are flowed for time (eps d(p, q))^2.

    Args:
        graph (MetricGraph): The sample graph.
        p, q (int): End vertices.
        eps (float): Scale in (0, 0.5].
        delta (float): End margin in (0, 0.5).
        laplacian (GraphLaplacian, optional): Precomputed generator.
        rows (numpy.ndarray, optional): Distance rows from p and q.
        substeps (int, optional): Implicit Euler steps.

    Returns:
        ParabolicApprox: Flowed fields and a report of fitted constants.

    Raises:
        ScaleError: If eps is outside (0, 0.5].
    """
    if not 0 < eps <= MAX_EPS:
        raise ScaleError(f"Scale eps = {eps} is invalid! Accepted range is (0, {MAX_EPS}].")
    if not 0 < delta < 0.5:
        raise ValueError(f"End margin delta = {delta} is invalid! Accepted range is (0, 0.5).")
    if laplacian is None:
        laplacian = graph_laplacian(graph)
    if rows is None:
        rows = shortest_paths(graph, [p, q])
    d_minus, d_plus = rows
    distance = d_minus[q]
    excess = d_minus + d_plus - distance

    support = (delta * distance / 16.0, 16.0 * distance)
    plateau = (delta * distance / 4.0, 8.0 * distance)
    psi = ramp_cutoff(d_minus, support, plateau).values * ramp_cutoff(d_plus, support, plateau).values
    time = (eps * distance) ** 2
    initial = np.column_stack([psi * d_minus, psi * d_plus, psi * excess])
    h_minus, h_plus, flowed_excess = heat_flow(laplacian, initial, time, substeps).values.T

    region = (
        (np.minimum(d_minus, d_plus) >= 0.5 * delta * distance)
        & (np.maximum(d_minus, d_plus) <= 4.0 * distance)
    )
    if not np.any(region):
        raise PopulationError("No sample point lies in the annular region around p and q!")
    low_excess = region & (excess <= eps ** 2 * distance)
    error = np.maximum(np.abs(h_minus - d_minus), np.abs(h_plus - d_plus))
    approximation = float(error[low_excess].max()) if np.any(low_excess) else 0.0

    row, col, slopes = _edge_slopes(graph, h_minus)
    inside = region[row] & region[col]
    lipschitz = float(slopes[inside].max()) if np.any(inside) else 0.0

    path = np.array(path_to(graph, d_minus, q)[::-1])
    interior = path[(d_minus[path] >= delta * distance) & (d_minus[path] <= (1 - delta) * distance)]
    gradient_mean = 0.0
    if interior.size:
        steepest = _vertex_slopes(graph, h_minus)
        balls = dijkstra(graph.weights, directed=False, indices=interior, limit=eps * distance)
        means = [np.mean(np.abs(steepest[np.isfinite(b)] ** 2 - 1.0)) for b in balls]
        gradient_mean = float(np.mean(means))

    laplace_excess = laplacian.operator @ flowed_excess
    arcs = d_minus[path]
    middle = (arcs >= delta * distance) & (arcs <= (1 - delta) * distance)

    report = {
        "distance": float(distance),
        "time": float(time),
        "approximation_constant": approximation / (eps ** 2 * distance),
        "lipschitz": lipschitz,
        "gradient_constant": max(lipschitz - 1.0, 0.0) / eps ** 2,
        "gradient_mean": gradient_mean,
        "laplacian_constant": float(laplace_excess[region].max() * distance),
        "hessian_integral": _second_derivative_integral(arcs[middle], h_minus[path][middle]) * distance,
        "min_excess": float(flowed_excess.min()),
    }
    logger.info(
        "Parabolic approximation at eps = %g: |h - d| <= %.3g eps^2 d, Lipschitz %.4f",
        eps, report["approximation_constant"], lipschitz,
    )
    return ParabolicApprox(h_minus, h_plus, flowed_excess, float(time), report)


def excess_mean_check(space, p, q, centers, radii, min_points=MIN_BALL_POPULATION):
    """Log-log fit of the mean excess over balls on the p-q geodesic against r.

    Args:
        space (FiniteMetricSpace): The sample.
        p, q (int): End rows.
        centers (sequence): Rows on the geodesic interior.
        radii (sequence): Ball radii.
        min_points (int, optional): Smallest accepted ball population.

    Returns:
        RegressionReport: Table of (radius, mean_excess, population), slope
        and intercept.

    Raises:
        PopulationError: If a ball is underpopulated or fewer than two radii
            have positive mean excess.
    """
    D = space.distances
    excess = D[p] + D[:, q] - D[p, q]
    records = []
    for radius in radii:
        means, counts = [], []
        for center in centers:
            inside = D[center] <= radius
            counts.append(int(np.count_nonzero(inside)))
            if counts[-1] < min_points:
                raise PopulationError(
                    f"Ball of radius {radius:g} around {center} holds {counts[-1]} points, "
                    f"fewer than {min_points}!"
                )
            means.append(excess[inside].mean())
        records.append({"radius": float(radius), "mean_excess": float(np.mean(means)), "population": min(counts)})
    table = pd.DataFrame(records, columns=["radius", "mean_excess", "population"])

    positive = table[table["mean_excess"] > 0]
    if len(positive) < 2:
        raise PopulationError("Fewer than two radii have positive mean excess!")
    slope, intercept = np.polyfit(np.log(positive["radius"]), np.log(positive["mean_excess"]), 1)
    return RegressionReport(table, float(slope), float(intercept))


def harnack_check(laplacian, space, u0, center, radius, times=None, substeps=10, c0=0.0):
    """Mean-value inequality and heat kernel bounds at one vertex.

    Args:
        laplacian (GraphLaplacian): The generator.
        space (FiniteMetricSpace): Graph distances of the same vertices.
        u0 (numpy.ndarray): Nonnegative initial field.
        center (int): Vertex x.
        radius (float): Ball radius r; the field is flowed for time r^2.
        times (sequence, optional): Times for the off-ball kernel mass,
            r^2 / 2^k for k = 3..6 by default.
        substeps (int, optional): Implicit steps per flow.
        c0 (float, optional): Slack of a supersolution,
            (d/dt - Laplacian) u >= -c0; adds c0 r^2 to the flowed side.

    Returns:
        HarnackReport: Both sides of the inequality, their ratio, the
        near-diagonal constant and the off-ball mass table with its slope.
    """
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0):
        raise ValueError("Initial field is invalid! Accepted fields are nonnegative.")
    if c0 < 0:
        raise ValueError(f"Slack {c0} is invalid! Accepted values are nonnegative.")
    row = space.distances[center]
    ball_mean = float(u0[row <= radius].mean())
    flowed = float(heat_flow(laplacian, u0, radius ** 2, substeps).values[center])
    bound = flowed + c0 * radius ** 2
    constant = ball_mean / bound if bound > 0 else 0.0

    time = radius ** 2
    kernel = heat_kernel_rows(laplacian, [center], time, substeps)[0]
    diagonal = float(kernel[center] * np.count_nonzero(row <= 10.0 * np.sqrt(time)))

    if times is None:
        times = radius ** 2 / 2.0 ** np.arange(3, 7)
    masses = [heat_kernel_rows(laplacian, [center], t, substeps)[0][row > radius].sum() for t in times]
    tails = pd.DataFrame({"time": np.asarray(times, dtype=float), "off_ball_mass": masses})
    positive = tails[tails["off_ball_mass"] > 0]
    slope = np.nan
    if len(positive) >= 2:
        slope = float(np.polyfit(np.log(positive["time"]), np.log(positive["off_ball_mass"]), 1)[0])
    return HarnackReport(ball_mean, flowed, constant, diagonal, tails, slope)


def _chart_derivatives(f, x, h):
    eye = np.eye(5)
    centre = f(x)
    gradient = np.empty(x.shape[:-1] + (5,))
    hessian = np.empty(x.shape[:-1] + (5, 5))
    for a in range(5):
        plus, minus = f(x + h * eye[a]), f(x - h * eye[a])
        gradient[..., a] = (plus - minus) / (2.0 * h)
        hessian[..., a, a] = (plus - 2.0 * centre + minus) / h ** 2
        for b in range(a):
            mixed = (
                f(x + h * (eye[a] + eye[b])) - f(x + h * (eye[a] - eye[b]))
                - f(x - h * (eye[a] - eye[b])) + f(x - h * (eye[a] + eye[b]))
            ) / (4.0 * h ** 2)
            hessian[..., a, b] = hessian[..., b, a] = mixed
    return gradient, hessian


def covariant_hessian(W, f, x, h=1e-4):
    """Hess f = d_a d_b f - Gamma^c_ab d_c f at chart points, shape (..., 5, 5)."""
    x = np.asarray(x, dtype=float)
    gamma = christoffel_symbols(W, x, h=h)
    gradient, hessian = _chart_derivatives(f, x, h)
    return hessian - np.einsum("...cab,...c->...ab", gamma, gradient)


def hessian_norm(W, hessian, x):
    """Squared norm g^ac g^bd H_ab H_cd."""
    inverse = np.linalg.inv(chart_metric(W, x))
    return np.einsum("...ac,...bd,...ab,...cd->...", inverse, inverse, hessian, hessian)


def hessian_along_geodesic(W, geodesic, f, delta, samples=201, h=1e-4):
    """Integral of |Hess f|^2 over arcs [delta L, (1 - delta) L], times L.

    Args:
        W (WarpedMetric): The metric.
        geodesic (ChartGeodesic): Unit-speed geodesic from p of length L.
        f (callable): Scalar on chart points (..., 5).
        delta (float): End margin in (0, 0.5).
        samples (int, optional): Trapezoid nodes.
        h (float, optional): Difference step.

    Returns:
        HessianProfile: Nodes, squared norms and the scale-invariant integral.
    """
    if not 0 < delta < 0.5:
        raise ValueError(f"End margin delta = {delta} is invalid! Accepted range is (0, 0.5).")
    length = geodesic.length
    if delta * length < geodesic.start - 1e-12:
        raise DomainError(
            f"Geodesic starts at arc {geodesic.start:g}, after the margin {delta * length:g}!"
        )
    arcs = np.linspace(delta * length, (1.0 - delta) * length, samples)
    x = geodesic.position(arcs)
    norms = hessian_norm(W, covariant_hessian(W, f, x, h), x)
    return HessianProfile(arcs, norms, float(trapezoid(norms, arcs) * length))


def jacobi_ratio(W, geodesic, J0, delta, samples=41, rtol=1e-8, atol=1e-10):
    """Jacobi field along a geodesic from p with J(0) = 0 and J'(0) = J0.

    Integrates J'' = -d_nu Gamma^mu_ab J^nu v^a v^b - 2 Gamma^mu_ab v^a J'^b
    in the chart. The fitted constant is the smallest c with
    |log(|J|(t) / |J|(s))| <= c sqrt(t - s) / sqrt(delta) on the nodes.

    Raises:
        DomainError: If the geodesic does not start at p.
        IntegrationError: If the solver fails.
    """
    if geodesic.start != 0:
        raise DomainError(f"Jacobi fields vanish at p; the geodesic starts at arc {geodesic.start:g}!")
    if not 0 < delta < 0.5:
        raise ValueError(f"End margin delta = {delta} is invalid! Accepted range is (0, 0.5).")
    length = geodesic.length
    arcs = np.linspace(delta * length, (1.0 - delta) * length, samples)

    def rhs(arc, state):
        x, v = geodesic.position(arc), geodesic.velocity(arc)
        J, J_dot = state[:5], state[5:]
        gamma = christoffel_symbols(W, x)
        d_gamma = christoffel_derivatives(W, x)
        acceleration = (
            -np.einsum("nmab,n,a,b->m", d_gamma, J, v, v)
            - 2.0 * np.einsum("mab,a,b->m", gamma, v, J_dot)
        )
        return np.concatenate([J_dot, acceleration])

    state = np.concatenate([np.zeros(5), np.asarray(J0, dtype=float)])
    try:
        solution = solve_ivp(rhs, (0.0, length), state, t_eval=arcs, rtol=rtol, atol=atol)
    except DomainError as error:
        raise IntegrationError(f"Jacobi field left the smooth chart: {error}") from error
    if not solution.success:
        raise IntegrationError(f"Jacobi integration failed: {solution.message}")

    J = solution.y[:5].T
    norms = np.sqrt(np.einsum("ka,kab,kb->k", J, chart_metric(W, geodesic.position(arcs)), J))
    fractions = arcs / length
    i, j = np.triu_indices(samples, k=1)
    spread = np.abs(np.log(norms[j] / norms[i])) * np.sqrt(delta) / np.sqrt(fractions[j] - fractions[i])
    return JacobiProfile(fractions, norms, float(spread.max()))
