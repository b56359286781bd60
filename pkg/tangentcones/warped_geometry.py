import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from tangentcones.errors import DomainError, IntegrationError, StepSizeError
from tangentcones.profiles import (
    AngularProfile,
    MetricFunctions,
    RadialProfile,
    log_log,
)

logger = logging.getLogger(__name__)

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_j, _i, _k] = -1.0

REPORT_COLUMNS = ["r", "s", "ric_rr", "ric_ss", "ric_11", "ric_22", "ric_33", "min_eig"]

# Certified nonnegativity allows this much rounding in the smallest eigenvalue.
RICCI_TOLERANCE = 1e-8


@dataclass(frozen=True)
class WarpedMetric:
    """g = dr^2 + a(r)^2 (ds^2 + b(s)^2 g_S3(r, s)) on the chart (r, s, xi).

    The S^3 metric is right-invariant with <V_j, V_k> = exp(2 m_j) delta_jk.
    """

    radial: RadialProfile
    angular: AngularProfile
    fiber: MetricFunctions = field(default_factory=MetricFunctions)
    name: str = "custom"
    constants: dict = field(default_factory=dict, compare=False)


class RicciDiagonal(NamedTuple):
    """Ricci components in the coordinate frame (d_r, d_s, V_1, V_2, V_3)."""

    ric_rr: np.ndarray
    ric_ss: np.ndarray
    ric_jj: np.ndarray
    ric_rs: np.ndarray

    def as_matrix(self):
        """Assembles the 5x5 tensor, stacking over any grid axes first."""
        shape = np.shape(self.ric_rr)
        matrix = np.zeros(shape + (5, 5))
        matrix[..., 0, 0] = self.ric_rr
        matrix[..., 1, 1] = self.ric_ss
        matrix[..., 0, 1] = self.ric_rs
        matrix[..., 1, 0] = self.ric_rs
        for j in range(3):
            matrix[..., 2 + j, 2 + j] = self.ric_jj[j]
        return matrix


class ChartGeodesic(NamedTuple):
    """A unit-speed chart geodesic covering arc lengths [start, length].

    ``length`` is the total length L of the segment from p, so ``start``
    places x0 at arc ``start`` from p.
    """

    solution: object
    start: float
    length: float

    def position(self, arc):
        return self.solution.sol(arc)[:5].T

    def velocity(self, arc):
        return self.solution.sol(arc)[5:10].T


def check_chart_point(r, s):
    """Raises DomainError unless every r > 0 and s in (0, pi)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError(
            f"Chart point has r = {np.min(r):.6g}! Accepted radii are r > 0."
        )
    if np.any(~((s > 0) & (s < np.pi))):
        raise DomainError(
            f"Chart point has s outside (0, pi): [{np.min(s):.6g}, {np.max(s):.6g}]! "
            "The singular rays s = 0 and s = pi are not smooth points."
        )
    return r, s


def metric_diagonal(W, r, s):
    """Diagonal metric entries (1, a^2, a^2 b^2 e^{2 m_j}) with shape (..., 5)."""
    r, s = check_chart_point(r, s)
    r, s = np.broadcast_arrays(r, s)
    a = W.radial.value(r)
    b = W.angular.value(s)
    m = W.fiber.evaluate(r, s).m

    diagonal = np.empty(r.shape + (5,))
    diagonal[..., 0] = 1.0
    diagonal[..., 1] = a ** 2
    for j in range(3):
        diagonal[..., 2 + j] = (a * b) ** 2 * np.exp(2.0 * m[j])
    return diagonal


def eval_metric(W, point):
    """Metric at a chart point in the frame (d_r, d_s, V_1, V_2, V_3).

    Args:
        W (WarpedMetric): The metric.
        point (sequence): ``(r, s)`` or ``(r, s, xi)``; the right-invariant
            frame makes the components independent of xi.

    Returns:
        numpy.ndarray: Symmetric positive definite 5x5 matrix.

    Raises:
        DomainError: If r <= 0 or s is not in (0, pi).
    """
    r, s = float(point[0]), float(point[1])
    return np.diag(metric_diagonal(W, r, s))


def s3_ricci(sigma):
    """Ricci curvature of a diagonal right-invariant metric on S^3.

    The metric has |V_j| = sigma_j for the frame with [V_i, V_j] = 2 eps_ijk V_k,
    so sigma = 1 is the unit round sphere with Ric = 2 g. Curvature comes from
    the Koszul formula over the structure constants of the orthonormal frame.

    Args:
        sigma (numpy.ndarray): Frame lengths, shape (3, ...).

    Returns:
        numpy.ndarray: Ric(V_j, V_j), shape (3, ...).
    """
    sigma = np.moveaxis(np.asarray(sigma, dtype=float), 0, -1)
    structure = (
        2.0
        * LEVI_CIVITA
        * sigma[..., None, None, :]
        / (sigma[..., :, None, None] * sigma[..., None, :, None])
    )
    connection = 0.5 * (
        structure
        - np.einsum("...jki->...ijk", structure)
        + np.einsum("...kij->...ijk", structure)
    )
    riemann = (
        np.einsum("...jkl,...ilm->...ijkm", connection, connection)
        - np.einsum("...ikl,...jlm->...ijkm", connection, connection)
        - np.einsum("...ijl,...lkm->...ijkm", structure, connection)
    )
    ricci_unit = np.einsum("...ijji->...j", riemann)
    return np.moveaxis(sigma ** 2 * ricci_unit, -1, 0)


def ricci_closed_form(W, r, s):
    """Closed-form Ricci components of the warped product.

    Args:
        W (WarpedMetric): The metric.
        r (numpy.ndarray): Radii, r > 0.
        s (numpy.ndarray): Angles in (0, pi), broadcast against ``r``.

    Returns:
        RicciDiagonal: Components in the frame (d_r, d_s, V_1, V_2, V_3).
    """
    r, s = check_chart_point(r, s)
    r, s = np.broadcast_arrays(r, s)
    a, a1, a2 = W.radial.evaluate(r)
    b, b1, b2 = W.angular.evaluate(s)
    fiber = W.fiber.evaluate(r, s)

    ra1, ra2 = a1 / a, a2 / a
    rb1, rb2 = b1 / b, b2 / b

    ric_rr = -4.0 * ra2 - np.sum(fiber.m_r ** 2, axis=0)
    ric_ss = -3.0 * rb2 - np.sum(fiber.m_s ** 2, axis=0) + a ** 2 * (-ra2 - 3.0 * ra1 ** 2)
    ric_rs = -np.sum(fiber.m_r * fiber.m_s, axis=0)

    scale = np.exp(2.0 * fiber.m)
    angular_part = b ** 2 * (-rb2 - 2.0 * rb1 ** 2 - 3.0 * rb1 * fiber.m_s - fiber.m_ss)
    radial_part = (a * b) ** 2 * (-ra2 - 3.0 * ra1 ** 2 - 4.0 * ra1 * fiber.m_r - fiber.m_rr)
    ric_jj = s3_ricci(np.exp(fiber.m)) + scale * (angular_part + radial_part)

    return RicciDiagonal(ric_rr, ric_ss, ric_jj, ric_rs)


def chart_frame(u):
    """Matrix M(u) with d/du_a = sum_j M_ja V_j at exp(u) xi.

    Args:
        u (numpy.ndarray): Exponential coordinates, shape (..., 3).

    Returns:
        numpy.ndarray: Shape (..., 3, 3).
    """
    u = np.asarray(u, dtype=float)
    cross = np.zeros(u.shape[:-1] + (3, 3))
    cross[..., 0, 1], cross[..., 0, 2] = -u[..., 2], u[..., 1]
    cross[..., 1, 0], cross[..., 1, 2] = u[..., 2], -u[..., 0]
    cross[..., 2, 0], cross[..., 2, 1] = -u[..., 1], u[..., 0]
    generator = 2.0 * cross

    phi = 2.0 * np.linalg.norm(u, axis=-1)
    small = phi < 1e-2
    safe = np.where(small, 1.0, phi)
    phi2 = phi ** 2
    first = np.where(small, 0.5 - phi2 / 24.0 + phi2 ** 2 / 720.0, (1.0 - np.cos(safe)) / safe ** 2)
    second = np.where(small, 1.0 / 6.0 - phi2 / 120.0 + phi2 ** 2 / 5040.0, (safe - np.sin(safe)) / safe ** 3)

    identity = np.broadcast_to(np.eye(3), generator.shape)
    return (
        identity
        + first[..., None, None] * generator
        + second[..., None, None] * generator @ generator
    )


def chart_metric(W, x):
    """Metric components in the chart x = (r, s, u_1, u_2, u_3).

    Args:
        W (WarpedMetric): The metric.
        x (numpy.ndarray): Chart points, shape (..., 5).

    Returns:
        numpy.ndarray: Shape (..., 5, 5).
    """
    x = np.asarray(x, dtype=float)
    r, s = check_chart_point(x[..., 0], x[..., 1])
    a = W.radial.value(r)
    b = W.angular.value(s)
    m = W.fiber.evaluate(r, s).m

    frame = chart_frame(x[..., 2:])
    weights = np.exp(2.0 * np.moveaxis(m, 0, -1))
    fiber_block = np.einsum("...j,...ja,...jb->...ab", weights, frame, frame)

    metric = np.zeros(x.shape[:-1] + (5, 5))
    metric[..., 0, 0] = 1.0
    metric[..., 1, 1] = a ** 2
    metric[..., 2:, 2:] = ((a * b) ** 2)[..., None, None] * fiber_block
    return metric


def _check_stencil(x, h):
    r, s = x[..., 0], x[..., 1]
    if np.any(r - h <= 0) or np.any(s - h <= 0) or np.any(s + h >= np.pi):
        raise StepSizeError(
            f"Finite-difference step h = {h:g} leaves the chart at r = {np.min(r):.6g}, "
            f"s in [{np.min(s):.6g}, {np.max(s):.6g}]! Use a smaller step."
        )


def christoffel_symbols(W, x, h=1e-5):
    """Christoffel symbols Gamma^mu_{alpha beta} by central differences.

    Args:
        W (WarpedMetric): The metric.
        x (numpy.ndarray): Chart points, shape (..., 5).
        h (float, optional): Difference step.

    Returns:
        numpy.ndarray: Shape (..., 5, 5, 5), upper index first.
    """
    x = np.asarray(x, dtype=float)
    _check_stencil(x, h)
    offsets = h * np.eye(5)
    stencil = np.stack([x[..., None, :] + offsets, x[..., None, :] - offsets])
    metrics = chart_metric(W, stencil)
    derivative = (metrics[0] - metrics[1]) / (2.0 * h)

    lowered = 0.5 * (
        np.einsum("...anb->...nab", derivative)
        + np.einsum("...bna->...nab", derivative)
        - derivative
    )
    inverse = np.linalg.inv(chart_metric(W, x))
    return np.einsum("...mn,...nab->...mab", inverse, lowered)


def christoffel_derivatives(W, x, h=1e-3, inner=1e-4):
    """Derivatives d_nu Gamma^mu_{alpha beta}, shape (..., 5, 5, 5, 5), nu first."""
    x = np.asarray(x, dtype=float)
    _check_stencil(x, h + inner)
    offsets = h * np.eye(5)
    stencil = np.stack([x[..., None, :] + offsets, x[..., None, :] - offsets])
    symbols = christoffel_symbols(W, stencil, h=inner)
    return (symbols[0] - symbols[1]) / (2.0 * h)


def _riemann_stencil(W, x, h):
    """Lowered Riemann tensor at a single chart point from a 51-point stencil."""
    _check_stencil(x, h)
    eye = np.eye(5)
    points = [x]
    for mu in range(5):
        points.extend([x + h * eye[mu], x - h * eye[mu]])
    for mu in range(5):
        for nu in range(mu + 1, 5):
            for sign_mu in (1.0, -1.0):
                for sign_nu in (1.0, -1.0):
                    points.append(x + h * (sign_mu * eye[mu] + sign_nu * eye[nu]))
    metrics = chart_metric(W, np.array(points))
    logger.debug("Evaluated %d stencil metrics at h = %g", len(points), h)

    centre = metrics[0]
    first = np.zeros((5, 5, 5))
    second = np.zeros((5, 5, 5, 5))
    for mu in range(5):
        plus, minus = metrics[1 + 2 * mu], metrics[2 + 2 * mu]
        first[mu] = (plus - minus) / (2.0 * h)
        second[mu, mu] = (plus - 2.0 * centre + minus) / h ** 2

    index = 11
    for mu in range(5):
        for nu in range(mu + 1, 5):
            pp, pm, mp, mm = metrics[index:index + 4]
            index += 4
            second[mu, nu] = second[nu, mu] = (pp - pm - mp + mm) / (4.0 * h ** 2)

    # d[alpha, beta, gamma, delta] = d_gamma d_delta g_{alpha beta}
    d2g = np.einsum("cdab->abcd", second)
    inverse = np.linalg.inv(centre)
    lowered = 0.5 * (
        np.einsum("anb->nab", first) + np.einsum("bna->nab", first) - first
    )
    gamma = np.einsum("mn,nab->mab", inverse, lowered)

    riemann = 0.5 * (
        np.einsum("adbc->abcd", d2g)
        + np.einsum("bcad->abcd", d2g)
        - np.einsum("acbd->abcd", d2g)
        - np.einsum("bdac->abcd", d2g)
    )
    riemann += np.einsum("mn,mbc,nad->abcd", centre, gamma, gamma)
    riemann -= np.einsum("mn,mbd,nac->abcd", centre, gamma, gamma)
    return riemann, centre


def ricci_oracle(W, point, h=1e-3, richardson=True):
    """Full Ricci tensor by finite differences in exponential coordinates.

    The chart is x = (r, s, u) with fiber point exp(u) xi; at u = 0 its
    coordinate frame is (d_r, d_s, V_1, V_2, V_3), so the result is directly
    comparable with ``ricci_closed_form``.

    Args:
        W (WarpedMetric): The metric.
        point (sequence): ``(r, s)`` or ``(r, s, xi)``.
        h (float, optional): Difference step.
        richardson (bool, optional): Combine steps h and h/2 to cancel the
            leading error term.

    Returns:
        numpy.ndarray: Symmetric 5x5 Ricci tensor.

    Raises:
        StepSizeError: If the stencil leaves the chart.
    """
    x = np.array([float(point[0]), float(point[1]), 0.0, 0.0, 0.0])

    def contract(step):
        riemann, metric = _riemann_stencil(W, x, step)
        ricci = np.einsum("ac,abcd->bd", np.linalg.inv(metric), riemann)
        return 0.5 * (ricci + ricci.T)

    coarse = contract(h)
    if not richardson:
        return coarse
    fine = contract(0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def oracle_min_eigenvalue(W, point, h=1e-3):
    """Smallest eigenvalue of Ric relative to g from the oracle."""
    ricci = ricci_oracle(W, point, h)
    metric = chart_metric(W, np.array([point[0], point[1], 0.0, 0.0, 0.0]))
    return float(eigh(ricci, metric, eigvals_only=True)[0])


def ricci_eigenvalues(W, r, s):
    """Smallest eigenvalue of the closed-form Ricci form relative to g, per point."""
    ricci = ricci_closed_form(W, r, s).as_matrix()
    scale = 1.0 / np.sqrt(metric_diagonal(W, r, s))
    normalised = scale[..., :, None] * ricci * scale[..., None, :]
    return np.linalg.eigvalsh(normalised)[..., 0]


def evaluation_grid(r_range, s_range, n_r=50, n_s=50):
    """Uniform (r, s) grid flattened into two 1-D arrays."""
    r_values = np.linspace(r_range[0], r_range[1], n_r)
    s_values = np.linspace(s_range[0], s_range[1], n_s)
    r_grid, s_grid = np.meshgrid(r_values, s_values, indexing="ij")
    return r_grid.ravel(), s_grid.ravel()


def min_ricci_eigenvalue(W, grid):
    """Minimum over grid points of the smallest Ricci eigenvalue.

    Args:
        W (WarpedMetric): The metric.
        grid (tuple): Arrays ``(r, s)`` of grid points.

    Returns:
        float: The minimum. The minimising point is logged. A radial
        profile that turns nonpositive on the grid gives -inf.
    """
    r, s = (np.asarray(v, dtype=float) for v in grid)
    try:
        eigenvalues = ricci_eigenvalues(W, r, s)
    except DomainError as error:
        logger.warning("Metric '%s' is degenerate on the grid: %s", W.name, error)
        return -np.inf
    worst = int(np.argmin(eigenvalues))
    value = float(eigenvalues.ravel()[worst])
    logger.info(
        "Minimum Ricci eigenvalue %.6g of metric '%s' at r = %.6g, s = %.6g",
        value, W.name, np.ravel(r)[worst], np.ravel(s)[worst],
    )
    return value


def curvature_report(W, grid):
    """Per-point Ricci components as a DataFrame with REPORT_COLUMNS."""
    r, s = (np.asarray(v, dtype=float).ravel() for v in grid)
    ricci = ricci_closed_form(W, r, s)
    return pd.DataFrame({
        "r": r,
        "s": s,
        "ric_rr": ricci.ric_rr,
        "ric_ss": ricci.ric_ss,
        "ric_11": ricci.ric_jj[0],
        "ric_22": ricci.ric_jj[1],
        "ric_33": ricci.ric_jj[2],
        "min_eig": ricci_eigenvalues(W, r, s),
    }, columns=REPORT_COLUMNS)


def default_grid(constants, n=50):
    """Certification grid for a constants bundle.

    Bundles with ``delta`` describe the sharp Hölder example: r runs over
    [0.8, 1.2] minus the collar |r-1| < 2 width and s is log-spaced towards
    the ray so that every cutoff band is hit. Otherwise r in [t0/2, 2] and
    s in [t0/8, pi - t0/8].
    """
    t0 = float(constants.get("t0", 0.05))
    if "delta" in constants:
        width = float(constants.get("width", 1e-3))
        r_values = np.linspace(0.8, 1.2, n)
        r_values = r_values[np.abs(r_values - 1.0) >= 2.0 * width]
        near = np.geomspace(t0 / 8.0, 0.5, n)
        s_values = np.concatenate([near, np.linspace(0.5, np.pi - 0.5, n // 5 + 2)[1:-1], np.pi - near[::-1]])
    else:
        r_values = np.linspace(t0 / 2.0, 2.0, n)
        s_values = np.linspace(t0 / 8.0, np.pi - t0 / 8.0, n)
    r_grid, s_grid = np.meshgrid(r_values, s_values, indexing="ij")
    return r_grid.ravel(), s_grid.ravel()


def _row(condition, lhs, rhs, tolerance, mask=None):
    """Report row for the inequality lhs <= rhs over the (masked) grid points."""
    excess = np.ravel(np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float))
    if mask is not None:
        excess = np.broadcast_to(excess, mask.shape)[mask]
    worst = float(np.max(excess)) if excess.size else -np.inf
    return {
        "condition": condition,
        "max_violation": worst,
        "margin": -worst,
        "passed": bool(worst <= tolerance),
    }


def _angular_bounds(s, b2, s0):
    cot = np.cos(s) / np.sin(s)
    ell, big_l, _ = log_log(s0 * np.sin(s), s0 * np.cos(s), -s0 * np.sin(s))
    return b2 * np.abs(cot) / (big_l * ell), b2 / np.sin(s) ** 2


def verify_positivity_conditions(W, constants=None, grid=None, tolerance=1e-12):
    """Evaluates the hypotheses of the positivity lemmas on a grid.

    Bundles carrying ``delta`` are checked against the sharp Hölder
    example's conditions, all others against the first example's. The
    bundle stored on ``W`` is used for any key ``constants`` leaves out.

    Args:
        W (WarpedMetric): The metric.
        constants (dict, optional): Bound constants overriding ``W.constants``.
        grid (tuple, optional): ``(r, s)`` arrays; defaults to ``default_grid``.
        tolerance (float, optional): Slack allowed before a row fails.

    Returns:
        pandas.DataFrame: One row per condition with columns condition,
        max_violation, margin and passed. Violations are data, never errors.
        A profile that leaves the domain of the smooth minimum fails
        ``min_ricci`` with an infinite violation.
    """
    params = dict(W.constants)
    params.update(constants or {})
    if grid is None:
        grid = default_grid(params)
    r, s = (np.asarray(v, dtype=float).ravel() for v in grid)
    r, s = check_chart_point(r, s)

    fiber = W.fiber.evaluate(r, s)
    m0 = float(params.get("m0", 1.0))
    b2 = float(params.get("b2", 8.0))
    a2 = float(params.get("a2", 10.0))
    s0 = float(params.get("s0", 0.05))
    t0 = float(params.get("t0", 0.05))

    m_r = np.abs(fiber.m_r).max(axis=0)
    m_s = np.abs(fiber.m_s).max(axis=0)
    m_rr = np.abs(fiber.m_rr).max(axis=0)
    m_ss = np.abs(fiber.m_ss).max(axis=0)
    d1_bound, d2_bound = _angular_bounds(s, b2, s0)
    outside_s = (s < t0) | (s > np.pi - t0)

    try:
        ricci_deficit = -ricci_eigenvalues(W, r, s)
    except DomainError as error:
        logger.warning("Ricci form undefined on the grid: %s", error)
        ricci_deficit = np.full(r.shape, np.inf)
    rows = [_row("min_ricci", ricci_deficit, 0.0, max(tolerance, RICCI_TOLERANCE))]
    if "delta" in params:
        delta = float(params["delta"])
        width = float(params.get("width", 1e-3))
        x = np.abs(r - 1.0)
        collar = x >= 2.0 * width
        safe_x = np.where(collar, x, 1.0)
        a, a_d1, a_d2 = W.radial.evaluate(r)
        concavity = -delta * (1.0 + delta) / (2.0 * safe_x ** (1.0 - delta))
        rows += [
            _row("m_upper", fiber.m.max(axis=0), -m0, tolerance),
            _row("radial_d1", m_r, a2 * safe_x ** (-(1.0 - delta) / 2.0), tolerance, collar),
            _row("radial_d2", m_rr, a2 / np.sin(s) ** 2, tolerance),
            _row("angular_d1", m_s, d1_bound, tolerance),
            _row("angular_d2", m_ss, d2_bound, tolerance),
            _row("support_s", np.maximum(m_r, m_s), 0.0, tolerance, outside_s),
            _row("radial_slope", np.abs(a_d1) / a, safe_x ** delta, tolerance, collar),
            _row("radial_concavity", a_d2 / a, concavity, tolerance, collar),
        ]
    else:
        r0 = float(params.get("r0", 0.05))
        ell, big_l, _ = log_log(r0 * r, r0 * np.ones_like(r), np.zeros_like(r))
        sigma = np.exp(fiber.m)
        fiber_ricci = (s3_ricci(sigma) / sigma ** 2).min(axis=0)
        rows += [
            _row("fiber_ricci", 1.0, fiber_ricci, tolerance),
            _row("m_upper", fiber.m.max(axis=0), -m0, tolerance),
            _row("radial_d1", m_r, a2 / (r * big_l * ell), tolerance),
            _row("radial_d2", m_rr, a2 / r ** 2, tolerance),
            _row("angular_d1", m_s, d1_bound, tolerance),
            _row("angular_d2", m_ss, d2_bound, tolerance),
            _row("support_r", m_r, 0.0, tolerance, (r < t0) | (r > 1.0)),
            _row("support_s", np.maximum(m_r, m_s), 0.0, tolerance, outside_s),
        ]

    report = pd.DataFrame(rows, columns=["condition", "max_violation", "margin", "passed"])
    for row in report.itertuples():
        if not row.passed:
            logger.warning("Condition '%s' violated by %.6g", row.condition, row.max_violation)
        elif row.margin < 1e-6:
            logger.warning("Condition '%s' holds with margin %.3g only", row.condition, row.margin)
    return report


def integrate_geodesic(W, x0, v0, length, start=0.0, rtol=1e-9, atol=1e-11):
    """Integrates the geodesic equation from arc ``start`` to ``length``.

    Args:
        W (WarpedMetric): The metric.
        x0 (sequence): Chart point (r, s, u_1, u_2, u_3) at arc ``start``.
        v0 (sequence): Initial velocity, rescaled to unit speed.
        length (float): Arc length of the full segment from p.
        start (float, optional): Arc length of x0 from p.

    Returns:
        ChartGeodesic: Dense solution over [start, length].

    Raises:
        IntegrationError: If the solver fails or leaves the chart.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    speed = np.sqrt(v0 @ chart_metric(W, x0) @ v0)
    v0 = v0 / speed

    def rhs(_, state):
        x, v = state[:5], state[5:]
        gamma = christoffel_symbols(W, x)
        return np.concatenate([v, -np.einsum("mab,a,b->m", gamma, v, v)])

    try:
        solution = solve_ivp(
            rhs, (start, length), np.concatenate([x0, v0]),
            method="RK45", rtol=rtol, atol=atol, dense_output=True,
        )
    except DomainError as error:
        raise IntegrationError(f"Geodesic left the smooth chart: {error}") from error
    if not solution.success:
        raise IntegrationError(f"Geodesic integration failed: {solution.message}")
    logger.debug("Geodesic integrated with %d steps", solution.t.size)
    return ChartGeodesic(solution, float(start), float(length))
