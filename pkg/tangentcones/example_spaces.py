import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from tangentcones.errors import DomainError, InfeasibleCutoffError
from tangentcones.profiles import (
    AngularProfile,
    BumpAngle,
    CircleCurve,
    ConstantCutoff,
    Derivatives,
    HolderAngle,
    MetricFunctions,
    RadialProfile,
    log_log,
)
from tangentcones.warped_geometry import WarpedMetric

logger = logging.getLogger(__name__)

EXAMPLE_A_CONSTANTS = {
    "a0": 0.5,
    "a1": 0.1,
    "a2": 20.0,
    "b1": 0.05,
    "b2": 10.0,
    "r0": 0.05,
    "s0": 0.05,
    "t0": 0.05,
    "m0": 1.0,
    "c": 0.01,
    "plateau": 0.4,
    "amplitude": 0.3,
    "bump_lo": 0.5,
    "bump_hi": 1.0,
    "switch": 1.5,
    "power": 400.0,
}

EXAMPLE_B_CONSTANTS = {
    "delta": 0.2,
    "N": 3,
    "c": 1e-4,
    "a2": 1.0,
    "b1": 0.05,
    "b2": 200.0,
    "s0": 0.05,
    "m0": 1.0,
    "theta0": 3.0,
    "K": 1.0,
    "width": 1e-3,
    "smoothing": 0.05,
    "power": 400.0,
}

# Maximum slope of the quintic smoothstep 6y^5 - 15y^4 + 10y^3.
SMOOTHSTEP_SLOPE = 15.0 / 8.0


@dataclass(frozen=True)
class ConstantBound:
    """Derivative bound |psi'| <= level with antiderivative level * s."""

    level: float

    def antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        return Derivatives(self.level * s, self.level * np.ones_like(s), np.zeros_like(s))


@dataclass(frozen=True)
class LogLogBound:
    """Derivative bound b2 |cot s| / (log(-log(s0 sin s)) (-log(s0 sin s))).

    Its signed antiderivative is -b2 log(log(-log(s0 sin s))), which is
    unbounded as s -> 0: the bound is not integrable at the singular ray.
    """

    b2: float
    s0: float

    def antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        sin, cos = np.sin(s), np.cos(s)
        ell, big_l, _ = log_log(self.s0 * sin, self.s0 * cos, -self.s0 * sin)
        cot = cos / sin
        product = big_l * ell
        value = -self.b2 * np.log(big_l)
        d1 = self.b2 * cot / product
        d2 = self.b2 * (-1.0 / (sin ** 2 * product) + cot ** 2 * (1.0 + big_l) / product ** 2)
        return Derivatives(value, d1, d2)


def smoothstep(y):
    y = np.clip(y, 0.0, 1.0)
    return Derivatives(
        y ** 3 * (10.0 - 15.0 * y + 6.0 * y ** 2),
        30.0 * y ** 2 * (1.0 - y) ** 2,
        60.0 * y * (1.0 - y) * (1.0 - 2.0 * y),
    )


@dataclass(frozen=True)
class RampCutoff:
    """C^2 cutoff, 1 on the plateau, 0 off the support, monotone in between.

    Each ramp is psi = S((Phi(s) - Phi(edge)) / (Phi(plateau edge) - Phi(edge)))
    with S the quintic smoothstep and Phi the antiderivative of the bound.
    """

    bound: object
    support: tuple
    plateau: tuple

    def _ramp(self, s, edge, inner):
        phi, phi_d1, phi_d2 = self.bound.antiderivative(s)
        start = self.bound.antiderivative(edge).value
        rise = self.bound.antiderivative(inner).value - start
        step, step_d1, step_d2 = smoothstep((phi - start) / rise)
        return step, step_d1 * phi_d1 / rise, step_d2 * (phi_d1 / rise) ** 2 + step_d1 * phi_d2 / rise

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        shape = s.shape
        s = s.ravel()
        lo, hi = self.support
        p_lo, p_hi = self.plateau
        value = np.zeros_like(s)
        d1 = np.zeros_like(s)
        d2 = np.zeros_like(s)

        value[(s >= p_lo) & (s <= p_hi)] = 1.0
        for edge, inner, mask in (
            (lo, p_lo, (s > lo) & (s < p_lo)),
            (hi, p_hi, (s > p_hi) & (s < hi)),
        ):
            if np.any(mask):
                value[mask], d1[mask], d2[mask] = self._ramp(s[mask], edge, inner)
        return Derivatives(value.reshape(shape), d1.reshape(shape), d2.reshape(shape))

    def rises(self):
        """Antiderivative rise across each present ramp."""
        lo, hi = self.support
        p_lo, p_hi = self.plateau
        rises = []
        for edge, inner in ((lo, p_lo), (hi, p_hi)):
            if inner != edge:
                delta = self.bound.antiderivative(inner).value - self.bound.antiderivative(edge).value
                rises.append(float(abs(delta)))
        return rises


def build_cutoff(bound, support, plateau, curvature_bound=None, samples=2001):
    """Builds a cutoff whose slope never exceeds the given bound.

    Args:
        bound: Object with ``antiderivative(s)`` returning the signed
            antiderivative Phi of the slope bound and its two derivatives.
        support (tuple): ``(lo, hi)``; psi vanishes outside.
        plateau (tuple): ``(p_lo, p_hi)`` inside the support; psi = 1 there.
        curvature_bound (callable, optional): Bound on |psi''| checked on a
            grid over each ramp.
        samples (int, optional): Grid size for the curvature check.

    Returns:
        RampCutoff: The cutoff.

    Raises:
        InfeasibleCutoffError: If a ramp is too short for the bound to rise
            by the smoothstep's peak slope, or the curvature bound fails.
    """
    lo, hi = support
    p_lo, p_hi = plateau
    if not lo <= p_lo <= p_hi <= hi:
        raise ValueError(
            f"Plateau {tuple(plateau)} must lie inside the support {tuple(support)}!"
        )

    cutoff = RampCutoff(bound, (float(lo), float(hi)), (float(p_lo), float(p_hi)))
    for rise in cutoff.rises():
        if rise < SMOOTHSTEP_SLOPE:
            raise InfeasibleCutoffError(
                f"Bound integral {rise:.4g} across the ramp is below {SMOOTHSTEP_SLOPE}! "
                f"Shorten the support {tuple(support)} or raise the bound."
            )
        if rise < 1.05 * SMOOTHSTEP_SLOPE:
            logger.warning("Cutoff ramp is barely feasible: bound integral %.4g", rise)

    if curvature_bound is not None:
        for a, b in ((lo, p_lo), (p_hi, hi)):
            if b <= a:
                continue
            s = np.linspace(a, b, samples)[1:-1]
            ratio = np.abs(cutoff.evaluate(s).d2) / curvature_bound(s)
            if np.max(ratio) > 1.0:
                raise InfeasibleCutoffError(
                    f"Cutoff curvature exceeds its bound by a factor {np.max(ratio):.4g} "
                    f"on the ramp [{a:.4g}, {b:.4g}]!"
                )
    return cutoff


def _curvature_bound(b2):
    return lambda s: b2 / np.sin(s) ** 2


def build_example_A(t0=None, constants=None, theta=None):
    """Non-constant tangent cones along a singular ray.

    Args:
        t0 (float, optional): Transition scale; 0 builds the limit space with
            the cutoff identically 1. Defaults to the canonical value.
        constants (dict, optional): Overrides of ``EXAMPLE_A_CONSTANTS``.
        theta (optional): Angle function of the circle curve; defaults to a
            bump supported in [bump_lo, bump_hi].

    Returns:
        WarpedMetric: Named ``A``, carrying its constants bundle.
    """
    params = dict(EXAMPLE_A_CONSTANTS)
    params.update(constants or {})
    if t0 is not None:
        params["t0"] = float(t0)
    t0 = params["t0"]
    if t0 < 0:
        raise DomainError(f"Transition scale t0 = {t0} must be nonnegative!")

    radial = RadialProfile(
        "exampleA", a0=params["a0"], a1=params["a1"], r0=params["r0"],
        t0=t0, switch=params["switch"], power=params["power"],
    )
    angular = AngularProfile(
        "exampleA", b1=params["b1"], s0=params["s0"], t0=t0, power=params["power"],
    )
    if t0 > 0:
        plateau = params["plateau"]
        cutoff = build_cutoff(
            LogLogBound(params["b2"], params["s0"]),
            support=(t0, np.pi - t0),
            plateau=(plateau, np.pi - plateau),
            curvature_bound=_curvature_bound(params["b2"]),
        )
    else:
        cutoff = ConstantCutoff(1.0)

    if theta is None:
        theta = BumpAngle(params["amplitude"], params["bump_lo"], params["bump_hi"])
    curve = CircleCurve(params["c"], theta)
    fiber = MetricFunctions(((cutoff, curve),), offset=2.0 * params["m0"])
    logger.info("Built example A with t0 = %g", t0)
    return WarpedMetric(radial, angular, fiber, name="A", constants=params)


class ScaleBand(NamedTuple):
    support: tuple
    plateau: tuple


def example_b_bands(K, N):
    """Cutoff bands around the scales t_i = exp(-K 2^i), i = 1..N.

    Band i is supported between the geometric means of t_i with its
    neighbours and equals 1 between the quarter-weighted geometric means.
    """
    t = np.exp(-K * 2.0 ** np.arange(N + 2))
    bands = []
    for i in range(1, N + 1):
        support = (np.sqrt(t[i] * t[i + 1]), np.sqrt(t[i - 1] * t[i]))
        plateau = (t[i] ** 0.75 * t[i + 1] ** 0.25, t[i - 1] ** 0.25 * t[i] ** 0.75)
        bands.append(ScaleBand(tuple(map(float, support)), tuple(map(float, plateau))))
    return bands


def build_example_B(delta=None, N=None, constants=None):
    """Fiber metrics varying at the sharp Hölder rate (1 + delta) / 2 at r = 1.

    Args:
        delta (float, optional): Regularity parameter in (0, 0.3].
        N (int, optional): Number of cutoff bands; 0 leaves the fiber constant.
        constants (dict, optional): Overrides of ``EXAMPLE_B_CONSTANTS``.

    Returns:
        WarpedMetric: Named ``B``; its constants carry the derived ``t0``,
        the lower support edge of the last band.
    """
    params = dict(EXAMPLE_B_CONSTANTS)
    params.update(constants or {})
    if delta is not None:
        params["delta"] = float(delta)
    if N is not None:
        params["N"] = int(N)
    delta, N = params["delta"], int(params["N"])
    if not 0 < delta <= 0.3:
        raise DomainError(f"Regularity delta = {delta} is invalid! Accepted range is (0, 0.3].")
    if N < 0:
        raise DomainError(f"Band count N = {N} must be nonnegative!")

    bands = example_b_bands(params["K"], N)
    exponent = 0.5 * (1.0 + delta)
    bound = LogLogBound(params["b2"], params["s0"])
    terms = []
    for i, band in enumerate(bands, start=1):
        cutoff = build_cutoff(
            bound, band.support, band.plateau,
            curvature_bound=_curvature_bound(params["b2"]),
        )
        angle = HolderAngle(params["theta0"], exponent, 1.0, params["smoothing"] / i)
        terms.append((cutoff, CircleCurve(params["c"], angle)))

    t0 = bands[-1].support[0] if bands else float(np.exp(-2.0 * params["K"]))
    params["t0"] = t0
    radial = RadialProfile("exampleB", delta=delta, width=params["width"])
    angular = AngularProfile("exampleA", b1=params["b1"], s0=params["s0"], t0=t0, power=params["power"])
    fiber = MetricFunctions(tuple(terms), offset=2.0 * params["m0"])
    logger.info("Built example B with delta = %g and %d bands", delta, N)
    return WarpedMetric(radial, angular, fiber, name="B", constants=params)


def limit_fiber_curve(W):
    """Circle curve of the limit space along the singular ray.

    For example B with at least one band this is the unsmoothed Hölder
    curve; otherwise it is the single curve of the metric, or the constant
    curve when the fiber has no terms.
    """
    if W.name == "B" and W.fiber.terms:
        params = W.constants
        angle = HolderAngle(params["theta0"], 0.5 * (1.0 + params["delta"]), 1.0, 0.0)
        return CircleCurve(params["c"], angle)
    if not W.fiber.terms:
        return CircleCurve(0.0)
    return W.fiber.terms[0][1]


def tangent_cone_fiber(W, r):
    """Log-scale factors m_j(r) - m_bar of the tangent cone fiber at gamma(r).

    Returns:
        numpy.ndarray: Shape (3,) + shape of ``r``.
    """
    r = np.asarray(r, dtype=float)
    offset = W.fiber.offset_vector.reshape((3,) + (1,) * r.ndim)
    return limit_fiber_curve(W).evaluate(r).value - offset


def build_flat_cone():
    """Flat R^5 as the cone over the round S^4."""
    return WarpedMetric(RadialProfile("cone", a0=1.0), AngularProfile("sine"), name="flat")


def build_round_product():
    """R^2 x round unit S^3 (a = b = 1, m = 0)."""
    return WarpedMetric(
        RadialProfile("constant", a0=1.0), AngularProfile("constant", b1=1.0), name="round",
    )


def build_named_metric(name, constants=None):
    """Builds a metric from its config name: A, A-limit, B, flat or round."""
    constants = dict(constants or {})
    if name == "A":
        return build_example_A(constants=constants)
    if name == "A-limit":
        return build_example_A(t0=0.0, constants=constants)
    if name == "B":
        return build_example_B(constants=constants)
    if name == "flat":
        return build_flat_cone()
    if name == "round":
        return build_round_product()
    accepted = ("A", "A-limit", "B", "flat", "round")
    raise ValueError(f"Metric name '{name}' is invalid! Accepted names are {accepted}.")


class CurveFit(NamedTuple):
    exponent: float
    intercept: float
    scales: np.ndarray
    increments: np.ndarray


def holder_exponent(curve, centre=1.0, scales=None):
    """Log-log regression of max_j |m_j(c +- h) - m_j(c)| against h.

    Args:
        curve (CircleCurve): The fiber curve.
        centre (float, optional): Base point c.
        scales (numpy.ndarray, optional): Offsets h, dyadic in [1e-4, 1e-1]
            by default.

    Returns:
        CurveFit: Fitted exponent and intercept with the raw increments.
    """
    if scales is None:
        scales = 0.1 * 2.0 ** -np.arange(0, 10)
    scales = np.asarray(scales, dtype=float)
    base = curve.evaluate(np.array([centre])).value[:, 0]
    forward = curve.evaluate(centre + scales).value
    backward = curve.evaluate(centre - scales).value
    increments = np.maximum(
        np.abs(forward - base[:, None]).max(axis=0),
        np.abs(backward - base[:, None]).max(axis=0),
    )
    slope, intercept = np.polyfit(np.log(scales), np.log(increments), 1)
    return CurveFit(float(slope), float(intercept), scales, increments)


def holder_quotient(curve, exponent, centre=1.0, scales=None):
    """Largest |m(c + h) - m(c)| / h^exponent per scale, for divergence checks."""
    fit = holder_exponent(curve, centre, scales)
    return fit.increments / fit.scales ** exponent
