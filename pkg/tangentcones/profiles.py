import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from tangentcones.errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_POWER = 400.0


class Derivatives(NamedTuple):
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def smooth_min(values, first, second, power=DEFAULT_POWER):
    """Power-mean smooth minimum of several positive functions.

    Computes M = (sum f_i^-p)^(-1/p) together with its first two
    derivatives. M is concave, nondecreasing and 1-homogeneous in the f_i,
    so concave inputs give a concave output. Pieces equal to +inf drop out.

    Args:
        values (numpy.ndarray): Piece values, shape (k, ...).
        first (numpy.ndarray): First derivatives of the pieces.
        second (numpy.ndarray): Second derivatives of the pieces.
        power (float, optional): Exponent p of the power mean.

    Returns:
        Derivatives: Value, first and second derivative of M.
    """
    values = np.asarray(values, dtype=float)
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)

    active = np.isfinite(values)
    if np.any(values[active] <= 0):
        raise DomainError(
            "Smooth minimum requires strictly positive pieces! "
            f"Smallest piece is {values[active].min():.6g}."
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        exponents = np.where(active, -power * np.log(np.where(active, values, 1.0)), -np.inf)
        log_sum = logsumexp(exponents, axis=0)
        weights = np.exp(exponents - log_sum)
        value = np.exp(-log_sum / power)

        safe_values = np.where(active, values, 1.0)
        log_slopes = np.where(active, first / safe_values, 0.0)
        mean_slope = np.sum(weights * log_slopes, axis=0)

        d1 = value * mean_slope
        curvature = np.where(active, second / safe_values, 0.0)
        spread = np.sum(weights * (log_slopes - mean_slope) ** 2, axis=0)
        d2 = value * (np.sum(weights * curvature, axis=0) - (power + 1.0) * spread)

    return Derivatives(value, d1, d2)


def log_log(inner, inner_d1, inner_d2):
    """Evaluates 1/log(-log f) and its derivatives for an inner function f.

    Args:
        inner (numpy.ndarray): Values of f, all in (0, 1/e).
        inner_d1 (numpy.ndarray): First derivative of f.
        inner_d2 (numpy.ndarray): Second derivative of f.

    Returns:
        tuple: ``(ell, L, inv)`` where ``ell = -log f``, ``L = log ell`` and
        ``inv`` is a Derivatives triple for ``1/L``.
    """
    inner = np.asarray(inner, dtype=float)
    if np.any(inner >= np.exp(-1.0)) or np.any(inner <= 0):
        raise DomainError(
            "Double-log profile argument must lie in (0, 1/e)! "
            f"Got values in [{inner.min():.6g}, {inner.max():.6g}]."
        )

    ell = -np.log(inner)
    ell_d1 = -inner_d1 / inner
    ell_d2 = -inner_d2 / inner + (inner_d1 / inner) ** 2

    big_l = np.log(ell)
    big_l_d1 = ell_d1 / ell
    big_l_d2 = ell_d2 / ell - (ell_d1 / ell) ** 2

    inv = 1.0 / big_l
    inv_d1 = -big_l_d1 / big_l ** 2
    inv_d2 = -big_l_d2 / big_l ** 2 + 2.0 * big_l_d1 ** 2 / big_l ** 3

    return ell, big_l, Derivatives(inv, inv_d1, inv_d2)


def _as_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError(
            f"Radial coordinate must be positive! Got minimum {np.min(r):.6g}."
        )
    return r


def _as_angle(s):
    s = np.asarray(s, dtype=float)
    if np.any(~((s > 0) & (s < np.pi))):
        raise DomainError(
            "Angular coordinate must lie in the open interval (0, pi)! "
            f"Got values in [{np.min(s):.6g}, {np.max(s):.6g}]."
        )
    return s


@dataclass(frozen=True)
class RadialProfile:
    """Warping function a(r) of the cone direction.

    Modes:
        ``exampleA``: concave double-log profile, linear near the tip and
        with a linear tail of slope a0/2 beyond ``switch``.
        ``exampleB``: 2 - |r-1|^(1+delta), regularised at scale ``width``.
        ``cone``: a = a0 * r.
        ``constant``: a = a0.
        ``custom``: ``function(r)`` returns ``(a, a', a'')``.
    """

    mode: str = "cone"
    a0: float = 1.0
    a1: float = 0.1
    r0: float = 0.05
    t0: float = 0.05
    switch: float = 1.5
    delta: float = 0.2
    width: float = 1e-3
    power: float = DEFAULT_POWER
    function: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        accepted = ("exampleA", "exampleB", "cone", "constant", "custom")
        if self.mode not in accepted:
            raise ValueError(
                f"Radial profile mode '{self.mode}' is invalid! Accepted "
                f"modes are {accepted}."
            )
        if self.mode == "custom" and self.function is None:
            raise ValueError("Custom radial profile requires a function!")

    def _log_piece(self, r):
        """a0 r (1 - a1 / log(-log(r0 r))), +inf where the log is undefined."""
        valid = self.r0 * r < np.exp(-1.0) * 0.999
        rr = np.where(valid, r, np.exp(-1.0) * 0.5 / self.r0)
        _, _, inv = log_log(self.r0 * rr, self.r0 * np.ones_like(rr), np.zeros_like(rr))
        value = self.a0 * rr * (1.0 - self.a1 * inv.value)
        d1 = self.a0 * (1.0 - self.a1 * inv.value) - self.a0 * self.a1 * rr * inv.d1
        d2 = -2.0 * self.a0 * self.a1 * inv.d1 - self.a0 * self.a1 * rr * inv.d2
        return (
            np.where(valid, value, np.inf),
            np.where(valid, d1, 0.0),
            np.where(valid, d2, 0.0),
        )

    @property
    def kappa(self):
        """Lift of the log piece so that it meets a0 r at r = t0/3."""
        if self.t0 <= 0:
            return 0.0
        x = self.t0 / 3.0
        _, _, inv = log_log(np.array(self.r0 * x), np.array(self.r0), np.array(0.0))
        return float(self.a0 * self.a1 * x * inv.value)

    @property
    def tail_offset(self):
        """Intercept beta of the tail a0 r / 2 + beta."""
        value, _, _ = self._log_piece(np.array([self.switch]))
        return float(value[0] + self.kappa - 0.5 * self.a0 * self.switch)

    def evaluate(self, r):
        """Returns ``(a, a', a'')`` at the radii ``r``."""
        r = _as_radius(r)

        if self.mode == "cone":
            return Derivatives(self.a0 * r, self.a0 * np.ones_like(r), np.zeros_like(r))

        if self.mode == "constant":
            return Derivatives(self.a0 * np.ones_like(r), np.zeros_like(r), np.zeros_like(r))

        if self.mode == "custom":
            return Derivatives(*(np.asarray(x, dtype=float) for x in self.function(r)))

        if self.mode == "exampleB":
            x = r - 1.0
            q = 0.5 * (1.0 + self.delta)
            u = x ** 2 + self.width ** 2
            value = 2.0 - (u ** q - self.width ** (2.0 * q))
            d1 = -(1.0 + self.delta) * x * u ** (q - 1.0)
            d2 = -(1.0 + self.delta) * u ** (q - 2.0) * (self.delta * x ** 2 + self.width ** 2)
            if np.any(value <= 0):
                raise DomainError(
                    "Example B radial profile is only valid where a > 0! "
                    f"Got r up to {np.max(r):.6g}."
                )
            return Derivatives(value, d1, d2)

        log_value, log_d1, log_d2 = self._log_piece(r)
        pieces = [(log_value + self.kappa, log_d1, log_d2)]
        if self.t0 > 0:
            pieces.append((self.a0 * r, self.a0 * np.ones_like(r), np.zeros_like(r)))
        pieces.append((
            0.5 * self.a0 * r + self.tail_offset,
            0.5 * self.a0 * np.ones_like(r),
            np.zeros_like(r),
        ))
        values, d1s, d2s = (np.stack(group) for group in zip(*pieces))
        return smooth_min(values, d1s, d2s, self.power)

    def value(self, r):
        return self.evaluate(r).value

    def d1(self, r):
        return self.evaluate(r).d1

    def d2(self, r):
        return self.evaluate(r).d2


@dataclass(frozen=True)
class AngularProfile:
    """Warping function b(s) of the suspension direction.

    Modes are ``sine`` (b = sin s), ``constant`` (b = b1), ``exampleA``
    (double-log lift of sin s away from the singular rays) and ``custom``.
    """

    mode: str = "sine"
    b1: float = 0.05
    s0: float = 0.05
    t0: float = 0.05
    power: float = DEFAULT_POWER
    function: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        accepted = ("exampleA", "sine", "constant", "custom")
        if self.mode not in accepted:
            raise ValueError(
                f"Angular profile mode '{self.mode}' is invalid! Accepted "
                f"modes are {accepted}."
            )
        if self.mode == "custom" and self.function is None:
            raise ValueError("Custom angular profile requires a function!")

    def _log_piece(self, s):
        sin, cos = np.sin(s), np.cos(s)
        _, _, inv = log_log(self.s0 * sin, self.s0 * cos, -self.s0 * sin)
        value = sin * (1.0 - self.b1 * inv.value)
        d1 = cos * (1.0 - self.b1 * inv.value) - sin * self.b1 * inv.d1
        d2 = (
            -sin * (1.0 - self.b1 * inv.value)
            - 2.0 * cos * self.b1 * inv.d1
            - sin * self.b1 * inv.d2
        )
        return value, d1, d2

    @property
    def b0(self):
        """Offset that makes the lifted piece meet sin s at s = t0/3."""
        if self.mode != "exampleA" or self.t0 <= 0:
            return 0.0
        x = np.array(self.t0 / 3.0)
        _, _, inv = log_log(self.s0 * np.sin(x), self.s0 * np.cos(x), -self.s0 * np.sin(x))
        return float(np.sin(x) * self.b1 * inv.value)

    def evaluate(self, s):
        """Returns ``(b, b', b'')`` at the angles ``s``."""
        s = _as_angle(s)

        if self.mode == "sine":
            return Derivatives(np.sin(s), np.cos(s), -np.sin(s))

        if self.mode == "constant":
            return Derivatives(self.b1 * np.ones_like(s), np.zeros_like(s), np.zeros_like(s))

        if self.mode == "custom":
            return Derivatives(*(np.asarray(x, dtype=float) for x in self.function(s)))

        value, d1, d2 = self._log_piece(s)
        if self.t0 <= 0:
            return Derivatives(value, d1, d2)

        values = np.stack([np.sin(s), value + self.b0])
        d1s = np.stack([np.cos(s), d1])
        d2s = np.stack([-np.sin(s), d2])
        return smooth_min(values, d1s, d2s, self.power)

    def value(self, s):
        return self.evaluate(s).value

    def d1(self, s):
        return self.evaluate(s).d1

    def d2(self, s):
        return self.evaluate(s).d2


@dataclass(frozen=True)
class ConstantAngle:
    value: float = 0.0

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        return Derivatives(self.value * np.ones_like(r), np.zeros_like(r), np.zeros_like(r))


@dataclass(frozen=True)
class BumpAngle:
    """Smooth bump ``offset + amplitude * exp(1 - 1/(1-y^2))`` on [lo, hi]."""

    amplitude: float = 0.3
    lo: float = 0.5
    hi: float = 1.0
    offset: float = 0.0

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        scale = 2.0 / (self.hi - self.lo)
        y = scale * (r - 0.5 * (self.lo + self.hi))
        gap = 1.0 - y ** 2
        inside = gap > 1e-3
        gap = np.where(inside, gap, 1.0)

        g = 1.0 - 1.0 / gap
        g_d1 = -2.0 * y / gap ** 2
        g_d2 = -2.0 / gap ** 2 - 8.0 * y ** 2 / gap ** 3
        bump = np.where(inside, np.exp(g), 0.0)

        value = self.offset + self.amplitude * bump
        d1 = self.amplitude * scale * g_d1 * bump
        d2 = self.amplitude * scale ** 2 * (g_d2 + g_d1 ** 2) * bump
        return Derivatives(value, d1, d2)


@dataclass(frozen=True)
class HolderAngle:
    """theta = theta0 * x * (x^2 + rho^2)^((q-1)/2) with x = r - centre.

    With ``smoothing`` rho = 0 this is theta0 * sign(x) |x|^q, which is
    exactly C^q at the centre.
    """

    theta0: float = 3.0
    exponent: float = 0.6
    centre: float = 1.0
    smoothing: float = 0.0

    def evaluate(self, r):
        x = np.asarray(r, dtype=float) - self.centre
        q = self.exponent

        with np.errstate(divide="ignore", invalid="ignore"):
            if self.smoothing == 0:
                ax = np.abs(x)
                value = self.theta0 * np.sign(x) * ax ** q
                d1 = self.theta0 * q * ax ** (q - 1.0)
                d2 = self.theta0 * q * (q - 1.0) * np.sign(x) * ax ** (q - 2.0)
                d2 = np.where(x == 0, 0.0, d2)
                return Derivatives(value, d1, d2)

            rho2 = self.smoothing ** 2
            p = 0.5 * (q - 1.0)
            u = x ** 2 + rho2
            value = self.theta0 * x * u ** p
            d1 = self.theta0 * u ** (p - 1.0) * (q * x ** 2 + rho2)
            d2 = 2.0 * self.theta0 * x * u ** (p - 2.0) * (p * q * x ** 2 + (p - 1.0 + q) * rho2)
        return Derivatives(value, d1, d2)


def _times(a, b):
    """Elementwise a * b with 0 * inf taken as 0."""
    a, b = np.broadcast_arrays(a, b)
    with np.errstate(invalid="ignore"):
        product = a * b
    return np.where((a == 0) | (b == 0), 0.0, product)


@dataclass(frozen=True)
class CircleCurve:
    """Curve m_j(r) = rho cos(theta(r) + 2 pi j / 3) on the circle
    sum m_j = 0, sum m_j^2 = c."""

    c: float
    theta: object = field(default_factory=ConstantAngle)

    @property
    def radius(self):
        return float(np.sqrt(2.0 * self.c / 3.0))

    def evaluate(self, r):
        """Returns ``(m, m', m'')`` with a leading axis of length 3."""
        angle, angle_d1, angle_d2 = self.theta.evaluate(r)
        phases = 2.0 * np.pi * np.arange(3) / 3.0
        phases = phases.reshape((3,) + (1,) * np.ndim(angle))

        cos = np.cos(angle + phases)
        sin = np.sin(angle + phases)
        rho = self.radius

        value = rho * cos
        d1 = _times(-rho * sin, angle_d1)
        d2 = _times(-rho * cos, angle_d1 ** 2) + _times(-rho * sin, angle_d2)
        return Derivatives(value, d1, d2)


@dataclass(frozen=True)
class ConstantCutoff:
    level: float = 1.0

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        return Derivatives(self.level * np.ones_like(s), np.zeros_like(s), np.zeros_like(s))


class FiberDerivatives(NamedTuple):
    m: np.ndarray
    m_r: np.ndarray
    m_s: np.ndarray
    m_rr: np.ndarray
    m_ss: np.ndarray
    m_rs: np.ndarray


@dataclass(frozen=True)
class MetricFunctions:
    """Log-scale factors m_j(r, s) = sum_i psi_i(s) C_ij(r) - offset_j.

    Each term pairs an angular cutoff with a circle curve. Terms with
    disjoint cutoff supports keep both constraints exact.
    """

    terms: Sequence = ()
    offset: object = 0.0

    @property
    def offset_vector(self):
        offset = np.asarray(self.offset, dtype=float)
        if offset.ndim == 0:
            offset = np.full(3, float(offset))
        if offset.shape != (3,):
            raise ValueError(
                f"Metric function offset must be a scalar or a 3-vector! Got shape {offset.shape}."
            )
        return offset

    def evaluate(self, r, s):
        r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
        shape = (3,) + r.shape
        m = np.zeros(shape)
        m_r = np.zeros(shape)
        m_s = np.zeros(shape)
        m_rr = np.zeros(shape)
        m_ss = np.zeros(shape)
        m_rs = np.zeros(shape)

        for cutoff, curve in self.terms:
            psi, psi_d1, psi_d2 = cutoff.evaluate(s)
            value, d1, d2 = curve.evaluate(r)
            m += psi * value
            m_r += psi * d1
            m_rr += psi * d2
            m_s += psi_d1 * value
            m_ss += psi_d2 * value
            m_rs += psi_d1 * d1

        m -= self.offset_vector.reshape((3,) + (1,) * r.ndim)
        return FiberDerivatives(m, m_r, m_s, m_rr, m_ss, m_rs)

    def ray_values(self, r):
        """Limit fiber functions along the singular ray, every cutoff at 1."""
        r = np.asarray(r, dtype=float)
        total = np.zeros((3,) + r.shape)
        for _, curve in self.terms:
            total += curve.evaluate(r).value
        return total - self.offset_vector.reshape((3,) + (1,) * r.ndim)

    def constraint_residuals(self, r, s):
        """Returns the two constraint residuals over the grid.

        Returns:
            tuple: ``(volume, cross)``: the spread of sum_j m_j and the
            largest |sum_j m_j' m_j_dot|.
        """
        fiber = self.evaluate(r, s)
        total = fiber.m.sum(axis=0)
        volume = float(np.max(total) - np.min(total))
        cross = float(np.max(np.abs(np.sum(fiber.m_r * fiber.m_s, axis=0))))
        return volume, cross
