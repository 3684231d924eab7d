"""Closed-form laws, parameters and reference profiles for slip-regularized
thin-film droplet dynamics.

Everything in this module is a pure function of its arguments: the mobility
m(h) = h^3 + eps^(3-n) h^n and its derivative, the non-dimensionalization of
the physical scales, Young's angle, the contact-line speed laws (Cox-Voinov,
Tanner, and the receding log-corrected regime), the log-corrected receding
profile, and the boundary mass bookkeeping for fast-receding solutions.

Invalid regimes raise :class:`~thinfilm.errors.DomainError` or
:class:`~thinfilm.errors.RegimeError` rather than returning NaN, so that
downstream fits never silently ingest garbage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, RegimeError

__all__ = [
    "SlipParameters",
    "PhysicalScales",
    "TypeCState",
    "mobility",
    "mobility_derivative",
    "young_angle",
    "lubrication_scales",
    "cox_voinov_speed",
    "tanner_speed",
    "typeb_speed",
    "typeb_profile",
    "typec_mass",
]


@dataclass(frozen=True)
class SlipParameters:
    """Mobility exponent, slip length and microscopic contact angle.

    n = 2 corresponds to Navier slip, n = 1 to Greenspan slip; epsilon is the
    dimensionless slip length. theta is the rescaled slope prescribed at the
    contact point; theta = 0 selects complete wetting. epsilon = 0 is the
    no-slip limit and must be requested explicitly via ``no_slip_limit``.
    """

    n: float
    epsilon: float
    theta: float
    wetting: str = field(default="")
    no_slip_limit: bool = False

    def __post_init__(self):
        if not (0.0 < self.n <= 3.0):
            raise DomainError(f"mobility exponent must satisfy 0 < n <= 3, got n={self.n}")
        if self.epsilon < 0.0:
            raise DomainError(f"slip length must be nonnegative, got epsilon={self.epsilon}")
        if self.epsilon == 0.0 and not self.no_slip_limit:
            raise DomainError("epsilon = 0 requires selecting the no-slip limit model "
                              "(pass no_slip_limit=True)")
        if self.theta < 0.0:
            raise DomainError(f"contact angle must be nonnegative, got theta={self.theta}")
        derived = "complete" if self.theta == 0.0 else "partial"
        if self.wetting and self.wetting != derived:
            raise DomainError(f"wetting={self.wetting!r} inconsistent with theta={self.theta}")
        object.__setattr__(self, "wetting", derived)


@dataclass(frozen=True)
class PhysicalScales:
    """Surface tensions, viscosity and the anisotropic length scales.

    The derived quantities follow the lubrication non-dimensionalization:
    delta = sy/sx, pressure scale sp = gamma_LG*delta and time scale
    st = gamma_LG*delta/mu.
    """

    gamma_LG: float
    gamma_SL: float
    gamma_SG: float
    mu: float
    sy: float
    sx: float

    def __post_init__(self):
        if self.gamma_LG <= 0.0:
            raise DomainError("gamma_LG must be positive")
        if self.mu <= 0.0:
            raise DomainError("viscosity mu must be positive")
        if not (0.0 < self.sy <= self.sx):
            raise DomainError("length scales must satisfy 0 < sy <= sx")
        if abs(self.gamma_SG - self.gamma_SL) >= self.gamma_LG:
            raise DomainError("no partial wetting: |gamma_SG - gamma_SL| must be "
                              "smaller than gamma_LG for Young's law to be solvable")

    @property
    def delta(self) -> float:
        return self.sy / self.sx

    @property
    def sp(self) -> float:
        return self.gamma_LG * self.delta

    @property
    def st(self) -> float:
        return self.gamma_LG * self.delta / self.mu


def mobility(h, p: SlipParameters):
    """Mobility m(h) = h^3 + eps^(3-n) h^n; reduces to h^3 at eps = 0."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0.0):
        raise DomainError("mobility requires h >= 0")
    if p.epsilon == 0.0:
        out = h ** 3
    else:
        out = h ** 3 + p.epsilon ** (3.0 - p.n) * h ** p.n
    return out if out.ndim else float(out)


def mobility_derivative(h, p: SlipParameters):
    """d/dh of the mobility: 3 h^2 + n eps^(3-n) h^(n-1).

    For n < 1 the derivative is singular at h = 0.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0.0):
        raise DomainError("mobility_derivative requires h >= 0")
    if p.n < 1.0 and np.any(h == 0.0):
        raise DomainError(f"mobility derivative is singular at h = 0 for n = {p.n} < 1")
    if p.epsilon == 0.0:
        out = 3.0 * h ** 2
    else:
        out = 3.0 * h ** 2 + p.n * p.epsilon ** (3.0 - p.n) * h ** (p.n - 1.0)
    return out if out.ndim else float(out)


def young_angle(s: PhysicalScales) -> float:
    """Microscopic contact angle from Young's law, in radians in (0, pi)."""
    c = (s.gamma_SG - s.gamma_SL) / s.gamma_LG
    if not (-1.0 < c < 1.0):
        raise DomainError("no partial wetting: cos(Theta) outside (-1, 1)")
    return math.acos(c)


def lubrication_scales(gamma_LG: float, mu: float, sy: float, sx: float):
    """Return (delta, sp, st) for given tension, viscosity and lengths."""
    if min(gamma_LG, mu, sy, sx) <= 0.0:
        raise DomainError("lubrication_scales requires positive inputs")
    delta = sy / sx
    return delta, gamma_LG * delta, gamma_LG * delta / mu


def cox_voinov_speed(theta: float, gamma_outer: float, epsilon: float) -> float:
    """Contact-line speed theta^2 (theta - gamma) / ln(1/eps), partial wetting.

    Vanishes exactly when the outer slope equals the microscopic angle;
    positive speed means receding support.
    """
    if theta <= 0.0:
        raise DomainError("cox_voinov_speed requires theta > 0")
    if not (0.0 < epsilon < 1.0):
        raise RegimeError("cox_voinov_speed requires 0 < epsilon < 1")
    return theta ** 2 * (theta - gamma_outer) / math.log(1.0 / epsilon)


def tanner_speed(gamma_outer: float, epsilon: float) -> float:
    """Spreading speed -gamma^3 / (3 ln(1/eps)) in complete wetting (<= 0)."""
    if gamma_outer < 0.0:
        raise DomainError("tanner_speed requires gamma_outer >= 0")
    if not (0.0 < epsilon < 1.0):
        raise RegimeError("tanner_speed requires 0 < epsilon < 1")
    return -gamma_outer ** 3 / (3.0 * math.log(1.0 / epsilon))


def typeb_speed(gamma: float) -> float:
    """Receding speed gamma^3 / 3 of the log-corrected regime (> 0).

    The slope coefficient gamma is the prefactor of xi (-ln xi)^(1/3) near
    the contact point.
    """
    if gamma <= 0.0:
        raise DomainError("typeb_speed requires gamma > 0")
    return gamma ** 3 / 3.0


def typeb_profile(xi, sdot: float):
    """Receding near-contact profile (3 sdot)^(1/3) xi (ln 1/xi)^(1/3).

    Valid on 0 < xi < 1 only; the logarithm changes sign at xi = 1.
    """
    if sdot <= 0.0:
        raise DomainError("typeb_profile requires sdot > 0")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0) or np.any(xi >= 1.0):
        raise DomainError("typeb_profile requires 0 < xi < 1")
    out = (3.0 * sdot) ** (1.0 / 3.0) * xi * np.log(1.0 / xi) ** (1.0 / 3.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TypeCState:
    """Boundary mass bookkeeping for fast-receding solutions.

    m is the mass accumulated at the contact point while the support shrank
    from its initial position to s; h0 is the frozen profile (x, values)
    the mass is swept out of.
    """

    m: float
    s: float
    h0_x: np.ndarray
    h0: np.ndarray

    def __post_init__(self):
        if self.m < 0.0:
            raise DomainError("accumulated mass must be nonnegative")
        x = np.asarray(self.h0_x, float)
        v = np.asarray(self.h0, float)
        if x.ndim != 1 or x.shape != v.shape or np.any(np.diff(x) <= 0.0):
            raise DomainError("h0 must be sampled on a strictly increasing grid")
        if np.any(v < 0.0):
            raise DomainError("h0 must be nonnegative")


def typec_mass(h0_x, h0, s_path):
    """Accumulated boundary mass m(tau) = int_{s(0)}^{s(tau)} h0 dx.

    h0 is integrated as its piecewise-linear interpolant, which makes the
    quadrature exact for sampled linear profiles. s_path must be
    nondecreasing and stay inside the sampled grid.
    """
    x = np.asarray(h0_x, dtype=float)
    v = np.asarray(h0, dtype=float)
    s = np.asarray(s_path, dtype=float)
    if np.any(np.diff(x) <= 0.0):
        raise DomainError("h0 grid must be strictly increasing")
    if np.any(v < 0.0):
        raise DomainError("h0 must be nonnegative")
    if np.any(np.diff(s) < 0.0):
        raise DomainError("s_path must be nondecreasing")
    if s[0] < x[0] or s[-1] > x[-1]:
        raise DomainError("s_path leaves the sampled support of h0")
    # cumulative exact integral of the interpolant at the grid nodes
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
    idx = np.clip(np.searchsorted(x, s, side="right") - 1, 0, len(x) - 2)
    xs = x[idx]
    hs = v[idx] + (v[idx + 1] - v[idx]) * (s - xs) / (x[idx + 1] - xs)
    partial = 0.5 * (v[idx] + hs) * (s - xs)
    total = cum[idx] + partial
    return total - total[0]
