"""Boundary-layer ODE problems near the contact point.

Covers the quadratures behind the slip-region corrections (Q_gamma and the
triple-integral slope correction), direct integration of the partial-wetting
inner equation H''' = sdot / (H^2 + H^(n-1)), the shooting problem for the
complete-wetting separatrix of 1 + (H^2 + H) H''' = 0, the local expansions
near a prescribed contact line, the travelling-wave ODE, and the catalogs of
asymptotic basis functions used to classify near-contact behaviour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import (ConvergenceError, DomainError, NoSeparatrixError,
                     RegimeError, SeedError)
from .model import SlipParameters

__all__ = [
    "InnerSolution",
    "AsymptoticBasis",
    "BasisEntry",
    "BETA_1",
    "BETA_2",
    "BETA_3",
    "q_gamma",
    "h1_correction",
    "integrate_inner_partial",
    "complete_wetting_shoot",
    "local_phi",
    "travelling_wave",
    "asymptotic_basis",
    "apply_type_a_operator",
    "apply_type_b_operator",
]

# exponents of the homogeneous modes around the complete-wetting near field
BETA_1 = (5.0 + math.sqrt(13.0)) / 4.0
BETA_2 = (5.0 - math.sqrt(13.0)) / 4.0
BETA_3 = 0.5

_TOUCHDOWN_H = 1e-12


@dataclass
class InnerSolution:
    """A solved inner-region profile with its derivatives.

    H1 and H2 hold the first and second derivative samples. classification is
    'separatrix' for a solution tracking the matched branch, 'touchdown' when
    H reached zero inside the domain, 'quadratic-growth' when the profile ran
    off to the H ~ y^2 far field. shoot_param is the free initial datum that
    produced the solution (the coefficient K for the shooting problem).
    """

    y_nodes: np.ndarray
    H: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    sdot: float
    shoot_param: float | None
    classification: str
    farfield_ratio: float | None = None

    def __post_init__(self):
        y = np.asarray(self.y_nodes, float)
        if y.size and (y[0] <= 0.0 or np.any(np.diff(y) <= 0.0)):
            raise DomainError("y_nodes must be strictly increasing and start above 0")
        if self.classification not in ("separatrix", "touchdown", "quadratic-growth"):
            raise DomainError(f"unknown classification {self.classification!r}")


def q_gamma(y: float, gamma: float, n: float) -> float:
    """Q_gamma(y) = int_y^inf dz / (z^2 + gamma^(n-3) z^(n-1)).

    Evaluated exactly as int_0^(1/y) du / (1 + gamma^(n-3) u^(3-n)) via the
    substitution u = 1/z, which removes the improper endpoint altogether.
    """
    if y <= 0.0 or gamma <= 0.0:
        raise DomainError("q_gamma requires y > 0 and gamma > 0")
    if n > 3.0:
        raise DomainError(f"integral diverges at infinity for n = {n} > 3")
    if n <= 0.0:
        raise DomainError("q_gamma requires n > 0")
    c = gamma ** (n - 3.0)
    p = 3.0 - n
    val, _ = quad(lambda u: 1.0 / (1.0 + c * u ** p), 0.0, 1.0 / y,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def _h1_prefactor(theta: float, sdot: float) -> float:
    return abs(sdot) / theta ** 2


def _check_h1_domain(theta: float, n: float):
    if theta <= 0.0:
        raise DomainError("h1_correction requires theta > 0")
    if not (1.0 < n < 3.0):
        raise ConvergenceError(
            f"the nested slope-correction integral converges only for 1 < n < 3, got n = {n}")


def h1_correction(y: float, theta: float, sdot: float, n: float) -> float:
    """Slope correction |sdot| * int_0^y int_0^y1 int_y2^inf dz/(theta^2 z^2 + theta^(n-1) z^(n-1)).

    The inner integral equals Q_theta(y2)/theta^2, and the two outer
    integrations collapse by the repeated-integration formula, leaving
    (|sdot|/theta^2) * int_0^y (y - t) Q_theta(t) dt. Grows like
    (|sdot|/theta^2) y ln y for large y.
    """
    _check_h1_domain(theta, n)
    if y <= 0.0:
        raise DomainError("h1_correction requires y > 0")
    if sdot == 0.0:
        return 0.0
    f = lambda t: (y - t) * q_gamma(t, theta, n)
    cut = min(1.0, y)
    val, _ = quad(f, 0.0, cut, epsabs=1e-12, epsrel=1e-11, limit=400)
    if y > cut:
        v2, _ = quad(f, cut, y, epsabs=1e-12, epsrel=1e-11, limit=400)
        val += v2
    return _h1_prefactor(theta, sdot) * val


def _h1_slope(y: float, theta: float, sdot: float, n: float) -> float:
    """First derivative of h1_correction in y."""
    _check_h1_domain(theta, n)
    if sdot == 0.0:
        return 0.0
    val, _ = quad(lambda t: q_gamma(t, theta, n), 0.0, y,
                  epsabs=1e-12, epsrel=1e-11, limit=400)
    return _h1_prefactor(theta, sdot) * val


def _h1_curvature(y: float, theta: float, sdot: float, n: float) -> float:
    """Second derivative of h1_correction in y."""
    _check_h1_domain(theta, n)
    if sdot == 0.0:
        return 0.0
    return _h1_prefactor(theta, sdot) * q_gamma(y, theta, n)


def integrate_inner_partial(p: SlipParameters, sdot: float, y_span) -> InnerSolution:
    """Solve the partial-wetting inner equation H''' = sdot/(H^2 + H^(n-1)).

    H(y0) and H_y(y0) come from the wedge-plus-correction expansion
    H = theta y - sign(sdot) h1; the remaining datum H_yy(y0) is the free
    shooting parameter, seeded by the expansion and refined by a secant
    iteration so that the curvature decays at the far end (the half-line
    problem's quadratic mode would otherwise swamp the log correction).
    Touchdown is reported as a classification, not an exception.
    """
    if p.theta <= 0.0:
        raise DomainError("the partial-wetting inner problem requires theta > 0")
    y0, ymax = float(y_span[0]), float(y_span[1])
    if not (0.0 < y0 < ymax):
        raise DomainError("y_span must satisfy 0 < y0 < ymax")
    th, n = p.theta, p.n

    def rhs(y, w):
        H = max(w[0], _TOUCHDOWN_H)
        return [w[1], w[2], sdot / (H * H + H ** (n - 1.0))]

    touchdown = lambda y, w: w[0] - _TOUCHDOWN_H
    touchdown.terminal = True
    touchdown.direction = -1

    def run(c):
        sol = solve_ivp(rhs, [y0, ymax], [H0, Hp0, c], method="LSODA",
                        rtol=1e-10, atol=1e-14, events=[touchdown])
        if sol.status < 0:
            raise ConvergenceError(f"inner integration failed: {sol.message}")
        return sol

    if sdot == 0.0:
        H0, Hp0 = th * y0, th
        sol, c = run(0.0), 0.0
    else:
        sgn = -math.copysign(1.0, sdot)
        h1_0 = h1_correction(y0, th, sdot, n)
        if h1_0 > 0.5 * th * y0:
            raise SeedError(f"correction expansion invalid at y0={y0}: "
                            "the slope correction exceeds half the wedge term")
        H0 = th * y0 + sgn * h1_0
        Hp0 = th + sgn * _h1_slope(y0, th, sdot, n)
        # curvature decays like the quadrature tail, not to zero at finite ymax
        far_target = sgn * _h1_curvature(ymax, th, sdot, n)
        c = sgn * _h1_curvature(y0, th, sdot, n)
        sol = run(c)

        def objective(s):
            return None if s.t_events[0].size else s.y[2, -1] - far_target

        f_prev, c_prev = objective(sol), c
        c2 = c * (1.0 + 1e-3) + 1e-12
        sol2 = run(c2)
        f = objective(sol2)
        if f is not None and f_prev is not None:
            sol, c = sol2, c2
            for _ in range(12):
                if abs(f) <= 1e-10 * (abs(c) + abs(sdot) / ymax) or f == f_prev:
                    break
                c_new = c - f * (c - c_prev) / (f - f_prev)
                c_prev, f_prev = c, f
                sol_new = run(c_new)
                f_new = objective(sol_new)
                if f_new is None:
                    break
                sol, c, f = sol_new, c_new, f_new
    if sol.t_events[0].size:
        cls = "touchdown"
    elif sol.y[0, -1] > 2.0 * th * sol.t[-1]:
        # matched branch left behind; the quadratic far field took over
        cls = "quadratic-growth"
    else:
        cls = "separatrix"
    return InnerSolution(y_nodes=sol.t, H=sol.y[0], H1=sol.y[1], H2=sol.y[2],
                         sdot=sdot, shoot_param=c, classification=cls)


def _shoot_seed(eta0: float, K: float):
    c = math.sqrt(8.0 / 3.0)
    H = c * eta0 ** 1.5 + (8.0 / 45.0) * eta0 ** 3 + K * eta0 ** BETA_1
    Hp = 1.5 * c * eta0 ** 0.5 + (24.0 / 45.0) * eta0 ** 2 + BETA_1 * K * eta0 ** (BETA_1 - 1.0)
    Hpp = 0.75 * c * eta0 ** -0.5 + (48.0 / 45.0) * eta0 + BETA_1 * (BETA_1 - 1.0) * K * eta0 ** (BETA_1 - 2.0)
    return [H, Hp, Hpp]


def _shoot_classify(eta0: float, K: float, eta_max: float, rtol: float = 1e-9):
    """One trajectory of 1 + (H^2+H) H''' = 0 from the three-term seed.

    H''' < 0 along every trajectory, so H'' decreases monotonically: once it
    crosses zero the profile is concave with falling slope and must touch
    down, which classifies K as subcritical without integrating further.
    """
    def rhs(e, w):
        H = max(w[0], _TOUCHDOWN_H)
        return [w[1], w[2], -1.0 / (H * H + H)]

    td = lambda e, w: w[0] - _TOUCHDOWN_H
    td.terminal = True
    td.direction = -1
    concave = lambda e, w: w[2]
    concave.terminal = True
    concave.direction = -1
    sol = solve_ivp(rhs, [eta0, eta_max], _shoot_seed(eta0, K), method="LSODA",
                    rtol=rtol, atol=1e-14, events=[td, concave])
    if sol.status < 0:
        raise ConvergenceError(f"shooting integration failed: {sol.message}")
    if sol.t_events[0].size or (sol.t_events[1].size and sol.t[-1] < 0.999 * eta_max):
        return "touchdown", sol
    # separatrix envelope of the curvature at eta_max
    c_sep = 3.0 ** (1.0 / 3.0) / (3.0 * eta_max) * math.log(eta_max) ** (-2.0 / 3.0)
    if sol.y[2, -1] > 3.0 * c_sep:
        return "quadratic-growth", sol
    return "separatrix", sol


def complete_wetting_shoot(eta0: float = 1e-3, eta_max: float = 1e4,
                           tol: float = 1e-12) -> InnerSolution:
    """Bisect the coefficient K of the eta^beta_1 seed mode to the separatrix.

    Subcritical K leads to touchdown, supercritical K to quadratic growth;
    the bracket is found by a decade scan and narrowed until its width is
    below tol. The returned solution carries K0 in shoot_param and the
    far-field ratio H / (3^(1/3) eta (ln eta)^(1/3)) at its last node.
    """
    if not (0.0 < eta0 < 1.0 < eta_max):
        raise DomainError("require 0 < eta0 < 1 < eta_max")
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    # three-term expansion must still be dominated by its leading term
    if (8.0 / 45.0) * eta0 ** 3 > 0.01 * math.sqrt(8.0 / 3.0) * eta0 ** 1.5:
        raise SeedError(f"eta0 = {eta0} too large: expansion residual above 1% of H")
    lo = hi = None
    for K in [-(10.0 ** j) for j in range(1, -7, -1)] + [0.0] + [10.0 ** j for j in range(-6, 2)]:
        cls, _ = _shoot_classify(eta0, K, eta_max)
        if cls == "touchdown" and (lo is None or K > lo):
            lo = K
        if cls != "touchdown" and (hi is None or K < hi):
            hi = K
    if lo is None or hi is None:
        raise NoSeparatrixError("initial scan over K in {+-10^j} found no bracket")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        cls, _ = _shoot_classify(eta0, mid, eta_max)
        if cls == "touchdown":
            lo = mid
        else:
            hi = mid
    K0 = 0.5 * (lo + hi)
    _, sol = _shoot_classify(eta0, K0, eta_max, rtol=1e-10)
    eta_end, H_end = sol.t[-1], sol.y[0, -1]
    ratio = H_end / (3.0 ** (1.0 / 3.0) * eta_end * math.log(eta_end) ** (1.0 / 3.0))
    return InnerSolution(y_nodes=sol.t, H=sol.y[0], H1=sol.y[1], H2=sol.y[2],
                         sdot=-1.0, shoot_param=K0, classification="separatrix",
                         farfield_ratio=ratio)


def local_phi(n: float, gamma: float, sdot: float, xi, phi2_seed: float | None = None):
    """Leading local correction phi to the wedge gamma*xi near a prescribed contact line.

    Branches on the mobility exponent: a xi^(4-n) monomial for 2 < n < 3, the
    logarithmic xi^2 ln xi response at n = 2, and a free quadratic (seeded by
    phi2_seed = phi''(0)) for n < 2.
    """
    if n >= 3.0:
        raise RegimeError(f"local expansion out of scope for n = {n} >= 3")
    if n <= 0.0:
        raise DomainError("local_phi requires n > 0")
    if gamma <= 0.0:
        raise DomainError("local_phi requires gamma > 0")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0):
        raise DomainError("local_phi requires xi > 0")
    if n < 2.0:
        if phi2_seed is None:
            raise DomainError("phi2_seed is required for n < 2")
        out = 0.5 * phi2_seed * xi ** 2
    else:
        if phi2_seed is not None:
            raise DomainError("phi2_seed is only meaningful for n < 2")
        if n == 2.0:
            out = 0.5 * sdot / gamma * xi ** 2 * np.log(xi)
        else:
            out = gamma ** (1.0 - n) * sdot / ((4.0 - n) * (3.0 - n) * (2.0 - n)) * xi ** (4.0 - n)
    return out if out.ndim else float(out)


def travelling_wave(p: SlipParameters, sign: int, xi_span, seeds) -> InnerSolution:
    """Integrate the once-integrated travelling-wave ODE m(h) h''' = sign * xi.

    The integration constant is zero by the no-mass-flux condition, so the
    flux m(h) h''' - sign*xi vanishes identically along the solution.
    sign = +1 is a shrinking support, sign = -1 an expanding one. Touchdown
    and curvature blowup are reported as classifications.
    """
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    xi0, ximax = float(xi_span[0]), float(xi_span[1])
    if min(xi0, ximax) <= 0.0 or xi0 == ximax:
        raise DomainError("xi_span endpoints must be positive and distinct")
    h0, h1, h2 = (float(s) for s in seeds)
    if h0 <= 0.0:
        raise DomainError("seed height must be positive")
    n, eps = p.n, p.epsilon

    def mob(h):
        if eps == 0.0:
            return h ** 3
        return h ** 3 + eps ** (3.0 - n) * h ** n

    # the wave mobility degenerates faster than the inner problems', so the
    # touchdown event fires a little higher to keep the ODE integrable
    td_h = 1e-10 * (1.0 + abs(h0))

    def rhs(xi, w):
        h = max(w[0], 0.1 * td_h)
        return [w[1], w[2], sign * xi / mob(h)]

    td = lambda xi, w: w[0] - td_h
    td.terminal = True
    td.direction = -1
    blow = lambda xi, w: w[2] - 1e8 * (1.0 + abs(h2))   # curvature runaway (growth side)
    blow.terminal = True
    blow.direction = 1
    sol = solve_ivp(rhs, [xi0, ximax], [h0, h1, h2], method="LSODA",
                    rtol=1e-10, atol=1e-14, events=[td, blow])
    if sol.status < 0:
        raise ConvergenceError(f"travelling-wave integration failed: {sol.message}")
    if sol.t_events[0].size:
        cls = "touchdown"
    elif sol.t_events[1].size:
        cls = "quadratic-growth"
    else:
        cls = "separatrix"
    nodes, H, H1v, H2v = sol.t, sol.y[0], sol.y[1], sol.y[2]
    if nodes[0] > nodes[-1]:                  # integrated toward the contact
        nodes, H, H1v, H2v = nodes[::-1], H[::-1], H1v[::-1], H2v[::-1]
    return InnerSolution(y_nodes=nodes, H=H, H1=H1v, H2=H2v,
                         sdot=float(sign), shoot_param=None, classification=cls)


@dataclass(frozen=True)
class BasisEntry:
    """One asymptotic basis function with optional exact derivative callables."""

    description: str
    func: object = None
    third_derivative: object = None
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AsymptoticBasis:
    regime: str
    entries: tuple


@lru_cache(maxsize=None)
def _typeb_basis_callables():
    """Exact derivatives of the four log-corrected basis functions, via sympy."""
    import sympy as sp

    x = sp.symbols("xi", positive=True)
    L = -sp.log(x)
    exprs = [L ** sp.Rational(1, 3),
             sp.Integer(1),
             x * L ** sp.Rational(-2, 3),
             x ** 2 * L ** sp.Rational(1, 3)]
    out = []
    for e in exprs:
        f = sp.lambdify(x, e, "numpy")
        f3 = sp.lambdify(x, sp.diff(e, x, 3), "numpy")
        out.append((f, f3))
    return tuple(out)


def asymptotic_basis(regime: str) -> AsymptoticBasis:
    """Catalog of near-contact asymptotic basis functions for a regime.

    'type-a-laplace' lists the four behaviours of the frozen fixed-support
    operator, 'type-b-linearized' the four log-corrected behaviours of the
    receding linearization, 'local-phi' the homogeneous modes of the
    prescribed-contact-line local operator (one exponent depends on n).
    """
    if regime == "type-a-laplace":
        entries = (
            BasisEntry("ln x", np.log, lambda x: 2.0 * np.asarray(x, float) ** -3.0,
                       {"power": 0.0, "log_power": 1.0}),
            BasisEntry("1", lambda x: np.ones_like(np.asarray(x, float)),
                       lambda x: np.zeros_like(np.asarray(x, float)), {"power": 0.0}),
            BasisEntry("x", lambda x: np.asarray(x, float),
                       lambda x: np.zeros_like(np.asarray(x, float)), {"power": 1.0}),
            BasisEntry("x^2", lambda x: np.asarray(x, float) ** 2,
                       lambda x: np.zeros_like(np.asarray(x, float)), {"power": 2.0}),
        )
        return AsymptoticBasis(regime, entries)
    if regime == "type-b-linearized":
        calls = _typeb_basis_callables()
        descs = ["(-ln xi)^(1/3)", "1", "xi (-ln xi)^(-2/3)", "xi^2 (-ln xi)^(1/3)"]
        datas = [{"power": 0.0, "log_power": 1.0 / 3.0},
                 {"power": 0.0, "log_power": 0.0},
                 {"power": 1.0, "log_power": -2.0 / 3.0},
                 {"power": 2.0, "log_power": 1.0 / 3.0}]
        entries = tuple(BasisEntry(d, f, f3, dat)
                        for d, (f, f3), dat in zip(descs, calls, datas))
        return AsymptoticBasis(regime, entries)
    if regime == "local-phi":
        entries = (
            BasisEntry("1", data={"power": 0.0}),
            BasisEntry("xi", data={"power": 1.0}),
            BasisEntry("xi^2", data={"power": 2.0}),
            BasisEntry("xi^(3-n)", data={"power": "3-n"}),
        )
        return AsymptoticBasis(regime, entries)
    raise DomainError(f"unknown regime {regime!r}; expected 'type-a-laplace', "
                      "'type-b-linearized' or 'local-phi'")


def _log_space_derivative(g, x, rel_step=1e-4):
    """d/dx of g at x via a centered difference in ln x (stable for tiny x)."""
    x = np.asarray(x, dtype=float)
    hi = x * math.exp(rel_step)
    lo = x * math.exp(-rel_step)
    return (g(hi) - g(lo)) / (hi - lo)


def apply_type_a_operator(entry: BasisEntry, x):
    """(x^3 u''')' evaluated with the entry's exact third derivative."""
    g = lambda t: np.asarray(t, float) ** 3 * entry.third_derivative(t)
    return _log_space_derivative(g, x)


def apply_type_b_operator(entry: BasisEntry, xi):
    """Apply the frozen receding-linearization operator to a basis entry.

    Returns (residual, term_scale): the value of
    (xi^3 (-ln xi) u''' + (2/3) u)' and the magnitude of its largest
    individual term, whose ratio exposes the asymptotic order reduction.
    """
    xi = np.asarray(xi, dtype=float)
    t1 = lambda t: np.asarray(t, float) ** 3 * (-np.log(t)) * entry.third_derivative(t)
    t2 = lambda t: (2.0 / 3.0) * entry.func(t)
    both = lambda t: t1(t) + t2(t)
    residual = _log_space_derivative(both, xi)
    scale = np.maximum(np.abs(_log_space_derivative(t1, xi)),
                       np.abs(_log_space_derivative(t2, xi)))
    return residual, scale
