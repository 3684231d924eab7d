"""Implicit finite-difference solvers for the slip-regularized thin-film
free-boundary problem.

Two schemes share one conservative spatial discretization:

* a moving-frame solver on xi = x - s(t), with the contact point pinned at
  xi = 0 and the contact speed sdot solved as an extra unknown, closed by
  three contact rows (h(0) = 0, one-sided slope h_xi(0) = theta, zero flux
  through the first face) and two far-field rows;
* a fixed-frame solver with zero flux through both boundary faces, used as a
  cross-check oracle; the contact position is tracked by a level set.

The flux form Q = m(h) * h_xxx with the face-centered third-difference
stencil is the discrete gradient of the surface energy, so mass is conserved
by telescoping and the semi-discrete energy identity closes exactly; the
fully discrete energy residual is then pure first-order-in-dt error.
Time stepping is backward Euler with a damped Newton iteration; the linear
systems are banded (bandwidth 7) and the dense sdot column of the moving
frame is handled by bordered elimination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, DomainError, SolverFailure, StepRejected
from .model import SlipParameters, mobility, mobility_derivative, typeb_profile

__all__ = [
    "Grid",
    "State",
    "Diagnostics",
    "Trajectory",
    "SolverConfig",
    "initial_profile",
    "step",
    "simulate",
    "energy",
    "dissipation",
    "check_energy_balance",
    "extract_contact_speed",
    "measure_outer_slope",
    "level_set_position",
]

# Accepted states carry h >= 0 exactly. A backward-Euler step at a degenerate
# dry edge lands at a tiny sign-definite negative (O(dt * m(h_edge) * h_xxx),
# e.g. -1e-31) for every dt, so pure rejection cannot terminate there; the
# acceptance test therefore allows undershoot below the scheme's own rounding
# scale and snaps that dust to zero, rejecting anything larger. The snap
# perturbs the tracked energy by the same sub-rounding amount.
_POSITIVITY_REL_TOL = 256.0 * np.finfo(float).eps
_SUPPORT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Grid:
    """Spatial nodes, either uniform or geometrically graded near the contact.

    dxi reports the first (contact-side) spacing; for uniform grids
    L = N * dxi holds exactly.
    """

    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "xi", xi)
        if xi.ndim != 1 or xi.size < 17:
            raise ConfigError("grid needs at least N = 16 intervals")
        if np.any(np.diff(xi) <= 0.0):
            raise ConfigError("grid nodes must be strictly increasing")

    @classmethod
    def uniform(cls, N: int, dxi: float) -> "Grid":
        if N < 16:
            raise ConfigError(f"grid invariant N >= 16 violated by N={N}")
        if dxi <= 0.0:
            raise ConfigError(f"grid invariant dxi > 0 violated by dxi={dxi}")
        return cls(np.linspace(0.0, N * dxi, N + 1))

    @classmethod
    def graded(cls, dxi0: float, L: float, ratio: float = 1.05,
               dxi_max: float | None = None) -> "Grid":
        """Geometric grading from dxi0 at the contact, capped at dxi_max."""
        if dxi0 <= 0.0 or L <= 0.0:
            raise ConfigError("graded grid requires dxi0 > 0 and L > 0")
        if not (1.0 < ratio <= 1.05):
            raise ConfigError("grading ratio must lie in (1, 1.05]")
        if dxi_max is None:
            dxi_max = L / 64.0
        xs = [0.0]
        d = dxi0
        while xs[-1] < L:
            xs.append(xs[-1] + d)
            d = min(d * ratio, dxi_max)
        return cls(np.array(xs))

    @property
    def N(self) -> int:
        return self.xi.size - 1

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def L(self) -> float:
        return float(self.xi[-1])

    #: ghost nodes carried beyond each physical boundary by the schemes
    ghost: int = 1


@dataclass
class State:
    """Droplet profile on its grid, contact position and time."""

    h: np.ndarray
    s: float
    t: float
    sdot_last: float
    grid: Grid

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if self.h.shape != self.grid.xi.shape:
            raise DomainError("profile and grid sizes differ")


@dataclass
class Diagnostics:
    energy: float
    dissipation: float
    mass: float
    energy_residual: float
    farfield_flux: float = 0.0


@dataclass
class Trajectory:
    """Time series of a run: s(t), sdot(t), per-step diagnostics, thinned states."""

    times: np.ndarray
    positions: np.ndarray
    speeds: np.ndarray
    diagnostics: list
    states: list
    config: "SolverConfig"
    status: str = "completed"


@dataclass(frozen=True)
class SolverConfig:
    p: SlipParameters
    grid: Grid
    dt0: float = 1e-6
    dt_min: float = 1e-13
    dt_max: float = 0.02
    newton_tol: float = 1e-9
    newton_max_iter: int = 25
    far_field: str = "zero-curvature"
    far_field_gamma: float = 1.0
    frame: str = "moving"
    mobility_face_average: str = "arithmetic"
    initial_profile: str = "wedge"
    initial_params: dict = field(default_factory=dict)
    snapshot_every: int = 50
    expected_motion: str = ""          # '', 'receding' or 'advancing'

    def __post_init__(self):
        if self.expected_motion not in ("", "receding", "advancing"):
            raise ConfigError(f"unknown expected_motion {self.expected_motion!r}")
        if not (self.dt_min <= self.dt0 <= self.dt_max):
            raise ConfigError("time steps must satisfy dt_min <= dt0 <= dt_max")
        if self.newton_tol <= 0.0:
            raise ConfigError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be at least 1")
        if self.far_field not in ("zero-curvature", "wedge-match", "wall"):
            raise ConfigError(f"unknown far_field {self.far_field!r}")
        if self.frame not in ("moving", "fixed"):
            raise ConfigError(f"unknown frame {self.frame!r}")
        if self.mobility_face_average not in ("arithmetic", "geometric"):
            raise ConfigError(f"unknown mobility_face_average {self.mobility_face_average!r}")


# ---------------------------------------------------------------------------
# initial profiles

def _contact_regularized(h, xi, p: SlipParameters, params):
    """Blend the profile to zero slope at the contact for complete wetting.

    An implicit first step must satisfy h_xi(0) = 0 when theta = 0; data with
    a finite contact slope makes the Newton iteration start from an
    incompatible corner, so the generators send h -> h * xi/(xi + a) with a
    of the order of the slip length.
    """
    if p.theta > 0.0:
        return h
    a = params.get("contact_reg", 10.0 * max(p.epsilon, xi[1]))
    return h * xi / (xi + a)


def initial_profile(cfg: SolverConfig) -> np.ndarray:
    """Evaluate the named initial-data generator on the config's grid."""
    xi = cfg.grid.xi
    params = cfg.initial_params
    name = cfg.initial_profile
    if name == "wedge":
        g = params.get("gamma", 1.0)
        h = g * xi.copy()
        h = _contact_regularized(h, xi, cfg.p, params)
    elif name == "wedge-plus-bump":
        g = params.get("gamma", 1.0)
        amp = params.get("amp", 0.1)
        center = params.get("center", 0.5 * cfg.grid.L)
        width = params.get("width", 0.1 * cfg.grid.L)
        h = g * xi + amp * np.exp(-((xi - center) / width) ** 2)
        h[0] = 0.0
        h = _contact_regularized(h, xi, cfg.p, params)
    elif name == "typeb-cutoff":
        g = params.get("gamma", 1.0)
        cut = params.get("cut", 0.5)
        sdot0 = g ** 3 / 3.0
        h = np.zeros_like(xi)
        inner = (xi > 0.0) & (xi < cut)
        h[inner] = typeb_profile(xi[inner], sdot0)
        hm = typeb_profile(cut, sdot0)
        Lc = math.log(1.0 / cut)
        slope = (3.0 * sdot0) ** (1.0 / 3.0) * (Lc ** (1.0 / 3.0) - Lc ** (-2.0 / 3.0) / 3.0)
        h[xi >= cut] = hm + slope * (xi[xi >= cut] - cut)
    elif name == "parabolic-cap":
        height = params.get("height", 1.0)
        radius = params.get("radius", 0.45 * cfg.grid.L)
        center = params.get("center", 0.5 * cfg.grid.L)
        h = height * np.maximum(0.0, 1.0 - ((xi - center) / radius) ** 2)
        ripple = params.get("ripple", 0.0)
        if ripple:
            k = params.get("ripple_waves", 3.0)
            h *= 1.0 + ripple * np.sin(2.0 * math.pi * k * (xi - center) / radius)
    elif name == "smooth-bump":
        height = params.get("height", 1.0)
        radius = params.get("radius", 0.3 * cfg.grid.L)
        center = params.get("center", 0.5 * cfg.grid.L)
        h = height * np.maximum(0.0, 1.0 - ((xi - center) / radius) ** 2) ** 2
    else:
        raise ConfigError(f"unknown initial_profile {name!r}")
    return np.maximum(h, 0.0)


# ---------------------------------------------------------------------------
# spatial geometry shared by both frames

class _Geometry:
    """Stencil coefficients for one grid (full vector = [ghost, nodes, ghost])."""

    def __init__(self, grid: Grid):
        xi = grid.xi
        self.xi = xi
        self.N = grid.N
        N = self.N
        d0 = xi[1] - xi[0]
        dN = xi[-1] - xi[-2]
        self.xf = np.concatenate([[xi[0] - d0], xi, [xi[-1] + dN]])
        self.delta = np.diff(self.xf)          # full spacings, len N+2
        self.dfp = np.diff(xi)                 # physical face widths, len N
        dm = self.delta[:-1]
        dp = self.delta[1:]
        self.Dnode = 0.5 * (dm + dp)           # control-volume widths, len N+1
        # second difference at each physical node, full cols i..i+2
        self.C2 = np.stack([1.0 / (dm * self.Dnode),
                            -(1.0 / dm + 1.0 / dp) / self.Dnode,
                            1.0 / (dp * self.Dnode)], axis=1)
        # face third difference (D2_{k+1}-D2_k)/dfp_k, full cols k..k+3
        C3 = np.zeros((N, 4))
        C3[:, 0:3] -= self.C2[:-1]
        C3[:, 1:4] += self.C2[1:]
        C3 /= self.dfp[:, None]
        self.C3 = C3
        # centered first derivative at each node, full cols i..i+2
        self.C1 = np.stack([-dp / (dm * (dm + dp)),
                            (dp - dm) / (dm * dp),
                            dm / (dp * (dm + dp))], axis=1)
        # one-sided second-order slope at node 0 (cols = full 1,2,3)
        d1, d2 = self.dfp[0], self.dfp[1]
        self.S = np.array([-(2.0 * d1 + d2) / (d1 * (d1 + d2)),
                           (d1 + d2) / (d1 * d2),
                           -d1 / (d2 * (d1 + d2))])

    def full_vector(self, h):
        v = np.empty(h.size + 2)
        v[1:-1] = h
        v[0] = 2.0 * v[1] - v[2]
        v[-1] = 2.0 * v[-2] - v[-3]
        return v

    def d2_nodes(self, v):
        i = np.arange(self.N + 1)
        return (self.C2[:, 0] * v[i] + self.C2[:, 1] * v[i + 1] + self.C2[:, 2] * v[i + 2])

    def d3_faces(self, v):
        k = np.arange(self.N)
        return (self.C3[:, 0] * v[k] + self.C3[:, 1] * v[k + 1]
                + self.C3[:, 2] * v[k + 2] + self.C3[:, 3] * v[k + 3])

    def d1_nodes(self, v):
        i = np.arange(self.N + 1)
        return (self.C1[:, 0] * v[i] + self.C1[:, 1] * v[i + 1] + self.C1[:, 2] * v[i + 2])


def _face_mobility(mnode, dmnode, kind):
    """Face values and the two node-derivatives of the face mobility."""
    if kind == "arithmetic":
        mf = 0.5 * (mnode[:-1] + mnode[1:])
        dL = 0.5 * dmnode[:-1]
        dR = 0.5 * dmnode[1:]
    else:  # geometric
        prod = mnode[:-1] * mnode[1:]
        mf = np.sqrt(prod)
        with np.errstate(divide="ignore", invalid="ignore"):
            dL = np.where(mf > 0.0, dmnode[:-1] * mnode[1:] / (2.0 * mf), 0.0)
            dR = np.where(mf > 0.0, dmnode[1:] * mnode[:-1] / (2.0 * mf), 0.0)
    return mf, dL, dR


# ---------------------------------------------------------------------------
# banded Newton schemes

class _BandedMatrix:
    """Accumulator for a (l,u)-banded matrix in solve_banded storage."""

    def __init__(self, M, l, u):
        self.M, self.l, self.u = M, l, u
        self.ab = np.zeros((l + u + 1, M))

    def add(self, rows, cols, vals):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        np.add.at(self.ab, (self.u + rows - cols, cols), vals)

    def solve(self, rhs):
        return solve_banded((self.l, self.u), self.ab, rhs,
                            overwrite_ab=False, check_finite=False)


class _Scheme:
    """Shared Newton machinery; frame-specific residual/Jacobian assembly."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.p = cfg.p
        self.geo = _Geometry(cfg.grid)
        self.N = self.geo.N
        self.M = self.N + 3                      # full vector length
        g = self.geo
        self.s_flux = 1.0 / np.max(np.abs(g.C3[0]))
        self.s_slope = 1.0 / np.max(np.abs(g.S))
        self.s_far3 = 1.0 / np.max(np.abs(g.C3[-1]))
        self.s_far2 = 1.0 / np.max(np.abs(g.C2[-1]))

    # -- physics shared with the diagnostics ------------------------------
    def _mob(self, h):
        mnode = mobility(np.maximum(h, 0.0), self.p)
        hpos = np.maximum(h, 0.0)
        if self.p.epsilon == 0.0:
            dmn = 3.0 * hpos ** 2
        else:
            with np.errstate(divide="ignore"):
                pw = np.where(hpos > 0.0, hpos ** (self.p.n - 1.0), 0.0)
            dmn = 3.0 * hpos ** 2 + self.p.n * self.p.epsilon ** (3.0 - self.p.n) * pw
        return np.asarray(mnode, float), np.asarray(dmn, float)

    def ghosted(self, h):
        """Full vector with the scheme's own ghost closures."""
        v = np.empty(h.size + 2)
        v[1:-1] = h
        g = self.geo
        if self.cfg.frame == "fixed":
            v[0] = v[2]
            v[-1] = v[-3]
            return v
        # moving frame: zero third difference through the first face
        v[0] = 0.0
        v[0] = -(g.C3[0, 1] * v[1] + g.C3[0, 2] * v[2] + g.C3[0, 3] * v[3]) / g.C3[0, 0]
        if self.cfg.far_field == "wedge-match":
            v[-1] = v[-3] + self.cfg.far_field_gamma * (g.xf[-1] - g.xf[-3])
        elif self.cfg.far_field == "wall":
            v[-1] = v[-3]
        else:
            v[-1] = 0.0
            N = self.N
            v[-1] = -(g.C2[N, 0] * v[N] + g.C2[N, 1] * v[N + 1]) / g.C2[N, 2]
        return v

    def fluxes(self, v):
        mnode, _ = self._mob(v[1:-1])
        mf, _, _ = _face_mobility(mnode, mnode, self.cfg.mobility_face_average)
        return mf * self.geo.d3_faces(v)

    # -- moving frame -------------------------------------------------------
    def _assemble_moving(self, v, sdot, hold, dt):
        """Residual, banded block, and the bordered row/column.

        The banded block holds the prescribed-speed problem (contact value,
        contact flux, interior rows, two far-field rows); the extra
        contact-slope condition is the border row that closes sdot, whose
        column is the dense dF/dsdot.
        """
        g, N, M = self.geo, self.N, self.M
        p = self.p
        h = v[1:-1]
        with np.errstate(over="ignore", invalid="ignore"):
            D3 = g.d3_faces(v)
            D2 = g.d2_nodes(v)
            conv = g.d1_nodes(v)
            mnode, dmn = self._mob(h)
            mf, dLm, dRm = _face_mobility(mnode, dmn, self.cfg.mobility_face_average)
            Q = mf * D3

            F = np.empty(M + 1)
            F[0] = D3[0] * self.s_flux
            F[1] = v[1]
            i = np.arange(1, N)
            F[2:N + 1] = (h[i] - hold[i]) - dt * (sdot * conv[i] - (Q[i] - Q[i - 1]) / g.Dnode[i])
            if self.cfg.far_field == "zero-curvature":
                F[N + 1] = D3[N - 1] * self.s_far3
                F[N + 2] = D2[N] * self.s_far2
            elif self.cfg.far_field == "wedge-match":
                wfar = g.xf[-1] - g.xf[-3]
                F[N + 1] = (v[-1] - v[-3]) - self.cfg.far_field_gamma * wfar
                F[N + 2] = D2[N] * self.s_far2
            else:
                # wall: the PDE holds at the last node with zero flux through
                # the far face, and the ghost mirrors the slope condition
                F[N + 1] = (h[N] - hold[N]) - dt * (sdot * conv[N] + Q[N - 1] / g.Dnode[N])
                F[N + 2] = v[-1] - v[-3]
            F[M] = (g.S @ v[1:4] - p.theta) * self.s_slope   # border row closes sdot

            # per-row assembly-noise floor: the residual cannot be driven below
            # the rounding of its own largest terms (tall far field amplifies
            # the third-difference cancellation by the mobility)
            eps_m = np.finfo(float).eps
            T3 = self._c3_magnitude(v)
            noise = np.zeros(M + 1)
            noise[0] = eps_m * self.s_flux * T3[0]
            noise[2:N + 1] = eps_m * (np.abs(h[i]) + dt * (
                np.abs(sdot) * np.abs(conv[i])
                + (mf[i] * T3[i] + mf[i - 1] * T3[i - 1]) / g.Dnode[i]))
            if self.cfg.far_field == "zero-curvature":
                noise[N + 1] = eps_m * self.s_far3 * T3[N - 1]
                noise[N + 2] = eps_m * self.s_far2 * self._c2_magnitude(v, N)
            elif self.cfg.far_field == "wedge-match":
                noise[N + 1] = eps_m * (np.abs(v[-1]) + np.abs(v[-3]))
                noise[N + 2] = eps_m * self.s_far2 * self._c2_magnitude(v, N)
            else:
                noise[N + 1] = eps_m * (np.abs(h[N]) + dt * (
                    np.abs(sdot * conv[N]) + mf[N - 1] * T3[N - 1] / g.Dnode[N]))
                noise[N + 2] = eps_m * (np.abs(v[-1]) + np.abs(v[-3]))
            noise[M] = eps_m * self.s_slope * (np.abs(g.S) @ np.abs(v[1:4]) + p.theta)

            A = _BandedMatrix(M, 2, 3)
            A.add(np.zeros(4, int), np.arange(4), g.C3[0] * self.s_flux)
            A.add([1], [1], [1.0])
            rows = i + 1
            A.add(rows, i + 1, np.ones(i.size))
            ci = dt * sdot
            for t in range(3):
                A.add(rows, i + t, -ci * g.C1[i, t])
            # divergence: +dt/Dnode * (dQ_i - dQ_{i-1})
            w = dt / g.Dnode[i]
            for t in range(4):
                A.add(rows, i + t, w * mf[i] * g.C3[i, t])          # face i
                A.add(rows, i - 1 + t, -w * mf[i - 1] * g.C3[i - 1, t])
            A.add(rows, i + 1, w * D3[i] * dLm[i])
            A.add(rows, i + 2, w * D3[i] * dRm[i])
            A.add(rows, i, -w * D3[i - 1] * dLm[i - 1])
            A.add(rows, i + 1, -w * D3[i - 1] * dRm[i - 1])
            if self.cfg.far_field == "zero-curvature":
                A.add(np.full(4, N + 1), np.arange(N - 1, N + 3), g.C3[N - 1] * self.s_far3)
                A.add(np.full(3, N + 2), np.arange(N, N + 3), g.C2[N] * self.s_far2)
            elif self.cfg.far_field == "wedge-match":
                A.add([N + 1, N + 1], [M - 1, M - 3], [1.0, -1.0])
                A.add(np.full(3, N + 2), np.arange(N, N + 3), g.C2[N] * self.s_far2)
            else:
                A.add([N + 1], [N + 1], [1.0])
                wN = dt / g.Dnode[N]
                for t in range(3):
                    A.add([N + 1], [N + t], [-dt * sdot * g.C1[N, t]])
                for t in range(4):
                    A.add([N + 1], [N - 1 + t], [-wN * mf[N - 1] * g.C3[N - 1, t]])
                A.add([N + 1, N + 1], [N, N + 1], [-wN * D3[N - 1] * dLm[N - 1],
                                                   -wN * D3[N - 1] * dRm[N - 1]])
                A.add([N + 2, N + 2], [M - 1, M - 3], [1.0, -1.0])
            b = np.zeros(M)
            b[rows] = -dt * conv[i]
            if self.cfg.far_field == "wall":
                b[N + 1] = -dt * conv[N]
            c = np.zeros(M)
            c[1:4] = g.S * self.s_slope
        return F, A, b, c, noise

    def _c3_magnitude(self, v):
        """Sum of |term| of each face third difference (cancellation scale)."""
        g = self.geo
        k = np.arange(self.N)
        return (np.abs(g.C3[:, 0] * v[k]) + np.abs(g.C3[:, 1] * v[k + 1])
                + np.abs(g.C3[:, 2] * v[k + 2]) + np.abs(g.C3[:, 3] * v[k + 3]))

    def _c2_magnitude(self, v, i):
        g = self.geo
        return float(np.abs(g.C2[i]) @ np.abs(v[i:i + 3]))

    def _converged(self, F, noise):
        return bool(np.all(np.abs(F) <= self.cfg.newton_tol + 16.0 * noise))

    def _newton_moving(self, h, sdot, dt):
        cfg = self.cfg
        v = self.geo.full_vector(h)
        s = sdot
        hold = h.copy()
        F, A, b, c, noise = self._assemble_moving(v, s, hold, dt)
        for _ in range(cfg.newton_max_iter):
            r = np.max(np.abs(F))
            if not np.isfinite(r):
                raise StepRejected("non-finite residual")
            if self._converged(F, noise):
                out = v[1:-1].copy()
                out[0] = 0.0                        # Dirichlet contact row, exact
                return out, s, r
            try:
                zw = A.solve(np.stack([-F[:-1], b], axis=1))
            except Exception as exc:               # singular banded factor
                raise StepRejected(f"linear solve failed: {exc}")
            z, w = zw[:, 0], zw[:, 1]
            den = -float(c @ w)
            if den == 0.0 or not np.isfinite(den):
                raise StepRejected("bordered system is singular")
            ds = -(F[-1] + float(c @ z)) / den
            dv = z - ds * w
            if not (np.all(np.isfinite(dv)) and np.isfinite(ds)):
                raise StepRejected("non-finite Newton direction")
            lam = 1.0
            accepted = False
            for _ in range(14):
                v2 = v + lam * dv
                s2 = s + lam * ds
                F2, A2, b2, c2, noise2 = self._assemble_moving(v2, s2, hold, dt)
                r2 = np.max(np.abs(F2))
                if np.isfinite(r2) and (r2 < r or lam <= 1e-3):
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                raise StepRejected("line search found no finite residual")
            v, s, F, A, b, c, noise = v2, s2, F2, A2, b2, c2, noise2
        r = np.max(np.abs(F))
        if self._converged(F, noise):
            out = v[1:-1].copy()
            out[0] = 0.0
            return out, s, r
        raise StepRejected(f"Newton stalled at residual {r:.3e}")

    # -- fixed frame ---------------------------------------------------------
    def _assemble_fixed(self, v, hold, dt):
        g, N, M = self.geo, self.N, self.M
        h = v[1:-1]
        with np.errstate(over="ignore", invalid="ignore"):
            D3 = g.d3_faces(v)
            mnode, dmn = self._mob(h)
            mf, dLm, dRm = _face_mobility(mnode, dmn, self.cfg.mobility_face_average)
            Q = mf * D3
            Qp = np.concatenate([[0.0], Q, [0.0]])    # zero flux through both ends
            F = np.empty(M)
            F[0] = v[2] - v[0]
            F[1:N + 2] = (h - hold) + dt * (Qp[1:] - Qp[:-1]) / g.Dnode
            F[M - 1] = v[-1] - v[-3]
            eps_m = np.finfo(float).eps
            T3 = self._c3_magnitude(v)
            T3p = np.concatenate([[0.0], mf * T3, [0.0]])
            noise = np.zeros(M)
            noise[1:N + 2] = eps_m * (np.abs(h) + dt * (T3p[1:] + T3p[:-1]) / g.Dnode)
            noise[0] = eps_m * (np.abs(v[2]) + np.abs(v[0]))
            noise[M - 1] = eps_m * (np.abs(v[-1]) + np.abs(v[-3]))
            A = _BandedMatrix(M, 2, 2)
            A.add([0, 0], [0, 2], [-1.0, 1.0])
            A.add([M - 1, M - 1], [M - 1, M - 3], [1.0, -1.0])
            i = np.arange(N + 1)
            rows = i + 1
            A.add(rows, i + 1, np.ones(N + 1))
            wgt = dt / g.Dnode
            kup = np.arange(N)                         # face k contributes +into node k,
            for t in range(4):                         # -into node k+1
                A.add(kup + 1, kup + t, wgt[kup] * mf * g.C3[:, t])
                A.add(kup + 2, kup + t, -wgt[kup + 1] * mf * g.C3[:, t])
            A.add(kup + 1, kup + 1, wgt[kup] * D3 * dLm)
            A.add(kup + 1, kup + 2, wgt[kup] * D3 * dRm)
            A.add(kup + 2, kup + 1, -wgt[kup + 1] * D3 * dLm)
            A.add(kup + 2, kup + 2, -wgt[kup + 1] * D3 * dRm)
        return F, A, noise

    def _newton_fixed(self, h, dt):
        cfg = self.cfg
        v = self.geo.full_vector(h)
        v[0] = v[2]
        v[-1] = v[-3]
        hold = h.copy()
        F, A, noise = self._assemble_fixed(v, hold, dt)
        for _ in range(cfg.newton_max_iter):
            r = np.max(np.abs(F))
            if not np.isfinite(r):
                raise StepRejected("non-finite residual")
            if self._converged(F, noise):
                return v[1:-1], r
            try:
                dv = A.solve(-F)
            except Exception as exc:
                raise StepRejected(f"linear solve failed: {exc}")
            if not np.all(np.isfinite(dv)):
                raise StepRejected("non-finite Newton direction")
            lam = 1.0
            accepted = False
            for _ in range(14):
                v2 = v + lam * dv
                F2, A2, noise2 = self._assemble_fixed(v2, hold, dt)
                r2 = np.max(np.abs(F2))
                if np.isfinite(r2) and (r2 < r or lam <= 1e-3):
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                raise StepRejected("line search found no finite residual")
            v, F, A, noise = v2, F2, A2, noise2
        r = np.max(np.abs(F))
        if self._converged(F, noise):
            return v[1:-1], r
        raise StepRejected(f"Newton stalled at residual {r:.3e}")

    # -- integrals -----------------------------------------------------------
    def mass(self, h):
        return float(np.sum(self.geo.Dnode * h))

    def energy(self, h):
        g = self.geo
        Dh = np.diff(h) / g.dfp
        supp = (h[:-1] > _SUPPORT_THRESHOLD) | (h[1:] > _SUPPORT_THRESHOLD)
        return (0.5 * float(np.sum(g.dfp * Dh ** 2))
                + 0.5 * self.p.theta ** 2 * float(np.sum(g.dfp[supp])))

    def dissipation(self, h):
        """int m(h) h_xxx^2 over the interior faces.

        The two boundary faces belong to the boundary-condition rows (the
        contact flux vanishes by construction, the far-field flux is reported
        separately), so only faces built purely from physical nodes count.
        """
        v = self.geo.full_vector(h)
        mnode, _ = self._mob(h)
        mf, _, _ = _face_mobility(mnode, mnode, self.cfg.mobility_face_average)
        contrib = self.geo.dfp * mf * self.geo.d3_faces(v) ** 2
        return float(np.sum(contrib[1:-1]))

    def contact_face_slope_sq(self, h):
        return float(((h[1] - h[0]) / self.geo.dfp[0]) ** 2)


# ---------------------------------------------------------------------------
# public operations

def _enforce_positivity(h, h_old):
    """Reject meaningful negativity; zero out sub-rounding undershoot."""
    lowest = float(np.min(h))
    if lowest >= 0.0:
        return h
    tol = _POSITIVITY_REL_TOL * (1.0 + float(np.max(np.abs(h_old))))
    if lowest < -tol:
        raise StepRejected(f"negativity after convergence: min h = {lowest:.3e}")
    return np.maximum(h, 0.0)


def level_set_position(xi, h, threshold):
    """Leftmost interpolated crossing of h = threshold (contact tracking)."""
    above = h >= threshold
    if not above.any():
        return float(xi[-1])
    k = int(np.argmax(above))
    if k == 0:
        return float(xi[0])
    x0, x1 = xi[k - 1], xi[k]
    h0, h1 = h[k - 1], h[k]
    return float(x0 + (threshold - h0) / (h1 - h0) * (x1 - x0))


def _diagnostics(scheme: _Scheme, h, sdot, prev_energy, dt):
    E = scheme.energy(h)
    D = scheme.dissipation(h)
    if prev_energy is None or dt == 0.0:
        resid = 0.0
    else:
        corr = 0.5 * sdot * scheme.contact_face_slope_sq(h) if scheme.cfg.frame == "moving" else 0.0
        resid = (E - prev_energy) / dt + D - corr
    if scheme.cfg.frame == "moving" and scheme.cfg.far_field != "wall":
        far = float(scheme.fluxes(scheme.ghosted(h))[-1])
    else:
        far = 0.0                       # zero-flux boundary face by construction
    return Diagnostics(energy=E, dissipation=D, mass=scheme.mass(h),
                       energy_residual=resid, farfield_flux=far)


def step(state: State, cfg: SolverConfig, dt: float):
    """One backward-Euler step; raises StepRejected when dt must shrink.

    Returns the new state and its diagnostics. The moving frame advances
    s by the implicitly solved sdot; the fixed frame tracks s by level set
    with the threshold stashed in the state by simulate (or half the first
    positive cell height as a fallback).
    """
    if not (cfg.dt_min <= dt <= cfg.dt_max):
        raise DomainError(f"dt={dt} outside [{cfg.dt_min}, {cfg.dt_max}]")
    scheme = _Scheme(cfg)
    return _step_with_scheme(scheme, state, dt, prev_energy=None)


def _fixed_threshold(h):
    jumps = np.abs(np.diff(h))
    top = float(jumps.max()) if jumps.size else 0.0
    return 0.5 * top if top > 0.0 else _SUPPORT_THRESHOLD


def _step_with_scheme(scheme: _Scheme, state: State, dt: float, prev_energy=None,
                      threshold=None):
    cfg = scheme.cfg
    if cfg.frame == "moving":
        h, sdot, _ = scheme._newton_moving(state.h, state.sdot_last, dt)
        h = _enforce_positivity(h, state.h)
        new = State(h=h, s=state.s + sdot * dt, t=state.t + dt, sdot_last=sdot,
                    grid=state.grid)
    else:
        h, _ = scheme._newton_fixed(state.h, dt)
        h = _enforce_positivity(h, state.h)
        thr = threshold if threshold is not None else _fixed_threshold(state.h)
        s = level_set_position(state.grid.xi, h, thr)
        sdot = (s - state.s) / dt
        new = State(h=h, s=s, t=state.t + dt, sdot_last=sdot, grid=state.grid)
    diag = _diagnostics(scheme, h, sdot, prev_energy, dt)
    return new, diag


def simulate(cfg: SolverConfig, t_end: float, h0: np.ndarray | None = None) -> Trajectory:
    """Adaptive backward-Euler driver around step().

    dt halves on rejection and grows by 1.2 after five consecutive accepts,
    clamped to [dt_min, dt_max]. A dt underflow raises SolverFailure carrying
    the partial trajectory.
    """
    scheme = _Scheme(cfg)
    if h0 is None:
        h0 = initial_profile(cfg)
    h0 = np.asarray(h0, dtype=float)
    state = State(h=h0, s=0.0, t=0.0, sdot_last=0.0, grid=cfg.grid)
    threshold = _fixed_threshold(h0) if cfg.frame == "fixed" else None
    if cfg.frame == "fixed":
        state.s = level_set_position(cfg.grid.xi, h0, threshold)
    diag0 = _diagnostics(scheme, h0, 0.0, None, 0.0)
    times, poss, spds = [0.0], [state.s], [0.0]
    diags = [diag0]
    states = [(0, state)]
    dt = cfg.dt0
    accepts = 0
    k = 0
    while state.t < t_end - 1e-15:
        dtc = min(dt, t_end - state.t)
        try:
            state_new, diag = _step_with_scheme(scheme, state, dtc,
                                                prev_energy=diags[-1].energy,
                                                threshold=threshold)
        except StepRejected:
            dt *= 0.5
            accepts = 0
            if dt < cfg.dt_min:
                traj = _build_trajectory(times, poss, spds, diags, states, cfg,
                                         status=f"failed: dt underflow at t={state.t:.6g}")
                raise SolverFailure(f"dt underflow at t={state.t:.6g}", trajectory=traj)
            continue
        state = state_new
        k += 1
        times.append(state.t)
        poss.append(state.s)
        spds.append(state.sdot_last)
        diags.append(diag)
        if k % cfg.snapshot_every == 0:
            states.append((k, state))
        accepts += 1
        if accepts >= 5:
            dt = min(dt * 1.2, cfg.dt_max)
            accepts = 0
    if states[-1][0] != k:
        states.append((k, state))
    traj = _build_trajectory(times, poss, spds, diags, states, cfg)
    if cfg.expected_motion:
        s = traj.positions
        slack = 1e-3 * (np.max(np.abs(s)) + cfg.grid.dxi)
        sign = 1.0 if cfg.expected_motion == "receding" else -1.0
        if np.any(sign * np.diff(s) < -slack):
            traj.status = f"completed: monotonicity violated ({cfg.expected_motion})"
    return traj


def _build_trajectory(times, poss, spds, diags, states, cfg, status="completed"):
    return Trajectory(times=np.asarray(times), positions=np.asarray(poss),
                      speeds=np.asarray(spds), diagnostics=diags, states=states,
                      config=cfg, status=status)


def energy(state: State, p: SlipParameters) -> float:
    """Surface energy 0.5 * int (h_xi^2 + theta^2) over the support."""
    scheme = _Scheme(SolverConfig(p=p, grid=state.grid))
    return scheme.energy(state.h)


def dissipation(state: State, p: SlipParameters) -> float:
    """Viscous dissipation int m(h) h_xxx^2 with the scheme's face stencils."""
    scheme = _Scheme(SolverConfig(p=p, grid=state.grid))
    return scheme.dissipation(state.h)


@dataclass
class EnergyBalanceReport:
    residuals: np.ndarray
    max_abs: float
    mean_abs: float


def check_energy_balance(traj: Trajectory) -> EnergyBalanceReport:
    """Per-interval residual of the discrete energy identity.

    residual_k = (F_k - F_{k-1})/dt + D_k - sdot_k/2 * h_xi^2 at the
    contact-adjacent face (the moving-frame boundary correction).
    """
    if len(traj.diagnostics) < 2:
        raise DomainError("need at least two states to check the energy balance")
    res = np.array([d.energy_residual for d in traj.diagnostics[1:]])
    return EnergyBalanceReport(residuals=res, max_abs=float(np.max(np.abs(res))),
                               mean_abs=float(np.mean(np.abs(res))))


def extract_contact_speed(traj: Trajectory, window=None):
    """Least-squares linear fit of s(t); returns (sdot_fit, stderr).

    window = (t_lo, t_hi); by default the first 20% of the run is discarded
    as profile relaxation.
    """
    t, s = traj.times, traj.positions
    if window is None:
        window = (t[0] + 0.2 * (t[-1] - t[0]), t[-1])
    m = (t >= window[0]) & (t <= window[1])
    if int(m.sum()) < 8:
        raise DomainError(f"speed fit needs >= 8 samples in the window, got {int(m.sum())}")
    A = np.stack([t[m], np.ones(int(m.sum()))], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, s[m], rcond=None)
    dof = max(int(m.sum()) - 2, 1)
    rss = float(res[0]) if res.size else float(np.sum((A @ coef - s[m]) ** 2))
    cov = rss / dof * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


def measure_outer_slope(state: State, window=None, p: SlipParameters | None = None) -> float:
    """Outer wedge slope: least-squares slope of h through the origin on [a, b].

    Defaults: a = 10 sqrt(eps) max(1, theta), b = min(0.1 L, 1), which requires
    p; pass an explicit window otherwise.
    """
    xi, h = state.grid.xi, state.h
    if window is None:
        if p is None:
            raise DomainError("default window needs the slip parameters")
        a = 10.0 * math.sqrt(p.epsilon) * max(1.0, p.theta)
        b = min(0.1 * state.grid.L, 1.0)
        window = (a, b)
    a, b = window
    m = (xi >= a) & (xi <= b)
    if not m.any() or a >= b:
        raise DomainError(f"slope window [{a}, {b}] contains no grid nodes")
    return float(np.sum(h[m] * xi[m]) / np.sum(xi[m] ** 2))
