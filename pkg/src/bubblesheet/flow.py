"""Renormalized bubble-sheet profile evolution and model-surface geometry.

The profile u(y, theta, tau) describes the renormalized hypersurface as the
graph (y, (sqrt 2 + u)(cos theta, sin theta)) over R^2 x S^1(sqrt 2).  It is
evolved on the whole Gaussian space with the spectral operators from
:mod:`bubblesheet.gauss_space`: the Ornstein-Uhlenbeck part implicitly
(diagonal in modal space), the nonlinear remainder explicitly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gauss_space import (GridFunction, QuadratureGrid, apply_OU, cutoff, cutoff_truncate,
                          inner_product, smoothstep, spectral_basis, spectral_coefficients)

SQRT2 = math.sqrt(2.0)
SQRT8 = math.sqrt(8.0)
MIN_RADIUS = 1e-3


class DegenerateProfile(ValueError):
    """sqrt 2 + u is too close to zero for the graph to make sense."""


class CFLViolation(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    beta: float = 5e-4
    L: float | None = None  # defaults to 1/beta^2
    dtau: float = 1e-3
    gamma: float = 0.5  # truncation radius |tau + 2 log Zhat|^gamma for alpha
    Zhat: float = 1.0
    tau_star: float = -1.0
    tau_s: float | None = None  # switch time; None means no switch before tau_star
    recenter: bool = False  # remove the unstable modes of L after every step
    trust_radius: float = 6.0  # |y| range for pointwise checks and sup norms
    active_radius: float = 7.0  # nonlinear terms act on |y| <= R, fade out by 1.5 R
    cfl_limit: float = 1.0

    def __post_init__(self):
        if not 0 < self.beta <= 1e-3:
            raise ValueError(f"beta must lie in (0, 1e-3], got {self.beta}")
        if self.L is None:
            object.__setattr__(self, "L", 1.0 / self.beta**2)
        if self.L < 1.0 / self.beta**2 * (1 - 1e-12):
            raise ValueError(f"L={self.L} must be at least 1/beta^2={1 / self.beta**2:g}")
        if not self.dtau > 0:
            raise ValueError("dtau must be positive")
        if not self.Zhat > 0:
            raise ValueError("Zhat must be positive")

    @property
    def log_shift(self) -> float:
        return 2 * math.log(self.Zhat)


@dataclass(frozen=True)
class ProfileState:
    tau: float
    u: GridFunction


def _derivatives(u: GridFunction) -> dict:
    g, v = u.grid, u.values
    d = {}
    d["1"] = g.diff(v, 0)
    d["2"] = g.diff(v, 1)
    d["11"] = g.diff(v, 0, 2)
    d["22"] = g.diff(v, 1, 2)
    d["12"] = g.diff(d["1"], 1)
    if g.resolves_angles:
        d["t"] = g.diff(v, 2)
        d["tt"] = g.diff(v, 2, 2)
        d["1t"] = g.diff(d["1"], 2)
        d["2t"] = g.diff(d["2"], 2)
    else:
        z = np.zeros_like(v)
        d["t"] = d["tt"] = d["1t"] = d["2t"] = z
    return d


def _check_radius(u: GridFunction, mask=None):
    vals = u.values if mask is None else u.values[mask > 0]
    m = float(np.min(SQRT2 + vals)) if vals.size else math.inf
    if m <= MIN_RADIUS:
        raise DegenerateProfile(f"sqrt(2) + u reaches {m:.3e} <= {MIN_RADIUS}")


def active_mask(grid: QuadratureGrid, radius: float | None) -> np.ndarray | None:
    """Smooth weight equal to 1 on |y| <= radius and 0 beyond 1.5 radius."""
    if radius is None:
        return None
    Y1, Y2, _ = grid.mesh
    return cutoff(np.hypot(Y1, Y2), radius, 1.5 * radius)


def nonlinear_terms(u: GridFunction, d: dict | None = None) -> np.ndarray:
    """Everything in the profile equation except L u, as nodal values."""
    _check_radius(u)
    d = _derivatives(u) if d is None else d
    v = u.values
    rho = 1.0 / (SQRT2 + v)
    u1, u2, ut = d["1"], d["2"], d["t"]
    ang = rho * v - 0.5 * rho**2 * v**2
    P = (u1 * u1 * d["11"] + 2 * u1 * u2 * d["12"] + u2 * u2 * d["22"]
         + rho**4 * ut**2 * d["tt"] + 2 * rho**2 * ut * (u1 * d["1t"] + u2 * d["2t"]) + rho**3 * ut**2)
    Q = 1 + u1**2 + u2**2 + 0.5 * ut**2 - ut**2 * ang
    return -0.5 * rho * v**2 - ang * d["tt"] - P / Q


def rhs_profile(u: GridFunction) -> GridFunction:
    """Time derivative of the profile under renormalized mean curvature flow."""
    return apply_OU(u) + GridFunction(nonlinear_terms(u), u.grid)


def slope_rhs_expansion(u: GridFunction) -> GridFunction:
    """L' u1 + E u1 + F u1: the evolution of u1 = d u/d y1 written as a linear operator in u1.

    Agrees with d/dy1 of :func:`rhs_profile` up to discretization error.
    """
    g = u.grid
    d = _derivatives(u)
    v = u.values
    rho = 1.0 / (SQRT2 + v)
    u1, u2, ut, utt = d["1"], d["2"], d["t"], d["tt"]
    grads = (u1, u2)
    hess = {(0, 0): d["11"], (0, 1): d["12"], (1, 0): d["12"], (1, 1): d["22"]}
    mixed = (d["1t"], d["2t"])
    P = (sum(grads[i] * grads[j] * hess[i, j] for i in range(2) for j in range(2))
         + rho**4 * ut**2 * utt + 2 * rho**2 * ut * (u1 * d["1t"] + u2 * d["2t"]) + rho**3 * ut**2)
    Q = 1 + u1**2 + u2**2 + 0.5 * ut**2 - ut**2 * (rho * v - 0.5 * rho**2 * v**2)

    w = u1
    wd = _derivatives(GridFunction(w, g))
    w_i = (wd["1"], wd["2"])
    w_ij = {(0, 0): wd["11"], (0, 1): wd["12"], (1, 0): wd["12"], (1, 1): wd["22"]}
    w_it = (wd["1t"], wd["2t"])

    E = np.zeros_like(v)
    for i in range(2):
        for j in range(2):
            E -= grads[i] * grads[j] / Q * w_ij[i, j]
        E -= 2 * rho**2 * grads[i] * ut / Q * w_it[i]
        Ei = (2 * sum(grads[j] * hess[i, j] for j in range(2)) + 2 * rho**2 * ut * mixed[i]) / Q \
            - 2 * P * grads[i] / Q**2
        E -= Ei * w_i[i]
    Ett = rho * v - 0.5 * rho**2 * v**2 + rho**4 * ut**2 / Q
    Et = (2 * rho**4 * ut * utt + 2 * rho**2 * (u1 * mixed[0] + u2 * mixed[1]) + 2 * rho**3 * ut) / Q \
        - 2 * rho**2 * P * ut / Q**2
    E -= Ett * wd["tt"] + Et * wd["t"]
    F = (-rho * v + 0.5 * rho**2 * v**2 - 2 * rho**3 * utt
         + (4 * rho**5 * ut**2 * utt + 4 * rho**3 * ut * (u1 * mixed[0] + u2 * mixed[1]) + 3 * rho**4 * ut**2) / Q
         - 2 * rho**3 * P * ut**2 / Q**2)
    Lw = apply_OU(GridFunction(w, g), shifted=True)
    return Lw + GridFunction(E + F * w, g)


def cfl_number(u: GridFunction, dtau: float, mask=None) -> float:
    """dtau times a bound on the explicit second-order coefficients times the resolved wavenumber."""
    g = u.grid
    d = _derivatives(u)
    v = u.values
    keep = np.ones(v.shape, dtype=bool) if mask is None else mask > 0
    rho = 1.0 / (SQRT2 + v[keep])
    coef_y = np.max(d["1"][keep] ** 2 + d["2"][keep] ** 2)
    coef_t = np.max(np.abs(rho * v[keep] - 0.5 * rho**2 * v[keep] ** 2) + rho**4 * d["t"][keep] ** 2)
    k_y = max(g.n1, g.n2)  # spectral radius of d^2/dy^2 on the Hermite modes
    k_t = (g.n_theta // 2) ** 2 if g.resolves_angles else 0
    return float(dtau * (coef_y * k_y + coef_t * k_t))


def _remove_unstable(u: GridFunction) -> GridFunction:
    return u - spectral_basis(u.grid, "L").project(u, "unstable")


def step_profile(state: ProfileState, params: FlowParams, dtau: float | None = None) -> ProfileState:
    """One IMEX Euler step: (I - dtau L) u_new = u + dtau N(u)."""
    dtau = params.dtau if dtau is None else dtau
    u = state.u
    g = u.grid
    mask = active_mask(g, params.active_radius)
    c = cfl_number(u, dtau, mask)
    if c > params.cfl_limit:
        raise CFLViolation(f"CFL number {c:.3g} exceeds {params.cfl_limit} at tau={state.tau:.6g}")
    _check_radius(u, mask)
    d = _derivatives(u)
    if mask is None:
        N = nonlinear_terms(u, d)
    else:
        # outside the active domain the nodal values are not trustworthy; evaluate
        # the nonlinearity on a clipped copy and let only the linear flow act there
        safe = GridFunction(np.where(mask > 0, u.values, 0.0), g)
        d = {k: np.where(mask > 0, q, 0.0) for k, q in d.items()}
        N = mask * nonlinear_terms(safe, d)
    explicit = u.values + dtau * N
    new = g.apply_symbol(explicit, 1.0 / (1.0 - dtau * g.ou_symbol))
    un = GridFunction(new, g)
    if params.recenter:
        un = _remove_unstable(un)
    _check_radius(un, mask)
    return ProfileState(state.tau + dtau, un)


# -- observables -------------------------------------------------------------------

def _lambda_switch(zeta):
    """sqrt 8 for zeta <= 3/2, 1 for zeta >= 2, smooth and monotone in between."""
    return SQRT8 + (1.0 - SQRT8) * smoothstep((np.asarray(zeta) - 1.5) / 0.5)


def localization_radius(tau: float, params: FlowParams) -> float:
    s = tau + params.log_shift
    no_switch = params.tau_s is None or params.tau_s >= params.tau_star - params.log_shift
    if no_switch:
        return abs(s) ** 0.5
    zeta = s / (params.tau_s + params.log_shift)
    return float(_lambda_switch(zeta)) * abs(s) ** 0.5


def eta_cutoff(z):
    """1 for z <= 7/5, 0 for z >= 141/100."""
    return 1.0 - smoothstep((np.asarray(z, dtype=float) - 1.4) / 0.01)


@dataclass
class SpectralReport:
    tau: float
    alpha: np.ndarray
    W_plus: float
    W_zero: float
    W_minus: float
    a_plus: float
    omega: float
    rho: float

    def row(self):
        return [self.tau, *self.alpha[:3], self.W_plus, self.W_zero, self.W_minus, self.a_plus, self.omega]


OBSERVABLE_HEADER = ["tau", "alpha1", "alpha2", "alpha3", "Wplus", "W0", "Wminus", "aplus", "omega"]


def localized_slope(state: ProfileState, params: FlowParams) -> GridFunction:
    u = state.u
    Y1, Y2, _ = u.grid.mesh
    rho = localization_radius(state.tau, params)
    return GridFunction(eta_cutoff(np.hypot(Y1, Y2) / rho) * u.diff(0).values, u.grid)


class ObservableTracker:
    """Computes spectral observables and keeps the running sup omega of |u1|."""

    def __init__(self, params: FlowParams):
        self.params = params
        self.omega = 0.0

    def update_omega(self, state: ProfileState):
        p = self.params
        if p.tau_s is not None and state.tau > p.tau_s:
            return
        Y1, Y2, _ = state.u.grid.mesh
        r = np.hypot(Y1, Y2)
        radius = min(1.41 * abs(state.tau + p.log_shift), p.trust_radius)
        inside = r <= radius
        if np.any(inside):
            self.omega = max(self.omega, float(np.max(np.abs(state.u.diff(0).values[inside]))))

    def __call__(self, state: ProfileState) -> SpectralReport:
        return track_observables(state, self.params, self)


def track_observables(state: ProfileState, params: FlowParams,
                      tracker: ObservableTracker | None = None) -> SpectralReport:
    u = state.u
    radius = abs(state.tau + params.log_shift) ** params.gamma
    alpha = spectral_coefficients(cutoff_truncate(u, radius))
    w = localized_slope(state, params)
    basis = spectral_basis(u.grid, "Lprime")
    Wp = basis.project(w, "unstable").norm() ** 2
    W0 = basis.project(w, "neutral").norm() ** 2
    Wm = basis.project(w, "stable").norm() ** 2
    a_plus = inner_product(w, u.grid.constant(1.0))
    if tracker is None:
        tracker = ObservableTracker(params)
    tracker.update_omega(state)
    return SpectralReport(state.tau, alpha, Wp, W0, Wm, a_plus, tracker.omega,
                          localization_radius(state.tau, params))


@dataclass
class FlowRun:
    final: ProfileState
    reports: list = field(default_factory=list)

    def to_csv(self, path) -> int:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(OBSERVABLE_HEADER)
            for r in self.reports:
                w.writerow([f"{q:.17g}" for q in r.row()])
        return len(self.reports)

    def series(self, name: str) -> np.ndarray:
        i = OBSERVABLE_HEADER.index(name)
        return np.array([r.row()[i] for r in self.reports])


def run_flow(state: ProfileState, params: FlowParams, tau_end: float, record_every: int = 10,
             dtau: float | None = None) -> FlowRun:
    """Step from ``state.tau`` to ``tau_end`` recording observables every ``record_every`` steps."""
    dtau = params.dtau if dtau is None else dtau
    n = int(round((tau_end - state.tau) / dtau))
    if n < 0:
        raise ValueError("tau_end must not precede the initial time")
    tracker = ObservableTracker(params)
    reports = [tracker(state)]
    tau0 = state.tau
    for k in range(1, n + 1):
        state = step_profile(state, params, dtau)
        # pin the clock to avoid drift from repeated addition
        state = replace(state, tau=tau0 + k * dtau)
        if k % record_every == 0 or k == n:
            reports.append(tracker(state))
        else:
            tracker.update_omega(state)
    return FlowRun(state, reports)


def dh_asymp_profile(grid: QuadratureGrid, tau: float) -> GridFunction:
    """(2 - y2^2) / (sqrt 8 |tau|)."""
    return grid.sample(lambda y1, y2, t: (2 - y2**2) / (SQRT8 * abs(tau)) + 0 * y1)


def growth_rate(u0: GridFunction, params: FlowParams, span: float, dtau: float | None = None) -> float:
    """Fitted exponential growth rate of the Gaussian norm over ``span``."""
    run = run_flow(ProfileState(-1e6, u0), replace(params, recenter=False), -1e6 + span,
                   record_every=10**9, dtau=dtau)
    return math.log(run.final.u.norm() / u0.norm()) / span


# -- model surfaces ----------------------------------------------------------------

@dataclass(frozen=True)
class ModelSurface:
    """Exact shrinking cylinder R^2 x S^1(sqrt(-2t)) or a self-similar graph over it.

    For ``kind="graph"``, ``u(y1, y2, theta, t)`` gives the renormalized
    profile and the surface is sqrt(-t) (y1, y2, (sqrt 2 + u) cos, (sqrt 2 + u) sin).
    Points are addressed by renormalized parameters (y1, y2, theta).
    """

    kind: str = "cylinder"
    u: object = None

    def __post_init__(self):
        if self.kind not in ("cylinder", "graph"):
            raise ValueError(f"unknown model surface kind {self.kind!r}")
        if self.kind == "graph" and self.u is None:
            raise ValueError("graph surfaces need a profile function u")

    def profile(self, y1, y2, theta, t):
        if self.kind == "cylinder":
            return 0.0 * np.asarray(y1, dtype=float)
        return self.u(y1, y2, theta, t)

    def position(self, q, t):
        y1, y2, th = q
        if t >= 0:
            raise ValueError("model surfaces exist for t < 0")
        r = SQRT2 + self.profile(y1, y2, th, t)
        if np.any(np.asarray(r) <= 0):
            raise ValueError("point outside the graph domain")
        s = math.sqrt(-t)
        return s * np.array([y1, y2, r * np.cos(th), r * np.sin(th)], dtype=float)


@dataclass
class Geometry:
    nu: np.ndarray
    H: float
    A2: float
    lap_x: np.ndarray
    metric: np.ndarray = None
    second: np.ndarray = None

    @property
    def nu1(self) -> float:
        return float(self.nu[0])


def _unit_normal(T):
    """Unit vector orthogonal to the three rows of T (generalized cross product)."""
    n = np.array([(-1) ** k * np.linalg.det(np.delete(T, k, axis=1)) for k in range(4)])
    return n / np.linalg.norm(n)


def surface_geometry(m: ModelSurface, q, t: float, h: float = 1e-3) -> Geometry:
    """Outward normal, mean curvature, |A|^2 and Laplacian of the coordinates at parameter q."""
    y1, y2, th = map(float, q)
    if m.kind == "cylinder":
        r = math.sqrt(-2 * t)
        nu = np.array([0.0, 0.0, math.cos(th), math.sin(th)])
        H = 1.0 / r
        return Geometry(nu, H, 1.0 / r**2, -H * nu)
    X = lambda a, b, c: m.position((a, b, c), t)
    q0 = np.array([y1, y2, th])
    # 4th-order central differences in each parameter
    c1 = np.array([1, -8, 0, 8, -1]) / (12 * h)
    c2 = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    offs = np.arange(-2, 3)
    E = np.eye(3)
    T = np.zeros((3, 4))
    S = np.zeros((3, 3, 4))
    for a in range(3):
        pts = np.array([X(*(q0 + o * h * E[a])) for o in offs])
        T[a] = c1 @ pts
        S[a, a] = c2 @ pts
    for a in range(3):
        for b in range(a + 1, 3):
            acc = np.zeros(4)
            for i, oi in enumerate(offs):
                for j, oj in enumerate(offs):
                    if c1[i] == 0 or c1[j] == 0:
                        continue
                    acc += c1[i] * c1[j] * X(*(q0 + oi * h * E[a] + oj * h * E[b]))
            S[a, b] = S[b, a] = acc
    g = T @ T.T
    ginv = np.linalg.inv(g)
    nu = _unit_normal(T)
    if nu[2] * math.cos(th) + nu[3] * math.sin(th) < 0:
        nu = -nu
    A = -np.einsum("abk,k->ab", S, nu)
    H = float(np.sum(ginv * A))
    A2 = float(np.einsum("ac,bd,ab,cd->", ginv, ginv, A, A))
    lap = np.einsum("ab,abk->k", ginv, S)
    lap_normal = (lap @ nu) * nu  # tangential part cancels against Christoffel terms
    return Geometry(nu, H, A2, lap_normal, g, A)
