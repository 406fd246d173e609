"""Distance functions, Jacobi supersolutions and the half-line heat solution on model surfaces.

All heat-operator evaluations use renormalized variables.  For an ambient
function F(x, t) = G(y, s) with y = x/sqrt|t| and s = log|t|, and any surface
moving by mean curvature,

    |t| (d_t - Lap_M) F = (1/2) y . grad_y G - d_s G - tr_T D^2_y G,

where tr_T is the trace over the tangent space.  The normal velocity terms
cancel, so only the tangent plane and |A|^2 of the model surface enter.  This
keeps |t| = e^(1e5) and larger representable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .flow import ModelSurface, surface_geometry


# -- renormalized model-surface samples ---------------------------------------------

@dataclass
class SurfaceSample:
    """A point of a model surface in renormalized coordinates at time t = -e^s."""

    ybar: np.ndarray  # renormalized position x / sqrt|t|
    nu: np.ndarray
    A2bar: float  # |t| |A|^2
    s: float

    @property
    def tangent_projector(self) -> np.ndarray:
        return np.eye(4) - np.outer(self.nu, self.nu)


def renormalized_geometry(m: ModelSurface, q, s: float) -> SurfaceSample:
    """Geometry at parameter q = (y1, y2, theta) and time t = -e^s, rescaled to |t| = 1."""
    y1, y2, th = map(float, q)
    if m.kind == "cylinder":
        frozen = m
    else:
        t_true = -math.exp(s) if s < 700 else -math.inf
        frozen = ModelSurface("graph", lambda a, b, c, _t: m.u(a, b, c, t_true))
    g = surface_geometry(frozen, (y1, y2, th), -1.0)
    ybar = frozen.position((y1, y2, th), -1.0)
    return SurfaceSample(ybar, g.nu, g.A2, float(s))


# -- functions in renormalized variables --------------------------------------------

class RenormalizedFunction:
    """G(y, s) with analytic y-gradient, y-Hessian and s-derivative."""

    def value(self, y, s):
        raise NotImplementedError

    def grad(self, y, s):
        raise NotImplementedError

    def hess(self, y, s):
        raise NotImplementedError

    def ds(self, y, s):
        raise NotImplementedError

    def heat(self, p: SurfaceSample) -> float:
        """|t| (d_t - Lap) G at the sample."""
        y, s = p.ybar, p.s
        return float(0.5 * y @ self.grad(y, s) - self.ds(y, s) - np.sum(p.tangent_projector * self.hess(y, s)))

    def grad_T2(self, p: SurfaceSample) -> float:
        """|t| |grad_M G|^2 at the sample."""
        gT = p.tangent_projector @ self.grad(p.ybar, p.s)
        return float(gT @ gT)


@dataclass
class QuadraticDistance(RenormalizedFunction):
    """sum_i c_i y_i^2, i.e. sum_i c_i x_i^2/|t|."""

    c: np.ndarray

    def value(self, y, s):
        return float(np.sum(self.c * y * y))

    def grad(self, y, s):
        return 2 * self.c * y

    def hess(self, y, s):
        return np.diag(2 * self.c)

    def ds(self, y, s):
        return 0.0


class AnisoDistance(QuadraticDistance):
    """f_alpha = alpha x1^2/|t| + x2^2/((2 - beta)|t|)."""

    def __init__(self, alpha: float, beta: float):
        if not 0 < beta < 1e-3 * (1 + 1e-12) or not 0 < alpha <= beta**2 * (1 + 1e-12):
            raise ValueError(f"need 0 < alpha <= beta^2 and 0 < beta < 1e-3, got alpha={alpha}, beta={beta}")
        self.alpha, self.beta = alpha, beta
        super().__init__(np.array([alpha, 1.0 / (2 - beta), 0.0, 0.0]))

    def gradient_bound_factor(self) -> float:
        return (16 - 4 * self.beta) / (8 - 7 * self.beta)


def coordinate_square(i: int) -> QuadraticDistance:
    """f_i = x_i^2/|t|."""
    c = np.zeros(4)
    c[i] = 1.0
    return QuadraticDistance(c)


class LogForm(RenormalizedFunction):
    """F = exp(phi); subclasses give phi."""

    def jacobi_ratio(self, p: SurfaceSample) -> float:
        """|t| (d_t - Lap - |A|^2) e^phi / e^phi."""
        return self.heat(p) - self.grad_T2(p) - p.A2bar


@dataclass
class PsiB(LogForm):
    """Psi_b = exp(x1^2/(4|t|) - (log|t| - 2 log Zhat)^(2b))."""

    b: float = 2.0
    Zhat: float = 1.0

    def __post_init__(self):
        if not 2 <= self.b <= 7:
            raise ValueError(f"b must lie in [2, 7], got {self.b}")

    def _ell(self, s):
        return s - 2 * math.log(self.Zhat)

    def value(self, y, s):
        return y[0] ** 2 / 4 - self._ell(s) ** (2 * self.b)

    def grad(self, y, s):
        return np.array([y[0] / 2, 0.0, 0.0, 0.0])

    def hess(self, y, s):
        return np.diag([0.5, 0.0, 0.0, 0.0])

    def ds(self, y, s):
        return -2 * self.b * self._ell(s) ** (2 * self.b - 1)

    def in_region(self, y, s) -> bool:
        ell = self._ell(s)
        return ell > 0 and abs(y[0]) <= 2 * ell**self.b


@dataclass
class PhiDelta(LogForm):
    """Phi_delta = exp(delta^2 x1^2/|t| - 100 (log|t|)^2)."""

    delta: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")

    def value(self, y, s):
        return self.delta**2 * y[0] ** 2 - 100 * s * s

    def grad(self, y, s):
        return np.array([2 * self.delta**2 * y[0], 0.0, 0.0, 0.0])

    def hess(self, y, s):
        return np.diag([2 * self.delta**2, 0.0, 0.0, 0.0])

    def ds(self, y, s):
        return -200 * s

    def in_region(self, y, s) -> bool:
        return s > 0


@dataclass
class Zeta(LogForm):
    """zeta = exp(f_alpha / 4)."""

    dist: AnisoDistance

    def value(self, y, s):
        return self.dist.value(y, s) / 4

    def grad(self, y, s):
        return self.dist.grad(y, s) / 4

    def hess(self, y, s):
        return self.dist.hess(y, s) / 4

    def ds(self, y, s):
        return 0.0


# -- reports --------------------------------------------------------------------------

def _fmt_scaled(y: float, half_log: float) -> str:
    """Format y * exp(half_log) without overflow."""
    if y == 0:
        return "0"
    if half_log < 700:
        return f"{y * math.exp(half_log):.17g}"
    lg = math.log10(abs(y)) + half_log / math.log(10)
    e = math.floor(lg)
    mant = 10 ** (lg - e)
    return f"{'-' if y < 0 else ''}{mant:.15f}e+{e:d}"


def _fmt_time(s: float) -> str:
    return _fmt_scaled(-1.0, s)


@dataclass
class ResidualReport:
    name: str
    rows: list = field(default_factory=list)  # (ybar1, ybar2, s, residual)
    skipped: int = 0
    tol: float = 0.0
    strict: bool = False

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    @property
    def min_residual(self) -> float:
        return float(self.residuals.min()) if self.rows else math.nan

    def ok(self, value: float) -> bool:
        return value > self.tol if self.strict else value >= self.tol

    @property
    def verdict(self) -> str:
        if not self.rows:
            return "EMPTY"
        return "PASS" if all(self.ok(r[3]) for r in self.rows) else "FAIL"

    def summary(self) -> str:
        return f"{self.name},{len(self.rows)},{self.skipped},{self.min_residual:.6e},{self.verdict}"

    def to_csv(self, path) -> int:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "t", "residual", "verdict"])
            for y1, y2, s, res in self.rows:
                w.writerow([_fmt_scaled(y1, s / 2), _fmt_scaled(y2, s / 2), _fmt_time(s),
                            f"{res:.17g}", "PASS" if self.ok(res) else "FAIL"])
        return len(self.rows)


def _samples(m: ModelSurface, params, s_values):
    for q in params:
        for s in s_values:
            yield renormalized_geometry(m, q, s)


def check_aniso_evolution(m: ModelSurface, params, s_values, dist: QuadraticDistance,
                          tol: float = 1e-8):
    """Both distance inequalities at every sample, as |t|-scaled slacks.

    evolution slack: |t| (d_t - Lap) f - (f - 2)
    gradient slack:  factor * f - |t| |grad f|^2, factor = (16 - 4 beta)/(8 - 7 beta)
    PASS iff every slack >= -tol.
    """
    factor = dist.gradient_bound_factor() if isinstance(dist, AnisoDistance) else 4.0
    evo = ResidualReport("aniso_evolution", tol=-tol)
    grad = ResidualReport("aniso_gradient", tol=-tol)
    for p in _samples(m, params, s_values):
        f = dist.value(p.ybar, p.s)
        evo.rows.append((p.ybar[0], p.ybar[1], p.s, dist.heat(p) - (f - 2)))
        grad.rows.append((p.ybar[0], p.ybar[1], p.s, factor * f - dist.grad_T2(p)))
    return evo, grad


def check_jacobi_supersolution(kind: str, m: ModelSurface, params, s_values, b: float = 2.0,
                               delta: float = 0.1, Zhat: float = 1.0) -> ResidualReport:
    """|t| (d_t - Lap - |A|^2) F / F at samples inside the region; PASS iff all > 0."""
    if kind == "Psi_b":
        F = PsiB(b, Zhat)
    elif kind == "Phi_delta":
        F = PhiDelta(delta)
    else:
        raise ValueError(f"unknown supersolution kind {kind!r}")
    rep = ResidualReport(kind, tol=0.0, strict=True)
    for p in _samples(m, params, s_values):
        if not F.in_region(p.ybar, p.s):
            rep.skipped += 1
            continue
        rep.rows.append((p.ybar[0], p.ybar[1], p.s, F.jacobi_ratio(p)))
    return rep


def regularized_slope(nu1, zeta, eps: float | None = None):
    """(|nu1| - eps zeta)_+; eps defaults to 1e-8 times sup |nu1|."""
    nu1 = np.asarray(nu1, dtype=float)
    if eps is None:
        eps = 1e-8 * float(np.max(np.abs(nu1))) if nu1.size else 0.0
    return np.maximum(np.abs(nu1) - eps * np.asarray(zeta, dtype=float), 0.0)


def check_zeta_supersolution(m: ModelSurface, params, s_values, dist: AnisoDistance,
                             lower: float | None = None, Zhat: float = 1.0):
    """Supersolution property of zeta = e^(f_alpha/4) in {lower <= f_alpha <= log|t| - 2 log Zhat}.

    Returns two reports of |t|-scaled quantities at admissible samples:
    ``ratio`` = |t| (d_t - Lap - |A|^2) zeta / zeta and ``chain`` =
    f_alpha/10 - 2 - |t||A|^2, the lower bound that the distance lemma
    provides.  Samples violating |A|^2 <= 5/(beta |t|) are excluded and counted.
    """
    beta = dist.beta
    lower = 60.0 / beta if lower is None else lower
    z = Zeta(dist)
    ratio = ResidualReport("zeta_ratio", tol=0.0)
    chain = ResidualReport("zeta_chain", tol=0.0)
    flagged = 0
    for p in _samples(m, params, s_values):
        f = dist.value(p.ybar, p.s)
        if not lower <= f <= p.s - 2 * math.log(Zhat):
            ratio.skipped += 1
            continue
        if p.A2bar > 5.0 / beta:
            flagged += 1
            continue
        ratio.rows.append((p.ybar[0], p.ybar[1], p.s, z.jacobi_ratio(p)))
        chain.rows.append((p.ybar[0], p.ybar[1], p.s, f / 10 - 2 - p.A2bar))
    chain.skipped = ratio.skipped
    ratio.flagged = chain.flagged = flagged
    return ratio, chain


# -- half-line heat solution ----------------------------------------------------------

def dirichlet_heat(x, t):
    """psi = erf(x / (2 sqrt t)) with psi_x and psi_xx; psi(0, t) = 0 and psi(x, 0+) = 1."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("dirichlet_heat needs t > 0")
    if np.any(x < 0):
        raise ValueError("dirichlet_heat needs x >= 0")
    psi = erf(x / (2 * np.sqrt(t)))
    psi_x = np.exp(-x * x / (4 * t)) / np.sqrt(math.pi * t)
    psi_xx = -x / (2 * t) * psi_x
    return psi, psi_x, psi_xx


def heat_residual(x, t, rel_step: float = 1e-3):
    """psi_t - psi_xx with psi_t from a five-point difference in t."""
    t = np.asarray(t, dtype=float)
    h = rel_step * t
    ps = [dirichlet_heat(x, t + k * h)[0] for k in (-2, -1, 1, 2)]
    psi_t = (ps[0] - 8 * ps[1] + 8 * ps[2] - ps[3]) / (12 * h)
    return psi_t - dirichlet_heat(x, t)[2]
