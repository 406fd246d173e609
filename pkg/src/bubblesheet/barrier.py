"""Elliptically rotated shrinker barriers in R^4 and their inner-barrier test.

The surface with parameters (a1, a2, L) is

    { (lam r cos t, r sin t, y3, y4) : r >= L, (r - 1, y3, y4) on the shrinker of size a2 - 1 },

with lam = a1/a2.  On {y1 > 0} it is the graph y1 = lam f(y2, y3, y4) where
f(p, s) = sqrt(R(s)^2 - p^2), s = |(y3, y4)| and R = 1 + X with X the inverse
of the shrinker profile.  The inner-barrier condition is the pointwise
inequality

    Df-residual := lap f - f_ij f_i f_j / (1 + |Df|^2) + (f - y_i f_i)/2 >= 0,

which equals W <H + y_perp/2, N> with W = sqrt(1 + |Df|^2).  Derivatives of f
are exact chain-rule expressions in the profile data.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .shrinker import ShrinkerProfile, solve_shrinker


@dataclass
class BarrierSurface:
    a1: float
    a2: float
    L: float
    profile: ShrinkerProfile

    @property
    def lam(self) -> float:
        return self.a1 / self.a2

    def point(self, r, theta):
        """Embedding of the sample (r, theta) with (y3, y4) on the positive y3 axis."""
        r = np.asarray(r, dtype=float)
        s = self.profile.evaluate(r - 1)[0]
        return np.stack([self.lam * r * np.cos(theta), r * np.sin(theta), s, np.zeros_like(s)], axis=-1)

    def graph_data(self, r, theta, lam: float | None = None):
        """f and its first and second derivatives in (p, s) at samples (r, theta).

        Returns a dict with p, s, f, fp, fs, fpp, fss, fps, scaled by ``lam``
        (default a1/a2).
        """
        lam = self.lam if lam is None else lam
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        v, vp, vpp = self.profile.evaluate(r - 1)
        # derivatives of R(s) = 1 + X(s), X the inverse of v
        with np.errstate(divide="ignore", invalid="ignore"):
            Rp = 1.0 / vp
            Rpp = -vpp / vp**3
        R = r
        p = r * np.sin(theta)
        f = np.sqrt(R * R - p * p)
        fp = -p / f
        fs = R * Rp / f
        fpp = -1 / f - p * p / f**3
        fss = (Rp**2 + R * Rpp) / f - (R * Rp) ** 2 / f**3
        fps = p * R * Rp / f**3
        out = dict(p=p, s=v, f=f, fp=fp, fs=fs, fpp=fpp, fss=fss, fps=fps)
        for k in ("f", "fp", "fs", "fpp", "fss", "fps"):
            out[k] = lam * out[k]
        return out


def build_barrier(a1: float, a2: float, L: float, profile: ShrinkerProfile | None = None) -> BarrierSurface:
    """Barrier built from the shrinker of size a2 - 1 (solved unless ``profile`` is given)."""
    if not a1 >= a2:
        raise ValueError(f"need a1 >= a2, got a1={a1}, a2={a2}")
    if profile is None:
        profile = solve_shrinker(a2 - 1)
    if not 1 <= L < 1 + profile.a:
        raise ValueError(f"L={L} must lie in [1, {1 + profile.a})")
    return BarrierSurface(float(a1), float(a2), float(L), profile)


def barrier_residual(g: dict):
    """Left side of the inner-barrier inequality and the weight W = sqrt(1 + |Df|^2)."""
    p, s = g["p"], g["s"]
    fp, fs, fpp, fss, fps, f = g["fp"], g["fs"], g["fpp"], g["fss"], g["fps"], g["f"]
    grad2 = fp * fp + fs * fs
    lap = fpp + fss + fs / s
    quad = fpp * fp * fp + 2 * fps * fp * fs + fss * fs * fs
    res = lap - quad / (1 + grad2) + (f - p * fp - s * fs) / 2
    return res, np.sqrt(1 + grad2)


def hessian_max_eig(g: dict):
    """Largest eigenvalue of D^2 f in (y2, y3, y4); concavity means <= 0."""
    tang = g["fs"] / g["s"]
    tr = g["fpp"] + g["fss"]
    det = g["fpp"] * g["fss"] - g["fps"] ** 2
    top = 0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    return np.maximum(top, tang)


@dataclass
class BarrierReport:
    a1: float
    a2: float
    L: float
    lam: float
    r: np.ndarray
    theta: np.ndarray
    residual: np.ndarray  # raw left side
    normalized: np.ndarray  # residual / W
    tol: float
    coverage: dict = field(default_factory=dict)

    @property
    def min_residual(self) -> float:
        return float(self.normalized.min())

    @property
    def argmin(self) -> tuple[float, float]:
        i = np.unravel_index(np.argmin(self.normalized), self.normalized.shape)
        return float(self.r[i]), float(self.theta[i])

    @property
    def verdict(self) -> str:
        return "PASS" if self.min_residual >= -self.tol else "FAIL"

    def summary(self) -> str:
        return f"{self.a1:g},{self.a2:g},{self.L:g},{self.min_residual:.6e},{self.verdict}"

    def to_csv(self, path) -> int:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "theta", "residual"])
            for r, t, q in zip(self.r.ravel(), self.theta.ravel(), self.normalized.ravel()):
                w.writerow([f"{r:.17g}", f"{t:.17g}", f"{q:.17g}"])
        return self.r.size


def sample_grid(b: BarrierSurface, n_r: int = 200, n_theta: int = 61, collar: float = 0.1,
                theta_max: float = 1.5):
    """Product grid in (r, theta), clustered toward r = L + collar and the tip ring r = a2."""
    lo, hi = b.L + collar, b.a2
    t = np.linspace(0.0, 1.0, n_r + 1)[:-1]
    r = lo + (hi - lo) * 0.5 * (1 - np.cos(math.pi * t))
    r = np.append(r, hi - 1e-6 * (hi - lo))
    theta = np.linspace(-theta_max, theta_max, n_theta)
    R, T = np.meshgrid(r, theta, indexing="ij")
    coverage = {
        "r_fraction": (hi - lo) / (hi - b.L),
        "theta_fraction": theta_max / (math.pi / 2),
        "collar": collar,
    }
    return R, T, coverage


def verify_inner_barrier(b: BarrierSurface, n_r: int = 200, n_theta: int = 61, tol: float = 1e-6,
                         lam: float | None = None, collar: float = 0.1,
                         theta_max: float = 1.5) -> BarrierReport:
    """Evaluate the inner-barrier inequality on a sampled (r, theta) grid.

    The verdict compares residual / W against ``-tol``, W = sqrt(1 + |Df|^2)
    being the local scale of the graph.  Samples with non-finite derivatives
    are dropped and counted in the coverage record.
    """
    lam = b.lam if lam is None else lam
    R, T, coverage = sample_grid(b, n_r, n_theta, collar, theta_max)
    g = b.graph_data(R, T, lam)
    res, W = barrier_residual(g)
    ok = np.isfinite(res) & np.isfinite(W)
    coverage["excluded"] = int((~ok).sum())
    res = np.where(ok, res, np.inf)
    norm = np.where(ok, res / W, np.inf)
    return BarrierReport(b.a1, b.a2, b.L, lam, R, T, res, norm, tol, coverage)


def scaling_closure(b: BarrierSurface, lams=(1.0, 1.5, 3.0, 10.0), n_r: int = 120, n_theta: int = 41,
                    tol: float = 1e-6):
    """Check that lam f stays a barrier for each lam >= 1.

    Returns per-lam ``(min normalized residual, min of res(lam) - lam res(1), max Hessian eigenvalue)``;
    the second entry is >= 0 whenever f is concave.
    """
    R, T, _ = sample_grid(b, n_r, n_theta)
    base = b.graph_data(R, T, 1.0)
    res1, _ = barrier_residual(base)
    conc = float(np.nanmax(hessian_max_eig(base)))
    out = {}
    for lam in lams:
        res, W = barrier_residual(b.graph_data(R, T, lam))
        gain = res - lam * res1
        out[lam] = (float(np.nanmin(res / W)), float(np.nanmin(gain / (1 + abs(lam * res1)))), conc)
    return out


def surface_extent(b: BarrierSurface, n: int = 4001):
    """Sampled maxima of y1 and y2 over the surface."""
    r = np.linspace(b.L, b.a2, n)
    th = np.linspace(0, 2 * math.pi, 721)
    R, T = np.meshgrid(r, th, indexing="ij")
    return float(np.max(b.lam * R * np.cos(T))), float(np.max(R * np.sin(T)))


def ellipsoidal_lower_bound(tau: float, alpha: float, delta: float, Zhat: float = 1.0):
    """Return the evaluator (y1, y2) -> sqrt(2 - (1+delta)(alpha^2 y1^2 + y2^2)/|tau + 2 log Zhat|) - sqrt 2."""
    if not (alpha > 0 and delta > 0):
        raise ValueError("alpha and delta must be positive")
    denom = abs(tau + 2 * math.log(Zhat))
    if denom == 0:
        raise ValueError("tau + 2 log Zhat must be nonzero")
    limit = 2 * denom / (1 + delta)

    def bound(y1, y2):
        q = alpha**2 * np.asarray(y1, dtype=float) ** 2 + np.asarray(y2, dtype=float) ** 2
        if np.any(q > limit * (1 + 1e-12)):
            raise ValueError(f"point outside the ellipsoidal domain alpha^2 y1^2 + y2^2 <= {limit:.6g}")
        return np.sqrt(np.maximum(2 - (1 + delta) * q / denom, 0.0)) - math.sqrt(2)

    bound.domain_radius_sq = limit
    return bound
