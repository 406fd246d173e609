"""Rotationally symmetric compact shrinker profiles v_a on [0, a].

The profile solves

    v''/(1 + v'^2) - (y/2) v' + v/2 - 1/v = 0,   v(a) = 0,  v'(a) = -inf.

Near the tip the graph is vertical, so the solve starts there in the inverted
chart y(v), which is smooth with y(0) = a, y'(0) = 0.  The tip condition fixes
a one-parameter family member uniquely, hence no shooting is needed: a Taylor
start at v = h is integrated outward until the slope reaches -1, and the
solve then switches to v(y) and runs down to y = 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

SQRT2 = math.sqrt(2.0)


def profile_rhs(y, state):
    """v'' from the shrinker equation, for the chart v(y)."""
    v, vp = state
    return [vp, (1 + vp * vp) * (0.5 * y * vp - 0.5 * v + 1.0 / v)]


def tip_rhs(v, state):
    """y'' for the inverted chart y(v)."""
    y, yv = state
    return [yv, (1 + yv * yv) * (0.5 * v * yv - 0.5 * y - yv / v)]


def profile_residual(y, v, vp, vpp):
    return vpp / (1 + vp * vp) - 0.5 * y * vp + 0.5 * v - 1.0 / v


def graded_mesh(start, stop, ratio=1.05, first=1e-3, max_step=0.02):
    """Points from ``start`` to ``stop`` clustered geometrically toward ``start``."""
    span = abs(stop - start)
    steps, h, total = [], first, 0.0
    while total + h < span:
        steps.append(h)
        total += h
        h = min(h * ratio, max_step)
    offs = np.concatenate([[0.0], np.cumsum(steps)])
    if span - offs[-1] < 0.25 * steps[-1]:
        offs[-1] = span
    else:
        offs = np.append(offs, span)
    return start + np.sign(stop - start) * offs


@dataclass
class ShrinkerProfile:
    """Sampled shrinker profile with spline evaluation of v, v' and v''.

    ``y`` is the graded mesh on [0, y_switch] of the v(y) chart; the tip chart
    holds samples of y(v), y_v, y_vv on a graded mesh of [0, v_switch].
    """

    a: float
    y: np.ndarray
    v: np.ndarray
    vp: np.ndarray
    vpp: np.ndarray
    tip_v: np.ndarray
    tip_y: np.ndarray
    tip_yv: np.ndarray
    tip_yvv: np.ndarray
    scale: float = 1.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y_switch = float(self.y[-1])
        self.v_switch = float(self.tip_v[-1])
        self._v = CubicHermiteSpline(self.y, self.v, self.vp)
        self._vp = CubicHermiteSpline(self.y, self.vp, self.vpp)
        self._vpp = CubicSpline(self.y, self.vpp)
        self._ty = CubicHermiteSpline(self.tip_v, self.tip_y, self.tip_yv)
        self._tyv = CubicHermiteSpline(self.tip_v, self.tip_yv, self.tip_yvv)
        self._tyvv = CubicSpline(self.tip_v, self.tip_yvv)

    @property
    def v0(self) -> float:
        return float(self.v[0] * self.scale)

    @property
    def slope0(self) -> float:
        return float(self.vp[0] * self.scale)

    def scaled(self, factor: float) -> "ShrinkerProfile":
        """Same shape with v multiplied by ``factor`` (no longer a shrinker unless factor is 1)."""
        return ShrinkerProfile(self.a, self.y, self.v, self.vp, self.vpp, self.tip_v, self.tip_y,
                               self.tip_yv, self.tip_yvv, self.scale * factor, dict(self.info))

    def _tip_v_of_y(self, y):
        """Invert the monotone tip chart y(v) by vectorized bisection."""
        lo = np.zeros_like(y)
        hi = np.full_like(y, self.v_switch)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            above = self._ty(mid) > y  # y(v) decreases in v
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return 0.5 * (lo + hi)

    def evaluate(self, y):
        """Return (v, v', v'') at ``y`` in [0, a]; at y = a the slopes are -inf."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y > self.a):
            raise ValueError(f"y must lie in [0, {self.a}]")
        v = np.empty_like(y)
        vp = np.empty_like(y)
        vpp = np.empty_like(y)
        body = y <= self.y_switch
        v[body], vp[body], vpp[body] = self._v(y[body]), self._vp(y[body]), self._vpp(y[body])
        tip = ~body
        if np.any(tip):
            s = self._tip_v_of_y(y[tip])
            yv, yvv = self._tyv(s), self._tyvv(s)
            at_tip = (y[tip] == self.a) | (yv == 0)
            with np.errstate(divide="ignore"):
                v[tip] = np.where(y[tip] == self.a, 0.0, s)
                vp[tip] = np.where(at_tip, -np.inf, 1.0 / yv)
                vpp[tip] = np.where(at_tip, -np.inf, -yvv / yv**3)
        k = self.scale
        return v * k, vp * k, vpp * k

    def inverse(self, s):
        """Return (X, X', X'') with v(X(s)) = s for s in [0, v(0)]."""
        s = np.asarray(s, dtype=float) / self.scale
        if np.any(s < 0) or np.any(s > self.v[0] * (1 + 1e-12)):
            raise ValueError(f"s must lie in [0, {self.v0}]")
        X = np.empty_like(s)
        Xp = np.empty_like(s)
        Xpp = np.empty_like(s)
        tip = s <= self.v_switch
        X[tip], Xp[tip], Xpp[tip] = self._ty(s[tip]), self._tyv(s[tip]), self._tyvv(s[tip])
        body = ~tip
        if np.any(body):
            sb = s[body]
            # v decreases on the body chart; bracket by mesh samples then bisect
            idx = np.clip(np.searchsorted(-self.v, -sb), 1, self.y.size - 1)
            lo, hi = self.y[idx - 1], self.y[idx]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                right = self._v(mid) > sb
                lo = np.where(right, mid, lo)
                hi = np.where(right, hi, mid)
            Xb = 0.5 * (lo + hi)
            vp, vpp = self._vp(Xb), self._vpp(Xb)
            X[body], Xp[body], Xpp[body] = Xb, 1.0 / vp, -vpp / vp**3
        k = self.scale
        return X, Xp / k, Xpp / k**2

    def residual(self, y=None):
        """ODE residual on the v(y) chart, by default at mesh points and midpoints."""
        if y is None:
            y = np.sort(np.concatenate([self.y, 0.5 * (self.y[1:] + self.y[:-1])]))
        v, vp, vpp = self.evaluate(y)
        return profile_residual(y, v, vp, vpp)

    def tip_residual(self, s=None):
        """Residual of the inverted-chart equation, normalized like the profile equation."""
        if s is None:
            mid = 0.5 * (self.tip_v[1:] + self.tip_v[:-1])
            s = np.sort(np.concatenate([self.tip_v[1:], mid]))
        s = np.asarray(s, dtype=float)
        y, yv, yvv = self._ty(s), self._tyv(s), self._tyvv(s)
        return yvv / (1 + yv * yv) - 0.5 * s * yv + 0.5 * y + yv / s

    def to_csv(self, path) -> int:
        yt = self.tip_y[::-1][1:]
        y_all = np.concatenate([self.y, yt[yt > self.y_switch]])
        v, vp, vpp = self.evaluate(y_all)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "v", "vp", "vpp"])
            for row in zip(y_all, v, vp, vpp):
                w.writerow([f"{q:.17g}" for q in row])
        return y_all.size


class ShrinkerSolveError(RuntimeError):
    pass


def solve_shrinker(a: float, tol: float = 1e-10, ratio: float = 1.05, max_step: float = 0.02,
                   tip_start: float = 1e-3) -> ShrinkerProfile:
    """Solve for the shrinker profile with tip at y = a."""
    if not a >= 10:
        raise ValueError(f"solve_shrinker needs a >= 10, got {a}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    rtol = min(1e-13, tol * 1e-3)
    # Taylor data at the tip: y = a + c2 v^2 + c4 v^4 + O(v^6)
    c2 = -a / 8
    c4 = c2 / 32 + c2**3 / 2
    h = tip_start

    def steep(v, s):
        return s[1] + 1.0
    steep.terminal = True

    start = [a + c2 * h * h + c4 * h**4, 2 * c2 * h + 4 * c4 * h**3]
    tip = solve_ivp(tip_rhs, (h, 10.0), start, method="DOP853", rtol=rtol, atol=1e-14,
                    events=steep, dense_output=True)
    if tip.status != 1:
        raise ShrinkerSolveError(f"a={a}: tip chart never reached slope -1 ({tip.message})")
    v_s = float(tip.t[-1])
    y_s, yv_s = tip.y[:, -1]

    body = solve_ivp(profile_rhs, (y_s, 0.0), [v_s, 1.0 / yv_s], method="DOP853", rtol=rtol,
                     atol=1e-14, dense_output=True)
    if not body.success:
        raise ShrinkerSolveError(f"a={a}: body chart failed at y={body.t[-1]:.6g} ({body.message})")
    vmin = np.min(body.y[0])
    if vmin <= 0:
        raise ShrinkerSolveError(f"a={a}: profile touches zero in the interior (min v={vmin:.3g})")

    # the curvature scale near the switch point shrinks like 1/a
    ys = graded_mesh(y_s, 0.0, ratio=ratio, first=1e-2 / a, max_step=max_step)[::-1]
    ys[0], ys[-1] = 0.0, y_s
    v, vp = body.sol(ys)
    vpp = np.array(profile_rhs(ys, (v, vp))[1])

    tv = graded_mesh(0.0, v_s, ratio=ratio, first=1e-3 * v_s, max_step=min(max_step, v_s / 100))
    tv[-1] = v_s
    inner = tv <= h
    ty, tyv = np.empty_like(tv), np.empty_like(tv)
    ty[inner] = a + c2 * tv[inner] ** 2 + c4 * tv[inner] ** 4
    tyv[inner] = 2 * c2 * tv[inner] + 4 * c4 * tv[inner] ** 3
    ty[~inner], tyv[~inner] = tip.sol(tv[~inner])
    tyvv = np.empty_like(tv)
    tyvv[0] = 2 * c2
    tyvv[1:] = tip_rhs(tv[1:], (ty[1:], tyv[1:]))[1]
    return ShrinkerProfile(float(a), ys, v, vp, vpp, tv, ty, tyv, tyvv,
                           info={"v_switch": v_s, "y_switch": float(y_s), "rtol": rtol})


def tip_bound(a: float, L: float) -> float:
    """Upper bound -((L-1)^2 - 5)/(sqrt(2) a^2) for v_a(L-1) - sqrt 2."""
    return -((L - 1) ** 2 - 5) / (SQRT2 * a * a)


def ellipse_lower_bound(a: float, y, delta: float):
    """sqrt(2 - 2(1+delta) y^2/a^2) where the radicand is nonnegative, else nan."""
    rad = 2 - 2 * (1 + delta) * np.asarray(y, dtype=float) ** 2 / a**2
    return np.where(rad >= 0, np.sqrt(np.maximum(rad, 0.0)), np.nan)
