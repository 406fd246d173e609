"""Integrators and classifiers for the mode-energy ODE systems and the (x, y) phase plane.

Differential inequalities are turned into concrete ODEs through coefficient
realizations: seeded random Fourier series clipped to [-1, 1] and scaled by
the relevant envelope.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

SQRT8 = math.sqrt(8.0)
NEVER_SWITCHES = -math.inf

RTOL = 1e-9
ATOL = 1e-12


@dataclass(frozen=True)
class MZEnvelope:
    """Coefficient envelope eps(tau) = C0 |tau|^(-gamma) valid for tau <= tau_star."""

    C0: float = 1.0
    gamma: float = 0.5
    tau_star: float = -1.0

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValueError(f"C0 must be positive, got {self.C0}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.tau_star < 0:
            raise ValueError(f"tau_star must be negative, got {self.tau_star}")

    def eps(self, tau):
        return self.C0 * np.abs(tau) ** (-self.gamma)


@dataclass
class Trajectory:
    """Sampled solution of one of the ODE systems.

    ``times`` are tau or sigma = log(-tau) samples in integration order;
    ``states`` has one row per sample.
    """

    times: np.ndarray
    states: np.ndarray
    system: str
    labels: tuple[str, ...]
    time_label: str = "tau"
    status: str = "ok"
    event_time: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(self.times.size, -1)
        if not np.all(np.isfinite(self.states)):
            raise ValueError(f"{self.system}: non-finite state in trajectory")

    def sorted(self) -> "Trajectory":
        """Copy ordered by increasing time."""
        order = np.argsort(self.times, kind="stable")
        return Trajectory(self.times[order], self.states[order], self.system, self.labels,
                          self.time_label, self.status, self.event_time, dict(self.info))

    def to_csv(self, path) -> int:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.time_label, *self.labels])
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in row)])
        return self.times.size


class CoefficientRealization:
    """Seeded smooth random coefficient fields with values in [-1, 1].

    Each component is a clipped random Fourier series in the time variable,
    or in sigma = log(-tau) when ``log_time`` is set (for spans of many
    decades in tau).  Callers multiply by their envelope, so every realized
    coefficient stays inside its band.
    """

    def __init__(self, n_components: int = 3, seed=0, n_modes: int = 8,
                 freq_range=(0.05, 2.0), zero: bool = False, log_time: bool = False):
        rng = np.random.default_rng(seed)
        self.n_components = n_components
        self.zero = zero
        self.log_time = log_time
        self.freqs = rng.uniform(*freq_range, size=(n_components, n_modes))
        self.phases = rng.uniform(0, 2 * math.pi, size=(n_components, n_modes))
        amps = rng.normal(size=(n_components, n_modes))
        # scale so that the unclipped series typically overshoots 1 a little
        self.amps = 1.5 * amps / np.abs(amps).sum(axis=1, keepdims=True)

    @classmethod
    def zeros(cls, n_components: int = 3) -> "CoefficientRealization":
        return cls(n_components, seed=0, n_modes=1, zero=True)

    def __call__(self, t) -> np.ndarray:
        if self.zero:
            return np.zeros(self.n_components)
        if self.log_time:
            t = math.log(-t)
        s = np.sum(self.amps * np.cos(self.freqs * t + self.phases), axis=1)
        return np.clip(s, -1.0, 1.0)


def _uniform_samples(t0, t1, n):
    return np.linspace(t0, t1, n)


# -- U system --------------------------------------------------------------------

U_LABELS = ("U_plus", "U_zero", "U_minus")


def U_rhs(tau, U, env: MZEnvelope, realization: CoefficientRealization) -> np.ndarray:
    """Right-hand side of the realized mode-energy system (unclamped)."""
    c = env.eps(tau) * realization(tau)
    S = U[0] + U[1] + U[2]
    return np.array([U[0] + c[0] * S, c[1] * S, -U[2] + c[2] * S])


def integrate_U_system(env: MZEnvelope, realization: CoefficientRealization, U_init,
                       tau_span, direction: str = "backward", n_samples: int = 401,
                       max_norm: float = 1e100) -> Trajectory:
    """Integrate the realized U-system over ``tau_span = (lo, hi)``.

    ``direction="backward"`` starts at ``hi`` and runs toward ``lo``.  A
    component reaching 0 is held there until its derivative turns positive.
    """
    U_init = np.asarray(U_init, dtype=float)
    if U_init.shape != (3,) or np.any(U_init < 0):
        raise ValueError(f"initial U must be three nonnegative numbers, got {U_init}")
    lo, hi = sorted(float(t) for t in tau_span)
    if hi > env.tau_star:
        raise ValueError(f"tau range ends at {hi} beyond the horizon tau_star={env.tau_star}")
    if direction not in ("backward", "forward"):
        raise ValueError(f"direction must be 'backward' or 'forward', got {direction!r}")
    t0, t1 = (hi, lo) if direction == "backward" else (lo, hi)
    sign = 1.0 if t1 > t0 else -1.0
    samples = _uniform_samples(t0, t1, n_samples)

    # The system is linear and homogeneous, so integrate the mode fractions
    # p = U / S together with log S.  This keeps every component O(1) and
    # makes the absolute tolerance meaningful while U+ grows like e^tau.
    held = np.zeros(3, dtype=bool)

    def rhs(t, z):
        p = np.maximum(z[:3], 0.0)
        dU = U_rhs(t, p, env, realization)
        growth = dU.sum() / p.sum()
        dp = dU - z[:3] * growth
        # in integration-time orientation a held component may only grow
        dp = np.where(held & (z[:3] <= 0) & (sign * dp < 0), 0.0, dp)
        return np.append(dp, growth)

    events = []
    for i in range(3):
        def hit_zero(t, z, i=i):
            return z[i] if not held[i] else 1.0
        hit_zero.terminal = True
        hit_zero.direction = -sign
        events.append(hit_zero)

    def blow_up(t, z):
        return math.log(max_norm) - z[3]
    blow_up.terminal = True
    events.append(blow_up)

    def pack(U):
        S = U.sum()
        if S == 0:
            return np.array([0.0, 0.0, 0.0, -np.inf])
        return np.append(U / S, math.log(S))

    def unpack(Z):
        return np.maximum(Z[:3], 0.0) * np.exp(Z[3])

    out_t, out_U = [], []
    if U_init.sum() == 0:
        return Trajectory(samples, np.zeros((samples.size, 3)), "U", U_LABELS)
    t, z = t0, pack(U_init)
    held[:] = (z[:3] == 0) & (sign * U_rhs(t0, z[:3], env, realization) <= 0)
    status, event_time = "ok", None
    for _ in range(10000):
        mask = sign * (samples - t) >= 0
        if out_t:
            mask &= sign * (samples - out_t[-1]) > 0
        sol = solve_ivp(rhs, (t, t1), z, method="RK45", rtol=RTOL, atol=ATOL,
                        events=events, dense_output=True)
        if not sol.success:
            status, event_time = "failed", float(sol.t[-1])
            break
        t_end = sol.t[-1]
        take = samples[mask & (sign * (samples - t_end) <= 0)]
        if take.size:
            out_t.extend(take)
            out_U.extend(unpack(sol.sol(take)).T)
        if sol.status == 0:
            break
        t, z = t_end, sol.y[:, -1].copy()
        if sol.t_events[3].size:
            status, event_time = "blow-up", float(t_end)
            break
        z[:3] = np.maximum(z[:3], 0.0)
        for i in range(3):
            if sol.t_events[i].size:
                z[i] = 0.0
        z[:3] /= z[:3].sum()
        d = U_rhs(t, z[:3], env, realization)
        held[:] = (z[:3] == 0) & (sign * d <= 0)
    return Trajectory(np.array(out_t), np.array(out_U), "U", U_LABELS,
                      status=status, event_time=event_time)


@dataclass
class Classification:
    verdict: str
    crossing_time: float | None = None
    reason: str = ""
    stable_bound_ok: bool = True


def verify_MZ_trichotomy(traj: Trajectory, env: MZEnvelope, min_samples: int = 10,
                         min_span: float = 1.0, rtol: float = 1e-9) -> Classification:
    """Classify a U trajectory as unstable-dominates, neutral-dominates or violation.

    Checks the stable-mode bound U- <= 2 C0 |tau|^-gamma (U0 + U+) at every
    sample and requires g = U+ - |tau|^(-gamma/2) U0 to change sign at most
    once, from <= 0 to > 0, as tau increases.
    """
    if traj.system != "U":
        raise ValueError(f"expected a U trajectory, got {traj.system!r}")
    tr = traj.sorted()
    tau, U = tr.times, tr.states
    if tau.size < min_samples or tau[-1] - tau[0] < min_span:
        return Classification("inconclusive", reason=f"{tau.size} samples over span "
                              f"{tau[-1] - tau[0] if tau.size else 0:.3g}")
    Up, U0, Um = U[:, 0], U[:, 1], U[:, 2]
    bound = 2 * env.eps(tau) * (U0 + Up)
    slack = rtol * (Up + U0 + Um) + 1e-300
    bad = Um > bound + slack
    if np.any(bad):
        i = int(np.argmax(bad))
        return Classification("violation", reason=f"stable bound fails at tau={tau[i]:.6g}",
                              stable_bound_ok=False)
    g = Up - np.abs(tau) ** (-env.gamma / 2) * U0
    pos = g > 0
    flips = np.flatnonzero(pos[1:] != pos[:-1])
    if flips.size > 1:
        return Classification("violation", reason=f"{flips.size} sign changes of g")
    crossing = None
    if flips.size == 1:
        i = int(flips[0])
        if pos[i]:
            return Classification("violation", reason=f"g turns nonpositive at tau={tau[i + 1]:.6g}")
        crossing = float(tau[i] - g[i] * (tau[i + 1] - tau[i]) / (g[i + 1] - g[i]))
    verdict = "unstable-dominates" if pos[-1] else "neutral-dominates"
    return Classification(verdict, crossing_time=crossing)


def stable_excess(tau, U, env: MZEnvelope) -> np.ndarray:
    """f = U- - 2 eps (U+ + U0)."""
    U = np.asarray(U, dtype=float)
    return U[..., 2] - 2 * env.eps(tau) * (U[..., 0] + U[..., 1])


def stable_excess_rate(tau, U, c, env: MZEnvelope) -> float:
    """Exact df/dtau for given realized coefficients ``c`` (already scaled by eps)."""
    U = np.asarray(U, dtype=float)
    S = U.sum()
    dU = np.array([U[0] + c[0] * S, c[1] * S, -U[2] + c[2] * S])
    eps = env.eps(tau)
    deps = env.gamma * eps / abs(tau)  # d/dtau of C0 |tau|^-gamma for tau < 0
    return float(dU[2] - 2 * deps * (U[0] + U[1]) - 2 * eps * (dU[0] + dU[1]))


def admissible_initial_state(rng: np.random.Generator, env: MZEnvelope, tau0: float) -> np.ndarray:
    """Random state with U- inside the stable-mode bound at ``tau0``."""
    Up, U0 = 10.0 ** rng.uniform(-3, 0, size=2)
    Um = rng.uniform(0, 1) * 2 * env.eps(tau0) * (Up + U0)
    return np.array([Up, U0, Um])


def _mc_run(args):
    env, child, tau0, tau_end, n_samples = args
    rng = np.random.default_rng(child)
    realization = CoefficientRealization(3, seed=rng.integers(2**63))
    U_init = admissible_initial_state(rng, env, tau0)
    traj = integrate_U_system(env, realization, U_init, (tau0, tau_end), direction="forward",
                              n_samples=n_samples)
    if traj.status != "ok":
        return Classification("violation", reason=f"integration {traj.status}")
    return verify_MZ_trichotomy(traj, env)


def run_mz_monte_carlo(env: MZEnvelope, runs: int = 100, seed: int = 0, tau0: float = -100.0,
                       tau_end: float = -60.0, n_samples: int = 401, jobs: int = 1):
    """Forward-integrate ``runs`` admissible realizations and classify each.

    Returns a list of ``(run_index, Classification)``.  Per-run seeds are
    spawned from ``seed`` so results do not depend on ``jobs``.
    """
    children = np.random.SeedSequence(seed).spawn(runs)
    tasks = [(env, ch, tau0, tau_end, n_samples) for ch in children]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_mc_run, tasks))
    else:
        results = [_mc_run(t) for t in tasks]
    return list(enumerate(results))


# -- quadratic spectral coefficients ------------------------------------------

ALPHA_LABELS = ("alpha1", "alpha2", "alpha3")


def alpha_rhs(tau, alpha, env: MZEnvelope, realization: CoefficientRealization, C: float = 1.0):
    a1, a2, a3 = alpha
    r = realization(tau)
    band = C * (np.dot(alpha, alpha) * abs(tau) ** (-env.gamma / 4) + abs(tau) ** -10.0)
    return np.array([
        -SQRT8 * (a1 * a1 + a3 * a3) + band * r[0],
        -SQRT8 * (a2 * a2 + a3 * a3) + band * r[1],
        -SQRT8 * (a1 + a2) * a3 + band * r[2],
    ])


def integrate_alpha(env: MZEnvelope, realization: CoefficientRealization, alpha_init, tau_span,
                    C: float = 1.0, n_samples: int = 401, max_norm: float = 1e6,
                    rtol: float = 1e-11, direction: str = "forward") -> Trajectory:
    """Integrate the quadratic coefficient ODEs with realized error terms.

    ``alpha_init`` is the state at the earlier end of ``tau_span`` for
    ``direction="forward"`` and at the later end for ``"backward"``.
    """
    alpha_init = np.asarray(alpha_init, dtype=float)
    if alpha_init.shape != (3,):
        raise ValueError("alpha must have three components")
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    lo, hi = sorted(float(t) for t in tau_span)
    if hi >= 0:
        raise ValueError("tau range must be negative")
    samples = _uniform_samples(lo, hi, n_samples)
    if direction == "backward":
        lo, hi = hi, lo

    def blow_up(t, a, *_):
        return max_norm - np.linalg.norm(a)
    blow_up.terminal = True

    sol = solve_ivp(alpha_rhs, (lo, hi), alpha_init, method="RK45", rtol=rtol, atol=1e-14,
                    args=(env, realization, C), events=blow_up, dense_output=True)
    t_end = sol.t[-1]
    keep = samples[samples <= t_end] if hi > lo else samples[samples >= t_end]
    status, event_time = "ok", None
    if sol.status == 1:
        status, event_time = "blow-up", float(t_end)
    elif not sol.success:
        status, event_time = "failed", float(t_end)
    return Trajectory(keep, sol.sol(keep).T, "alpha", ALPHA_LABELS, status=status,
                      event_time=event_time, info={"C": C})


def alpha_from_xy(x, y, tau) -> np.ndarray:
    """Coefficients with alpha3 = 0 whose trace and determinant give (x, y) at ``tau``.

    Needs 0 <= y <= x^2 so that both alpha1, alpha2 are real and nonpositive.
    """
    if not 0 <= y <= x * x:
        raise ValueError(f"need 0 <= y <= x^2, got x={x}, y={y}")
    S = -x / (math.sqrt(2) * abs(tau))
    D = y / (8 * tau * tau)
    root = math.sqrt(max(S * S / 4 - D, 0.0))
    return np.array([S / 2 + root, S / 2 - root, 0.0])


def xy_from_alpha(traj: Trajectory) -> Trajectory:
    """x = -sqrt 2 |tau| S, y = 8 tau^2 D as functions of sigma = log(-tau), sorted in sigma."""
    if traj.system != "alpha":
        raise ValueError(f"expected an alpha trajectory, got {traj.system!r}")
    tau = traj.times
    S, D = trace_and_determinant(traj.states)
    sigma = np.log(-tau)
    order = np.argsort(sigma)
    xy = np.column_stack([-math.sqrt(2) * np.abs(tau) * S, 8 * tau * tau * D])
    return Trajectory(sigma[order], xy[order], "xy", XY_LABELS, time_label="sigma",
                      status=traj.status, info=dict(traj.info))


def trace_and_determinant(alpha):
    alpha = np.asarray(alpha, dtype=float)
    S = alpha[..., 0] + alpha[..., 1]
    D = alpha[..., 0] * alpha[..., 1] - alpha[..., 2] ** 2
    return S, D


def trace_rate_ratio(traj: Trajectory, env: MZEnvelope, realization: CoefficientRealization,
                     C: float = 1.0):
    """-dS/dtau divided by S^2 at samples in the regime a1, a2 <= 0, a3^2 <= a1 a2, S < 0.

    Returns ``(tau, ratio)`` for the qualifying samples.
    """
    taus, ratios = [], []
    for t, a in zip(traj.times, traj.states):
        if a[0] > 0 or a[1] > 0 or a[2] ** 2 > a[0] * a[1]:
            continue
        S = a[0] + a[1]
        if S >= 0:
            continue
        d = alpha_rhs(t, a, env, realization, C)
        taus.append(t)
        ratios.append(-(d[0] + d[1]) / (S * S))
    return np.array(taus), np.array(ratios)


def switch_time(traj: Trajectory, kappa0: float, tau_star: float | None = None) -> float:
    """Infimum of tau with |alpha(tau')| <= kappa0/|tau'| on [tau, tau_star).

    Returns ``tau_star`` (the last sample by default) when the condition fails
    there, and ``NEVER_SWITCHES`` (-inf) when it holds at every sample.
    Between samples the crossing of |alpha| |tau| = kappa0 is located by
    linear interpolation.
    """
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    tr = traj.sorted()
    tau = tr.times
    if tau_star is None:
        tau_star = float(tau[-1])
    keep = tau <= tau_star
    tau, states = tau[keep], tr.states[keep]
    if tau.size == 0:
        raise ValueError(f"no samples at or below tau_star={tau_star}")
    h = np.linalg.norm(states, axis=1) * np.abs(tau) - kappa0
    if h[-1] > 0:
        return float(tau_star)
    fails = np.flatnonzero(h > 0)
    if fails.size == 0:
        return NEVER_SWITCHES
    i = int(fails[-1])
    return float(tau[i] - h[i] * (tau[i + 1] - tau[i]) / (h[i + 1] - h[i]))


# -- (x, y) phase plane -----------------------------------------------------------

XY_LABELS = ("x", "y")


def xy_field(x, y):
    return np.array([x + y - 2 * x * x, 2 * y - 2 * x * y])


def xy_jacobian(x, y):
    return np.array([[1 - 4 * x, 1.0], [-2 * y, 2 - 2 * x]])


@dataclass(frozen=True)
class FixedPoint:
    point: tuple[float, float]
    eigenvalues: tuple
    kind: str


def _kind(ev) -> str:
    if np.any(np.abs(np.imag(ev)) > 1e-12):
        re = np.real(ev)
        return "stable focus" if np.all(re < 0) else "unstable focus" if np.all(re > 0) else "center"
    ev = np.real(ev)
    if np.all(ev < 0):
        return "stable node"
    if np.all(ev > 0):
        return "unstable node"
    if np.any(ev == 0):
        return "degenerate"
    return "saddle"


def _damped_newton(p, tol=1e-15, max_iter=100):
    for _ in range(max_iter):
        F = xy_field(*p)
        nF = np.linalg.norm(F)
        if nF < tol:
            return p
        try:
            step = np.linalg.solve(xy_jacobian(*p), -F)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            q = p + lam * step
            if np.linalg.norm(xy_field(*q)) < (1 - 1e-4 * lam) * nF:
                break
            lam *= 0.5
        else:
            return None
        p = q
    return p if np.linalg.norm(xy_field(*p)) < 1e-12 else None


def classify_fixed_points(seeds_per_axis: int = 9, box=(-1.0, 2.0), merge_tol: float = 1e-8):
    """Zeros of V(x, y) = (x + y - 2x^2, 2y - 2xy) with Jacobian classification."""
    grid = np.linspace(box[0], box[1], seeds_per_axis)
    roots: list[np.ndarray] = []
    for x0 in grid:
        for y0 in grid:
            r = _damped_newton(np.array([x0, y0]))
            if r is None:
                continue
            if all(np.linalg.norm(r - q) > merge_tol for q in roots):
                roots.append(r)
    roots.sort(key=lambda r: (round(r[0], 6), round(r[1], 6)))
    out = []
    for r in roots:
        ev = np.linalg.eigvals(xy_jacobian(*r))
        ev = np.sort_complex(ev)
        if np.all(np.abs(ev.imag) < 1e-12):
            ev = ev.real
        out.append(FixedPoint((float(r[0]), float(r[1])), tuple(ev.tolist()), _kind(ev)))
    return out


@dataclass(frozen=True)
class ConfinementRegion:
    """sqrt(2) kappa/3 <= x <= 2 sqrt 2 and -C e^(-gamma sigma/4) <= y <= x^2 + upper_slack."""

    kappa: float = 1e-3
    C: float = 1.0
    gamma: float = 0.4
    upper_slack: bool = True

    def excess(self, sigma, x, y) -> np.ndarray:
        """Largest violation of the bounds at each sample (<= 0 inside)."""
        tail = self.C * np.exp(-self.gamma * np.asarray(sigma) / 4)
        upper = x * x + (tail if self.upper_slack else 0.0)
        return np.max([math.sqrt(2) * self.kappa / 3 - x, x - 2 * math.sqrt(2),
                       -tail - y, y - upper], axis=0)


class XYPerturbation:
    """Bounded perturbation amp * e^(-gamma sigma/4) * r(sigma), r from a realization."""

    def __init__(self, amp: float = 1.0, gamma: float = 0.4, seed=0):
        self.amp, self.gamma = amp, gamma
        self.realization = CoefficientRealization(2, seed=seed)

    def __call__(self, sigma, x, y):
        return self.amp * math.exp(-self.gamma * sigma / 4) * self.realization(sigma)


def _rk4(f, y0, t0, t1, n):
    h = (t1 - t0) / n
    ts = t0 + h * np.arange(n + 1)
    ys = np.empty((n + 1, len(y0)))
    ys[0] = y0
    y = np.asarray(y0, dtype=float)
    for k in range(n):
        t = ts[k]
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[k + 1] = y
    return ts, ys


def integrate_xy(initial, sigma_span, perturbation=None, region: ConfinementRegion | None = None,
                 n_samples: int = 401, method: str = "RK45", steps: int = 2000) -> Trajectory:
    """Integrate dx/dsigma = x + y - 2x^2 + p_x, dy/dsigma = 2y - 2xy + p_y.

    ``perturbation(sigma, x, y) -> (p_x, p_y)``.  With a ``region`` the first
    sample outside it sets ``status="exited"`` and ``event_time``.  The
    ``"rk4"`` method uses ``steps`` fixed classical Runge-Kutta steps.
    """
    s0, s1 = map(float, sigma_span)

    def rhs(s, p):
        v = xy_field(p[0], p[1])
        if perturbation is not None:
            v = v + np.asarray(perturbation(s, p[0], p[1]))
        return v

    if method == "rk4":
        ts, ys = _rk4(rhs, np.asarray(initial, dtype=float), s0, s1, steps)
    else:
        ts = _uniform_samples(s0, s1, n_samples)
        with np.errstate(over="ignore", invalid="ignore"):
            sol = solve_ivp(rhs, (s0, s1), np.asarray(initial, dtype=float), method=method,
                            rtol=RTOL, atol=ATOL, t_eval=ts)
        ts, ys = sol.t, sol.y.T
        keep = np.all(np.isfinite(ys), axis=1)
        ts, ys = ts[keep], ys[keep]
    traj = Trajectory(ts, ys, "xy", XY_LABELS, time_label="sigma")
    if method != "rk4" and not sol.success:
        # solver breakdown means the state ran away; keep the partial record
        traj.status = "failed"
        traj.event_time = float(sol.t[-1]) if sol.t.size else s0
        traj.info["message"] = sol.message
    if region is not None:
        ex = region.excess(ts, ys[:, 0], ys[:, 1])
        traj.info["max_excess"] = float(ex.max())
        if traj.status == "failed":
            traj.info["max_excess"] = math.inf
        elif np.any(ex > 0):
            traj.status = "exited"
            traj.event_time = float(ts[np.argmax(ex > 0)])
    return traj


# -- rotation coefficient ---------------------------------------------------------

@dataclass
class ZReport:
    trajectory: Trajectory
    max_ratio: float  # max |z| e^(gamma sigma/8)
    C_prime: float
    holds: bool


def integrate_z(x_of_sigma, q_of_sigma, z_init: float, sigma_span, gamma: float = 0.4,
                C_prime: float = 10.0, n_samples: int = 401) -> ZReport:
    """Integrate dz/dsigma = z - 2x(sigma) z + q(sigma) and test |z| <= C' e^(-gamma sigma/8).

    ``x_of_sigma`` may be a callable or an xy :class:`Trajectory` (interpolated).
    """
    if isinstance(x_of_sigma, Trajectory):
        tr = x_of_sigma.sorted()
        xs, xv = tr.times, tr.states[:, 0]
        x_fn = lambda s: float(np.interp(s, xs, xv))
    else:
        x_fn = x_of_sigma
    s0, s1 = map(float, sigma_span)
    ts = _uniform_samples(s0, s1, n_samples)
    sol = solve_ivp(lambda s, z: (1 - 2 * x_fn(s)) * z + q_of_sigma(s), (s0, s1), [float(z_init)],
                    method="RK45", rtol=1e-11, atol=1e-14, t_eval=ts)
    if not sol.success:
        raise RuntimeError(f"z integration failed: {sol.message}")
    z = sol.y[0]
    ratio = float(np.max(np.abs(z) * np.exp(gamma * ts / 8)))
    traj = Trajectory(ts, z[:, None], "z", ("z",), time_label="sigma")
    return ZReport(traj, ratio, C_prime, ratio <= C_prime)


def decaying_z(x_fn, q_fn, sigma: float, upper: float = np.inf) -> float:
    """Variation-of-constants solution of the z equation that vanishes at infinity.

    z(sigma) = -int_sigma^inf q(s) exp(-int_sigma^s (1 - 2x)) ds
    """
    from scipy.integrate import quad

    def inner(s):
        return quad(lambda r: 1 - 2 * x_fn(r), sigma, s)[0]

    val, _ = quad(lambda s: q_fn(s) * math.exp(-inner(s)), sigma, upper, limit=200)
    return -val
