"""Gaussian L^2 space over the bubble-sheet cylinder R^2 x S^1(sqrt 2).

Functions are sampled on a tensor grid: Gauss-Hermite nodes in y1 and y2
(weight exp(-y^2/4)) and uniform angles in theta.  Differential operators act
spectrally: Hermite modes in y, Fourier modes in theta.  With this choice the
Ornstein-Uhlenbeck operator

    L = d^2/dy1^2 + d^2/dy2^2 - (y1/2) d/dy1 - (y2/2) d/dy2 + (1/2) d^2/dtheta^2 + 1

is diagonal, exactly self-adjoint for the discrete inner product, and its
polynomial eigenfunctions are reproduced to roundoff.

Pointwise values at the outermost Hermite nodes are poorly conditioned
(roughly psi_{N-1}(x_max) * eps); everything measured in the Gaussian norm is
unaffected because those nodes carry weights below 1e-40.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

# (4 pi)^{-3/2} * exp(-|q|^2/4) with |q|^2 = |y|^2 + 2, times arc length sqrt(2) dtheta
MEASURE_CONST = (4 * math.pi) ** -1.5 * math.exp(-0.5) * math.sqrt(2.0)

# <1, 1> in closed form: (4pi)^{-3/2} e^{-1/2} * (4 pi) * (2 pi sqrt 2)
UNIT_NORM_SQ = math.sqrt(2 * math.pi / math.e)


def smoothstep(s):
    """Quintic smoothstep: 0 for s <= 0, 1 for s >= 1, C^2 in between."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def cutoff(r, inner=1.0, outer=2.0):
    """Smooth cutoff equal to 1 on [0, inner] and 0 on [outer, inf)."""
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - inner) / (outer - inner))


def _orthonormal_hermite(x: np.ndarray, n: int) -> np.ndarray:
    """Rows psi_k(x), k < n, orthonormal for the standard normal density."""
    psi = np.zeros((n, x.size))
    psi[0] = 1.0
    if n > 1:
        psi[1] = x
    for k in range(1, n - 1):
        psi[k + 1] = (x * psi[k] - math.sqrt(k) * psi[k - 1]) / math.sqrt(k + 1)
    return psi


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor quadrature grid over R^2 x S^1(sqrt 2).

    ``n_theta == 1`` is the theta-independent reduction: a single angle with
    the full circle weight.  Angular eigenfunctions are then unresolvable and
    are dropped from spectral bases.
    """

    n1: int = 64
    n2: int = 64
    n_theta: int = 32

    def __post_init__(self):
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError(f"need at least 4 Hermite nodes per axis, got {self.n1}x{self.n2}")
        if self.n_theta < 1:
            raise ValueError("n_theta must be positive")

    @cached_property
    def _hermite(self):
        out = {}
        for n in {self.n1, self.n2}:
            x, w = hermegauss(n)
            # normalize to the standard normal density
            wn = w / math.sqrt(2 * math.pi)
            A = _orthonormal_hermite(x, n) * np.sqrt(wn)[None, :]
            sw = np.sqrt(wn)
            k = np.arange(n)
            shift = np.diag(np.sqrt(k[1:]), 1)  # psi_k' = sqrt(k) psi_{k-1}
            # d/dy = (1/sqrt 2) d/dx with y = sqrt(2) x
            D = (A.T @ shift @ A) * (sw[None, :] / sw[:, None]) / math.sqrt(2.0)
            out[n] = dict(x=x, y=math.sqrt(2.0) * x, w=w * math.sqrt(2.0), A=A, sw=sw, D=D)
        return out

    @property
    def y1(self) -> np.ndarray:
        return self._hermite[self.n1]["y"]

    @property
    def y2(self) -> np.ndarray:
        return self._hermite[self.n2]["y"]

    @property
    def theta(self) -> np.ndarray:
        return 2 * math.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n_theta)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.y1, self.y2, self.theta, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of the full Gaussian measure at every node."""
        w1 = self._hermite[self.n1]["w"]
        w2 = self._hermite[self.n2]["w"]
        wt = np.full(self.n_theta, 2 * math.pi / self.n_theta)
        return MEASURE_CONST * w1[:, None, None] * w2[None, :, None] * wt[None, None, :]

    @property
    def resolves_angles(self) -> bool:
        return self.n_theta >= 3

    # -- function construction -------------------------------------------------

    def sample(self, func: Callable) -> "GridFunction":
        Y1, Y2, TH = self.mesh
        vals = np.broadcast_to(np.asarray(func(Y1, Y2, TH), dtype=float), self.shape)
        return GridFunction(vals, self)

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(np.full(self.shape, float(c)), self)

    # -- spectral transforms -------------------------------------------------

    def _modal(self, values: np.ndarray) -> np.ndarray:
        h1, h2 = self._hermite[self.n1], self._hermite[self.n2]
        c = np.einsum("ai,ijk->ajk", h1["A"], values * h1["sw"][:, None, None])
        c = np.einsum("bj,ajk->abk", h2["A"], c * h2["sw"][None, :, None])
        return np.fft.fft(c, axis=2)

    def _nodal(self, modes: np.ndarray) -> np.ndarray:
        h1, h2 = self._hermite[self.n1], self._hermite[self.n2]
        c = np.fft.ifft(modes, axis=2).real
        c = np.einsum("bj,abk->ajk", h2["A"], c) / h2["sw"][None, :, None]
        return np.einsum("ai,ajk->ijk", h1["A"], c) / h1["sw"][:, None, None]

    @cached_property
    def ou_symbol(self) -> np.ndarray:
        """Eigenvalues of L on the tensor Hermite x Fourier modes."""
        k = np.fft.fftfreq(self.n_theta, d=1.0 / self.n_theta)
        n1 = np.arange(self.n1)[:, None, None]
        n2 = np.arange(self.n2)[None, :, None]
        return 1.0 - 0.5 * n1 - 0.5 * n2 - 0.5 * (k**2)[None, None, :]

    def apply_symbol(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self._nodal(self._modal(values) * symbol)

    def diff(self, values: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        """Spectral derivative of nodal ``values`` along y1 (0), y2 (1) or theta (2)."""
        out = values
        if axis == 2:
            if self.n_theta < 3:
                return np.zeros_like(values)
            k = np.fft.fftfreq(self.n_theta, d=1.0 / self.n_theta)
            if order % 2 == 1 and self.n_theta % 2 == 0:
                k[self.n_theta // 2] = 0.0  # Nyquist mode has no odd derivative
            mult = (1j * k) ** order
            return np.fft.ifft(np.fft.fft(values, axis=2) * mult[None, None, :], axis=2).real
        D = self._hermite[self.n1 if axis == 0 else self.n2]["D"]
        for _ in range(order):
            if axis == 0:
                out = np.einsum("ij,jkl->ikl", D, out)
            else:
                out = np.einsum("ij,kjl->kil", D, out)
        return out


class GridFunction:
    """Immutable scalar field sampled on a :class:`QuadratureGrid`."""

    __slots__ = ("values", "grid")

    def __init__(self, values, grid: QuadratureGrid):
        arr = np.array(values, dtype=float, copy=True).reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("GridFunction values must be finite")
        arr.flags.writeable = False
        self.values = arr
        self.grid = grid

    def _check(self, other: "GridFunction"):
        if not isinstance(other, GridFunction):
            raise TypeError(f"expected GridFunction, got {type(other).__name__}")
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")

    def _lift(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return other.values
        return float(other)

    def __add__(self, other):
        return GridFunction(self.values + self._lift(other), self.grid)

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._lift(other), self.grid)

    def __rsub__(self, other):
        return GridFunction(self._lift(other) - self.values, self.grid)

    def __mul__(self, other):
        return GridFunction(self.values * self._lift(other), self.grid)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.values / self._lift(other), self.grid)

    def __neg__(self):
        return GridFunction(-self.values, self.grid)

    def __repr__(self):
        return f"GridFunction(shape={self.values.shape}, max|f|={np.abs(self.values).max():.3e})"

    def norm(self) -> float:
        return math.sqrt(max(inner_product(self, self), 0.0))

    def diff(self, axis: int, order: int = 1) -> "GridFunction":
        return GridFunction(self.grid.diff(self.values, axis, order), self.grid)

    def to_csv(self, path) -> int:
        """Write ``y1,y2,theta,value`` rows; returns the number of data rows."""
        Y1, Y2, TH = self.grid.mesh
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y1", "y2", "theta", "value"])
            for row in zip(Y1.ravel(), Y2.ravel(), TH.ravel(), self.values.ravel()):
                w.writerow([f"{v:.17g}" for v in row])
        return self.values.size

    @classmethod
    def from_csv(cls, path, grid: QuadratureGrid) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape != (int(np.prod(grid.shape)), 4):
            raise ValueError(f"{path}: expected {np.prod(grid.shape)} rows, found {data.shape[0]}")
        Y1, Y2, TH = grid.mesh
        if not (np.allclose(data[:, 0], Y1.ravel(), rtol=0, atol=1e-12)
                and np.allclose(data[:, 1], Y2.ravel(), rtol=0, atol=1e-12)
                and np.allclose(data[:, 2], TH.ravel(), rtol=0, atol=1e-12)):
            raise ValueError(f"{path}: node coordinates do not match the grid")
        return cls(data[:, 3], grid)


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Gaussian inner product <f, g> by tensor quadrature."""
    f._check(g)
    return float(np.sum(f.grid.weights * f.values * g.values))


def apply_OU(f: GridFunction, shifted: bool = False) -> GridFunction:
    """Apply L (or L' = L - 1/2 when ``shifted``) spectrally."""
    symbol = f.grid.ou_symbol - (0.5 if shifted else 0.0)
    return GridFunction(f.grid.apply_symbol(f.values, symbol), f.grid)


# -- spectral basis -------------------------------------------------------------

# (label, callable, eigenvalue of L, needs angular resolution)
_EIGENFUNCTIONS = [
    ("1", lambda y1, y2, t: np.ones_like(y1), 1.0, False),
    ("y1", lambda y1, y2, t: y1, 0.5, False),
    ("y2", lambda y1, y2, t: y2, 0.5, False),
    ("cos", lambda y1, y2, t: np.cos(t), 0.5, True),
    ("sin", lambda y1, y2, t: np.sin(t), 0.5, True),
    ("y1^2-2", lambda y1, y2, t: y1**2 - 2, 0.0, False),
    ("y2^2-2", lambda y1, y2, t: y2**2 - 2, 0.0, False),
    ("y1y2", lambda y1, y2, t: y1 * y2, 0.0, False),
    ("y1cos", lambda y1, y2, t: y1 * np.cos(t), 0.0, True),
    ("y1sin", lambda y1, y2, t: y1 * np.sin(t), 0.0, True),
    ("y2cos", lambda y1, y2, t: y2 * np.cos(t), 0.0, True),
    ("y2sin", lambda y1, y2, t: y2 * np.sin(t), 0.0, True),
]


def _mode_of(mu: float) -> str:
    if mu > 0:
        return "unstable"
    return "neutral" if mu == 0 else "stable"


class SpectralBasis:
    """Explicit unstable and neutral eigenfunctions of L or L'.

    The raw eigenfunctions are Gram-Schmidt orthonormalized on the grid at
    construction; the stable projection is the complement.
    """

    def __init__(self, grid: QuadratureGrid, operator: str = "L"):
        if operator not in ("L", "Lprime"):
            raise ValueError(f"operator must be 'L' or 'Lprime', got {operator!r}")
        self.grid = grid
        self.operator = operator
        shift = 0.5 if operator == "Lprime" else 0.0
        self.labels, self.functions, self.eigenvalues = [], [], []
        for label, fn, mu, angular in _EIGENFUNCTIONS:
            if angular and not grid.resolves_angles:
                continue
            if operator == "Lprime" and mu - shift < 0:
                continue
            self.labels.append(label)
            self.functions.append(grid.sample(fn))
            self.eigenvalues.append(mu - shift)
        self.orthonormal = _gram_schmidt(self.functions)

    def modes(self, mode: str) -> list[int]:
        return [i for i, mu in enumerate(self.eigenvalues) if _mode_of(mu) == mode]

    def project(self, f: GridFunction, mode: str) -> GridFunction:
        if mode not in ("unstable", "neutral", "stable"):
            raise ValueError(f"unknown mode {mode!r}")
        f._check(self.functions[0])
        if mode == "stable":
            return f - self.project(f, "unstable") - self.project(f, "neutral")
        vals = np.zeros(self.grid.shape)
        for i in self.modes(mode):
            e = self.orthonormal[i]
            vals += inner_product(f, e) * e.values
        return GridFunction(vals, self.grid)


def _gram_schmidt(funcs: list[GridFunction]) -> list[GridFunction]:
    out: list[GridFunction] = []
    for f in funcs:
        v = f
        for _ in range(2):  # re-orthogonalize once for stability
            for e in out:
                v = v - inner_product(v, e) * e
        out.append(v / v.norm())
    return out


_BASIS_CACHE: dict[tuple, SpectralBasis] = {}


def spectral_basis(grid: QuadratureGrid, operator: str = "L") -> SpectralBasis:
    key = (grid, operator)
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = SpectralBasis(grid, operator)
    return _BASIS_CACHE[key]


def project(f: GridFunction, mode: str, operator: str = "L") -> GridFunction:
    """Projection of ``f`` onto the unstable, neutral or stable eigenspace."""
    return spectral_basis(f.grid, operator).project(f, mode)


# phi_1..phi_7 for the quadratic and rotational spectral coefficients
COEFFICIENT_FUNCTIONS = [
    lambda y1, y2, t: y1**2 - 2,
    lambda y1, y2, t: y2**2 - 2,
    lambda y1, y2, t: 2 * y1 * y2,
    lambda y1, y2, t: y1 * np.cos(t),
    lambda y1, y2, t: y1 * np.sin(t),
    lambda y1, y2, t: y2 * np.cos(t),
    lambda y1, y2, t: y2 * np.sin(t),
]


def spectral_coefficients(u_hat: GridFunction) -> np.ndarray:
    """alpha_i = <phi_i, u_hat> / ||phi_i||^2 for i = 1..7.

    Angular coefficients are reported as 0 on a theta-independent grid.
    """
    grid = u_hat.grid
    alpha = np.zeros(7)
    for i, fn in enumerate(COEFFICIENT_FUNCTIONS):
        if i >= 3 and not grid.resolves_angles:
            continue
        phi = grid.sample(fn)
        alpha[i] = inner_product(phi, u_hat) / inner_product(phi, phi)
    return alpha


def cutoff_truncate(u: GridFunction, radius: float, profile: Callable | None = None) -> GridFunction:
    """u(y, theta) * chi(|y| / radius); chi defaults to the quintic smoothstep cutoff."""
    if not radius > 0:
        raise ValueError(f"cutoff radius must be positive, got {radius}")
    chi = cutoff if profile is None else profile
    Y1, Y2, _ = u.grid.mesh
    return GridFunction(u.values * chi(np.hypot(Y1, Y2) / radius), u.grid)
