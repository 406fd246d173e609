import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from bubblesheet.gauss_space import (UNIT_NORM_SQ, GridFunction, QuadratureGrid, apply_OU, cutoff,
                                     cutoff_truncate, inner_product, project, spectral_basis,
                                     spectral_coefficients)

GRID = QuadratureGrid(24, 24, 8)
SMALL = QuadratureGrid(12, 12, 6)


def gauss_1d(power: int) -> float:
    """int y^power exp(-y^2/4) dy by adaptive quadrature (independent of Hermite nodes)."""
    return quad(lambda y: y**power * math.exp(-y * y / 4), -np.inf, np.inf)[0]


# <1,1> from 1-D integrals: (4 pi)^{-3/2} e^{-1/2} (int e^{-y^2/4})^2 * circumference 2 pi sqrt 2
ONE_NORM_SQ = (4 * math.pi) ** -1.5 * math.exp(-0.5) * gauss_1d(0) ** 2 * 2 * math.pi * math.sqrt(2)


def moment_ratio(power: int) -> float:
    return gauss_1d(power) / gauss_1d(0)


# -- inner product ---------------------------------------------------------------

def test_unit_norm_matches_independent_integral():
    one = GRID.constant(1.0)
    assert inner_product(one, one) == pytest.approx(ONE_NORM_SQ, rel=1e-12)
    assert UNIT_NORM_SQ == pytest.approx(ONE_NORM_SQ, rel=1e-12)


def test_odd_coordinates_are_orthogonal():
    y1 = GRID.sample(lambda a, b, t: a)
    y2 = GRID.sample(lambda a, b, t: b)
    assert abs(inner_product(y1, y2)) < 1e-14


def test_coordinate_norm_against_quoted_normalization():
    y1 = GRID.sample(lambda a, b, t: a)
    ours = inner_product(y1, y1)
    assert ours == pytest.approx(ONE_NORM_SQ * moment_ratio(2), rel=1e-12)
    # ||y_k||^2 = 2 sqrt(2 pi / e) = sqrt(8 pi / e); the quoted (8 pi e)^(1/4) squared is larger by e
    assert ours == pytest.approx(math.sqrt(8 * math.pi / math.e), rel=1e-12)
    assert math.sqrt(8 * math.pi * math.e) / ours == pytest.approx(math.e, rel=1e-12)


@pytest.mark.parametrize("i,j", [(0, 0), (2, 0), (4, 2), (6, 6), (10, 4), (1, 3)])
def test_polynomial_moments_exact(i, j):
    f = GRID.sample(lambda a, b, t: a**i * b**j)
    expected = ONE_NORM_SQ * moment_ratio(i) * moment_ratio(j)
    assert inner_product(f, GRID.constant(1.0)) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError, match="grid mismatch"):
        inner_product(GRID.constant(1.0), SMALL.constant(1.0))


def test_too_coarse_grid_rejected():
    with pytest.raises(ValueError):
        QuadratureGrid(3, 8, 4)


def test_nonfinite_values_rejected():
    with pytest.raises(ValueError):
        GridFunction(np.full(SMALL.shape, np.nan), SMALL)


# -- operator --------------------------------------------------------------------

@pytest.mark.parametrize("fn,mu", [
    (lambda a, b, t: np.ones_like(a), 1.0),
    (lambda a, b, t: a**2 - 2, 0.0),
    (lambda a, b, t: np.cos(t), 0.5),
    (lambda a, b, t: a * b * np.sin(t), -0.5),
    (lambda a, b, t: a**3 - 6 * a, -0.5),
])
def test_eigenfunctions(fn, mu):
    f = GRID.sample(fn)
    Lf = apply_OU(f)
    assert np.max(np.abs(Lf.values - mu * f.values)[_interior(GRID)]) < 1e-8


def test_shifted_operator():
    f = GRID.sample(lambda a, b, t: b)
    assert np.allclose(apply_OU(f, shifted=True).values[_interior(GRID)], 0.0, atol=1e-10)


def _interior(grid, r=6.0):
    Y1, Y2, _ = grid.mesh
    return np.hypot(Y1, Y2) < r


def _field(grid, coeffs, k):
    """Polynomial of degree <= 3 in y times a low angular mode."""
    def fn(a, b, t):
        monos = [np.ones_like(a), a, b, a * a, a * b, b * b, a**3, b**3]
        base = sum(c * m for c, m in zip(coeffs, monos))
        return base * (1 + 0.5 * np.cos(k * t))
    return grid.sample(fn)


coeff_lists = st.lists(st.floats(-2, 2, allow_nan=False), min_size=8, max_size=8)


@settings(max_examples=25, deadline=None)
@given(coeff_lists, coeff_lists, st.integers(0, 2))
def test_operator_self_adjoint(cf, cg, k):
    f, g = _field(SMALL, cf, k), _field(SMALL, cg, 1)
    lhs, rhs = inner_product(apply_OU(f), g), inner_product(f, apply_OU(g))
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + f.norm() * g.norm()))


@settings(max_examples=25, deadline=None)
@given(coeff_lists, st.integers(0, 2))
def test_commutator_with_y1_derivative(cf, k):
    f = _field(SMALL, cf, k)
    lhs = apply_OU(f.diff(0)) - apply_OU(f).diff(0)
    rhs = 0.5 * f.diff(0)
    assert (lhs - rhs).norm() <= 1e-9 * (1 + f.norm())


# -- projections -----------------------------------------------------------------

def test_projection_examples():
    neutral = GRID.sample(lambda a, b, t: a**2 - 2)
    assert project(neutral, "unstable").norm() < 1e-12
    y1 = GRID.sample(lambda a, b, t: a)
    assert (project(y1, "neutral", operator="Lprime") - y1).norm() < 1e-12
    f = GRID.sample(lambda a, b, t: 3 + b**2)
    assert (project(f, "neutral") - GRID.sample(lambda a, b, t: b**2 - 2)).norm() < 1e-12
    assert (project(f, "unstable") - GRID.constant(5.0)).norm() < 1e-12
    with pytest.raises(ValueError):
        project(f, "sideways")


def test_basis_orthonormal():
    basis = spectral_basis(GRID)
    G = np.array([[inner_product(a, b) for b in basis.orthonormal] for a in basis.orthonormal])
    assert np.max(np.abs(G - np.eye(len(G)))) < 1e-12
    assert len(basis.labels) == 12
    assert len(spectral_basis(QuadratureGrid(12, 12, 1)).labels) == 6


@settings(max_examples=25, deadline=None)
@given(coeff_lists, st.integers(0, 2))
def test_projections_partition_the_norm(cf, k):
    f = _field(SMALL, cf, k)
    parts = [project(f, m) for m in ("unstable", "neutral", "stable")]
    total = sum(p.norm() ** 2 for p in parts)
    assert total == pytest.approx(f.norm() ** 2, rel=1e-10, abs=1e-12)
    for p, m in zip(parts, ("unstable", "neutral", "stable")):
        assert (project(p, m) - p).norm() <= 1e-10 * (1 + f.norm())
    # the stable part lies below the spectral gap
    g = parts[2]
    assert inner_product(apply_OU(g), g) <= -0.5 * g.norm() ** 2 + 1e-9 * (1 + f.norm() ** 2)


# -- coefficients and cutoff -------------------------------------------------------

def test_coefficient_examples():
    a = spectral_coefficients(GRID.sample(lambda y1, y2, t: y2**2 - 2))
    assert np.allclose(a, [0, 1, 0, 0, 0, 0, 0], atol=1e-12)
    tau = -100.0
    a = spectral_coefficients(GRID.sample(lambda y1, y2, t: (2 - y2**2) / (math.sqrt(8) * abs(tau))))
    assert a[1] == pytest.approx(-1 / (math.sqrt(8) * 100), rel=1e-12)
    assert np.allclose(np.delete(a, 1), 0, atol=1e-14)


def test_coefficient_normalizers_against_1d_integrals():
    # ||phi_1||^2 = Z E[(y^2-2)^2], ||phi_3||^2 = 4 Z E[y^2]^2 with Z = <1,1>
    n1 = ONE_NORM_SQ * (moment_ratio(4) - 4 * moment_ratio(2) + 4)
    n3 = ONE_NORM_SQ * 4 * moment_ratio(2) ** 2
    phi1 = GRID.sample(lambda a, b, t: a**2 - 2)
    phi3 = GRID.sample(lambda a, b, t: 2 * a * b)
    assert inner_product(phi1, phi1) == pytest.approx(n1, rel=1e-12)
    assert inner_product(phi3, phi3) == pytest.approx(n3, rel=1e-12)
    u = 0.3 * phi1 - 0.1 * phi3
    assert np.allclose(spectral_coefficients(u), [0.3, 0, -0.1, 0, 0, 0, 0], atol=1e-13)


def test_cutoff_values():
    # quintic smoothstep at s = 1/2 is 1/8 (10 - 7.5 + 1.5) = 1/2
    assert cutoff(1.5) == pytest.approx(0.5, abs=1e-15)
    assert cutoff(0.3) == 1.0 and cutoff(2.0) == 0.0 and cutoff(3.0) == 0.0


def test_cutoff_truncate():
    R = 5.0
    one = GRID.constant(1.0)
    out = cutoff_truncate(one, R)
    Y1, Y2, _ = GRID.mesh
    r = np.hypot(Y1, Y2)
    assert np.all(out.values[r <= R] == 1.0)
    assert np.all(out.values[r >= 2 * R] == 0.0)
    y1 = GRID.sample(lambda a, b, t: a)
    out = cutoff_truncate(y1, R)
    ring = (r > R) & (r < 2 * R)
    assert np.allclose(out.values[ring], Y1[ring] * cutoff(r[ring] / R), rtol=0, atol=1e-15)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            cutoff_truncate(one, bad)


def test_csv_round_trip(tmp_path):
    f = SMALL.sample(lambda a, b, t: np.exp(-0.1 * a) * np.cos(t) + b / 3)
    n = f.to_csv(tmp_path / "f.csv")
    assert n == np.prod(SMALL.shape)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "y1,y2,theta,value"
    g = GridFunction.from_csv(tmp_path / "f.csv", SMALL)
    assert np.array_equal(f.values, g.values)
    with pytest.raises(ValueError):
        GridFunction.from_csv(tmp_path / "f.csv", QuadratureGrid(12, 12, 4))
