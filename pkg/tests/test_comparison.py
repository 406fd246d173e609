import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblesheet import comparison as cmp
from bubblesheet.flow import ModelSurface

CYL = ModelSurface()
TILT = ModelSurface("graph", lambda a, b, c, t: 0.05 * a)
ERF_ONE = 0.8427007929497148693  # erf(1), tabulated


# -- independent physical-time oracle -------------------------------------------------

def _jacobian(X, q, h):
    E = np.eye(3) * h
    return np.array([(X(q + e) - X(q - e)) / (2 * h) for e in E])


def _laplace_beltrami(fun, X, q, h=1e-3):
    """Delta_M fun at q via (1/sqrt g) d_a (sqrt g g^ab d_b fun), nested central differences."""
    def flux(p):
        T = _jacobian(X, p, h)
        g = T @ T.T
        d = np.array([(fun(X(p + e)) - fun(X(p - e))) / (2 * h) for e in np.eye(3) * h])
        return math.sqrt(np.linalg.det(g)) * (np.linalg.inv(g) @ d)

    T = _jacobian(X, q, h)
    E = np.eye(3) * h
    div = sum((flux(q + E[a]) - flux(q - E[a]))[a] / (2 * h) for a in range(3))
    return div / math.sqrt(np.linalg.det(T @ T.T))


def physical_heat(m, F, gradF, q, t, h=1e-3):
    """(d_t - Lap) F along mean curvature flow, written as F_t + grad F . H - Lap_M F."""
    q = np.asarray(q, dtype=float)
    X = lambda p: m.position(tuple(p), t)
    x = X(q)
    dt = 1e-4 * abs(t)
    Ft = (F(x, t + dt) - F(x, t - dt)) / (2 * dt)
    Hvec = np.array([_laplace_beltrami(lambda y, k=k: y[k], X, q, h) for k in range(4)])
    lap = _laplace_beltrami(lambda y: F(y, t), X, q, h)
    return Ft + gradF(x, t) @ Hvec - lap


@pytest.mark.parametrize("surface", [CYL, TILT], ids=["cylinder", "tilted"])
@pytest.mark.parametrize("q", [(0.7, -1.2, 0.4), (-2.0, 0.5, 2.5)])
def test_renormalized_heat_against_physical_oracle(surface, q):
    s = 1.5
    t = -math.exp(s)
    dist = cmp.AnisoDistance(1e-7, 5e-4)
    c = dist.c
    F = lambda x, tt: float(np.sum(c * x * x)) / abs(tt)
    gradF = lambda x, tt: 2 * c * x / abs(tt)
    oracle = abs(t) * physical_heat(surface, F, gradF, q, t)
    p = cmp.renormalized_geometry(surface, q, s)
    assert dist.heat(p) == pytest.approx(oracle, abs=2e-5)


@pytest.mark.parametrize("q", [(0.7, -1.2, 0.4), (-2.0, 0.5, 2.5)])
def test_tangential_gradient_against_metric(q):
    s, t = 1.0, -math.e
    X = lambda p: TILT.position(tuple(p), t)
    qa = np.asarray(q, dtype=float)
    T = _jacobian(X, qa, 1e-4)
    c = cmp.coordinate_square(0).c
    F = lambda x: float(np.sum(c * x * x)) / abs(t)
    d = np.array([(F(X(qa + e)) - F(X(qa - e))) / 2e-4 for e in np.eye(3) * 1e-4])
    oracle = abs(t) * d @ np.linalg.inv(T @ T.T) @ d
    p = cmp.renormalized_geometry(TILT, q, s)
    assert cmp.coordinate_square(0).grad_T2(p) == pytest.approx(oracle, rel=1e-6)


# -- distance inequalities ------------------------------------------------------------

def test_f1_equality_on_cylinder():
    rng = np.random.default_rng(0)
    params = [(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2 * math.pi)) for _ in range(100)]
    evo, _ = cmp.check_aniso_evolution(CYL, params, [3.0, 40.0], cmp.coordinate_square(0))
    assert np.max(np.abs(evo.residuals)) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(0, 2 * math.pi), st.floats(0.5, 50),
       st.floats(1e-6, 9.9e-4), st.floats(0.01, 1.0))
def test_aniso_inequalities_on_cylinder(y1, y2, th, s, beta, frac):
    dist = cmp.AnisoDistance(frac * beta**2, beta)
    evo, grad = cmp.check_aniso_evolution(CYL, [(y1, y2, th)], [s], dist)
    # closed forms: evolution slack 2((1 - beta)/(2 - beta) - alpha) and a nonnegative gradient slack
    assert evo.residuals[0] == pytest.approx(2 * ((1 - beta) / (2 - beta) - dist.alpha), abs=1e-12)
    assert grad.residuals[0] >= -1e-12
    assert evo.verdict == grad.verdict == "PASS"


def test_aniso_on_tilted_graph_strict():
    rng = np.random.default_rng(1)
    params = [(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2 * math.pi)) for _ in range(30)]
    evo, grad = cmp.check_aniso_evolution(TILT, params, [2.0], cmp.AnisoDistance(1e-7, 5e-4))
    assert evo.min_residual > 0 and grad.min_residual > 0


def test_aniso_parameter_checks():
    assert cmp.AnisoDistance(1e-6, 1e-3).beta == 1e-3
    for a, b in [(1e-6, 2e-3), (1e-6, 5e-4), (0.0, 5e-4), (1e-7, 0.0)]:
        with pytest.raises(ValueError):
            cmp.AnisoDistance(a, b)
    assert cmp.AnisoDistance(1e-7, 5e-4).gradient_bound_factor() == pytest.approx(
        (16 - 2e-3) / (8 - 3.5e-3))


# -- Jacobi supersolutions --------------------------------------------------------------

def test_psi_b_closed_form_on_cylinder():
    for b in (2.0, 3.5, 7.0):
        F = cmp.PsiB(b)
        for s, y1 in [(20.0, 0.0), (20.0, 300.0), (5.0, -40.0)]:
            p = cmp.renormalized_geometry(CYL, (y1, 1.0, 0.3), s)
            assert F.jacobi_ratio(p) == pytest.approx(2 * b * s ** (2 * b - 1) - 1, rel=1e-12)
    # b = 2, |t| = e^20
    p = cmp.renormalized_geometry(CYL, (0.0, 0.0, 0.0), 20.0)
    assert cmp.PsiB(2).jacobi_ratio(p) == pytest.approx(4 * 20.0**3 - 1, rel=1e-14)


def test_phi_delta_on_cylinder():
    delta, s = 0.1, 100.0
    F = cmp.PhiDelta(delta)
    for y1 in (0.0, 3.0, 50.0):
        p = cmp.renormalized_geometry(CYL, (y1, 0.0, 1.0), s)
        r = F.jacobi_ratio(p)
        assert r == pytest.approx(delta**2 * (1 - 4 * delta**2) * y1**2 - 2 * delta**2 + 200 * s - 0.5,
                                  rel=1e-12)
        assert r >= 100 * s - 0.5


def test_supersolution_reports():
    rng = np.random.default_rng(2)
    params = [(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2 * math.pi)) for _ in range(40)]
    rep = cmp.check_jacobi_supersolution("Psi_b", CYL, params, [1.0, 10.0])
    assert rep.skipped > 0 and rep.verdict == "PASS" and rep.min_residual > 0
    # below log|t| = 4^(-1/3) the closed form 4 l^3 - 1 is negative
    rep = cmp.check_jacobi_supersolution("Psi_b", CYL, [(0.1, 0.0, 0.0)], [0.5])
    assert rep.verdict == "FAIL" and rep.min_residual == pytest.approx(4 * 0.125 - 1)
    rep = cmp.check_jacobi_supersolution("Phi_delta", TILT, params, [5.0])
    assert rep.verdict == "PASS"
    with pytest.raises(ValueError):
        cmp.check_jacobi_supersolution("Chi", CYL, params, [1.0])
    for bad in (lambda: cmp.PsiB(1.5), lambda: cmp.PsiB(8), lambda: cmp.PhiDelta(0.5), lambda: cmp.PhiDelta(0.0)):
        with pytest.raises(ValueError):
            bad()


def test_regularized_slope():
    zeta = np.array([1.0, 2.0, 5.0])
    assert np.all(cmp.regularized_slope(np.zeros(3), zeta) == 0)
    eps = 1e-3
    assert np.allclose(cmp.regularized_slope(2 * eps * zeta, zeta, eps), eps * zeta)
    assert np.allclose(cmp.regularized_slope(np.array([1.0, -1.0]), np.ones(2)), 1 - 1e-8)


def test_zeta_example_on_cylinder():
    beta = 1e-3
    dist = cmp.AnisoDistance(beta**2, beta)
    f = 100 / beta
    y2 = math.sqrt(f * (2 - beta))
    s = 2e5
    ratio, chain = cmp.check_zeta_supersolution(CYL, [(0.0, y2, 0.0)], [s], dist)
    assert chain.residuals[0] == pytest.approx(f / 10 - 2 - 0.5, rel=1e-9)
    assert ratio.verdict == chain.verdict == "PASS"
    # outside lower <= f <= log|t| the sample is skipped
    ratio, chain = cmp.check_zeta_supersolution(CYL, [(0.0, 1.0, 0.0)], [s], dist)
    assert ratio.skipped == 1 and ratio.verdict == "EMPTY"


# -- half-line heat solution ---------------------------------------------------------------

def test_heat_solution_examples():
    t = 3.7
    psi, _, _ = cmp.dirichlet_heat(2 * math.sqrt(t), t)
    assert float(psi) == pytest.approx(ERF_ONE, abs=1e-15)
    assert float(cmp.dirichlet_heat(0.0, t)[0]) == 0.0
    assert 1 - float(cmp.dirichlet_heat(20 * math.sqrt(t), t)[0]) < 1e-8
    for x, tt in [(1.0, 0.0), (1.0, -1.0), (-0.5, 1.0)]:
        with pytest.raises(ValueError):
            cmp.dirichlet_heat(x, tt)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 30.0), st.floats(1e-2, 1e3))
def test_heat_solution_shape(x, t):
    psi, px, pxx = cmp.dirichlet_heat(x, t)
    assert 0 <= psi <= 1
    if x * x / (4 * t) < 500:
        assert px > 0 and pxx < 0
    assert abs(cmp.heat_residual(x, t)) < 1e-6 * (1 + abs(float(pxx)))


# -- reports --------------------------------------------------------------------------------

def test_report_verdicts_and_csv(tmp_path):
    rep = cmp.ResidualReport("r", rows=[(1.0, 2.0, 2.0, 0.5), (0.0, 0.0, 2.0, 0.0)], tol=0.0, strict=True)
    assert rep.verdict == "FAIL"
    rep.strict = False
    assert rep.verdict == "PASS"
    assert cmp.ResidualReport("e").verdict == "EMPTY"
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,t,residual,verdict"
    x1, x2, t, res, v = lines[1].split(",")
    assert float(x1) == pytest.approx(math.e) and float(t) == pytest.approx(-math.e**2) and v == "PASS"


def test_scaled_format_beyond_double_range():
    s = 1e5
    text = cmp._fmt_scaled(3.0, s / 2)
    mant, exp = text.split("e+")
    expected = math.log10(3.0) + s / 2 / math.log(10)
    assert int(exp) == math.floor(expected)
    assert float(mant) == pytest.approx(10 ** (expected - math.floor(expected)), rel=1e-9)
    assert cmp._fmt_scaled(-2.0, 1.0) == f"{-2.0 * math.e:.17g}"
    assert cmp._fmt_scaled(0.0, 1e6) == "0"
