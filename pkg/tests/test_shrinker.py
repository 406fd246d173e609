import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from bubblesheet.shrinker import (ellipse_lower_bound, graded_mesh, profile_residual, profile_rhs,
                                  solve_shrinker, tip_bound)

SQRT2 = math.sqrt(2)
SWEEP = (10.0, 20.0, 50.0, 100.0)
PROFILES = {a: solve_shrinker(a) for a in SWEEP}


@pytest.mark.parametrize("a", SWEEP)
def test_invariants(a):
    p = PROFILES[a]
    y = np.linspace(0, a, 5001)
    v, vp, vpp = p.evaluate(y)
    assert v[-1] == 0.0 and np.all(v[:-1] > 0)
    assert np.all(vpp[:-1] <= 1e-10)
    assert np.max(np.abs(p.residual())) < 1e-6
    assert np.max(np.abs(p.tip_residual())) < 1e-6


def test_center_value_near_cylinder_and_monotone():
    p20 = PROFILES[20.0]
    assert abs(p20.v0 - SQRT2) < 0.05
    gaps = [abs(PROFILES[a].v0 - SQRT2) for a in SWEEP]
    gaps.append(abs(solve_shrinker(200.0).v0 - SQRT2))
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_tip_bound_example():
    a, L = 20.0, 10.0
    v = PROFILES[a].evaluate(np.array([L - 1]))[0][0]
    assert v - SQRT2 <= tip_bound(a, L)
    assert tip_bound(a, L) == pytest.approx(-(81 - 5) / (SQRT2 * 400))


def test_residual_at_midpoint():
    a = 20.0
    v, vp, vpp = PROFILES[a].evaluate(np.array([a / 2]))
    assert abs(profile_residual(a / 2, v, vp, vpp)[0]) < 1e-10


def test_evaluate_boundaries_and_domain():
    p = PROFILES[20.0]
    v, vp, _ = p.evaluate(np.array([20.0]))
    assert v[0] == 0.0 and vp[0] == -np.inf
    for bad in (-0.1, 20.1):
        with pytest.raises(ValueError):
            p.evaluate(np.array([bad]))
    with pytest.raises(ValueError):
        solve_shrinker(5.0)


def test_center_slope_small_and_decaying():
    # the tip condition fixes the profile; v'(0) is not imposed but is tiny and falls off like a^-4
    slopes = [abs(PROFILES[a].slope0) for a in SWEEP]
    assert all(s2 < s1 for s1, s2 in zip(slopes, slopes[1:]))
    assert all(s * a**4 < 10 for s, a in zip(slopes, SWEEP))


def _tip_slope_oracle(a, h):
    """v'(a - h) from the two-term tip expansion y = a + c2 v^2 + c4 v^4."""
    c2 = -a / 8
    c4 = c2 / 32 + c2**3 / 2
    v = brentq(lambda s: c2 * s * s + c4 * s**4 + h, 0.0, math.sqrt(8 * h / a) * 1.01)
    return 1.0 / (2 * c2 * v + 4 * c4 * v**3)


@pytest.mark.parametrize("a", SWEEP)
def test_tip_slope_matches_expansion(a):
    v, vp, _ = PROFILES[a].evaluate(np.array([a - 1e-3]))
    assert v[0] > 0
    assert vp[0] == pytest.approx(_tip_slope_oracle(a, 1e-3), rel=2e-3)


@pytest.mark.parametrize("a", [10.0, 20.0])
def test_tip_steepness_below_minus_ten(a):
    v, vp, _ = PROFILES[a].evaluate(np.array([a - 1e-3]))
    assert v[0] > 0 and vp[0] < -10


def test_interpolation_error_decays_with_refinement():
    a = 20.0
    p = PROFILES[a]
    y_s = p.info["y_switch"]
    ref = solve_ivp(profile_rhs, (y_s, 0.0), [p.info["v_switch"], p.evaluate(np.array([y_s]))[1][0]],
                    method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
    y = np.linspace(0.05, y_s - 0.05, 997)
    errs = []
    for step in (0.2, 0.05, 0.0125):
        q = solve_shrinker(a, max_step=step)
        errs.append(np.max(np.abs(q.evaluate(y)[0] - ref.sol(y)[0])))
    assert errs[0] > errs[1] > errs[2]


def test_inverse_round_trip():
    p = PROFILES[50.0]
    s = np.linspace(0.0, p.v0, 400)
    X, Xp, _ = p.inverse(s)
    assert np.allclose(p.evaluate(X)[0], s, atol=1e-9)
    with pytest.raises(ValueError):
        p.inverse(np.array([p.v0 * 1.01]))


def test_scaled_profile():
    p = PROFILES[20.0]
    q = p.scaled(0.5)
    y = np.linspace(0, 19.9, 50)
    assert np.allclose(q.evaluate(y)[0], 0.5 * p.evaluate(y)[0])
    assert np.max(np.abs(q.residual())) > 0.1


@pytest.mark.parametrize("a", SWEEP)
def test_lies_above_inner_ellipse(a):
    y = np.linspace(0, a, 2001)
    lower = ellipse_lower_bound(a, y, 0.1)
    ok = np.isfinite(lower)
    assert np.all(PROFILES[a].evaluate(y)[0][ok] >= lower[ok])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(1e-4, 0.5), st.floats(1.01, 1.5), st.floats(1e-3, 1.0))
def test_graded_mesh_properties(start, span_scale, ratio, max_step):
    stop = start + 100 * span_scale
    m = graded_mesh(start, stop, ratio=ratio, first=1e-3, max_step=max_step)
    d = np.diff(m)
    assert m[0] == start and m[-1] == pytest.approx(stop, rel=1e-12)
    assert np.all(d > 0) and np.all(d <= max_step * 1.25 + 1e-12)


@pytest.mark.parametrize("a", SWEEP)
def test_csv_rows(tmp_path, a):
    n = PROFILES[a].to_csv(tmp_path / "p.csv")
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert data.shape == (n, 4)
    assert np.all(np.diff(data[:, 0]) > 0)
