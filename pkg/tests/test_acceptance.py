"""Acceptance criteria: each test prints one PASS/FAIL line with its pinned tolerances.

Tolerances and runtime limits are fixed here and are not tuned per run.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bubblesheet.config import ExperimentConfig, default_config
from bubblesheet.experiments import ExperimentResult, phase_plane_checks, run_experiment
from bubblesheet.mz_dynamics import MZEnvelope, run_mz_monte_carlo


def _run(name, tmp_path: Path, *overrides, sub="run"):
    cfg = ExperimentConfig.parse(f"experiment={name}\n", overrides)
    out = tmp_path / sub
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = run_experiment(cfg, out)
    return res, time.perf_counter() - t0


def _checks(res: ExperimentResult) -> dict:
    return {c.name: c for c in res.checks}


def _detail(checks, names, elapsed, limit):
    parts = [f"{n}={checks[n].value:.3g} ({checks[n].limit})" for n in names]
    parts.append(f"runtime {elapsed:.1f} s < {limit:g} s")
    return "; ".join(parts)


def test_criterion_1_spectral(tmp_path, acceptance_report):
    res, elapsed = _run("spectral", tmp_path, "n1=64", "n2=64", "fields=20")
    c = _checks(res)
    names = ["eigen_residual", "orthogonality", "commutator"]
    ok = all(c[n].passed for n in names) and elapsed < 10
    acceptance_report(1, "spectral", ok, _detail(c, names, elapsed, 10))
    assert ok


def test_criterion_2_phase_plane(tmp_path, acceptance_report):
    res = ExperimentResult("mz")
    t0 = time.perf_counter()
    phase_plane_checks(res, tmp_path, runs=50, seed=42)
    elapsed = time.perf_counter() - t0
    c = _checks(res)
    names = ["fixed_points", "xy_confinement"]
    ok = all(c[n].passed for n in names) and elapsed < 30
    acceptance_report(2, "phase_plane", ok, _detail(c, names, elapsed, 30))
    assert ok


def test_criterion_3_merle_zaag_monte_carlo(acceptance_report):
    env = MZEnvelope(C0=1.0, gamma=0.5, tau_star=-60.0)
    t0 = time.perf_counter()
    results = run_mz_monte_carlo(env, runs=100, seed=42, tau0=-100.0, tau_end=-60.0)
    elapsed = time.perf_counter() - t0
    violations = sum(c.verdict == "violation" for _, c in results)
    stable = sum(not c.stable_bound_ok for _, c in results)
    inconclusive = sum(c.verdict == "inconclusive" for _, c in results)
    ok = len(results) == 100 and violations == 0 and stable == 0 and inconclusive == 0 and elapsed < 120
    acceptance_report(3, "merle_zaag", ok,
                      f"runs={len(results)} trichotomy_violations={violations} (== 0); "
                      f"stable_bound_violations={stable} (== 0); inconclusive={inconclusive}; "
                      f"runtime {elapsed:.1f} s < 120 s")
    assert ok


def test_criterion_4_shrinker(tmp_path, acceptance_report):
    res, elapsed = _run("shrinker", tmp_path, "a=10,20,50,100", "L=10")
    c = _checks(res)
    names = ["ode_residual", "concavity", "tip_bound"]
    ok = all(c[n].passed for n in names) and elapsed < 60
    acceptance_report(4, "shrinker", ok, _detail(c, names, elapsed, 60))
    assert ok


def test_criterion_5_barrier(tmp_path, acceptance_report):
    t0 = time.perf_counter()
    worst, closure, parts = math.inf, math.inf, []
    all_pass = True
    for a1, a2 in [(40, 40), (60, 40), (120, 40), (400, 40)]:
        res, _ = _run("barrier", tmp_path, f"a1={a1}", f"a2={a2}", "L=10", sub=f"b{a1}_{a2}")
        c = _checks(res)
        all_pass &= res.passed
        worst = min(worst, c["inner_barrier"].value)
        closure = min(closure, c["scaling_closure"].value)
        parts.append(f"({a1},{a2}):{c['inner_barrier'].value:.3g}")
    neg, _ = _run("barrier", tmp_path, "corrupt=0.5", sub="corrupt")
    control_fails = not neg.passed
    elapsed = time.perf_counter() - t0
    ok = all_pass and control_fails and elapsed < 120
    acceptance_report(5, "barrier", ok,
                      f"min residual/W {' '.join(parts)} (>= -1e-06); closure gain={closure:.3g} (>= -1e-06); "
                      f"corrupted control {'FAILS' if control_fails else 'passes'} "
                      f"(residual {_checks(neg)['inner_barrier'].value:.3g}); runtime {elapsed:.1f} s < 120 s")
    assert ok


def test_criterion_6_flow(tmp_path, acceptance_report):
    res, elapsed = _run("flow", tmp_path, "tau0=-200", "tau_end=-150", "n_theta=1")
    c = _checks(res)
    names = ["round_stationary", "growth_rates", "dh_selfsimilar", "ode_shadowing"]
    ok = all(c[n].passed for n in names) and elapsed < 300
    acceptance_report(6, "flow", ok, _detail(c, names, elapsed, 300))
    assert ok


def test_criterion_7_comparison(tmp_path, acceptance_report):
    res, elapsed = _run("compare", tmp_path, "samples=1000")
    c = _checks(res)
    names = ["f1_equality", "Psi_b_supersolution", "Phi_delta_supersolution", "heat_residual",
             "heat_shape", "heat_limits", "heat_erf_value"]
    ok = all(c[n].passed for n in names) and elapsed < 30
    acceptance_report(7, "comparison", ok, _detail(c, names, elapsed, 30))
    assert ok


# light overrides keep the rerun cheap; every experiment is covered
REPRO_OVERRIDES = {
    "spectral": ["n1=16", "n2=16", "n_theta=4", "fields=3", "seed=7"],
    "mz": ["runs=4", "xy_runs=3", "seed=42"],
    "shrinker": ["a=10,20"],
    "barrier": ["n_r=40", "n_theta=11"],
    "flow": ["tau0=-200", "tau_end=-195", "n1=16", "n2=16"],
    "compare": ["samples=50", "seed=3"],
}


def _csv_bodies(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_criterion_8_reproducibility(tmp_path, acceptance_report):
    differing, counted = [], 0
    for name, overrides in REPRO_OVERRIDES.items():
        first, _ = _run(name, tmp_path, *overrides, sub=f"{name}_a")
        second, _ = _run(name, tmp_path, *overrides, sub=f"{name}_b")
        a, b = _csv_bodies(tmp_path / f"{name}_a"), _csv_bodies(tmp_path / f"{name}_b")
        counted += len(a)
        if a.keys() != b.keys():
            differing.append(f"{name}:file-set")
        differing += [f"{name}:{k}" for k in a if a[k] != b.get(k)]
    ok = not differing and counted > 0
    acceptance_report(8, "reproducibility", ok,
                      f"{counted} CSV files over 6 experiments, byte-identical on rerun; "
                      f"differing={differing or 'none'}")
    assert ok


def test_cli_check_entry_point_lists_every_experiment(capsys):
    from bubblesheet.cli import EXIT_OK, run_checks

    code = run_checks(names=("shrinker", "compare"))
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "shrinker: PASS" in out and "compare: PASS" in out
