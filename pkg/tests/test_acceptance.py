"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The expensive driver runs are module-scoped fixtures so that the cross-cutting
criteria (sandwich bounds, transport mass drift, maximum principles) are
measured over every run made here. Run with ``pytest tests/test_acceptance.py``;
the summary lines appear at the end of the terminal report.
"""

import math
import time

import numpy as np
import pytest

from wfrsplit import oracle
from wfrsplit.energy import Nonlinearity
from wfrsplit.frstep import (ReactionSpec, fisher_rao_step, fr_distance, fr_optimality_residual,
                             sandwich_factors)
from wfrsplit.grid import Grid
from wfrsplit.models import (ModelConfig, run_heleshaw, run_nutrient, run_prey_predator,
                             run_scalar)
from wfrsplit.validation import _fr_specs, _pairs_1d, fr_oracle
from wfrsplit.wstep import ALG2Config, dynamic_w2

pytestmark = pytest.mark.slow


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# ----------------------------------------------------------------------
# driver runs shared by several criteria
# ----------------------------------------------------------------------
def _heat(h):
    cfg = ModelConfig(n=(128,), h=h, T=0.05)
    x = cfg.grid.axes()[0]
    rho0 = 1.0 + np.exp(-0.5 * ((x - 0.5) / 0.08) ** 2)
    return cfg, rho0, run_scalar(cfg, rho0)


@pytest.fixture(scope="module")
def heat_runs():
    t0 = time.perf_counter()
    runs = {h: _heat(h) for h in (0.0025, 0.00125)}
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def recursion_run():
    lam, h, steps = 2.0, 0.01, 10
    cfg = ModelConfig(n=(32,), h=h, T=h * steps, V2=lam)
    traj, dt = _timed(run_scalar, cfg, np.full(32, 0.7))
    return lam, traj, dt


def _power_power(h):
    cfg = ModelConfig(n=(64,), h=h, T=0.2, diffusion="power", m1=2.0, reaction="power", m2=2.0,
                      V2=-1.0)
    x = cfg.grid.axes()[0]
    rho0 = 0.2 + np.exp(-0.5 * ((x - 0.4) / 0.1) ** 2)
    return run_scalar(cfg, rho0)


@pytest.fixture(scope="module")
def power_runs():
    return {h: _power_power(h) for h in (0.02, 0.01)}


@pytest.fixture(scope="module")
def nutrient_run():
    cfg = ModelConfig(family="nutrient", n=(32, 32), lengths=(4.0, 4.0), origin=(-2.0, -2.0),
                      h=0.005, T=0.1, m=20.0)
    X, Y = cfg.grid.centers()
    r = np.hypot(X, Y)
    rho0 = np.where(r < 1.0, 0.8, 0.0)
    c0 = 1.0 + 0.5 * np.exp(-((X - 0.5) ** 2 + Y ** 2))
    return run_nutrient(cfg, rho0, c0)


def _prey_predator_setup():
    cfg = ModelConfig(family="prey_predator", n=(64, 64), h=0.01, T=1.0, A=10.0, B=70.0, C=5.0)
    X, Y = cfg.grid.centers()
    r1 = 0.3 * (1 + 0.5 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    r2 = 0.1 * (1 + 0.5 * np.cos(np.pi * X))
    return cfg, r1, r2


@pytest.fixture(scope="module")
def prey_predator_run():
    cfg, r1, r2 = _prey_predator_setup()
    traj, dt = _timed(run_prey_predator, cfg, r1, r2)
    return traj, dt


HS_R, HS_HEIGHT = 2.0, 0.8


def _heleshaw(m):
    cfg = ModelConfig(family="heleshaw", n=(64, 64), lengths=(8.0, 8.0), origin=(-4.0, -4.0),
                      h=0.005, T=1.0, m=m)
    X, Y = cfg.grid.centers()
    rho0 = np.where(np.hypot(X, Y) < HS_R, HS_HEIGHT, 0.0)
    return run_heleshaw(cfg, rho0)


@pytest.fixture(scope="module")
def heleshaw_runs():
    out = {}
    for m in (100.0, 10.0):
        out[m] = _timed(_heleshaw, m)
    return out


@pytest.fixture(scope="module")
def all_runs(heat_runs, recursion_run, power_runs, nutrient_run, prey_predator_run,
             heleshaw_runs):
    runs = {f"heat h={h}": t for h, (_, _, t) in heat_runs[0].items()}
    runs["mass recursion"] = recursion_run[1]
    runs.update({f"power/power h={h}": t for h, t in power_runs.items()})
    runs["nutrient"] = nutrient_run
    runs["prey-predator"] = prey_predator_run[0]
    runs.update({f"heleshaw m={m:g}": t for m, (t, _) in heleshaw_runs.items()})
    return runs


def _steps(traj):
    return traj.diagnostics[1:]


# ----------------------------------------------------------------------
# 1, 2, 6: solver components against closed forms and oracles
# ----------------------------------------------------------------------
def test_01_fr_closed_form_and_metric_axioms(acceptance_log):
    t0 = time.perf_counter()
    g = Grid((16,))
    one, zero, four = np.ones(16), np.zeros(16), np.full(16, 4.0)
    const = max(abs(fr_distance(one, one, g)), abs(fr_distance(one, zero, g) - 4.0),
                abs(fr_distance(four, one, g) - 4.0))
    rng = np.random.default_rng(42)
    grid = Grid((24, 24))
    axioms = 0.0
    for _ in range(50):
        a, b, c = (rng.uniform(0.0, 3.0, grid.shape) for _ in range(3))
        dab, dba = fr_distance(a, b, grid), fr_distance(b, a, grid)
        axioms = max(axioms, abs(dab - dba))
        tri = math.sqrt(fr_distance(a, c, grid)) - math.sqrt(dab) - math.sqrt(fr_distance(b, c, grid))
        axioms = max(axioms, tri)
    dt = time.perf_counter() - t0
    ok = const <= 1e-12 and axioms <= 1e-8 and dt < 1.0
    acceptance_log("1", ok, f"FR constants err={const:.1e} (<=1e-12), metric axioms "
                            f"worst={axioms:.1e} (<=1e-8), {dt:.2f}s (<1s)")
    assert ok


def test_02_fr_step_optimality(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    cells, h = 1000, 0.05
    worst_res = worst_bf = 0.0
    for spec in _fr_specs(rng, cells):
        mu = rng.uniform(0.0, 1.0, cells)
        out = fisher_rao_step(mu, spec, h)
        res = np.abs(fr_optimality_residual(out, mu, spec, h)) / (1.0 + mu)
        worst_res = max(worst_res, float(res.max()))
        U = np.broadcast_to(spec.potential, mu.shape)
        s = np.broadcast_to(spec.scale, mu.shape)
        for i in range(0, cells, 37):
            ref = fr_oracle(mu[i], U[i], s[i], spec.nonlinearity, h)
            worst_bf = max(worst_bf, abs(ref - out[i]))
    dt = time.perf_counter() - t0
    ok = worst_res <= 1e-10 and worst_bf <= 1e-9 and dt < 10.0
    acceptance_log("2", ok, f"residual/(1+mu)={worst_res:.1e} (<=1e-10), oracle gap="
                            f"{worst_bf:.1e} (<=1e-9), 5x1000 cells, {dt:.1f}s (<10s)")
    assert ok


def test_06_alg2_against_exact_1d(acceptance_log):
    t0 = time.perf_counter()
    g = Grid((64,))
    cfg = ALG2Config(n_t=16, tol=1e-6, max_iter=3000)
    errs = []
    for r0, r1 in _pairs_1d(g.axes()[0]):
        exact = oracle.w2_exact_1d(r0, r1)
        errs.append(abs(dynamic_w2(r0, r1, g, cfg) - exact) / exact)
    dt = time.perf_counter() - t0
    ok = max(errs) <= 0.02 and dt < 120.0
    acceptance_log("6", ok, f"relative W2 errors {', '.join(f'{e:.1e}' for e in errs)} "
                            f"(<=2e-2), {dt:.1f}s (<120s)")
    assert ok


# ----------------------------------------------------------------------
# 7, 8, 11: scalar driver
# ----------------------------------------------------------------------
def test_07_scalar_driver_vs_finite_differences(heat_runs, acceptance_log):
    runs, run_time = heat_runs
    t0 = time.perf_counter()
    errs = {}
    for h, (cfg, rho0, traj) in runs.items():
        ref = oracle.fd_reference_scalar(cfg, rho0)
        diff = np.abs(traj.snapshots[-1]["rho"] - ref.snapshots[-1]).sum() * cfg.grid.cellvol
        errs[h] = diff / cfg.grid.mass(rho0)
    dt = run_time + time.perf_counter() - t0
    e1, e2 = errs[0.0025], errs[0.00125]
    ok = e1 <= 5e-2 and e2 < e1 and dt < 300.0
    acceptance_log("7", ok, f"L1/mass at h=0.0025: {e1:.2e} (<=5e-2), at h=0.00125: {e2:.2e} "
                            f"(decreasing), {dt:.0f}s (<300s)")
    assert ok


def test_08_exact_mass_recursion(recursion_run, acceptance_log):
    lam, traj, dt = recursion_run
    h = traj.config.h
    k = np.arange(len(traj.times))
    m0 = traj.diagnostics[0].mass_rho
    expected = m0 / (1 + h * lam / 2) ** (2 * k)
    err = float(np.max(np.abs(traj.column("mass_rho") - expected) / expected))
    ok = err <= 1e-8 and dt < 30.0
    acceptance_log("8", ok, f"relative mass error {err:.1e} (<=1e-8), {dt:.1f}s (<30s)")
    assert ok


def test_11_total_square_distance(power_runs, acceptance_log):
    totals = {}
    for h, traj in power_runs.items():
        rows = _steps(traj)
        totals[h] = sum(d.w2_sq + d.fr_sq for d in rows) / h
    a, b = totals[0.02], totals[0.01]
    ratio = max(a, b) / min(a, b)
    ok = ratio < 2.0
    acceptance_log("11", ok, f"sum(W^2+FR^2)/h = {a:.4g} at h=0.02, {b:.4g} at h=0.01, "
                             f"ratio {ratio:.3f} (<2)")
    assert ok


# ----------------------------------------------------------------------
# 9, 10: qualitative reproductions
# ----------------------------------------------------------------------
def _sign_changes(d):
    s = np.sign(d)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _prey_predator_rates(traj):
    """Per-species sandwich constants ``C_i = (upper - 1) / h`` over the run."""
    cfg = traj.config
    A, B, C, h = cfg.A, cfg.B, cfg.C, cfg.h
    c1 = c2 = 0.0
    for snap, half in zip(traj.snapshots[:-1], traj.half_snapshots):
        r1, r2 = snap["rho"], snap["rho2"]
        f1 = ReactionSpec(Nonlinearity.power(2.0), B * r2 / (1 + r1) - A, 0.5 * A)
        f2 = ReactionSpec(Nonlinearity.zero(), -B * r1 / (1 + r1) + C)
        c1 = max(c1, (sandwich_factors(half["rho"], f1, h)[1] - 1) / h)
        c2 = max(c2, (sandwich_factors(half["rho2"], f2, h)[1] - 1) / h)
    return c1, c2


def test_09_prey_predator_oscillation(prey_predator_run, acceptance_log):
    traj, dt = prey_predator_run
    T = traj.config.T
    m1, m2 = traj.column("mass_rho"), traj.column("mass_2")
    c1, c2 = _prey_predator_rates(traj)
    cap1, cap2 = math.exp(c1 * T) * m1[0], math.exp(c2 * T) * m2[0]
    bounded = (m1.min() > 0 and m2.min() > 0 and m1.max() <= cap1 and m2.max() <= cap2)
    d1, d2 = np.diff(m1), np.diff(m2)
    n1, n2 = _sign_changes(d1), _sign_changes(d2)
    anti = float(np.mean(np.sign(d1) == -np.sign(d2)))
    ok = bounded and n1 >= 2 and n2 >= 2 and anti >= 0.6 and dt <= 1200.0
    acceptance_log("9", ok, f"masses in (0, e^(C_i T) m_i(0)] with C=({c1:.3g}, {c2:.3g}): "
                            f"{bounded}; sign changes ({n1}, {n2}) (>=2); anti-phase "
                            f"{anti:.0%} (>=60%), {dt:.0f}s (<=1200s)")
    assert ok


def _saturation_and_expansion(traj):
    X, Y = traj.grid.centers()
    outside = np.hypot(X, Y) > 1.1 * HS_R
    rho = traj.field("rho")
    sat = np.flatnonzero(rho.max(axis=(1, 2)) >= 0.99)
    frac = np.array([r[outside].sum() / r.sum() for r in rho])
    exp = np.flatnonzero(frac >= 0.01)
    first = lambda idx: int(idx[0]) if idx.size else None  # noqa: E731
    return first(sat), first(exp)


def test_10_heleshaw_saturates_before_expanding(heleshaw_runs, acceptance_log):
    (t100, dt100), (t10, dt10) = heleshaw_runs[100.0], heleshaw_runs[10.0]
    sat, exp = _saturation_and_expansion(t100)
    c100 = t100.diagnostics[-1].complementarity
    c10 = t10.diagnostics[-1].complementarity
    dt = dt100 + dt10
    order = sat is not None and exp is not None and sat < exp
    ok = order and c100 < c10 and dt <= 1800.0
    acceptance_log("10", ok, f"m=100: saturation at step {sat}, expansion at step {exp}; "
                             f"complementarity {c100:.3g} (m=100) < {c10:.3g} (m=10), "
                             f"{dt:.0f}s (<=1800s)")
    assert ok


# ----------------------------------------------------------------------
# 3, 4, 5: invariants over every run above
# ----------------------------------------------------------------------
def test_03_sandwich_generic_families(all_runs, acceptance_log):
    counts = {name: sum(d.sandwich_violations for d in _steps(t))
              for name, t in all_runs.items() if t.config.family != "heleshaw"}
    bad = sum(counts.values())
    acceptance_log("3a", bad == 0, f"sandwich [1-ch, 1+Ch], C=3 max U^-: {bad} violations over "
                                   f"{len(counts)} non-Hele-Shaw runs (==0)")
    assert bad == 0


@pytest.mark.xfail(strict=True, reason="the Hele-Shaw FR ratio reaches 1/(1-h/2)^2 > 1+h at "
                                       "vanishing density, so the stated upper factor 1+h "
                                       "cannot hold; see the exact-factor check below")
def test_03_sandwich_full_matrix(all_runs, acceptance_log):
    counts = {name: sum(d.sandwich_violations for d in _steps(t)) for name, t in all_runs.items()}
    bad = sum(counts.values())
    hs = {n: c for n, c in counts.items() if n.startswith("heleshaw")}
    worst = max(max(d.fr_ratio_max for d in _steps(t)) - 1 - t.config.h
                for n, t in all_runs.items() if n.startswith("heleshaw"))
    acceptance_log("3", bad == 0, f"{bad} sandwich violations over {len(counts)} runs (==0); "
                                  f"Hele-Shaw {hs} with max ratio exceeding 1+h by {worst:.1e}")
    assert bad == 0


def test_03_sandwich_heleshaw_exact_factor(all_runs, acceptance_log):
    worst = -np.inf
    for name, t in all_runs.items():
        if t.config.family != "heleshaw":
            continue
        h = t.config.h
        exact = 1.0 / (1.0 - h / 2) ** 2
        worst = max(worst, max(d.fr_ratio_max for d in _steps(t)) / exact - 1.0)
        assert min(d.fr_ratio_min for d in _steps(t)) >= 1.0 - 1e-12
    ok = worst <= 1e-12
    acceptance_log("3b", ok, f"Hele-Shaw ratio within [1, 1/(1-h/2)^2]: max excess {worst:.1e} "
                             f"(<=1e-12)")
    assert ok


def test_04_transport_mass_conservation(all_runs, acceptance_log):
    worst = max(d.w_mass_drift for t in all_runs.values() for d in _steps(t))
    ok = worst <= 1e-8
    acceptance_log("4", ok, f"max relative W-step mass drift {worst:.1e} over {len(all_runs)} "
                            f"runs (<=1e-8)")
    assert ok


def test_05_maximum_principles(all_runs, acceptance_log):
    otto = -np.inf
    for name, t in all_runs.items():
        cfg = t.config
        if cfg.family == "prey_predator" or np.any(np.asarray(cfg.V1) != 0):
            continue
        rows = t.diagnostics
        otto = max(otto, max(b.linf_half - a.linf_rho for a, b in zip(rows, rows[1:])))
    cap = max(d.linf_rho for n, t in all_runs.items() if n.startswith("heleshaw")
              for d in t.diagnostics) - 1.0
    rows = all_runs["nutrient"].diagnostics
    c_fr = max(d.linf_2 - d.linf_2_half for d in rows[1:])
    c_w = max(b.linf_2_half - a.linf_2 for a, b in zip(rows, rows[1:]))
    ok = otto <= 1e-4 and cap <= 1e-4 and c_fr <= 1e-10 and c_w <= 1e-4
    acceptance_log("5", ok, f"Otto max increase {otto:.1e} (<=1e-4); Hele-Shaw max rho - 1 = "
                            f"{cap:.1e} (<=1e-4); nutrient c increase FR {c_fr:.1e} (<=1e-10), "
                            f"W {c_w:.1e} (<=1e-4)")
    assert ok
