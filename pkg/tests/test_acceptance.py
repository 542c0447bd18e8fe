"""Acceptance suite.

Every check prints one ``ACCEPT <id> PASS|FAIL`` line to the terminal
(even under output capture) and then asserts, so a red line is always a
failing test. Runtime limits are part of each criterion.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from risalloc.channel import ChannelRealization, RisConfig, build_effective
from risalloc.harness import Method, run_multi_user, run_single_user
from risalloc.mu_opt import (
    grad_phi,
    joint_optimize,
    objective_log,
    phase_ascent,
    power_objective,
    power_opt,
)
from risalloc.scenario import ScenarioConfig
from risalloc.su_opt import alternating_max, lb_max, ub_max

from conftest import crandn, random_effective
from oracles import central_difference, simplex_grid_two_users, snr_grid_optimum


@pytest.fixture
def report(request, pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(ok, detail, elapsed, limit=None):
        timing = f"{elapsed:.1f}s" + (f" (limit {limit:g}s)" if limit is not None else "")
        status = "N/A" if ok is None else ("PASS" if ok else "FAIL")
        line = f"ACCEPT {request.node.name}: {status} | {detail} | {timing}"
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def _db(x):
    return 10 * math.log10(x)


def test_c1_effective_channel_identity(report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    shapes = [(1 + int(rng.integers(0, 8)), 1 + int(rng.integers(0, 12))) for _ in range(96)]
    shapes += [(4, 1), (1, 1), (9, 3), (16, 4)]
    for n_b, n_r in shapes:
        real = ChannelRealization(crandn(rng, n_b, n_r), crandn(rng, 1, n_r), crandn(rng, 1, n_b),
                                  rng.uniform(1e-12, 1e-6, 1), rng.uniform(1e-12, 1e-6, 1),
                                  np.ones(1, int), np.ones(1, int))
        eff = build_effective(real)
        x = RisConfig(rng.uniform(0.1, 1.0), rng.uniform(-np.pi, np.pi, n_r)).coefficients
        ref = np.sqrt(real.beta_r[0]) * real.H @ np.diag(x) @ real.h[0]
        got = eff.D[0] @ x
        worst = max(worst, np.linalg.norm(ref - got) / np.linalg.norm(got))
    elapsed = time.perf_counter() - start
    assert any(r == 1 for _, r in shapes) and any(b > r for b, r in shapes)
    ok = worst < 1e-12 and elapsed < 1.0
    report(ok, f"100 shapes, worst rel err {worst:.2e} (< 1e-12)", elapsed, 1.0)
    assert ok


def test_c2_single_user_sandwich(report):
    start = time.perf_counter()
    am_gap, lb_excess, ub_gap = math.inf, -math.inf, math.inf
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        D, h_d = crandn(rng, 2, 2), crandn(rng, 2)
        v_star = snr_grid_optimum(D, h_d, 1.0, step_deg=1.0, n_random_w=10_000, rng=rng)
        am = alternating_max(D, h_d, 1.0)
        lb = lb_max(D, h_d, 1.0)
        ub = ub_max(D, h_d, 1.0)
        am_gap = min(am_gap, _db(am.gain) - _db(v_star))
        lb_excess = max(lb_excess, lb.gain - v_star)
        ub_gap = min(ub_gap, ub.bound_value - v_star)
    elapsed = time.perf_counter() - start
    ok = am_gap >= -0.1 and lb_excess <= 1e-9 and ub_gap >= -1e-9 and elapsed < 120
    report(ok, f"AM - V* >= {am_gap:+.5f} dB (>= -0.1), LB - V* <= {lb_excess:.2e} (<= 1e-9), "
               f"UB bound - V* >= {ub_gap:.3e} (>= -1e-9)", elapsed, 120)
    assert ok


def test_c3_gradient_matches_finite_differences(report):
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        K = int(rng.integers(1, 5))
        n_r = int(rng.integers(1, 17))
        eff = random_effective(rng, K, int(rng.integers(1, 6)), n_r)
        ris = RisConfig(rng.uniform(0.3, 1.0), rng.uniform(-np.pi, np.pi, n_r))
        eta = rng.uniform(0.1, 2.0, K)
        sigma2 = rng.uniform(0.1, 2.0)
        fd = central_difference(lambda p: objective_log(eff, RisConfig(ris.rho, p), eta, sigma2),
                                ris.phi, h=1e-6)
        g = grad_phi(eff, ris, eta, sigma2)
        worst = max(worst, float(np.max(np.abs(g - fd) / (np.abs(fd) + 1e-12))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 30
    report(ok, f"50 instances, worst componentwise rel err {worst:.2e} (< 1e-4)", elapsed, 30)
    assert ok


def test_c4_power_solve(report):
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    worst_rel, worst_budget, worst_kkt = -math.inf, 0.0, 0.0
    p_max, sigma2 = 10.0, 0.1
    for _ in range(50):
        a = rng.uniform(0.0, 1.0, (2, 2)) * rng.uniform(0.05, 2.0)
        a[np.diag_indices(2)] = rng.uniform(0.2, 5.0, 2)
        power, rep = power_opt(a, sigma2, p_max)
        solver = power_objective(power.eta, a, sigma2)
        grid, _ = simplex_grid_two_users(lambda e: power_objective(e, a, sigma2), p_max)
        # positive means the grid beat the solver
        worst_rel = max(worst_rel, (grid - solver) / abs(grid))
        worst_budget = max(worst_budget, abs(power.eta.sum() - p_max) / p_max)
        worst_kkt = max(worst_kkt, rep.kkt_residual)
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-6 and worst_budget <= 1e-9 and worst_kkt < 1e-6 and elapsed < 30
    report(ok, f"50 instances, grid ahead by <= {worst_rel:.2e} rel (<= 1e-6), "
               f"budget err {worst_budget:.1e} (<= 1e-9), KKT {worst_kkt:.1e} (< 1e-6)", elapsed, 30)
    assert ok


def test_c5_monotone_trajectories(report):
    rng = np.random.default_rng(505)
    start = time.perf_counter()
    violations = {"am": 0, "phase_ascent": 0, "joint": 0}
    for _ in range(100):
        D, h_d = crandn(rng, 4, 8), crandn(rng, 4)
        am = alternating_max(D, h_d, 1.0, init=RisConfig(1.0, rng.uniform(-np.pi, np.pi, 8)))
        violations["am"] += not am.report.is_monotone(1e-12)

        eff = random_effective(rng, 3, 3, 6)
        eta = rng.uniform(0.2, 2.0, 3)
        _, pa = phase_ascent(eff, RisConfig(1.0, rng.uniform(-np.pi, np.pi, 6)), eta, 0.5)
        violations["phase_ascent"] += not pa.is_monotone(1e-12)

        eff = random_effective(rng, 2, 3, 4)
        _, jr = joint_optimize(eff, 0.5, 2.0)
        violations["joint"] += not (jr.is_monotone(1e-12)
                                    and all(r.is_monotone(1e-12) for r in jr.inner_reports))
    elapsed = time.perf_counter() - start
    ok = not any(violations.values())
    report(ok, f"100 instances each, violations {violations}", elapsed)
    assert ok


@pytest.mark.slow
def test_c6_single_user_ordering(report):
    start = time.perf_counter()
    res = run_single_user(ScenarioConfig(), n_trials=1000, seed=2024)
    elapsed = time.perf_counter() - start
    med = {m: res[m].median for m in (Method.NO_OPT, Method.UB_MAX, Method.LB_MAX, Method.AM)}
    no, ub, lb, am = med[Method.NO_OPT], med[Method.UB_MAX], med[Method.LB_MAX], med[Method.AM]
    ok = (am >= lb and am >= ub and am - ub <= 3.0
          and min(ub, lb, am) - no > 3.0 and elapsed < 300)
    report(ok, f"medians dB NoOpt {no:.2f} UB {ub:.2f} LB {lb:.2f} AM {am:.2f}; "
               f"AM-UB {am - ub:.2f} (<= 3), min gain over NoOpt {min(ub, lb, am) - no:.2f} (> 3)",
           elapsed, 300)
    assert ok


@pytest.mark.slow
def test_c7_multi_user_ordering(report):
    cfg = ScenarioConfig(n_users=10, n_bs_antennas=16, n_ris_elements=32)
    start = time.perf_counter()
    res = run_multi_user(cfg, n_trials=200, seed=2024)
    elapsed = time.perf_counter() - start
    joint = res.metrics(Method.JOINT)
    deciles = np.arange(1, 10) / 10
    worst_decile = math.inf
    for m in (Method.ONLY_RIS, Method.ONLY_POWERS, Method.NO_OPT):
        gaps = [res[Method.JOINT].quantile(p) - res[m].quantile(p) for p in deciles]
        worst_decile = min(worst_decile, min(gaps))
    # paired: every baseline shares the joint optimizer's starting point
    trial_gap = min(float(np.min(joint - res.metrics(m)))
                    for m in (Method.ONLY_RIS, Method.ONLY_POWERS, Method.NO_OPT))
    ok = worst_decile >= 0 and trial_gap >= 0 and elapsed < 1800
    medians = ", ".join(f"{m} {res[m].median:.2f}" for m in res)
    report(ok, f"medians dB {medians}; worst decile gap {worst_decile:.3f} dB, "
               f"worst per-trial gap {trial_gap:.2e} dB (both >= 0)", elapsed, 1800)
    assert ok


def test_c8_cli_deterministic_across_workers(report, tmp_path):
    cfg = tmp_path / "cell.yaml"
    cfg.write_text("n_users: 3\nn_bs_antennas: 4\nn_ris_elements: 8\n")
    env = {k: v for k, v in os.environ.items() if k != "RISALLOC_WORKERS"}
    start = time.perf_counter()
    outputs = []
    for cmd in ("su", "mu"):
        for workers in ("1", "1", "2", "3"):
            proc = subprocess.run([sys.executable, "-m", "risalloc.cli", cmd, "--config", str(cfg),
                                   "--trials", "4", "--seed", "8", "--workers", workers],
                                  capture_output=True, env=env)
            assert proc.returncode == 0, proc.stderr
            outputs.append((cmd, proc.stdout))
    elapsed = time.perf_counter() - start
    distinct = {cmd: len({out for c, out in outputs if c == cmd}) for cmd in ("su", "mu")}
    ok = distinct == {"su": 1, "mu": 1}
    report(ok, f"distinct outputs over worker counts 1,1,2,3: {distinct}", elapsed)
    assert ok


def test_c9_absolute_curves_not_reproducible(report):
    report(None, "absolute CDF values and the imperfect-CSI gap are out of scope; "
                 "c6 and c7 cover the orderings", 0.0)
    pytest.skip("absolute curves are not reproducible; orderings are checked by c6 and c7")
