"""Acceptance criteria, one test each, printing one PASS/FAIL line per criterion."""

import hashlib
import math

import mpmath
import numpy as np
import pytest

from liouville_mc import cli
from liouville_mc.correlation import (EstimatorConfig, estimate_fixed_time, estimate_stopping, fixed_time_run,
                                      passage_run, zero_mode_integral)
from liouville_mc.estimate import fit_slope
from liouville_mc.params import LiouvilleParams
from liouville_mc.verify.estimates import freezing_decay
from liouville_mc.verify.inequalities import run_inequality_suite
from liouville_mc.verify.suites import annuli_suite, covariance_suite, renewal_suite

pytestmark = pytest.mark.acceptance

P1 = LiouvilleParams(1.0, 1.0)


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        assert passed, f"criterion {number} ({title}) failed: {detail}"
    return emit


def failed_rows(rows):
    return [r for r in rows if not r.passed]


def test_c01_covariance(report):
    rows = covariance_suite(seed=0, n_paths=100_000, n_modes=64)
    bad = failed_rows(rows)
    radial = sum(r.instance_id.startswith("radial") for r in rows)
    lateral = sum(r.instance_id.startswith("lateral") for r in rows)
    report(1, "covariance", radial == 10 and lateral == 20 and not bad,
           f"{radial} radial + {lateral} lateral pairs, {len(bad)} outside 3 SE")


def test_c02_first_passage(report):
    rows = renewal_suite(seed=0, n_draws=1_000_000)
    checks = [r for r in rows if r.statistic in ("mean_T1", "var_T1", "ks_pvalue")
              or r.statistic.startswith("E[exp")]
    bad = failed_rows(checks)
    mgf = sum(r.statistic.startswith("E[exp") for r in checks)
    report(2, "first passage", len(checks) == 12 and mgf == 5 and not bad,
           f"{len(checks)} checks (6 moments, KS, {mgf} transform values), failures: "
           f"{[(r.instance_id, r.statistic) for r in bad]}")


def test_c03_zero_cosmological_constant(report):
    p0 = LiouvilleParams(1.0, 0.0)
    worst = 0.0
    n = 0
    cfg = EstimatorConfig(n_samples=20_000, dt=1 / 32, n_modes=8, seed=3)
    for beta in (0.3, 1.0, 2.0):
        for t in (0.5, 1.5, 3.0):
            e = estimate_fixed_time(1.2, beta, p0, t, cfg)
            worst = max(worst, abs(e.mean.real - 1) / max(e.se_real, 1e-300), abs(e.mean.imag) / e.se_imag)
            n += 1
    for levels in (1, 2, 4):
        e = estimate_stopping(0.8, 0.5, p0, levels, cfg)
        worst = max(worst, abs(e.mean.real - 1) / e.se_real, abs(e.mean.imag) / e.se_imag)
        n += 1
    report(3, "mu = 0 identities", worst <= 3.0, f"{n} estimates, largest deviation {worst:.2f} SE")


def test_c04_martingale_region_convergence(report):
    cfg = EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=4)
    run = fixed_time_run(1.8, P1, np.arange(1.0, 8.0), cfg)
    fit = run.increment_log_slope(0.3)
    bound = -((0.7 ** 2 - 0.09) / 2) + 0.1
    report(4, "martingale-region convergence", fit.slope <= bound + 1e-12,
           f"slope of log|G(t+1)-G(t)| over t=1..6 = {fit.slope:.4f} (SE {fit.se:.4f}), bound {bound:.2f}")


def test_c05_stopping_region_boundedness(report):
    cfg = EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=5)
    run = passage_run(0.8, P1, 8, cfg)
    fit = fit_slope(np.arange(1.0, 9.0), run.samples(0.5)[:, 1:], log=False)
    report(5, "stopping-region boundedness", fit.slope <= 2 * fit.se,
           f"slope of |G(T_N)| over N=1..8 = {fit.slope:.5f}, 2 SE = {2 * fit.se:.5f}")


def test_c06_overlap_consistency(report):
    # nu = Q - alpha = 0.8, so depth N = 8 matches E[T_8] = t = 10
    cfg = EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=6)
    fixed = estimate_fixed_time(1.7, 0.2, P1, 10.0, cfg)
    stop = estimate_stopping(1.7, 0.2, P1, 8, EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=7))
    d = fixed.mean - stop.mean
    ok = (abs(d.real) <= 3 * math.hypot(fixed.se_real, stop.se_real)
          and abs(d.imag) <= 3 * math.hypot(fixed.se_imag, stop.se_imag))
    report(6, "overlap consistency", ok,
           f"fixed t=10: {fixed.mean:.4f} +- {fixed.se:.4f}, stopping N=8: {stop.mean:.4f} +- {stop.se:.4f}")


def test_c07_pencil_boundary_divergence(report):
    alpha = 1.7
    nu = P1.q - alpha
    cfg = EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=8)
    run = fixed_time_run(alpha, P1, np.arange(1.0, 6.0), cfg)
    outside = run.log_slope(1.5 * nu)
    inside = run.increment_log_slope(0.5 * nu)
    report(7, "pencil-boundary divergence", outside.slope > 0 and inside.slope < 0,
           f"log|G(t)| slope at beta=1.5(Q-a): {outside.slope:.4f} (SE {outside.se:.4f}); "
           f"log|G(t+1)-G(t)| slope at beta=0.5(Q-a): {inside.slope:.4f} (SE {inside.se:.4f})")


def test_c08_freezing(report):
    eps = [2.0 ** -k for k in range(2, 7)]
    cfg = EstimatorConfig(n_samples=20_000, dt=1 / 64, n_modes=16, seed=9)
    one = freezing_decay([3.5], P1, eps, cfg)
    two = freezing_decay([2.0, 2.0], P1, eps, cfg)
    ok = one.measured_slope >= 0.5 - 0.15 and two.measured_slope >= 1.125 - 0.25
    report(8, "freezing exponent", ok,
           f"alpha=3.5: slope {one.measured_slope:.3f} (SE {one.se_slope:.3f}, need >= 0.35); "
           f"(2,2): slope {two.measured_slope:.3f} (SE {two.se_slope:.3f}, need >= 0.875)")


def test_c09_zero_mode(report):
    p = LiouvilleParams(1.0, 1.3)
    worst = 0.0
    for mass in (0.2, 1.0, 9.0):
        for s in (0.3, 1.1 + 0.7j, 3.0):
            exact = complex(mpmath.gamma(s)) * p.mu ** -s * mass ** -s / p.gamma
            worst = max(worst, abs(zero_mode_integral(mass, s, p) - exact) / abs(exact))
    report(9, "zero-mode identity", worst <= 1e-6, f"3x3 grid, largest relative error {worst:.2e}")


def test_c10_combinatorics(report):
    rows = annuli_suite(seed=0, n_sequences=100, n=10)
    bad = failed_rows(rows)
    report(10, "combinatorial exactness", len(rows) == 400 and not bad,
           f"100 sequences x 4 exact checks, {len(bad)} failures")


def test_c11_inequalities(report):
    counts = {}
    for name in ("Girsanov", "KahaneConvexity", "KahaneDiagonal"):
        reps = run_inequality_suite(name, n_instances=100, seed=0)
        counts[name] = sum(not r.passed for r in reps)
    report(11, "inequality suites", not any(counts.values()),
           ", ".join(f"{k}: {v}/100 violations" for k, v in counts.items()))


def test_c12_modified_closeness(report):
    cfg = EstimatorConfig(n_samples=100_000, dt=1 / 32, n_modes=16, seed=12)
    run = passage_run(0.8, P1, 7, cfg, with_tail=True)
    gap = run.closeness_samples(0.5)
    g3, g6 = abs(gap[:, 3].mean()), abs(gap[:, 6].mean())
    fit = fit_slope(np.arange(1.0, 7.0), run.modified_increment_samples(0.5)[:, 1:])
    report(12, "modified-regularization closeness", g6 < g3 and fit.slope < 0,
           f"|modified - plain| at N=3: {g3:.2e}, N=6: {g6:.2e}; "
           f"increment log-slope {fit.slope:.3f} (SE {fit.se:.3f})")


def test_c13_cli_determinism(report, tmp_path):
    cfg_path = tmp_path / "scan.cfg"
    cfg_path.write_text("gamma = 1\nmu = 1\nalpha_grid = 1.5, 1.7\nbeta_grid = 0.2, 0.5\nhorizons = 1..3\n"
                        "n_samples = 2000\nmethod = FixedTime\nn_modes = 8\ndt = 0.0625\n", encoding="utf-8")
    stop_path = tmp_path / "stop.cfg"
    stop_path.write_text("gamma = 1\nmu = 1\nalpha_grid = 0.8\nbeta_grid = 0.5\nhorizons = 1..3\n"
                         "n_samples = 2000\nmethod = Modified\nn_modes = 8\ndt = 0.0625\n", encoding="utf-8")
    digests = []
    for rep in range(2):
        out = tmp_path / f"run{rep}"
        codes = [cli.main(["scan", "--config", str(cfg_path), "--seed", "11", "--out", str(out)]),
                 cli.main(["scan", "--config", str(stop_path), "--seed", "11", "--out", str(out),
                           "--workers", str(rep + 1)]),
                 cli.main(["verify", "--suite", "Annuli", "--seed", "11", "--out", str(out)]),
                 cli.main(["report", "--out", str(out)])]
        files = sorted(out.glob("*.csv"))
        digests.append(({f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in files}, codes))
    (a, codes_a), (b, codes_b) = digests
    report(13, "CLI determinism", a == b and len(a) == 4 and codes_a == codes_b == [0, 0, 0, 0],
           f"{len(a)} CSV files, hashes identical: {a == b}, exit codes {codes_a}")
