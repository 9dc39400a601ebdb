import math

import mpmath
import numpy as np
import pytest

from liouville_mc import rng
from liouville_mc.correlation import (EstimatorConfig, estimate_fixed_time, estimate_modified, estimate_npoint,
                                      estimate_stopping, fixed_time_run, npoint_prefactor, pair_prefactor,
                                      passage_run, zero_mode_closed_form, zero_mode_integral)
from liouville_mc.errors import DomainError, HorizonError
from liouville_mc.gmc import mollified_lattice
from liouville_mc.params import Insertion, LiouvilleParams, exponent_s

FAST = EstimatorConfig(n_samples=4000, dt=1 / 32, n_modes=8, seed=1)


def zero_mode_oracle(mass, s, params):
    """The zero-mode integral over the real line, in high precision with mpmath."""
    g, mu = mpmath.mpf(params.gamma), mpmath.mpf(params.mu)
    s = mpmath.mpc(s)
    f = lambda c: mpmath.exp(s * g * c - mu * mpmath.exp(g * c) * mass)
    # finite limits: beyond them the integrand is below e^{-80} of its peak (an infinite limit overflows gmpy2)
    c_peak = float(mpmath.log(mpmath.re(s) / (mu * mass)) / g)
    lo = c_peak - 80 / (float(mpmath.re(s)) * float(g))
    hi = float(mpmath.log(700 / (mu * mass)) / g)
    return complex(mpmath.quad(f, mpmath.linspace(lo, hi, 12)))


# ---------------------------------------------------------------------------
# fixed time

def test_fixed_time_at_zero_is_one():
    for alpha, beta in ((1.8, 0.3), (0.2, -1.4), (0.0, 0.0)):
        est = estimate_fixed_time(alpha, beta, LiouvilleParams(1.0), 0.0, FAST)
        assert est.mean == 1.0 and est.se == 0.0


@pytest.mark.parametrize("beta, t", [(0.5, 1.0), (0.5, 3.0), (1.0, 2.0)])
def test_fixed_time_mu_zero_identity(beta, t):
    est = estimate_fixed_time(1.0, beta, LiouvilleParams(1.0, 0.0), t,
                              EstimatorConfig(n_samples=20_000, dt=1 / 32, n_modes=8, seed=2))
    assert est.agrees_with(1.0)


def test_fixed_time_conjugation_exact():
    p = LiouvilleParams(1.2, 0.7)
    run = fixed_time_run(1.1, p, [0.5, 1.0, 2.0], FAST)
    np.testing.assert_array_equal(run.samples(-0.4), np.conj(run.samples(0.4)))
    a = estimate_fixed_time(1.1, 0.4, p, 1.0, FAST)
    b = estimate_fixed_time(1.1, -0.4, p, 1.0, FAST)
    assert b.mean == a.mean.conjugate() and a.se_real == b.se_real and a.se_imag == b.se_imag


def test_fixed_time_modulus_bound():
    beta, times = 0.9, np.array([0.5, 1.0, 2.5])
    run = fixed_time_run(0.7, LiouvilleParams(1.0, 2.0), times, FAST)
    s = run.samples(beta)
    assert np.all(np.abs(s) <= np.exp(0.5 * beta * beta * times) * (1 + 1e-12))
    assert np.all(run.damping() <= 1) and np.all(run.damping() > 0)


def test_fixed_time_integral_monotone_in_t():
    run = fixed_time_run(0.5, LiouvilleParams(1.0), [0.25, 0.5, 1.0, 2.0], FAST)
    assert np.all(np.diff(run.integral[:, :, 0], axis=1) >= 0)
    assert np.all(run.integral[:, 0, 0] > 0)


def test_fixed_time_horizon_guard():
    with pytest.raises(DomainError):
        fixed_time_run(1.0, LiouvilleParams(1.0), [2.0], EstimatorConfig(n_samples=10, horizon=1.0))
    with pytest.raises(DomainError):
        estimate_fixed_time(1.0, 0.0, LiouvilleParams(1.0), -1.0, FAST)


@pytest.mark.slow
def test_fixed_time_against_mollified_oracle():
    # gamma = 1, alpha = 1.8, beta = 0, mu = 1, t = 3: the radial integral over [0, 3] is
    # 1/(2 pi) times the chaos mass of the annulus e^{-3} < |x| < 1 with weight |x|^{-gamma alpha}
    g, alpha, t = 1.0, 1.8, 3.0
    p = LiouvilleParams(g, 1.0)
    est = estimate_fixed_time(alpha, 0.0, p, t, EstimatorConfig(n_samples=100_000, dt=1 / 64, n_modes=32, seed=2))
    region = lambda c: (np.abs(c) < 1) & (np.abs(c) > math.exp(-t))
    weight = lambda c: np.abs(c) ** (-g * alpha)
    oracle = {}
    for k, (eps, step) in enumerate(((0.25, 1 / 16), (0.125, 1 / 32))):
        lat = mollified_lattice(eps, (-1, 1, -1, 1), step, weight=weight, region=region)
        exact_mean = 2 * math.pi * -math.expm1(-t * (2 - g * alpha + g * g / 2 - g * g / 2)) / (2 - g * alpha)
        assert lat.mean_mass == pytest.approx(exact_mean, rel=5e-3)
        v = np.exp(-lat.masses(g, rng.stream(7 + k, rng.LATTICE), 20_000) / (2 * math.pi))
        oracle[eps] = (v.mean(), v.std(ddof=1) / math.sqrt(len(v)))
    # mollification bias is first order in eps: extrapolate to eps -> 0
    extrap = 2 * oracle[0.125][0] - oracle[0.25][0]
    se = math.sqrt(est.se_real ** 2 + 4 * oracle[0.125][1] ** 2 + oracle[0.25][1] ** 2)
    assert abs(est.mean.real - extrap) <= 3 * se
    assert est.mean.imag == 0.0


# ---------------------------------------------------------------------------
# stopping and modified

def test_stopping_zero_levels_is_one():
    est = estimate_stopping(1.0, 0.4, LiouvilleParams(1.0), 0, FAST)
    assert est.mean == 1.0 and est.se == 0.0


@pytest.mark.parametrize("n_levels", [1, 3])
def test_stopping_mu_zero_identity(n_levels):
    p = LiouvilleParams(1.0, 0.0)
    alpha = p.q - 1.0
    est = estimate_stopping(alpha, 0.4, p, n_levels, EstimatorConfig(n_samples=20_000, dt=1 / 32, n_modes=4, seed=3))
    assert est.agrees_with(1.0)


def test_modified_degenerate_is_one():
    p = LiouvilleParams(1.0, 0.0)
    est = estimate_modified(0.0, 0.0, p, 2, FAST)
    assert est.mean == 1.0 and est.se == 0.0


@pytest.mark.parametrize("alpha, beta", [(1.0, 1.5), (2.0, 0.5), (0.5, -2.0)])
def test_pencil_required(alpha, beta):
    p = LiouvilleParams(1.0)
    with pytest.raises(DomainError):
        estimate_stopping(alpha, beta, p, 2, FAST)
    with pytest.raises(DomainError):
        estimate_modified(alpha, beta, p, 2, FAST)


def test_stopping_conjugation_and_modulus():
    p = LiouvilleParams(1.0, 1.0)
    run = passage_run(0.8, p, 3, FAST, with_tail=True)
    np.testing.assert_array_equal(run.samples(-0.5), np.conj(run.samples(0.5)))
    np.testing.assert_array_equal(run.modified_samples(-0.5), np.conj(run.modified_samples(0.5)))
    assert np.all(np.abs(run.samples(0.5)) <= np.exp(0.125 * run.times) * (1 + 1e-12))
    assert np.all(np.diff(run.times, axis=1) > 0)
    assert np.all(np.diff(run.integral, axis=1) >= 0) and np.all(run.tail >= 0)


def test_stopping_matches_passage_run_samples():
    p = LiouvilleParams(1.0)
    est = estimate_stopping(0.8, 0.5, p, 3, FAST)
    run = passage_run(0.8, p, 3, FAST)
    assert est.mean == pytest.approx(complex(run.samples(0.5)[:, -1].mean()), abs=1e-15)


def test_passage_horizon_exhaustion():
    cfg = EstimatorConfig(n_samples=200, dt=1 / 16, n_modes=4, seed=0, horizon=0.25, max_doublings=0)
    with pytest.raises(HorizonError):
        passage_run(0.5, LiouvilleParams(1.0), 4, cfg)
    # with doublings allowed the late paths keep running and are counted
    run = passage_run(0.5, LiouvilleParams(1.0), 2, EstimatorConfig(n_samples=200, dt=1 / 16, n_modes=4, seed=0,
                                                                    horizon=1.0, max_doublings=4))
    assert run.extended > 0 and run.diagnostics()["extended_paths"] == run.extended


def test_tail_horizon_doubling_within_bias_bound():
    p = LiouvilleParams(1.0, 1.0)
    base = EstimatorConfig(n_samples=20_000, dt=1 / 32, n_modes=8, seed=5, tail_horizon=2.0)
    short = passage_run(0.8, p, 2, base, with_tail=True)
    long = passage_run(0.8, p, 2, EstimatorConfig(**{**base.__dict__, "tail_horizon": 4.0}), with_tail=True)
    a = short.modified_samples(0.3)[:, -1]
    b = long.modified_samples(0.3)[:, -1]
    # paths desynchronize once finished samples are dropped, so the two runs are compared as independent
    se = math.sqrt(sum(x.real.var(ddof=1) + x.imag.var(ddof=1) for x in (a, b)) / len(a))
    bound = short.diagnostics()["tail_bias_bound"] * float(np.abs(short.martingale(0.3)[:, -1]).mean())
    assert abs(a.mean() - b.mean()) <= bound + 3 * se
    assert long.diagnostics()["tail_bias_bound"] < short.diagnostics()["tail_bias_bound"]
    assert long.tail.mean() > short.tail.mean()


# ---------------------------------------------------------------------------
# zero mode

@pytest.mark.parametrize("mass, s, expected", [(1.0, 1.0, 1.0), (1.0, 2.0, 1.0)])
def test_zero_mode_examples(mass, s, expected):
    assert zero_mode_integral(mass, s, LiouvilleParams(1.0, 1.0)) == pytest.approx(expected, rel=1e-10)


def test_zero_mode_gamma_example():
    p = LiouvilleParams(1.0, 0.5)
    expected = math.gamma(0.4) * 0.5 ** -0.4 * 2.0 ** -0.4
    assert zero_mode_integral(2.0, 0.4, p) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("mass", [0.3, 1.0, 7.5])
@pytest.mark.parametrize("s", [0.4, 1.3 + 0.5j, 2.7])
def test_zero_mode_grid(mass, s):
    p = LiouvilleParams(0.8, 1.7)
    q = zero_mode_integral(mass, s, p)
    assert abs(q - zero_mode_closed_form(mass, s, p)) <= 1e-6 * abs(q)
    assert abs(q - zero_mode_oracle(mass, s, p)) <= 1e-9 * abs(q)


def test_zero_mode_errors():
    p = LiouvilleParams(1.0)
    for mass, s in ((0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -0.5 + 1j)):
        with pytest.raises(DomainError):
            zero_mode_integral(mass, s, p)
    with pytest.raises(DomainError):
        zero_mode_integral(1.0, 1.0, LiouvilleParams(1.0, 0.0))


# ---------------------------------------------------------------------------
# n-point

def three_point(alpha=1.8, betas=(0.0, 0.0, 0.0), zs=(0, 2, 4)):
    return [Insertion(complex(z), alpha, b) for z, b in zip(zs, betas)]


def test_npoint_prefactor_example():
    p = LiouvilleParams(1.0, 1.0)
    ins = three_point()
    assert pair_prefactor(ins) == pytest.approx((2 * 4 * 2) ** -3.24)
    assert exponent_s(ins, p) == pytest.approx(0.4)
    assert npoint_prefactor(ins, p) == pytest.approx(2.0 * math.gamma(0.4) * (2 * 4 * 2) ** -3.24)


def test_npoint_rejections():
    p = LiouvilleParams(1.0, 1.0)
    cfg = EstimatorConfig(n_samples=10, dt=1 / 8, n_modes=4)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(), p, [1, 1, 1], cfg, s=0.0)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(), p, [1, 1, 1], cfg, s=-0.3 + 1j)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(zs=(0, 1.5, 4)), p, [1, 1, 1], cfg)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(alpha=1.5), p, [1, 1, 1], cfg)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(zs=(1, 3, 5)), p, [1, 1, 1], cfg)
    with pytest.raises(DomainError):
        estimate_npoint(three_point(), p, [1, 1], cfg)
    with pytest.raises(DomainError):
        npoint_prefactor(three_point(alpha=1.5), p)


def test_npoint_single_insertion_reduction():
    # n = 1 with the outer mass frozen at its mean against the local fixed-time machinery
    p = LiouvilleParams(1.0, 1.0)
    alpha, beta, t, s = 1.2, 0.3, 2.0, 0.7
    cfg = EstimatorConfig(n_samples=40_000, dt=1 / 32, n_modes=16, seed=11)
    est = estimate_npoint([Insertion(0, alpha, beta)], p, [t], cfg, outer="mean", s=s, enforce_seiberg=False)
    outer = est.diagnostics["outer_mean_mass"]
    assert outer == pytest.approx(math.pi, rel=2e-3)
    local = fixed_time_run(alpha, p, [t], EstimatorConfig(n_samples=40_000, dt=1 / 32, n_modes=16, seed=12))
    m = local.samples(beta, mu=0.0)[:, 0]
    values = m * (2 * math.pi * local.integral[:, 0, 0] + outer) ** -s
    se_r = values.real.std(ddof=1) / math.sqrt(len(values))
    se_i = values.imag.std(ddof=1) / math.sqrt(len(values))
    assert abs(est.mean.real - values.mean().real) <= 3 * math.hypot(est.se_real, se_r)
    assert abs(est.mean.imag - values.mean().imag) <= 3 * math.hypot(est.se_imag, se_i)


def test_npoint_sampled_outer_runs_and_conjugates():
    p = LiouvilleParams(1.0, 1.0)
    cfg = EstimatorConfig(n_samples=500, dt=1 / 16, n_modes=8, seed=3)
    zs = (0, 3, -3)
    a = estimate_npoint(three_point(betas=(0.1, -0.2, 0.0), zs=zs), p, [1, 1, 1], cfg)
    b = estimate_npoint(three_point(betas=(-0.1, 0.2, 0.0), zs=zs), p, [1, 1, 1], cfg)
    assert np.isfinite(a.mean) and abs(a.mean) > 0
    assert b.mean == pytest.approx(a.mean.conjugate(), abs=1e-12)
