"""Numerical checks of the analytic estimates: freezing decay, small-indicator products,
decorrelation bounds over cutting annuli and renewal-time laws.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats

from .. import rng as _rng
from ..correlation import EstimatorConfig, fixed_time_run, passage_run
from ..errors import DomainError, HorizonError, VerificationError
from ..estimate import fit_slope
from ..field import angular_grid
from ..params import LiouvilleParams, RegionTag, region_classify
from ..passage import renewal_density, sample_first_passages
from .annuli import weak_correlation_delta


@dataclass(frozen=True)
class SlopeReport:
    predicted_exponent: float
    measured_slope: float
    se_slope: float
    grid: list


# ---------------------------------------------------------------------------
# freezing

def freezing_exponent(alphas: Sequence[float], params: LiouvilleParams) -> float:
    """``(sum alpha_i - Q)^2 / 2``."""
    return 0.5 * (sum(alphas) - params.q) ** 2


def freezing_points(n: int, epsilon: float) -> np.ndarray:
    """Insertion points inside ``B(0, epsilon)``: the origin for one point, else evenly spaced at radius ``epsilon/2``."""
    if n == 1:
        return np.zeros(1, dtype=complex)
    return 0.5 * epsilon * np.exp(2j * np.pi * (np.arange(n) + 0.25) / n)


def freezing_decay(alphas: Sequence[float], params: LiouvilleParams, eps_grid: Sequence[float],
                   cfg: EstimatorConfig) -> SlopeReport:
    """Decay of ``E[exp(-mu int_{eps<|x|<1} prod_i |x - x_i|^{-gamma alpha_i} M(d^2x))]`` in ``eps``.

    The annulus is the radial integral from log-radius 0 to ``ln(1/eps)``
    with drift ``Q - sum alpha``; away from the origin the insertion weight
    is ``|x|^{-gamma sum alpha}`` times the angular factor
    ``prod_i |1 - x_i/x|^{-gamma alpha_i}``. All radii share one simulation,
    with one angular weight set per ``eps``. The reported slope is that of
    the log-value against ``ln eps``.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("at least one insertion is required")
    if not sum(alphas) > params.q:
        raise DomainError("freezing requires sum(alphas) > Q")
    eps = np.asarray(eps_grid, dtype=float)
    if len(eps) < 2 or np.any(np.diff(eps) >= 0):
        raise DomainError("eps_grid must be strictly decreasing with at least two entries")
    if np.any(eps <= 0) or np.any(eps > 0.25):
        raise DomainError("eps_grid must lie in (0, 1/4]")
    cutoffs = np.log(1.0 / eps)
    theta = angular_grid(cfg.n_modes)
    points = [freezing_points(len(alphas), e) for e in eps]
    g = params.gamma

    def weight(u: float) -> np.ndarray:
        x = math.exp(-u) * np.exp(1j * theta)
        out = np.zeros((len(eps), len(theta)))
        for k, (pts, t_k) in enumerate(zip(points, cutoffs)):
            if u > t_k + cfg.dt:
                continue
            log_w = sum(-g * a * np.log(np.abs(1.0 - p / x)) for a, p in zip(alphas, pts))
            out[k] = np.exp(log_w)
        return out

    run = fixed_time_run(sum(alphas), params, cutoffs, cfg, angular_weight=weight)
    mass = 2.0 * math.pi * run.integral[:, np.arange(len(eps)), np.arange(len(eps))]
    values = np.exp(-params.mu * mass)
    fit = fit_slope(np.log(eps), values)
    return SlopeReport(freezing_exponent(alphas, params), fit.slope, fit.se, eps.tolist())


# ---------------------------------------------------------------------------
# small indicators

def _indicator_product(gamma: float, c_const: float, mu_eff: float, tol: float) -> float:
    if c_const == 0 or mu_eff == 0:
        return 1.0
    ratio = math.exp(-gamma / 2)
    log_total = 0.0
    i = 0
    while True:
        term = c_const * min(1.0, mu_eff * ratio ** i)
        log_total += math.log1p(term)
        # remaining factors are geometric once mu_eff e^{-gamma i/2} < 1
        if mu_eff * ratio ** i < 1.0 and c_const * mu_eff * ratio ** (i + 1) / (1.0 - ratio) < tol:
            return math.exp(log_total)
        i += 1


def small_indicator_bound(params: LiouvilleParams, c_const: float, zero_mode_c: float = 0.0,
                          tol: float = 1e-12) -> float:
    """``prod_{i>=0} (1 + C min(1, mu' e^{-gamma i / 2}))`` with ``mu' = mu e^{gamma c}``.

    For ``zero_mode_c > 0`` the value is compared with the ``c = 0`` product:
    shifting the index by ``k = ceil(2c)`` maps each factor onto an
    unshifted one of at least the same size, and the first ``k`` factors are
    at most ``1 + C`` each, so the ratio is at most ``(1 + C)^k``.
    A :class:`VerificationError` is raised if that fails.
    """
    if c_const < 0:
        raise DomainError("c_const must be non-negative")
    if params.mu < 0:
        raise DomainError("mu must be non-negative")
    g = params.gamma
    value = _indicator_product(g, c_const, params.mu * math.exp(g * zero_mode_c), tol)
    if zero_mode_c > 0:
        base = _indicator_product(g, c_const, params.mu, tol)
        allowed = (1.0 + c_const) ** math.ceil(2.0 * zero_mode_c)
        if value > base * allowed * (1.0 + 1e-9):
            raise VerificationError("zero-mode shift exceeds the (1+C)^ceil(2c) scaling")
    return value


# ---------------------------------------------------------------------------
# decorrelation over cutting annuli

@dataclass(frozen=True)
class DecorrelationReport:
    """Fitted constants and the out-of-sample comparison for every cutting-annuli index set.

    ``bounds[I] = C0 C^{#I} prod_{i in I} exp(-gamma i / (4 q))``; ``fresh``
    holds per-instance ``(estimate, se)`` arrays ordered like ``index_sets``.
    """

    c0: float
    c: float
    q: float
    delta: float
    index_sets: list
    bounds: np.ndarray
    calibration: np.ndarray
    fresh: list
    passed: bool

    @property
    def worst_excess(self) -> float:
        """Largest ``(estimate - bound) / se`` over instances and index sets (``-inf`` if all exact zeros)."""
        out = -np.inf
        for est, se in self.fresh:
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(se > 0, (est - self.bounds) / se, np.where(est > self.bounds, np.inf, -np.inf))
            out = max(out, float(np.max(z)))
        return out


def indicator_samples(times: np.ndarray, integral: np.ndarray, params: LiouvilleParams, beta: float,
                      delta: float, index_sets: Sequence[tuple]) -> np.ndarray:
    """Per-sample ``1{I cutting} prod_{i in I} e^{beta^2 (T_{i+1}-T_i)/2} 1{M_i > e^{gamma i/2}}``.

    ``M_i = e^{gamma i} (I_{T_{i+1}} - I_{T_i})`` is the chaos mass of the
    ``i``-th passage annulus seen from its own starting point.
    """
    g = params.gamma
    levels = np.arange(times.shape[1] - 1)
    gaps = np.diff(times, axis=1)
    masses = np.exp(g * levels) * np.diff(integral, axis=1)
    factor = np.exp(0.5 * beta * beta * gaps) * (masses > np.exp(0.5 * g * levels))
    out = np.empty((times.shape[0], len(index_sets)))
    for k, idx in enumerate(index_sets):
        v = np.prod(factor[:, list(idx)], axis=1)
        for a, b in zip(idx, idx[1:]):
            v = v * (times[:, b] - times[:, a + 1] > delta)
        out[:, k] = v
    return out


def _summaries(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def decorrelation_check(alpha: float, beta: float, params: LiouvilleParams, cfg: EstimatorConfig,
                        n_levels: int = 6, delta: float | None = None, q: float | None = None,
                        n_fresh: int = 20) -> DecorrelationReport:
    """Fit ``(C0, C)`` on a calibration run and test the bound on fresh runs.

    The calibration upper bounds ``mean + 3 se`` must lie below
    ``C0 C^{#I} prod e^{-gamma i/(4q)}`` for every index set; ``log C0`` and
    ``log C`` minimise the summed log-bound subject to that, with ``C0 >= 1``
    from the empty set. Each fresh run (independent seed, same parameters)
    passes when every estimate is at most its bound plus ``3 se``.
    """
    if region_classify(alpha, beta, params) is RegionTag.OUTSIDE_PENCIL:
        raise DomainError("(alpha, beta) must lie in the pencil region")
    if not alpha < params.q - params.gamma / 2:
        raise DomainError("the decorrelation bound requires alpha < Q - gamma/2")
    if not 1 <= n_levels <= 6:
        raise DomainError("n_levels must lie in [1, 6]")
    nu = params.q - alpha
    q_min = nu * nu / (nu * nu - beta * beta)
    q = 1.1 * q_min if q is None else float(q)
    if not q > q_min:
        raise DomainError(f"q must exceed {q_min}")
    delta = weak_correlation_delta(1.0 / (8.0 * params.gamma)) if delta is None else float(delta)
    g = params.gamma
    index_sets = [idx for r in range(1, n_levels + 1) for idx in itertools.combinations(range(n_levels), r)]
    sizes = np.array([len(idx) for idx in index_sets], dtype=float)
    decay = np.array([-g * sum(idx) / (4.0 * q) for idx in index_sets])

    def measure(seed: int):
        run = passage_run(alpha, params, n_levels, replace(cfg, seed=seed))
        return _summaries(indicator_samples(run.times, run.integral, params, beta, delta, index_sets))

    cal_mean, cal_se = measure(cfg.seed)
    upper = cal_mean + 3.0 * cal_se
    active = upper > 0
    # constraints log C0 + #I log C >= log(upper_I) - decay_I, and log C0 >= 0
    rhs = np.log(upper[active]) - decay[active]
    a_ub = np.column_stack([-np.ones(active.sum()), -sizes[active]])
    a_ub = np.vstack([a_ub, [-1.0, 0.0]])
    b_ub = np.concatenate([-rhs, [0.0]])
    cost = np.array([1.0 + active.sum(), sizes[active].sum()])
    res = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None), (None, None)])
    if not res.success:
        raise VerificationError(f"constant fit failed: {res.message}")
    log_c0, log_c = res.x
    bounds = np.exp(log_c0 + sizes * log_c + decay)
    fresh = [measure(_rng.child_seed(cfg.seed, 1 + k)) for k in range(n_fresh)]
    passed = all(np.all(est <= bounds * (1 + 1e-12) + 3.0 * se) for est, se in fresh)
    return DecorrelationReport(math.exp(log_c0), math.exp(log_c), q, delta, index_sets, bounds,
                               np.column_stack([cal_mean, cal_se]), fresh, passed)


# ---------------------------------------------------------------------------
# renewal

def residual_survival(x, t: float, nu: float) -> np.ndarray:
    """``P(R_t > x) = S(t+x) + int_0^t m'(u) S(t+x-u) du`` with ``S`` the survival of ``T_1``."""
    law = stats.invgauss(mu=1.0 / nu, scale=1.0)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = law.sf(t + xs)
    for k, xk in enumerate(xs):
        out[k] += integrate.quad(lambda u: float(renewal_density(u, nu)[0] * law.sf(t + xk - u)),
                                 0.0, t, limit=200)[0]
    return out


def stationary_residual_mean(nu: float) -> float:
    """Long-time mean residual ``E[T_1^2] / (2 E[T_1]) = (1/nu^2 + 1/nu) / 2``."""
    return 0.5 * (1.0 / nu ** 2 + 1.0 / nu)


def residual_samples(nu: float, t: float, n: int, seed: int, chunk: int = 65536) -> np.ndarray:
    """Residual times at ``t`` from ``n`` independent inverse Gaussian renewal sequences."""
    n_levels = int(math.ceil(nu * t + 8.0 * math.sqrt(max(t, 1.0) * nu) + 8.0))
    gen = _rng.stream(seed, _rng.PASSAGE, 40)
    out = np.empty(n)
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        times = np.cumsum(sample_first_passages(nu, (m, n_levels), gen), axis=1)
        beyond = times > t
        if not beyond[:, -1].all():
            raise HorizonError("renewal sequence ends before the query time", deepest_level=n_levels)
        k = beyond.argmax(axis=1)
        out[start:start + m] = times[np.arange(m), k] - t
    return out
