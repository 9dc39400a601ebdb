"""Monte-Carlo estimators of regularized local correlation functions.

With ``nu = Q - alpha``, ``M_t = exp(i beta B_t + beta^2 t / 2)`` and
``I_t = int_0^t exp(gamma (B_r - nu r)) Z_r dr``:

* fixed time:     ``G(t)   = E[M_t exp(-mu I_t)]``
* stopping time:  ``G(T_N) = E[M_{T_N} exp(-mu I_{T_N})]`` with ``T_N`` the
  passage of ``B - nu t`` below ``-N``, so that ``B_{T_N} = nu T_N - N``;
* modified:       ``E[exp((alpha + i beta) B_{T_N} - (alpha + i beta)^2 T_N / 2)
  exp(-mu int_0^inf exp(gamma (B_r - Q r)) Z_r dr)]`` where ``T_N`` is the passage
  of ``B - Q t`` below ``-N``. The real exponential is a change of measure
  under which ``B`` acquires drift ``alpha`` up to ``T_N``; the estimator
  samples that measure directly, giving
  ``E[M_{T_N} exp(-mu (I_{T_N} + R_N))]`` with
  ``R_N = int_{T_N}^inf f(r) exp(-gamma alpha (r - T_N)) dr`` on the same
  paths that produce ``G(T_N)``.

Differences between successive horizons use the martingale property of ``M``:
``G(t') - G(t) = E[M_{t'} (D_{t'} - D_t)]`` with ``D = exp(-mu I)``, which
removes the large variance of ``M`` from the difference.

A single simulation records every requested horizon, so all horizons share
common random numbers, and a single run can be evaluated at any ``beta`` and
``mu`` after the fact.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate, special

from . import rng as _rng
from .engine import (AngularWeight, ChaosModel, nominal_passage_horizon, run_chunks,
                     simulate_fixed_time, simulate_passages)
from .errors import DomainError
from .estimate import ComplexEstimate, SlopeFit, fit_slope
from .field import angular_grid
from .gmc import insertion_log_weight, mollified_lattice
from .params import Insertion, LiouvilleParams, exponent_s, in_pencil, seiberg_check


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling and discretization settings shared by all estimators.

    ``horizon`` caps the fixed-time horizon or, for passage estimators, sets
    the nominal simulation horizon (default: mean of ``T_N`` plus six standard
    deviations). ``tail_horizon`` is the time simulated after ``T_N`` for the
    modified estimator, default ``20 / (gamma Q)``.
    """

    n_samples: int = 10_000
    dt: float = 1.0 / 256.0
    n_modes: int = 64
    horizon: float | None = None
    cutoffs: tuple | None = None
    seed: int = 0
    chunk_size: int = 4096
    workers: int = 1
    single_precision: bool = True
    max_doublings: int = 3
    tail_horizon: float | None = None
    outer_grid_step: float = 1.0 / 16.0
    outer_epsilon: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.n_modes < 1:
            raise DomainError("n_modes must be at least 1")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be positive")
        if self.horizon is not None and self.horizon < self.dt:
            raise DomainError("horizon must be at least one time step")

    def model(self, params: LiouvilleParams, alpha: float) -> ChaosModel:
        return ChaosModel(gamma=params.gamma, nu=params.q - alpha, dt=self.dt,
                          n_modes=self.n_modes, single_precision=self.single_precision)


def _martingale(beta: float, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    # explicit cos/sin keeps (alpha, -beta) exactly conjugate to (alpha, beta)
    phase = beta * b
    amp = np.exp(0.5 * beta * beta * t)
    return amp * np.cos(phase) + 1j * (amp * np.sin(phase))


# ---------------------------------------------------------------------------
# fixed time

def _fixed_chunk(model: ChaosModel, times: tuple, seed: int, weight: AngularWeight | None,
                 chunk: int, size: int):
    return simulate_fixed_time(model, times, size, seed, chunk, weight)


@dataclass
class FixedTimeRun:
    """Per-sample ``B_t`` and ``I_t`` at a list of times for one ``alpha``."""

    alpha: float
    params: LiouvilleParams
    times: np.ndarray
    brownian: np.ndarray
    integral: np.ndarray
    seed: int

    def _mu(self, mu):
        return self.params.mu if mu is None else mu

    def damping(self, mu: float | None = None, weight_set: int = 0) -> np.ndarray:
        return np.exp(-self._mu(mu) * self.integral[:, :, weight_set])

    def samples(self, beta: float, mu: float | None = None, weight_set: int = 0) -> np.ndarray:
        """Per-sample integrands ``M_t D_t``, shape ``(n, n_times)``."""
        return _martingale(beta, self.brownian, self.times) * self.damping(mu, weight_set)

    def increment_samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        """Per-sample ``M_{t_{k+1}} (D_{t_{k+1}} - D_{t_k})``, unbiased for ``G(t_{k+1}) - G(t_k)``."""
        m = _martingale(beta, self.brownian, self.times)
        d = self.damping(mu)
        return m[:, 1:] * np.diff(d, axis=1)

    def estimates(self, beta: float, mu: float | None = None) -> list[ComplexEstimate]:
        s = self.samples(beta, mu)
        return [ComplexEstimate.from_samples(s[:, k], self.seed) for k in range(s.shape[1])]

    def increment_estimates(self, beta: float, mu: float | None = None) -> list[ComplexEstimate]:
        s = self.increment_samples(beta, mu)
        return [ComplexEstimate.from_samples(s[:, k], self.seed) for k in range(s.shape[1])]

    def log_slope(self, beta: float, mu: float | None = None) -> SlopeFit:
        """Slope of ``log|G(t)|`` against ``t``."""
        return fit_slope(self.times, self.samples(beta, mu))

    def increment_log_slope(self, beta: float, mu: float | None = None) -> SlopeFit:
        """Slope of ``log|G(t_{k+1}) - G(t_k)|`` against ``t_k``."""
        return fit_slope(self.times[:-1], self.increment_samples(beta, mu))


def fixed_time_run(alpha: float, params: LiouvilleParams, times: Sequence[float], cfg: EstimatorConfig,
                   angular_weight: AngularWeight | None = None) -> FixedTimeRun:
    """Simulate ``cfg.n_samples`` paths and record ``B`` and ``I`` at every time in ``times``."""
    times = np.sort(np.asarray(times, dtype=float))
    if cfg.horizon is not None and times[-1] > cfg.horizon + 1e-12:
        raise DomainError(f"t={times[-1]} exceeds the configured horizon {cfg.horizon}")
    task = functools.partial(_fixed_chunk, cfg.model(params, alpha), tuple(times), cfg.seed, angular_weight)
    parts = run_chunks(task, cfg.n_samples, cfg.chunk_size, cfg.workers)
    return FixedTimeRun(alpha=alpha, params=params, times=times,
                        brownian=np.concatenate([p.brownian for p in parts]),
                        integral=np.concatenate([p.integral for p in parts]), seed=cfg.seed)


def estimate_fixed_time(alpha: float, beta: float, params: LiouvilleParams, t: float,
                        cfg: EstimatorConfig) -> ComplexEstimate:
    """Monte-Carlo ``E[exp(i beta B_t + beta^2 t/2) exp(-mu I_t)]``."""
    if t < 0:
        raise DomainError("t must be non-negative")
    return fixed_time_run(alpha, params, [t], cfg).estimates(beta)[0]


# ---------------------------------------------------------------------------
# stopping times

def _passage_chunk(model: ChaosModel, alpha: float, n_levels: int, seed: int, tail: float | None,
                   horizon: float | None, max_doublings: int, chunk: int, size: int):
    return simulate_passages(model, alpha, n_levels, size, seed, chunk, tail_horizon=tail,
                             horizon=horizon, max_doublings=max_doublings)


@dataclass
class PassageRun:
    """Per-sample passage times, integrals and (optionally) tail integrals for levels ``0..N``."""

    alpha: float
    params: LiouvilleParams
    times: np.ndarray
    integral: np.ndarray
    tail: np.ndarray | None
    seed: int
    extended: int
    tail_horizon: float | None

    @property
    def nu(self) -> float:
        return self.params.q - self.alpha

    @property
    def n_levels(self) -> int:
        return self.times.shape[1] - 1

    def _mu(self, mu):
        return self.params.mu if mu is None else mu

    def martingale(self, beta: float) -> np.ndarray:
        levels = np.arange(self.n_levels + 1)
        return _martingale(beta, self.nu * self.times - levels, self.times)

    def samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        """Per-sample integrands of ``G(T_N)`` for every level, shape ``(n, N+1)``."""
        return self.martingale(beta) * np.exp(-self._mu(mu) * self.integral)

    def _require_tail(self):
        if self.tail is None:
            raise DomainError("this run was simulated without tail integrals")

    def modified_samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        """Per-sample integrands of the modified function for every level."""
        self._require_tail()
        return self.martingale(beta) * np.exp(-self._mu(mu) * (self.integral + self.tail))

    def increment_samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        d = np.exp(-self._mu(mu) * self.integral)
        return self.martingale(beta)[:, 1:] * np.diff(d, axis=1)

    def modified_increment_samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        """``M_{N+1} (Dm_{N+1} - Dm_N) + (M_{N+1} - M_N)(Dm_N - D_N)`` per sample."""
        self._require_tail()
        mu = self._mu(mu)
        m = self.martingale(beta)
        d = np.exp(-mu * self.integral)
        dm = np.exp(-mu * (self.integral + self.tail))
        return m[:, 1:] * np.diff(dm, axis=1) + np.diff(m, axis=1) * (dm[:, :-1] - d[:, :-1])

    def closeness_samples(self, beta: float, mu: float | None = None) -> np.ndarray:
        """Per-sample ``M_N (Dm_N - D_N)``: the modified minus the plain function at each level."""
        self._require_tail()
        mu = self._mu(mu)
        return self.martingale(beta) * (np.exp(-mu * (self.integral + self.tail)) - np.exp(-mu * self.integral))

    def diagnostics(self) -> dict:
        out = {"extended_paths": self.extended}
        if self.tail_horizon is not None:
            g, q = self.params.gamma, self.params.q
            rate = g * q - 0.5 * g * g
            out["tail_horizon"] = self.tail_horizon
            # mean of the omitted tail integrand under the sampling measure
            out["tail_bias_bound"] = math.exp(-rate * self.tail_horizon) / rate
        return out


def passage_run(alpha: float, params: LiouvilleParams, n_levels: int, cfg: EstimatorConfig,
                with_tail: bool = False) -> PassageRun:
    """Simulate ``cfg.n_samples`` paths through levels ``-1..-n_levels``."""
    if params.q - alpha <= 0:
        raise DomainError("passage levels are reached almost surely only when alpha < Q")
    tail = None
    if with_tail:
        tail = cfg.tail_horizon if cfg.tail_horizon is not None else 20.0 / (params.gamma * params.q)
    task = functools.partial(_passage_chunk, cfg.model(params, alpha), alpha, n_levels, cfg.seed,
                             tail, cfg.horizon, cfg.max_doublings)
    parts = run_chunks(task, cfg.n_samples, cfg.chunk_size, cfg.workers)
    return PassageRun(alpha=alpha, params=params,
                      times=np.concatenate([p.times for p in parts]),
                      integral=np.concatenate([p.integral for p in parts]),
                      tail=np.concatenate([p.tail for p in parts]) if with_tail else None,
                      seed=cfg.seed, extended=sum(p.extended for p in parts), tail_horizon=tail)


def _require_pencil(alpha: float, beta: float, params: LiouvilleParams) -> None:
    if not in_pencil(alpha, beta, params):
        raise DomainError(f"|beta| < Q - alpha is required (beta={beta}, Q-alpha={params.q - alpha})")


def estimate_stopping(alpha: float, beta: float, params: LiouvilleParams, n_levels: int,
                      cfg: EstimatorConfig) -> ComplexEstimate:
    """Monte-Carlo ``E[exp(i beta B_{T_N} + beta^2 T_N/2) exp(-mu I_{T_N})]``."""
    _require_pencil(alpha, beta, params)
    run = passage_run(alpha, params, n_levels, cfg)
    return ComplexEstimate.from_samples(run.samples(beta)[:, -1], cfg.seed, run.diagnostics())


def estimate_modified(alpha: float, beta: float, params: LiouvilleParams, n_levels: int,
                      cfg: EstimatorConfig) -> ComplexEstimate:
    """Monte-Carlo estimate of the modified regularization at level ``N``."""
    _require_pencil(alpha, beta, params)
    run = passage_run(alpha, params, n_levels, cfg, with_tail=True)
    return ComplexEstimate.from_samples(run.modified_samples(beta)[:, -1], cfg.seed, run.diagnostics())


# ---------------------------------------------------------------------------
# zero mode

def zero_mode_integral(mass: float, s: complex, params: LiouvilleParams) -> complex:
    """Quadrature of ``int exp(s gamma c) exp(-mu exp(gamma c) mass) dc`` over the real line.

    With ``u = gamma c + ln(mu mass)`` the integral is
    ``(mu mass)^{-s} / gamma * int exp(s u - e^u) du``. The left tail
    ``u < a`` is summed from the power series of ``exp(-e^u)``; the rest is
    integrated numerically on unit-length panels.
    """
    s = complex(s)
    if not mass > 0:
        raise DomainError("mass must be positive")
    if not s.real > 0:
        raise DomainError("Re(s) must be positive")
    if not params.mu > 0:
        raise DomainError("the zero-mode integral diverges when mu = 0")
    a, b = -8.0, 4.5
    # series: sum_k (-1)^k e^{(s+k)a} / (k! (s+k))
    left, term_k = 0j, 0
    while True:
        term = (-1) ** term_k * np.exp((s + term_k) * a - math.lgamma(term_k + 1)) / (s + term_k)
        left += term
        if abs(term) < 1e-18 * max(abs(left), 1e-300):
            break
        term_k += 1

    def part(fn, lo, hi):
        return integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)[0]

    re = lambda u: math.exp(s.real * u - math.exp(u)) * math.cos(s.imag * u)
    im = lambda u: math.exp(s.real * u - math.exp(u)) * math.sin(s.imag * u)
    edges = np.linspace(a, b, 26)
    body = sum(part(re, lo, hi) + 1j * part(im, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    # beyond b the integrand is below exp(s.real*b - e^b) ~ 1e-38
    scale = np.exp(-s * math.log(params.mu * mass))
    return complex(scale * (left + body) / params.gamma)


def zero_mode_closed_form(mass: float, s: complex, params: LiouvilleParams) -> complex:
    """``Gamma(s) mu^{-s} mass^{-s} / gamma``."""
    s = complex(s)
    return complex(np.exp(special.loggamma(s) - s * math.log(params.mu * mass)) / params.gamma)


# ---------------------------------------------------------------------------
# n-point moment form

def pair_prefactor(insertions: Sequence[Insertion]) -> float:
    """``prod_{k<l} |z_k - z_l|^{-alpha_k alpha_l}``."""
    log = 0.0
    for k in range(len(insertions)):
        for l in range(k + 1, len(insertions)):
            a, b = insertions[k], insertions[l]
            log -= a.alpha * b.alpha * math.log(abs(a.z - b.z))
    return math.exp(log)


def npoint_prefactor(insertions: Sequence[Insertion], params: LiouvilleParams) -> complex:
    """Deterministic factor ``(2/gamma) mu^{-s} Gamma(s) prod |z_k - z_l|^{-alpha_k alpha_l}``."""
    s = exponent_s(insertions, params)
    if not s.real > 0:
        raise DomainError("Re(s) must be positive")
    if not params.mu > 0:
        raise DomainError("mu must be positive")
    return complex(2.0 / params.gamma * np.exp(special.loggamma(s) - s * math.log(params.mu))
                   * pair_prefactor(insertions))


def _disk_weight(insertions: Sequence[Insertion], j: int, params: LiouvilleParams, n_modes: int):
    """Angular weights on the circle of log-radius ``u`` about ``z_j``.

    The factor ``|x - z_j|^{-gamma alpha_j}`` is carried by the drift, so the
    weight is the rest of the insertion weight times the spherical metric.
    """
    theta = angular_grid(n_modes)
    center = insertions[j].z
    others = [ins for k, ins in enumerate(insertions) if k != j]
    own_alpha = insertions[j].alpha

    def weight(u: float) -> np.ndarray:
        x = center + math.exp(-u) * np.exp(1j * theta)
        log_plus = np.log(np.maximum(np.abs(x), 1.0))
        log_w = insertion_log_weight(x, others, params) + params.gamma * own_alpha * log_plus - 4.0 * log_plus
        return np.exp(log_w)[None, :]

    return weight


def _outer_lattice(insertions: Sequence[Insertion], params: LiouvilleParams, cfg: EstimatorConfig):
    """Lattice for the region outside all unit disks, in the inverted coordinate ``y = 1/x``.

    The spherical kernel restricted to ``|x| > 1`` becomes ``-ln|y - y'|`` and
    ``g(x) d^2x`` becomes ``d^2y``, so the outer mass is a disk-kernel chaos on
    ``|y| < 1`` with weight ``F(1/y, z)``, excluding the images of the disks.
    """
    step = cfg.outer_grid_step
    eps = cfg.outer_epsilon if cfg.outer_epsilon is not None else 4.0 * step
    centers_z = [ins.z for ins in insertions[1:]]

    def region(y):
        inside = np.abs(y) < 1.0
        with np.errstate(divide="ignore"):
            x = 1.0 / y
        for z in centers_z:
            inside &= np.abs(x - z) >= 1.0
        return inside

    def weight(y):
        with np.errstate(divide="ignore"):
            x = 1.0 / y
        return np.exp(insertion_log_weight(x, insertions, params))

    return mollified_lattice(eps, (-1.0, 1.0, -1.0, 1.0), step, weight=weight, region=region)


def _check_configuration(insertions: Sequence[Insertion]) -> None:
    if insertions[0].z != 0:
        raise DomainError("the first insertion must sit at the origin")
    for k in range(len(insertions)):
        for l in range(k + 1, len(insertions)):
            if abs(insertions[k].z - insertions[l].z) < 2.0:
                raise DomainError("insertions must be at mutual distance at least 2")


def estimate_npoint(insertions: Sequence[Insertion], params: LiouvilleParams, cutoffs: Sequence[float],
                    cfg: EstimatorConfig, outer: str = "mollified", s: complex | None = None,
                    enforce_seiberg: bool = True) -> ComplexEstimate:
    """Monte-Carlo estimate of ``E[prod_j V_j * M^{-s}]`` for the cut-off n-point function.

    Each insertion ``j`` owns an independent radial decomposition inside
    ``B(z_j, 1)``, integrated down to radius ``exp(-t_j)``; the real parts of
    the weights are absorbed into the drift and the angular weights, leaving
    ``V_j = exp(i beta_j B_j(t_j) + beta_j^2 t_j / 2)``. The total mass is
    ``2 pi sum_j I_j`` plus the outer mass, which is a mollified lattice chaos
    (``outer="mollified"``) or its mean (``outer="mean"``). The complex power
    is ``exp(-s ln M)``. Multiply by :func:`npoint_prefactor` for the full
    correlation function.

    ``s`` overrides the exponent and ``enforce_seiberg=False`` skips the
    Seiberg check; both exist for reduction tests.
    """
    insertions = list(insertions)
    if not insertions:
        raise DomainError("at least one insertion is required")
    cutoffs = list(cfg.cutoffs if cutoffs is None else cutoffs)
    if len(cutoffs) != len(insertions) or any(t <= 0 for t in cutoffs):
        raise DomainError("one positive cutoff per insertion is required")
    _check_configuration(insertions)
    if enforce_seiberg and not seiberg_check(insertions, params):
        raise DomainError("the real parts violate the Seiberg bounds")
    for ins in insertions:
        _require_pencil(ins.alpha, ins.beta, params)
    s = exponent_s(insertions, params) if s is None else complex(s)
    if not s.real > 0:
        raise DomainError("Re(s) must be positive for the moment form")
    if outer not in ("mollified", "mean"):
        raise DomainError(f"unknown outer mode {outer!r}")

    vertex = np.ones(cfg.n_samples, dtype=complex)
    mass = np.zeros(cfg.n_samples)
    for j, (ins, t_j) in enumerate(zip(insertions, cutoffs)):
        seed_j = cfg.seed if j == 0 else _rng.child_seed(cfg.seed, j)
        weight = _disk_weight(insertions, j, params, cfg.n_modes)
        run = fixed_time_run(ins.alpha, params, [t_j], replace(cfg, seed=seed_j), angular_weight=weight)
        vertex *= _martingale(ins.beta, run.brownian[:, 0], np.full(cfg.n_samples, t_j))
        mass += 2.0 * math.pi * run.integral[:, 0, 0]
    lattice = _outer_lattice(insertions, params, cfg)
    if outer == "mean":
        mass += lattice.mean_mass
    else:
        mass += lattice.masses(params.gamma, _rng.stream(cfg.seed, _rng.LATTICE), cfg.n_samples)
    values = vertex * np.exp(-s * np.log(mass))
    return ComplexEstimate.from_samples(values, cfg.seed, {"exponent": s, "outer_mean_mass": lattice.mean_mass})
