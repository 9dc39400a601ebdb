"""Streaming simulation of the radial chaos integral for batches of samples.

A chunk of samples is advanced one grid step at a time. Per step the
Brownian part receives a Gaussian increment, every lateral mode takes its
exact autoregressive step, ``Z`` is evaluated by angular quadrature on the
``2N`` grid angles and the integrand ``f = exp(gamma (B - nu t)) Z`` is
accumulated by the trapezoid rule. Nothing is stored per time step, so long
horizons cost time but not memory.

Passage levels of ``B - nu t`` are detected with the Brownian-bridge rule of
:mod:`liouville_mc.passage`; integrals up to a passage time use the linear
interpolant of ``f`` on the straddling cell.

Every chunk draws from streams keyed by ``(seed, component, chunk index)``;
chunks are combined in index order, so results do not depend on how many
worker processes ran them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import DomainError, HorizonError
from .field import harmonic_number, mode_basis
from .passage import bridge_cross_probability, bridge_hit_offset

AngularWeight = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class ChaosModel:
    """Discretization of the radial chaos integrand ``exp(gamma (B_r - nu r)) Z_r``."""

    gamma: float
    nu: float
    dt: float = 1.0 / 256.0
    n_modes: int = 64
    single_precision: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.n_modes < 1:
            raise DomainError("n_modes must be at least 1")


class LateralStepper:
    """Batch of truncated lateral fields advanced on the time grid.

    Coefficients are stored as ``(n, 2N)`` rows ``[a_1..a_N, b_1..b_N]`` so
    that ``Y`` on the angular grid is a single matrix product.
    """

    def __init__(self, n: int, n_modes: int, dt: float, gamma: float, gen: np.random.Generator,
                 single_precision: bool = True):
        self.dtype = np.float32 if single_precision else np.float64
        self.gen = gen
        modes = np.arange(1, n_modes + 1, dtype=float)
        rho = np.exp(-modes * dt)
        self.rho = np.concatenate([rho, rho]).astype(self.dtype)
        self.innov = np.sqrt(-np.expm1(-2.0 * np.concatenate([modes, modes]) * dt)).astype(self.dtype)
        cos_tab, sin_tab = mode_basis(n_modes)
        self.basis = (gamma * np.vstack([cos_tab, sin_tab])).astype(self.dtype)
        self.norm = self.dtype(0.5 * gamma * gamma * harmonic_number(n_modes))
        self.n_angles = 2 * n_modes
        self.coef = gen.standard_normal((n, 2 * n_modes), dtype=self.dtype)

    def step(self) -> None:
        noise = self.gen.standard_normal(self.coef.shape, dtype=self.dtype)
        self.coef *= self.rho
        noise *= self.innov
        self.coef += noise

    def chaos(self, weights: np.ndarray | None = None) -> np.ndarray:
        """``Z`` per sample, or ``(n, W)`` weighted averages when ``weights`` has shape ``(W, 2N)``."""
        e = self.coef @ self.basis
        e -= self.norm
        np.exp(e, out=e)
        if weights is None:
            return e.mean(axis=1, dtype=np.float64)[:, None]
        return (e @ weights.T.astype(self.dtype)).astype(np.float64) / self.n_angles

    def keep(self, mask: np.ndarray) -> None:
        self.coef = self.coef[mask]


def _interp_integral(f0, f1, dt, u0, u1):
    """Integral over ``[u0, u1]`` (offsets within a cell of width ``dt``) of the linear interpolant."""
    v0 = f0 + (u0 / dt) * (f1 - f0)
    v1 = f0 + (u1 / dt) * (f1 - f0)
    return 0.5 * (u1 - u0) * (v0 + v1)


def _grid_index(t: float, dt: float) -> tuple[int, float]:
    k = int(math.floor(t / dt + 1e-9))
    rem = t - k * dt
    return k, (0.0 if rem < 1e-9 * dt else rem)


@dataclass
class FixedTimeBatch:
    """Per-sample values at the checkpoint times.

    ``brownian[:, j]`` is ``B`` at ``times[j]`` and ``integral[:, j, w]`` the
    chaos integral up to ``times[j]`` with angular weight set ``w``.
    """

    times: np.ndarray
    brownian: np.ndarray
    integral: np.ndarray


def simulate_fixed_time(model: ChaosModel, times: Sequence[float], n: int, seed: int, chunk: int,
                        angular_weight: AngularWeight | None = None) -> FixedTimeBatch:
    """Simulate one chunk up to ``max(times)``, recording ``B`` and the integral at each time.

    ``angular_weight(t)`` may return a ``(W, 2N)`` array of non-negative
    weights on the quadrature angles at time ``t``; ``Z`` is then replaced by
    the ``W`` weighted angular averages.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("checkpoint times must be non-negative and sorted")
    dt, g, nu = model.dt, model.gamma, model.nu
    gen_b = _rng.stream(seed, _rng.RADIAL, chunk)
    lateral = LateralStepper(n, model.n_modes, dt, g, _rng.stream(seed, _rng.LATERAL, chunk),
                             model.single_precision)
    weight = angular_weight(0.0) if angular_weight else None
    z = lateral.chaos(weight)
    n_sets = z.shape[1]
    marks = [_grid_index(t, dt) for t in times]
    k_end = max((k + (1 if r > 0 else 0) for k, r in marks), default=0)
    out_b = np.zeros((n, len(times)))
    out_i = np.zeros((n, len(times), n_sets))
    b = np.zeros(n)
    integral = np.zeros((n, n_sets))
    f = z.copy()
    sqdt = math.sqrt(dt)
    j = 0
    while j < len(times) and marks[j] == (0, 0.0):
        j += 1
    for k in range(k_end):
        t1 = (k + 1) * dt
        b_new = b + sqdt * gen_b.standard_normal(n)
        lateral.step()
        z_new = lateral.chaos(angular_weight(t1) if angular_weight else None)
        f_new = np.exp(g * (b_new - nu * t1))[:, None] * z_new
        while j < len(times) and marks[j][0] == k and marks[j][1] > 0:
            rem = marks[j][1]
            out_b[:, j] = b + (rem / dt) * (b_new - b)
            out_i[:, j] = integral + _interp_integral(f, f_new, dt, 0.0, rem)
            j += 1
        integral += 0.5 * dt * (f + f_new)
        b, f = b_new, f_new
        while j < len(times) and marks[j] == (k + 1, 0.0):
            out_b[:, j] = b
            out_i[:, j] = integral
            j += 1
    return FixedTimeBatch(times=times, brownian=out_b, integral=out_i)


@dataclass
class PassageBatch:
    """Per-sample passage data for levels ``0..N``.

    ``times[:, n]`` is ``T_n``, ``integral[:, n]`` the chaos integral up to
    ``T_n`` and, when a tail horizon was requested, ``tail[:, n]`` is
    ``int_{T_n}^{T_n + H} f(r) exp(-gamma alpha (r - T_n)) dr``.
    ``extended`` counts samples that needed more than the nominal horizon.
    """

    times: np.ndarray
    integral: np.ndarray
    tail: np.ndarray | None
    extended: int


def nominal_passage_horizon(nu: float, n_levels: int) -> float:
    """Horizon exceeding ``T_N`` except with small probability (mean plus six standard deviations)."""
    mean = n_levels / nu
    return mean + 6.0 * math.sqrt(n_levels / nu ** 3) + 1.0


def simulate_passages(model: ChaosModel, alpha: float, n_levels: int, n: int, seed: int, chunk: int,
                      tail_horizon: float | None = None, horizon: float | None = None,
                      max_doublings: int = 3, compact_every: int = 32) -> PassageBatch:
    """Simulate one chunk until every sample has passed level ``-n_levels`` (and finished its tails).

    A sample that is still running at the nominal horizon simply keeps
    running on the same realization; after ``max_doublings`` doublings of the
    horizon a :class:`HorizonError` is raised.
    """
    if n_levels < 0:
        raise DomainError("n_levels must be non-negative")
    dt, g, nu = model.dt, model.gamma, model.nu
    if horizon is None:
        horizon = nominal_passage_horizon(nu, n_levels)
    run_for = horizon + (tail_horizon or 0.0)
    k_nominal = int(math.ceil(run_for / dt))
    k_cap = int(math.ceil(run_for * 2 ** max_doublings / dt))
    n_lv = n_levels + 1
    out_t = np.zeros((n, n_lv))
    out_i = np.zeros((n, n_lv))
    out_tail = np.zeros((n, n_lv)) if tail_horizon else None
    if n_levels == 0 and not tail_horizon:
        return PassageBatch(out_t, out_i, out_tail, 0)

    gen_b = _rng.stream(seed, _rng.RADIAL, chunk)
    gen_x = _rng.stream(seed, _rng.CROSSING, chunk)
    lateral = LateralStepper(n, model.n_modes, dt, g, _rng.stream(seed, _rng.LATERAL, chunk),
                             model.single_precision)
    idx = np.arange(n)
    b = np.zeros(n)
    level = np.zeros(n, dtype=np.int64)
    integral = np.zeros(n)
    f = lateral.chaos()[:, 0]
    pass_t = np.zeros((n, n_lv))
    pass_i = np.zeros((n, n_lv))
    tail = np.zeros((n, n_lv)) if tail_horizon else None
    sqdt = math.sqrt(dt)
    extended = 0
    k = 0
    while len(idx):
        if k >= k_cap:
            raise HorizonError(f"passage simulation exhausted {k_cap} steps",
                               deepest_level=int(level.min()))
        if k == k_nominal:
            extended += len(idx)
        t0, t1 = k * dt, (k + 1) * dt
        b_new = b + sqdt * gen_b.standard_normal(len(idx))
        lateral.step()
        f_new = np.exp(g * (b_new - nu * t1)) * lateral.chaos()[:, 0]

        if tail is not None:
            # tails already running over the whole cell
            run = (level[:, None] >= np.arange(n_lv)) & (pass_t < t0 + 1e-15) \
                & (pass_t + tail_horizon > t0)
            if run.any():
                decay0 = np.exp(-g * alpha * (t0 - pass_t))
                decay1 = np.exp(-g * alpha * (t1 - pass_t))
                tail += np.where(run, 0.5 * dt * (f[:, None] * decay0 + f_new[:, None] * decay1), 0.0)

        # level crossings inside the cell, possibly several
        start_t = np.full(len(idx), t0)
        start_x = b - nu * t0
        end_x = b_new - nu * t1
        todo = np.nonzero(level < n_levels)[0]
        while len(todo):
            lv = level[todo] + 1
            a = start_x[todo] + lv
            bb = end_x[todo] + lv
            h = t1 - start_t[todo]
            u = gen_x.random(len(todo))
            hit = (bb <= 0) | (u < bridge_cross_probability(a, bb, h))
            todo = todo[hit]
            if not len(todo):
                break
            a, bb, h, lv = a[hit], bb[hit], h[hit], lv[hit]
            tau = start_t[todo] + bridge_hit_offset(a, bb, h, gen_x)
            tau = np.maximum(tau, np.nextafter(pass_t[todo, lv - 1], np.inf))
            u0 = tau - t0
            pass_t[todo, lv] = tau
            pass_i[todo, lv] = integral[todo] + _interp_integral(f[todo], f_new[todo], dt, 0.0, u0)
            if tail is not None:
                # partial first cell of the new tail, integrand f(r) exp(-gamma alpha (r - tau))
                v0 = f[todo] * np.exp(g * alpha * u0)
                v1 = f_new[todo] * np.exp(-g * alpha * (dt - u0))
                tail[todo, lv] = _interp_integral(v0, v1, dt, u0, dt)
            level[todo] = lv
            start_t[todo] = tau
            start_x[todo] = -lv.astype(float)
            todo = todo[level[todo] < n_levels]

        integral += 0.5 * dt * (f + f_new)
        b, f = b_new, f_new
        k += 1

        if k % compact_every == 0 or k >= k_cap:
            done = level >= n_levels
            if tail is not None:
                done &= pass_t[:, n_levels] + tail_horizon <= k * dt
            if done.any():
                fin = idx[done]
                out_t[fin] = pass_t[done]
                out_i[fin] = pass_i[done]
                if tail is not None:
                    out_tail[fin] = tail[done]
                keep = ~done
                idx, b, level, integral, f = idx[keep], b[keep], level[keep], integral[keep], f[keep]
                pass_t, pass_i = pass_t[keep], pass_i[keep]
                if tail is not None:
                    tail = tail[keep]
                lateral.keep(keep)
    return PassageBatch(out_t, out_i, out_tail, extended)


def chunk_sizes(n_samples: int, chunk_size: int) -> list[int]:
    if n_samples < 1:
        raise DomainError("n_samples must be positive")
    full, rest = divmod(n_samples, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunks(task: Callable, n_samples: int, chunk_size: int, workers: int = 1) -> list:
    """Run ``task(chunk_index, size)`` for every chunk and return the results in chunk order."""
    sizes = chunk_sizes(n_samples, chunk_size)
    if workers <= 1 or len(sizes) == 1:
        return [task(c, m) for c, m in enumerate(sizes)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(sizes)), sizes))
