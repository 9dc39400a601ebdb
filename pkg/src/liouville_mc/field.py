"""Log-correlated field on the unit disk via its radial decomposition.

In the log-radius coordinate ``s = -ln|x|`` the field splits into a circle
average, which is a standard Brownian motion ``B_s``, and an independent
lateral noise ``Y(s, theta)`` with kernel

    ln[(e^{-s} v e^{-t}) / |e^{-s} e^{i theta} - e^{-t} e^{i theta'}|]
        = sum_{n>=1} (1/n) e^{-n|t-s|} cos n(theta - theta').

The lateral part is synthesized mode by mode: ``a_n, b_n`` are stationary
Ornstein-Uhlenbeck paths with correlation ``e^{-n|t-s|}`` sampled exactly on
the time grid, and ``Y = sum_n n^{-1/2} (a_n cos n theta + b_n sin n theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import rng as _rng
from .errors import DivergenceError, DomainError

DEFAULT_N_MODES = 64
DEFAULT_DT = 1.0 / 256.0


def _n_steps(t_max: float, dt: float) -> int:
    if not t_max > 0 or not dt > 0:
        raise DomainError("t_max and dt must be positive")
    if dt > t_max:
        raise DomainError("dt must not exceed t_max")
    # tolerate t_max that is a multiple of dt up to rounding
    return int(math.ceil(t_max / dt - 1e-9))


@dataclass(frozen=True)
class RadialPath:
    """Brownian path on the uniform grid ``k*dt``."""

    dt: float
    values: np.ndarray
    seed: int

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))

    @property
    def t_max(self) -> float:
        return self.dt * (len(self.values) - 1)

    def value_at(self, t: float) -> float:
        """Linear interpolation of the path at time ``t``."""
        if t < 0 or t > self.t_max + 1e-12:
            raise DomainError(f"t={t} outside the sampled horizon [0, {self.t_max}]")
        return float(np.interp(t, self.times, self.values))


def sample_radial_path(t_max: float, dt: float, seed: int) -> RadialPath:
    """Standard Brownian motion started at 0, sampled on ``ceil(t_max/dt)+1`` grid points."""
    n = _n_steps(t_max, dt)
    gen = _rng.stream(seed, _rng.RADIAL)
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(math.sqrt(dt) * gen.standard_normal(n), out=values[1:])
    return RadialPath(dt=float(dt), values=values, seed=int(seed))


def sample_radial_paths(n_paths: int, t_max: float, dt: float, seed: int) -> np.ndarray:
    """Batch of independent Brownian paths, shape ``(n_paths, n_steps+1)``."""
    n = _n_steps(t_max, dt)
    gen = _rng.stream(seed, _rng.RADIAL, 1)
    out = np.zeros((n_paths, n + 1))
    np.cumsum(math.sqrt(dt) * gen.standard_normal((n_paths, n)), axis=1, out=out[:, 1:])
    return out


def ar1_paths(rate: np.ndarray, dt: float, n_steps: int, gen: np.random.Generator,
              shape: tuple = ()) -> np.ndarray:
    """Stationary unit-variance paths with correlation ``exp(-rate*|t-s|)``.

    Sampled exactly on the grid: unit-normal start, then
    ``x_{k+1} = rho x_k + sqrt(1-rho^2) xi`` with ``rho = exp(-rate*dt)``.
    Returns an array of shape ``shape + rate.shape + (n_steps+1,)``.
    """
    rate = np.asarray(rate, dtype=float)
    rho = np.exp(-rate * dt)
    full = shape + rate.shape
    noise = gen.standard_normal(full + (n_steps + 1,))
    noise[..., 1:] *= np.sqrt(-np.expm1(-2.0 * rate * dt))[..., None]
    out = np.empty_like(noise)
    flat_noise = noise.reshape(-1, n_steps + 1)
    flat_out = out.reshape(-1, n_steps + 1)
    flat_rho = np.broadcast_to(rho, full).reshape(-1)
    for k in range(flat_noise.shape[0]):
        flat_out[k] = lfilter([1.0], [1.0, -flat_rho[k]], flat_noise[k])
    return out


def angular_grid(n_modes: int) -> np.ndarray:
    """The ``2*n_modes`` uniform angles used for angular quadrature."""
    return np.pi * np.arange(2 * n_modes) / n_modes


def mode_basis(n_modes: int, theta: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Scaled cosine and sine tables ``n^{-1/2} cos(n theta)``, shape ``(n_modes, len(theta))``."""
    if theta is None:
        theta = angular_grid(n_modes)
    n = np.arange(1, n_modes + 1)[:, None]
    scale = 1.0 / np.sqrt(n)
    arg = n * np.asarray(theta, dtype=float)[None, :]
    return scale * np.cos(arg), scale * np.sin(arg)


def harmonic_number(n_modes: int) -> float:
    """Pointwise variance ``sum_{n<=N} 1/n`` of the truncated lateral field."""
    return float(np.sum(1.0 / np.arange(1, n_modes + 1)))


@dataclass(frozen=True)
class LateralField:
    """One realization of the mode-truncated lateral noise on a time grid.

    ``cos_paths[n-1, k]`` and ``sin_paths[n-1, k]`` hold ``a_n(k dt)`` and
    ``b_n(k dt)``.
    """

    n_modes: int
    dt: float
    t_max: float
    cos_paths: np.ndarray
    sin_paths: np.ndarray
    seed: int

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.cos_paths.shape[1])

    @property
    def variance(self) -> float:
        return harmonic_number(self.n_modes)

    def values(self, theta: np.ndarray | None = None) -> np.ndarray:
        """``Y(t_k, theta_j)`` with shape ``(n_times, n_theta)``; default angles are the quadrature grid."""
        cos_tab, sin_tab = mode_basis(self.n_modes, theta)
        return self.cos_paths.T @ cos_tab + self.sin_paths.T @ sin_tab


def synthesize_lateral(t_max: float, dt: float, n_modes: int, seed: int) -> LateralField:
    """Lateral noise truncated to ``n_modes`` Fourier modes.

    Mode ``n`` draws from its own stream ``(seed, LATERAL, n)``.
    """
    if n_modes < 1:
        raise DomainError("n_modes must be at least 1")
    n = _n_steps(t_max, dt)
    cos_paths = np.empty((n_modes, n + 1))
    sin_paths = np.empty((n_modes, n + 1))
    for mode in range(1, n_modes + 1):
        gen = _rng.stream(seed, _rng.LATERAL, mode)
        pair = ar1_paths(np.array([mode, mode]), dt, n, gen)
        cos_paths[mode - 1], sin_paths[mode - 1] = pair
    return LateralField(n_modes=int(n_modes), dt=float(dt), t_max=float(n * dt),
                        cos_paths=cos_paths, sin_paths=sin_paths, seed=int(seed))


def sample_lateral_at(times, angles, n_samples: int, n_modes: int, seed: int,
                      chunk: int = 8192) -> np.ndarray:
    """Samples of ``Y`` at the points ``(times[j], angles[j])``.

    The mode paths are sampled exactly at the sorted distinct times, so no
    time grid is involved. Returns shape ``(n_samples, len(times))``.
    """
    times = np.asarray(times, dtype=float)
    angles = np.asarray(angles, dtype=float)
    grid, where = np.unique(times, return_inverse=True)
    gaps = np.diff(grid)
    modes = np.arange(1, n_modes + 1, dtype=float)
    rho = np.exp(-np.outer(gaps, modes))              # (n_gaps, N)
    innov = np.sqrt(-np.expm1(-2.0 * np.outer(gaps, modes)))
    cos_tab = np.cos(np.outer(angles, modes)) / np.sqrt(modes)   # (n_points, N)
    sin_tab = np.sin(np.outer(angles, modes)) / np.sqrt(modes)
    out = np.empty((n_samples, len(times)))
    for c, start in enumerate(range(0, n_samples, chunk)):
        m = min(chunk, n_samples - start)
        gen = _rng.stream(seed, _rng.LATERAL, 0, c)
        coef = np.empty((2, m, len(grid), n_modes))
        coef[:, :, 0] = gen.standard_normal((2, m, n_modes))
        for k in range(len(gaps)):
            coef[:, :, k + 1] = rho[k] * coef[:, :, k] + innov[k] * gen.standard_normal((2, m, n_modes))
        a = coef[0][:, where]                         # (m, n_points, N)
        b = coef[1][:, where]
        out[start:start + m] = np.einsum("mpn,pn->mp", a, cos_tab) + np.einsum("mpn,pn->mp", b, sin_tab)
    return out


# ---------------------------------------------------------------------------
# kernels

def lateral_covariance(s, theta, t, theta2):
    """Exact lateral kernel ``ln[(e^{-s} v e^{-t}) / |e^{-s}e^{i theta} - e^{-t}e^{i theta2}|]``.

    Written as ``-ln|1 - r e^{i phi}|`` with ``r = e^{-|t-s|}``; the squared
    modulus is formed as ``(1-r)^2 + 4 r sin^2(phi/2)`` to stay accurate near
    the diagonal. Accepts scalars or broadcastable arrays.
    """
    r = np.exp(-np.abs(np.subtract(t, s)))
    half = np.sin(0.5 * np.subtract(theta, theta2))
    d2 = (1.0 - r) ** 2 + 4.0 * r * half * half
    if np.any(d2 == 0.0):
        raise DivergenceError("lateral kernel evaluated on its diagonal")
    out = -0.5 * np.log(d2)
    return float(out) if np.ndim(out) == 0 else out


def truncated_lateral_covariance(s, theta, t, theta2, n_modes: int):
    """The ``n_modes``-term Fourier partial sum of the lateral kernel."""
    n = np.arange(1, n_modes + 1)
    sep = np.abs(np.subtract(t, s))[..., None]
    phi = np.subtract(theta, theta2)[..., None]
    out = np.sum(np.exp(-n * sep) * np.cos(n * phi) / n, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def lateral_truncation_bound(n_modes: int, separation) -> float:
    """Tail bound ``sum_{n>N} e^{-n*sep}/n`` on the mode-truncation error (needs ``sep > 0``)."""
    sep = np.asarray(separation, dtype=float)
    if np.any(sep <= 0):
        raise DivergenceError("truncation tail diverges at zero time separation")
    r = np.exp(-sep)
    head = np.sum(r[..., None] ** np.arange(1, n_modes + 1) / np.arange(1, n_modes + 1), axis=-1)
    out = np.maximum(-np.log1p(-r) - head, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def sphere_covariance(x: complex, y: complex) -> float:
    """Whole-plane kernel ``-ln|x-y| + ln(|x| v 1) + ln(|y| v 1)``."""
    if x == y:
        raise DivergenceError("sphere kernel evaluated on its diagonal")
    return -math.log(abs(x - y)) + math.log(max(abs(x), 1.0)) + math.log(max(abs(y), 1.0))


def disk_covariance(x: complex, y: complex) -> float:
    """Dirichlet-free disk kernel ``-ln|x-y|``."""
    if x == y:
        raise DivergenceError("disk kernel evaluated on its diagonal")
    return -math.log(abs(x - y))
