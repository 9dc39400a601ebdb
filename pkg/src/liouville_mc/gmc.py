"""Multiplicative chaos integrals.

The radial representation of the chaos mass of the unit disk weighted by
``|x|^{-gamma*alpha}`` is

    int_0^t exp(gamma (B_r - (Q - alpha) r)) Z_r dr,

where ``Z_r`` is the angular average of the normalized exponential of the
lateral noise. ``Z`` is normalized to unit mean, so this integral equals the
plane chaos mass divided by ``2*pi``.

A lattice construction of a Gaussian-mollified field is provided as an
independent cross-check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import exp1

from . import rng as _rng
from .errors import DivergenceError, DomainError
from .field import LateralField, RadialPath
from .params import Insertion, LiouvilleParams

MAX_LATTICE_SITES = 4096


@dataclass(frozen=True)
class LateralChaosSlice:
    """``Z`` on the time grid of a lateral field.

    ``normalization`` is the subtracted ``gamma^2/2 * Var Y``, identical at
    every grid time for the truncated field.
    """

    z_values: np.ndarray
    normalization: float
    dt: float

    @property
    def t_max(self) -> float:
        return self.dt * (len(self.z_values) - 1)


@dataclass(frozen=True)
class ChaosSample:
    value: float
    t_span: tuple[float, float]
    params_used: LiouvilleParams
    alpha_drift: float


def lateral_chaos(field: LateralField, gamma: float) -> LateralChaosSlice:
    """Angular average of ``exp(gamma*Y - gamma^2/2 Var Y)`` by uniform quadrature on ``2N`` angles."""
    if not 0.0 < gamma < 2.0:
        raise DomainError(f"gamma must lie in (0,2), got {gamma!r}")
    norm = 0.5 * gamma * gamma * field.variance
    z = np.mean(np.exp(gamma * field.values() - norm), axis=1)
    return LateralChaosSlice(z_values=z, normalization=norm, dt=field.dt)


def trapezoid_to(f: np.ndarray, dt: float, t: float) -> float:
    """Trapezoid integral of grid samples ``f[k] = f(k dt)`` over ``[0, t]``.

    A final partial cell is integrated against the linear interpolant.
    """
    k = int(math.floor(t / dt + 1e-9))
    if k >= len(f) - 1:
        k = len(f) - 1
        rem = 0.0
    else:
        rem = max(t - k * dt, 0.0)
    total = dt * (np.sum(f[1:k]) + 0.5 * (f[0] + f[k])) if k > 0 else 0.0
    if rem > 1e-12 * dt:
        end = f[k] + (rem / dt) * (f[k + 1] - f[k])
        total += 0.5 * rem * (f[k] + end)
    return float(total)


def chaos_radial_integral(path: RadialPath, slice: LateralChaosSlice, params: LiouvilleParams,
                          alpha: float, t: float) -> float:
    """Trapezoid quadrature of ``int_0^t exp(gamma(B_r - (Q-alpha) r)) Z_r dr``."""
    if abs(path.dt - slice.dt) > 1e-12 * path.dt:
        raise DomainError("radial path and lateral slice use different time steps")
    horizon = min(path.t_max, slice.t_max)
    if t < 0 or t > horizon + 1e-9 * path.dt:
        raise DomainError(f"t={t} exceeds the sampled horizon {horizon}")
    n = min(len(path.values), len(slice.z_values))
    times = path.dt * np.arange(n)
    drift = params.q - alpha
    f = np.exp(params.gamma * (path.values[:n] - drift * times)) * slice.z_values[:n]
    return trapezoid_to(f, path.dt, t)


def radial_chaos_sample(path: RadialPath, slice: LateralChaosSlice, params: LiouvilleParams,
                        alpha: float, t: float) -> ChaosSample:
    value = chaos_radial_integral(path, slice, params, alpha, t)
    return ChaosSample(value=value, t_span=(0.0, float(t)), params_used=params, alpha_drift=alpha)


def insertion_log_weight(x, insertions: Sequence[Insertion], params: LiouvilleParams):
    """``log F(x, z) = sum_j gamma alpha_j (ln|x|_+ - ln|x - z_j|)``, vectorized over ``x``."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros(x.shape)
    if not insertions:
        return out
    log_plus = np.log(np.maximum(np.abs(x), 1.0))
    for ins in insertions:
        d = np.abs(x - ins.z)
        if np.any(d == 0.0):
            raise DivergenceError(f"weight evaluated at the insertion point {ins.z}")
        out += params.gamma * ins.alpha * (log_plus - np.log(d))
    return out


def insertion_weight(x: complex, insertions: Sequence[Insertion], params: LiouvilleParams) -> float:
    """``F(x, z) = prod_j (|x|_+ / |x - z_j|)^{gamma alpha_j}``, formed in log space."""
    return float(np.exp(insertion_log_weight(x, insertions, params)))


def sphere_metric(x) -> np.ndarray:
    """Spherical metric density ``|x|_+^{-4}``."""
    return np.maximum(np.abs(np.asarray(x)), 1.0) ** -4.0


def moment_threshold(alpha: float, params: LiouvilleParams) -> float:
    """Largest exponent ``p_c = min(4/gamma^2, (2/gamma)(Q-alpha))`` of finite positive moments."""
    if alpha >= params.q:
        raise DomainError("no finite positive moments when alpha >= Q")
    g = params.gamma
    return min(4.0 / (g * g), 2.0 / g * (params.q - alpha))


# ---------------------------------------------------------------------------
# mollified lattice construction

def mollified_log_kernel(distance, epsilon: float):
    """Covariance of ``-ln|x-y|`` smoothed by a centered Gaussian mollifier of width ``epsilon``.

    ``-ln d - E1(d^2 / 4 eps^2) / 2``, with diagonal value ``euler_gamma/2 - ln(2 eps)``.
    """
    d = np.asarray(distance, dtype=float)
    out = np.full(d.shape, 0.5 * np.euler_gamma - math.log(2.0 * epsilon))
    pos = d > 0
    dp = d[pos]
    out[pos] = -np.log(dp) - 0.5 * exp1(dp * dp / (4.0 * epsilon * epsilon))
    return out


def _lattice_grid(domain: tuple, grid_step: float):
    x0, x1, y0, y1 = domain
    nx = int(round((x1 - x0) / grid_step))
    ny = int(round((y1 - y0) / grid_step))
    if nx < 1 or ny < 1:
        raise DomainError("domain smaller than one lattice cell")
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    return (xs[None, :] + 1j * ys[:, None]).ravel(), hx, hy


def _cell_average(centers: np.ndarray, hx: float, hy: float, weight: Callable, region: Callable,
                  n_sub: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell averages of ``weight * 1_region`` and of ``1_region`` on an ``n_sub x n_sub`` midpoint sub-grid."""
    offs = (np.arange(n_sub) + 0.5) / n_sub - 0.5
    sub = (hx * offs[None, :] + 1j * hy * offs[:, None]).ravel()
    pts = (centers[:, None] + sub[None, :]).ravel()
    inside = np.asarray(region(pts), dtype=bool)
    w = np.zeros(len(pts))
    if inside.any():
        w[inside] = np.asarray(weight(pts[inside]), dtype=float)
    shape = (len(centers), len(sub))
    return w.reshape(shape).mean(axis=1), inside.reshape(shape).mean(axis=1)


@functools.lru_cache(maxsize=4096)
def _log_plus_smoothed(radius: float, epsilon: float) -> float:
    upper = radius + 12.0 * epsilon
    if upper <= 1.0:
        return 0.0
    law = stats.rice(b=radius / epsilon, scale=epsilon)
    val, _ = integrate.quad(lambda s: law.sf(s) / s, 1.0, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def mollified_log_plus(x, epsilon: float) -> np.ndarray:
    """``E ln|x + epsilon U|_+`` for a standard complex Gaussian ``U`` (unit variance per coordinate).

    Zero once ``|x| + 12 epsilon <= 1``.
    """
    r = np.abs(np.asarray(x, dtype=complex))
    return np.vectorize(lambda v: _log_plus_smoothed(float(v), float(epsilon)), otypes=[float])(r)


@functools.lru_cache(maxsize=8)
def _lattice_factor(epsilon: float, centers_key: bytes):
    """Cholesky factor of the mollified covariance on the given cells.

    The field is the whole-plane one normalized to zero average on the unit
    circle, ``-ln|x-y| + ln|x|_+ + ln|y|_+``, smoothed at both points. The
    bare smoothed logarithm is not positive definite on the unit disk, the
    two ``ln_+`` terms restore it and vanish away from the unit circle.
    """
    centers = np.frombuffer(centers_key, dtype=complex)
    if len(centers) > MAX_LATTICE_SITES:
        raise DomainError(f"lattice has {len(centers)} active sites, above the cap of {MAX_LATTICE_SITES}")
    h = mollified_log_plus(centers, epsilon)
    cov = mollified_log_kernel(np.abs(centers[:, None] - centers[None, :]), epsilon) + h[:, None] + h[None, :]
    var = np.diag(cov).copy()
    try:
        chol = np.linalg.cholesky(cov + 1e-12 * float(np.max(np.abs(var))) * np.eye(len(centers)))
    except np.linalg.LinAlgError as exc:
        raise DomainError("mollified covariance is not positive definite on these cells") from exc
    return var, chol


@dataclass(frozen=True)
class MollifiedLattice:
    """Cell-centered lattice of a rectangle carrying the mollified field.

    Only active cells (inside ``region`` and not excised) carry the field.
    ``variance`` holds the field variance of each active cell.
    ``excluded`` flags cells whose center lies within one grid step of an
    excised point.
    """

    centers: np.ndarray
    cell_area: float
    variance: np.ndarray
    chol: np.ndarray
    weights: np.ndarray
    excluded: np.ndarray
    active: np.ndarray

    def masses(self, gamma: float, gen: np.random.Generator, n: int, chunk: int = 512) -> np.ndarray:
        """``n`` independent realizations of the weighted chaos mass."""
        out = np.empty(n)
        w = self.weights[self.active] * self.cell_area
        for start in range(0, n, chunk):
            m = min(chunk, n - start)
            field = gen.standard_normal((m, len(w))) @ self.chol.T
            out[start:start + m] = np.exp(gamma * field - 0.5 * gamma * gamma * self.variance) @ w
        return out

    @property
    def mean_mass(self) -> float:
        return float(np.sum(self.weights) * self.cell_area)


def mollified_lattice(epsilon: float, domain: Sequence[float], grid_step: float,
                      weight: Callable[[np.ndarray], np.ndarray] | None = None,
                      excise: Sequence[complex] = (),
                      region: Callable[[np.ndarray], np.ndarray] | None = None,
                      region_subgrid: int = 8) -> MollifiedLattice:
    """Build the lattice for ``domain = (x0, x1, y0, y1)``.

    ``weight`` defaults to the spherical metric. ``region`` optionally
    restricts the integration; each cell then carries the average of
    ``weight * 1_region`` over an ``region_subgrid``-square sub-grid. The
    covariance is factored on the active cells only, so it needs to be
    positive definite there and not on the whole rectangle.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not grid_step > 0 or grid_step > epsilon / 4.0 * (1 + 1e-9):
        raise DomainError("grid_step must be positive and at most epsilon/4")
    centers, hx, hy = _lattice_grid(tuple(float(v) for v in domain), float(grid_step))
    weight = sphere_metric if weight is None else weight
    excluded = np.zeros(len(centers), dtype=bool)
    for z in excise:
        excluded |= np.abs(centers - z) <= grid_step
    active = ~excluded
    if region is None:
        w = np.asarray(weight(centers), dtype=float)
    else:
        w, fraction = _cell_average(centers, hx, hy, weight, region, region_subgrid)
        active &= fraction > 0
    var, chol = _lattice_factor(float(epsilon), np.ascontiguousarray(centers[active]).tobytes())
    w = np.where(active, w, 0.0)
    return MollifiedLattice(centers=centers, cell_area=hx * hy, variance=var, chol=chol,
                            weights=w, excluded=excluded, active=active)


def mollified_chaos_batch(params: LiouvilleParams, epsilon: float, domain: Sequence[float],
                          grid_step: float, seed: int, n: int, **lattice_kw) -> np.ndarray:
    """``n`` realizations of the mollified chaos mass of ``domain``."""
    lat = mollified_lattice(epsilon, domain, grid_step, **lattice_kw)
    return lat.masses(params.gamma, _rng.stream(seed, _rng.LATTICE), n)


def mollified_chaos(params: LiouvilleParams, epsilon: float, domain: Sequence[float],
                    grid_step: float, seed: int) -> float:
    """One realization of ``int_domain exp(gamma X_eps - gamma^2/2 Var X_eps) g d^2z``."""
    return float(mollified_chaos_batch(params, epsilon, domain, grid_step, seed, 1)[0])
