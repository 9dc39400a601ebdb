"""First passages of the drifted Brownian motion ``B_t - nu t`` below integer levels.

``T_n = inf{s : B_s - nu s = -n}``. The increments ``T_{n+1} - T_n`` are
i.i.d. inverse Gaussian with mean ``1/nu`` and shape ``1``.

Passage times read off a discretely sampled path use a Brownian-bridge
correction by default: between two grid points the path is a bridge, whose
probability of touching a level and whose first hitting time both have exact
laws. This removes the ``O(sqrt(dt))`` delay of first-grid-point detection.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import rng as _rng
from .errors import DivergenceError, DomainError, HorizonError
from .field import RadialPath


class SequenceSource(enum.Enum):
    FROM_PATH = "FromPath"
    DIRECT_IG = "DirectIG"


@dataclass(frozen=True)
class StoppingSequence:
    """Passage times ``T_0 = 0 < T_1 < ... < T_N``."""

    nu: float
    times: np.ndarray
    source: SequenceSource

    @property
    def n_levels(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class ResidualSample:
    t_query: float
    residual: float


def inverse_gaussian(gen: np.random.Generator, mean, shape, size=None) -> np.ndarray:
    """Inverse Gaussian draws by the transformation method with root selection.

    ``mean`` may be ``inf``, in which case the draw comes from the Levy limit
    ``shape / chi^2_1``. The smaller root is written in a cancellation-free form.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = np.broadcast(mean, shape).shape
    y = gen.standard_normal(size) ** 2
    u = gen.random(size)
    finite = np.isfinite(mean)
    m = np.where(finite, mean, 1.0)
    my = m * y
    root = 4.0 * m * m * shape * y / (my + np.sqrt(my * my + 4.0 * m * shape * y)) ** 2
    root = np.where(y > 0, root, m)
    pick_small = u * (m + root) <= m
    with np.errstate(divide="ignore"):
        draw = np.where(pick_small, root, m * m / root)
    levy = shape / np.where(y > 0, y, np.finfo(float).tiny)
    out = np.where(finite, draw, levy)
    return out if out.ndim else float(out)


def _check_nu(nu: float) -> None:
    if not nu > 0:
        raise DomainError(f"drift nu must be positive, got {nu!r}")


def sample_first_passages(nu: float, size, gen: np.random.Generator) -> np.ndarray:
    """Draws of ``T_1`` ~ IG(mean ``1/nu``, shape 1)."""
    _check_nu(nu)
    return inverse_gaussian(gen, 1.0 / nu, 1.0, size)


def sample_first_passage(nu: float, seed: int) -> float:
    """One draw of ``T_1`` with density ``(2 pi x^3)^{-1/2} exp(-(nu x - 1)^2 / (2x))``."""
    _check_nu(nu)
    return float(sample_first_passages(nu, (), _rng.stream(seed, _rng.PASSAGE)))


def first_passage_density(x, nu: float, level: float = 1.0):
    """Density of the passage time of ``B_t - nu t`` to ``-level``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = level / np.sqrt(2 * np.pi * x ** 3) * np.exp(-(nu * x - level) ** 2 / (2 * x))
    return np.where(x > 0, out, 0.0)


def stopping_sequence_direct(nu: float, n_levels: int, seed: int) -> StoppingSequence:
    """Passage sequence built from i.i.d. inverse Gaussian increments."""
    _check_nu(nu)
    gen = _rng.stream(seed, _rng.PASSAGE, 1)
    times = np.concatenate([[0.0], np.cumsum(sample_first_passages(nu, n_levels, gen))])
    return StoppingSequence(nu=float(nu), times=times, source=SequenceSource.DIRECT_IG)


def bridge_hit_offset(gap_start, gap_end, h, gen: np.random.Generator) -> np.ndarray:
    """First hitting time of a level by a Brownian bridge that is known to hit it.

    The bridge runs for time ``h`` from height ``a = gap_start > 0`` above the
    level to height ``gap_end``; when ``gap_end > 0`` it is conditioned on
    touching the level. With ``b = |gap_end|`` the offset is ``h S / (1 + S)``
    where ``S`` ~ IG(mean ``a/b``, shape ``a^2/h``).
    """
    a = np.asarray(gap_start, dtype=float)
    b = np.abs(np.asarray(gap_end, dtype=float))
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore"):
        mean = np.where(b > 0, a / b, np.inf)
    s = inverse_gaussian(gen, mean, a * a / h, np.broadcast(a, b, h).shape)
    return h * s / (1.0 + s)


def bridge_cross_probability(gap_start, gap_end, h):
    """Probability that a bridge between two points above a level touches it."""
    return np.exp(-2.0 * np.maximum(gap_start, 0.0) * np.maximum(gap_end, 0.0) / h)


def stopping_sequence_from_path(path: RadialPath, nu: float, n_levels: int,
                                crossing: str = "bridge") -> StoppingSequence:
    """Passage times of ``B_t - nu t`` below ``-1, ..., -n_levels`` on a sampled path.

    ``crossing="bridge"`` (default) samples the continuous-path crossing given
    the grid values, with randomness derived from ``path.seed``.
    ``crossing="linear"`` takes the first grid point at or below the level and
    interpolates linearly; its bias is ``O(sqrt(dt))``.
    """
    _check_nu(nu)
    if n_levels < 0:
        raise DomainError("n_levels must be non-negative")
    times = [0.0]
    if n_levels == 0:
        return StoppingSequence(nu=float(nu), times=np.array(times), source=SequenceSource.FROM_PATH)
    dt = path.dt
    x = path.values - nu * path.times
    if crossing == "linear":
        for level in range(1, n_levels + 1):
            hits = np.nonzero(x <= -level)[0]
            if len(hits) == 0:
                raise HorizonError(f"path ended above level -{level}", deepest_level=level - 1)
            k = int(hits[0])
            frac = (x[k - 1] + level) / (x[k - 1] - x[k])
            t_hit = dt * (k - 1 + frac)
            times.append(max(t_hit, math.nextafter(times[-1], math.inf)))
        return StoppingSequence(nu=float(nu), times=np.array(times), source=SequenceSource.FROM_PATH)
    if crossing != "bridge":
        raise DomainError(f"unknown crossing rule {crossing!r}")
    gen = _rng.stream(path.seed, _rng.CROSSING)
    level = 1
    for k in range(len(x) - 1):
        start_t, start_x = dt * k, x[k]
        end_x = x[k + 1]
        while level <= n_levels:
            h = dt * (k + 1) - start_t
            a = start_x + level
            b = end_x + level
            if b > 0 and gen.random() >= bridge_cross_probability(a, b, h):
                break
            tau = start_t + float(bridge_hit_offset(a, b, h, gen))
            tau = max(tau, math.nextafter(times[-1], math.inf))
            times.append(tau)
            start_t, start_x = tau, -float(level)
            level += 1
        if level > n_levels:
            return StoppingSequence(nu=float(nu), times=np.array(times), source=SequenceSource.FROM_PATH)
    raise HorizonError(f"path ended above level -{level}", deepest_level=level - 1)


def residual_time(seq: StoppingSequence, t_query: float) -> ResidualSample:
    """Overshoot ``inf{T_n : T_n > t_query} - t_query``."""
    if not t_query > 0:
        raise DomainError("t_query must be positive")
    k = int(np.searchsorted(seq.times, t_query, side="right"))
    if k >= len(seq.times):
        raise HorizonError("sequence ends before the query time", deepest_level=seq.n_levels)
    return ResidualSample(t_query=float(t_query), residual=float(seq.times[k] - t_query))


def renewal_count(seq: StoppingSequence, t: float) -> int:
    """``N(t) = sup{n : T_n < t}``; requires the sequence to extend past ``t``."""
    if seq.times[-1] < t:
        raise HorizonError("sequence ends before t", deepest_level=seq.n_levels)
    return int(np.searchsorted(seq.times, t, side="left")) - 1


def passage_mgf(nu: float, s: complex) -> complex:
    """``exp(nu - sqrt(nu^2 - 2s))`` with the principal square root.

    For real ``s <= nu^2/2`` this is ``E[exp(s T_1)]``.
    """
    _check_nu(nu)
    if isinstance(s, (int, float)) or (isinstance(s, complex) and s.imag == 0.0):
        if complex(s).real > 0.5 * nu * nu:
            raise DivergenceError(f"E[exp(s T_1)] is infinite for real s > nu^2/2 (s={s})")
    return complex(cmath.exp(nu - cmath.sqrt(nu * nu - 2 * complex(s))))


def renewal_density(t, nu: float, tol: float = 1e-14) -> np.ndarray:
    """Renewal density ``m'(t) = sum_n f_n(t)``, ``f_n`` the passage density to level ``-n``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    n = 1
    while True:
        term = first_passage_density(t, nu, level=n)
        out += term
        # terms peak near n = nu t and then decay super-exponentially
        if n > nu * np.max(t) + 5 and np.max(term) < tol * max(np.max(out), 1e-300):
            break
        n += 1
    return out


def residual_density(x, t: float, nu: float) -> np.ndarray:
    """Density of the residual time at ``t``: ``f(t+x) + int_0^t f(x+u) m'(t-u) du``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = first_passage_density(t + x, nu)
    for i, xi in enumerate(x):
        out[i] += quad(lambda u: float(first_passage_density(xi + u, nu) * renewal_density(t - u, nu)[0]),
                       0.0, t, limit=200)[0]
    return out
