"""Cutting annuli: index sets of passage levels whose annuli are far apart in log-radius.

For a passage sequence ``T_0 < T_1 < ... < T_N`` an increasing index set
``i_1 < ... < i_l`` in ``[0, N-1]`` is a cutting annuli (for separation
``delta``) when ``T_{i_{j+1}} - T_{i_j + 1} > delta`` for consecutive members.
The reduction map sends an arbitrary non-empty index set to the cutting
annuli obtained by a greedy sweep from its largest element downward.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import DomainError, VerificationError
from ..passage import StoppingSequence

MAX_ENUMERATION = 16


def weak_correlation_delta(epsilon: float) -> float:
    """Smallest separation ``ln(1/(1 - e^{-epsilon}))`` beyond which lateral correlations stay below ``epsilon``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return -math.log(-math.expm1(-epsilon))


@dataclass(frozen=True)
class AnnuliIndexSet:
    indices: tuple
    delta: float
    source_times: StoppingSequence

    @property
    def is_cutting(self) -> bool:
        return is_cutting_annuli(self.indices, self.source_times, self.delta)


def _times(seq: StoppingSequence) -> np.ndarray:
    return np.asarray(seq.times, dtype=float)


def precut_image(i: int, seq: StoppingSequence, delta: float) -> int:
    """Index ``k`` with ``T_i - delta`` in ``[T_k, T_{k+1})``, or ``-1`` when ``T_i - delta < 0``."""
    times = _times(seq)
    if not 0 <= i < len(times):
        raise DomainError(f"index {i} outside the sequence")
    x = times[i] - delta
    if x < 0:
        return -1
    return int(np.searchsorted(times, x, side="right")) - 1


def _separated(times: np.ndarray, lower: int, upper: int, delta: float) -> bool:
    return times[upper] - times[lower + 1] > delta


def is_cutting_annuli(indices: Iterable[int], seq: StoppingSequence, delta: float) -> bool:
    times = _times(seq)
    idx = list(indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        return False
    if idx and (idx[0] < 0 or idx[-1] > len(times) - 2):
        return False
    return all(_separated(times, a, b, delta) for a, b in zip(idx, idx[1:]))


def reduce_to_annuli(j_set: Iterable[int], seq: StoppingSequence, delta: float) -> AnnuliIndexSet:
    """Greedy reduction: keep the largest element, then repeatedly the largest earlier element far enough below."""
    members = sorted(set(int(j) for j in j_set))
    if not members:
        raise DomainError("the reduction map needs a non-empty index set")
    times = _times(seq)
    if members[0] < 0 or members[-1] > len(times) - 2:
        raise DomainError("indices must lie in [0, N-1]")
    chosen = [members[-1]]
    for a in reversed(members[:-1]):
        if _separated(times, a, chosen[-1], delta):
            chosen.append(a)
    return AnnuliIndexSet(indices=tuple(reversed(chosen)), delta=float(delta), source_times=seq)


def _last_admissible(i: int, times: np.ndarray, delta: float) -> int:
    """Largest ``a`` with ``T_{a+1} + delta < T_i`` (``-1`` if none).

    Equals ``precut_image(i) - 1`` except on exact ties ``T_{a+1} = T_i - delta``,
    where the strict separation excludes the tied index.
    """
    k = int(np.searchsorted(times, times[i] - delta, side="left")) - 1
    return k - 1 if k >= 0 else -1


def characterized_preimage(i_set: AnnuliIndexSet, n: int) -> set:
    """All ``J`` in ``[0, n-1]`` that reduce to ``i_set``, from the gap characterization alone.

    ``J`` must contain ``I``, must avoid every ``j`` strictly between a member
    and the precut image of the next member (and everything below the precut
    image of the first member and above the last member), and is free on
    ``[precut(i_k), i_k)``.
    """
    if n > MAX_ENUMERATION:
        raise DomainError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATION}")
    seq, delta = i_set.source_times, i_set.delta
    times = _times(seq)
    if len(times) < n + 1:
        raise DomainError("the passage sequence must extend to T_n")
    idx = list(i_set.indices)
    if not idx or idx[-1] > n - 1 or not is_cutting_annuli(idx, seq, delta):
        raise DomainError("i_set must be a non-empty cutting annuli inside [0, n-1]")
    free = []
    for i in idx:
        lo = _last_admissible(i, times, delta) + 1
        free.extend(range(max(lo, 0), i))
    free = [j for j in free if j not in idx]
    base = frozenset(idx)
    return {base | frozenset(extra) for r in range(len(free) + 1)
            for extra in itertools.combinations(free, r)}


def preimage_characterize(i_set: AnnuliIndexSet, n: int) -> set:
    """As :func:`characterized_preimage`, asserting equality with brute-force enumeration.

    Raises :class:`VerificationError` when the two families differ.
    """
    family = characterized_preimage(i_set, n)
    if family != preimage_brute_force(i_set, n):
        raise VerificationError("gap characterization and brute-force enumeration disagree")
    return family


def reduction_partition(seq: StoppingSequence, delta: float, n: int) -> dict:
    """Group every non-empty ``J`` in ``[0, n-1]`` by its reduction, by enumeration."""
    if n > MAX_ENUMERATION:
        raise DomainError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATION}")
    groups: dict = {}
    for mask in range(1, 1 << n):
        j_set = [j for j in range(n) if mask >> j & 1]
        key = reduce_to_annuli(j_set, seq, delta).indices
        groups.setdefault(key, set()).add(frozenset(j_set))
    return groups


def preimage_brute_force(i_set: AnnuliIndexSet, n: int) -> set:
    """All non-empty ``J`` in ``[0, n-1]`` with ``reduce_to_annuli(J) == i_set``, by enumeration."""
    if n > MAX_ENUMERATION:
        raise DomainError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATION}")
    return reduction_partition(i_set.source_times, i_set.delta, n).get(tuple(i_set.indices), set())


def all_cutting_annuli(seq: StoppingSequence, delta: float, n: int) -> list[tuple]:
    """Every non-empty cutting annuli inside ``[0, n-1]``."""
    out = []
    for mask in range(1, 1 << n):
        idx = [j for j in range(n) if mask >> j & 1]
        if is_cutting_annuli(idx, seq, delta):
            out.append(tuple(idx))
    return out
