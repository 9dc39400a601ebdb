"""Parameter algebra: background charge, Seiberg bounds and region membership."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError


def q_parameter(gamma: float) -> float:
    """Background charge ``Q = 2/gamma + gamma/2``.

    ``gamma = 2`` is accepted here so that the boundary value can be probed in
    formula-level checks; :class:`LiouvilleParams` rejects it.
    """
    if not 0.0 < gamma <= 2.0:
        raise DomainError(f"gamma must lie in (0,2), got {gamma!r}")
    return 2.0 / gamma + gamma / 2.0


@dataclass(frozen=True)
class LiouvilleParams:
    """Coupling constant and cosmological constant.

    ``q`` is derived from ``gamma`` on every access and never stored.
    """

    gamma: float
    mu: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 2.0:
            raise DomainError(f"gamma must lie in (0,2), got {self.gamma!r}")
        if not self.mu >= 0.0:
            raise DomainError(f"mu must be non-negative, got {self.mu!r}")

    @property
    def q(self) -> float:
        return q_parameter(self.gamma)

    def with_mu(self, mu: float) -> "LiouvilleParams":
        return LiouvilleParams(self.gamma, mu)


@dataclass(frozen=True)
class Insertion:
    """Vertex insertion of complex weight ``alpha + i*beta`` at the point ``z``."""

    z: complex
    alpha: float
    beta: float = 0.0

    @property
    def weight(self) -> complex:
        return complex(self.alpha, self.beta)


class RegionTag(enum.Enum):
    MARTINGALE_ONLY = "MartingaleOnly"
    STOPPING_ONLY = "StoppingOnly"
    BOTH = "Both"
    OUTSIDE_PENCIL = "OutsidePencil"


def _require_insertions(insertions: Sequence[Insertion]) -> None:
    if len(insertions) == 0:
        raise DomainError("at least one insertion is required")


def seiberg_check(insertions: Sequence[Insertion], params: LiouvilleParams) -> bool:
    """True iff every real weight is below Q and their sum exceeds 2Q."""
    _require_insertions(insertions)
    q = params.q
    alphas = [ins.alpha for ins in insertions]
    return all(a < q for a in alphas) and sum(alphas) > 2.0 * q


def in_pencil(alpha: float, beta: float, params: LiouvilleParams) -> bool:
    """Strict pencil membership ``|beta| < Q - alpha``."""
    return abs(beta) < params.q - alpha


def region_classify(alpha: float, beta: float, params: LiouvilleParams) -> RegionTag:
    """Which regularization scheme covers ``alpha + i*beta``.

    All regions are open, so boundary points fall to the outer tag.
    """
    q, g = params.q, params.gamma
    if not in_pencil(alpha, beta, params):
        return RegionTag.OUTSIDE_PENCIL
    if alpha >= q - g / 2.0:
        return RegionTag.MARTINGALE_ONLY
    if alpha <= q - g:
        return RegionTag.STOPPING_ONLY
    return RegionTag.BOTH


def exponent_s(insertions: Sequence[Insertion], params: LiouvilleParams) -> complex:
    """Zero-mode exponent ``(sum of weights - 2Q)/gamma``."""
    _require_insertions(insertions)
    total = sum((ins.weight for ins in insertions), 0j)
    return (total - 2.0 * params.q) / params.gamma
