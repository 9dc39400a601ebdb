"""Monte-Carlo checks of Gaussian change-of-measure and comparison inequalities.

Both sides of every check are evaluated on the same standard normals
``W``: ``X = L_x W`` and ``Y = L_y W``. The estimate of the difference is
then a mean of paired differences, whose standard error is the quantity
reported and compared against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import rng as _rng
from ..errors import DomainError

MAX_DIMENSION = 8
PSD_TOL = 1e-10


class KahaneMode(enum.Enum):
    CONVEXITY = "Convexity"
    DIAGONAL = "Diagonal"


@dataclass(frozen=True)
class InequalityReport:
    """Both sides of an identity or inequality with the standard error of their difference.

    For identities ``passed`` means ``|rhs - lhs| <= 3 se``; for inequalities
    ``lhs <= rhs + 3 se``.
    """

    kind: str
    functional: str
    lhs: float
    rhs: float
    se: float
    passed: bool
    n_samples: int
    seed: int

    @property
    def difference(self) -> float:
        return self.rhs - self.lhs


def psd_factor(cov) -> np.ndarray:
    """Square-root factor ``L`` with ``L L^T = cov`` for a (possibly singular) PSD matrix."""
    c = np.asarray(cov, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DomainError("covariance must be a square matrix")
    if not np.allclose(c, c.T, atol=1e-12):
        raise DomainError("covariance must be symmetric")
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    if w.min() < -PSD_TOL * max(1.0, abs(w).max()):
        raise DomainError(f"covariance is not positive semidefinite (smallest eigenvalue {w.min():.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def _paired(lhs: np.ndarray, rhs: np.ndarray) -> tuple[float, float, float]:
    n = len(lhs)
    diff = rhs - lhs
    return float(lhs.mean()), float(rhs.mean()), float(diff.std(ddof=1) / np.sqrt(n))


# ---------------------------------------------------------------------------
# Girsanov

GIRSANOV_FUNCTIONALS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda x: np.ones(len(x)),
    "capped_linear": lambda x: np.minimum(x.sum(axis=1), 10.0),
    "clipped_quadratic": lambda x: np.minimum((x * x).sum(axis=1), 4.0),
    "cosine": lambda x: np.cos(x.sum(axis=1)),
    "orthant": lambda x: np.all(x > 0, axis=1).astype(float),
    "tanh_first": lambda x: np.tanh(x[:, 0]),
}


def girsanov_check(covariance, y_vector, functional: str, n_samples: int, seed: int) -> InequalityReport:
    """Check ``E[exp(Y - Var Y / 2) F(X)] = E[F(X + Cov(X, Y))]`` for ``Y = <y, X>``.

    ``X`` is centered Gaussian with the given covariance, so
    ``Var Y = y^T C y`` and ``Cov(X, Y) = C y``.
    """
    c = np.asarray(covariance, dtype=float)
    if c.ndim != 2 or c.shape[0] > MAX_DIMENSION:
        raise DomainError(f"dimension must be at most {MAX_DIMENSION}")
    factor = psd_factor(c)
    y = np.asarray(y_vector, dtype=float)
    if y.shape != (c.shape[0],):
        raise DomainError("y_vector must match the covariance dimension")
    fn = _lookup(GIRSANOV_FUNCTIONALS, functional)
    w = _rng.stream(seed, _rng.AUXILIARY).standard_normal((n_samples, c.shape[0]))
    x = w @ factor.T
    var_y = float(y @ c @ y)
    lhs = np.exp(x @ y - 0.5 * var_y) * fn(x)
    rhs = fn(x + c @ y)
    lm, rm, se = _paired(lhs, rhs)
    passed = abs(rm - lm) <= 3.0 * se + 1e-12
    return InequalityReport("Girsanov", functional, lm, rm, se, passed, n_samples, seed)


# ---------------------------------------------------------------------------
# Kahane

CONVEX_FUNCTIONALS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda s: s,
    "square": lambda s: s * s,
    "hinge": lambda s: np.maximum(s - 1.0, 0.0),
    "power_1_5": lambda s: s ** 1.5,
    "laplace": lambda s: np.exp(-s),
    "neg_log": lambda s: -np.log(s),
}

DIAGONAL_FUNCTIONALS = ("tanh_pairs", "block_product")


def _lookup(table: dict, name: str):
    try:
        return table[name]
    except KeyError:
        raise DomainError(f"unknown functional {name!r}; choose from {sorted(table)}") from None


def _pair_set(pairs) -> set:
    return {(min(i, j), max(i, j)) for i, j in (pairs or ())}


def tanh_pairs_functional(coefficients) -> Callable[[np.ndarray], np.ndarray]:
    """``F(x) = sum_{i<j} c_ij tanh(x_i) tanh(x_j)``; ``d_ij F`` has the sign of ``c_ij``."""
    c = np.triu(np.asarray(coefficients, dtype=float), 1)

    def fn(x):
        t = np.tanh(x)
        return np.einsum("ni,ij,nj->n", t, c, t)

    return fn


def block_product_functional(weights, blocks: Sequence[Sequence[int]], variances) -> Callable:
    """``F(x) = prod_b sum_{i in b} p_i exp(x_i - v_i / 2)``; every second partial is non-negative."""
    p = np.asarray(weights, dtype=float)
    v = np.asarray(variances, dtype=float)
    groups = [np.asarray(b, dtype=int) for b in blocks]

    def fn(x):
        e = p * np.exp(x - 0.5 * v)
        out = np.ones(len(x))
        for g in groups:
            out *= e[:, g].sum(axis=1)
        return out

    return fn


def mixed_partial(fn: Callable, points: np.ndarray, i: int, j: int, h: float = 1e-3) -> np.ndarray:
    """Central finite-difference ``d^2 F / dx_i dx_j`` at each row of ``points``."""
    ei = np.zeros(points.shape[1])
    ei[i] = h
    if i == j:
        return (fn(points + ei) - 2.0 * fn(points) + fn(points - ei)) / (h * h)
    ej = np.zeros(points.shape[1])
    ej[j] = h
    return (fn(points + ei + ej) - fn(points + ei - ej) - fn(points - ei + ej)
            + fn(points - ei - ej)) / (4.0 * h * h)


def _check_partials(fn: Callable, points: np.ndarray, a_set: set, b_set: set, rel_tol: float = 1e-4) -> None:
    scale = 1.0 + np.abs(fn(points))
    for pairs, sign in ((a_set, 1.0), (b_set, -1.0)):
        for i, j in sorted(pairs):
            d = sign * mixed_partial(fn, points, i, j)
            if np.any(d < -rel_tol * scale):
                which = "non-negative" if sign > 0 else "non-positive"
                raise DomainError(f"second partial d_{i}{j} F must be {which} on the pair set")


def kahane_check(cov_x, cov_y, weights, mode: KahaneMode | str, partition=None, functional="square",
                 n_samples: int = 20_000, seed: int = 0, blocks=None) -> InequalityReport:
    """Check a Gaussian comparison inequality ``E[F(X)] <= E[F(Y)]``.

    Convexity mode evaluates a convex ``F`` (a name from
    ``CONVEX_FUNCTIONALS``) at the mass ``sum_i p_i exp(X_i - Var X_i / 2)``
    and requires ``cov_x <= cov_y`` entrywise.

    Diagonal mode evaluates ``F`` on the vector ``X`` itself. ``partition``
    is a pair ``(A, B)`` of index-pair collections; when omitted it is read
    off the sign of ``cov_y - cov_x``. Covariances must be ``<=`` on ``A``,
    ``>=`` on ``B`` and equal elsewhere, and the second partials of ``F``
    must be ``>= 0`` on ``A`` and ``<= 0`` on ``B``; the latter is checked by
    finite differences at sampled points. ``functional`` is
    ``"tanh_pairs"`` (coefficients ``+1`` on ``A``, ``-1`` on ``B``),
    ``"block_product"`` (uses ``weights`` and ``blocks``, singletons by
    default) or any callable mapping ``(n, d)`` arrays to ``(n,)``.
    Violated preconditions raise :class:`DomainError` without running.
    """
    mode = KahaneMode(mode)
    cx = np.asarray(cov_x, dtype=float)
    cy = np.asarray(cov_y, dtype=float)
    if cx.shape != cy.shape or cx.ndim != 2:
        raise DomainError("cov_x and cov_y must be square matrices of equal size")
    d = cx.shape[0]
    if d > MAX_DIMENSION:
        raise DomainError(f"dimension must be at most {MAX_DIMENSION}")
    p = np.asarray(weights, dtype=float)
    if p.shape != (d,) or np.any(p < 0):
        raise DomainError("weights must be a non-negative vector matching the dimension")
    fx, fy = psd_factor(cx), psd_factor(cy)
    tol = 1e-12 * max(1.0, np.abs(cx).max(), np.abs(cy).max())
    diff = cy - cx

    w = _rng.stream(seed, _rng.AUXILIARY).standard_normal((n_samples, d))
    x, y = w @ fx.T, w @ fy.T

    if mode is KahaneMode.CONVEXITY:
        if np.any(diff < -tol):
            raise DomainError("convexity mode requires cov_x <= cov_y entrywise")
        fn = _lookup(CONVEX_FUNCTIONALS, functional)
        lhs = fn(np.exp(x - 0.5 * np.diag(cx)) @ p)
        rhs = fn(np.exp(y - 0.5 * np.diag(cy)) @ p)
        name = functional
    else:
        all_pairs = {(i, j) for i in range(d) for j in range(i, d)}
        if partition is None:
            a_set = {(i, j) for i, j in all_pairs if diff[i, j] > tol}
            b_set = {(i, j) for i, j in all_pairs if diff[i, j] < -tol}
        else:
            a_set, b_set = _pair_set(partition[0]), _pair_set(partition[1])
        for i, j in all_pairs:
            if (i, j) in a_set and diff[i, j] < -tol:
                raise DomainError(f"cov_x[{i},{j}] exceeds cov_y on a pair in A")
            if (i, j) in b_set and diff[i, j] > tol:
                raise DomainError(f"cov_x[{i},{j}] is below cov_y on a pair in B")
            if (i, j) not in a_set | b_set and abs(diff[i, j]) > tol:
                raise DomainError(f"covariances differ at ({i},{j}) outside A and B")
        if callable(functional):
            fn, name = functional, getattr(functional, "__name__", "callable")
        elif functional == "tanh_pairs":
            coeffs = np.zeros((d, d))
            for i, j in a_set:
                coeffs[i, j] = 1.0
            for i, j in b_set:
                coeffs[i, j] = -1.0
            fn, name = tanh_pairs_functional(coeffs), functional
        elif functional == "block_product":
            groups = blocks if blocks is not None else [[i] for i in range(d)]
            fn, name = block_product_functional(p, groups, np.diag(cx)), functional
        else:
            raise DomainError(f"unknown diagonal functional {functional!r}; choose from {DIAGONAL_FUNCTIONALS}")
        probe = min(64, n_samples)
        _check_partials(fn, np.vstack([x[:probe], y[:probe]]), a_set, b_set)
        lhs, rhs = fn(x), fn(y)
    lm, rm, se = _paired(lhs, rhs)
    passed = lm <= rm + 3.0 * se + 1e-12 * max(1.0, abs(rm))
    return InequalityReport(f"Kahane{mode.value}", name, lm, rm, se, passed, n_samples, seed)


# ---------------------------------------------------------------------------
# random instances

def random_covariance(gen: np.random.Generator, d: int, scale: float = 0.7) -> np.ndarray:
    g = gen.standard_normal((d, d))
    c = g @ g.T
    return scale * c / np.mean(np.diag(c))


def random_correlation(gen: np.random.Generator, d: int) -> np.ndarray:
    c = random_covariance(gen, d) + 0.2 * np.eye(d)
    s = 1.0 / np.sqrt(np.diag(c))
    return c * s[:, None] * s[None, :]


def girsanov_instance(index: int, seed: int, n_samples: int) -> InequalityReport:
    gen = _rng.stream(seed, _rng.AUXILIARY, index)
    d = int(gen.integers(1, 7))
    c = random_covariance(gen, d)
    y = gen.standard_normal(d)
    y *= np.sqrt(0.5 / max(y @ c @ y, 1e-12)) * gen.uniform(0.2, 1.0)
    names = sorted(GIRSANOV_FUNCTIONALS)
    return girsanov_check(c, y, names[index % len(names)], n_samples, _rng.child_seed(seed, index))


def convexity_instance(index: int, seed: int, n_samples: int) -> InequalityReport:
    gen = _rng.stream(seed, _rng.AUXILIARY, index)
    d = int(gen.integers(2, 7))
    cx = random_covariance(gen, d, scale=0.5)
    if index % 2 == 0:
        cy = cx + gen.uniform(0.05, 0.5) * np.ones((d, d))
    else:
        h = np.abs(gen.standard_normal((d, 2))) * 0.4
        cy = cx + h @ h.T
    p = gen.uniform(0.1, 1.0, d)
    names = sorted(CONVEX_FUNCTIONALS)
    return kahane_check(cx, cy, p, KahaneMode.CONVEXITY, functional=names[index % len(names)],
                        n_samples=n_samples, seed=_rng.child_seed(seed, index))


def decorrelation_covariances(gen: np.random.Generator, sizes: Sequence[int]):
    """Covariances of correlated blocks with independent noise versus independent blocks with common noise.

    With ``C`` a random covariance and ``e`` the largest cross-block entry,
    ``cov_x = C + e * blockdiag(1)`` and ``cov_y = blockdiag(C) + e * 1``:
    equal on blocks, ``cov_x <= cov_y`` across blocks.
    """
    d = int(sum(sizes))
    c = random_covariance(gen, d, scale=0.6)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    eps = max(float(np.max(np.where(same, -np.inf, c))), 0.0) + 0.05
    cx = c + eps * same
    cy = np.where(same, c, 0.0) + eps
    blocks = [np.nonzero(labels == b)[0].tolist() for b in range(len(sizes))]
    return cx, cy, blocks


def diagonal_instance(index: int, seed: int, n_samples: int) -> InequalityReport:
    gen = _rng.stream(seed, _rng.AUXILIARY, index)
    run_seed = _rng.child_seed(seed, index)
    if index % 2 == 0:
        d = int(gen.integers(2, 7))
        cx, cy = random_correlation(gen, d), random_correlation(gen, d)
        return kahane_check(cx, cy, np.ones(d), KahaneMode.DIAGONAL, functional="tanh_pairs",
                            n_samples=n_samples, seed=run_seed)
    sizes = gen.integers(1, 3, size=int(gen.integers(2, 4)))
    cx, cy, blocks = decorrelation_covariances(gen, sizes)
    p = gen.uniform(0.1, 1.0, len(cx))
    return kahane_check(cx, cy, p, KahaneMode.DIAGONAL, functional="block_product",
                        n_samples=n_samples, seed=run_seed, blocks=blocks)


SUITES = {"Girsanov": girsanov_instance, "KahaneConvexity": convexity_instance,
          "KahaneDiagonal": diagonal_instance}


def run_inequality_suite(name: str, n_instances: int = 100, seed: int = 0,
                         n_samples: int = 20_000) -> list[InequalityReport]:
    """Randomized instances of one suite, ordered by instance index."""
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return [SUITES[name](i, seed, n_samples) for i in range(n_instances)]
