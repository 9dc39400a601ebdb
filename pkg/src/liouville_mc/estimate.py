"""Monte-Carlo summaries: complex means with standard errors and slope fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ComplexEstimate:
    """Sample mean of a complex observable with separate real/imaginary standard errors."""

    mean: complex
    se_real: float
    se_imag: float
    n_samples: int
    seed: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, values, seed: int, diagnostics: dict | None = None) -> "ComplexEstimate":
        v = np.asarray(values, dtype=complex).ravel()
        n = len(v)
        mean = complex(np.mean(v))
        if n > 1:
            se_r = float(np.std(v.real, ddof=1) / np.sqrt(n))
            se_i = float(np.std(v.imag, ddof=1) / np.sqrt(n))
        else:
            se_r = se_i = 0.0
        return cls(mean, se_r, se_i, n, int(seed), dict(diagnostics or {}))

    @property
    def se(self) -> float:
        """Standard error of the complex mean, ``sqrt(se_real^2 + se_imag^2)``."""
        return float(np.hypot(self.se_real, self.se_imag))

    def agrees_with(self, target: complex, k: float = 3.0, other: "ComplexEstimate | None" = None) -> bool:
        """Real and imaginary parts each within ``k`` (combined) standard errors of ``target``.

        When ``other`` is given the comparison is against ``other.mean`` with
        the standard errors of both estimates added in quadrature.
        """
        se_r, se_i = self.se_real, self.se_imag
        if other is not None:
            target = other.mean
            se_r = float(np.hypot(se_r, other.se_real))
            se_i = float(np.hypot(se_i, other.se_imag))
        d = self.mean - complex(target)
        tiny = 1e-12 * max(1.0, abs(target))
        return abs(d.real) <= k * se_r + tiny and abs(d.imag) <= k * se_i + tiny


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slope of ``y_k = h(mean_k)`` against ``x_k`` with a delta-method standard error."""

    slope: float
    se: float
    intercept: float
    x: np.ndarray
    y: np.ndarray


def _ols_weights(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean()
    return xc / np.dot(xc, xc)


def fit_slope(x, samples, log: bool = True) -> SlopeFit:
    """Slope of ``log|E[s_k]|`` (or ``|E[s_k]|``) against ``x``.

    ``samples`` has shape ``(n, K)``: column ``k`` holds per-sample values
    whose mean estimates the quantity at ``x[k]``. Columns may be correlated
    (common random numbers); the standard error linearizes the slope into a
    per-sample influence value and takes its empirical spread.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(samples)
    if s.ndim != 2 or s.shape[1] != len(x) or len(x) < 2:
        raise ValueError("samples must have shape (n, len(x)) with at least two abscissae")
    means = s.mean(axis=0)
    mod = np.abs(means)
    y = np.log(mod) if log else mod
    w = _ols_weights(x)
    slope = float(w @ y)
    intercept = float(y.mean() - slope * x.mean())
    grad = np.conj(means) / (mod ** 2 if log else mod)
    influence = np.real((s - means) * grad) @ w
    se = float(np.std(influence, ddof=1) / np.sqrt(len(influence)))
    return SlopeFit(slope, se, intercept, x, y)


def fit_slope_independent(x, sample_columns, log: bool = True) -> SlopeFit:
    """As :func:`fit_slope` for estimates built from independent sample sets of any sizes."""
    x = np.asarray(x, dtype=float)
    cols = [np.asarray(c).ravel() for c in sample_columns]
    means = np.array([c.mean() for c in cols])
    mod = np.abs(means)
    y = np.log(mod) if log else mod
    w = _ols_weights(x)
    slope = float(w @ y)
    var = 0.0
    for wk, c, m, a in zip(w, cols, means, mod):
        g = np.conj(m) / (a * a if log else a)
        var += wk * wk * np.var(np.real((c - m) * g), ddof=1) / len(c)
    return SlopeFit(slope, float(np.sqrt(var)), float(y.mean() - slope * x.mean()), x, y)
