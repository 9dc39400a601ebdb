"""Verification suites producing uniform result rows.

Each suite returns a list of :class:`CheckRow` ordered by instance id. Rows
are pure functions of the master seed, so a suite rerun with the same seed
reproduces its rows exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .. import rng as _rng
from ..correlation import EstimatorConfig
from ..field import (lateral_covariance, lateral_truncation_bound, sample_lateral_at,
                     sample_radial_path, sample_radial_paths)
from ..params import LiouvilleParams
from ..passage import (passage_mgf, sample_first_passages, stopping_sequence_direct,
                       stopping_sequence_from_path)
from .annuli import (characterized_preimage, is_cutting_annuli, reduce_to_annuli, reduction_partition,
                     weak_correlation_delta)
from .estimates import (decorrelation_check, freezing_decay, residual_samples, residual_survival)
from .inequalities import run_inequality_suite


@dataclass(frozen=True)
class CheckRow:
    instance_id: str
    statistic: str
    predicted: float
    measured: float
    se: float
    passed: bool


def _within(predicted: float, measured: float, se: float, k: float = 3.0, slack: float = 0.0) -> bool:
    return abs(measured - predicted) <= k * se + slack + 1e-12 * max(1.0, abs(predicted))


# ---------------------------------------------------------------------------

def covariance_suite(seed: int, n_paths: int = 100_000, n_modes: int = 64) -> list[CheckRow]:
    """Radial process against ``min(s, t)`` and lateral field against its exact kernel."""
    rows = []
    dt = 1.0 / 16.0
    paths = sample_radial_paths(n_paths, 5.0, dt, seed)
    gen = _rng.stream(seed, _rng.AUXILIARY)
    pairs = np.sort(gen.integers(1, paths.shape[1], size=(10, 2)), axis=1)
    for k, (i, j) in enumerate(pairs):
        prod = paths[:, i] * paths[:, j]
        rows.append(CheckRow(f"radial-{k}", "cov_B", min(i, j) * dt, float(prod.mean()),
                             float(prod.std(ddof=1) / math.sqrt(n_paths)), False))
    rows = [CheckRow(r.instance_id, r.statistic, r.predicted, r.measured, r.se,
                     _within(r.predicted, r.measured, r.se)) for r in rows]

    s = gen.uniform(0.0, 2.0, 20)
    t = s + gen.uniform(0.1, 1.5, 20)
    th, th2 = gen.uniform(0.0, 2 * np.pi, 20), gen.uniform(0.0, 2 * np.pi, 20)
    y = sample_lateral_at(np.concatenate([s, t]), np.concatenate([th, th2]), n_paths, n_modes, seed, chunk=1024)
    for k in range(20):
        prod = y[:, k] * y[:, 20 + k]
        exact = float(lateral_covariance(s[k], th[k], t[k], th2[k]))
        se = float(prod.std(ddof=1) / math.sqrt(n_paths))
        slack = float(lateral_truncation_bound(n_modes, t[k] - s[k]))
        rows.append(CheckRow(f"lateral-{k}", "cov_Y", exact, float(prod.mean()), se,
                             _within(exact, float(prod.mean()), se, slack=slack)))
    return rows


def renewal_suite(seed: int, n_draws: int = 1_000_000, n_paths: int = 2000) -> list[CheckRow]:
    """Passage-time moments, transform, path-versus-direct law and residual-time survival."""
    rows = []
    for k, nu in enumerate((0.5, 1.0, 2.0)):
        x = sample_first_passages(nu, n_draws, _rng.stream(seed, _rng.PASSAGE, 10 + k))
        mean, var = float(x.mean()), float(x.var(ddof=1))
        rows.append(CheckRow(f"moments-nu{nu}", "mean_T1", 1 / nu, mean, float(x.std() / math.sqrt(n_draws)),
                             abs(mean * nu - 1) <= 0.01))
        rows.append(CheckRow(f"moments-nu{nu}", "var_T1", 1 / nu ** 3, var, float("nan"),
                             abs(var * nu ** 3 - 1) <= 0.05))
    nu = 1.0
    x = sample_first_passages(nu, n_draws, _rng.stream(seed, _rng.PASSAGE, 20))
    for k, beta in enumerate(np.linspace(0.1, 0.65, 5)):
        v = np.exp(0.5 * beta * beta * x)
        exact = passage_mgf(nu, 0.5 * beta * beta).real
        se = float(v.std(ddof=1) / math.sqrt(n_draws))
        rows.append(CheckRow(f"mgf-{k}", f"E[exp(b^2 T1/2)] b={beta:.2f}", exact, float(v.mean()), se,
                             _within(exact, float(v.mean()), se)))

    n_levels, dt = 3, 1.0 / 64.0
    horizon = n_levels / nu + 12.0 * math.sqrt(n_levels / nu ** 3) + 2.0
    from_path = []
    for k in range(n_paths):
        path = sample_radial_path(horizon, dt, _rng.child_seed(seed, 100, k))
        from_path.append(np.diff(stopping_sequence_from_path(path, nu, n_levels).times))
    direct = sample_first_passages(nu, n_paths * n_levels, _rng.stream(seed, _rng.PASSAGE, 30))
    ks = stats.ks_2samp(np.concatenate(from_path), direct)
    rows.append(CheckRow("ks-path", "ks_pvalue", 0.01, float(ks.pvalue), float("nan"), ks.pvalue >= 0.01))

    t = 2.0
    r = residual_samples(nu, t, 20_000, _rng.child_seed(seed, 200))
    for xq in (0.25, 0.5, 1.0, 2.0):
        p = float((r > xq).mean())
        exact = float(residual_survival([xq], t, nu)[0])
        se = math.sqrt(max(p * (1 - p), 1e-12) / len(r))
        rows.append(CheckRow(f"residual-x{xq}", "P(R_t > x)", exact, p, se, _within(exact, p, se)))
    return rows


def annuli_suite(seed: int, n_sequences: int = 100, n: int = 10) -> list[CheckRow]:
    """Exact checks of the reduction map and the preimage characterization."""
    delta = weak_correlation_delta(1.0 / 8.0)
    rows = []
    for k in range(n_sequences):
        gen = _rng.stream(seed, _rng.AUXILIARY, k)
        nu = float(gen.uniform(0.3, 3.0))
        seq = stopping_sequence_direct(nu, n, _rng.child_seed(seed, k))
        groups = reduction_partition(seq, delta, n)
        valid = all(is_cutting_annuli(key, seq, delta) and all(set(key) <= j for j in js)
                    for key, js in groups.items())
        idem = all(reduce_to_annuli(key, seq, delta).indices == key for key in groups)
        match = all(characterized_preimage(reduce_to_annuli(key, seq, delta), n) == js
                    for key, js in groups.items())
        covered = sum(len(js) for js in groups.values()) == (1 << n) - 1
        for stat, ok in (("reduction_valid", valid), ("idempotent", idem),
                         ("preimage_match", match), ("partition_cover", covered)):
            rows.append(CheckRow(f"seq-{k}", stat, 1.0, float(ok), 0.0, ok))
    return rows


def inequality_rows(name: str, seed: int, n_instances: int = 100) -> list[CheckRow]:
    rows = []
    for k, rep in enumerate(run_inequality_suite(name, n_instances, seed)):
        stat = f"{rep.kind}:{rep.functional}"
        rows.append(CheckRow(f"{name}-{k}", stat, rep.lhs, rep.rhs, rep.se, rep.passed))
    return rows


def kahane_suite(seed: int, n_instances: int = 100) -> list[CheckRow]:
    """Both comparison inequalities plus the out-of-sample decorrelation bound."""
    rows = inequality_rows("KahaneConvexity", seed, n_instances)
    rows += inequality_rows("KahaneDiagonal", seed, n_instances)
    cfg = EstimatorConfig(n_samples=4000, dt=1.0 / 32.0, n_modes=16, seed=seed)
    rep = decorrelation_check(0.8, 0.5, LiouvilleParams(1.0, 1.0), cfg)
    rows.append(CheckRow("decorrelation", "worst_excess_se", 3.0, rep.worst_excess, 1.0, rep.passed))
    return rows


def girsanov_suite(seed: int, n_instances: int = 100) -> list[CheckRow]:
    return inequality_rows("Girsanov", seed, n_instances)


FREEZING_GRID = ((1.0, (3.0, 3.5, 4.0)), (1.4, (2.6, 3.1, 3.6)))


def freezing_suite(seed: int, n_samples: int = 20_000) -> list[CheckRow]:
    """Measured decay slope at least the predicted exponent (up to 3 SE) on a 2x3 grid."""
    eps = [2.0 ** -k for k in range(2, 7)]
    cfg = EstimatorConfig(n_samples=n_samples, dt=1.0 / 64.0, n_modes=16, seed=seed)
    rows = []
    for gamma, alphas in FREEZING_GRID:
        for alpha in alphas:
            rep = freezing_decay([alpha], LiouvilleParams(gamma, 1.0), eps, cfg)
            rows.append(CheckRow(f"g{gamma}-a{alpha}", "log_decay_slope", rep.predicted_exponent,
                                 rep.measured_slope, rep.se_slope,
                                 rep.measured_slope >= rep.predicted_exponent - 3.0 * rep.se_slope))
    return rows


SUITES = {"Freezing": freezing_suite, "Kahane": kahane_suite, "Girsanov": girsanov_suite,
          "Annuli": annuli_suite, "Renewal": renewal_suite, "Covariance": covariance_suite}


def run_suite(name: str, seed: int) -> list[CheckRow]:
    return SUITES[name](seed)
