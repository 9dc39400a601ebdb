"""Command-line batch runner: parameter scans, verification suites and summary reports.

Exit status is 0 when everything passed, 1 when a verification assertion
failed or a scan cell raised, and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import enum
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import rng as _rng
from .correlation import EstimatorConfig, estimate_npoint, fixed_time_run, passage_run
from .errors import ConfigError, LiouvilleError
from .estimate import ComplexEstimate
from .params import Insertion, LiouvilleParams, in_pencil, q_parameter, seiberg_check
from .verify.suites import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SCAN_COLUMNS = ["alpha", "beta", "horizon", "mean_re", "mean_im", "se_re", "se_im", "n_samples", "seed", "error"]
VERIFY_COLUMNS = ["instance_id", "statistic", "predicted", "measured", "se", "pass"]


class Method(enum.Enum):
    FIXED_TIME = "FixedTime"
    STOPPING = "Stopping"
    MODIFIED = "Modified"
    NPOINT = "NPoint"


@dataclass(frozen=True)
class ScanSpec:
    """Validated scan configuration.

    ``horizons`` are times for ``FixedTime``, passage levels for
    ``Stopping``/``Modified`` and log-radius cutoffs for ``NPoint``.
    ``companions`` are the fixed extra insertions of an ``NPoint`` scan.
    """

    gamma: float
    mu: float
    alpha_grid: tuple
    beta_grid: tuple
    horizons: tuple
    n_samples: int
    method: Method
    dt: float = 1.0 / 64.0
    n_modes: int = 32
    companions: tuple = field(default_factory=tuple)

    @property
    def params(self) -> LiouvilleParams:
        return LiouvilleParams(self.gamma, self.mu)

    def canonical(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        out["companions"] = [[c.z.real, c.z.imag, c.alpha, c.beta] for c in self.companions]
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    tool_version: str
    timings: dict
    files: list
    failed_cells: int = 0
    failed_checks: int = 0
    workers: int = 1

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# config parsing

REQUIRED = ("gamma", "mu", "alpha_grid", "beta_grid", "horizons", "n_samples", "method")
OPTIONAL = ("dt", "n_modes", "companions")


def _parse_float(text: str, key: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line)
    return value


def _parse_grid(text: str, key: str, line: int) -> tuple:
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            a, b = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"{key}: ranges 'a..b' need integer ends", line) from None
        step = 1 if b >= a else -1
        values = tuple(float(v) for v in range(a, b + step, step))
    else:
        values = tuple(_parse_float(v, key, line) for v in text.split(",") if v.strip())
    if not values:
        raise ConfigError(f"{key}: grid must not be empty", line)
    d = np.diff(values)
    if len(values) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ConfigError(f"{key}: grid must be strictly monotone", line)
    return values


def _parse_companions(text: str, line: int) -> tuple:
    out = []
    for item in (s.strip() for s in text.split(";")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError("companions: entries are 'z:alpha' or 'z:alpha:beta' separated by ';'", line)
        try:
            z = complex(parts[0].replace(" ", ""))
        except ValueError:
            raise ConfigError(f"companions: cannot parse position {parts[0]!r}", line) from None
        alpha = _parse_float(parts[1], "companions", line)
        beta = _parse_float(parts[2], "companions", line) if len(parts) == 3 else 0.0
        out.append(Insertion(z, alpha, beta))
    return tuple(out)


def parse_config_text(text: str) -> ScanSpec:
    """Parse flat ``key = value`` text (``#`` starts a comment) into a validated :class:`ScanSpec`."""
    raw: dict = {}
    lines: dict = {}
    for number, content in enumerate(text.splitlines(), start=1):
        content = content.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError("expected 'key = value'", number)
        key, _, value = (s.strip() for s in content.partition("="))
        if key not in REQUIRED + OPTIONAL:
            raise ConfigError(f"unknown key {key!r}", number)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", number)
        if not value:
            raise ConfigError(f"{key}: missing value", number)
        raw[key], lines[key] = value, number
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    gamma = _parse_float(raw["gamma"], "gamma", lines["gamma"])
    if not 0.0 < gamma < 2.0:
        raise ConfigError("gamma must lie in (0,2)", lines["gamma"])
    mu = _parse_float(raw["mu"], "mu", lines["mu"])
    if not mu >= 0.0:
        raise ConfigError("mu must be non-negative", lines["mu"])
    try:
        method = Method(raw["method"])
    except ValueError:
        choices = ", ".join(m.value for m in Method)
        raise ConfigError(f"method must be one of {choices}", lines["method"]) from None
    alphas = _parse_grid(raw["alpha_grid"], "alpha_grid", lines["alpha_grid"])
    betas = _parse_grid(raw["beta_grid"], "beta_grid", lines["beta_grid"])
    horizons = _parse_grid(raw["horizons"], "horizons", lines["horizons"])
    try:
        n_samples = int(raw["n_samples"])
    except ValueError:
        raise ConfigError("n_samples must be an integer", lines["n_samples"]) from None
    if n_samples < 2:
        raise ConfigError("n_samples must be at least 2", lines["n_samples"])
    extras = {}
    if "dt" in raw:
        extras["dt"] = _parse_float(raw["dt"], "dt", lines["dt"])
        if not extras["dt"] > 0:
            raise ConfigError("dt must be positive", lines["dt"])
    if "n_modes" in raw:
        try:
            extras["n_modes"] = int(raw["n_modes"])
        except ValueError:
            raise ConfigError("n_modes must be an integer", lines["n_modes"]) from None
        if extras["n_modes"] < 1:
            raise ConfigError("n_modes must be at least 1", lines["n_modes"])
    if "companions" in raw:
        extras["companions"] = _parse_companions(raw["companions"], lines["companions"])

    q = q_parameter(gamma)
    params = LiouvilleParams(gamma, mu)
    h_line = lines["horizons"]
    if any(h < 0 for h in horizons):
        raise ConfigError("horizons must be non-negative", h_line)
    if method in (Method.STOPPING, Method.MODIFIED):
        if any(h != int(h) or h < 1 for h in horizons):
            raise ConfigError(f"{method.value} horizons are passage levels: positive integers", h_line)
        for a in alphas:
            for b in betas:
                if not in_pencil(a, b, params):
                    raise ConfigError(
                        f"(alpha={a}, beta={b}) lies outside the pencil region |beta| < Q - alpha "
                        f"(Q - alpha = {q - a:.6g}); the {method.value} method is defined only inside it",
                        lines["beta_grid"])
    if method is Method.NPOINT:
        companions = extras.get("companions", ())
        if not companions:
            raise ConfigError("NPoint scans need at least one entry in companions", lines.get("method"))
        if any(h <= 0 for h in horizons):
            raise ConfigError("NPoint horizons are log-radius cutoffs and must be positive", h_line)
        for a in alphas:
            for b in betas:
                ins = [Insertion(0j, a, b), *companions]
                if not seiberg_check(ins, params):
                    raise ConfigError(f"alpha={a} with the companions violates the Seiberg bounds "
                                      "(every alpha < Q and sum of alphas > 2Q)", lines["alpha_grid"])
                if any(not in_pencil(c.alpha, c.beta, params) for c in ins):
                    raise ConfigError(f"(alpha={a}, beta={b}) or a companion lies outside the pencil region",
                                      lines["beta_grid"])
    return ScanSpec(gamma=gamma, mu=mu, alpha_grid=alphas, beta_grid=betas, horizons=horizons,
                    n_samples=n_samples, method=method, **extras)


def parse_config(path) -> ScanSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# scans

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _cell_estimates(spec: ScanSpec, alpha: float, beta: float, cfg: EstimatorConfig) -> list[ComplexEstimate]:
    params = spec.params
    if spec.method is Method.FIXED_TIME:
        return fixed_time_run(alpha, params, spec.horizons, cfg).estimates(beta)
    if spec.method in (Method.STOPPING, Method.MODIFIED):
        levels = [int(h) for h in spec.horizons]
        modified = spec.method is Method.MODIFIED
        run = passage_run(alpha, params, max(levels), cfg, with_tail=modified)
        samples = run.modified_samples(beta) if modified else run.samples(beta)
        return [ComplexEstimate.from_samples(samples[:, n], cfg.seed) for n in levels]
    ins = [Insertion(0j, alpha, beta), *spec.companions]
    return [estimate_npoint(ins, params, [h] * len(ins), cfg) for h in spec.horizons]


def _run_cell(spec: ScanSpec, master_seed: int, index: int, alpha: float, beta: float) -> list[list]:
    seed = _rng.child_seed(master_seed, index)
    cfg = EstimatorConfig(n_samples=spec.n_samples, dt=spec.dt, n_modes=spec.n_modes, seed=seed)
    horizons = sorted(spec.horizons)
    try:
        ests = _cell_estimates(spec, alpha, beta, cfg)
    except (LiouvilleError, ValueError, FloatingPointError) as exc:
        nan = float("nan")
        message = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        return [[alpha, beta, h, nan, nan, nan, nan, spec.n_samples, seed, message] for h in horizons]
    rows = []
    for h, e in zip(horizons, ests):
        rows.append([alpha, beta, h, e.mean.real, e.mean.imag, e.se_real, e.se_imag, e.n_samples, seed, ""])
    return rows


def run_scan(spec: ScanSpec, master_seed: int, out_dir, workers: int = 1) -> RunManifest:
    """Estimate every ``(alpha, beta)`` cell over all horizons and write one CSV plus the manifest.

    Cell ``k`` (row-major over ``alpha_grid`` then ``beta_grid``) uses seed
    ``child_seed(master_seed, k)``, so output does not depend on ``workers``.
    A cell that raises is written as rows carrying the error message.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    cells = [(a, b) for a in spec.alpha_grid for b in spec.beta_grid]
    args = [(spec, master_seed, k, a, b) for k, (a, b) in enumerate(cells)]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, *zip(*args)))
    else:
        results = [_run_cell(*a) for a in args]
    rows = [row for cell in results for row in cell]
    name = f"scan_{spec.method.value}.csv"
    _write_csv(out / name, SCAN_COLUMNS, rows)
    failed = sum(1 for cell in results if cell and cell[0][-1])
    manifest = RunManifest(config_hash=spec.digest(), master_seed=int(master_seed), tool_version=__version__,
                           timings={"scan": round(time.perf_counter() - start, 3)},
                           files=[_file_entry(out / name)], failed_cells=failed, workers=workers)
    manifest.write(out)
    return manifest


def _file_entry(path: Path) -> dict:
    return {"name": path.name, "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}


# ---------------------------------------------------------------------------
# verification and reports

def run_verify(suite: str, master_seed: int, out_dir, workers: int = 1) -> RunManifest:
    """Run one verification suite and write its rows and the manifest."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    rows = run_suite(suite, master_seed)
    name = f"verify_{suite}.csv"
    _write_csv(out / name, VERIFY_COLUMNS,
               [[r.instance_id, r.statistic, r.predicted, r.measured, r.se, r.passed] for r in rows])
    suite_hash = hashlib.sha256(f"verify:{suite}".encode()).hexdigest()
    manifest = RunManifest(config_hash=suite_hash, master_seed=int(master_seed), tool_version=__version__,
                           timings={f"verify:{suite}": round(time.perf_counter() - start, 3)},
                           files=[_file_entry(out / name)], failed_checks=sum(not r.passed for r in rows),
                           workers=workers)
    manifest.write(out)
    return manifest


def summarize(out_dir) -> list[list]:
    """One summary row per CSV in ``out_dir``: kind, rows, failures and the largest ``|mean|`` or SE ratio."""
    summary = []
    for path in sorted(Path(out_dir).glob("*.csv")):
        if path.name == "summary.csv":
            continue
        with open(path, encoding="utf-8", newline="") as fh:
            records = list(csv.DictReader(fh))
        if path.name.startswith("scan_"):
            failures = sum(1 for r in records if r["error"])
            mods = [math.hypot(float(r["mean_re"]), float(r["mean_im"])) for r in records if not r["error"]]
            summary.append([path.name, "scan", len(records), failures, max(mods) if mods else float("nan")])
        elif path.name.startswith("verify_"):
            failures = sum(1 for r in records if r["pass"] != "true")
            summary.append([path.name, "verify", len(records), failures, float("nan")])
    return summary


def run_report(out_dir) -> tuple[list[list], int]:
    rows = summarize(out_dir)
    _write_csv(Path(out_dir) / "summary.csv", ["file", "kind", "rows", "failures", "max_abs_mean"], rows)
    return rows, sum(r[3] for r in rows)


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liouville-mc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    scan = sub.add_parser("scan", help="estimate correlation functions over a parameter grid")
    scan.add_argument("--config", required=True, help="flat key = value configuration file")
    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}")
    report = sub.add_parser("report", help="summarize the CSV files in --out")
    for p in (scan, verify, report):
        p.add_argument("--out", required=True, help="output directory")
    for p in (scan, verify):
        p.add_argument("--seed", type=int, default=0, help="master seed (non-negative)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if getattr(args, "seed", 0) < 0 or getattr(args, "workers", 1) < 1:
            raise ConfigError("--seed must be non-negative and --workers at least 1")
        if args.command == "scan":
            manifest = run_scan(parse_config(args.config), args.seed, args.out, args.workers)
            print(f"scan: {manifest.files[0]['name']}, {manifest.failed_cells} failed cells")
            return EXIT_FAIL if manifest.failed_cells else EXIT_OK
        if args.command == "verify":
            manifest = run_verify(args.suite, args.seed, args.out, args.workers)
            print(f"verify {args.suite}: {manifest.failed_checks} failed checks")
            return EXIT_FAIL if manifest.failed_checks else EXIT_OK
        rows, failures = run_report(args.out)
        for r in rows:
            print(",".join(_fmt(v) for v in r))
        return EXIT_FAIL if failures else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
