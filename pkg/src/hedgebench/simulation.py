"""Price-path generation, ingestion and realized-volatility diagnostics.

Normals come from numpy's ``Generator(PCG64(seed))`` via its ziggurat
``standard_normal``; one generator per call, drawn step-major so that
``simulate_gbm`` output is bit-identical for identical arguments.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import MarketParams


@dataclass(frozen=True)
class PathSet:
    """``prices`` has shape (n_paths, n_steps + 1); ``dt`` is years per step."""

    prices: np.ndarray
    dt: float
    t0_normalized: bool = False

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 2 or p.shape[1] < 2:
            raise ValueError("prices must be a 2-D array with at least 2 columns")
        if not np.all(p > 0):
            raise ValueError("all prices must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t0_normalized and not np.all(p[:, 0] == 1.0):
            raise ValueError("t0-normalized paths must start at exactly 1")
        object.__setattr__(self, "prices", p)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.prices.shape[1] - 1

    @property
    def maturity(self) -> float:
        return self.n_steps * self.dt

    def normalized(self) -> "PathSet":
        if self.t0_normalized:
            return self
        return PathSet(self.prices / self.prices[:, :1], self.dt, True)

    def take(self, rows) -> "PathSet":
        return PathSet(self.prices[rows], self.dt, self.t0_normalized)


@dataclass(frozen=True)
class VolStats:
    min: float
    max: float
    mean: float
    std: float


def simulate_gbm(params: MarketParams, n_steps: int, n_paths: int, seed: int) -> PathSet:
    """Exact log-normal stepping of a GBM on the grid ``dt = T / n_steps``."""
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be at least 1")
    rng = np.random.default_rng(seed)
    dt = params.maturity_T / n_steps
    z = rng.standard_normal((n_steps, n_paths)).T
    log_inc = (params.mu - 0.5 * params.sigma**2) * dt + params.sigma * math.sqrt(dt) * z
    prices = np.empty((n_paths, n_steps + 1))
    prices[:, 0] = params.s0
    prices[:, 1:] = params.s0 * np.exp(np.cumsum(log_inc, axis=1))
    return PathSet(prices, dt, t0_normalized=params.s0 == 1.0)


def min_series_length(window: int, n_paths: int) -> int:
    return window + n_paths


def overlapping_paths(series, window: int, n_paths: int, dt: float = 1.0) -> PathSet:
    """Slice ``n_paths`` windows of ``window`` steps at stride one, each divided by its first value."""
    s = np.asarray(series, dtype=float)
    if window < 1 or n_paths < 1:
        raise ValueError("window and n_paths must be at least 1")
    need = min_series_length(window, n_paths)
    if s.ndim != 1 or len(s) < need:
        raise ValueError(
            f"series of length {len(s)} is too short: {n_paths} windows of {window} steps "
            f"need at least {need} points"
        )
    idx = np.arange(n_paths)[:, None] + np.arange(window + 1)[None, :]
    rows = s[idx]
    return PathSet(rows / rows[:, :1], dt, t0_normalized=True)


def realized_vol(path, dt: float) -> float:
    """Annualized sample (n - 1) standard deviation of log-returns."""
    x = np.asarray(path, dtype=float)
    if x.ndim != 1 or len(x) < 3:
        # two points give a single return, for which the n-1 estimator is undefined
        raise ValueError("realized_vol needs at least 3 prices (2 log-returns)")
    lr = np.diff(np.log(x))
    return float(np.std(lr, ddof=1) / math.sqrt(dt))


def vol_stats(paths: PathSet) -> VolStats:
    if paths.n_paths < 2:
        raise ValueError("vol_stats needs at least 2 paths")
    if paths.n_steps < 2:
        raise ValueError("vol_stats needs at least 2 steps per path")
    lr = np.diff(np.log(paths.prices), axis=1)
    vols = np.std(lr, axis=1, ddof=1) / math.sqrt(paths.dt)
    return VolStats(
        min=float(vols.min()),
        max=float(vols.max()),
        mean=float(vols.mean()),
        std=float(np.std(vols, ddof=1)),
    )


def ingest_csv(file, column: str = "close") -> np.ndarray:
    """Read one price column from a headed UTF-8 CSV.

    Blank lines are skipped. Row numbers in errors are 1-based file lines,
    the header being line 1.
    """
    path = Path(file)
    if not path.is_file():
        raise FileNotFoundError(f"price file not found: {path}")
    values = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise KeyError(f"column {column!r} not found in {path} (have {reader.fieldnames})")
        for rec in reader:
            raw = (rec.get(column) or "").strip()
            line = reader.line_num
            if not raw and all(not (v or "").strip() for v in rec.values()):
                continue
            try:
                v = float(raw)
            except ValueError:
                raise ValueError(f"{path}: line {line}: non-numeric value {raw!r}") from None
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{path}: line {line}: price must be positive, got {raw!r}")
            values.append(v)
    return np.asarray(values)


def write_paths_csv(paths: PathSet, file) -> None:
    """One row per path; dt and normalization flag in a leading comment line."""
    with open(file, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# dt={paths.dt!r} t0_normalized={int(paths.t0_normalized)}\n")
        w = csv.writer(fh)
        w.writerow([f"t{i}" for i in range(paths.n_steps + 1)])
        for row in paths.prices:
            w.writerow([repr(float(v)) for v in row])


def read_paths_csv(file) -> PathSet:
    with open(file, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("#"):
            raise ValueError(f"{file}: missing '# dt=...' header comment")
        meta = dict(tok.split("=", 1) for tok in first[1:].split())
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    return PathSet(np.array(rows), float(meta["dt"]), bool(int(meta.get("t0_normalized", "0"))))
