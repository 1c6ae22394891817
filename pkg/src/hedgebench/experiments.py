"""Regeneration of the hedging tables, loss curves, histograms and checks.

Every comparison against reference values is statistical: the random stream
differs from the original, so downstream code compares with bands or
orderings, never equalities.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import CostModel, MarketParams, OptionSpec, bs_delta, leland_pnl_approx
from .engine import HedgeReport, bs_strategy, evaluate, leland_strategy, nn_strategy, run_ledger
from .network import MlpParams
from .simulation import PathSet, ingest_csv, min_series_length, overlapping_paths, simulate_gbm
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.002, 0.005, 0.01, 0.02)
STRATEGIES = ("BS", "NN", "Leland")


@dataclass(frozen=True)
class TableRow:
    alpha: float
    set: str
    strategy: str
    mean: float  # percent
    std: float  # percent


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketParams = MarketParams()
    steps: int = 30
    n_paths: int = 256
    alphas: tuple = DEFAULT_ALPHAS
    train_seed: int = 42
    test_seed: int = 4242
    nn_seed: int = 0
    mode: str = "independent"
    data_source: str = "simulated"
    csv_path: str | None = None
    csv_column: str = "close"
    series_length: int | None = None
    strike: float = 1.0
    extra_strikes: tuple = ()
    epochs: int = 500
    batch_size: int = 64
    lr: float = 1e-3
    bins: int = 30

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be at least 2")
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be non-negative")
        if self.train_seed == self.test_seed:
            raise ValueError("train and test seeds must differ")
        if self.mode not in ("independent", "overlapping"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.data_source not in ("simulated", "csv"):
            raise ValueError(f"unknown data source {self.data_source!r}")
        if self.data_source == "csv" and (self.mode != "overlapping" or not self.csv_path):
            raise ValueError("csv data needs mode 'overlapping' and a csv_path")

    @property
    def dt(self) -> float:
        return self.market.maturity_T / self.steps

    @property
    def spec(self) -> OptionSpec:
        return OptionSpec(self.strike, self.market.maturity_T)

    def train_config(self, alpha: float) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.nn_seed,
            strikes=(self.strike,) + tuple(self.extra_strikes),
            maturity_T=self.market.maturity_T,
            tc_alpha=alpha,
            r=self.market.r,
            lr=self.lr,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["market"] = asdict(self.market)
        return d


def build_sets(config: ExperimentConfig) -> tuple[PathSet, PathSet]:
    """Train and test path sets; the test set is always independent GBM paths."""
    m = config.market
    test = simulate_gbm(m, config.steps, config.n_paths, config.test_seed).normalized()
    if config.mode == "independent":
        train_set = simulate_gbm(m, config.steps, config.n_paths, config.train_seed).normalized()
        return train_set, test
    need = min_series_length(config.steps, config.n_paths)
    if config.data_source == "csv":
        series = ingest_csv(config.csv_path, config.csv_column)
    else:
        length = config.series_length or need
        if length < need:
            raise ValueError(
                f"series_length {length} is too short: {config.n_paths} windows of "
                f"{config.steps} steps need at least {need} points"
            )
        long_market = replace(m, maturity_T=config.dt * (length - 1))
        series = simulate_gbm(long_market, length - 1, 1, config.train_seed).prices[0]
    return overlapping_paths(series, config.steps, config.n_paths, dt=config.dt), test


@dataclass
class CellResult:
    alpha: float
    rows: list
    loss_history: list
    reports: dict
    params: MlpParams


def run_cell(config: ExperimentConfig, alpha: float, sets=None) -> CellResult:
    """Train the network at one cost rate and evaluate all three strategies on both sets."""
    train_set, test_set = sets if sets is not None else build_sets(config)
    spec, r, cost = config.spec, config.market.r, CostModel(alpha)
    result = train(config.train_config(alpha), train_set)
    strategies = {
        "BS": bs_strategy(config.market.sigma, spec, r),
        "NN": nn_strategy(result.params),
        "Leland": leland_strategy(config.market.sigma, alpha, config.dt, spec, r),
    }
    rows, reports = [], {}
    for set_name, paths in (("train", train_set), ("test", test_set)):
        for name in STRATEGIES:
            rep = evaluate(paths, strategies[name], spec, r, cost, bins=config.bins)
            reports[(set_name, name)] = rep
            rows.append(TableRow(alpha, set_name, name, 100 * rep.mean, 100 * rep.std))
    return CellResult(alpha, rows, result.loss_history, reports, result.params)


def _cell_job(args):
    config, alpha = args
    return run_cell(config, alpha)


@dataclass
class TablesResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)

    @property
    def rows(self) -> list:
        rows = [row for c in self.cells for row in c.rows]
        return sorted(rows, key=lambda t: (t.set != "train", t.alpha, STRATEGIES.index(t.strategy)))

    def cell(self, alpha: float) -> CellResult:
        return next(c for c in self.cells if c.alpha == alpha)


def run_tables(config: ExperimentConfig, jobs: int = 1) -> TablesResult:
    sets = build_sets(config)
    if jobs > 1 and len(config.alphas) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell_job, [(config, a) for a in config.alphas]))
    else:
        cells = [run_cell(config, a, sets) for a in config.alphas]
    return TablesResult(config, cells)


def run_overlapping(config: ExperimentConfig, jobs: int = 1) -> TablesResult:
    if config.mode != "overlapping":
        raise ValueError("run_overlapping needs mode='overlapping'")
    return run_tables(config, jobs)


@dataclass(frozen=True)
class DivergenceRow:
    alpha: float
    n_steps: int
    mean_fee: float
    se_fee: float
    ratio: float


def divergence_study(sigma: float = 0.2, nu_fixed: float = 0.2, alphas=(0.01,), n_list=(30, 120, 480),
                     n_paths: int = 10_000, seed: int = 7, mu: float = 0.05, maturity_T: float = 0.25,
                     strike: float = 1.0) -> list[DivergenceRow]:
    """Mean proportional-fee column of Z_T under a fixed-volatility BS hedge, as n grows."""
    spec = OptionSpec(strike, maturity_T)
    strategy = bs_strategy(nu_fixed, spec)
    market = MarketParams(1.0, mu, sigma, 0.0, maturity_T)
    fees_by_n = {}
    for n in n_list:
        paths = simulate_gbm(market, n, n_paths, seed + n)
        fees_by_n[n] = paths
    rows = []
    for alpha in alphas:
        base = None
        for n in n_list:
            _, fees, _ = run_ledger(fees_by_n[n].prices, strategy, spec, 0.0, CostModel(alpha))
            mean = float(fees.mean())
            se = float(fees.std(ddof=1) / np.sqrt(n_paths))
            base = mean if base is None else base
            rows.append(DivergenceRow(alpha, n, mean, se, mean / base if base > 0 else float("nan")))
    return rows


@dataclass(frozen=True)
class ResidualRow:
    n_steps: int
    mean_abs_residual: float
    shrink_vs_previous: float


def leland_approx_check(sigma: float = 0.2, nu: float = 0.2, n_list=(30, 120, 480), n_paths: int = 2000,
                        seed: int = 11, mu: float = 0.05, maturity_T: float = 0.25,
                        strike: float = 1.0) -> list[ResidualRow]:
    """Mean |analytic wealth - (-Z_T)| without costs, for increasingly fine grids."""
    spec = OptionSpec(strike, maturity_T)
    market = MarketParams(1.0, mu, sigma, 0.0, maturity_T)
    strategy = bs_strategy(nu, spec)
    rows, prev = [], None
    for n in n_list:
        paths = simulate_gbm(market, n, n_paths, seed + n)
        z, _, _ = run_ledger(paths.prices, strategy, spec, 0.0, CostModel(0.0))
        approx = leland_pnl_approx(paths.prices, spec, 0.0, nu)
        resid = float(np.mean(np.abs(approx + z)))
        rows.append(ResidualRow(n, resid, prev / resid if prev else float("nan")))
        prev = resid
    return rows


SURFACE_HEADER = ["moneyness", "ttm", "prev_hedge", "bs_delta", "nn_delta", "difference"]


def delta_surface_dump(trained: MlpParams, paths: PathSet, spec: OptionSpec, sigma: float, r: float = 0.0,
                       file=None) -> np.ndarray:
    """Network vs BS delta at every hedging point the network visits; one row per point."""
    X = paths.prices
    _, _, deltas = run_ledger(X, nn_strategy(trained), spec, r, CostModel(0.0))
    n = X.shape[1] - 1
    dt = spec.maturity_T / n
    out = []
    prev = np.zeros(X.shape[0])
    for i in range(n):
        ttm = spec.maturity_T - i * dt
        bs = bs_delta(X[:, i], spec, ttm, r, sigma)
        nn = np.asarray(deltas[i])
        out.append(np.column_stack([spec.strike_K / X[:, i], np.full(len(nn), ttm), prev, bs, nn, nn - bs]))
        prev = nn
    table = np.vstack(out)
    if file is not None:
        _write_csv(file, SURFACE_HEADER, table.tolist())
    return table


# output files ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(file, header, rows) -> None:
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_tables_csv(rows, file) -> None:
    _write_csv(file, ["alpha", "set", "strategy", "mean_pct", "std_pct"],
               [(r.alpha, r.set, r.strategy, r.mean, r.std) for r in rows])


def read_tables_csv(file) -> list[TableRow]:
    with open(file, newline="", encoding="utf-8") as fh:
        return [TableRow(float(d["alpha"]), d["set"], d["strategy"], float(d["mean_pct"]), float(d["std_pct"]))
                for d in csv.DictReader(fh)]


def write_loss_history(histories: dict, file) -> None:
    rows = [(alpha, step, loss) for alpha, h in histories.items() for step, loss in enumerate(h)]
    _write_csv(file, ["alpha", "step", "loss"], rows)


def write_histograms(result: TablesResult, file) -> None:
    rows = []
    for cell in result.cells:
        for (set_name, name), rep in cell.reports.items():
            for lo, hi, c in zip(rep.hist_edges[:-1], rep.hist_edges[1:], rep.hist_counts):
                rows.append((cell.alpha, set_name, name, lo, hi, int(c)))
    _write_csv(file, ["alpha", "set", "strategy", "bin_lo", "bin_hi", "count"], rows)


def write_divergence(rows, file) -> None:
    _write_csv(file, ["alpha", "n_steps", "mean_fee", "se_fee", "ratio_vs_first"],
               [(r.alpha, r.n_steps, r.mean_fee, r.se_fee, r.ratio) for r in rows])


def source_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def write_manifest(file, config: dict, outputs, **extra) -> None:
    doc = {
        "package_version": __version__,
        "source_digest": source_digest(),
        "config": config,
        "outputs": sorted(outputs),
    }
    doc.update(extra)
    with open(file, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
