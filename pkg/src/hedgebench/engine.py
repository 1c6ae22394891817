"""Discounted terminal hedging cost Z_T of a strategy along price paths.

Sign convention: Z_T is a *cost* (positive, close to the option premium for a
good hedge). It equals minus the trader's wealth.

Ledger, for a t0-normalized path ``X_0 = 1, ..., X_n`` with ``g = exp(-r dt)``:

  * t_0: buy ``d_0`` shares, no fee (the initial delta is exchanged with the
    option buyer);
  * t_i, 0 < i < n: trade ``d_i - d_{i-1}`` shares at ``X_i`` plus a fee of
    ``tc |d_i - d_{i-1}| X_i``, discounted by ``g**i``;
  * t_n, ``X_n < K``: unwind ``d_{n-1}`` (longs sold at ``(1 - tc) X_n``,
    shorts bought back at ``(1 + tc) X_n``);
  * t_n, ``X_n >= K``: receive ``K``, buy the missing ``(1 - d_{n-1})^+`` shares
    at ``(1 + tc) X_n``, sell any excess ``(d_{n-1} - 1)^+`` at ``(1 - tc) X_n``.

The ledger is written against backend-neutral helpers so the same code runs on
numpy arrays (evaluation) and on ``autodiff.Var`` nodes (training).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .analytic import CostModel, OptionSpec, bs_delta, leland_vol
from .network import MlpParams, mlp_forward
from .simulation import PathSet


@dataclass(frozen=True)
class HedgeState:
    """Network/strategy inputs; fields may be floats or per-path arrays."""

    moneyness: object
    ttm: object
    prev_hedge: object


Strategy = Callable[[HedgeState], object]


@dataclass(frozen=True)
class BSStrategy:
    """Black-Scholes delta at a fixed volatility; ignores the previous hedge."""

    vol: float
    spec: OptionSpec
    r: float = 0.0

    def __call__(self, state: HedgeState):
        spot = self.spec.strike_K / np.asarray(state.moneyness, dtype=float)
        return bs_delta(spot, self.spec, state.ttm, self.r, self.vol)


@dataclass(frozen=True)
class NNStrategy:
    """Raw (unclamped) network output on (moneyness, ttm, prev_hedge)."""

    params: MlpParams

    def __call__(self, state: HedgeState):
        m = state.moneyness
        scalar = np.ndim(m) == 0 and not isinstance(state.prev_hedge, ad.Var)
        if scalar:
            x = np.array([m, state.ttm, state.prev_hedge], dtype=float)
            return float(mlp_forward(self.params, x)[0])
        n = np.shape(m)[0]
        cols = [m, np.full(n, float(state.ttm)), state.prev_hedge]
        out = mlp_forward(self.params, ad.stack_columns(cols))
        return out[:, 0]


def bs_strategy(vol: float, spec: OptionSpec, r: float = 0.0) -> BSStrategy:
    if vol <= 0:
        raise ValueError(f"vol must be positive, got {vol}")
    return BSStrategy(vol, spec, r)


def leland_strategy(sigma: float, tc_alpha: float, dt: float, spec: OptionSpec, r: float = 0.0) -> BSStrategy:
    return BSStrategy(leland_vol(sigma, tc_alpha, dt), spec, r)


def nn_strategy(params: MlpParams) -> NNStrategy:
    return NNStrategy(params)


def run_ledger(prices, strategy: Strategy, spec: OptionSpec, r: float, cost: CostModel):
    """Vectorised ledger over rows of ``prices`` (already t0-normalized).

    Returns ``(z_t, fees, deltas)``: per-path costs (array or Var), the
    discounted proportional-fee column summed over intermediate rebalances
    (always a plain array), and the list of hedges ``d_0 .. d_{n-1}``.
    """
    X = np.asarray(prices, dtype=float)
    n_paths, n_cols = X.shape
    n = n_cols - 1
    if n < 1:
        raise ValueError("a path needs at least one step")
    T = spec.maturity_T
    dt = T / n
    K = spec.strike_K
    tc = cost.tc_alpha
    g = math.exp(-r * dt)

    deltas = []
    prev = np.zeros(n_paths)
    for i in range(n):
        d = strategy(HedgeState(K / X[:, i], T - i * dt, prev))
        if not isinstance(d, ad.Var):
            d = np.broadcast_to(np.asarray(d, dtype=float), (n_paths,))
        deltas.append(d)
        prev = d

    z = deltas[0]
    fees = np.zeros(n_paths)
    for i in range(1, n):
        trade = deltas[i] - deltas[i - 1]
        fee = tc * ad.absolute(trade) * X[:, i]
        z = z + g**i * (trade * X[:, i] + fee)
        fees += g**i * (fee.value if isinstance(fee, ad.Var) else fee)

    last = deltas[n - 1]
    XT = X[:, n]
    otm = -ad.relu(last) * (1 - tc) * XT + ad.relu(-last) * (1 + tc) * XT
    itm = -K + ad.relu(1 - last) * XT * (1 + tc) - ad.relu(last - 1) * XT * (1 - tc)
    itm_mask = (XT >= K).astype(float)
    z = z + g**n * (itm_mask * itm + (1.0 - itm_mask) * otm)
    return z, fees, deltas


def _check_normalized(prices) -> None:
    first = np.asarray(prices)[:, 0]
    bad = np.flatnonzero(np.abs(first - 1.0) > 1e-12)
    if bad.size:
        raise ValueError(f"row {bad[0]}: path is not t0-normalized (starts at {first[bad[0]]!r})")


def compute_zt(path, strategy: Strategy, spec: OptionSpec, r: float, cost: CostModel) -> float:
    """Z_T of one t0-normalized path."""
    x = np.asarray(path, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("path must be 1-D with at least 2 points")
    if abs(x[0] - 1.0) > 1e-12:
        raise ValueError(f"path is not t0-normalized (starts at {x[0]!r})")
    z, _, _ = run_ledger(x[None, :], strategy, spec, r, cost)
    return float(np.asarray(z)[0])


@dataclass
class HedgeReport:
    costs: np.ndarray
    mean: float
    std: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    fees: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_costs(cls, costs, bins: int = 30, fees=None) -> "HedgeReport":
        c = np.asarray(costs, dtype=float)
        counts, edges = np.histogram(c, bins=bins)
        std = float(np.std(c, ddof=1)) if c.size > 1 else 0.0
        return cls(c, float(np.mean(c)), std, edges, counts, fees)

    def to_csv(self, file) -> None:
        with open(file, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "z_t"])
            for j, c in enumerate(self.costs):
                w.writerow([j, repr(float(c))])

    def summary(self) -> dict:
        return {
            "n_paths": int(self.costs.size),
            "mean": self.mean,
            "std": self.std,
            "histogram": {
                "edges": [float(e) for e in self.hist_edges],
                "counts": [int(c) for c in self.hist_counts],
            },
        }

    def to_json(self, file) -> None:
        with open(file, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def evaluate(paths: PathSet, strategy: Strategy, spec: OptionSpec, r: float, cost: CostModel,
             bins: int = 30) -> HedgeReport:
    if not paths.t0_normalized:
        _check_normalized(paths.prices)
    z, fees, _ = run_ledger(paths.prices, strategy, spec, r, cost)
    z = np.asarray(z, dtype=float)
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        raise ValueError(f"row {bad[0]}: non-finite hedging cost")
    return HedgeReport.from_costs(z, bins=bins, fees=fees)
