"""Adam and the training loop minimising the batch standard deviation of Z_T."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .analytic import CostModel, OptionSpec
from .engine import nn_strategy, run_ledger
from .network import DEFAULT_SIZES, MlpParams, kaiming_init
from .simulation import PathSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: MlpParams, lr: float = 1e-3) -> "AdamState":
        z = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=z, v=[a.copy() for a in z], lr=lr)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return MlpParams.from_arrays(new_p), new_state


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 500
    seed: int = 0
    strikes: tuple = (1.0,)
    maturity_T: float = 0.25
    tc_alpha: float = 0.0
    r: float = 0.0
    lr: float = 1e-3
    sizes: tuple = DEFAULT_SIZES

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @property
    def specs(self) -> list[OptionSpec]:
        return [OptionSpec(k, self.maturity_T) for k in self.strikes]

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def batch_loss(params: MlpParams, prices, specs, r: float, cost: CostModel):
    """Sum over option specs of the sample std of Z_T across the batch rows.

    ``params`` holds tape leaves for a differentiable loss, or plain arrays for
    a float. A single ``OptionSpec`` may be passed instead of a list.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.shape[0] < 2:
        raise ValueError("batch_loss needs at least 2 paths")
    if isinstance(specs, OptionSpec):
        specs = [specs]
    strategy = nn_strategy(params)
    total = None
    for spec in specs:
        z, _, _ = run_ledger(prices, strategy, spec, r, cost)
        s = ad.sample_std(z)
        total = s if total is None else total + s
    return total


def loss_and_grad(params: MlpParams, prices, specs, r: float, cost: CostModel):
    tape = ad.Tape()
    leaves = params.on_tape(tape)
    loss = batch_loss(leaves, prices, specs, r, cost)
    grads = tape.backward(loss, leaves.arrays())
    return float(loss.value), MlpParams.from_arrays(grads)


def batches_for_epoch(n_paths: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded permutation cut into batches; a short tail is kept only if it has >= 2 rows."""
    order = rng.permutation(n_paths)
    out = [order[k:k + batch_size] for k in range(0, n_paths, batch_size)]
    if out and len(out[-1]) < 2:
        out.pop()
    return out


@dataclass
class TrainResult:
    params: MlpParams
    loss_history: list = field(default_factory=list)
    steps_per_epoch: int = 0


def train(config: TrainConfig, train_paths: PathSet, init: MlpParams | None = None) -> TrainResult:
    """Fixed-epoch Adam training on ``train_paths``; final-epoch parameters are returned."""
    if not train_paths.t0_normalized:
        raise ValueError("training paths must be t0-normalized")
    if train_paths.n_paths < 2:
        raise ValueError("training needs at least 2 paths")
    if abs(train_paths.maturity - config.maturity_T) > 1e-9:
        raise ValueError(
            f"path grid covers {train_paths.maturity} years but the option matures in {config.maturity_T}"
        )
    params = init if init is not None else kaiming_init(config.seed, config.sizes)
    state = AdamState.zeros(params, lr=config.lr)
    rng = np.random.default_rng((config.seed, 0x5EED))
    cost = CostModel(config.tc_alpha)
    specs = config.specs
    prices = train_paths.prices
    history = []
    steps_per_epoch = 0
    for epoch in range(config.epochs):
        batches = batches_for_epoch(train_paths.n_paths, config.batch_size, rng)
        steps_per_epoch = len(batches)
        for rows in batches:
            loss, grads = loss_and_grad(params, prices[rows], specs, config.r, cost)
            params, state = adam_step(params, grads, state)
            history.append(loss)
        if epoch % 100 == 0 or epoch == config.epochs - 1:
            log.info("epoch %d: mean batch loss %.6f", epoch, float(np.mean(history[-steps_per_epoch:])))
    return TrainResult(params, history, steps_per_epoch)
