import math

import numpy as np
import pytest

from hedgebench import autodiff as ad
from hedgebench.analytic import CostModel, MarketParams, OptionSpec
from hedgebench.network import MlpParams, kaiming_init, mlp_forward, zeros_like_params
from hedgebench.simulation import simulate_gbm
from hedgebench.training import (
    AdamState,
    TrainConfig,
    adam_step,
    batch_loss,
    batches_for_epoch,
    loss_and_grad,
    train,
)

ATM = OptionSpec(1.0, 0.25)


def test_default_network_shape_and_bounds():
    p = kaiming_init(0)
    assert p.sizes == (3, 64, 32, 1)
    assert p.n_params() == 3 * 64 + 64 + 64 * 32 + 32 + 32 + 1
    for w, b in p.layers:
        bound = 1.0 / math.sqrt(w.shape[1])
        assert np.all(np.abs(w) <= bound) and np.all(np.abs(b) <= bound)
        # uniform on (-bound, bound): sample std close to bound / sqrt(3)
        assert np.std(w) == pytest.approx(bound / math.sqrt(3), rel=0.25)


def test_init_is_seeded():
    assert kaiming_init(5).digest() == kaiming_init(5).digest()
    assert kaiming_init(5).digest() != kaiming_init(6).digest()


def test_forward_hand_example():
    w1 = np.array([[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]])
    b1 = np.array([0.0, -1.0])
    w2 = np.array([[2.0, -3.0]])
    b2 = np.array([0.25])
    p = MlpParams(((w1, b1), (w2, b2)))
    x = np.array([1.0, 2.0, 0.5])
    # hidden: relu([0.5, 0.75]) -> output 2*0.5 - 3*0.75 + 0.25
    assert mlp_forward(p, x)[0] == pytest.approx(-1.0)
    batch = mlp_forward(p, np.array([x, [0.0, 0.0, 3.0]]))
    assert batch.shape == (2, 1)
    assert batch[1, 0] == pytest.approx(0.25 - 3.0 * 0.5)


def test_flat_roundtrip_and_serialization(tmp_path):
    p = kaiming_init(1, sizes=(3, 4, 2, 1))
    assert np.array_equal(p.unflat(p.flat()).flat(), p.flat())
    f = tmp_path / "net.json"
    p.save(f, seed=1)
    q = MlpParams.load(f)
    assert q.digest() == p.digest()
    assert p.to_dict(seed=1)["metadata"] == {"seed": 1}


def test_adam_first_step_moves_by_lr():
    p = MlpParams(((np.array([[1.0, -2.0]]), np.array([0.5])),))
    g = MlpParams(((np.array([[0.3, -4.0]]), np.array([0.0])),))
    new, state = adam_step(p, g, AdamState.zeros(p, lr=0.01))
    # bias-corrected m/sqrt(v) = sign(g) on the first step
    w, b = new.layers[0]
    assert np.allclose(w, [[1.0 - 0.01 * 0.3 / (0.3 + 1e-8), -2.0 + 0.01 * 4.0 / (4.0 + 1e-8)]])
    assert b[0] == 0.5
    assert state.step == 1
    assert np.allclose(state.m[0], 0.1 * g.layers[0][0])
    assert np.allclose(state.v[0], 0.001 * g.layers[0][0] ** 2)


def test_adam_constant_gradient_steady_state():
    p = MlpParams(((np.zeros((1, 1)), np.zeros(1)),))
    g = MlpParams(((np.full((1, 1), 2.0), np.full(1, -0.5)),))
    state = AdamState.zeros(p, lr=1e-3)
    for _ in range(200):
        p, state = adam_step(p, g, state)
    assert p.layers[0][0][0, 0] == pytest.approx(-0.2, rel=1e-6)
    assert p.layers[0][1][0] == pytest.approx(0.2, rel=1e-6)


def test_batch_loss_with_zero_network_is_payoff_std():
    paths = simulate_gbm(MarketParams(), 10, 50, seed=2).prices
    tc = 0.01
    loss = batch_loss(zeros_like_params(), paths, ATM, 0.0, CostModel(tc))
    xt = paths[:, -1]
    z = np.where(xt >= 1.0, xt * (1 + tc) - 1.0, 0.0)
    assert loss == pytest.approx(np.std(z, ddof=1), rel=1e-12)


def test_multi_strike_loss_is_sum():
    paths = simulate_gbm(MarketParams(), 10, 20, seed=3).prices
    p = kaiming_init(0)
    specs = [OptionSpec(0.95, 0.25), OptionSpec(1.05, 0.25)]
    total = batch_loss(p, paths, specs, 0.0, CostModel(0.0))
    parts = sum(batch_loss(p, paths, s, 0.0, CostModel(0.0)) for s in specs)
    assert total == pytest.approx(parts, rel=1e-12)
    value, grads = loss_and_grad(p, paths, specs, 0.0, CostModel(0.0))
    assert value == pytest.approx(total, rel=1e-12)
    assert grads.sizes == p.sizes


def test_batch_loss_needs_two_paths():
    with pytest.raises(ValueError):
        batch_loss(kaiming_init(0), np.ones((1, 3)), ATM, 0.0, CostModel(0.0))


def test_batches_cover_permutation():
    rng = np.random.default_rng(0)
    batches = batches_for_epoch(256, 64, rng)
    assert len(batches) == 4
    assert sorted(np.concatenate(batches)) == list(range(256))
    assert [len(b) for b in batches_for_epoch(129, 64, rng)] == [64, 64]
    assert [len(b) for b in batches_for_epoch(130, 64, rng)] == [64, 64, 2]


def test_gradient_reaches_every_layer():
    paths = simulate_gbm(MarketParams(), 10, 32, seed=4).prices
    _, grads = loss_and_grad(kaiming_init(0), paths, ATM, 0.0, CostModel(0.01))
    for w, b in grads.layers:
        assert np.any(w != 0) and np.any(b != 0)


def test_step_count_full_schedule():
    # 256 paths, batch 64, 500 epochs -> 4 steps per epoch and 2000 updates
    paths = simulate_gbm(MarketParams(), 2, 256, seed=5)
    cfg = TrainConfig(epochs=500, sizes=(3, 2, 1))
    res = train(cfg, paths)
    assert res.steps_per_epoch == 4
    assert len(res.loss_history) == 2000


def test_training_is_reproducible_and_reduces_loss():
    paths = simulate_gbm(MarketParams(), 10, 128, seed=6)
    cfg = TrainConfig(epochs=40, batch_size=32, seed=3, sizes=(3, 16, 8, 1), lr=3e-3)
    a = train(cfg, paths)
    b = train(cfg, paths)
    assert a.params.digest() == b.params.digest()
    assert a.loss_history == b.loss_history
    first = np.mean(a.loss_history[:4])
    last = np.mean(a.loss_history[-4:])
    assert last < 0.5 * first


def test_train_rejects_mismatched_maturity():
    paths = simulate_gbm(MarketParams(maturity_T=0.5), 10, 8, seed=0)
    with pytest.raises(ValueError, match="matures"):
        train(TrainConfig(epochs=1), paths)


def test_nn_output_on_tape_matches_numpy():
    p = kaiming_init(2)
    x = np.array([[1.0, 0.25, 0.0], [0.9, 0.1, 0.4]])
    tape = ad.Tape()
    out = mlp_forward(p.on_tape(tape), x)
    assert np.allclose(out.value, mlp_forward(p, x), atol=1e-15)
