import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hedgebench.analytic import (
    CostModel,
    MarketParams,
    OptionSpec,
    bs_delta,
    bs_gamma,
    bs_price,
    leland_pnl_approx,
    leland_vol,
    norm_cdf,
)
from hedgebench.simulation import simulate_gbm

mp.mp.dps = 30
ATM = OptionSpec(1.0, 0.25)


def mp_cdf(x):
    return mp.ncdf(mp.mpf(x))


def mp_bs(spot, K, T, r, vol):
    s, k, t, r_, v = (mp.mpf(a) for a in (spot, K, T, r, vol))
    d1 = (mp.log(s / k) + (r_ + v * v / 2) * t) / (v * mp.sqrt(t))
    d2 = d1 - v * mp.sqrt(t)
    price = s * mp.ncdf(d1) - k * mp.exp(-r_ * t) * mp.ncdf(d2)
    gamma = mp.npdf(d1) / (s * v * mp.sqrt(t))
    return float(price), float(mp.ncdf(d1)), float(gamma)


def mp_leland(sigma, tc, dt):
    s, a, h = mp.mpf(sigma), mp.mpf(tc), mp.mpf(dt)
    return float(mp.sqrt(s * s + a * s * mp.sqrt(2 / (mp.pi * h))))


@pytest.mark.parametrize("x", [-37.0, -8.0, -3.3, -1.0, -1e-9, 0.0, 0.3, 1.96, 5.0, 8.5])
def test_norm_cdf_against_mpmath(x):
    assert abs(norm_cdf(x) - float(mp_cdf(x))) <= 1e-12


def test_norm_cdf_vectorized_and_symmetric():
    x = np.linspace(-6, 6, 101)
    assert np.allclose(norm_cdf(x) + norm_cdf(-x), 1.0, atol=1e-15)
    assert norm_cdf(0.0) == 0.5


@pytest.mark.parametrize("spot,K,T,r,vol", [
    (1.0, 1.0, 0.25, 0.0, 0.2),
    (1.1, 1.0, 0.25, 0.0, 0.2),
    (0.9, 1.0, 0.1, 0.03, 0.35),
    (1.0, 1.2, 1.0, 0.05, 0.15),
])
def test_bs_against_mpmath(spot, K, T, r, vol):
    spec = OptionSpec(K, T)
    price, delta, gamma = mp_bs(spot, K, T, r, vol)
    assert bs_price(spot, spec, T, r, vol) == pytest.approx(price, abs=1e-12)
    assert bs_delta(spot, spec, T, r, vol) == pytest.approx(delta, abs=1e-12)
    assert bs_gamma(spot, spec, T, r, vol) == pytest.approx(gamma, rel=1e-10)


def test_bs_atm_reference_values():
    assert bs_price(1.0, ATM, 0.25, 0.0, 0.2) == pytest.approx(0.0398776, abs=1e-7)
    assert bs_delta(1.0, ATM, 0.25, 0.0, 0.2) == pytest.approx(0.5199388, abs=1e-7)


def test_bs_price_at_expiry_is_payoff():
    assert bs_price(1.3, ATM, 0.0, 0.0, 0.2) == pytest.approx(0.3)
    assert bs_price(0.7, ATM, 0.0, 0.0, 0.2) == 0.0


def test_bs_rejects_bad_inputs():
    with pytest.raises(ValueError):
        bs_price(1.0, ATM, 0.25, 0.0, 0.0)
    with pytest.raises(ValueError):
        bs_delta(1.0, ATM, 0.0, 0.0, 0.2)
    with pytest.raises(ValueError):
        bs_price(-1.0, ATM, 0.25, 0.0, 0.2)


@settings(max_examples=60, deadline=None)
@given(
    spot=st.floats(0.6, 1.6),
    ttm=st.floats(0.02, 2.0),
    vol=st.floats(0.05, 0.8),
    r=st.floats(0.0, 0.1),
)
def test_delta_gamma_match_finite_differences(spot, ttm, vol, r):
    h = 1e-5 * spot
    up = bs_price(spot + h, ATM, ttm, r, vol)
    dn = bs_price(spot - h, ATM, ttm, r, vol)
    mid = bs_price(spot, ATM, ttm, r, vol)
    delta = bs_delta(spot, ATM, ttm, r, vol)
    gamma = bs_gamma(spot, ATM, ttm, r, vol)
    assert (up - dn) / (2 * h) == pytest.approx(delta, abs=1e-6)
    assert (up - 2 * mid + dn) / h**2 == pytest.approx(gamma, rel=1e-2, abs=1e-2)
    assert 0.0 <= delta <= 1.0
    assert gamma >= 0.0


@settings(max_examples=60, deadline=None)
@given(spot=st.floats(0.5, 2.0), ttm=st.floats(0.01, 1.0), vol=st.floats(0.05, 0.8))
def test_price_within_no_arbitrage_bounds(spot, ttm, vol):
    p = bs_price(spot, ATM, ttm, 0.0, vol)
    assert max(spot - 1.0, 0.0) - 1e-12 <= p <= spot


def test_leland_vol_against_mpmath():
    # closed-form values recomputed at 30 digits
    assert leland_vol(0.2, 0.02, 0.25 / 30) == pytest.approx(mp_leland(0.2, 0.02, 0.25 / 30), abs=1e-14)
    assert leland_vol(0.2, 0.02, 0.25 / 30) == pytest.approx(0.2737911, abs=1e-7)
    assert leland_vol(0.2, 0.02, 0.25 / 90) == pytest.approx(0.3171044, abs=1e-7)
    nu = leland_vol(0.2, 0.02, 0.25 / 30)
    assert bs_delta(1.0, ATM, 0.25, 0.0, nu) == pytest.approx(0.5272854, abs=1e-7)


def test_leland_vol_zero_cost_is_sigma():
    assert leland_vol(0.2, 0.0, 0.01) == 0.2


@settings(max_examples=50, deadline=None)
@given(sigma=st.floats(0.05, 0.6), a1=st.floats(0.0, 0.05), a2=st.floats(0.0, 0.05), n=st.integers(5, 500))
def test_leland_vol_monotone(sigma, a1, a2, n):
    lo, hi = sorted((a1, a2))
    dt = 0.25 / n
    assert leland_vol(sigma, lo, dt) <= leland_vol(sigma, hi, dt)
    assert leland_vol(sigma, hi, dt) <= leland_vol(sigma, hi, dt / 2)
    assert leland_vol(sigma, lo, dt) >= sigma


def test_leland_vol_rejects_bad_dt():
    with pytest.raises(ValueError):
        leland_vol(0.2, 0.01, 0.0)


def test_leland_pnl_approx_constant_path():
    # no moves: wealth is nu^2 dt / 2 * sum Gamma X^2 minus the premium
    n = 10
    x = np.ones(n + 1)
    nu = 0.2
    dt = 0.25 / n
    expected = sum(0.5 * bs_gamma(1.0, ATM, 0.25 - i * dt, 0.0, nu) * nu**2 * dt for i in range(n))
    expected -= bs_price(1.0, ATM, 0.25, 0.0, nu)
    assert leland_pnl_approx(x, ATM, 0.0, nu) == pytest.approx(expected, rel=1e-12)


def test_leland_pnl_approx_batch_matches_rows():
    paths = simulate_gbm(MarketParams(), 20, 5, seed=3)
    batch = leland_pnl_approx(paths.prices, ATM, 0.0, 0.2)
    rows = [leland_pnl_approx(p, ATM, 0.0, 0.2) for p in paths.prices]
    assert np.allclose(batch, rows, rtol=0, atol=1e-15)


def test_leland_pnl_approx_rejects_nonuniform_grid():
    with pytest.raises(ValueError, match="uniform"):
        leland_pnl_approx(np.ones(4), ATM, 0.0, 0.2, times=[0.0, 0.1, 0.15, 0.25])


def test_dataclass_validation():
    with pytest.raises(ValueError):
        CostModel(1.0)
    with pytest.raises(ValueError):
        CostModel(-0.1)
    with pytest.raises(ValueError):
        OptionSpec(0.0, 0.25)
    with pytest.raises(ValueError):
        MarketParams(s0=0.0)
    assert math.isclose(MarketParams(sigma=0.0).sigma, 0.0)
