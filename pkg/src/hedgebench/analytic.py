"""Closed-form Black-Scholes quantities and the Leland volatility adjustment.

All price-like functions accept floats or numpy arrays and broadcast.
There are no dividends; only European calls are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MarketParams:
    """GBM world used to generate paths: dX = mu X dt + sigma X dW."""

    s0: float = 1.0
    mu: float = 0.05
    sigma: float = 0.2
    r: float = 0.0
    maturity_T: float = 0.25

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.maturity_T <= 0:
            raise ValueError(f"maturity_T must be positive, got {self.maturity_T}")


@dataclass(frozen=True)
class OptionSpec:
    """A European call; ``strike_K`` is expressed as moneyness K / X_0."""

    strike_K: float = 1.0
    maturity_T: float = 0.25
    kind: str = "call"

    def __post_init__(self):
        if self.strike_K <= 0:
            raise ValueError(f"strike_K must be positive, got {self.strike_K}")
        if self.maturity_T <= 0:
            raise ValueError(f"maturity_T must be positive, got {self.maturity_T}")
        if self.kind != "call":
            raise ValueError(f"only calls are supported, got {self.kind!r}")


@dataclass(frozen=True)
class CostModel:
    """Proportional transaction cost per unit of currency traded."""

    tc_alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tc_alpha < 1.0:
            raise ValueError(f"tc_alpha must lie in [0, 1), got {self.tc_alpha}")


def norm_cdf(x):
    """Standard normal CDF.

    Backed by the Cephes ``ndtr`` routine (erf/erfc rational approximations),
    whose absolute error is below 1e-15 on the whole real line.
    """
    return ndtr(x) if isinstance(x, np.ndarray) else float(ndtr(x))


def norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _check_positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be positive")


def _d1(spot, strike, ttm, r, vol):
    vol_sqrt_t = vol * np.sqrt(ttm)
    return (np.log(spot / strike) + (r + 0.5 * vol * vol) * ttm) / vol_sqrt_t


def bs_price(spot, spec: OptionSpec, ttm, r: float, vol: float):
    """Black-Scholes call price; returns the payoff when ``ttm == 0``."""
    _check_positive("spot", spot)
    _check_positive("vol", vol)
    if np.any(np.asarray(ttm) < 0):
        raise ValueError("ttm must be non-negative")
    spot_a = np.asarray(spot, dtype=float)
    ttm_a = np.asarray(ttm, dtype=float)
    K = spec.strike_K
    intrinsic = np.maximum(spot_a - K, 0.0)
    live = ttm_a > 0
    safe_ttm = np.where(live, ttm_a, 1.0)
    d1 = _d1(spot_a, K, safe_ttm, r, vol)
    d2 = d1 - vol * np.sqrt(safe_ttm)
    price = spot_a * ndtr(d1) - K * np.exp(-r * safe_ttm) * ndtr(d2)
    out = np.where(live, price, intrinsic)
    return float(out) if out.ndim == 0 else out


def bs_delta(spot, spec: OptionSpec, ttm, r: float, vol: float):
    """Call delta N(d1). Undefined at expiry; callers settle separately."""
    _check_positive("spot", spot)
    _check_positive("vol", vol)
    _check_positive("ttm", ttm)
    out = ndtr(_d1(np.asarray(spot, dtype=float), spec.strike_K, np.asarray(ttm, dtype=float), r, vol))
    return float(out) if np.ndim(out) == 0 else out


def bs_gamma(spot, spec: OptionSpec, ttm, r: float, vol: float):
    _check_positive("spot", spot)
    _check_positive("vol", vol)
    _check_positive("ttm", ttm)
    spot_a = np.asarray(spot, dtype=float)
    ttm_a = np.asarray(ttm, dtype=float)
    d1 = _d1(spot_a, spec.strike_K, ttm_a, r, vol)
    out = norm_pdf(d1) / (spot_a * vol * np.sqrt(ttm_a))
    return float(out) if np.ndim(out) == 0 else out


def leland_vol(sigma: float, tc_alpha: float, dt: float) -> float:
    """Leland-adjusted volatility: sqrt(sigma^2 + alpha sigma sqrt(2 / (pi dt)))."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if tc_alpha < 0:
        raise ValueError(f"tc_alpha must be non-negative, got {tc_alpha}")
    return math.sqrt(sigma * sigma + tc_alpha * sigma * math.sqrt(2.0 / (math.pi * dt)))


def leland_pnl_approx(path, spec: OptionSpec, r: float, nu: float, times=None):
    """Leading-order discrete-hedging wealth of a nu-delta hedger.

    Returns ``0.5 * sum_i e^{-r t_{i+1}} Gamma(X_i, t_i) X_i^2 [nu^2 dt - R_i^2] - C_0``
    where ``R_i`` is the simple return over step ``i`` and the sum runs over the
    ``n`` rebalancing dates ``t_0 .. t_{n-1}``. The grid is ``T / n`` uniform,
    with ``T = spec.maturity_T``. This is trader *wealth*, the negative of the
    engine's hedging cost up to O(sqrt(dt)).

    ``path`` may be one row or a 2-D array of rows; ``times`` if supplied must
    be the uniform grid matching the row length.
    """
    x = np.asarray(path, dtype=float)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[1] - 1
    if n < 1:
        raise ValueError("path needs at least 2 points")
    T = spec.maturity_T
    dt = T / n
    if times is not None:
        t = np.asarray(times, dtype=float)
        if t.shape != (n + 1,):
            raise ValueError("times must match the path length")
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("leland_pnl_approx requires a uniform time grid")
        dt = float(steps[0])
        T = float(t[-1] - t[0])
    t_i = np.arange(n) * dt
    ttm = T - t_i
    spots = x[:, :-1]
    gam = bs_gamma(spots, spec, ttm[None, :], r, nu)
    ret = (x[:, 1:] - spots) / spots
    disc = np.exp(-r * (t_i + dt))
    gamma_sum = 0.5 * np.sum(disc * gam * spots**2 * (nu * nu * dt - ret**2), axis=1)
    c0 = bs_price(x[:, 0], spec, T, r, nu)
    out = gamma_sum - c0
    return float(out[0]) if squeeze else out
