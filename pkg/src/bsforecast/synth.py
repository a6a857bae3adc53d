"""Seeded synthetic data blocks standing in for exported market data.

Models
------
constant
    Every quote identical on all three days; realized prices equal today's
    option mid. The minimizer is known exactly for these.
noisy
    ``constant`` blocks with independent relative noise on each quote.
gbm_drift
    A geometric Brownian stock path over days -2..+2 with a per-block drift
    drawn around ``drift``. The option is a call quoted at discounted
    intrinsic value plus a time-value term and multiplicative noise, with a
    bid/ask spread around the mid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import TAU, DataBlock, MarketDay

MODELS = ("constant", "noisy", "gbm_drift")


@dataclass(frozen=True)
class SynthParams:
    drift: float = 1.0  # annualized mean drift of the stock (gbm_drift)
    drift_spread: float = 1.0  # std of the per-block drift around ``drift``
    rate: float = 0.02  # discount rate for the intrinsic value
    noise: float = 0.02  # relative quote noise (noisy) / mid noise scale (gbm_drift: noise / 4)
    stock_half_spread: float = 0.01
    option_rel_spread: float = 0.02


def _round(x: float, nd: int) -> float:
    return float(round(x, nd))


def _quote(mid: float, rel_spread: float) -> tuple[float, float]:
    half = max(0.01, 0.5 * rel_spread * mid)
    bid = max(0.01, _round(mid - half, 2))
    ask = max(bid + 0.01, _round(mid + half, 2))
    return bid, _round(ask, 2)


def _constant_block(rng: np.random.Generator, option_id: str, p: SynthParams, noise: float) -> DataBlock:
    stock = _round(rng.uniform(20.0, 200.0), 2)
    sb, sa = stock, _round(stock + 2 * p.stock_half_spread, 2)
    mid = rng.uniform(1.0, 10.0)
    vol = rng.uniform(0.15, 0.6)
    days = []
    for _ in range(3):
        m = mid * (1.0 + noise * rng.standard_normal()) if noise else mid
        bid, ask = _quote(max(m, 0.05), p.option_rel_spread)
        v = vol * (1.0 + noise * rng.standard_normal()) if noise else vol
        days.append((bid, ask, _round(max(v, 0.01), 4)))
    bid0, ask0, _ = days[-1]
    real = 0.5 * (bid0 + ask0)
    if noise:
        r1 = _round(max(real * (1.0 + noise * rng.standard_normal()), 0.01), 4)
        r2 = _round(max(real * (1.0 + noise * rng.standard_normal()), 0.01), 4)
    else:
        r1 = r2 = real
    md = [MarketDay(b, a, v) for b, a, v in days[:2]]
    md.append(MarketDay(bid0, ask0, days[2][2], sb, sa))
    return DataBlock(option_id, tuple(md), r1, r2)


def _call_mid(S: float, K: float, T: float, sigma: float, rate: float) -> float:
    intrinsic = max(S - K * math.exp(-rate * T), 0.0)
    m = math.log(S / K) / (sigma * math.sqrt(T))
    time_value = 0.4 * sigma * S * math.sqrt(T) * math.exp(-0.5 * m * m)
    return intrinsic + time_value


def _gbm_block(rng: np.random.Generator, option_id: str, p: SynthParams) -> DataBlock:
    S0 = rng.uniform(20.0, 200.0)
    sigma = rng.uniform(0.15, 0.5)
    mu = p.drift + p.drift_spread * rng.standard_normal()
    K = S0 * rng.uniform(0.85, 1.0)
    T0 = rng.uniform(30.0, 90.0) * TAU
    # path at day offsets -2..+2, anchored so that S(0) = S0
    z = rng.standard_normal(4)
    steps = (mu - 0.5 * sigma**2) * TAU + sigma * math.sqrt(TAU) * z
    logs = np.concatenate([[0.0], np.cumsum(steps)])
    path = S0 * np.exp(logs - logs[2])
    mids = []
    for d, S in zip(range(-2, 3), path):
        mid = _call_mid(S, K, T0 - d * TAU, sigma, p.rate)
        mids.append(max(mid * (1.0 + 0.25 * p.noise * rng.standard_normal()), 0.05))
    days = []
    for d in range(3):
        bid, ask = _quote(mids[d], p.option_rel_spread)
        vol = _round(sigma * (1.0 + 0.05 * rng.standard_normal()), 4)
        days.append((bid, ask, max(vol, 0.01)))
    stock = _round(path[2], 2)
    md = [MarketDay(b, a, v) for b, a, v in days[:2]]
    md.append(MarketDay(days[2][0], days[2][1], days[2][2], stock, _round(stock + 2 * p.stock_half_spread, 2)))
    return DataBlock(option_id, tuple(md), _round(mids[3], 4), _round(mids[4], 4))


def generate(n: int, model: str = "gbm_drift", seed: int = 0, params: Optional[SynthParams] = None) -> list[DataBlock]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    p = params or SynthParams()
    rng = np.random.default_rng(seed)
    blocks = []
    for k in range(n):
        option_id = f"{model}-{k:06d}"
        if model == "gbm_drift":
            blocks.append(_gbm_block(rng, option_id, p))
        else:
            blocks.append(_constant_block(rng, option_id, p, p.noise if model == "noisy" else 0.0))
    return blocks
