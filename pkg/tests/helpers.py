"""Shared fixtures builders and independent oracles for the test suite."""

import numpy as np

from bsforecast.grid import TAU, BoundaryData, DataBlock, GridSpec, MarketDay, QuadraticPath
from bsforecast.ml import FeatureVector


def make_block(option_id="opt", bids=(2.0, 2.1, 2.2), asks=(2.1, 2.2, 2.3), vols=(0.3, 0.3, 0.3),
               stock=(100.0, 100.02), real=(2.3, 2.4)):
    days = [MarketDay(b, a, v) for b, a, v in zip(bids[:2], asks[:2], vols[:2])]
    days.append(MarketDay(bids[2], asks[2], vols[2], stock[0], stock[1]))
    return DataBlock(option_id, tuple(days), real[0], real[1])


def random_block(rng, option_id="rnd"):
    mid = rng.uniform(1.0, 10.0, size=3)
    spread = rng.uniform(0.02, 0.3, size=3)
    vols = rng.uniform(0.1, 0.6, size=3)
    s = rng.uniform(20, 200)
    return make_block(option_id, tuple(mid - spread / 2), tuple(mid + spread / 2), tuple(vols),
                      (s, s + rng.uniform(0.01, 0.5)), tuple(rng.uniform(1.0, 10.0, size=2)))


def random_grid(rng, M):
    s_b = rng.uniform(20, 200)
    return GridSpec(M, s_b, s_b + rng.uniform(0.01, 2.0))


def random_boundary(rng, spec):
    """Smooth random boundary data (positive prices, u_b <= u_a) on a grid."""
    base = rng.uniform(1.0, 5.0)
    bid = QuadraticPath((base, rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05)), spec.tau)
    ask = QuadraticPath((base + rng.uniform(0.05, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05)), spec.tau)
    vol = QuadraticPath((rng.uniform(0.1, 0.6), rng.uniform(-0.01, 0.01), 0.0), spec.tau)
    return BoundaryData(spec.s_b, spec.s_a, bid, ask, vol)


def stencil_oracle(U, spec, bd):
    """Direct pointwise T-stencil on ``U[i, j]``: zero on the boundary rows."""
    M = spec.M
    out = np.zeros((M, M))
    ds, dt = spec.ds, spec.dt
    for j in range(1, M):
        sig = float(bd.sigma(j * dt))
        for i in range(1, M - 1):
            s = spec.s[i]
            u_t = (U[i, j] - U[i, j - 1]) / dt
            u_ss = (U[i + 1, j] - 2 * U[i, j] + U[i - 1, j]) / ds**2
            out[i, j] = u_t + 0.5 * sig**2 * s**2 * u_ss
    return out


def separable_features(n=400, seed=7, separation=6.0):
    """Two unit-variance Gaussian clusters in 13-D whose centres are ``separation`` apart."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    d = rng.normal(size=13)
    d /= np.linalg.norm(d)
    X = rng.normal(size=(n, 13)) + np.outer((y - 0.5) * separation, d)
    return [FeatureVector(f"sep-{i}", tuple(X[i]), int(y[i])) for i in range(n)]


def learnable_profit_blocks(n=300, seed=11):
    """Blocks that always trigger a Black-Scholes buy; profitability is encoded in two volatilities."""
    rng = np.random.default_rng(seed)
    blocks = []
    for k in range(n):
        y = int(rng.integers(0, 2))
        mid0 = rng.uniform(3.0, 8.0)
        step = rng.uniform(0.2, 0.5)
        mids = (mid0 - 2 * step, mid0 - step, mid0)
        hs = 0.05
        vol_sig = 0.45 if y else 0.2
        vols = (vol_sig + 0.02 * rng.standard_normal(), vol_sig + 0.02 * rng.standard_normal(),
                rng.uniform(0.2, 0.45))
        ask0 = round(mid0 + hs, 2)
        real1 = ask0 + (0.3 if y else -0.3) + 0.05 * rng.standard_normal()
        s = rng.uniform(50, 150)
        blocks.append(make_block(f"lp-{k:04d}", tuple(round(m - hs, 2) for m in mids),
                                 tuple(round(m + hs, 2) for m in mids), vols, (s, s + 0.02), (real1, real1)))
    return blocks
