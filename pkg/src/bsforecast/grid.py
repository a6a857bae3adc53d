"""Market data blocks, the (s, t) grid and the boundary data extrapolated from history.

The forecast window is the rectangle ``[s_b, s_a] x [0, 2*tau]`` where ``s_b`` and
``s_a`` are today's stock bid and ask and ``tau`` is one trading day in years.
Grid values are serialized with the time index as the outer dimension::

    k = j * M + i        (i indexes s, j indexes t)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TAU = 1.0 / 255.0
PRICE_FLOOR = 0.01
BOUNDARY_MODES = ("constant", "quadratic")

# relative slack when checking that (s, t) lies in the closed domain
_DOMAIN_RTOL = 1e-12


class BlockError(ValueError):
    """Raised for market data that violates a DataBlock invariant."""


class GridError(ValueError):
    """Raised for an invalid discretization request."""


@dataclass(frozen=True)
class MarketDay:
    option_bid: float
    option_ask: float
    volatility: float
    stock_bid: Optional[float] = None
    stock_ask: Optional[float] = None

    def __post_init__(self):
        if not (self.option_bid > 0 and self.option_ask > 0):
            raise BlockError(f"option quotes must be positive, got bid={self.option_bid} ask={self.option_ask}")
        if self.option_bid > self.option_ask:
            raise BlockError(f"option bid {self.option_bid} exceeds ask {self.option_ask}")
        if not self.volatility > 0:
            raise BlockError(f"volatility must be positive, got {self.volatility}")
        if (self.stock_bid is None) != (self.stock_ask is None):
            raise BlockError("stock bid and ask must be given together")
        if self.stock_bid is not None:
            if not (self.stock_bid > 0 and self.stock_ask > 0):
                raise BlockError(f"stock quotes must be positive, got bid={self.stock_bid} ask={self.stock_ask}")
            if self.stock_bid > self.stock_ask:
                raise BlockError(f"stock bid {self.stock_bid} exceeds ask {self.stock_ask}")

    @property
    def option_mid(self) -> float:
        return 0.5 * (self.option_bid + self.option_ask)


@dataclass(frozen=True)
class DataBlock:
    """One option observed on three consecutive trading days.

    ``days`` holds the snapshots at t = -2*tau, -tau, 0 in that order. The
    realized prices for the next two days are optional so that a block can be
    used for forecasting only.
    """

    option_id: str
    days: tuple[MarketDay, MarketDay, MarketDay]
    real_plus1: Optional[float] = None
    real_plus2: Optional[float] = None

    def __post_init__(self):
        if len(self.days) != 3:
            raise BlockError(f"{self.option_id}: expected 3 market days, got {len(self.days)}")
        object.__setattr__(self, "days", tuple(self.days))
        today = self.days[-1]
        if today.stock_bid is None:
            raise BlockError(f"{self.option_id}: stock bid/ask are required at t=0")
        for name in ("real_plus1", "real_plus2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise BlockError(f"{self.option_id}: {name} must be positive, got {value}")

    @property
    def today(self) -> MarketDay:
        return self.days[-1]

    @property
    def has_truth(self) -> bool:
        return self.real_plus1 is not None and self.real_plus2 is not None


@dataclass(frozen=True)
class GridSpec:
    M: int
    s_b: float
    s_a: float
    tau: float = TAU

    def __post_init__(self):
        if not isinstance(self.M, (int, np.integer)) or self.M < 5:
            raise GridError(f"M must be an integer >= 5, got {self.M}")
        if self.M % 2 == 0:
            raise GridError(f"M must be odd, got {self.M}")
        if not self.s_a > self.s_b:
            raise GridError(f"degenerate s-interval [{self.s_b}, {self.s_a}]")
        if not self.tau > 0:
            raise GridError(f"tau must be positive, got {self.tau}")

    @property
    def ds(self) -> float:
        return (self.s_a - self.s_b) / (self.M - 1)

    @property
    def dt(self) -> float:
        return 2.0 * self.tau / (self.M - 1)

    @property
    def s(self) -> np.ndarray:
        s = self.s_b + np.arange(self.M) * self.ds
        s[-1] = self.s_a
        return s

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.M) * self.dt

    @property
    def size(self) -> int:
        return self.M * self.M

    def index(self, i: int, j: int) -> int:
        return j * self.M + i

    def unindex(self, k: int) -> tuple[int, int]:
        j, i = divmod(k, self.M)
        return i, j


def build_grid_spec(block: DataBlock, M: int = 21, tau: float = TAU) -> GridSpec:
    """Grid over today's stock bid-ask interval and the next two trading days."""
    today = block.today
    if today.stock_bid == today.stock_ask:
        raise GridError(f"{block.option_id}: degenerate s-interval (stock bid == ask == {today.stock_bid})")
    return GridSpec(M=M, s_b=today.stock_bid, s_a=today.stock_ask, tau=tau)


@dataclass(frozen=True)
class QuadraticPath:
    """Polynomial ``c0 + c1*x + c2*x**2`` in day units ``x = t / tau``.

    The constant mode is the special case ``c1 = c2 = 0``.
    """

    coeffs: tuple[float, float, float]
    tau: float = TAU

    @classmethod
    def through(cls, values: Sequence[float], tau: float = TAU) -> "QuadraticPath":
        # Newton form through x = -2, -1, 0 (day units)
        y0, y1, y2 = (float(v) for v in values)
        c1 = (3.0 * y2 - 4.0 * y1 + y0) / 2.0
        c2 = (y2 - 2.0 * y1 + y0) / 2.0
        return cls(coeffs=(y2, c1, c2), tau=tau)

    @classmethod
    def constant(cls, value: float, tau: float = TAU) -> "QuadraticPath":
        return cls(coeffs=(float(value), 0.0, 0.0), tau=tau)

    def __call__(self, t):
        x = np.asarray(t, dtype=float) / self.tau
        c0, c1, c2 = self.coeffs
        out = c0 + x * (c1 + x * c2)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundaryData:
    """Boundary/initial data on the forecast window.

    ``u_b``/``u_a`` are the option prices at the lower/upper end of the stock
    interval, ``sigma`` the volatility and ``f`` the initial condition at t=0.
    The raw extrapolated paths are kept so the clamping is visible.
    """

    s_b: float
    s_a: float
    bid_path: QuadraticPath
    ask_path: QuadraticPath
    vol_path: QuadraticPath
    price_floor: float = PRICE_FLOOR
    mode: str = "quadratic"

    def u_a(self, t):
        return np.maximum(self.ask_path(t), self.price_floor)

    def u_b(self, t):
        return np.minimum(np.maximum(self.bid_path(t), self.price_floor), self.u_a(t))

    def sigma(self, t):
        # only sigma**2 enters the operator; a negative extrapolation is clipped to zero
        return np.maximum(self.vol_path(t), 0.0)

    def f(self, s):
        x = (np.asarray(s, dtype=float) - self.s_b) / (self.s_a - self.s_b)
        ub, ua = self.u_b(0.0), self.u_a(0.0)
        return x * (ua - ub) + ub


def extrapolate_boundary(
    block: DataBlock,
    mode: str = "quadratic",
    price_floor: float = PRICE_FLOOR,
    tau: float = TAU,
) -> BoundaryData:
    """Extend the three observed days of bid, ask and volatility onto [0, 2*tau]."""
    if mode not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {BOUNDARY_MODES}")
    bids = [d.option_bid for d in block.days]
    asks = [d.option_ask for d in block.days]
    vols = [d.volatility for d in block.days]
    if mode == "constant":
        paths = [QuadraticPath.constant(v[-1], tau) for v in (bids, asks, vols)]
    else:
        paths = [QuadraticPath.through(v, tau) for v in (bids, asks, vols)]
    today = block.today
    return BoundaryData(
        s_b=today.stock_bid,
        s_a=today.stock_ask,
        bid_path=paths[0],
        ask_path=paths[1],
        vol_path=paths[2],
        price_floor=price_floor,
        mode=mode,
    )


def _check_domain(spec: GridSpec, s: float, t: float) -> None:
    s_tol = _DOMAIN_RTOL * max(abs(spec.s_a), 1.0)
    t_tol = _DOMAIN_RTOL * 2 * spec.tau
    if not (spec.s_b - s_tol <= s <= spec.s_a + s_tol):
        raise ValueError(f"s={s} outside [{spec.s_b}, {spec.s_a}]")
    if not (-t_tol <= t <= 2 * spec.tau + t_tol):
        raise ValueError(f"t={t} outside [0, {2 * spec.tau}]")


def eval_F(spec: GridSpec, bd: BoundaryData, s: float, t: float) -> float:
    """Linear interpolation between the boundary prices in the normalized stock coordinate."""
    _check_domain(spec, s, t)
    if s == spec.s_b:
        return float(bd.u_b(t))
    if s == spec.s_a:
        return float(bd.u_a(t))
    x = (s - spec.s_b) / (spec.s_a - spec.s_b)
    ub, ua = bd.u_b(t), bd.u_a(t)
    return float(x * (ua - ub) + ub)


@dataclass(frozen=True)
class SolutionGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.spec.size,):
            raise ValueError(f"expected {self.spec.size} values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def as_matrix(self) -> np.ndarray:
        """Values as an array indexed ``[i, j]`` (stock index, time index)."""
        return deserialize(self.values, self.spec.M)

    def at(self, i: int, j: int) -> float:
        return float(self.values[self.spec.index(i, j)])

    def __eq__(self, other):
        if not isinstance(other, SolutionGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.values, other.values)

    __hash__ = None


def serialize(u: np.ndarray) -> np.ndarray:
    """Flatten ``u[i, j]`` to the vector with ``k = j*M + i``."""
    u = np.asarray(u, dtype=float)
    return u.T.reshape(-1).copy()


def deserialize(values: np.ndarray, M: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(M, M).T.copy()


def tabulate_F(spec: GridSpec, bd: BoundaryData) -> SolutionGrid:
    s, t = spec.s, spec.t
    x = (s - spec.s_b) / (spec.s_a - spec.s_b)
    x[0], x[-1] = 0.0, 1.0
    ub = bd.u_b(t)[:, None]
    ua = bd.u_a(t)[:, None]
    rows = x[None, :] * (ua - ub) + ub  # rows[j, i]
    rows[:, 0] = ub[:, 0]
    rows[:, -1] = ua[:, 0]
    return SolutionGrid(spec, rows.reshape(-1))
