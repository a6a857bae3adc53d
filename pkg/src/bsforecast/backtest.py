"""Trading-rule backtest over forecasts with known next-day prices.

Rule: buy one contract at today's option ask when the method's predicted price
exceeds that ask (plus an optional margin), sell at the realized price on the
exit day. Three predictors are compared:

* ``black_scholes`` - mean of the one- and two-day forecasts
* ``last_price``    - today's option mid price
* ``ask_price``     - today's option ask
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .grid import DataBlock
from .pipeline import Forecast

METHODS = ("black_scholes", "last_price", "ask_price")
METHOD_ALIASES = {"bs": "black_scholes", "last": "last_price", "ask": "ask_price"}
METHOD_LABELS = {
    "black_scholes": "Black-Scholes",
    "last_price": "Last price extrapolation",
    "ask_price": "Ask price extrapolation",
}
ZERO_PNL = 1e-9


def resolve_method(name: str) -> str:
    method = METHOD_ALIASES.get(name, name)
    if method not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {sorted(METHODS + tuple(METHOD_ALIASES))}")
    return method


@dataclass(frozen=True)
class TradeRecord:
    option_id: str
    method: str
    action: str  # "buy" | "no_trade"
    entry_price: float
    exit_price: float
    pnl: float
    outcome: Optional[str]  # "profit" | "loss" | "zero"; None when not traded


def _outcome(pnl: float) -> str:
    if abs(pnl) < ZERO_PNL:
        return "zero"
    return "profit" if pnl > 0 else "loss"


def predicted_price(block: DataBlock, forecast: Optional[Forecast], method: str) -> float:
    today = block.today
    if method == "black_scholes":
        if forecast is None:
            raise ValueError(f"{block.option_id}: black_scholes needs a forecast")
        return 0.5 * (forecast.est_plus1 + forecast.est_plus2)
    if method == "last_price":
        return today.option_mid
    return today.option_ask


def decide_trade(
    block: DataBlock,
    forecast: Optional[Forecast],
    method: str,
    *,
    contract_size: float = 100,
    threshold_margin: float = 0.0,
    exit_day: int = 1,
) -> TradeRecord:
    method = resolve_method(method)
    if exit_day not in (1, 2):
        raise ValueError(f"exit_day must be 1 or 2, got {exit_day}")
    exit_price = block.real_plus1 if exit_day == 1 else block.real_plus2
    if exit_price is None:
        raise ValueError(f"{block.option_id}: no realized price for exit day +{exit_day}")
    entry = block.today.option_ask
    if predicted_price(block, forecast, method) > entry + threshold_margin:
        pnl = (exit_price - entry) * contract_size
        return TradeRecord(block.option_id, method, "buy", entry, exit_price, pnl, _outcome(pnl))
    return TradeRecord(block.option_id, method, "no_trade", entry, exit_price, 0.0, None)


def pnl_histogram(pnls: Sequence[float], bin_width: float = 10.0) -> list[tuple[float, float, int]]:
    """Bins aligned to multiples of ``bin_width`` covering every value."""
    if not pnls:
        return []
    lo = math.floor(min(pnls) / bin_width)
    hi = math.floor(max(pnls) / bin_width)
    counts = [0] * (hi - lo + 1)
    for p in pnls:
        counts[math.floor(p / bin_width) - lo] += 1
    return [((lo + k) * bin_width, (lo + k + 1) * bin_width, c) for k, c in enumerate(counts)]


@dataclass
class BacktestReport:
    method: str
    n_options: int
    n_traded: int
    n_no_trade: int
    total_pnl: float
    gross_profit: float
    gross_loss: float
    pct_profit: float
    pct_loss: float
    pct_zero: float
    pnl_histogram: list[tuple[float, float, int]]
    trades: list[TradeRecord] = field(default_factory=list, repr=False)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self, with_trades: bool = False) -> dict:
        d = asdict(self)
        d["pnl_histogram"] = [list(b) for b in self.pnl_histogram]
        d["skipped"] = [list(s) for s in self.skipped]
        if not with_trades:
            d.pop("trades")
        return d


def summarize(method: str, trades: Sequence[TradeRecord], skipped, bin_width: float = 10.0) -> BacktestReport:
    traded = [t for t in trades if t.action == "buy"]
    total = 0.0
    for t in traded:
        total += t.pnl
    gross_profit = math.fsum(t.pnl for t in traded if t.pnl > 0)
    gross_loss = -math.fsum(t.pnl for t in traded if t.pnl < 0)
    n = len(traded)
    counts = {k: sum(1 for t in traded if t.outcome == k) for k in ("profit", "loss", "zero")}
    if n:
        pct = {k: 100.0 * v / n for k, v in counts.items()}
    else:
        pct = {k: 0.0 for k in counts}
    return BacktestReport(
        method=method,
        n_options=len(trades),
        n_traded=n,
        n_no_trade=len(trades) - n,
        total_pnl=total,
        gross_profit=gross_profit,
        gross_loss=gross_loss,
        pct_profit=pct["profit"],
        pct_loss=pct["loss"],
        pct_zero=pct["zero"],
        pnl_histogram=pnl_histogram([t.pnl for t in traded], bin_width),
        trades=list(trades),
        skipped=list(skipped),
    )


def align(blocks: Sequence[DataBlock], forecasts: Sequence[Forecast]):
    """Pair blocks with forecasts by option_id, keeping block order.

    Returns the pairs and a list of ``(option_id, reason)`` for everything
    that could not be paired.
    """
    by_id: dict[str, Forecast] = {}
    skipped = []
    for f in forecasts:
        if f.option_id in by_id:
            skipped.append((f.option_id, "duplicate forecast"))
        by_id[f.option_id] = f
    pairs, seen = [], set()
    for b in blocks:
        if b.option_id in seen:
            skipped.append((b.option_id, "duplicate block"))
            continue
        seen.add(b.option_id)
        f = by_id.get(b.option_id)
        if f is None:
            skipped.append((b.option_id, "no forecast"))
            continue
        pairs.append((b, f))
    skipped += [(oid, "no block") for oid in by_id if oid not in seen]
    return pairs, skipped


def run_backtest(
    blocks: Sequence[DataBlock],
    forecasts: Sequence[Forecast],
    method: str,
    *,
    contract_size: float = 100,
    threshold_margin: float = 0.0,
    exit_day: int = 1,
    bin_width: float = 10.0,
) -> BacktestReport:
    method = resolve_method(method)
    pairs, skipped = align(blocks, forecasts)
    trades = []
    for b, f in pairs:
        try:
            trades.append(decide_trade(
                b, f, method, contract_size=contract_size, threshold_margin=threshold_margin, exit_day=exit_day
            ))
        except ValueError as exc:
            skipped.append((b.option_id, str(exc)))
    return summarize(method, trades, skipped, bin_width)


def format_tables(reports: Sequence[BacktestReport]) -> str:
    """Plain-text profit/loss and outcome-percentage tables."""
    lines = ["Profits and losses", f"{'Method':<28}{'Tested':>8}{'Traded':>8}{'Total profit/loss':>20}"]
    for r in reports:
        label = METHOD_LABELS.get(r.method, r.method)
        lines.append(f"{label:<28}{r.n_options:>8}{r.n_traded:>8}{r.total_pnl:>+20,.2f}")
    lines += ["", "Percentages of traded options", f"{'Method':<28}{'profit':>9}{'loss':>9}{'zero':>9}{'no trade':>10}"]
    for r in reports:
        label = METHOD_LABELS.get(r.method, r.method)
        lines.append(
            f"{label:<28}{r.pct_profit:>8.2f}%{r.pct_loss:>8.2f}%{r.pct_zero:>8.2f}%{r.n_no_trade:>10}"
        )
    return "\n".join(lines)
