"""CSV formats for data blocks, forecasts and feature vectors."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .grid import BlockError, DataBlock, MarketDay
from .ml import FEATURE_NAMES, FeatureVector
from .pipeline import Forecast

BLOCK_COLUMNS = [
    "option_id",
    "bid_m2", "ask_m2", "vol_m2",
    "bid_m1", "ask_m1", "vol_m1",
    "bid_0", "ask_0", "vol_0",
    "stock_bid_0", "stock_ask_0",
    "real_p1", "real_p2",
]
FORECAST_COLUMNS = ["option_id", "est_p1", "est_p2", "err", "beta", "M", "converged"]


class InputError(ValueError):
    """Malformed input file; ``errors`` holds ``(line_number, message)`` pairs."""

    def __init__(self, path, errors: Sequence[tuple[int, str]]):
        self.path = str(path)
        self.errors = list(errors)
        shown = "; ".join(f"line {n}: {m}" for n, m in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{self.path}: {shown}{more}")


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _read_rows(path, required: Sequence[str]):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(path, [(1, "empty file, header required")]) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(path, [(1, f"missing columns {missing}")])
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                yield lineno, None, f"expected {len(header)} fields, got {len(row)}"
                continue
            yield lineno, dict(zip(header, (c.strip() for c in row))), None


def _number(rec: dict, key: str, optional: bool = False) -> Optional[float]:
    raw = rec[key]
    if raw == "":
        if optional:
            return None
        raise ValueError(f"{key} is empty")
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{key}={raw!r} is not a number") from None
    if not math.isfinite(value):
        raise ValueError(f"{key}={raw!r} is not finite")
    return value


def parse_block(rec: dict) -> DataBlock:
    n = lambda k, opt=False: _number(rec, k, opt)  # noqa: E731
    days = (
        MarketDay(n("bid_m2"), n("ask_m2"), n("vol_m2")),
        MarketDay(n("bid_m1"), n("ask_m1"), n("vol_m1")),
        MarketDay(n("bid_0"), n("ask_0"), n("vol_0"), n("stock_bid_0"), n("stock_ask_0")),
    )
    option_id = rec["option_id"]
    if not option_id:
        raise ValueError("option_id is empty")
    return DataBlock(option_id, days, n("real_p1", True), n("real_p2", True))


def read_blocks(path, skip_bad: bool = False) -> tuple[list[DataBlock], list[tuple[int, str]]]:
    """Parse a block file. Bad rows raise ``InputError`` unless ``skip_bad``."""
    blocks, errors = [], []
    for lineno, rec, problem in _read_rows(path, BLOCK_COLUMNS):
        if problem is None:
            try:
                blocks.append(parse_block(rec))
                continue
            except (ValueError, BlockError) as exc:
                problem = str(exc)
        errors.append((lineno, problem))
    if errors and not skip_bad:
        raise InputError(path, errors)
    return blocks, errors


def block_row(b: DataBlock) -> list[str]:
    d2, d1, d0 = b.days
    return [
        b.option_id,
        _fmt(d2.option_bid), _fmt(d2.option_ask), _fmt(d2.volatility),
        _fmt(d1.option_bid), _fmt(d1.option_ask), _fmt(d1.volatility),
        _fmt(d0.option_bid), _fmt(d0.option_ask), _fmt(d0.volatility),
        _fmt(d0.stock_bid), _fmt(d0.stock_ask),
        _fmt(b.real_plus1), _fmt(b.real_plus2),
    ]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_blocks(path, blocks: Iterable[DataBlock]) -> None:
    write_csv(path, BLOCK_COLUMNS, (block_row(b) for b in blocks))


def write_forecasts(path, forecasts: Iterable[Forecast]) -> None:
    rows = (
        [f.option_id, _fmt(f.est_plus1), _fmt(f.est_plus2), _fmt(f.err), _fmt(f.beta_used), str(f.M_used),
         "true" if f.converged else "false"]
        for f in forecasts
    )
    write_csv(path, FORECAST_COLUMNS, rows)


def read_forecasts(path) -> list[Forecast]:
    out, errors = [], []
    for lineno, rec, problem in _read_rows(path, FORECAST_COLUMNS):
        if problem is None:
            try:
                conv = rec["converged"].lower()
                if conv not in ("true", "false"):
                    raise ValueError(f"converged={rec['converged']!r} is not true/false")
                out.append(Forecast(
                    option_id=rec["option_id"],
                    est_plus1=_number(rec, "est_p1"),
                    est_plus2=_number(rec, "est_p2"),
                    err=_number(rec, "err", optional=True),
                    beta_used=_number(rec, "beta"),
                    M_used=int(rec["M"]),
                    converged=conv == "true",
                ))
                continue
            except ValueError as exc:
                problem = str(exc)
        errors.append((lineno, problem))
    if errors:
        raise InputError(path, errors)
    return out


def write_histogram(path, bins: Iterable[tuple[float, float, int]]) -> None:
    write_csv(path, ["bin_low", "bin_high", "count"], ([_fmt(lo), _fmt(hi), str(c)] for lo, hi, c in bins))


def write_features(path, vectors) -> None:
    write_csv(path, ["option_id", *FEATURE_NAMES, "label"],
              ([v.option_id, *(_fmt(x) for x in v.x), str(v.y)] for v in vectors))


def read_features(path):
    out, errors = [], []
    for lineno, rec, problem in _read_rows(path, ["option_id", *FEATURE_NAMES, "label"]):
        if problem is None:
            try:
                label = rec["label"]
                if label not in ("0", "1"):
                    raise ValueError(f"label={label!r} is not 0/1")
                x = tuple(_number(rec, name) for name in FEATURE_NAMES)
                out.append(FeatureVector(rec["option_id"], x, int(label)))
                continue
            except ValueError as exc:
                problem = str(exc)
        errors.append((lineno, problem))
    if errors:
        raise InputError(path, errors)
    return out
