"""Command-line entry point.

Exit codes: 0 success, 1 bad input (files, CSV rows, configuration),
2 numerical failure (non-convergence, divergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import io
from .backtest import METHODS, format_tables, resolve_method, run_backtest
from .config import ConfigError, load_config
from .grid import BlockError, GridError
from .ml import (
    TrainingDivergedError,
    build_features,
    filtered_backtest,
    k_fold_validate,
    load_model,
    save_model,
    train,
)
from .pipeline import NonConvergenceError, run_batch
from .solver import beta_scores
from .synth import MODELS, SynthParams, generate

logger = logging.getLogger("bsforecast")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _add_config(p):
    p.add_argument("--config", help="flat TOML file with run settings (flags take precedence)")


def _add_solver_flags(p):
    p.add_argument("--beta", type=float, help="regularization parameter in (0, 1) (default 0.01)")
    p.add_argument("--grid-size", type=int, dest="grid_size", help="odd grid points per dimension, >= 5 (default 21)")
    p.add_argument("--boundary-mode", choices=["constant", "quadratic"], dest="boundary_mode",
                   help="extrapolation of bid/ask/volatility onto the forecast window (default quadratic)")
    p.add_argument("--no-row-normalize", action="store_const", const=False, dest="row_normalize",
                   help="skip row normalization of the reduced system")
    p.add_argument("--cg-tol", type=float, dest="cg_tol", help="relative gradient tolerance (default 1e-8)")
    p.add_argument("--cg-max-iter", type=int, dest="cg_max_iter", help="iteration cap (default 10 * unknowns)")
    p.add_argument("--parallelism", type=int, help="worker processes (default 1)")


def _add_trade_flags(p):
    p.add_argument("--contract-size", type=float, dest="contract_size", help="contract multiplier (default 100)")
    p.add_argument("--threshold-margin", type=float, dest="threshold_margin",
                   help="buy only if the prediction exceeds today's ask by this much (default 0)")
    p.add_argument("--exit-day", type=int, choices=[1, 2], dest="exit_day", help="sell on day +1 or +2 (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsforecast",
        description="Regularized forward Black-Scholes option forecasts, backtests and trade filtering.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write seeded synthetic data blocks")
    p.add_argument("--n", type=int, required=True, help="number of blocks")
    p.add_argument("--model", choices=MODELS, default="gbm_drift")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=SynthParams.drift, help="annual stock drift (gbm_drift)")
    p.add_argument("--noise", type=float, default=SynthParams.noise, help="relative quote noise")
    p.add_argument("--out", required=True, help="output blocks CSV")

    p = sub.add_parser("forecast", help="forecast option prices for every block")
    p.add_argument("--input", required=True, help="blocks CSV")
    p.add_argument("--out", required=True, help="forecasts CSV")
    p.add_argument("--minimizer-dir", dest="minimizer_dir", help="write one full minimizer grid per block here")
    p.add_argument("--hist", help="error histogram CSV (default: err_hist.csv next to --out)")
    p.add_argument("--skip-bad-rows", action="store_true", help="report and skip malformed rows instead of failing")
    p.add_argument("--accept-unconverged", action="store_const", const=True, dest="accept_unconverged",
                   help="keep forecasts whose CG solve hit the iteration cap (flagged converged=false)")
    _add_solver_flags(p)
    _add_config(p)

    p = sub.add_parser("backtest", help="run the trading rule over forecasts")
    p.add_argument("--blocks", required=True)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--method", choices=["bs", "last", "ask", "all", *METHODS], default="all")
    p.add_argument("--out", help="report JSON")
    p.add_argument("--hist", help="per-trade P&L histogram CSV")
    _add_trade_flags(p)
    _add_config(p)

    p = sub.add_parser("beta-search", help="pick beta by median forecast error")
    p.add_argument("--input", required=True, help="validation blocks CSV (ground truth required)")
    p.add_argument("--betas", required=True, help="comma-separated candidates, e.g. 1e-3,1e-2,0.1")
    p.add_argument("--out", help="scores JSON")
    _add_solver_flags(p)
    _add_config(p)

    p = sub.add_parser("features", help="labelled feature vectors from the unfiltered Black-Scholes trades")
    p.add_argument("--blocks", required=True)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--out", required=True, help="features CSV")
    _add_trade_flags(p)
    _add_config(p)

    p = sub.add_parser("train-filter", help="train the trade classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--curve", help="k-fold learning curve CSV")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--k-folds", type=int, dest="k_folds")
    p.add_argument("--seed", type=int)
    _add_config(p)

    p = sub.add_parser("filter-backtest", help="backtest only the trades the classifier accepts")
    p.add_argument("--model", required=True)
    p.add_argument("--blocks", required=True)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--threshold", type=float, dest="filter_threshold", help="minimum classifier score (default 0.5)")
    p.add_argument("--out", help="report JSON")
    _add_trade_flags(p)
    _add_config(p)
    return parser


_SETTINGS = (
    "beta", "grid_size", "boundary_mode", "row_normalize", "cg_tol", "cg_max_iter", "parallelism",
    "accept_unconverged", "contract_size", "threshold_margin", "exit_day", "learning_rate", "iterations",
    "lam", "k_folds", "seed", "filter_threshold",
)


def _config(args):
    overrides = {k: getattr(args, k) for k in _SETTINGS if hasattr(args, k)}
    return load_config(getattr(args, "config", None), overrides)


def _dump_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def cmd_synth(args) -> int:
    params = SynthParams(drift=args.drift, noise=args.noise)
    blocks = generate(args.n, args.model, args.seed, params)
    io.write_blocks(args.out, blocks)
    print(f"wrote {len(blocks)} {args.model} blocks to {args.out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = _config(args)
    blocks, bad = io.read_blocks(args.input, skip_bad=args.skip_bad_rows)
    for lineno, msg in bad:
        print(f"{args.input}: line {lineno}: {msg} (skipped)", file=sys.stderr)
    if not blocks:
        print(f"{args.input}: no usable data blocks", file=sys.stderr)
        return EXIT_INPUT
    report = run_batch(
        blocks,
        cfg.solver(),
        cfg.grid_size,
        cfg.parallelism,
        boundary_mode=cfg.boundary_mode,
        price_floor=cfg.price_floor,
        accept_unconverged=cfg.accept_unconverged,
        bin_width=cfg.err_bin_width,
        minimizer_dir=args.minimizer_dir,
    )
    io.write_forecasts(args.out, report.forecasts)
    hist = args.hist or str(Path(args.out).with_name("err_hist.csv"))
    io.write_histogram(hist, report.err_histogram)
    for option_id, msg in report.failures:
        print(f"{option_id}: {msg}", file=sys.stderr)
    median = "n/a" if report.median_err is None else f"{100 * report.median_err:.2f}%"
    print(f"forecasts: {len(report.forecasts)}  failures: {len(report.failures)}  median err: {median}")
    if not report.forecasts:
        numeric = any(m.startswith(("NonConvergenceError", "FloatingPointError")) for _, m in report.failures)
        return EXIT_NUMERIC if numeric else EXIT_INPUT
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config(args)
    blocks, _ = io.read_blocks(args.blocks)
    forecasts = io.read_forecasts(args.forecasts)
    methods = METHODS if args.method == "all" else (resolve_method(args.method),)
    reports = [run_backtest(blocks, forecasts, m, **cfg.backtest_kwargs()) for m in methods]
    print(format_tables(reports))
    if args.out:
        _dump_json(args.out, {"reports": [r.to_dict() for r in reports]})
    if args.hist:
        rows = [[r.method, repr(lo), repr(hi), str(c)] for r in reports for lo, hi, c in r.pnl_histogram]
        io.write_csv(args.hist, ["method", "bin_low", "bin_high", "count"], rows)
    return EXIT_OK


def cmd_beta_search(args) -> int:
    cfg = _config(args)
    try:
        grid = [float(x) for x in args.betas.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--betas: cannot parse {args.betas!r}") from None
    for b in grid:
        if not 0 < b < 1:
            raise ConfigError(f"--betas: {b} is outside (0, 1)")
    blocks, _ = io.read_blocks(args.input)
    scores = beta_scores(blocks, grid, cfg.solver(), cfg.grid_size, cfg.parallelism, cfg.boundary_mode)
    best = min(scores, key=lambda b: (scores[b], -b))
    for b, s in scores.items():
        print(f"beta={b:<10g} median err={s:.6f}")
    print(f"selected beta={best:g}")
    if args.out:
        _dump_json(args.out, {"scores": {repr(b): s for b, s in scores.items()}, "beta": best})
    return EXIT_NUMERIC if math.isinf(scores[best]) else EXIT_OK


def cmd_features(args) -> int:
    cfg = _config(args)
    blocks, _ = io.read_blocks(args.blocks)
    forecasts = io.read_forecasts(args.forecasts)
    report = run_backtest(blocks, forecasts, "black_scholes", **cfg.backtest_kwargs())
    vectors, skipped = build_features(blocks, forecasts, report.trades)
    for option_id, msg in skipped:
        print(f"{option_id}: {msg} (skipped)", file=sys.stderr)
    io.write_features(args.out, vectors)
    print(f"wrote {len(vectors)} feature vectors ({sum(v.y for v in vectors)} profitable) to {args.out}")
    return EXIT_OK


def cmd_train_filter(args) -> int:
    cfg = _config(args)
    tcfg = cfg.training()
    vectors = io.read_features(args.features)
    result = train(vectors, tcfg)
    save_model(args.out, result.params, result.stats, {
        "val_accuracy": result.val_accuracy,
        "test_accuracy": result.test_accuracy,
        "train_config": {k: getattr(tcfg, k) for k in tcfg.__dataclass_fields__},
    })
    print(f"validation accuracy {result.val_accuracy:.4f}  test accuracy {result.test_accuracy:.4f}")
    if args.curve:
        bands = k_fold_validate(vectors, tcfg)
        io.write_csv(args.curve, ["epoch", "mean_eval_loss", "std_eval_loss"],
                     ([str(e), repr(m), repr(s)] for e, m, s in zip(bands.epochs, bands.mean, bands.std)))
        print(f"{tcfg.k_folds}-fold curve written to {args.curve}")
    return EXIT_OK


def cmd_filter_backtest(args) -> int:
    cfg = _config(args)
    params, stats = load_model(args.model)
    blocks, _ = io.read_blocks(args.blocks)
    forecasts = io.read_forecasts(args.forecasts)
    kw = cfg.backtest_kwargs()
    base = run_backtest(blocks, forecasts, "black_scholes", **kw)
    filtered = filtered_backtest(blocks, forecasts, params, stats, cfg.filter_threshold, **kw)
    print(format_tables([base, filtered]))
    if args.out:
        _dump_json(args.out, {"reports": [base.to_dict(), filtered.to_dict()]})
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "beta-search": cmd_beta_search,
    "features": cmd_features,
    "train-filter": cmd_train_filter,
    "filter-backtest": cmd_filter_backtest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergenceError, TrainingDivergedError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.InputError, ConfigError, GridError, BlockError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
