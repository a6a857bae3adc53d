"""Per-option forecasting and the parallel batch runner."""

from __future__ import annotations

import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import assemble
from .grid import PRICE_FLOOR, DataBlock, SolutionGrid, build_grid_spec, extrapolate_boundary
from .solver import MinimizeResult, SolverConfig, minimize_cg

logger = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, option_id: str, result: MinimizeResult):
        super().__init__(
            f"{option_id}: CG did not converge in {result.iterations} iterations "
            f"(gradient norm {result.final_gradient_norm:.3e})"
        )
        self.option_id = option_id
        self.result = result


@dataclass(frozen=True)
class Forecast:
    option_id: str
    est_plus1: float
    est_plus2: float
    err: Optional[float]
    beta_used: float
    M_used: int
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True)
class BatchReport:
    forecasts: list[Forecast]
    failures: list[tuple[str, str]]
    err_histogram: list[tuple[float, float, int]]
    median_err: Optional[float]

    def to_dict(self) -> dict:
        return {
            "forecasts": [asdict(f) for f in self.forecasts],
            "failures": [list(x) for x in self.failures],
            "err_histogram": [list(b) for b in self.err_histogram],
            "median_err": self.median_err,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def forecast_error(est1: float, est2: float, real1: float, real2: float) -> float:
    """Mean relative absolute error of the two one- and two-day forecasts."""
    return 0.5 * (abs(est1 - real1) / real1 + abs(est2 - real2) / real2)


def solve_block(
    block: DataBlock,
    cfg: SolverConfig,
    M: int = 21,
    *,
    boundary_mode: str = "quadratic",
    price_floor: float = PRICE_FLOOR,
    accept_unconverged: bool = False,
) -> tuple[Forecast, SolutionGrid]:
    """Forecast plus the full minimizer grid (boundary values scattered back in)."""
    spec = build_grid_spec(block, M)
    bd = extrapolate_boundary(block, boundary_mode, price_floor, tau=spec.tau)
    sys = assemble(spec, bd, row_normalize=cfg.row_normalize)
    result = minimize_cg(sys, cfg)
    if not result.converged and not accept_unconverged:
        raise NonConvergenceError(block.option_id, result)
    full = SolutionGrid(spec, sys.scatter(result.u_reduced))
    mid = (M - 1) // 2
    est1 = full.at(mid, mid)
    est2 = full.at(mid, M - 1)
    if not (math.isfinite(est1) and math.isfinite(est2)):
        raise FloatingPointError(f"{block.option_id}: non-finite forecast")
    err = None
    if block.has_truth:
        err = forecast_error(est1, est2, block.real_plus1, block.real_plus2)
    fc = Forecast(
        option_id=block.option_id,
        est_plus1=est1,
        est_plus2=est2,
        err=err,
        beta_used=cfg.beta,
        M_used=M,
        converged=result.converged,
        iterations=result.iterations,
    )
    return fc, full


def forecast_one(block: DataBlock, cfg: SolverConfig, M: int = 21, **kwargs) -> Forecast:
    return solve_block(block, cfg, M, **kwargs)[0]


def median_lower(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def err_histogram(errs: Sequence[float], bin_width: float = 0.01, upper: float = 1.0) -> list[tuple[float, float, int]]:
    """Fixed-width bins over ``[0, upper)`` plus one overflow bin ``[upper, inf)``."""
    nbins = int(round(upper / bin_width))
    counts = [0] * (nbins + 1)
    for e in errs:
        k = int(math.floor(e / bin_width))
        counts[min(max(k, 0), nbins)] += 1
    bins = [(k * bin_width, (k + 1) * bin_width, counts[k]) for k in range(nbins)]
    bins.append((nbins * bin_width, math.inf, counts[nbins]))
    return bins


_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]+")


def minimizer_path(directory, option_id: str) -> Path:
    return Path(directory) / f"{_SAFE_NAME.sub('_', option_id)}.csv"


def write_minimizer(path, option_id: str, beta: float, grid: SolutionGrid) -> None:
    M = grid.spec.M
    rows = grid.values.reshape(M, M)
    lines = [f"# option_id={option_id}", f"# M={M}", f"# beta={beta!r}"]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_minimizer(path) -> tuple[dict, np.ndarray]:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        elif line.strip():
            rows.append([float(x) for x in line.split(",")])
    return header, np.array(rows)


@dataclass(frozen=True)
class _Job:
    cfg: SolverConfig
    M: int
    boundary_mode: str
    price_floor: float
    accept_unconverged: bool
    minimizer_dir: Optional[str] = None


def _run_one(job: _Job, block: DataBlock):
    try:
        fc, grid = solve_block(
            block,
            job.cfg,
            job.M,
            boundary_mode=job.boundary_mode,
            price_floor=job.price_floor,
            accept_unconverged=job.accept_unconverged,
        )
    except (ValueError, ArithmeticError, NonConvergenceError) as exc:
        return None, (block.option_id, f"{type(exc).__name__}: {exc}")
    if job.minimizer_dir is not None:
        write_minimizer(minimizer_path(job.minimizer_dir, block.option_id), block.option_id, job.cfg.beta, grid)
    return fc, None


def _run_chunk(job: _Job, blocks: list[DataBlock]):
    return [_run_one(job, b) for b in blocks]


def run_batch(
    blocks: Sequence[DataBlock],
    cfg: SolverConfig,
    M: int = 21,
    parallelism: int = 1,
    *,
    boundary_mode: str = "quadratic",
    price_floor: float = PRICE_FLOOR,
    accept_unconverged: bool = False,
    bin_width: float = 0.01,
    minimizer_dir=None,
) -> BatchReport:
    """Forecast every block; failures are collected, never fatal.

    With ``parallelism > 1`` blocks are split into contiguous chunks and handed
    to worker processes; results are reassembled in input order, so the report
    does not depend on the number of workers.
    """
    blocks = list(blocks)
    if minimizer_dir is not None:
        os.makedirs(minimizer_dir, exist_ok=True)
        minimizer_dir = str(minimizer_dir)
    job = _Job(cfg, M, boundary_mode, price_floor, accept_unconverged, minimizer_dir)

    if parallelism <= 1 or len(blocks) <= 1:
        outcomes = _run_chunk(job, blocks)
    else:
        workers = min(parallelism, len(blocks))
        nchunks = workers * 4
        bounds = np.linspace(0, len(blocks), min(nchunks, len(blocks)) + 1).astype(int)
        chunks = [blocks[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
        outcomes = [o for part in parts for o in part]

    forecasts = [fc for fc, _ in outcomes if fc is not None]
    failures = [fail for _, fail in outcomes if fail is not None]
    for option_id, msg in failures:
        logger.warning("forecast failed for %s: %s", option_id, msg)
    errs = [f.err for f in forecasts if f.err is not None]
    return BatchReport(
        forecasts=forecasts,
        failures=failures,
        err_histogram=err_histogram(errs, bin_width),
        median_err=median_lower(errs),
    )
