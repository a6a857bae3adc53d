import json
import math

import numpy as np
import pytest

from bsforecast.pipeline import (
    err_histogram,
    forecast_error,
    forecast_one,
    median_lower,
    minimizer_path,
    read_minimizer,
    run_batch,
    solve_block,
)
from bsforecast.solver import SolverConfig
from bsforecast.synth import generate
from helpers import make_block


def test_forecast_error_example():
    assert forecast_error(2.0, 3.0, 2.0, 2.5) == pytest.approx(0.1)
    assert forecast_error(1.0, 1.0, 1.0, 1.0) == 0.0


def test_median_lower_convention():
    assert median_lower([]) is None
    assert median_lower([3.0]) == 3.0
    assert median_lower([4.0, 1.0]) == 1.0
    assert median_lower([5.0, 1.0, 3.0, 2.0]) == 2.0
    assert median_lower([5.0, 1.0, 3.0]) == 3.0


def test_err_histogram_bins():
    bins = err_histogram([0.0, 0.005, 0.0101, 0.999, 1.0, 7.5])
    assert len(bins) == 101
    assert bins[0][2] == 2 and bins[1][2] == 1 and bins[99][2] == 1
    assert bins[-1] == (1.0, math.inf, 2)
    assert sum(c for _, _, c in bins) == 6


def test_constant_block_reproduces_mid():
    # constant quotes make F an exact zero-residual solution, so EST is today's mid
    block = generate(1, "constant", seed=5)[0]
    fc = forecast_one(block, SolverConfig(beta=0.01, cg_tol=1e-12), 21)
    mid = block.today.option_mid
    assert fc.est_plus1 == pytest.approx(mid, abs=1e-9)
    assert fc.est_plus2 == pytest.approx(mid, abs=1e-9)
    assert fc.err == pytest.approx(0.0, abs=1e-9)
    assert fc.converged and fc.M_used == 21 and fc.beta_used == 0.01


def test_estimates_read_from_grid_midpoints():
    block = generate(1, "gbm_drift", seed=4)[0]
    fc, grid = solve_block(block, SolverConfig(), 11)
    U = grid.as_matrix()
    assert fc.est_plus1 == U[5, 5]
    assert fc.est_plus2 == U[5, 10]


def test_block_without_truth_has_no_err():
    block = make_block(real=(None, None))
    fc = forecast_one(block, SolverConfig(), 9)
    assert fc.err is None


def test_failures_are_collected():
    good = generate(3, "gbm_drift", seed=1)
    bad = make_block("flat", stock=(50.0, 50.0))
    report = run_batch([good[0], bad, good[1], good[2]], SolverConfig(), 9)
    assert [f.option_id for f in report.forecasts] == [b.option_id for b in good]
    assert report.failures[0][0] == "flat"
    assert "degenerate" in report.failures[0][1]


def test_nonconvergence_is_a_failure_unless_accepted():
    blocks = generate(2, "gbm_drift", seed=2)
    cfg = SolverConfig(cg_tol=1e-15, cg_max_iter=1)
    report = run_batch(blocks, cfg, 9)
    assert not report.forecasts and len(report.failures) == 2
    assert "NonConvergenceError" in report.failures[0][1]
    report = run_batch(blocks, cfg, 9, accept_unconverged=True)
    assert len(report.forecasts) == 2 and not any(f.converged for f in report.forecasts)


def test_report_json_is_stable():
    blocks = generate(5, "gbm_drift", seed=3)
    a = run_batch(blocks, SolverConfig(), 9).dumps()
    b = run_batch(blocks, SolverConfig(), 9).dumps()
    assert a == b
    data = json.loads(a)
    assert set(data) == {"forecasts", "failures", "err_histogram", "median_err"}


def test_minimizer_files(tmp_path):
    blocks = generate(2, "gbm_drift", seed=6)
    run_batch(blocks, SolverConfig(), 7, minimizer_dir=tmp_path / "mins")
    header, U = read_minimizer(minimizer_path(tmp_path / "mins", blocks[0].option_id))
    assert header["option_id"] == blocks[0].option_id and header["M"] == "7"
    _, grid = solve_block(blocks[0], SolverConfig(), 7)
    np.testing.assert_array_equal(U, grid.values.reshape(7, 7))
    assert minimizer_path(tmp_path, "a/b c").name == "a_b_c.csv"
