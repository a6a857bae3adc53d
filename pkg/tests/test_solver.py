import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsforecast.assembly import assemble, boundary_mask
from bsforecast.grid import tabulate_F
from bsforecast.solver import (
    SolverConfig,
    beta_search,
    dense_oracle_solve,
    eval_functional,
    eval_gradient,
    minimize_cg,
)
from bsforecast.synth import generate
from helpers import random_boundary, random_grid, stencil_oracle


def _system(seed, M=7, row_normalize=True):
    rng = np.random.default_rng(seed)
    spec = random_grid(rng, M)
    bd = random_boundary(rng, spec)
    return spec, bd, assemble(spec, bd, row_normalize=row_normalize)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([5, 7, 9]), st.integers(0, 10_000), st.floats(1e-4, 0.9))
def test_functional_matches_direct_sum(M, seed, beta):
    spec, bd, sys = _system(seed, M, row_normalize=False)
    rng = np.random.default_rng(seed + 1)
    u = sys.F_reduced + rng.normal(scale=0.1, size=sys.n)
    U = sys.scatter(u).reshape(M, M).T  # [i, j]
    F = tabulate_F(spec, bd).as_matrix()
    interior = ~boundary_mask(M).reshape(M, M).T
    res = stencil_oracle(U, spec, bd)
    want = float(np.sum(res[interior] ** 2) + beta * np.sum((U - F) ** 2))
    assert eval_functional(sys, u, beta) == pytest.approx(want, rel=1e-9)


def test_dense_oracle_agrees_with_lstsq():
    _, _, sys = _system(5, 7)
    beta = 0.01
    a = sys.L_reduced.toarray()
    stacked = np.vstack([a, np.sqrt(beta) * np.eye(sys.n)])
    rhs = np.concatenate([sys.b_reduced, np.sqrt(beta) * sys.F_reduced])
    ref = np.linalg.lstsq(stacked, rhs, rcond=None)[0]
    np.testing.assert_allclose(dense_oracle_solve(sys, beta), ref, rtol=1e-8, atol=1e-10)


def test_cg_gradient_vanishes_and_is_minimal():
    _, _, sys = _system(6, 9)
    cfg = SolverConfig(beta=0.05)
    res = minimize_cg(sys, cfg)
    assert res.converged
    assert res.final_gradient_norm <= cfg.cg_tol * (1 + res.initial_gradient_norm)
    np.testing.assert_allclose(eval_gradient(sys, res.u_reduced, cfg.beta), 0, atol=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(10):
        d = rng.normal(scale=1e-3, size=sys.n)
        assert eval_functional(sys, res.u_reduced + d, cfg.beta) >= res.functional_value


def test_functional_strictly_convex_along_lines():
    _, _, sys = _system(7, 7)
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=sys.n), rng.normal(size=sys.n)
    for lam in (0.25, 0.5, 0.75):
        mix = eval_functional(sys, lam * u + (1 - lam) * v, 0.01)
        assert mix < lam * eval_functional(sys, u, 0.01) + (1 - lam) * eval_functional(sys, v, 0.01)


def test_iteration_cap_reports_unconverged():
    _, _, sys = _system(8, 9)
    res = minimize_cg(sys, SolverConfig(beta=1e-4, cg_tol=1e-14, cg_max_iter=1))
    assert not res.converged
    assert res.iterations == 1


def test_starting_point_does_not_matter():
    _, _, sys = _system(9, 7)
    cfg = SolverConfig(beta=0.01, cg_tol=1e-12)
    a = minimize_cg(sys, cfg).u_reduced
    b = minimize_cg(sys, cfg, x0=np.zeros(sys.n)).u_reduced
    np.testing.assert_allclose(a, b, atol=1e-7)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.5, 5.0])
def test_beta_range_enforced(beta):
    with pytest.raises(ValueError, match="beta"):
        SolverConfig(beta=beta)


def test_test_mode_allows_large_beta():
    assert SolverConfig(beta=1e6, test_mode=True).beta == 1e6
    with pytest.raises(ValueError):
        SolverConfig(beta=-1.0, test_mode=True)


def test_vector_length_checked():
    _, _, sys = _system(1, 5)
    with pytest.raises(ValueError):
        eval_functional(sys, np.zeros(sys.n + 1), 0.1)


def test_beta_search_prefers_larger_on_ties():
    # constant blocks are solved exactly for every beta, so all scores tie at zero
    blocks = generate(4, "constant", seed=3)
    assert beta_search(blocks, [1e-3, 0.1, 0.01], SolverConfig(), M=7) == 0.1


def test_beta_search_requires_truth():
    from dataclasses import replace

    blocks = [replace(generate(1, "constant")[0], real_plus1=None, real_plus2=None)]
    with pytest.raises(ValueError, match="ground truth"):
        beta_search(blocks, [0.1], SolverConfig(), M=5)
    with pytest.raises(ValueError):
        beta_search([], [0.1], SolverConfig(), M=5)
