"""Short-horizon option price forecasts from a regularized forward Black-Scholes problem."""

from .assembly import AssembledSystem, IndexMap, assemble, build_Dss, build_Dt, build_L, build_R, normalize_rows, reduce_system
from .grid import BoundaryData, DataBlock, GridSpec, MarketDay, SolutionGrid, build_grid_spec, eval_F, extrapolate_boundary, tabulate_F
from .pipeline import BatchReport, Forecast, forecast_one, run_batch
from .solver import MinimizeResult, SolverConfig, beta_search, dense_oracle_solve, eval_functional, eval_gradient, minimize_cg
from .sparse import SparseMatrix, kron

__version__ = "0.1.0"
