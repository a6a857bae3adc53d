"""Flat TOML run configuration with validation at load time.

Precedence is command-line flag > config file > built-in default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .grid import BOUNDARY_MODES
from .ml import TrainConfig
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AppConfig:
    grid_size: int = 21
    beta: float = 0.01
    boundary_mode: str = "quadratic"
    price_floor: float = 0.01
    cg_tol: float = 1e-8
    cg_max_iter: Optional[int] = None
    row_normalize: bool = True
    accept_unconverged: bool = False
    parallelism: int = 1
    contract_size: float = 100.0
    threshold_margin: float = 0.0
    exit_day: int = 1
    err_bin_width: float = 0.01
    pnl_bin_width: float = 10.0
    filter_threshold: float = 0.5
    seed: int = 0
    learning_rate: float = 0.00005
    iterations: int = 200
    lam: float = 0.01
    k_folds: int = 10
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2

    def solver(self) -> SolverConfig:
        return SolverConfig(
            beta=self.beta, cg_tol=self.cg_tol, cg_max_iter=self.cg_max_iter, row_normalize=self.row_normalize
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            iterations=self.iterations,
            lam=self.lam,
            k_folds=self.k_folds,
            seed=self.seed,
            train_fraction=self.train_fraction,
            val_fraction=self.val_fraction,
            test_fraction=self.test_fraction,
        )

    def backtest_kwargs(self) -> dict:
        return {
            "contract_size": self.contract_size,
            "threshold_margin": self.threshold_margin,
            "exit_day": self.exit_day,
            "bin_width": self.pnl_bin_width,
        }


# TOML spelling of keys that differ from the attribute name
_ALIASES = {"lambda": "lam", "M": "grid_size"}
_TYPES = {f.name: f.type for f in fields(AppConfig)}


def _coerce(key: str, value: Any, where: str):
    kind = _TYPES[key]
    path = f"{where}.{key}"
    if key == "cg_max_iter" and value is None:
        return None
    if "bool" in kind:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if "int" in kind:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if "float" in kind:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _check(cfg: AppConfig, origin: Mapping[str, str]) -> None:
    def fail(key, msg):
        raise ConfigError(f"{origin.get(key, 'default')}.{key}: {msg}")

    if cfg.grid_size < 5:
        fail("grid_size", f"M must be >= 5, got {cfg.grid_size}")
    if cfg.grid_size % 2 == 0:
        fail("grid_size", f"M must be odd, got {cfg.grid_size}")
    if cfg.boundary_mode not in BOUNDARY_MODES:
        fail("boundary_mode", f"must be one of {BOUNDARY_MODES}, got {cfg.boundary_mode!r}")
    if not cfg.price_floor > 0:
        fail("price_floor", f"must be > 0, got {cfg.price_floor}")
    if cfg.parallelism < 1:
        fail("parallelism", f"must be >= 1, got {cfg.parallelism}")
    if not cfg.contract_size > 0:
        fail("contract_size", f"must be > 0, got {cfg.contract_size}")
    if cfg.exit_day not in (1, 2):
        fail("exit_day", f"must be 1 or 2, got {cfg.exit_day}")
    if not cfg.err_bin_width > 0:
        fail("err_bin_width", "must be > 0")
    if not cfg.pnl_bin_width > 0:
        fail("pnl_bin_width", "must be > 0")
    if not 0 <= cfg.filter_threshold <= 1:
        fail("filter_threshold", f"must lie in [0, 1], got {cfg.filter_threshold}")
    if not 0 < cfg.beta < 1:
        fail("beta", f"must lie in (0, 1), got {cfg.beta}")
    if not cfg.cg_tol > 0:
        fail("cg_tol", f"must be > 0, got {cfg.cg_tol}")
    if cfg.cg_max_iter is not None and cfg.cg_max_iter < 1:
        fail("cg_max_iter", f"must be >= 1, got {cfg.cg_max_iter}")
    if not cfg.learning_rate >= 0:
        fail("learning_rate", f"must be >= 0, got {cfg.learning_rate}")
    if cfg.iterations < 1:
        fail("iterations", f"must be >= 1, got {cfg.iterations}")
    if not cfg.lam >= 0:
        fail("lam", f"must be >= 0, got {cfg.lam}")
    if cfg.k_folds < 2:
        fail("k_folds", f"must be >= 2, got {cfg.k_folds}")
    fracs = (cfg.train_fraction, cfg.val_fraction, cfg.test_fraction)
    if min(fracs) < 0 or abs(sum(fracs) - 1.0) > 1e-9:
        fail("train_fraction", f"split fractions must be nonnegative and sum to 1, got {fracs}")


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> AppConfig:
    values: dict[str, Any] = {}
    origin: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for key, value in raw.items():
            name = _ALIASES.get(key, key)
            if name not in _TYPES:
                raise ConfigError(f"{path}.{key}: unknown key")
            values[name] = _coerce(name, value, str(path))
            origin[name] = str(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        name = _ALIASES.get(key, key)
        if name not in _TYPES:
            raise ConfigError(f"--{key}: unknown setting")
        values[name] = _coerce(name, value, "flag")
        origin[name] = "flag"
    cfg = replace(AppConfig(), **values)
    _check(cfg, origin)
    return cfg
