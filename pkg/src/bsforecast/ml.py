"""Neural-network trade filter.

A fully connected sigmoid network 13 -> 50 -> 25 -> 14 -> 1 is trained by
full-batch gradient descent on the L2-regularized logistic loss to predict
whether a Black-Scholes trade will be profitable. Trades the network scores
below a threshold are dropped and the backtest is re-run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backtest import BacktestReport, TradeRecord, align, decide_trade, summarize
from .grid import DataBlock
from .pipeline import Forecast

FEATURE_NAMES = (
    "est_p1", "est_p2",
    "stock_bid_0", "stock_ask_0",
    "bid_m2", "ask_m2", "vol_m2",
    "bid_m1", "ask_m1", "vol_m1",
    "bid_0", "ask_0", "vol_0",
)
HIDDEN_SIZES = (50, 25, 14)
PROB_CLIP = 1e-12
STD_FLOOR = 1e-12


class TrainingDivergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    option_id: str
    x: tuple[float, ...]
    y: int

    def __post_init__(self):
        if len(self.x) != len(FEATURE_NAMES):
            raise ValueError(f"{self.option_id}: expected {len(FEATURE_NAMES)} features, got {len(self.x)}")
        if self.y not in (0, 1):
            raise ValueError(f"{self.option_id}: label must be 0 or 1, got {self.y}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.00005
    iterations: int = 200
    lam: float = 0.01
    k_folds: int = 10
    seed: int = 0
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    iterations_per_epoch: int = 20

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.k_folds < 2:
            raise ValueError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.iterations_per_epoch < 1:
            raise ValueError("iterations_per_epoch must be >= 1")
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fracs) < 0 or not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {fracs}")


def feature_vector(block: DataBlock, forecast: Forecast) -> tuple[float, ...]:
    d2, d1, d0 = block.days
    return (
        forecast.est_plus1, forecast.est_plus2,
        d0.stock_bid, d0.stock_ask,
        d2.option_bid, d2.option_ask, d2.volatility,
        d1.option_bid, d1.option_ask, d1.volatility,
        d0.option_bid, d0.option_ask, d0.volatility,
    )


def build_features(
    blocks: Sequence[DataBlock],
    forecasts: Sequence[Forecast],
    trades: Sequence[TradeRecord],
) -> tuple[list[FeatureVector], list[tuple[str, str]]]:
    """One labelled vector per executed trade (label 1 iff the trade made money)."""
    pairs, skipped = align(blocks, forecasts)
    by_id = {b.option_id: (b, f) for b, f in pairs}
    out = []
    for t in trades:
        if t.action != "buy":
            continue
        if t.option_id not in by_id:
            skipped.append((t.option_id, "trade without block/forecast"))
            continue
        b, f = by_id[t.option_id]
        out.append(FeatureVector(t.option_id, feature_vector(b, f), int(t.outcome == "profit")))
    return out, skipped


def as_arrays(vs: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([v.x for v in vs], dtype=float).reshape(len(vs), len(FEATURE_NAMES))
    y = np.array([v.y for v in vs], dtype=float)
    return X, y


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "NormStats":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit normalization on an empty set")
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def normalize_features(vs: Sequence[FeatureVector], train_idx=None) -> tuple[np.ndarray, NormStats]:
    """Standardize all vectors with statistics from the training rows only."""
    if not vs:
        raise ValueError("no feature vectors")
    X, _ = as_arrays(vs)
    fit_rows = X if train_idx is None else X[np.asarray(train_idx)]
    stats = NormStats.fit(fit_rows)
    return stats.apply(X), stats


# ---- network ---------------------------------------------------------------

Params = list  # [(W, b), ...] with W of shape (fan_in, fan_out)


def layer_sizes(n_in: int = len(FEATURE_NAMES)) -> tuple[int, ...]:
    return (n_in, *HIDDEN_SIZES, 1)


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> Params:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        r = math.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-r, r, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(params: Params, X: np.ndarray) -> list[np.ndarray]:
    acts = [np.asarray(X, dtype=float)]
    for W, b in params:
        acts.append(_sigmoid(acts[-1] @ W + b))
    return acts


def predict_proba(params: Params, X: np.ndarray) -> np.ndarray:
    return np.clip(forward(params, X)[-1][:, 0], PROB_CLIP, 1.0 - PROB_CLIP)


def loss(params: Params, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Mean cross-entropy plus ``lam / (2m) * sum(W**2)`` (biases unpenalized)."""
    y = np.asarray(y, dtype=float)
    m = y.size
    if m == 0:
        raise ValueError("loss of an empty batch")
    h = predict_proba(params, X)
    data = float(np.mean(-y * np.log(h) - (1.0 - y) * np.log(1.0 - h)))
    penalty = sum(float(np.sum(W * W)) for W, _ in params)
    return data + lam / (2.0 * m) * penalty


def gradients(params: Params, X: np.ndarray, y: np.ndarray, lam: float) -> Params:
    """Backpropagated gradient of ``loss`` (ignoring the probability clipping)."""
    y = np.asarray(y, dtype=float)
    m = y.size
    acts = forward(params, X)
    delta = (acts[-1] - y[:, None]) / m  # sigmoid output + cross-entropy
    grads = []
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        a_prev = acts[layer]
        grads.append((a_prev.T @ delta + (lam / m) * W, delta.sum(axis=0)))
        if layer:
            delta = (delta @ W.T) * a_prev * (1.0 - a_prev)
    return grads[::-1]


def mse(params: Params, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((forward(params, X)[-1][:, 0] - y) ** 2))


def accuracy(params: Params, X: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean((predict_proba(params, X) >= threshold) == (y > 0.5)))


@dataclass
class LearningCurve:
    """Per-epoch losses; epoch 0 is the untrained network."""

    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    eval_loss: list[float] = field(default_factory=list)


def fit(
    params: Params,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    X_eval: Optional[np.ndarray] = None,
    y_eval: Optional[np.ndarray] = None,
) -> tuple[Params, LearningCurve]:
    """Full-batch gradient descent for ``cfg.iterations`` steps."""
    params = [(W.copy(), b.copy()) for W, b in params]
    if X_eval is None:
        X_eval, y_eval = X, y
    curve = LearningCurve()

    def record(epoch):
        tl = loss(params, X, y, cfg.lam)
        if not math.isfinite(tl):
            raise TrainingDivergedError(f"training loss became {tl} at epoch {epoch} (learning_rate={cfg.learning_rate})")
        curve.epochs.append(epoch)
        curve.train_loss.append(tl)
        curve.eval_loss.append(mse(params, X_eval, y_eval))

    record(0)
    for it in range(1, cfg.iterations + 1):
        for (W, b), (gW, gb) in zip(params, gradients(params, X, y, cfg.lam)):
            W -= cfg.learning_rate * gW
            b -= cfg.learning_rate * gb
        if it % cfg.iterations_per_epoch == 0:
            record(it // cfg.iterations_per_epoch)
    return params, curve


def split_indices(n: int, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perm = np.random.default_rng(cfg.seed).permutation(n)
    n_train = int(round(cfg.train_fraction * n))
    n_val = int(round(cfg.val_fraction * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


@dataclass
class TrainResult:
    params: Params
    stats: NormStats
    curve: LearningCurve
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    val_accuracy: float
    test_accuracy: float


def train(vs: Sequence[FeatureVector], cfg: TrainConfig) -> TrainResult:
    """Split, normalize on the training part, fit, and score on validation/test."""
    if len(vs) < 3:
        raise ValueError(f"need at least 3 feature vectors to train, got {len(vs)}")
    train_idx, val_idx, test_idx = split_indices(len(vs), cfg)
    Xn, stats = normalize_features(vs, train_idx)
    _, y = as_arrays(vs)
    rng = np.random.default_rng(cfg.seed)
    params0 = init_params(layer_sizes(), rng)
    eval_idx = val_idx if val_idx.size else train_idx
    params, curve = fit(params0, Xn[train_idx], y[train_idx], cfg, Xn[eval_idx], y[eval_idx])
    return TrainResult(
        params=params,
        stats=stats,
        curve=curve,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        val_accuracy=accuracy(params, Xn[val_idx], y[val_idx]),
        test_accuracy=accuracy(params, Xn[test_idx], y[test_idx]),
    )


@dataclass
class CurveWithBands:
    epochs: list[int]
    mean: list[float]
    std: list[float]
    per_fold: list[list[float]] = field(repr=False, default_factory=list)


def k_fold_validate(vs: Sequence[FeatureVector], cfg: TrainConfig) -> CurveWithBands:
    """Evaluation-loss curve averaged over ``k`` rotating held-out folds.

    Every fold starts from the same seeded initialization.
    """
    k = cfg.k_folds
    n = len(vs)
    if n < 2 * k:
        raise ValueError(f"{k}-fold validation needs at least {2 * k} samples, got {n}")
    X, y = as_arrays(vs)
    folds = np.array_split(np.random.default_rng(cfg.seed).permutation(n), k)
    params0 = init_params(layer_sizes(X.shape[1]), np.random.default_rng(cfg.seed))
    curves = []
    for f in range(k):
        held = folds[f]
        rest = np.concatenate([folds[g] for g in range(k) if g != f])
        stats = NormStats.fit(X[rest])
        _, curve = fit(params0, stats.apply(X[rest]), y[rest], cfg, stats.apply(X[held]), y[held])
        curves.append(curve.eval_loss)
    arr = np.array(curves)
    return CurveWithBands(
        epochs=list(curve.epochs),
        mean=arr.mean(axis=0).tolist(),
        std=arr.std(axis=0).tolist(),
        per_fold=arr.tolist(),
    )


def filtered_backtest(
    blocks: Sequence[DataBlock],
    forecasts: Sequence[Forecast],
    params: Params,
    stats: NormStats,
    threshold: float = 0.5,
    *,
    contract_size: float = 100,
    threshold_margin: float = 0.0,
    exit_day: int = 1,
    bin_width: float = 10.0,
) -> BacktestReport:
    """Black-Scholes backtest keeping only trades the classifier scores ``>= threshold``."""
    pairs, skipped = align(blocks, forecasts)
    trades = []
    for b, f in pairs:
        try:
            t = decide_trade(b, f, "black_scholes", contract_size=contract_size,
                             threshold_margin=threshold_margin, exit_day=exit_day)
        except ValueError as exc:
            skipped.append((b.option_id, str(exc)))
            continue
        if t.action == "buy":
            p = predict_proba(params, stats.apply(np.array([feature_vector(b, f)])))[0]
            if p < threshold:
                t = replace(t, action="no_trade", pnl=0.0, outcome=None)
        trades.append(t)
    return summarize("black_scholes_filtered", trades, skipped, bin_width)


def save_model(path, params: Params, stats: NormStats, extra: Optional[dict] = None) -> None:
    doc = {
        "layer_sizes": [params[0][0].shape[0]] + [W.shape[1] for W, _ in params],
        "weights": [W.tolist() for W, _ in params],
        "biases": [b.tolist() for _, b in params],
        "norm_mean": stats.mean.tolist(),
        "norm_std": stats.std.tolist(),
        "features": list(FEATURE_NAMES),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> tuple[Params, NormStats]:
    doc = json.loads(Path(path).read_text())
    sizes = doc["layer_sizes"]
    params = []
    for k, (W, b) in enumerate(zip(doc["weights"], doc["biases"])):
        W, b = np.array(W, dtype=float), np.array(b, dtype=float)
        if W.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
            raise ValueError(f"{path}: layer {k} has shape {W.shape}/{b.shape}, expected {sizes[k:k + 2]}")
        params.append((W, b))
    return params, NormStats(np.array(doc["norm_mean"]), np.array(doc["norm_std"]))
