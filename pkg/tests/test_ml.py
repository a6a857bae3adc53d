import json

import numpy as np
import pytest

from bsforecast.backtest import run_backtest
from bsforecast.ml import (
    FEATURE_NAMES,
    FeatureVector,
    NormStats,
    TrainConfig,
    TrainingDivergedError,
    build_features,
    feature_vector,
    fit,
    forward,
    gradients,
    init_params,
    k_fold_validate,
    layer_sizes,
    load_model,
    loss,
    normalize_features,
    predict_proba,
    save_model,
    split_indices,
    train,
)
from bsforecast.pipeline import Forecast
from helpers import make_block, separable_features


def test_architecture():
    assert layer_sizes() == (13, 50, 25, 14, 1)
    params = init_params(layer_sizes(), np.random.default_rng(0))
    assert [W.shape for W, _ in params] == [(13, 50), (50, 25), (25, 14), (14, 1)]
    out = forward(params, np.zeros((3, 13)))[-1]
    assert out.shape == (3, 1) and np.all((out > 0) & (out < 1))


def test_init_is_seeded():
    a = init_params(layer_sizes(), np.random.default_rng(5))
    b = init_params(layer_sizes(), np.random.default_rng(5))
    assert all(np.array_equal(x[0], y[0]) for x, y in zip(a, b))


def test_feature_vector_order():
    block = make_block(bids=(1.0, 2.0, 3.0), asks=(1.5, 2.5, 3.5), vols=(0.1, 0.2, 0.3), stock=(50.0, 50.1))
    fc = Forecast("opt", 4.0, 5.0, None, 0.01, 21)
    x = feature_vector(block, fc)
    assert dict(zip(FEATURE_NAMES, x)) == {
        "est_p1": 4.0, "est_p2": 5.0, "stock_bid_0": 50.0, "stock_ask_0": 50.1,
        "bid_m2": 1.0, "ask_m2": 1.5, "vol_m2": 0.1,
        "bid_m1": 2.0, "ask_m1": 2.5, "vol_m1": 0.2,
        "bid_0": 3.0, "ask_0": 3.5, "vol_0": 0.3,
    }


def test_build_features_labels_executed_trades_only():
    blocks = [make_block("w", real=(2.6, 2.6)), make_block("l", real=(2.0, 2.0)), make_block("n")]
    fcs = [Forecast("w", 2.5, 2.7, None, 0.01, 21), Forecast("l", 2.5, 2.7, None, 0.01, 21),
           Forecast("n", 2.0, 2.0, None, 0.01, 21)]
    rep = run_backtest(blocks, fcs, "bs")
    vs, _ = build_features(blocks, fcs, rep.trades)
    assert [(v.option_id, v.y) for v in vs] == [("w", 1), ("l", 0)]


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector("x", (1.0,) * 12, 0)
    with pytest.raises(ValueError):
        FeatureVector("x", (1.0,) * 13, 2)


def test_normalization_uses_training_rows_only():
    vs = separable_features(50)
    Xn, stats = normalize_features(vs, np.arange(30))
    np.testing.assert_allclose(Xn[:30].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(Xn[:30].std(axis=0), 1, atol=1e-12)
    const = NormStats.fit(np.ones((4, 13)))
    assert np.all(np.isfinite(const.apply(np.ones((2, 13)))))


def test_loss_regularizer_excludes_biases():
    params = init_params(layer_sizes(), np.random.default_rng(1))
    X = np.random.default_rng(2).normal(size=(8, 13))
    y = np.array([0, 1] * 4, dtype=float)
    penalty = sum(float(np.sum(W**2)) for W, _ in params)
    assert loss(params, X, y, 0.5) - loss(params, X, y, 0.0) == pytest.approx(0.5 / 16 * penalty)
    bumped = [(W, b + 1.0) for W, b in params]
    diff_reg = loss(bumped, X, y, 0.5) - loss(bumped, X, y, 0.0)
    assert diff_reg == pytest.approx(0.5 / 16 * penalty)


def test_loss_finite_at_saturation():
    params = [(np.full((13, 1), 100.0), np.zeros(1))]
    X = np.ones((2, 13))
    assert np.isfinite(loss(params, X, np.array([0.0, 0.0]), 0.0))
    p = predict_proba(params, X)
    assert np.all(p <= 1 - 1e-12)


def test_training_loss_decreases_with_default_config():
    vs = separable_features(200)
    Xn, _ = normalize_features(vs)
    y = np.array([v.y for v in vs], dtype=float)
    params0 = init_params(layer_sizes(), np.random.default_rng(0))
    _, curve = fit(params0, Xn, y, TrainConfig())
    assert curve.epochs == list(range(11))
    assert all(b < a for a, b in zip(curve.train_loss, curve.train_loss[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    vs = separable_features(60)
    Xn, _ = normalize_features(vs)
    y = np.array([v.y for v in vs], dtype=float)
    params0 = init_params(layer_sizes(), np.random.default_rng(0))
    with pytest.raises(TrainingDivergedError):
        fit(params0, Xn * 1e300, y, TrainConfig(learning_rate=1e300, iterations=20))


def test_split_fractions():
    tr, va, te = split_indices(100, TrainConfig())
    assert (len(tr), len(va), len(te)) == (60, 20, 20)
    assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(100))
    with pytest.raises(ValueError):
        TrainConfig(train_fraction=0.9)


def test_train_reports_accuracies_and_is_deterministic():
    vs = separable_features(120)
    cfg = TrainConfig(learning_rate=2.0, iterations=100)
    a, b = train(vs, cfg), train(vs, cfg)
    assert a.test_accuracy == b.test_accuracy
    assert 0 <= a.val_accuracy <= 1
    assert np.array_equal(a.params[0][0], b.params[0][0])


def test_k_fold_shapes():
    bands = k_fold_validate(separable_features(60), TrainConfig(learning_rate=1.0, iterations=40, k_folds=3))
    assert bands.epochs == [0, 1, 2]
    assert len(bands.per_fold) == 3 and len(bands.mean) == 3
    # same initialization in every fold: epoch-0 losses only differ by the held-out data
    assert all(s >= 0 for s in bands.std)
    with pytest.raises(ValueError):
        k_fold_validate(separable_features(10), TrainConfig(k_folds=10))


def test_model_round_trip(tmp_path):
    vs = separable_features(40)
    res = train(vs, TrainConfig(iterations=20))
    path = tmp_path / "model.json"
    save_model(path, res.params, res.stats, {"note": 1})
    params, stats = load_model(path)
    X = np.random.default_rng(0).normal(size=(5, 13))
    np.testing.assert_array_equal(predict_proba(params, stats.apply(X)), predict_proba(res.params, res.stats.apply(X)))
    doc = json.loads(path.read_text())
    doc["weights"][0] = doc["weights"][0][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="layer 0"):
        load_model(path)


def test_sklearn_reaches_high_accuracy_on_fixture():
    sklearn = pytest.importorskip("sklearn.linear_model")
    vs = separable_features()
    X = np.array([v.x for v in vs])
    y = np.array([v.y for v in vs])
    clf = sklearn.LogisticRegression().fit(X, y)
    assert clf.score(X, y) >= 0.99


def test_gradient_shapes_match_params():
    params = init_params(layer_sizes(), np.random.default_rng(3))
    X = np.random.default_rng(4).normal(size=(6, 13))
    g = gradients(params, X, np.zeros(6), 0.1)
    assert [a.shape for a, _ in g] == [W.shape for W, _ in params]
    assert [b.shape for _, b in g] == [b.shape for _, b in params]


def test_default_training_settings():
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.iterations, cfg.iterations_per_epoch, cfg.k_folds) == (0.00005, 200, 20, 10)
