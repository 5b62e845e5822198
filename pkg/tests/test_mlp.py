import numpy as np
import pytest

from workload_forecast.data import WorkloadComponent
from workload_forecast.errors import DimensionMismatch, InsufficientData, ValidationError
from workload_forecast.mlp import (
    AdamState,
    MlpModel,
    Normalizer,
    TrainConfig,
    adam_step,
    forward,
    forward_batch,
    init_mlp,
    load_model,
    loss_and_gradients,
    n_params,
    predict_block,
    save_model,
    temporal_split,
    train_early_stopping,
)
from workload_forecast.stats import spearman_rho
from workload_forecast.windows import ForecastMode, HorizonConfig, WindowBatch, WindowSample, build_window_batch

from conftest import make_series
from oracles import fd_check, flat_grad, forward_oracle, loss_at


def zero_model(d_in, out_bias=0.0):
    dims = (d_in, 128, 128, 1)
    params = np.zeros(n_params(dims))
    m = MlpModel(dims, params)
    m.layers[2][1][0] = out_bias
    return m


def test_init_dims_and_determinism():
    assert init_mlp(48, 1).layer_dims == (48, 128, 128, 1)
    assert init_mlp(336, 1).layer_dims == (336, 128, 128, 1)
    a, b = init_mlp(48, 99), init_mlp(48, 99)
    assert a.params.tobytes() == b.params.tobytes()
    assert a.params.tobytes() != init_mlp(48, 100).params.tobytes()


def test_init_distribution():
    m = init_mlp(336, 5)
    for w, b in m.layers:
        bound = 1 / np.sqrt(w.shape[1])
        assert np.abs(w).max() <= bound
        assert abs(w.mean()) < bound / 10
        assert not b.any()
    with pytest.raises(ValidationError):
        init_mlp(0, 1)


def test_layer_views_share_buffer():
    m = init_mlp(4, 0)
    m.weights[0][0, 0] = 123.0
    assert m.params[0] == 123.0
    assert sum(w.size + b.size for w, b in m.layers) == m.params.size


def test_forward_zero_weights():
    m = zero_model(7, 0.7)
    assert forward(m, np.random.default_rng(0).normal(size=7)) == 0.7


def test_forward_relu_clamp():
    m = zero_model(4, 0.25)
    (w1, b1), (w2, b2), (w3, b3) = m.layers
    w1[:4, :] = -1.0
    b1[:4] = -0.5
    w2[:4, :4] = 1.0
    w3[0, :4] = 3.0
    # all hidden pre-activations are negative for positive inputs
    assert forward(m, [0.3, 1.0, 2.0, 0.1]) == 0.25


def test_forward_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        m = init_mlp(9, int(rng.integers(1 << 30)))
        m.params += rng.normal(scale=0.05, size=m.params.size)
        x = rng.normal(size=9)
        ref = forward_oracle([w.tolist() for w in m.weights], [b.tolist() for b in m.biases], x.tolist())
        assert abs(forward(m, x) - ref) < 1e-12


def test_forward_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        forward(init_mlp(3, 0), [1.0, 2.0])


def test_gradients_stationary_point():
    m = zero_model(5)
    loss, grads = loss_and_gradients(m, (np.ones((3, 5)), np.zeros(3)))
    assert loss == 0.0
    assert not flat_grad(grads).any()


def test_output_bias_gradient_single_sample():
    m = init_mlp(3, 4)
    (w1, b1), (w2, b2), (w3, b3) = m.layers
    w1[...] = np.abs(w1)
    w2[...] = np.abs(w2)
    b1[...] = 0.1
    b2[...] = 0.1
    x = np.array([[0.5, 1.0, 2.0]])
    y = forward_batch(m, x)[0]
    _, grads = loss_and_gradients(m, (x, np.array([1.5])))
    assert grads[2][1][0] == pytest.approx(2 * (y - 1.5), rel=1e-12)


def test_gradients_accept_window_samples():
    m = init_mlp(2, 0)
    ws = [WindowSample(np.array([1.0, 2.0]), 0.5, 3, "a"), WindowSample(np.array([0.0, -1.0]), 1.0, 4, "a")]
    loss, _ = loss_and_gradients(m, ws)
    assert loss == pytest.approx(loss_at(m, np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([0.5, 1.0])))
    with pytest.raises(DimensionMismatch):
        loss_and_gradients(m, [WindowSample(np.ones(3), 0.0, 0, "a")])
    with pytest.raises(InsufficientData):
        loss_and_gradients(m, [])


def test_gradients_every_entry_finite_difference():
    rng = np.random.default_rng(21)
    m = init_mlp(2, 3)
    m.layers[0][1][...] = rng.normal(scale=0.2, size=128)
    m.layers[1][1][...] = rng.normal(scale=0.2, size=128)
    x, y = rng.normal(size=(3, 2)), rng.normal(size=3)
    assert fd_check(m, x, y, range(m.params.size)) < 1e-4


def test_adam_first_step_is_signed_lr():
    cfg = TrainConfig()
    g = np.array([0.3, -2.0, 1e-3, 5.0])
    p = np.zeros(4)
    adam_step(p, g, AdamState.zeros(4), 1, cfg)
    np.testing.assert_allclose(p, -cfg.learning_rate * np.sign(g), rtol=1e-4)
    np.testing.assert_allclose(p, -cfg.learning_rate * g / (np.abs(g) + cfg.adam_eps), rtol=1e-12)


def test_adam_zero_gradient_fixed_point():
    p = np.array([1.0, -2.0, 3.0])
    state = AdamState.zeros(3)
    adam_step(p, np.zeros(3), state, 1, TrainConfig())
    assert p.tolist() == [1.0, -2.0, 3.0]


def test_adam_first_step_scale_invariant():
    p = np.zeros(2)
    adam_step(p, np.array([0.4, 0.8]), AdamState.zeros(2), 1, TrainConfig())
    assert abs(p[0] - p[1]) < 1e-15 * 1e4


def test_adam_bias_correction_later_steps():
    cfg = TrainConfig(learning_rate=0.01)
    rng = np.random.default_rng(0)
    p, state = np.zeros(3), AdamState.zeros(3)
    m = v = np.zeros(3)
    ref = np.zeros(3)
    for t in range(1, 6):
        g = rng.normal(size=3)
        adam_step(p, g, state, t, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValidationError):
        adam_step(p, g, state, 0, cfg)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(val_fraction=0.5)
    with pytest.raises(ValidationError):
        TrainConfig(patience=0)


def synthetic_batch(n_subjects, per_subject, d, target_fn, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_subjects * per_subject, d))
    ids = tuple(f"p{i}" for i in range(n_subjects) for _ in range(per_subject))
    idx = np.tile(np.arange(per_subject), n_subjects)
    return WindowBatch(x, target_fn(x), idx, ids)


def test_temporal_split_takes_tail_per_subject():
    wb = synthetic_batch(3, 20, 2, lambda x: x[:, 0])
    fit, val = temporal_split(wb, 0.1)
    assert len(val) == 6 and len(fit) == 54
    for sid in ("p0", "p1", "p2"):
        rows = [i for i in val if wb.subject_ids[i] == sid]
        assert sorted(wb.target_index[rows].tolist()) == [18, 19]


def test_normalizer_statistics():
    rng = np.random.default_rng(2)
    x = rng.normal(3, 5, size=(500, 6))
    x[:, 2] = 4.0
    norm = Normalizer.fit(x, rng.normal(size=500))
    z = norm.transform_x(x)
    assert np.abs(z.mean(axis=0)).max() < 1e-9
    var = z.var(axis=0)
    assert np.abs(np.delete(var, 2) - 1).max() < 1e-9
    assert norm.x_scale[2] == 1.0


def test_train_constant_target():
    wb = synthetic_batch(4, 100, 5, lambda x: np.zeros(len(x)))
    model, report = train_early_stopping(wb, TrainConfig(max_epochs=300, seed=1), 5)
    assert report.best_val_loss < 1e-4
    assert report.epochs_run <= 300
    assert report.best_val_loss == min(report.val_loss_curve)


def test_train_deterministic():
    wb = synthetic_batch(3, 60, 4, lambda x: x.sum(axis=1))
    cfg = TrainConfig(max_epochs=15, seed=3)
    m1, r1 = train_early_stopping(wb, cfg, 4)
    m2, r2 = train_early_stopping(wb, cfg, 4)
    assert m1.params.tobytes() == m2.params.tobytes()
    assert r1 == r2


def test_train_linear_teacher():
    coef = np.linspace(-1, 1, 8)
    wb = synthetic_batch(4, 500, 8, lambda x: x.mean(axis=1) + x @ coef, seed=5)
    model, report = train_early_stopping(wb, TrainConfig(seed=2), 8)
    _, val = temporal_split(wb, 0.1)
    pred = forward_batch(model, model.normalizer.transform_x(wb.features[val]))
    rmse = np.sqrt(np.mean((model.normalizer.inverse_y(pred) - wb.targets[val]) ** 2))
    assert rmse < 0.05 * wb.targets.std()


def test_early_stopping_invariant():
    rng = np.random.default_rng(0)
    wb = synthetic_batch(3, 80, 6, lambda x: rng.normal(size=len(x)))
    model, report = train_early_stopping(wb, TrainConfig(max_epochs=200, patience=3, seed=0), 6)
    assert report.stopped_early
    assert report.epochs_run == report.best_epoch + 3
    assert all(v >= report.best_val_loss for v in report.val_loss_curve[-3:])


def test_train_returns_best_epoch_parameters():
    rng = np.random.default_rng(1)
    wb = synthetic_batch(3, 80, 6, lambda x: rng.normal(size=len(x)))
    model, report = train_early_stopping(wb, TrainConfig(max_epochs=200, patience=3, seed=0), 6)
    fit, val = temporal_split(wb, 0.1)
    n = model.normalizer
    err = forward_batch(model, n.transform_x(wb.features[val])) - n.transform_y(wb.targets[val])
    assert float(err @ err) / len(err) == pytest.approx(report.best_val_loss, rel=1e-12)


def test_train_rejects_too_few_windows():
    wb = synthetic_batch(2, 1, 3, lambda x: x[:, 0])
    with pytest.raises(InsufficientData):
        train_early_stopping(wb, TrainConfig(), 3)
    with pytest.raises(DimensionMismatch):
        train_early_stopping(synthetic_batch(2, 10, 3, lambda x: x[:, 0]), TrainConfig(), 4)


def test_predict_block_count_and_constant_model():
    s = make_series(100)
    cfg = HorizonConfig(30, 60)
    mode = ForecastMode.univariate()
    m = zero_model(cfg.lag_samples, 1.25)
    out = predict_block(m, s, cfg, mode, (10, 10 + cfg.span))
    assert len(out) == 1
    t, pred, truth = out[0]
    idx = 10 + cfg.span - 1
    assert (t, pred, truth) == (idx * 5.0, 1.25, s.channel(WorkloadComponent.OVERALL)[idx])
    # with a normalizer the constant comes back de-normalized
    m.normalizer = Normalizer(np.zeros(6), np.ones(6), y_mean=2.0, y_scale=3.0)
    assert {p for _, p, _ in predict_block(m, s, cfg, mode, (0, 50))} == {2.0 + 3.0 * 1.25}
    with pytest.raises(InsufficientData):
        predict_block(m, s, cfg, mode, (0, cfg.span - 1))


def test_predict_block_memorizes_training_series():
    from workload_forecast.synth import SynthParams, synthesize_subject, enumerate_orderings
    s = synthesize_subject(enumerate_orderings()[0], SynthParams.default(seed=3), "mem")
    cfg = HorizonConfig(60, 60)
    mode = ForecastMode.multivariate()
    wb = build_window_batch(s, cfg, mode)
    model, _ = train_early_stopping(wb, TrainConfig(max_epochs=300, patience=300, seed=0), wb.features.shape[1])
    out = predict_block(model, s, cfg, mode, (0, s.n_samples))
    assert spearman_rho([p for _, p, _ in out], [t for _, _, t in out]).rho > 0.9


def test_checkpoint_roundtrip(tmp_path):
    wb = synthetic_batch(2, 30, 3, lambda x: x[:, 0])
    model, _ = train_early_stopping(wb, TrainConfig(max_epochs=3), 3)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.params.tobytes() == model.params.tobytes()
    assert back.normalizer.x_mean.tolist() == model.normalizer.x_mean.tolist()
    assert (tmp_path / "m.json").read_text() == (save_model(back, tmp_path / "n.json"), (tmp_path / "n.json").read_text())[1]
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        load_model(tmp_path / "bad.json")
