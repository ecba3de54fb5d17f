import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsefield.errors import DimensionError, InsufficientDataError, NumericalError, TrainingError
from sparsefield.temporal import (Standardizer, TrainConfig, build_features,
                                  fit_ar_baseline, gate_activations, gradient_check, init_model,
                                  lstm_step, new_state, predict_sequence, predict_step, train)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def reference_step(p, x, h, c):
    """Straight-line gated update, written independently of the module."""
    H = p["U"].shape[1]
    W, U, b = p["W"], p["U"], p["b"]
    f = sigmoid(W[:H] @ x + U[:H] @ h + b[:H])
    i = sigmoid(W[H:2 * H] @ x + U[H:2 * H] @ h + b[H:2 * H])
    o = sigmoid(W[2 * H:3 * H] @ x + U[2 * H:3 * H] @ h + b[2 * H:3 * H])
    g = np.tanh(W[3 * H:] @ x + U[3 * H:] @ h + b[3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, p["V"] @ h_new + p["c"]


def small_model(rng, n=2, nu=2, hidden=4, scale=0.5):
    m = init_model(n, nu, TrainConfig(hidden_dim=hidden))
    m.params = {k: rng.normal(scale=scale, size=v.shape) for k, v in m.params.items()}
    return m


def linear_system(seed=0, length=500, steps=False):
    r = np.random.default_rng(seed)
    u = r.uniform(-1, 1, length)
    if steps:
        u = np.repeat(r.uniform(-1, 1, length // 20 + 1), 20)[:length]
    a = np.zeros(length)
    for t in range(1, length):
        a[t] = 0.9 * a[t - 1] + 0.1 * u[t]
    return a[None], u[None]


def test_zero_network_fixed_point():
    m = init_model(2, 1, TrainConfig(hidden_dim=3))
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    m.params["c"] = np.array([0.3, -0.2])
    m.out_scaler = Standardizer(np.array([1.0, 2.0]), np.array([2.0, 4.0]))
    h, c, a = lstm_step(m, np.ones(3), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(c, 0.0)
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_allclose(a, [1.0 + 0.6, 2.0 - 0.8])


def test_saturated_forget_gate_preserves_memory(rng):
    m = small_model(rng, hidden=3)
    m.params["b"][:3] = 20.0
    c_prev = rng.normal(size=3)
    h_prev = rng.normal(size=3) * 0.1
    d = rng.normal(size=4)
    _, c, _ = lstm_step(m, d, h_prev, c_prev)
    p = m.params
    i = sigmoid(p["W"][3:6] @ d + p["U"][3:6] @ h_prev + p["b"][3:6])
    g = np.tanh(p["W"][9:] @ d + p["U"][9:] @ h_prev + p["b"][9:])
    np.testing.assert_allclose(c, c_prev + i * g, atol=1e-8)


def test_step_matches_reference(rng):
    m = small_model(rng, hidden=5)
    h0, c0, d = rng.normal(size=5), rng.normal(size=5), rng.normal(size=4)
    h, c, a = lstm_step(m, d, h0, c0)
    hr, cr, ar = reference_step(m.params, d, h0, c0)
    np.testing.assert_allclose(h, hr, atol=1e-12)
    np.testing.assert_allclose(c, cr, atol=1e-12)
    np.testing.assert_allclose(a, ar, atol=1e-12)


def test_step_rejects_bad_input(rng):
    m = small_model(rng)
    with pytest.raises(DimensionError):
        lstm_step(m, np.ones(3), np.zeros(4), np.zeros(4))
    with pytest.raises(NumericalError):
        lstm_step(m, np.array([np.nan, 0, 0, 0]), np.zeros(4), np.zeros(4))
    m.params["W"][0, 0] = np.inf
    with pytest.raises(NumericalError):
        lstm_step(m, np.ones(4), np.zeros(4), np.zeros(4))


def test_gradient_check_zero_network():
    m = init_model(2, 1, TrainConfig(hidden_dim=3))
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    r = np.random.default_rng(0)
    batch = (r.normal(size=(5, 2, 3)), r.normal(size=(5, 2, 2)))
    assert gradient_check(m, batch, floor=1.0) <= 1e-7


def test_gradient_check_random_and_negative_control(rng):
    m = small_model(rng, hidden=4)
    batch = (rng.normal(size=(6, 3, 4)), rng.normal(size=(6, 3, 2)))
    assert gradient_check(m, batch) <= 1e-4
    assert gradient_check(m, batch, corrupt=("W", (0, 0))) >= 0.5


def test_constant_target_converges():
    d = np.tile([1.0, 2.0, 3.0], (200, 1))
    target = np.full((200, 1), 7.0)
    # short record, so short windows give the optimizer enough updates per epoch
    m = train([(d, target)], TrainConfig(epochs=200, seq_len=10, patience=200))
    assert m.report["train_loss"] <= 1e-6
    np.testing.assert_allclose(predict_sequence(m, d), 7.0, atol=1e-2)


def one_step_validation_rmse(m, d, target, val_fraction=0.2):
    split = d.shape[0] - int(np.floor(val_fraction * d.shape[0]))
    pred = predict_sequence(m, d)
    return np.sqrt(np.mean((pred[split:] - target[split:]) ** 2))


def test_linear_system_one_step_accuracy():
    a, u = linear_system()
    d, target = build_features(a, u)
    m = train([(d, target)], TrainConfig())
    assert one_step_validation_rmse(m, d, target) <= 0.02 * target.std()


def test_beats_persistence_on_simulator_coefficients(sim_result):
    from sparsefield.separation import separate
    # the whole record, so the held-out tail contains current steps
    basis, coeffs = separate(sim_result.snapshots, order=2)
    d, target = build_features(coeffs.a, sim_result.inputs)
    m = train([(d, target)], TrainConfig(epochs=150, residual=True))
    split = d.shape[0] - int(0.2 * d.shape[0])
    pred = predict_sequence(m, d)
    mse_model = np.mean((pred[split:] - target[split:]) ** 2)
    mse_persist = np.mean((d[split:, :2] - target[split:]) ** 2)
    assert mse_model < mse_persist


def test_training_is_deterministic():
    a, u = linear_system(length=200)
    d, target = build_features(a, u)
    cfg = TrainConfig(epochs=20, hidden_dim=6, seed=3)
    m1, m2 = train([(d, target)], cfg), train([(d, target)], cfg)
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])
    m3 = train([(d, target)], TrainConfig(epochs=20, hidden_dim=6, seed=4))
    assert not np.array_equal(m1.params["W"], m3.params["W"])


def test_divergence_raises():
    a, u = linear_system(length=200)
    d, target = build_features(a, u)
    with pytest.raises(TrainingError, match="diverged"):
        train([(d, target)], TrainConfig(epochs=5, hidden_dim=4, learning_rate=1e300))


def test_train_input_checks():
    with pytest.raises(InsufficientDataError):
        train([(np.ones((1, 2)), np.ones((1, 1)))])
    with pytest.raises(DimensionError):
        train([(np.ones((5, 2)), np.ones((4, 1)))])
    with pytest.raises(NumericalError):
        train([(np.ones((5, 2)), np.full((5, 1), np.nan))])


def test_teacher_forced_stream_reproduces_batch_predictions(rng):
    a, u = linear_system(length=120)
    d, target = build_features(a, u)
    m = train([(d, target)], TrainConfig(epochs=5, hidden_dim=6))
    batch = predict_sequence(m, d)
    state = None
    online = []
    for t in range(1, a.shape[1]):
        a_hat, state = predict_step(m, a[:, t - 1], u[:, t], state)
        online.append(a_hat)
    np.testing.assert_allclose(np.array(online), batch, rtol=0, atol=1e-12)


def test_warm_up_does_not_hurt():
    a, u = linear_system(seed=1)
    d, target = build_features(a, u)
    m = train([(d, target)], TrainConfig(epochs=100))
    start = 300
    cold_state, warm_state = None, None
    for t in range(start - 10, start):
        _, warm_state = predict_step(m, a[:, t - 1], u[:, t], warm_state)
    cold, warm = [], []
    for t in range(start, start + 20):
        pc, cold_state = predict_step(m, a[:, t - 1], u[:, t], cold_state)
        pw, warm_state = predict_step(m, a[:, t - 1], u[:, t], warm_state)
        cold.append(abs(pc[0] - a[0, t]))
        warm.append(abs(pw[0] - a[0, t]))
    assert np.sum(warm) <= np.sum(cold)


def test_constant_input_reaches_fixed_point():
    a, u = linear_system(length=200)
    d, target = build_features(a, u)
    m = train([(d, target)], TrainConfig(epochs=30, hidden_dim=8))
    state = new_state(m)
    deltas = []
    prev = state.h.copy()
    for _ in range(200):
        _, state = predict_step(m, [0.2], [0.5], state)
        deltas.append(np.abs(state.h - prev).max())
        prev = state.h.copy()
    tail = np.array(deltas[50:])
    assert tail[-1] < 1e-8 or np.all(np.diff(tail[tail > 1e-13]) <= 1e-15)
    assert tail[-1] < tail[0]


def test_predict_step_dimension_check(rng):
    m = small_model(rng)
    with pytest.raises(DimensionError):
        predict_step(m, [1.0], [1.0, 2.0])


def test_gate_ranges(rng):
    a, u = linear_system(length=300)
    d, target = build_features(a, u)
    m = train([(d, target)], TrainConfig(epochs=20))
    gates = gate_activations(m, d)
    for key in "fio":
        assert np.all((gates[key] > 0) & (gates[key] < 1))
    assert np.all(np.abs(gates["g"]) < 1)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_scaler_round_trip(seed, dim):
    x = np.random.default_rng(seed).normal(size=(30, dim)) * 50 + 7
    s = Standardizer.fit(x)
    np.testing.assert_allclose(s.descale(s.scale(x)), x, atol=1e-12 * np.abs(x).max())
    assert Standardizer.from_dict(s.to_dict()).mean.tolist() == s.mean.tolist()


def test_build_features_layout():
    a = np.arange(10.0).reshape(2, 5)
    u = 100 + np.arange(5.0)[None]
    d, t = build_features(a, u, lag_a=2, lag_u=2)
    # row for t=2: a(1), a(0), u(2), u(1)
    np.testing.assert_array_equal(d[0], [1, 6, 0, 5, 102, 101])
    np.testing.assert_array_equal(t[0], [2, 7])
    d26, _ = build_features(a, u, current_input=False)
    np.testing.assert_array_equal(d26[0], [0, 5, 100])
    with pytest.raises(DimensionError):
        build_features(a, u[:, :4])
    with pytest.raises(InsufficientDataError):
        build_features(a[:, :1], u[:, :1])


def ar_sequence(coefs, length=300, seed=0):
    r = np.random.default_rng(seed)
    u = r.normal(size=length)
    a = np.zeros(length)
    for t in range(len(coefs), length):
        a[t] = sum(c * a[t - k - 1] for k, c in enumerate(coefs)) + 0.5 * u[t] + 0.1
    return a[None], u[None]


def test_ar_recovers_ar1():
    a, u = ar_sequence([0.8])
    m = fit_ar_baseline([(a, u)])
    np.testing.assert_allclose(m.coef.ravel(), [0.8, 0.5], atol=1e-8)
    np.testing.assert_allclose(m.intercept, [0.1], atol=1e-8)


def test_ar2_needs_two_lags():
    a, u = ar_sequence([1.2, -0.4])
    res = {}
    for lags in (1, 2):
        m = fit_ar_baseline([(a, u)], lag_a=lags)
        d, t = build_features(a, u, lag_a=lags)
        res[lags] = np.sqrt(np.mean((m.predict(d) - t) ** 2))
    assert res[2] <= 1e-8
    assert res[1] > res[2]


def test_ar_on_white_noise():
    r = np.random.default_rng(5)
    a = r.normal(size=(1, 500))
    u = r.normal(size=(1, 500))
    m = fit_ar_baseline([(a, u)])
    d, t = build_features(a, u)
    pred = m.predict(d)
    r2 = 1 - np.sum((pred - t) ** 2) / np.sum((t - t.mean()) ** 2)
    assert abs(r2) < 0.05
    assert abs(pred.mean() - t.mean()) < 0.05


def test_ar_singular_design():
    a = np.ones((1, 50))
    u = np.ones((1, 50))
    with pytest.raises(NumericalError):
        fit_ar_baseline([(a, u)])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=0.7)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
