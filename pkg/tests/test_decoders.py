import numpy as np
import pytest

from evdecode.decoders import (
    LIFLayer,
    LSTMDecoder,
    MLPDecoder,
    OpCounter,
    SNNDecoder,
    TrainConfig,
    backward,
    forward_lstm,
    forward_nn,
    forward_snn,
    forward_stnn,
    lif_step,
    linear_fit,
    load_model,
    predict,
    save_model,
    surrogate_grad,
    train,
)
from evdecode.decoders.lstm import sigmoid
from evdecode.decoders.optim import AdamW, cosine_lr
from evdecode.decoders.snn import NO_RESET, RESET_TO_ZERO, smooth_spike
from evdecode.decoders.train import mse
from evdecode.errors import ConfigError, DomainError, NumericError, StateError
from evdecode.features import FeatureConfig, FeatureFrame, split_reaches
from oracles import finite_diff_grads, gradient_case, rel_error


def frame(X, Y=None, reach_ids=None, mode="frame", seed=0):
    X = np.asarray(X, dtype=np.float32)
    n = len(X)
    if Y is None:
        Y = np.random.default_rng(seed).normal(size=(n, 2))
    if reach_ids is None:
        reach_ids = np.arange(n) * 8 // n
    cfg = FeatureConfig(4, 4, 1, "binary") if mode == "binary" else FeatureConfig(200, 4, 1, mode)
    return FeatureFrame(np.arange(n, dtype=np.int64) * 4000, X, np.asarray(Y, float), np.asarray(reach_ids), cfg, X.shape[1])


# --- gradients ------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["NN", "ST_NN", "LSTM", "SNN"])
@pytest.mark.parametrize("seed", [0, 1])
def test_small_gradients(kind, seed):
    m, an, loss = gradient_case(kind, seed, n_inputs=7, small=True)
    nu = finite_diff_grads(m, loss)
    for k in m.params:
        assert rel_error(an[k], nu[k]) < 1e-6, k


def test_train_mode_batchnorm_gradients():
    rng = np.random.default_rng(3)
    m = MLPDecoder.init(5, 0, hidden=(4, 3)).astype(np.float64)
    X, Y = rng.normal(size=(9, 5)), rng.normal(size=(9, 2))

    def loss():
        return mse(m.forward(X, train=True, dropout=0.0, update_stats=False)[0], Y)[0]

    out, cache = m.forward(X, train=True, dropout=0.0, update_stats=False)
    an = m.backward(cache, mse(out, Y)[1])
    nu = finite_diff_grads(m, loss)
    for k in m.params:
        if k in ("fc1.b", "fc2.b"):
            # batch statistics cancel a bias that feeds batch-norm
            assert np.abs(an[k]).max() < 1e-12 and np.abs(nu[k]).max() < 1e-8
        else:
            assert rel_error(an[k], nu[k]) < 1e-6, k


@pytest.mark.parametrize("kind", ["NN", "LSTM", "SNN"])
def test_zero_upstream_gives_zero_grads(kind):
    m, _, _ = gradient_case(kind, 0, n_inputs=5, small=True)
    X = np.ones((3, 5)) if kind == "NN" else np.ones((3, 1, 5))
    out, cache = m.forward(X, dropout=0.0)
    g = m.backward(cache, np.zeros_like(out))
    assert all(not np.any(v) for v in g.values())


def test_gradients_are_linear_in_upstream():
    m, _, _ = gradient_case("LSTM", 2, n_inputs=5, small=True)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 2, 5))
    out, cache = m.forward(X, dropout=0.0)
    a, b = rng.normal(size=out.shape), rng.normal(size=out.shape)
    ga, gb, gab = m.backward(cache, a), m.backward(cache, b), m.backward(cache, a + b)
    for k in ga:
        np.testing.assert_allclose(gab[k], ga[k] + gb[k], atol=1e-12)


@pytest.mark.parametrize("cls", [MLPDecoder, LSTMDecoder, SNNDecoder])
def test_backward_without_cache(cls):
    with pytest.raises(StateError):
        cls.init(4, 0).backward(None, np.zeros((1, 2)))


# --- MLP ----------------------------------------------------------------------


def test_mlp_zero_weights_give_zero_output():
    m = MLPDecoder.init(6, 0)
    for k in m.params:
        if k.startswith("fc"):
            m.params[k][:] = 0
    out, _ = m.forward(np.random.default_rng(0).normal(size=(4, 6)))
    assert not out.any()


def test_mlp_matches_straight_line_oracle():
    rng = np.random.default_rng(1)
    m = MLPDecoder.init(96, 4)
    for k in m.buffers:
        m.buffers[k] = rng.uniform(0.5, 1.5, m.buffers[k].shape).astype(np.float32)
    x = rng.poisson(3, size=96).astype(np.float64)
    P = {k: v.astype(np.float64) for k, v in m.params.items()}
    B = {k: v.astype(np.float64) for k, v in m.buffers.items()}
    h = x
    for i in (1, 2):
        z = P[f"fc{i}.W"] @ h + P[f"fc{i}.b"]
        z = (z - B[f"bn{i}.running_mean"]) / np.sqrt(B[f"bn{i}.running_var"] + 1e-5)
        h = np.maximum(P[f"bn{i}.gain"] * z + P[f"bn{i}.shift"], 0)
    ref = P["fc3.W"] @ h + P["fc3.b"]
    out, _ = m.forward(x[None])
    np.testing.assert_allclose(out[0], ref, rtol=1e-6, atol=1e-6)


def test_identity_batchnorm_passthrough():
    from evdecode.decoders.mlp import batchnorm_forward

    z = np.random.default_rng(0).normal(size=(5, 3))
    y, _ = batchnorm_forward(z, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), train=False)
    np.testing.assert_allclose(y, z / np.sqrt(1 + 1e-5))


def test_stnn_with_b1_equals_nn():
    nn = MLPDecoder.init(10, 3)
    st = MLPDecoder.init(10, 3, kind="ST_NN")
    X = np.random.default_rng(0).poisson(2, size=(6, 10))
    assert np.array_equal(nn.forward(X)[0], st.forward(X)[0])


def test_width_mismatch():
    with pytest.raises(DomainError):
        MLPDecoder.init(96 * 8, 0, kind="ST_NN").forward(np.zeros((1, 96 * 7)))
    with pytest.raises(DomainError):
        LSTMDecoder.init(5, 0).forward(np.zeros((1, 1, 6)))


# --- LSTM ---------------------------------------------------------------------


def test_lstm_zero_params():
    m = LSTMDecoder.init(5, 0)
    for v in m.params.values():
        v[:] = 0
    out, cache = m.forward(np.ones((4, 1, 5)))
    assert not out.any()
    # zero gates: c stays 0, h stays 0
    assert not cache["hs"].any()


def test_lstm_single_step_gate_oracle():
    m = LSTMDecoder.init(3, 7, hidden=4).astype(np.float64)
    rng = np.random.default_rng(2)
    x = rng.normal(size=3)
    h0, c0 = rng.normal(size=4), rng.normal(size=4)
    P = m.params
    H = 4

    def gate(k, f):
        rows = slice(k * H, (k + 1) * H)
        return f(P["lstm.Wx"][rows] @ x + P["lstm.Wh"][rows] @ h0 + P["lstm.b"][rows])

    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    i, f, g, o = gate(0, sig), gate(1, sig), gate(2, np.tanh), gate(3, sig)
    c1 = f * c0 + i * g
    h1 = o * np.tanh(c1)
    ref = P["head.W"] @ h1 + P["head.b"]
    out, cache = m.forward(x[None, None], state={"h": h0[None], "c": c0[None]})
    np.testing.assert_allclose(out[0, 0], ref, atol=1e-10)
    np.testing.assert_allclose(cache["state"]["c"][0], c1, atol=1e-10)


@pytest.mark.parametrize("cls", [LSTMDecoder, SNNDecoder])
def test_chunking_equals_one_shot(cls):
    rng = np.random.default_rng(5)
    m = cls.init(8, 1)
    X = (rng.random((30, 3, 8)) < 0.3).astype(np.float32)
    full, _ = m.forward(X)
    a, ca = m.forward(X[:11])
    b, _ = m.forward(X[11:], state=ca["state"])
    assert np.array_equal(np.concatenate([a, b]), full)


@pytest.mark.parametrize("kind", ["LSTM", "SNN"])
def test_predict_chunking(kind):
    rng = np.random.default_rng(0)
    m = LSTMDecoder.init(6, 0) if kind == "LSTM" else SNNDecoder.init(6, 0)
    ff = frame((rng.random((40, 6)) < 0.3), mode="binary" if kind == "SNN" else "frame")
    full = predict(m, ff)
    p1, st = predict(m, ff.subset(np.arange(40) < 17), return_state=True)
    p2 = predict(m, ff.subset(np.arange(40) >= 17), state=st)
    assert np.array_equal(np.concatenate([p1, p2]), full)
    assert np.array_equal(predict(m, ff), full)


def test_sigmoid_stable():
    assert sigmoid(np.array([-1000.0]))[0] == 0.0 and sigmoid(np.array([1000.0]))[0] == 1.0


# --- LIF / SNN ----------------------------------------------------------------


def test_lif_hand_trace():
    layer = LIFLayer(np.eye(1), beta=0.5, u_thr=0.8, reset_mode=RESET_TO_ZERO)
    U, S = [], []
    for d in (1.0, 0.4, 0.0):
        s, u = lif_step(layer, [d])
        U.append(u[0])
        S.append(s[0])
    assert U == [1.0, 0.0, 0.0] and S == [1.0, 0.0, 0.0]


def test_lif_pure_decay():
    layer = LIFLayer(np.eye(1), beta=0.5, u_thr=10.0, reset_mode=NO_RESET, U=np.array([1.0]))
    assert [lif_step(layer, [0.0])[1][0] for _ in range(3)] == [0.5, 0.25, 0.125]


def test_lif_threshold_is_strict():
    layer = LIFLayer(np.eye(1), beta=0.5, u_thr=0.8)
    s, u = lif_step(layer, [0.8])
    assert u[0] == 0.8 and s[0] == 0.0


def test_lif_reset_to_zero_property():
    rng = np.random.default_rng(0)
    layer = LIFLayer(rng.normal(size=(20, 6)), beta=0.7, u_thr=0.3)
    for _ in range(200):
        prev = layer.S.copy()
        _, u = lif_step(layer, (rng.random(6) < 0.5).astype(float))
        assert np.all(u[prev == 1] == 0.0)


def test_lif_beta_bounds():
    with pytest.raises(DomainError):
        LIFLayer(np.eye(1), beta=1.0, u_thr=1.0)


def test_surrogate_examples():
    assert surrogate_grad(0.0, 2.0) == 1.0
    v = np.linspace(-3, 3, 61)
    assert np.array_equal(surrogate_grad(v), surrogate_grad(-v))
    h = 1e-5
    for a in (0.5, 2.0, 5.0):
        fd = (smooth_spike(v + h, a) - smooth_spike(v - h, a)) / (2 * h)
        np.testing.assert_allclose(surrogate_grad(v, a), fd, atol=1e-6)


def _tiny_snn():
    m = SNNDecoder.init(2, 0, hidden=(2, 2)).astype(np.float64)
    m.params["fc1.W"][:] = [[1.2, 0.0], [0.5, 0.0]]
    m.params["fc2.W"][:] = [[2.0, 0.0], [0.0, 1.0]]
    m.params["fc3.W"][:] = [[1.5, 0.0], [0.0, -1.0]]
    for i, b in zip((1, 2, 3), (0.5, 0.5, 0.5)):
        m.params[f"lif{i}.beta_logit"][:] = np.log(b / (1 - b))
        m.params[f"lif{i}.threshold"][:] = 1.0
    m.params["out.scale"][:] = [2.0, 3.0]
    return m


def test_snn_single_spike_hand_trace():
    m = _tiny_snn()
    X = np.zeros((4, 1, 2))
    X[0, 0, 0] = 1
    out, cache = m.forward(X)
    # layer 1: U=[1.2, 0.5] -> spike [1,0]; then reset/decay: [0, 0.25], [0, 0.125], ...
    np.testing.assert_array_equal(cache["layers"][0]["U"][:, 0], [[1.2, 0.5], [0.0, 0.25], [0.0, 0.125], [0.0, 0.0625]])
    # spikes reach the next layer in the same step: layer 2 drive [2, 0] at t=0
    np.testing.assert_array_equal(cache["layers"][1]["U"][:, 0, 0], [2.0, 0.0, 0.0, 0.0])
    # layer 3 (no reset) receives 1.5 at t=0 then decays by 0.5
    np.testing.assert_array_equal(cache["layers"][2]["U"][:, 0, 0], [1.5, 0.75, 0.375, 0.1875])
    np.testing.assert_array_equal(out[:, 0, 0], [3.0, 1.5, 0.75, 0.375])
    assert not out[:, 0, 1].any()


def test_snn_zero_input_zero_output():
    m = SNNDecoder.init(96, 0)
    out, _ = m.forward(np.zeros((50, 2, 96)))
    assert not out.any()


def test_snn_rejects_non_binary():
    with pytest.raises(DomainError):
        SNNDecoder.init(3, 0).forward(np.full((2, 1, 3), 2.0))


def test_snn_selective_sums_use_no_multiplications():
    rng = np.random.default_rng(0)
    m = SNNDecoder.init(96, 0)
    X = (rng.random((25, 1, 96)) < 0.1).astype(np.float32)
    c = OpCounter()
    a, _ = m.forward(X, counter=c)
    b, _ = m.forward(X)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-5)
    assert c.mults == 0 and c.macs == 0 and c.acs > 0


# --- linear baseline ----------------------------------------------------------


def test_linear_exact_recovery():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 4))
    W = rng.normal(size=(2, 4))
    Y = X @ W.T + [0.5, -1.0]
    m = linear_fit(X, Y, 0.0)
    np.testing.assert_allclose(m.params["W"], W, atol=1e-8)
    from evdecode.metrics import r2_xy

    assert r2_xy(Y, m.forward(X)[0])[2] == pytest.approx(1.0, abs=1e-12)


def test_linear_large_lambda_predicts_mean():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(30, 3)), rng.normal(size=(30, 2))
    m = linear_fit(X, Y, 1e12)
    assert np.abs(m.params["W"]).max() < 1e-9
    np.testing.assert_allclose(m.forward(X)[0], np.tile(Y.mean(0), (30, 1)), atol=1e-8)


def test_linear_matches_normal_equations():
    rng = np.random.default_rng(2)
    X, Y, lam = rng.normal(size=(20, 5)), rng.normal(size=(20, 2)), 0.3
    m = linear_fit(X, Y, lam)
    Xa = np.hstack([X, np.ones((20, 1))])
    R = lam * np.eye(6)
    R[5, 5] = 0  # intercept not penalized
    sol = np.linalg.solve(Xa.T @ Xa + R, Xa.T @ Y)
    np.testing.assert_allclose(m.params["W"], sol[:5].T, atol=1e-8)
    np.testing.assert_allclose(m.params["b"], sol[5], atol=1e-8)
    np.testing.assert_allclose(m.forward(X)[0], X @ m.params["W"].T + m.params["b"], atol=1e-12)


def test_linear_singular_at_zero_lambda():
    X = np.ones((10, 3))
    with pytest.raises(NumericError):
        linear_fit(X, np.random.default_rng(0).normal(size=(10, 2)), 0.0)


# --- optimizer and training ---------------------------------------------------


def test_cosine_schedule():
    assert cosine_lr(0.005, 0, 50) == 0.005
    assert cosine_lr(0.005, 25, 50) == pytest.approx(0.0025)
    assert cosine_lr(0.005, 50, 50) == pytest.approx(0.0)


def test_adamw_decay_only_on_listed_keys():
    p = {"W": np.ones((2, 2)), "b": np.ones(2)}
    opt = AdamW(p, lr=0.1, weight_decay=0.5, decay_keys=["W"])
    opt.step({"W": np.zeros((2, 2)), "b": np.zeros(2)})
    assert np.allclose(p["W"], 0.95) and np.array_equal(p["b"], np.ones(2))


def test_lr_zero_epoch_leaves_params_unchanged():
    rng = np.random.default_rng(0)
    ff = frame(rng.poisson(2, size=(160, 10)))
    m0 = MLPDecoder.init(10, 5)
    m, _ = train("NN", ff, split_reaches(8), TrainConfig(epochs=1, lr=0.0), seed=5)
    for k in m0.params:
        assert np.array_equal(m.params[k], m0.params[k])


def test_overfit_32_samples():
    rng = np.random.default_rng(0)
    X = rng.poisson(3, size=(64, 96))
    ff = frame(X, reach_ids=np.r_[np.zeros(32, int), np.ones(16, int), np.full(16, 2), np.full(0, 3)].tolist() + [])
    split = type(split_reaches(4))((0,), (1,), (2,))
    cfg = TrainConfig(epochs=500, dropout=0.0, weight_decay=0.0, batch_size=512)
    m, hist = train("NN", ff, split, cfg, seed=0)
    assert hist[-1]["train_loss"] < 1e-3


@pytest.mark.parametrize("kind", ["NN", "LSTM", "SNN", "LINEAR"])
def test_training_is_deterministic(kind):
    rng = np.random.default_rng(1)
    ff = frame((rng.random((240, 12)) < 0.3), mode="binary" if kind == "SNN" else "frame")
    cfg = TrainConfig(epochs=3)
    a, ha = train(kind, ff, split_reaches(8), cfg, seed=4)
    b, hb = train(kind, ff, split_reaches(8), cfg, seed=4)
    assert ha == hb
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])


def test_train_rejects_mode_mismatch_and_empty_parts():
    ff = frame(np.zeros((80, 4)))
    with pytest.raises(ConfigError):
        train("SNN", ff, split_reaches(8))
    with pytest.raises(ConfigError):
        train("NN", ff, type(split_reaches(4))((0,), (), (1,)))
    with pytest.raises(ConfigError):
        predict(SNNDecoder.init(4, 0), ff)


def test_training_log_and_checkpoint():
    rng = np.random.default_rng(2)
    X = rng.poisson(2, size=(320, 8)).astype(float)
    Y = X[:, :2] - X[:, 2:4] + 0.1 * rng.normal(size=(320, 2))
    ff = frame(X, Y)
    m, hist = train("NN", ff, split_reaches(8), TrainConfig(epochs=6), seed=0)
    assert [h["epoch"] for h in hist] == list(range(6))
    assert all({"lr", "train_loss", "val_r2"} <= set(h) for h in hist)
    best = max(range(6), key=lambda e: hist[e]["val_r2"])
    assert m.meta["train"]["best_epoch"] == best


@pytest.mark.parametrize("make", [
    lambda: MLPDecoder.init(7, 1),
    lambda: MLPDecoder.init(14, 1, kind="ST_NN"),
    lambda: LSTMDecoder.init(7, 1),
    lambda: SNNDecoder.init(7, 1),
    lambda: linear_fit(np.random.default_rng(0).normal(size=(9, 7)), np.random.default_rng(1).normal(size=(9, 2))),
])
def test_model_file_roundtrip(tmp_path, make):
    m = make()
    m.meta["config_hash"] = "deadbeef"
    save_model(m, tmp_path / "m.ndec")
    back = load_model(tmp_path / "m.ndec")
    assert back.kind == m.kind and back.meta == m.meta
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k].astype(np.float32))
    for k in m.buffers:
        assert np.array_equal(back.buffers[k], m.buffers[k])


class TestFunctionalForms:
    def test_single_vector_and_batch_agree(self):
        m = MLPDecoder.init(96, 3)
        X = np.random.default_rng(0).poisson(2.0, (4, 96)).astype(np.float32)
        batch, _ = forward_nn(m, X)
        one, _ = forward_nn(m, X[2])
        assert one.shape == (2,)
        np.testing.assert_allclose(one, batch[2], rtol=1e-5)  # float32 GEMM rounding varies with row count
        st = MLPDecoder.init(96 * 8, 3, kind="ST_NN")
        assert forward_stnn(st, np.ones(96 * 8, np.float32))[0].shape == (2,)
        with pytest.raises(TypeError):
            forward_nn(st, np.ones(96 * 8))

    @pytest.mark.parametrize("kind", ["LSTM", "SNN"])
    def test_sequence_state_continues(self, kind):
        fwd = forward_lstm if kind == "LSTM" else forward_snn
        m = (LSTMDecoder if kind == "LSTM" else SNNDecoder).init(96, 1)
        X = (np.random.default_rng(1).random((9, 96)) < 0.3).astype(np.float32)
        whole, _ = fwd(m, X)
        a, st = fwd(m, X[:4])
        b, _ = fwd(m, X[4:], st)
        assert whole.shape == (9, 2)
        np.testing.assert_array_equal(np.concatenate([a, b]), whole)

    def test_backward_matches_method(self):
        m = MLPDecoder.init(96, 0).astype(np.float64)
        X = np.random.default_rng(2).poisson(2.0, (6, 96))
        out, cache = m.forward(X)
        g = np.ones_like(out)
        ref = m.backward(cache, g)
        got = backward(m, cache, g)
        assert all(np.array_equal(ref[k], got[k]) for k in ref)
