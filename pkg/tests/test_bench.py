import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evdecode.bench import MetricsReport, count_ops, lstm_step_ops, memory_traffic, model_size, report
from evdecode.decoders import LSTMDecoder, MLPDecoder, SNNDecoder, linear_fit
from evdecode.errors import DomainError
from evdecode.features import FeatureConfig, FeatureFrame
from evdecode.metrics import r2_score, r2_xy

vecs = arrays(np.float64, st.integers(2, 40), elements=st.floats(-1e3, 1e3, allow_nan=False))


def ff_of(X, mode="frame"):
    X = np.asarray(X, dtype=np.float32)
    n = len(X)
    cfg = FeatureConfig(4, 4, 1, "binary") if mode == "binary" else FeatureConfig(200, 4, 1, mode)
    Y = np.column_stack([np.arange(n), np.arange(n) ** 2]).astype(float)
    return FeatureFrame(np.arange(n, dtype=np.int64), X, Y, np.zeros(n, dtype=np.int64), cfg, X.shape[1])


def dense_nn(seed=0):
    """NN whose hidden activations are strictly positive, so every layer input is dense."""
    m = MLPDecoder.init(96, seed)
    for i in (1, 2):
        m.params[f"bn{i}.gain"][:] = 0.0
        m.params[f"bn{i}.shift"][:] = 1.0
    return m


class TestR2:
    def test_examples(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2_score(y, y) == 1.0
        assert r2_score(y, np.full(3, y.mean())) == 0.0
        assert r2_score(y, [1, 2, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_unclamped(self):
        assert r2_score([1, 2, 3], [3, 2, 1]) == pytest.approx(-3.0)

    def test_errors(self):
        with pytest.raises(DomainError):
            r2_score([1, 1, 1], [1, 2, 3])
        with pytest.raises(DomainError):
            r2_score([1], [1])
        with pytest.raises(DomainError):
            r2_score([1, 2], [1, 2, 3])

    @given(vecs, st.floats(-50, 50).filter(lambda a: abs(a) > 1e-2), st.floats(-100, 100), st.data())
    def test_affine_invariance(self, y, a, b, data):
        yh = data.draw(arrays(np.float64, len(y), elements=st.floats(-1e3, 1e3, allow_nan=False)))
        assume(np.ptp(y) > 1e-3)
        assert r2_score(a * y + b, a * yh + b) == pytest.approx(r2_score(y, yh), rel=1e-9, abs=1e-9)

    def test_xy(self):
        Y = np.column_stack([np.arange(10.0), np.arange(10.0) ** 2])
        assert r2_xy(Y, Y) == (1.0, 1.0, 1.0)
        rng = np.random.default_rng(0)
        P = Y + rng.normal(size=Y.shape)
        rx, ry, m = r2_xy(Y, P)
        assert m == (rx + ry) / 2
        assert r2_xy(Y[:, ::-1], P[:, ::-1])[2] == m


class TestOps:
    def test_dense_nn_4704(self):
        rng = np.random.default_rng(0)
        ops = count_ops(dense_nn(), ff_of(rng.uniform(1, 5, size=(20, 96))))
        assert ops["macs"] == 96 * 32 + 32 * 48 + 48 * 2 == 4704
        assert ops["acs"] == 32 + 48 + 2
        assert ops["sparsity"] == 0

    def test_half_sparse_first_layer(self):
        X = np.ones((4, 96))
        X[:, ::2] = 0
        ops = count_ops(dense_nn(), ff_of(X))
        assert ops["macs"] == 48 * 32 + 32 * 48 + 48 * 2

    def test_snn_three_spikes(self):
        m = SNNDecoder.init(96, 0)
        m.params["fc1.W"][:] = 0  # keep the hidden layers silent to isolate layer 1
        x = np.zeros((1, 96))
        x[0, [3, 40, 77]] = 1
        ops = count_ops(m, ff_of(x, "binary"))
        assert ops["acs"] == 96 and ops["macs"] == 0 and ops["multiplications"] == 0

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_snn_never_macs(self, seed, p):
        rng = np.random.default_rng(seed)
        ops = count_ops(SNNDecoder.init(96, seed % 7), ff_of(rng.random((8, 96)) < p, "binary"))
        assert ops["macs"] == 0 and ops["multiplications"] == 0
        assert 0 <= ops["sparsity"] <= 1

    def test_lstm_counts(self):
        assert lstm_step_ops(96, 32) == (4 * 32 * (96 + 32) + 32 * 2, 4 * 32 + 2)
        ops = count_ops(LSTMDecoder.init(96, 0), ff_of(np.zeros((3, 96))))
        assert ops["macs"] == 16448 and ops["acs"] == 130 and ops["sparsity"] == 0

    def test_monotone_in_nonzeros(self):
        rng = np.random.default_rng(1)
        m = dense_nn()
        X = rng.uniform(1, 3, size=(1, 96))
        prev = -1
        for k in range(0, 97, 8):
            Z = X.copy()
            Z[0, k:] = 0
            macs = count_ops(m, ff_of(Z))["macs"]
            assert macs >= prev
            prev = macs

    def test_linear_counts(self):
        rng = np.random.default_rng(0)
        lin = linear_fit(rng.normal(size=(20, 96)), rng.normal(size=(20, 2)))
        assert count_ops(lin, ff_of(np.ones((2, 96))))["macs"] == 192


class TestMemoryAndSize:
    def test_memory_proxy(self):
        assert memory_traffic(0, 0) == 0
        assert memory_traffic(4704, 0, 32) == pytest.approx(150.528)
        assert memory_traffic(0, 640, 32) == pytest.approx(20.48)

    def test_size_arithmetic(self):
        lin = linear_fit(np.random.default_rng(0).normal(size=(1000, 499)), np.zeros((1000, 2)) + np.arange(1000)[:, None])
        assert lin.n_parameters() == 1000
        assert model_size(lin) == 4.0

    def test_inventories(self):
        nn = MLPDecoder.init(96, 0)
        assert nn.n_parameters() == 4786 + 160 + 160
        snn = SNNDecoder.init(96, 0)
        assert snn.n_parameters() == 4704 + 6 + 2
        assert LSTMDecoder.init(96, 0).n_parameters() == 4 * 32 * (96 + 32 + 1) + 66

    def test_size_independent_of_data(self):
        m = MLPDecoder.init(96, 0)
        rng = np.random.default_rng(0)
        a = report(m, ff_of(rng.poisson(1, (10, 96)))).model_size_kb
        b = report(m, ff_of(rng.poisson(9, (30, 96)))).model_size_kb
        assert a == b == model_size(m)


def test_report_fields():
    rng = np.random.default_rng(0)
    r = report(SNNDecoder.init(96, 0), ff_of(rng.random((20, 96)) < 0.1, "binary"), compression_ratio=math.inf)
    assert isinstance(r, MetricsReport)
    assert r.r2_mean == (r.r2_x + r.r2_y) / 2
    d = r.to_dict()
    assert d["compression_ratio"] == "inf" and d["macs_per_inference"] == 0
