"""Convolution kernels against a direct-summation oracle, both backends."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groupdecode.nn.backend import (
    _np_backward,
    _np_forward,
    backend_name,
    compiled_available,
    conv1d_backward,
    conv1d_forward,
)
from reference_impls import naive_conv1d


def batched_naive(x, w, b, dilation):
    return np.stack([naive_conv1d(xi, w, b, dilation) for xi in x])


class TestForward:
    def test_two_tap_dilated_example(self):
        # left pad d*(K-1)=2 zeros; tap j=0 reads the older sample
        x = np.array([[1.0, 2.0, 3.0, 4.0]])
        w = np.array([[[1.0, 1.0]]])
        y = conv1d_forward(x, w, dilation=2)
        assert np.allclose(y, [[1.0, 2.0, 4.0, 6.0]])

    def test_single_tap_identity(self):
        x = np.random.default_rng(0).standard_normal((2, 3, 8))
        w = np.eye(3)[:, :, None]
        assert np.allclose(conv1d_forward(x, w), x)

    def test_bias_broadcast(self):
        x = np.zeros((1, 2, 4))
        w = np.zeros((3, 2, 2))
        b = np.array([1.0, -2.0, 0.5])
        y = conv1d_forward(x, w, b, dilation=1)
        assert np.allclose(y, b[None, :, None] * np.ones((1, 3, 4)))

    @pytest.mark.parametrize("dilation", [1, 2, 4])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_naive_oracle(self, dilation, k):
        rng = np.random.default_rng(dilation * 10 + k)
        x = rng.standard_normal((3, 4, 16))
        w = rng.standard_normal((5, 4, k))
        b = rng.standard_normal(5)
        got = conv1d_forward(x, w, b, dilation)
        ref = batched_naive(x, w, b, dilation)
        assert np.allclose(got, ref, atol=1e-12)

    def test_2d_form(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 10))
        w = rng.standard_normal((2, 3, 2))
        y2 = conv1d_forward(x, w, dilation=2)
        y3 = conv1d_forward(x[None], w, dilation=2)
        assert y2.shape == (2, 10)
        assert np.allclose(y2, y3[0])

    def test_causality(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 12))
        w = rng.standard_normal((2, 2, 2))
        y0 = conv1d_forward(x, w, dilation=4)
        bumped = x.copy()
        bumped[0, :, 7] += 10.0
        y1 = conv1d_forward(bumped, w, dilation=4)
        assert np.allclose(y0[:, :, :7], y1[:, :, :7])
        assert not np.allclose(y0[:, :, 7:], y1[:, :, 7:])

    def test_output_length_preserved(self):
        x = np.zeros((1, 1, 9))
        w = np.ones((1, 1, 3))
        assert conv1d_forward(x, w, dilation=3).shape == (1, 1, 9)

    def test_float32_supported(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 2, 8)).astype(np.float32)
        w = rng.standard_normal((2, 2, 2)).astype(np.float32)
        y = conv1d_forward(x, w, dilation=2)
        assert y.dtype == np.float32
        assert np.allclose(y, batched_naive(x, w, np.zeros(2, np.float32), 2), atol=1e-5)

    def test_rejects_integer_dtype(self):
        with pytest.raises(TypeError, match="dtype"):
            conv1d_forward(np.ones((1, 1, 4), dtype=np.int64), np.ones((1, 1, 1)))

    def test_rejects_channel_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            conv1d_forward(np.ones((1, 2, 4)), np.ones((1, 3, 1)))

    def test_rejects_bad_dilation(self):
        with pytest.raises(ValueError, match="dilation"):
            conv1d_forward(np.ones((1, 1, 4)), np.ones((1, 1, 1)), dilation=0)

    @given(
        seed=st.integers(0, 500),
        dilation=st.sampled_from([1, 2, 4]),
    )
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed, dilation):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal((2, 3, 12))
        x2 = rng.standard_normal((2, 3, 12))
        w = rng.standard_normal((4, 3, 2))
        a, bcoef = 0.7, -1.3
        lhs = conv1d_forward(a * x1 + bcoef * x2, w, dilation=dilation)
        rhs = a * conv1d_forward(x1, w, dilation=dilation) + bcoef * conv1d_forward(
            x2, w, dilation=dilation
        )
        assert np.allclose(lhs, rhs, atol=1e-10)


class TestBackward:
    def _numeric_grads(self, x, w, b, dilation, dy, eps=1e-6):
        def loss(xx, ww, bb):
            return float(np.sum(conv1d_forward(xx, ww, bb, dilation) * dy))

        gx = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += eps
            xm[idx] -= eps
            gx[idx] = (loss(xp, w, b) - loss(xm, w, b)) / (2 * eps)
        gw = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            wp, wm = w.copy(), w.copy()
            wp[idx] += eps
            wm[idx] -= eps
            gw[idx] = (loss(x, wp, b) - loss(x, wm, b)) / (2 * eps)
        gb = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            bp, bm = b.copy(), b.copy()
            bp[idx] += eps
            bm[idx] -= eps
            gb[idx] = (loss(x, w, bp) - loss(x, w, bm)) / (2 * eps)
        return gx, gw, gb

    @pytest.mark.parametrize("dilation,k", [(1, 2), (2, 2), (4, 3), (2, 1)])
    def test_matches_central_differences(self, dilation, k):
        rng = np.random.default_rng(dilation + k)
        x = rng.standard_normal((2, 3, 8))
        w = rng.standard_normal((2, 3, k))
        b = rng.standard_normal(2)
        dy = rng.standard_normal((2, 2, 8))
        dx, dw, db = conv1d_backward(x, w, dilation, dy)
        gx, gw, gb = self._numeric_grads(x, w, b, dilation, dy)
        assert np.allclose(dx, gx, atol=1e-8)
        assert np.allclose(dw, gw, atol=1e-8)
        assert np.allclose(db, gb, atol=1e-8)

    def test_dy_shape_checked(self):
        with pytest.raises(ValueError, match="dy shape"):
            conv1d_backward(
                np.ones((1, 2, 4)), np.ones((3, 2, 2)), 1, np.ones((1, 3, 5))
            )

    def test_db_is_dy_sum(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 2, 6))
        w = rng.standard_normal((4, 2, 2))
        dy = rng.standard_normal((3, 4, 6))
        _, _, db = conv1d_backward(x, w, 2, dy)
        assert np.allclose(db, dy.sum(axis=(0, 2)))


class TestBackendParity:
    def test_backend_name_valid(self):
        assert backend_name() in ("compiled", "numpy")

    def test_compiled_extension_built(self):
        # packaging guarantee: the accelerated kernels ship with the wheel
        assert compiled_available()

    def test_active_matches_env(self, monkeypatch):
        import importlib

        import groupdecode.nn.backend as backend_mod

        monkeypatch.setenv("GROUPDECODE_BACKEND", "numpy")
        mod = importlib.reload(backend_mod)
        try:
            assert mod.backend_name() == "numpy"
        finally:
            monkeypatch.delenv("GROUPDECODE_BACKEND")
            importlib.reload(backend_mod)

    def test_unknown_env_value_rejected(self, monkeypatch):
        import importlib

        import groupdecode.nn.backend as backend_mod

        monkeypatch.setenv("GROUPDECODE_BACKEND", "cuda")
        with pytest.raises(ValueError, match="GROUPDECODE_BACKEND"):
            importlib.reload(backend_mod)
        monkeypatch.delenv("GROUPDECODE_BACKEND")
        importlib.reload(backend_mod)

    @pytest.mark.skipif(not compiled_available(), reason="extension not built")
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_forward_parity_with_numpy_reference(self, dtype):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 5, 32)).astype(dtype)
        w = rng.standard_normal((6, 5, 2)).astype(dtype)
        b = rng.standard_normal(6).astype(dtype)
        got = conv1d_forward(x, w, b, 4)
        ref = _np_forward(x, w, b, 4)
        tol = 1e-5 if dtype == np.float32 else 1e-12
        assert np.allclose(got, ref, atol=tol)

    @pytest.mark.skipif(not compiled_available(), reason="extension not built")
    def test_backward_parity_with_numpy_reference(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((3, 4, 16))
        w = rng.standard_normal((5, 4, 2))
        dy = rng.standard_normal((3, 5, 16))
        got = conv1d_backward(x, w, 2, dy)
        ref = _np_backward(x, w, 2, dy)
        for g, r in zip(got, ref):
            assert np.allclose(g, r, atol=1e-12)
