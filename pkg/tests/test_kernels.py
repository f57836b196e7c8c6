import numpy as np
import pytest

import kgan._kernels as kernels
from kgan._kernels import fallback


def _random_step(rng, dtype, B=6, H=5):
    pre = rng.normal(size=(B, 4 * H)).astype(dtype)
    c_prev = rng.normal(size=(B, H)).astype(dtype)
    h_prev = rng.normal(size=(B, H)).astype(dtype)
    mask = (rng.random(B) < 0.7).astype(dtype)
    return pre, c_prev, h_prev, mask


@pytest.mark.skipif(kernels.BACKEND != "ext", reason="compiled extension not built")
class TestBackendAgreement:
    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-14), (np.float32, 1e-6)])
    def test_forward_matches_fallback(self, dtype, tol):
        rng = np.random.default_rng(0)
        args = _random_step(rng, dtype)
        ext_out = kernels.cell_forward(*args)
        ref_out = fallback.cell_forward(*args)
        for e, r in zip(ext_out, ref_out):
            assert e.dtype == dtype
            assert np.abs(e - r).max() < tol

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-14), (np.float32, 1e-6)])
    def test_backward_matches_fallback(self, dtype, tol):
        rng = np.random.default_rng(1)
        pre, c_prev, h_prev, mask = _random_step(rng, dtype)
        _, _, gates, tanh_c = fallback.cell_forward(pre, c_prev, h_prev, mask)
        dh = rng.normal(size=c_prev.shape).astype(dtype)
        dc = rng.normal(size=c_prev.shape).astype(dtype)
        ext_out = kernels.cell_backward(gates, tanh_c, c_prev, mask, dh, dc)
        ref_out = fallback.cell_backward(gates, tanh_c, c_prev, mask, dh, dc)
        for e, r in zip(ext_out, ref_out):
            assert np.abs(e - r).max() < tol


class TestMaskSemantics:
    def test_masked_rows_carry_state_through(self):
        rng = np.random.default_rng(2)
        pre, c_prev, h_prev, _ = _random_step(rng, np.float64)
        mask = np.zeros(pre.shape[0])
        h, c, gates, tanh_c = fallback.cell_forward(pre, c_prev, h_prev, mask)
        assert (h == h_prev).all() and (c == c_prev).all()

    def test_masked_rows_emit_zero_dpre(self):
        rng = np.random.default_rng(3)
        pre, c_prev, h_prev, _ = _random_step(rng, np.float64)
        mask = np.zeros(pre.shape[0])
        _, _, gates, tanh_c = fallback.cell_forward(pre, c_prev, h_prev, mask)
        dh = rng.normal(size=c_prev.shape)
        dc = rng.normal(size=c_prev.shape)
        dpre, dh_prev, dc_prev = fallback.cell_backward(gates, tanh_c, c_prev, mask, dh, dc)
        assert (dpre == 0).all()
        assert (dh_prev == dh).all() and (dc_prev == dc).all()

    def test_unmasked_forward_formula(self):
        # one cell step against a scalar re-derivation
        rng = np.random.default_rng(4)
        pre, c_prev, h_prev, _ = _random_step(rng, np.float64, B=1, H=3)
        mask = np.ones(1)
        h, c, gates, tanh_c = fallback.cell_forward(pre, c_prev, h_prev, mask)
        sig = lambda x: 1.0 / (1.0 + np.exp(-x))
        i, f, o = sig(pre[0, :3]), sig(pre[0, 3:6]), sig(pre[0, 6:9])
        g = np.tanh(pre[0, 9:])
        c_want = f * c_prev[0] + i * g
        assert c[0] == pytest.approx(c_want)
        assert h[0] == pytest.approx(o * np.tanh(c_want))
