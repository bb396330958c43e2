import numpy as np
import pytest

from kinetic_age import kernels
from kinetic_age.kernels import numpy_backend

cython_backend = kernels.cython_backend
needs_ext = pytest.mark.skipif(cython_backend is None,
                               reason="compiled kernel extension not built")


def _random_case(rng, dtype, n=3, c_in=5, c_out=4, t=20, v=18, k=5):
    x = rng.standard_normal((n, c_in, t, v)).astype(dtype)
    w = rng.standard_normal((c_out, c_in, k)).astype(dtype)
    b = rng.standard_normal(c_out).astype(dtype)
    dy = rng.standard_normal((n, c_out, t, v)).astype(dtype)
    return x, w, b, dy


def test_numpy_backend_shapes(rng):
    x, w, b, dy = _random_case(rng, np.float64)
    y = numpy_backend.temporal_conv_forward(x, w, b)
    assert y.shape == dy.shape
    dx, dw, db = numpy_backend.temporal_conv_backward(x, w, dy)
    assert dx.shape == x.shape and dw.shape == w.shape and db.shape == b.shape


@needs_ext
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-11), (np.float32, 1e-3)])
@pytest.mark.parametrize("k", [1, 3, 7, 13, 17])
def test_backends_agree(dtype, tol, k, rng):
    x, w, b, dy = _random_case(rng, dtype, k=k, t=max(k, 12))
    y_np = numpy_backend.temporal_conv_forward(x, w, b)
    y_cy = cython_backend.temporal_conv_forward(x, w, b)
    assert np.abs(y_np - y_cy).max() < tol
    g_np = numpy_backend.temporal_conv_backward(x, w, dy)
    g_cy = cython_backend.temporal_conv_backward(x, w, dy)
    for a, b_ in zip(g_np, g_cy):
        assert np.abs(a - b_).max() < tol * 10


@needs_ext
def test_backends_agree_generic_joint_count(rng):
    # joint counts other than 18 take the unspecialized code path
    x, w, b, dy = _random_case(rng, np.float64, v=7)
    assert np.allclose(numpy_backend.temporal_conv_forward(x, w, b),
                       cython_backend.temporal_conv_forward(x, w, b), atol=1e-12)


@needs_ext
def test_backend_selection_env():
    assert kernels.BACKEND_NAME in ("numpy", "cython")
    assert kernels.active_backend.temporal_conv_forward is kernels.temporal_conv_forward


def test_conv_even_kernels_unsupported_by_layers(rng):
    from kinetic_age.model.layers import TemporalConv

    with pytest.raises(ValueError):
        TemporalConv(4, 4, 4, rng)
