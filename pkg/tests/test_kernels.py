import numpy as np
import pytest

from freqblend import kernels


def _fd_check(x, w, b, stride, seed=0):
    out = kernels.conv3x3_forward_numpy(x, w, b, stride)
    dout = np.random.default_rng(seed).normal(size=out.shape)
    dx, dw, db = kernels.conv3x3_backward_numpy(x, w, dout, stride)

    def loss():
        return float((kernels.conv3x3_forward_numpy(x, w, b, stride) * dout).sum())

    eps = 1e-6
    for arr, grad in ((x, dx), (w, dw), (b, db)):
        flat = arr.reshape(-1)
        gf = grad.reshape(-1)
        for i in range(0, flat.size, max(1, flat.size // 12)):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            assert abs(fd - gf[i]) < 1e-6 * max(1.0, abs(gf[i]))


@pytest.mark.parametrize("stride", [1, 2])
def test_numpy_conv_matches_finite_differences(stride):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 8, 8))
    w = rng.normal(size=(5, 3, 3, 3))
    b = rng.normal(size=5)
    _fd_check(x, w, b, stride)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not importable")
@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("shape", [(3, 8, 8, 5), (7, 12, 10, 4), (16, 4, 4, 32)])
def test_backends_agree(stride, shape):
    c, h, w_, o = shape
    rng = np.random.default_rng(c + o + stride)
    x = rng.normal(size=(c, h, w_))
    w = rng.normal(size=(o, c, 3, 3))
    b = rng.normal(size=o)
    f_np = kernels.conv3x3_forward_numpy(x, w, b, stride)
    f_nb = kernels.conv3x3_forward_numba(x, w, b, stride)
    assert np.allclose(f_np, f_nb, atol=1e-11)
    dout = rng.normal(size=f_np.shape)
    for g_np, g_nb in zip(
        kernels.conv3x3_backward_numpy(x, w, dout, stride),
        kernels.conv3x3_backward_numba(x, w, dout, stride),
    ):
        assert np.allclose(g_np, g_nb, atol=1e-10)


def test_output_size():
    assert kernels.conv_output_size(64, 2) == 32
    assert kernels.conv_output_size(64, 1) == 64
    assert kernels.conv_output_size(1, 1) == 1


def test_depth_to_space_index_formula():
    c, h, w = 2, 3, 4
    x = np.arange(4 * c * h * w, dtype=np.float64).reshape(4 * c, h, w)
    y = kernels.depth_to_space(x)
    assert y.shape == (c, 2 * h, 2 * w)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                for di in range(2):
                    for dj in range(2):
                        assert y[ch, 2 * i + di, 2 * j + dj] == x[4 * ch + 2 * di + dj, i, j]


def test_depth_to_space_roundtrip():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(8, 5, 6))
    assert np.array_equal(kernels.space_to_depth(kernels.depth_to_space(x)), x)
    y = rng.normal(size=(3, 10, 8))
    assert np.array_equal(kernels.depth_to_space(kernels.space_to_depth(y)), y)


def test_rearrangement_rejects_bad_shapes():
    with pytest.raises(ValueError):
        kernels.depth_to_space(np.zeros((6, 4, 4)))
    with pytest.raises(ValueError):
        kernels.space_to_depth(np.zeros((2, 5, 4)))
