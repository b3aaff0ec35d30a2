"""Numeric kernels for the parsing network: 3x3 convolutions and pixel
rearrangement.

Two interchangeable backends implement the convolution kernels:

* ``numba``: jitted explicit loops (the default when numba imports).
* ``numpy``: im2col expansion plus BLAS matmul.

The backend is selected once at import from the ``FREQBLEND_KERNELS``
environment variable (``auto`` | ``numba`` | ``numpy``). Both backends
compute identical quantities in float64; ``benchmarks/kernel_bench.py``
compares their throughput.

All convolutions use a 3x3 kernel with padding 1, stride 1 or 2, on
channels-first ``(c, h, w)`` arrays.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "conv3x3_forward",
    "conv3x3_backward",
    "conv3x3_forward_numpy",
    "conv3x3_backward_numpy",
    "conv3x3_forward_numba",
    "conv3x3_backward_numba",
    "depth_to_space",
    "space_to_depth",
    "conv_output_size",
]

_PAD = 1
_K = 3


def conv_output_size(n: int, stride: int) -> int:
    return (n + 2 * _PAD - _K) // stride + 1


def _pad(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * _PAD, w + 2 * _PAD), dtype=np.float64)
    xp[:, _PAD:-_PAD, _PAD:-_PAD] = x
    return xp


# ---------------------------------------------------------------------------
# numpy backend: im2col + BLAS
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, 9, ho * wo), dtype=np.float64)
    for ky in range(_K):
        for kx in range(_K):
            patch = xp[:, ky:ky + ho * stride:stride, kx:kx + wo * stride:stride]
            cols[:, ky * _K + kx, :] = patch.reshape(c, -1)
    return cols.reshape(c * 9, ho * wo)


def conv3x3_forward_numpy(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    _, h, wd = x.shape
    ho, wo = conv_output_size(h, stride), conv_output_size(wd, stride)
    cols = _im2col(_pad(x), stride, ho, wo)
    out = w.reshape(w.shape[0], -1) @ cols
    return out.reshape(w.shape[0], ho, wo) + b[:, None, None]


def conv3x3_backward_numpy(x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int):
    c, h, wd = x.shape
    o, ho, wo = dout.shape
    cols = _im2col(_pad(x), stride, ho, wo)
    g = dout.reshape(o, -1)
    db = g.sum(axis=1)
    dw = (g @ cols.T).reshape(w.shape)
    dcols = (w.reshape(o, -1).T @ g).reshape(c, 9, ho, wo)
    dxp = np.zeros((c, h + 2 * _PAD, wd + 2 * _PAD), dtype=np.float64)
    for ky in range(_K):
        for kx in range(_K):
            dxp[:, ky:ky + ho * stride:stride, kx:kx + wo * stride:stride] += dcols[:, ky * _K + kx]
    dx = np.ascontiguousarray(dxp[:, _PAD:-_PAD, _PAD:-_PAD])
    return dx, dw, db


# ---------------------------------------------------------------------------
# numba backend: jitted loops
# ---------------------------------------------------------------------------

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

if HAVE_NUMBA:
    # Channels sit in the fastest-varying axis inside the jitted loops so the
    # innermost updates run over contiguous memory and vectorize.

    @njit(cache=True)
    def _conv_fwd_nb(xp_t, wt, b, stride, tmp):
        # xp_t: (hp, wp, c), wt: (c, 3, 3, o), tmp: (ho, wo, o)
        ho, wo, oc = tmp.shape
        c = xp_t.shape[2]
        for y in range(ho):
            for x in range(wo):
                row = tmp[y, x]
                for o in range(oc):
                    row[o] = b[o]
                for ky in range(3):
                    yy = y * stride + ky
                    for kx in range(3):
                        base = xp_t[yy, x * stride + kx]
                        for i in range(c):
                            v = base[i]
                            wrow = wt[i, ky, kx]
                            for o in range(oc):
                                row[o] += v * wrow[o]

    @njit(cache=True)
    def _conv_bwd_nb(xp_t, wt, dout_t, stride, dwt, dxp_t, db):
        ho, wo, oc = dout_t.shape
        c = xp_t.shape[2]
        for y in range(ho):
            for x in range(wo):
                g = dout_t[y, x]
                for o in range(oc):
                    db[o] += g[o]
                for ky in range(3):
                    yy = y * stride + ky
                    for kx in range(3):
                        xx = x * stride + kx
                        base = xp_t[yy, xx]
                        dbase = dxp_t[yy, xx]
                        for i in range(c):
                            v = base[i]
                            wrow = wt[i, ky, kx]
                            drow = dwt[i, ky, kx]
                            acc = 0.0
                            for o in range(oc):
                                go = g[o]
                                drow[o] += v * go
                                acc += wrow[o] * go
                            dbase[i] += acc

    def conv3x3_forward_numba(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
        _, h, wd = x.shape
        ho, wo = conv_output_size(h, stride), conv_output_size(wd, stride)
        xp_t = np.ascontiguousarray(_pad(x).transpose(1, 2, 0))
        wt = np.ascontiguousarray(w.transpose(1, 2, 3, 0))
        tmp = np.empty((ho, wo, w.shape[0]), dtype=np.float64)
        _conv_fwd_nb(xp_t, wt, b, stride, tmp)
        return np.ascontiguousarray(tmp.transpose(2, 0, 1))

    def conv3x3_backward_numba(x: np.ndarray, w: np.ndarray, dout: np.ndarray, stride: int):
        c, h, wd = x.shape
        xp_t = np.ascontiguousarray(_pad(x).transpose(1, 2, 0))
        wt = np.ascontiguousarray(w.transpose(1, 2, 3, 0))
        dout_t = np.ascontiguousarray(dout.transpose(1, 2, 0))
        dwt = np.zeros((c, 3, 3, w.shape[0]), dtype=np.float64)
        dxp_t = np.zeros((h + 2 * _PAD, wd + 2 * _PAD, c), dtype=np.float64)
        db = np.zeros(w.shape[0], dtype=np.float64)
        _conv_bwd_nb(xp_t, wt, dout_t, stride, dwt, dxp_t, db)
        dw = np.ascontiguousarray(dwt.transpose(3, 0, 1, 2))
        dx = np.ascontiguousarray(dxp_t[_PAD:-_PAD, _PAD:-_PAD, :].transpose(2, 0, 1))
        return dx, dw, db

else:  # pragma: no cover
    conv3x3_forward_numba = None
    conv3x3_backward_numba = None


def _select_backend() -> str:
    requested = os.environ.get("FREQBLEND_KERNELS", "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(f"FREQBLEND_KERNELS must be auto, numba or numpy, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("FREQBLEND_KERNELS=numba but numba is not importable")
    if requested == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return requested


BACKEND = _select_backend()

if BACKEND == "numba":
    conv3x3_forward = conv3x3_forward_numba
    conv3x3_backward = conv3x3_backward_numba
else:
    conv3x3_forward = conv3x3_forward_numpy
    conv3x3_backward = conv3x3_backward_numpy


# ---------------------------------------------------------------------------
# pixel rearrangement (identical on both backends)
# ---------------------------------------------------------------------------

def depth_to_space(x: np.ndarray) -> np.ndarray:
    """Rearrange (4c, h, w) channel blocks into a (c, 2h, 2w) grid.

    out[ch, 2i + di, 2j + dj] = in[4*ch + 2*di + dj, i, j]
    """
    c4, h, w = x.shape
    if c4 % 4 != 0:
        raise ValueError(f"channel count must be divisible by 4, got {c4}")
    c = c4 // 4
    return x.reshape(c, 2, 2, h, w).transpose(0, 3, 1, 4, 2).reshape(c, 2 * h, 2 * w)


def space_to_depth(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`depth_to_space`."""
    c, h2, w2 = y.shape
    if h2 % 2 != 0 or w2 % 2 != 0:
        raise ValueError(f"spatial dims must be even, got {h2}x{w2}")
    h, w = h2 // 2, w2 // 2
    return np.ascontiguousarray(
        y.reshape(c, h, 2, w, 2).transpose(0, 2, 4, 1, 3).reshape(4 * c, h, w)
    )
