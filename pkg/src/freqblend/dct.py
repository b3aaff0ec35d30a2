"""Orthonormal 2D DCT-II and its exact inverse.

The transform is separable and implemented with precomputed basis
matrices: for an n-point axis the basis D has entries

    D[k, i] = s_k * cos(pi * (2i + 1) * k / (2n)),
    s_0 = sqrt(1/n),  s_k = sqrt(2/n) for k >= 1.

D is orthogonal (D @ D.T = I), so the inverse transform is the
transpose and the adjoint of the forward transform equals the inverse.
That makes backprop through the transform trivial: the vector-Jacobian
product of ``dct2`` is ``idct2`` and vice versa.

Arrays are ``(h, w)`` or ``(h, w, channels)`` float64; the transform is
applied per channel and the DC coefficient sits at index ``(0, 0)``.
"""

from functools import lru_cache

import numpy as np

__all__ = ["basis_matrix", "dct2", "idct2", "dct2_vjp", "idct2_vjp"]


@lru_cache(maxsize=64)
def basis_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis for an n-point axis (read-only)."""
    if n < 1:
        raise ValueError(f"basis size must be >= 1, got {n}")
    i = np.arange(n, dtype=np.float64)
    k = i.reshape(n, 1)
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2.0 * i + 1.0) * k / (2.0 * n))
    d[0, :] = np.sqrt(1.0 / n)
    d.setflags(write=False)
    return d


def _checked(arr, name: str) -> np.ndarray:
    x = np.asarray(arr, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ValueError(f"{name} must be (h, w) or (h, w, c), got shape {x.shape}")
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _separable(x: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # left @ X @ right per channel
    if x.ndim == 2:
        return left @ x @ right
    y = np.matmul(left, np.moveaxis(x, 2, 0))
    y = np.matmul(y, right)
    return np.ascontiguousarray(np.moveaxis(y, 0, 2))


def dct2(image) -> np.ndarray:
    """Forward orthonormal 2D DCT-II, applied per channel."""
    x = _checked(image, "image")
    dh = basis_matrix(x.shape[0])
    dw = basis_matrix(x.shape[1])
    return _separable(x, dh, dw.T)


def idct2(freq) -> np.ndarray:
    """Exact inverse of :func:`dct2` (orthonormal DCT-III)."""
    c = _checked(freq, "frequency tensor")
    dh = basis_matrix(c.shape[0])
    dw = basis_matrix(c.shape[1])
    return _separable(c, dh.T, dw)


def dct2_vjp(upstream_grad) -> np.ndarray:
    """Vector-Jacobian product of ``dct2``.

    The transform is linear and orthonormal, so its adjoint equals its
    inverse; gradients flow backward through ``dct2`` via ``idct2``.
    """
    return idct2(upstream_grad)


def idct2_vjp(upstream_grad) -> np.ndarray:
    """Vector-Jacobian product of ``idct2`` (equals ``dct2``)."""
    return dct2(upstream_grad)
