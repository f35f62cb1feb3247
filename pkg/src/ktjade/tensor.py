"""Mode-wise algebra for dense real tensors.

A single tensor is a plain ``numpy.ndarray`` of shape ``(p_1, ..., p_r)``.
A sample of ``n`` tensors is stacked along a leading axis, giving an array of
shape ``(n, p_1, ..., p_r)``. Modes are indexed from 0 throughout the package.

The matricization uses the cyclical column ordering, so that for every mode
``m``::

    matricize(x x_m A_m ... , m) == A_m @ matricize(x, m) @ kron(A_{m+1}, ..., A_{r-1}, A_0, ..., A_{m-1}).T

and vectorization stacks the columns of the mode-0 matricization (for a
matrix this is ordinary column stacking, ``vec(A X B') = (B kron A) vec(X)``).
"""

from functools import reduce

import numpy as np

__all__ = [
    "as_sample",
    "mode_multiply",
    "multiply_all_modes",
    "matricize",
    "unmatricize",
    "sample_matricize",
    "sample_unmatricize",
    "vectorize",
    "devectorize",
    "kronecker",
    "mode_kron",
]


def as_sample(x, min_n=1):
    """Validate and return a tensor sample as a float64 array ``(n, *dims)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError(
            f"a sample needs shape (n, p_1, ..., p_r) with r >= 1, got {x.shape}"
        )
    if any(d < 1 for d in x.shape[1:]):
        raise ValueError(f"every tensor dimension must be >= 1, got {x.shape[1:]}")
    if x.shape[0] < min_n:
        raise ValueError(f"sample size {x.shape[0]} is below the required {min_n}")
    return x


def _check_mode(mode, order):
    if not 0 <= mode < order:
        raise ValueError(f"mode {mode} out of range for a tensor of order {order}")


def _cyclic_axes(mode, order):
    return [mode] + list(range(mode + 1, order)) + list(range(mode))


def mode_multiply(x, mode, a):
    """Multiply every ``mode``-mode vector of ``x`` from the left by ``a``.

    Parameters
    ----------
    x : ndarray, shape (p_0, ..., p_{r-1})
    mode : int
    a : ndarray, shape (q, p_mode)

    Returns
    -------
    ndarray with ``p_mode`` replaced by ``q``.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    _check_mode(mode, x.ndim)
    if a.shape[1] != x.shape[mode]:
        raise ValueError(
            f"matrix with {a.shape[1]} columns cannot multiply mode {mode} "
            f"of size {x.shape[mode]}"
        )
    out = np.tensordot(a, x, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def multiply_all_modes(x, mats, sample=False):
    """Apply ``x x_0 A_0 x_1 A_1 ...``; ``None`` entries leave a mode as is.

    With ``sample=True`` the leading axis of ``x`` indexes observations and is
    left untouched.
    """
    offset = 1 if sample else 0
    out = np.asarray(x, dtype=np.float64)
    if len(mats) != out.ndim - offset:
        raise ValueError(
            f"got {len(mats)} matrices for a tensor of order {out.ndim - offset}"
        )
    for m, a in enumerate(mats):
        if a is not None:
            out = mode_multiply(out, m + offset, a)
    return out


def matricize(x, mode):
    """Mode-``mode`` matricization with cyclically ordered columns."""
    x = np.asarray(x, dtype=np.float64)
    _check_mode(mode, x.ndim)
    p = x.shape[mode]
    return np.transpose(x, _cyclic_axes(mode, x.ndim)).reshape(p, -1)


def unmatricize(mat, mode, dims):
    """Inverse of :func:`matricize` for a tensor of shape ``dims``."""
    dims = tuple(dims)
    axes = _cyclic_axes(mode, len(dims))
    permuted = np.asarray(mat).reshape([dims[a] for a in axes])
    return np.transpose(permuted, np.argsort(axes))


def sample_matricize(x, mode):
    """Matricize every observation of a sample; returns ``(n, p_mode, rho / p_mode)``."""
    x = np.asarray(x, dtype=np.float64)
    order = x.ndim - 1
    _check_mode(mode, order)
    axes = [0] + [a + 1 for a in _cyclic_axes(mode, order)]
    return np.transpose(x, axes).reshape(x.shape[0], x.shape[mode + 1], -1)


def sample_unmatricize(mats, mode, dims):
    dims = tuple(dims)
    axes = _cyclic_axes(mode, len(dims))
    n = mats.shape[0]
    permuted = np.asarray(mats).reshape([n] + [dims[a] for a in axes])
    return np.transpose(permuted, [0] + [a + 1 for a in np.argsort(axes)])


def vectorize(x):
    """Stack the columns of the mode-0 matricization into a vector."""
    return matricize(x, 0).ravel(order="F")


def devectorize(v, dims):
    dims = tuple(dims)
    mat = np.asarray(v, dtype=np.float64).reshape(dims[0], -1, order="F")
    return unmatricize(mat, 0, dims)


def kronecker(a, b):
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def mode_kron(mats):
    """Kronecker product ``K`` with ``vectorize(x x_m A_m ...) == K @ vectorize(x)``.

    This is ``A_1 kron ... kron A_{r-1} kron A_0``, the ordering implied by
    :func:`vectorize`; every gain matrix in the package is formed with it.
    """
    mats = [np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    if len(mats) == 1:
        return mats[0]
    return np.kron(reduce(np.kron, mats[1:]), mats[0])
