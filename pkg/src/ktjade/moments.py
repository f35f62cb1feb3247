"""Second- and fourth-moment functionals of matrix samples.

A matrix sample is an array of shape ``(n, p, q)``. Every estimator divides by
``n`` (plug-in moments). Fourth-order quantities are accumulated in fixed-size
chunks of observations so memory stays bounded and the reduction order is
deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SingularCovarianceError",
    "InsufficientSampleError",
    "CumulantSet",
    "as_matrix_sample",
    "center",
    "left_cov",
    "right_cov",
    "sym_inv_sqrt",
    "standardize",
    "fobi_matrix",
    "row_kurtosis",
    "cumulant_matrix",
    "cumulant_set",
    "band_pairs",
]

SPD_RELATIVE_EPS = 1e-12
# upper bound on doubles held by one chunk of per-observation p x p products
CHUNK_BUDGET = 2**21


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance matrix is (numerically) singular."""


class InsufficientSampleError(ValueError):
    pass


def as_matrix_sample(s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 3:
        raise ValueError(f"a matrix sample needs shape (n, p, q), got {s.shape}")
    return s


def _chunks(n, p):
    size = max(1, min(8192, CHUNK_BUDGET // (p * p)))
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def center(s):
    """Subtract the sample mean matrix."""
    s = as_matrix_sample(s)
    if s.shape[0] < 2:
        raise InsufficientSampleError(
            f"centering needs at least 2 observations, got {s.shape[0]}"
        )
    return s - s.mean(axis=0)


def left_cov(s):
    """``(1 / (n q)) sum_i X_i X_i'`` of a centered sample."""
    s = as_matrix_sample(s)
    n, p, q = s.shape
    flat = np.transpose(s, (1, 0, 2)).reshape(p, n * q)
    cov = flat @ flat.T / (n * q)
    return (cov + cov.T) / 2


def right_cov(s):
    """``(1 / (n p)) sum_i X_i' X_i`` of a centered sample."""
    return left_cov(np.transpose(as_matrix_sample(s), (0, 2, 1)))


def sym_inv_sqrt(m):
    """Symmetric inverse square root of a symmetric positive-definite matrix.

    Raises
    ------
    SingularCovarianceError
        If an eigenvalue is below ``1e-12`` times the largest one.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    top = vals[-1]
    if top <= 0 or vals[0] <= SPD_RELATIVE_EPS * top:
        raise SingularCovarianceError(
            f"covariance is singular: eigenvalue {vals[0]:.3e} against "
            f"largest {top:.3e}"
        )
    out = (vecs / np.sqrt(vals)) @ vecs.T
    return (out + out.T) / 2


def standardize(s, return_whiteners=False):
    """Whiten the rows and then the columns of a centered sample.

    The column covariance is computed from the row-whitened sample, so for
    ``q == 1`` the output has left covariance exactly ``I_p``. In general the
    left covariance of the output is only proportional to the identity
    (the constant is the ``tau ** 2`` of the matrix IC model).
    """
    s = as_matrix_sample(s)
    w_left = sym_inv_sqrt(left_cov(s))
    rows = w_left @ s
    w_right = sym_inv_sqrt(right_cov(rows))
    out = rows @ w_right
    if return_whiteners:
        return out, w_left, w_right
    return out


def _outer_rows(s):
    return s @ np.transpose(s, (0, 2, 1))


def fobi_matrix(s):
    """``B = (1 / (n q)) sum_i X_i X_i' X_i X_i'``."""
    s = as_matrix_sample(s)
    n, p, q = s.shape
    acc = np.zeros((p, p))
    for sl in _chunks(n, p):
        m = _outer_rows(s[sl])
        t = m.shape[0]
        acc += np.transpose(m, (1, 0, 2)).reshape(p, t * p) @ m.reshape(t * p, p)
    acc /= n * q
    return (acc + acc.T) / 2


def row_kurtosis(s):
    """Row means of excess kurtosis, read off the diagonal of the FOBI matrix.

    For a sample ``tau * Z`` (possibly right-multiplied by an orthogonal
    matrix) with independent standardized entries, ``diag(B) / tau^4`` has
    expectation ``kappa + p + q + 1``; ``tau^2`` is estimated by
    ``trace(Sigma_1) / p``.
    """
    s = as_matrix_sample(s)
    _, p, q = s.shape
    tau2 = np.trace(left_cov(s)) / p
    return np.diag(fobi_matrix(s)) / tau2**2 - (p + q + 1)


def _correction(sigma, i, j, q):
    out = np.outer(sigma[:, i], sigma[:, j])
    out = out + out.T
    if i == j:
        out += q * sigma @ sigma
    return out


def cumulant_matrix(s, i, j):
    """The fourth-cumulant matrix ``C^{ij}`` of a standardized sample (0-based)."""
    s = as_matrix_sample(s)
    n, p, q = s.shape
    if not (0 <= i < p and 0 <= j < p):
        raise IndexError(f"cumulant index ({i}, {j}) out of range for p = {p}")
    acc = np.zeros((p, p))
    for sl in _chunks(n, p):
        m = _outer_rows(s[sl])
        acc += np.einsum("t,tab->ab", m[:, i, j], m)
    acc /= n * q
    acc = (acc + acc.T) / 2
    return acc - _correction(left_cov(s), i, j, q)


def band_pairs(p, k):
    """Unordered index pairs ``(i, j)``, ``i <= j``, with ``j - i < k``."""
    if not 1 <= k <= p:
        raise ValueError(f"band width k = {k} must lie in 1..{p}")
    return [(i, i + d) for d in range(k) for i in range(p - d)]


@dataclass
class CumulantSet:
    """Banded family of cumulant matrices.

    Only one matrix per unordered pair is stored; ``C^{ji}`` is served from the
    same storage as ``C^{ij}``. ``weights`` counts how many ordered pairs each
    stored matrix stands for (1 on the diagonal, 2 off it).
    """

    p: int
    pairs: list
    matrices: np.ndarray
    tau2_estimate: float
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {}
        for pos, (i, j) in enumerate(self.pairs):
            self._index[(i, j)] = pos
            self._index[(j, i)] = pos

    def __getitem__(self, pair):
        return self.matrices[self._index[tuple(pair)]]

    def __contains__(self, pair):
        return tuple(pair) in self._index

    def __len__(self):
        return len(self._index)

    def ordered_pairs(self):
        return sorted(self._index)

    @property
    def weights(self):
        return np.array([1.0 if i == j else 2.0 for i, j in self.pairs])

    def weighted_stack(self):
        """Stored matrices scaled by ``sqrt(weight)``, so that summed squared
        norms over the stack equal sums over all ordered pairs."""
        return self.matrices * np.sqrt(self.weights)[:, None, None]


def cumulant_set(s, k):
    """All ``C^{ij}`` with ``|i - j| < k`` from one pass over the sample."""
    s = as_matrix_sample(s)
    n, p, q = s.shape
    pairs = band_pairs(p, k)
    rows = np.array([i for i, _ in pairs])
    cols = np.array([j for _, j in pairs])
    acc = np.zeros((len(pairs), p * p))
    for sl in _chunks(n, p):
        m = _outer_rows(s[sl])
        acc += m[:, rows, cols].T @ m.reshape(m.shape[0], p * p)
    acc /= n * q
    mats = acc.reshape(-1, p, p)
    mats = (mats + np.transpose(mats, (0, 2, 1))) / 2
    sigma = left_cov(s)
    for pos, (i, j) in enumerate(pairs):
        mats[pos] -= _correction(sigma, i, j, q)
    return CumulantSet(
        p=p, pairs=pairs, matrices=mats, tau2_estimate=float(np.trace(sigma) / p)
    )
