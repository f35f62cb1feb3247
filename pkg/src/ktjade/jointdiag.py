"""Orthogonal joint diagonalization of symmetric matrices by Jacobi rotations.

For every plane ``(a, b)`` the Givens angle that minimizes the summed squared
off-diagonal mass of the rotated set is available in closed form: it is read
off the leading eigenvector of the 2 x 2 Gram matrix of the vectors
``(C_aa - C_bb, C_ab + C_ba)`` stacked over the set (Cardoso's scheme).
Sweeps visit all planes in lexicographic order until the largest ``|sin|`` of
a sweep drops below the tolerance.
"""

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .moments import CumulantSet

__all__ = [
    "JointDiagConfig",
    "JointDiagResult",
    "JointDiagWarning",
    "off_objective",
    "diag_objective",
    "joint_diagonalize",
]


class JointDiagWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class JointDiagConfig:
    tolerance: float = 1e-6
    max_sweeps: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be a positive integer, got {self.max_sweeps}")


@dataclass
class JointDiagResult:
    rotation: np.ndarray
    off_objective: float
    sweeps_used: int
    converged: bool
    history: list = field(default_factory=list)
    """Off-diagonal objective before the first sweep and after each sweep."""


def _stack(matrices):
    """Return a ``(K, p, p)`` stack whose squared norms carry the set weights."""
    if isinstance(matrices, CumulantSet):
        return matrices.weighted_stack()
    if isinstance(matrices, np.ndarray):
        mats = np.asarray(matrices, dtype=np.float64)
    else:
        mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in matrices]
        if len({m.shape for m in mats}) > 1:
            raise ValueError("all matrices of the set must share one shape")
        mats = np.array(mats)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {mats.shape}")
    if mats.shape[0] == 0:
        raise ValueError("cannot joint-diagonalize an empty set")
    return mats


def _rotated(v, mats):
    return np.transpose(v) @ mats @ v


def off_objective(v, matrices):
    """Sum over the set of squared off-diagonal Frobenius norms of ``V' C V``."""
    rot = _rotated(np.asarray(v, dtype=np.float64), _stack(matrices))
    off = ~np.eye(rot.shape[1], dtype=bool)
    return float(np.sum(rot[:, off] ** 2))


def diag_objective(v, matrices):
    """Sum over the set of squared diagonal norms of ``V' C V``."""
    rot = _rotated(np.asarray(v, dtype=np.float64), _stack(matrices))
    return float(np.sum(np.einsum("kii->ki", rot) ** 2))


def _off(work):
    # work has layout (p, p, K)
    off = ~np.eye(work.shape[0], dtype=bool)
    return float(np.sum(work[off] ** 2))


def _sweep_reference(work, v):
    """One sweep in plain numpy; :func:`_sweep` is the compiled equivalent."""
    p = v.shape[0]
    largest = 0.0
    for a in range(p - 1):
        for b in range(a + 1, p):
            g0 = work[a, a] - work[b, b]
            g1 = work[a, b] + work[b, a]
            ton = g0 @ g0 - g1 @ g1
            toff = 2.0 * (g0 @ g1) + 0.0
            theta = 0.25 * np.arctan2(toff, ton)
            s = np.sin(theta)
            if s == 0.0:
                continue
            c = np.cos(theta)
            largest = max(largest, abs(s))
            ra = work[a].copy()
            work[a] = c * ra + s * work[b]
            work[b] = c * work[b] - s * ra
            ca = work[:, a].copy()
            work[:, a] = c * ca + s * work[:, b]
            work[:, b] = c * work[:, b] - s * ca
            va = v[:, a].copy()
            v[:, a] = c * va + s * v[:, b]
            v[:, b] = c * v[:, b] - s * va
    return largest


@numba.njit(cache=True)
def _sweep(work, v):
    p = v.shape[0]
    n_mats = work.shape[2]
    largest = 0.0
    for a in range(p - 1):
        for b in range(a + 1, p):
            g00 = 0.0
            g11 = 0.0
            g01 = 0.0
            for k in range(n_mats):
                g0 = work[a, a, k] - work[b, b, k]
                g1 = work[a, b, k] + work[b, a, k]
                g00 += g0 * g0
                g11 += g1 * g1
                g01 += g0 * g1
            theta = 0.25 * math.atan2(2.0 * g01 + 0.0, g00 - g11)
            s = math.sin(theta)
            if s == 0.0:
                continue
            c = math.cos(theta)
            largest = max(largest, abs(s))
            for i in range(p):
                for k in range(n_mats):
                    ra = work[a, i, k]
                    rb = work[b, i, k]
                    work[a, i, k] = c * ra + s * rb
                    work[b, i, k] = c * rb - s * ra
            for i in range(p):
                for k in range(n_mats):
                    ca = work[i, a, k]
                    cb = work[i, b, k]
                    work[i, a, k] = c * ca + s * cb
                    work[i, b, k] = c * cb - s * ca
            for i in range(p):
                va = v[i, a]
                vb = v[i, b]
                v[i, a] = c * va + s * vb
                v[i, b] = c * vb - s * va
    return largest


def joint_diagonalize(matrices, config=None, init=None):
    """Find an orthogonal ``V`` making every ``V' C V`` as diagonal as possible.

    Parameters
    ----------
    matrices : CumulantSet, ndarray of shape (K, p, p) or sequence of arrays
        Symmetric matrices. A :class:`CumulantSet` contributes each stored
        off-diagonal pair twice, as its mirrored slot would.
    config : JointDiagConfig, optional
    init : ndarray, optional
        Orthogonal starting value; the identity by default.

    Returns
    -------
    JointDiagResult
        ``rotation`` has the diagonalizing vectors as columns. Running out of
        sweeps is reported through ``converged`` and a
        :class:`JointDiagWarning`, never raised.
    """
    config = config or JointDiagConfig()
    mats = _stack(matrices)
    p = mats.shape[1]
    v = np.eye(p) if init is None else np.array(init, dtype=np.float64, order="C")
    work = np.ascontiguousarray(np.transpose(_rotated(v, mats), (1, 2, 0)))
    history = [_off(work)]
    converged = False
    sweeps = 0
    while sweeps < config.max_sweeps:
        sweeps += 1
        largest = _sweep(work, v)
        history.append(_off(work))
        if largest < config.tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"joint diagonalization stopped after {sweeps} sweeps without "
            f"reaching tolerance {config.tolerance:g}",
            JointDiagWarning,
            stacklevel=2,
        )
    return JointDiagResult(
        rotation=v,
        off_objective=history[-1],
        sweeps_used=sweeps,
        converged=converged,
        history=history,
    )
