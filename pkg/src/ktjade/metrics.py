"""Separation accuracy: gain matrices, the minimum distance index and the
sequential-MD scree used to choose the band width ``k``."""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import mode_kron

__all__ = [
    "GainEvaluation",
    "ScreeCurve",
    "gain_matrix",
    "md_index",
    "md_index_bruteforce",
    "transformed_md",
    "evaluate",
    "relative_md",
    "scree",
]

BRUTEFORCE_MAX_DIM = 8


def _row_profile(g):
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"the MD index needs a square matrix, got shape {g.shape}")
    sq = g**2
    norms = sq.sum(axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("the MD index is undefined for a matrix with a zero row")
    return sq / norms


def _from_assignment(h, rows, cols):
    # rho - sum of assigned cells, summed over the unassigned cells to avoid cancellation
    rho = h.shape[0]
    if rho == 1:
        return 0.0
    outside = np.ones_like(h, dtype=bool)
    outside[rows, cols] = False
    d2 = h[outside].sum() / (rho - 1)
    return float(np.sqrt(min(d2, 1.0)))


def md_index(g):
    """Minimum distance index of a square gain matrix.

    The infimum over matrices with one non-zero entry per row and column
    separates into a row-optimal scale and an assignment of rows of ``g`` to
    rows of the identity. With row-normalized squares ``h_ij = g_ij^2 /
    ||g_i||^2`` the squared index is ``(rho - max_perm sum h_{perm(j), j}) /
    (rho - 1)``; the assignment is solved exactly.
    """
    h = _row_profile(g)
    rows, cols = linear_sum_assignment(h, maximize=True)
    return _from_assignment(h, rows, cols)


def md_index_bruteforce(g):
    """Reference MD index by enumerating every permutation (``rho <= 8``)."""
    h = _row_profile(g)
    rho = h.shape[0]
    if rho > BRUTEFORCE_MAX_DIM:
        raise ValueError(
            f"brute-force MD index refuses rho = {rho} > {BRUTEFORCE_MAX_DIM}"
        )
    cols = np.arange(rho)
    best = max(itertools.permutations(range(rho)), key=lambda perm: h[list(perm), cols].sum())
    return _from_assignment(h, list(best), cols)


def transformed_md(md, n, rho):
    """``n (rho - 1) D^2``."""
    return n * (rho - 1) * md**2


def gain_matrix(unmixing, mixing):
    """``G = Gamma Omega`` with both sides assembled by :func:`mode_kron`.

    ``unmixing`` is a list of per-mode matrices, a single matrix, or an object
    with an ``unmixing`` attribute (an :class:`~ktjade.estimators.UnmixingResult`).
    A single unmixing matrix paired with several mixing matrices is treated as
    a vectorized estimate of their Kronecker product.
    """
    unmixing = getattr(unmixing, "unmixing", unmixing)
    gam = _as_list(unmixing)
    om = _as_list(mixing)
    gam_k = mode_kron(gam)
    om_k = mode_kron(om)
    if gam_k.shape[1] != om_k.shape[0]:
        raise ValueError(
            f"unmixing of shape {gam_k.shape} does not conform with mixing "
            f"of shape {om_k.shape}"
        )
    return gam_k @ om_k


def _as_list(mats):
    if isinstance(mats, np.ndarray) and mats.ndim == 2:
        return [mats]
    return [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in mats]


@dataclass
class GainEvaluation:
    gain: np.ndarray
    md: float
    transformed_md: float
    rho: int
    n: int


def evaluate(unmixing, mixing, n):
    g = gain_matrix(unmixing, mixing)
    md = md_index(g)
    rho = g.shape[0]
    return GainEvaluation(
        gain=g, md=md, transformed_md=transformed_md(md, n, rho), rho=rho, n=n
    )


def relative_md(gamma_a, gamma_b):
    """``D(Gamma_a Gamma_b^{-1})``: zero when both unmixings agree up to
    scale, order and signs of their rows."""
    return md_index(np.asarray(gamma_a) @ np.linalg.inv(np.asarray(gamma_b)))


@dataclass
class ScreeCurve:
    mode: int
    ks: list
    values: np.ndarray
    """``m*_k`` for ``k`` in ``ks`` (``1 .. p - 1``)."""
    unmixings: dict
    """Mode unmixing matrix for every ``k`` in ``1 .. p``."""

    def largest_drop(self):
        """The ``k`` following the largest decrease of the curve (a heuristic
        elbow flag, not a formal selector)."""
        if len(self.values) < 2:
            return self.ks[-1] + 1 if self.ks else 1
        drops = self.values[:-1] - self.values[1:]
        return self.ks[int(np.argmax(drops)) + 1]


def scree(x, mode, config=None, plan=None):
    """Average forward sequential MD indices of ``k``-TJADE along one mode.

    For every ``k`` in ``1 .. p`` the mode is unmixed with ``k``-TJADE and

        ``m*_k = mean_{l = 1 .. p - k} D(Gamma^k (Gamma^{k + l})^{-1})``.

    The estimate of one mode does not depend on how the other modes are
    treated, so only ``mode`` is fitted; ``plan`` is accepted for callers that
    want to fit the whole tensor anyway and is otherwise ignored.
    """
    from .estimators import ModeError, prepare, estimate_mode

    prepared = prepare(x)
    p = prepared.dims[mode]
    if p < 2:
        raise ValueError(f"the scree needs a mode of size >= 2, mode {mode} has {p}")
    gammas = {}
    for k in range(1, p + 1):
        try:
            gammas[k] = estimate_mode(prepared, mode, "k_tjade", k, config).unmixing
        except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as err:
            raise ModeError(f"mode {mode}, k = {k}: {err}", mode=mode, k=k) from err
    ks = list(range(1, p))
    values = np.array(
        [
            np.mean([relative_md(gammas[k], gammas[k + l]) for l in range(1, p - k + 1)])
            for k in ks
        ]
    )
    return ScreeCurve(mode=mode, ks=ks, values=values, unmixings=gammas)
