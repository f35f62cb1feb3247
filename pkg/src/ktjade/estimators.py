"""TFOBI, TJADE and k-TJADE for tensor samples, plus vectorized baselines.

Every mode is estimated from a sample that has been centered and whitened in
all modes (mode covariances are computed one after the other, each from the
already whitened sample). For mode ``m`` the other modes then act as the
right-hand side of a matrix IC model, and any orthogonal rotation applied to
them leaves the mode-``m`` fourth moments unchanged; hence the estimate of one
mode never depends on the tuning of another.

For mode ``m`` with whitening matrix ``W_m`` the returned unmixing matrix is
``Gamma_m = V' W_m`` where ``V`` is orthogonal:

* ``tfobi``: eigenvectors of the FOBI matrix ``B``, eigenvalues descending;
* ``tjade``: joint diagonalizer of all cumulant matrices ``C^{ij}``;
* ``k_tjade``: the TFOBI rotation followed by the joint diagonalizer of the
  band ``{C^{ij} : |i - j| < k}`` of the TFOBI-rotated sample.

Rows of ``Gamma_m`` are then ordered by decreasing estimated row-mean
kurtosis and each row is signed so that its largest entry is positive.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .jointdiag import JointDiagConfig, JointDiagWarning, joint_diagonalize
from .moments import (
    InsufficientSampleError,
    SingularCovarianceError,
    cumulant_set,
    fobi_matrix,
    left_cov,
    row_kurtosis,
    sym_inv_sqrt,
)
from .tensor import (
    as_sample,
    mode_multiply,
    multiply_all_modes,
    sample_matricize,
)

__all__ = [
    "METHODS",
    "VECTOR_METHODS",
    "DEFAULT_MAX_RHO",
    "ModeError",
    "ModePlan",
    "ModeEstimate",
    "UnmixingResult",
    "PreparedSample",
    "prepare",
    "estimate_mode",
    "tfobi_mode",
    "tjade_mode",
    "k_tjade_mode",
    "fit",
    "fit_vectorized",
]

METHODS = ("tfobi", "tjade", "k_tjade", "skip")
VECTOR_METHODS = {"vfobi": "tfobi", "vjade": "tjade", "k_vjade": "k_tjade"}
# vectorized methods work with rho x rho cumulant matrices; refuse beyond these
DEFAULT_MAX_RHO = {"vfobi": 512, "k_vjade": 90, "vjade": 60}


class ModeError(RuntimeError):
    """Estimation failed for one mode; ``mode`` and ``k`` say where."""

    def __init__(self, message, mode=None, k=None):
        super().__init__(message)
        self.mode = mode
        self.k = k


@dataclass(frozen=True)
class ModePlan:
    """Per-mode estimator choice.

    ``methods[m]`` is one of ``tfobi``, ``tjade``, ``k_tjade`` or ``skip``;
    ``ks[m]`` is the band width for ``k_tjade`` (ignored otherwise).
    """

    methods: tuple
    ks: tuple

    def __post_init__(self):
        if len(self.methods) != len(self.ks):
            raise ValueError("methods and ks must have one entry per mode")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}; choose from {METHODS}")

    @classmethod
    def k_tjade(cls, ks):
        """``(k_1, ..., k_r)``-TJADE; ``k_m = 0`` leaves mode ``m`` unmixed."""
        ks = tuple(int(k) for k in ks)
        if any(k < 0 for k in ks):
            raise ValueError(f"band widths must be non-negative, got {ks}")
        return cls(tuple("skip" if k == 0 else "k_tjade" for k in ks), ks)

    @classmethod
    def uniform(cls, method, order):
        return cls((method,) * order, (0,) * order)

    @property
    def order(self):
        return len(self.methods)

    def validate(self, dims):
        if len(dims) != self.order:
            raise ValueError(
                f"plan for {self.order} modes does not match a tensor of order {len(dims)}"
            )
        for m, (method, k, p) in enumerate(zip(self.methods, self.ks, dims)):
            if method == "k_tjade" and not 1 <= k <= p:
                raise ValueError(f"mode {m}: k = {k} must lie in 1..{p}")

    def label(self):
        if all(m == "k_tjade" or m == "skip" for m in self.methods):
            return "".join(str(k) for k in self.ks) + "-TJADE"
        return "/".join(m.upper() if m != "k_tjade" else f"{k}-TJADE"
                        for m, k in zip(self.methods, self.ks))


@dataclass
class ModeEstimate:
    unmixing: np.ndarray
    rotation: np.ndarray
    """Orthogonal part ``V``; ``unmixing == rotation.T @ whitener`` before sign fixing."""
    kurtosis: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    latent: np.ndarray = None


@dataclass
class UnmixingResult:
    unmixing: list
    latent: np.ndarray
    kurtosis: list
    diagnostics: list
    plan: ModePlan = None

    @property
    def dims(self):
        return self.latent.shape[1:]

    @property
    def n(self):
        return self.latent.shape[0]

    def top_component(self):
        """Index of the latent element with the largest absolute excess kurtosis."""
        z = self.latent
        z = (z - z.mean(axis=0)) / z.std(axis=0)
        kurt = np.mean(z**4, axis=0) - 3.0
        return np.unravel_index(np.argmax(np.abs(kurt)), kurt.shape)


@dataclass
class PreparedSample:
    centered: np.ndarray
    standardized: np.ndarray
    whiteners: list

    @property
    def dims(self):
        return self.centered.shape[1:]

    @property
    def n(self):
        return self.centered.shape[0]


def prepare(x):
    """Center a tensor sample and whiten it along every mode."""
    x = as_sample(x)
    if x.shape[0] < 2:
        raise InsufficientSampleError(
            f"estimation needs at least 2 observations, got {x.shape[0]}"
        )
    centered = x - x.mean(axis=0)
    current = centered
    whiteners = []
    for m in range(x.ndim - 1):
        try:
            w = sym_inv_sqrt(left_cov(sample_matricize(current, m)))
        except SingularCovarianceError as err:
            raise ModeError(f"mode {m}: {err}", mode=m) from err
        whiteners.append(w)
        current = mode_multiply(current, m + 1, w)
    return PreparedSample(centered=centered, standardized=current, whiteners=whiteners)


def _canonical_signs(gamma):
    rows = np.arange(gamma.shape[0])
    lead = gamma[rows, np.argmax(np.abs(gamma), axis=1)]
    return gamma * np.where(lead < 0, -1.0, 1.0)[:, None]


def _tfobi_rotation(y):
    vals, vecs = np.linalg.eigh(fobi_matrix(y))
    order = np.argsort(-vals, kind="stable")
    return vecs[:, order], vals[order]


def _rotate_rows(v, y):
    return np.transpose(v) @ y


def estimate_mode(prepared, mode, method, k=None, config=None):
    """Orthogonal rotation and unmixing matrix for one mode of a prepared sample."""
    config = config or JointDiagConfig()
    y = sample_matricize(prepared.standardized, mode)
    n, p, q = y.shape
    diag = {"method": method, "k": k, "p": p}
    t0 = time.perf_counter()
    if method == "tfobi":
        v, eigvals = _tfobi_rotation(y)
        diag["fobi_eigenvalues"] = eigvals
        diag["time_fobi"] = time.perf_counter() - t0
    elif method in ("tjade", "k_tjade"):
        if method == "k_tjade":
            if k is None or not 1 <= k <= p:
                raise ModeError(f"mode {mode}: k = {k} must lie in 1..{p}", mode, k)
            v_fobi, _ = _tfobi_rotation(y)
            base = _rotate_rows(v_fobi, y)
            band = k
        else:
            v_fobi = np.eye(p)
            base = y
            band = p
        t1 = time.perf_counter()
        diag["time_fobi"] = t1 - t0
        cset = cumulant_set(base, band)
        t2 = time.perf_counter()
        diag["time_cumulants"] = t2 - t1
        diag["n_matrices"] = len(cset)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JointDiagWarning)
            jd = joint_diagonalize(cset, config)
        diag["time_jointdiag"] = time.perf_counter() - t2
        diag["sweeps"] = jd.sweeps_used
        diag["converged"] = jd.converged
        diag["off_objective"] = jd.off_objective
        if not jd.converged:
            warnings.warn(
                f"mode {mode}: joint diagonalization did not converge in "
                f"{jd.sweeps_used} sweeps",
                JointDiagWarning,
                stacklevel=2,
            )
        v = v_fobi @ jd.rotation
    else:
        raise ValueError(f"unknown method {method!r}")

    kurt = row_kurtosis(_rotate_rows(v, y))
    order = np.argsort(-kurt, kind="stable")
    v = v[:, order]
    kurt = kurt[order]
    gamma = _canonical_signs(np.transpose(v) @ prepared.whiteners[mode])
    spread = float(kurt[0] - kurt[-1]) if p > 1 else 0.0
    diag["kurtosis_spread"] = spread
    diag["weak_kurtosis_separation"] = p > 1 and spread < 5 * np.sqrt(24.0 / (n * q))
    diag["time_total"] = time.perf_counter() - t0
    return ModeEstimate(unmixing=gamma, rotation=v, kurtosis=kurt, diagnostics=diag)


def _single_mode(x, mode, method, k=None, config=None):
    prepared = prepare(x)
    if not 0 <= mode < len(prepared.dims):
        raise ValueError(f"mode {mode} out of range for order {len(prepared.dims)}")
    est = estimate_mode(prepared, mode, method, k, config)
    est.latent = mode_multiply(prepared.centered, mode + 1, est.unmixing)
    return est


def tfobi_mode(x, mode):
    """TFOBI unmixing matrix of one mode; ``latent`` holds the rotated sample."""
    return _single_mode(x, mode, "tfobi")


def tjade_mode(x, mode, config=None):
    return _single_mode(x, mode, "tjade", config=config)


def k_tjade_mode(x, mode, k, config=None):
    return _single_mode(x, mode, "k_tjade", k, config)


def fit(x, plan, config=None):
    """Unmix a tensor sample mode by mode.

    Modes are processed in order ``0 .. r - 1`` and each mode's rotation is
    applied to the whitened sample before the next mode is estimated.
    Skipped modes get the identity.

    Parameters
    ----------
    x : array_like, shape (n, p_1, ..., p_r)
    plan : ModePlan or sequence of int
        A sequence is read as ``(k_1, ..., k_r)``-TJADE.
    config : JointDiagConfig, optional

    Returns
    -------
    UnmixingResult
        ``latent`` is the centered input multiplied in every mode by the
        corresponding unmixing matrix.
    """
    if not isinstance(plan, ModePlan):
        plan = ModePlan.k_tjade(plan)
    x = as_sample(x)
    plan.validate(x.shape[1:])
    prepared = prepare(x)
    current = PreparedSample(prepared.centered, prepared.standardized, prepared.whiteners)
    gammas, kurts, diags = [], [], []
    for m, (method, k) in enumerate(zip(plan.methods, plan.ks)):
        p = x.shape[m + 1]
        if method == "skip":
            gammas.append(np.eye(p))
            kurts.append(None)
            diags.append({"method": "skip", "p": p})
            continue
        try:
            est = estimate_mode(current, m, method, k, config)
        except ModeError:
            raise
        except (np.linalg.LinAlgError, ValueError) as err:
            raise ModeError(f"mode {m}: {err}", mode=m, k=k) from err
        gammas.append(est.unmixing)
        kurts.append(est.kurtosis)
        diags.append(est.diagnostics)
        current.standardized = mode_multiply(
            current.standardized, m + 1, np.transpose(est.rotation)
        )
    latent = multiply_all_modes(prepared.centered, gammas, sample=True)
    return UnmixingResult(
        unmixing=gammas, latent=latent, kurtosis=kurts, diagnostics=diags, plan=plan
    )


def fit_vectorized(x, method, k=None, config=None, max_rho=None):
    """Vectorize every observation and run the corresponding vector estimator.

    ``method`` is ``vfobi``, ``vjade`` or ``k_vjade``. The result has a single
    ``rho x rho`` unmixing matrix and a latent sample of shape ``(n, rho, 1)``.
    """
    if method not in VECTOR_METHODS:
        raise ValueError(f"unknown vector method {method!r}; choose from {list(VECTOR_METHODS)}")
    x = as_sample(x)
    n = x.shape[0]
    rho = int(np.prod(x.shape[1:]))
    cap = DEFAULT_MAX_RHO[method] if max_rho is None else max_rho
    if rho > cap:
        raise ValueError(
            f"{method} refused: vectorized dimension rho = {rho} exceeds the cap {cap}"
        )
    # column-stacking of the mode-0 matricization, see tensor.vectorize
    vecs = np.transpose(sample_matricize(x, 0), (0, 2, 1)).reshape(n, rho)
    inner = VECTOR_METHODS[method]
    plan = ModePlan((inner, "skip"), (k or 0, 0))
    return fit(vecs[:, :, None], plan, config)
