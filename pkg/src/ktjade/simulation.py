"""Latent distributions, mixing scenarios and the experiment drivers.

Random streams are derived from ``numpy.random.SeedSequence`` with explicit
spawn keys, so every (sample size, replicate, cell) and every (sample size,
replicate, scenario) owns an independent stream that does not depend on the
order in which work is scheduled.
"""

import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import ModePlan, fit, fit_vectorized
from .jointdiag import JointDiagConfig
from .metrics import md_index, gain_matrix, transformed_md
from .tensor import multiply_all_modes

__all__ = [
    "DistributionSpec",
    "parse_distribution",
    "parse_layout",
    "EstimatorSpec",
    "parse_estimator",
    "ExperimentSpec",
    "ExperimentResult",
    "SETTINGS",
    "setting_layout",
    "timing_layout",
    "row_kurtosis_means",
    "sample_latent",
    "haar_orthogonal",
    "mixing_matrices",
    "mix",
    "run_experiment",
    "run_timing",
]

SCENARIOS = ("identity", "orthogonal", "gaussian")
_SCENARIO_CODE = {name: i for i, name in enumerate(SCENARIOS)}


@dataclass(frozen=True)
class DistributionSpec:
    """A latent distribution standardized to mean 0 and variance 1.

    ``kind`` is ``normal``, ``uniform``, ``exponential``, ``chisq`` (with
    degrees of freedom ``param``) or ``gamma`` (shape ``param``, rate 1).
    """

    kind: str
    param: float = None

    def __post_init__(self):
        if self.kind not in ("normal", "uniform", "exponential", "chisq", "gamma"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.kind in ("chisq", "gamma") and not (self.param and self.param > 0):
            raise ValueError(f"{self.kind} needs a positive parameter, got {self.param}")

    @property
    def kurtosis(self):
        """Analytic excess kurtosis."""
        return {
            "normal": lambda: 0.0,
            "uniform": lambda: -1.2,
            "exponential": lambda: 6.0,
            "chisq": lambda: 12.0 / self.param,
            "gamma": lambda: 6.0 / self.param,
        }[self.kind]()

    def draw(self, rng, n):
        if self.kind == "normal":
            return rng.standard_normal(n)
        if self.kind == "uniform":
            return (rng.random(n) - 0.5) * math.sqrt(12.0)
        if self.kind == "exponential":
            return rng.standard_exponential(n) - 1.0
        if self.kind == "chisq":
            nu = self.param
            return (rng.chisquare(nu, n) - nu) / math.sqrt(2.0 * nu)
        alpha = self.param
        return (rng.standard_gamma(alpha, n) - alpha) / math.sqrt(alpha)

    def __str__(self):
        short = {"normal": "N", "uniform": "U", "exponential": "E"}
        if self.kind in short:
            return short[self.kind]
        return f"{self.kind}({self.param:g})"


_ALIASES = {
    "n": ("normal", None),
    "normal": ("normal", None),
    "u": ("uniform", None),
    "uniform": ("uniform", None),
    "e": ("exponential", None),
    "exp": ("exponential", None),
    "exponential": ("exponential", None),
    "c": ("chisq", 1.0),
}


def parse_distribution(text):
    """Parse ``N``, ``U``, ``E``, ``C`` (chi-square, 1 df), ``chisq(4)`` or
    ``gamma(0.9)`` (also ``G(0.9)``)."""
    token = text.strip().lower()
    if token in _ALIASES:
        return DistributionSpec(*_ALIASES[token])
    match = re.fullmatch(r"(chisq|chi2|gamma|g)\(\s*([0-9.eE+-]+)\s*\)", token)
    if not match:
        raise ValueError(f"cannot parse distribution {text!r}")
    kind = "chisq" if match.group(1) in ("chisq", "chi2") else "gamma"
    return DistributionSpec(kind, float(match.group(2)))


def parse_layout(text):
    """Parse a layout file body.

    The first non-comment line gives the dimensions (``3,3,4``); the
    remaining tokens list the cell distributions in row-major order.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty layout")
    dims = tuple(int(d) for d in lines[0].replace("x", ",").split(","))
    tokens = re.findall(r"[A-Za-z0-9]+(?:\([^)]*\))?", " ".join(lines[1:]))
    if len(tokens) != int(np.prod(dims)):
        raise ValueError(
            f"layout of shape {dims} needs {int(np.prod(dims))} cells, got {len(tokens)}"
        )
    cells = [parse_distribution(t) for t in tokens]
    layout = np.empty(len(cells), dtype=object)
    layout[:] = cells
    return layout.reshape(dims)


def _layout(rows):
    arr = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            arr[i, j] = parse_distribution(cell)
    return arr


def _setting_1():
    return _layout([["E", "C", "U"], ["C", "U", "E"], ["U", "E", "N"]])


def _setting_2():
    common = [["E", "N", "N"], ["N", "U", "N"], ["N", "N", "E"]]
    last = [["N", "U", "E"], ["E", "E", "E"], ["E", "E", "N"]]
    faces = [_layout(common)] * 3 + [_layout(last)]
    return np.stack(faces, axis=2)


def _setting_3():
    return _layout(
        [
            ["G(0.9999)", "G(1)", "G(0.9)"],
            ["G(0.9)", "G(0.9998)", "G(1)"],
            ["G(0.9)", "G(1)", "G(1)"],
        ]
    )


SETTINGS = {1: _setting_1, 2: _setting_2, 3: _setting_3}

# natural estimator line-ups for each setting
SETTING_ESTIMATORS = {
    1: ["TFOBI", "22-TJADE", "TJADE", "VFOBI", "3-VJADE", "VJADE"],
    2: ["TFOBI", "123-TJADE", "TJADE", "VJADE"],
    3: ["TFOBI", "11-TJADE", "22-TJADE", "TJADE", "VJADE"],
}


def setting_layout(number):
    try:
        return SETTINGS[number]()
    except KeyError:
        raise ValueError(f"unknown setting {number}; choose from {sorted(SETTINGS)}")


def timing_layout(q):
    """``3 x q`` grid with a chi-square of ``3 j + i + 1`` degrees of freedom in
    cell ``(i, j)``."""
    arr = np.empty((3, q), dtype=object)
    for i in range(3):
        for j in range(q):
            arr[i, j] = DistributionSpec("chisq", float(3 * j + i + 1))
    return arr


def row_kurtosis_means(layout, mode=0):
    """Analytic kurtosis means over the ``mode``-mode faces of a layout."""
    kurt = np.vectorize(lambda d: d.kurtosis, otypes=[float])(layout)
    axes = tuple(a for a in range(kurt.ndim) if a != mode)
    return kurt.mean(axis=axes)


def _seed(entropy, *key):
    return np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in key))


def sample_latent(layout, n, seed):
    """Draw ``n`` latent tensors; every cell has its own random stream.

    ``seed`` is an int or a ``SeedSequence``; cell streams are its children.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    cells = list(np.ndindex(*layout.shape))
    children = seed.spawn(len(cells))
    out = np.empty((n,) + layout.shape)
    for idx, child in zip(cells, children):
        rng = np.random.Generator(np.random.PCG64(child))
        out[(slice(None),) + idx] = layout[idx].draw(rng, n)
    return out


def haar_orthogonal(p, rng):
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
    signs of ``diag(R)`` folded into ``Q``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def mixing_matrices(kind, dims, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if kind == "identity":
        return [np.eye(p) for p in dims]
    if kind == "orthogonal":
        return [haar_orthogonal(p, rng) for p in dims]
    if kind == "gaussian":
        return [rng.standard_normal((p, p)) for p in dims]
    raise ValueError(f"unknown mixing scenario {kind!r}; choose from {SCENARIOS}")


def mix(latent, mixing):
    return multiply_all_modes(latent, mixing, sample=True)


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    vector: bool
    plan: ModePlan = None
    method: str = None
    k: int = None

    def run(self, x, config):
        if self.vector:
            return fit_vectorized(x, self.method, self.k, config)
        return fit(x, self.plan, config)


def parse_estimator(name, order):
    """Parse names such as ``TFOBI``, ``TJADE``, ``22-TJADE``, ``1,2,3-TJADE``,
    ``VFOBI``, ``VJADE`` and ``3-VJADE``."""
    text = name.strip()
    upper = text.upper()
    if upper == "TFOBI":
        return EstimatorSpec(text, False, plan=ModePlan.uniform("tfobi", order))
    if upper == "TJADE":
        return EstimatorSpec(text, False, plan=ModePlan.uniform("tjade", order))
    if upper == "VFOBI":
        return EstimatorSpec(text, True, method="vfobi")
    if upper == "VJADE":
        return EstimatorSpec(text, True, method="vjade")
    match = re.fullmatch(r"([0-9,]+)-(TJADE|VJADE)", upper)
    if not match:
        raise ValueError(f"cannot parse estimator {name!r}")
    digits, family = match.groups()
    if family == "VJADE":
        return EstimatorSpec(text, True, method="k_vjade", k=int(digits.replace(",", "")))
    ks = [int(d) for d in digits.split(",")] if "," in digits else [int(d) for d in digits]
    if len(ks) != order:
        raise ValueError(f"{name!r} gives {len(ks)} band widths for a tensor of order {order}")
    return EstimatorSpec(text, False, plan=ModePlan.k_tjade(ks))


@dataclass
class ExperimentSpec:
    layout: np.ndarray
    sample_sizes: list
    replicates: int
    estimators: list
    scenarios: list = field(default_factory=lambda: ["identity"])
    seed: int = 0
    config: JointDiagConfig = field(default_factory=JointDiagConfig)
    workers: int = 1

    def __post_init__(self):
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ValueError(f"unknown mixing scenario {s!r}; choose from {SCENARIOS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        order = self.layout.ndim
        self.estimators = [
            e if isinstance(e, EstimatorSpec) else parse_estimator(e, order)
            for e in self.estimators
        ]


@dataclass
class ExperimentResult:
    table: list
    """One dict per (estimator, scenario, n)."""
    md: dict
    """Per-replicate MD values keyed by (estimator, scenario, n); NaN marks a failure."""
    seconds: dict
    errors: dict


def _replicate(spec, size_index, rep):
    n = spec.sample_sizes[size_index]
    latent = sample_latent(spec.layout, n, _seed(spec.seed, size_index, rep, 0))
    out = {}
    for scenario in spec.scenarios:
        rng = np.random.Generator(
            np.random.PCG64(_seed(spec.seed, size_index, rep, 1, _SCENARIO_CODE[scenario]))
        )
        omegas = mixing_matrices(scenario, spec.layout.shape, rng)
        x = mix(latent, omegas)
        for est in spec.estimators:
            t0 = time.perf_counter()
            try:
                res = est.run(x, spec.config)
                md = md_index(gain_matrix(res.unmixing, omegas))
                err = None
            except Exception as exc:
                md, err = float("nan"), f"{type(exc).__name__}: {exc}"
            out[(est.name, scenario)] = (md, time.perf_counter() - t0, err)
    return out


def _replicate_task(args):
    return _replicate(*args)


def run_experiment(spec):
    """Monte Carlo study of the transformed MD index.

    For each sample size and replicate a latent sample is drawn once and mixed
    under every scenario; every estimator is fitted to each mixed sample and
    scored with the MD index of its gain matrix. Failures are recorded and
    excluded from the aggregates.
    """
    tasks = [
        (spec, i, rep)
        for i in range(len(spec.sample_sizes))
        for rep in range(spec.replicates)
    ]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=4))
    else:
        results = [_replicate_task(t) for t in tasks]

    rho = int(np.prod(spec.layout.shape))
    md, seconds, errors = {}, {}, {}
    for (_, i, rep), res in zip(tasks, results):
        n = spec.sample_sizes[i]
        for (name, scenario), (value, secs, err) in res.items():
            key = (name, scenario, n)
            md.setdefault(key, np.full(spec.replicates, np.nan))[rep] = value
            seconds.setdefault(key, np.zeros(spec.replicates))[rep] = secs
            if err:
                errors.setdefault(key, []).append((rep, err))

    table = []
    for est in spec.estimators:
        for scenario in spec.scenarios:
            for n in spec.sample_sizes:
                key = (est.name, scenario, n)
                values = md[key]
                ok = values[~np.isnan(values)]
                tmd = transformed_md(ok, n, rho)
                table.append(
                    {
                        "estimator": est.name,
                        "scenario": scenario,
                        "n": n,
                        "replicates": int(ok.size),
                        "failures": int(values.size - ok.size),
                        "mean_tmd": float(tmd.mean()) if ok.size else float("nan"),
                        "sd_tmd": float(tmd.std(ddof=1)) if ok.size > 1 else float("nan"),
                        "mean_md": float(ok.mean()) if ok.size else float("nan"),
                        "median_md": float(np.median(ok)) if ok.size else float("nan"),
                        "mean_seconds": float(seconds[key].mean()),
                    }
                )
    return ExperimentResult(table=table, md=md, seconds=seconds, errors=errors)


TIMING_ESTIMATORS = [
    "VFOBI", "TFOBI", "1-VJADE", "2-VJADE", "3-VJADE", "VJADE",
    "11-TJADE", "12-TJADE", "21-TJADE", "22-TJADE", "TJADE",
]


def run_timing(widths, n=1000, estimators=None, iterations=5, seed=0, config=None):
    """Mean wall time of each estimator on the ``3 x q`` chi-square grid.

    Returns one dict per (q, estimator). Estimators that refuse the size
    (vectorized methods above their dimension cap) are reported with
    ``status == "refused"`` and a NaN time.
    """
    config = config or JointDiagConfig()
    estimators = estimators or TIMING_ESTIMATORS
    rows = []
    for q in widths:
        layout = timing_layout(q)
        specs = [parse_estimator(e, 2) for e in estimators]
        times = {s.name: [] for s in specs}
        status = {s.name: "ok" for s in specs}
        for it in range(iterations):
            x = sample_latent(layout, n, _seed(seed, q, it))
            for s in specs:
                if status[s.name] != "ok":
                    continue
                t0 = time.perf_counter()
                try:
                    s.run(x, config)
                except ValueError as exc:
                    if "refused" in str(exc):
                        status[s.name] = "refused"
                        continue
                    raise
                times[s.name].append(time.perf_counter() - t0)
        for s in specs:
            vals = times[s.name]
            rows.append(
                {
                    "q": q,
                    "estimator": s.name,
                    "iterations": len(vals),
                    "mean_seconds": float(np.mean(vals)) if vals else float("nan"),
                    "status": status[s.name],
                }
            )
    return rows
