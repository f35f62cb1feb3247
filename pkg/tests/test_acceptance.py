"""Acceptance criteria 1-10.

Every check prints one ``CRITERION <n>: PASS|FAIL`` line; the lines are
repeated in the terminal summary. Seeds were fixed before the first run.
"""

import time
import warnings

import numpy as np
import pytest

from ktjade.estimators import ModePlan, fit
from ktjade.jointdiag import (
    JointDiagConfig,
    diag_objective,
    joint_diagonalize,
    off_objective,
)
from ktjade.metrics import md_index, md_index_bruteforce, relative_md, scree
from ktjade.moments import cumulant_matrix, fobi_matrix
from ktjade.simulation import (
    ExperimentSpec,
    haar_orthogonal,
    parse_layout,
    run_experiment,
    run_timing,
    sample_latent,
    setting_layout,
)
from ktjade.tensor import multiply_all_modes

RESULTS = []


def record(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_orthogonal_equivariance():
    t0 = time.perf_counter()
    layout = setting_layout(1)
    root = np.random.SeedSequence(101)
    plans = {
        "TFOBI": ModePlan.uniform("tfobi", 2),
        "TJADE": ModePlan.uniform("tjade", 2),
        "22-TJADE": ModePlan.k_tjade((2, 2)),
    }
    worst = {name: 0.0 for name in plans}
    for child in root.spawn(20):
        data_seed, mix_seed = child.spawn(2)
        z = sample_latent(layout, 2000, data_seed)
        rng = np.random.default_rng(mix_seed)
        u = [haar_orthogonal(3, rng), haar_orthogonal(3, rng)]
        zu = multiply_all_modes(z, u, sample=True)
        for name, plan in plans.items():
            base = fit(z, plan).unmixing
            rotated = fit(zu, plan).unmixing
            for m in range(2):
                worst[name] = max(worst[name], relative_md(rotated[m] @ u[m], base[m]))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and elapsed < 120
    detail = ", ".join(f"{k} max {v:.2e}" for k, v in worst.items())
    record(1, ok, f"{detail} (<= 1e-8), {elapsed:.0f}s")


def test_criterion_02_vectorized_affine_invariance():
    t0 = time.perf_counter()
    spec = ExperimentSpec(setting_layout(1), [2000], 20, ["VJADE"],
                          scenarios=["identity", "orthogonal", "gaussian"], seed=102)
    res = run_experiment(spec)
    ref = res.md[("VJADE", "identity", 2000)]
    diff = max(np.max(np.abs(res.md[("VJADE", s, 2000)] - ref)) for s in ("orthogonal", "gaussian"))
    elapsed = time.perf_counter() - t0
    ok = diff <= 1e-6 and not np.isnan(ref).any() and elapsed < 300
    record(2, ok, f"max per-replicate MD difference {diff:.2e} (<= 1e-6), {elapsed:.0f}s")


def test_criterion_03_md_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    oracle_gap = invariance_gap = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 7))
        g = rng.standard_normal((p, p))
        oracle_gap = max(oracle_gap, abs(md_index(g) - md_index_bruteforce(g)))
        c = float(rng.uniform(0.01, 100))
        pj = np.eye(p)[rng.permutation(p)] * rng.choice([-1.0, 1.0], p)
        invariance_gap = max(invariance_gap, abs(md_index(c * pj @ g) - md_index(g)))
    elapsed = time.perf_counter() - t0
    ok = oracle_gap <= 1e-10 and invariance_gap <= 1e-12 and elapsed < 60
    record(3, ok, f"assignment vs enumeration {oracle_gap:.1e} (<= 1e-10), "
                  f"D(cPJG) - D(G) {invariance_gap:.1e} (<= 1e-12), {elapsed:.0f}s")


def test_criterion_04_population_cumulant_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    z = rng.exponential(size=(10**6, 2, 3)) - 1.0
    eig_gap = np.max(np.abs(np.linalg.eigvalsh(fobi_matrix(z)) - 12.0))
    off_gap = np.max(np.abs(cumulant_matrix(z, 0, 1)))
    diag_gap = 0.0
    for i in range(2):
        target = np.zeros((2, 2))
        target[i, i] = 6.0
        diag_gap = max(diag_gap, np.max(np.abs(cumulant_matrix(z, i, i) - target)))
    elapsed = time.perf_counter() - t0
    ok = eig_gap <= 0.2 and off_gap <= 0.05 and diag_gap <= 0.2 and elapsed < 180
    record(4, ok, f"|eig(B) - 12| {eig_gap:.3f} (<= 0.2), |C^12| {off_gap:.3f} (<= 0.05), "
                  f"|C^ii - 6 E^ii| {diag_gap:.3f} (<= 0.2), {elapsed:.0f}s")


@pytest.fixture(scope="module")
def setting1_large():
    t0 = time.perf_counter()
    spec = ExperimentSpec(setting_layout(1), [64_000], 100, ["TFOBI", "22-TJADE", "TJADE"], seed=7)
    res = run_experiment(spec)
    return res, time.perf_counter() - t0


def test_criterion_05_banded_matches_full_tjade(setting1_large):
    res, elapsed = setting1_large
    rows = {r["estimator"]: r for r in res.table}
    banded, full = rows["22-TJADE"]["mean_tmd"], rows["TJADE"]["mean_tmd"]
    rel = abs(banded - full) / full
    ok = rel <= 0.10 and rows["TJADE"]["failures"] == 0 and elapsed < 1800
    record(5, ok, f"mean tMD 22-TJADE {banded:.2f} vs TJADE {full:.2f}, "
                  f"relative gap {rel:.3f} (<= 0.10), {elapsed:.0f}s")


def test_criterion_06_consistency_trend():
    t0 = time.perf_counter()
    sizes = [1000, 4000, 16_000, 64_000]
    res = run_experiment(ExperimentSpec(setting_layout(2), sizes, 50, ["123-TJADE"], seed=6))
    medians = [r["median_md"] for r in res.table]
    steps_ok = all(b < a * 1.10 for a, b in zip(medians, medians[1:]))
    elapsed = time.perf_counter() - t0
    ok = steps_ok and elapsed < 2700
    record(6, ok, "median MD " + " > ".join(f"{m:.4f}" for m in medians)
           + f" (each step < 1.10 x previous), {elapsed:.0f}s")


def test_criterion_07_tfobi_assumption_violation(setting1_large):
    res, _ = setting1_large
    rows = {r["estimator"]: r for r in res.table}
    tfobi, banded = rows["TFOBI"]["median_md"], rows["22-TJADE"]["median_md"]
    ok = tfobi >= 0.2 and banded <= 0.05
    record(7, ok, f"median MD TFOBI {tfobi:.4f} (>= 0.2), 22-TJADE {banded:.4f} (<= 0.05)")


def test_criterion_08_timing():
    t0 = time.perf_counter()
    widths = list(range(5, 55, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = run_timing(widths, n=1000, iterations=5, seed=0,
                          config=JointDiagConfig(tolerance=1e-6, max_sweeps=100))
    elapsed = time.perf_counter() - t0
    print("q\testimator\titerations\tmean_seconds\tstatus")
    for r in rows:
        print(f"{r['q']}\t{r['estimator']}\t{r['iterations']}\t{r['mean_seconds']:.4f}\t{r['status']}")
    at50 = {r["estimator"]: r["mean_seconds"] for r in rows if r["q"] == 50}
    ratio = at50["TJADE"] / at50["11-TJADE"]
    complete = {r["q"] for r in rows} == set(widths)
    ok = ratio >= 5 and complete and elapsed < 3600
    record(8, ok, f"q=50: TJADE {at50['TJADE']:.2f}s, 11-TJADE {at50['11-TJADE']:.2f}s, "
                  f"ratio {ratio:.1f} (>= 5), {len(rows)} table rows, {elapsed:.0f}s")


def test_criterion_09_scree_detection():
    t0 = time.perf_counter()
    # kurtosis means per row: three tied (uniform), two tied (exponential), one Gaussian
    layout = parse_layout("6,4\nU U U U\nU U U U\nU U U U\nE E E E\nE E E E\nN N N N\n")
    rng = np.random.default_rng(9)
    omegas = [rng.standard_normal((6, 6)), rng.standard_normal((4, 4))]
    x = multiply_all_modes(sample_latent(layout, 20_000, 9), omegas, sample=True)
    curve = scree(x, 0)
    m = dict(zip(curve.ks, curve.values))
    tail = max(m[k] for k in curve.ks if k >= 3)
    elapsed = time.perf_counter() - t0
    ok = tail < 0.5 * m[2] and elapsed < 600
    record(9, ok, "m*_k " + ", ".join(f"{k}:{v:.4f}" for k, v in m.items())
           + f"; max k>=3 {tail:.4f} < half of m*_2 {0.5 * m[2]:.4f}, {elapsed:.0f}s")


def test_criterion_10_joint_diagonalization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    worst_md = worst_identity = 0.0
    monotone = True
    for p, k in [(3, 2), (5, 4), (8, 10), (12, 6)]:
        v0 = haar_orthogonal(p, rng)
        mats = np.array([v0 @ np.diag(rng.standard_normal(p)) @ v0.T for _ in range(k)])
        res = joint_diagonalize(mats)
        worst_md = max(worst_md, md_index(res.rotation.T @ v0))
        noise = rng.standard_normal(mats.shape)
        noisy = mats + 0.1 * (noise + np.transpose(noise, (0, 2, 1)))
        res = joint_diagonalize(noisy)
        monotone &= bool(np.all(np.diff(res.history) <= 1e-12))
        total = np.sum(noisy**2)
        for v in (np.eye(p), haar_orthogonal(p, rng), res.rotation):
            gap = abs(off_objective(v, noisy) + diag_objective(v, noisy) - total) / total
            worst_identity = max(worst_identity, gap)
    elapsed = time.perf_counter() - t0
    ok = worst_md <= 1e-6 and worst_identity <= 1e-9 and monotone and elapsed < 60
    record(10, ok, f"recovery MD {worst_md:.1e} (<= 1e-6), off + diag identity "
                   f"{worst_identity:.1e} (<= 1e-9 rel), monotone {monotone}, {elapsed:.1f}s")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
