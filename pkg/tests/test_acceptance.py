"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  The Monte Carlo fixtures are shared across criteria
and sized so the whole module finishes in minutes on a small machine.
"""
import itertools
import math
import os
import time

import numpy as np
import pytest

from longnet.baselines import hooi, hosvd
from longnet.estimator import PgdConfig, grad_factors, initialize, log_likelihood, pgd_fit
from longnet.events import equal_partition
from longnet.merging import MergeConfig, best_ordered_partition, normalize_w
from longnet.pipeline import PipelineConfig, compare_methods, sweep_L
from longnet.synthetic import (GroundTruth, SyntheticConfig, generate_truth, sample_edges)
from longnet.tensor import TuckerFactors, frobenius_norm, tucker_assemble

JOBS = int(os.environ.get("LONGNET_TEST_JOBS", min(2, os.cpu_count() or 1)))
REPS = 20


def _report(criterion: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line, flush=True)
    assert ok, line


def _table(n, horizon, k0, reps=REPS, seed=0):
    cfg = PipelineConfig(
        synthetic=SyntheticConfig(n=n, horizon=horizon, ranks=(3, 3, 3), k0=k0, seed=seed),
        ranks=(3, 3, 3), lambda0=1.0)
    return compare_methods(cfg, replications=reps, jobs=JOBS)


@pytest.fixture(scope="module")
def table_t50_k3():
    return _table(50, 50.0, 3)


@pytest.fixture(scope="module")
def table_t50_k5():
    return _table(50, 50.0, 5)


@pytest.fixture(scope="module")
def table_cbrt():
    return _table(50, 50.0 ** (1.0 / 3.0), 3)


@pytest.fixture(scope="module")
def table_strong():
    n = 50
    horizon = 2500.0
    for _ in range(60):  # fixed point of T = n^2 / log(nT)
        horizon = n * n / math.log(n * horizon)
    return _table(n, horizon, 3)


def test_criterion_1_gradient_correctness():
    start = time.time()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ranks, n1, n2, L = (2, 2, 2), 5, 5, 4
        s = rng.standard_normal(ranks)
        u = rng.standard_normal((n1, ranks[0]))
        v = rng.standard_normal((n2, ranks[1]))
        w = rng.standard_normal((L, ranks[2]))
        f = TuckerFactors(s, u, v, w)
        peak = np.abs(tucker_assemble(f)).max()
        if peak > 3.0:
            f = TuckerFactors(s * (3.0 / peak), u, v, w)
        p = equal_partition(2.0, L)
        counts = rng.poisson(np.exp(tucker_assemble(f)) * p.widths).astype(float)
        grads = grad_factors(f, counts, p, PgdConfig(lambda0=1.0))
        h = 1e-6

        def like(fac):
            return log_likelihood(tucker_assemble(fac), counts, p, 1.0)

        fields = {"core": f.core, "u": f.u, "v": f.v, "w": f.w}
        for key, grad in zip(("core", "u", "v", "w"), grads):
            fd = np.zeros_like(grad)
            for idx in np.ndindex(grad.shape):
                plus = dict(fields)
                minus = dict(fields)
                arr_p = fields[key].copy()
                arr_m = fields[key].copy()
                arr_p[idx] += h
                arr_m[idx] -= h
                plus[key] = arr_p
                minus[key] = arr_m
                fd[idx] = (like(TuckerFactors(**plus)) - like(TuckerFactors(**minus))) / (2 * h)
            rel = frobenius_norm(fd - grad) / max(frobenius_norm(fd), 1e-12)
            worst = max(worst, rel)
    elapsed = time.time() - start
    _report("1 gradient-correctness",
            worst < 1e-6 and elapsed < 10.0,
            f"max relative gradient error {worst:.2e} over 20 instances in {elapsed:.1f}s")


def test_criterion_2_dp_optimality():
    start = time.time()
    rng = np.random.default_rng(123)
    checked = 0
    for _ in range(100):
        big = int(rng.integers(3, 13))
        k = int(rng.integers(1, min(4, big) + 1))
        rows = rng.standard_normal((big, int(rng.integers(1, 4))))
        res = best_ordered_partition(rows, k)
        best = np.inf
        for cuts in itertools.combinations(range(1, big), k - 1):
            bounds = [0, *cuts, big]
            loss = sum(((rows[a:b] - rows[a:b].mean(axis=0)) ** 2).sum()
                       for a, b in zip(bounds[:-1], bounds[1:]))
            best = min(best, loss)
        own = sum(((rows[a - 1:b] - rows[a - 1:b].mean(axis=0)) ** 2).sum()
                  for a, b in res.segments)
        assert math.isclose(res.loss, best, rel_tol=1e-9, abs_tol=1e-12)
        assert math.isclose(own, best, rel_tol=1e-9, abs_tol=1e-12)
        checked += 1
    elapsed = time.time() - start
    _report("2 dp-optimality", checked == 100 and elapsed < 30.0,
            f"{checked} instances matched exhaustive enumeration in {elapsed:.1f}s")


def test_criterion_3_normalization():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        big = int(rng.integers(4, 30))
        r = int(rng.integers(1, min(4, big) + 1))
        w = rng.standard_normal((big, r)) @ np.diag(rng.uniform(0.5, 3.0, r))
        out = normalize_w(w)
        worst = max(worst, frobenius_norm(out.T @ out / big - np.eye(r)))
    _report("3 normalization", worst < 1e-10,
            f"max ||W'W/L - I||_F = {worst:.2e} over 100 inputs")


def test_criterion_4_single_cell_mle():
    worst = 0.0
    for y in (1.0, 3.0, 10.0):
        p = equal_partition(1.0, 1)
        counts = np.array([[[y]]])
        cfg = PgdConfig(lambda0=1.0, max_iters=6000,
                        c_s=100.0, c1=100.0, c2=100.0, c3=100.0)
        fit = pgd_fit(counts, p, initialize(counts, p, (1, 1, 1), cfg), cfg)
        worst = max(worst, abs(fit.assembled.ravel()[0] - np.log(y)))
    _report("4 single-cell-mle", worst < 1e-4,
            f"max |m - log Y| = {worst:.2e} for Y in (1, 3, 10)")


def test_criterion_5_k_selection(table_t50_k3, table_t50_k5):
    k3 = np.array([row["k_hat"] for row in table_t50_k3["per_rep"]])
    k5 = np.array([row["k_hat"] for row in table_t50_k5["per_rep"]])
    rate3 = float(np.mean(k3 == 3))
    rate5 = float(np.mean(k5 == 5))
    _report("5 k-selection", rate3 >= 0.9 and rate5 >= 0.8,
            f"K0=3 recovered in {rate3:.0%}, K0=5 in {rate5:.0%} of {REPS} seeds")


def test_criterion_6_error_magnitude(table_t50_k3):
    mean_am = table_t50_k3["am_log"]["mean"]
    _report("6 error-magnitude", mean_am <= 0.01,
            f"mean merged-estimate error {mean_am:.5f} (required <= 0.01)")


def test_criterion_7_method_ordering(table_t50_k3, table_cbrt):
    am = table_t50_k3["am_log"]["mean"]
    es_str = table_t50_k3["es_str_log"]["mean"]
    hooi_err = table_t50_k3["hooi_log"]["mean"]
    hosvd_err = table_t50_k3["hosvd_log"]["mean"]
    first = am < es_str and am < hooi_err and am < hosvd_err
    es_opt_c = table_cbrt["es_opt_log"]["mean"]
    am_c = table_cbrt["am_log"]["mean"]
    second = es_opt_c <= am_c
    _report("7 method-ordering", first and second,
            f"T=n: AM {am:.4f} vs ES(Lstr) {es_str:.4f}, HOOI {hooi_err:.4f}, "
            f"HOSVD {hosvd_err:.4f}; T=n^(1/3): ES(Lopt) {es_opt_c:.4f} vs AM {am_c:.4f}")


def test_criterion_8_bias_variance_sweep():
    grid = [6, 12, 24, 48, 96, 192, 384]
    interior = 0
    sweeps = 10
    argmins = []
    for s in range(sweeps):
        cfg = PipelineConfig(
            synthetic=SyntheticConfig(n=50, horizon=50.0, ranks=(3, 3, 3), k0=3,
                                      seed=1000 * (s + 1)),
            ranks=(3, 3, 3), lambda0=1.0)
        rows = sweep_L(cfg, grid, replications=2, jobs=JOBS)
        means = [r["mean_error"] for r in rows if r["method"] == "ES"]
        argmin = int(np.argmin(means))
        argmins.append(grid[argmin])
        if 0 < argmin < len(grid) - 1:
            interior += 1
    _report("8 bias-variance-sweep", interior >= 0.8 * sweeps,
            f"minimum interior in {interior}/{sweeps} sweeps (argmins {argmins})")


def test_criterion_9_partition_recovery(table_strong):
    sup = np.array([row["eta_sup_rel"] for row in table_strong["per_rep"]])
    k_ok = np.array([row["k_hat"] == 3 for row in table_strong["per_rep"]])
    rate = float(np.mean((sup <= 0.1) & k_ok))
    _report("9 partition-recovery", rate >= 0.9,
            f"sup-norm endpoint error <= 0.1*T in {rate:.0%} of {REPS} seeds "
            f"(max {sup.max():.3f})")


def test_criterion_10_poisson_moments():
    cfg = SyntheticConfig(n=5, horizon=3.0, ranks=(2, 2, 2), k0=3, seed=5)
    gt = generate_truth(cfg)
    rates = 1.0 * np.exp(gt.theta) * gt.eta.widths
    seeds = 200
    totals = np.zeros_like(rates)
    from longnet.events import bin_edges

    for s in range(seeds):
        totals += bin_edges(sample_edges(gt, 1.0, 10_000 + s), gt.eta)
    means = totals / seeds
    se = np.sqrt(rates / seeds)
    worst = np.max(np.abs(means - rates) / np.maximum(se, 1e-12))
    _report("10 poisson-moments", worst <= 4.0,
            f"max |empirical - expected| = {worst:.2f} standard errors over {seeds} seeds")


def test_criterion_11_baseline_sanity():
    rng = np.random.default_rng(99)
    violations = 0
    for _ in range(50):
        t = rng.standard_normal((6, 5, 7))
        ranks = (2, 2, 2)
        err_h = frobenius_norm(t - tucker_assemble(hosvd(t, ranks)))
        err_o = frobenius_norm(t - tucker_assemble(hooi(t, ranks)))
        if err_o > err_h + 1e-10:
            violations += 1
    exact_ok = True
    for seed in range(5):
        rng2 = np.random.default_rng(seed)
        f = TuckerFactors(rng2.standard_normal((2, 2, 2)),
                          np.linalg.qr(rng2.standard_normal((6, 2)))[0],
                          np.linalg.qr(rng2.standard_normal((6, 2)))[0],
                          np.linalg.qr(rng2.standard_normal((6, 2)))[0])
        t = tucker_assemble(f)
        exact_ok &= frobenius_norm(t - tucker_assemble(hosvd(t, (2, 2, 2)))) < 1e-10
        exact_ok &= frobenius_norm(t - tucker_assemble(hooi(t, (2, 2, 2)))) < 1e-10
    _report("11 baseline-sanity", violations == 0 and exact_ok,
            f"HOOI <= HOSVD on 50/50 random tensors; exact on low-rank inputs: {exact_ok}")
