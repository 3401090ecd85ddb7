"""End-to-end acceptance checks, one test per criterion.

Every test records a ``PASS``/``FAIL`` line that is printed in the terminal
summary (and immediately with ``-s``). Run on their own with::

    pytest tests/test_acceptance.py
"""
import csv
import itertools
import time
from collections import Counter

import numpy as np
import pytest

import conftest
from conftest import random_dataset, random_params
from genoclust import cli
from genoclust.data import AlleleIndex, GenotypeDataset
from genoclust.em import EmConfig, _Workspace, run_em
from genoclust.likelihood import MixtureParams, ModelSpec, dataset_loglik, individual_logliks, model_dimension
from genoclust.selection import (
    FitCache,
    SelectionConfig,
    exhaustive_select_S,
    k_max_bound,
    select_model,
    stepwise_select_S,
)
from genoclust.simulate import bundled_scenario, simulate_dataset

pytestmark = pytest.mark.acceptance


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_em_ascent():
    rng = np.random.default_rng(123)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        L = int(rng.integers(1, 6))
        K = int(rng.integers(1, 4))
        alleles = rng.integers(1, 5, size=L)
        codes = np.stack([rng.integers(1, a + 1, size=(n, 2)) for a in alleles], axis=1)
        ds = GenotypeDataset.from_codes(codes)
        S = tuple(np.flatnonzero(rng.random(L) < 0.6)) or (0,)
        config = EmConfig(restarts=3, seed=int(rng.integers(2**30)))
        fit = run_em(ds, ModelSpec(K, S), config, keep_history=True)
        for h in fit.histories:
            if len(h) > 1:
                worst = min(worst, float(np.min(np.diff(h))))
    elapsed = time.perf_counter() - start
    record(1, worst >= -1e-9 and elapsed < 120, f"worst step {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_simplex_and_normalization(monkeypatch):
    deviations = []
    original = _Workspace.m_step

    def checked(self, T, floor):
        pi, alpha, empty, clamped = original(self, T, floor)
        mask = self.mask[None, None]
        deviations.append(np.max(np.abs(pi.sum(axis=1) - 1)))
        deviations.append(np.max(np.abs(alpha.sum(axis=-1) - 1)))
        assert np.all(pi > 0) and np.all(alpha[np.broadcast_to(mask, alpha.shape)] >= 0)
        assert np.all(alpha[~np.broadcast_to(mask, alpha.shape)] == 0)
        deviations.append(np.max(np.abs(self.beta.sum(axis=-1) - 1)) if len(self.beta) else 0.0)
        return pi, alpha, empty, clamped

    monkeypatch.setattr(_Workspace, "m_step", checked)
    rng = np.random.default_rng(2)
    for _ in range(200):
        alleles = list(rng.integers(1, 6, size=int(rng.integers(1, 5))))
        ds = random_dataset(rng, int(rng.integers(2, 40)), alleles)
        S = tuple(np.flatnonzero(rng.random(len(alleles)) < 0.6)) or (0,)
        run_em(ds, ModelSpec(int(rng.integers(1, 5)), S), EmConfig(restarts=3, seed=int(rng.integers(1000))))
    simplex = max(deviations)

    norm = 0.0
    for _ in range(200):
        A = int(rng.integers(1, 8))
        K = int(rng.integers(1, 5))
        codes = np.array([(a, b) for a in range(A) for b in range(a, A)])
        ds = GenotypeDataset.from_codes(codes[:, None, :])
        spec = ModelSpec(K, (0,))
        total = np.exp(individual_logliks(ds, spec, random_params(rng, spec, ds.index))).sum()
        norm = max(norm, abs(total - 1))
    record(2, simplex <= 1e-12 and norm <= 1e-10, f"simplex {simplex:.1e}, genotype sum {norm:.1e}")


def grid_best_loglik(codes):
    """Best log-likelihood over a 0.05 grid on (pi, p_11, p_12, p_21, p_22); codes are 0/1 labels."""
    g = np.linspace(0.0, 1.0, 21)

    def hw(p, pair):
        a, b = pair
        q = (p if a == 0 else 1 - p) * (p if b == 0 else 1 - p)
        return q * (1.0 if a == b else 2.0)

    n = len(codes)
    # probability of each individual under every (locus-1 freq, locus-2 freq) pair
    P = np.empty((21, 21, n))
    for i, (x1, x2) in enumerate(codes):
        P[:, :, i] = hw(g[:, None], x1) * hw(g[None, :], x2)
    P = P.reshape(441, n)
    best = -np.inf
    with np.errstate(divide="ignore"):
        for pi in g:
            mix = pi * P[:, None, :] + (1 - pi) * P[None, :, :]
            best = max(best, float(np.log(mix).sum(axis=-1).max()))
    return best


def test_criterion_03_grid_oracle():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = np.inf
    for inst in range(50):
        while True:
            n = int(rng.integers(2, 9))
            codes = np.sort(rng.integers(0, 2, size=(n, 2, 2)), axis=2)
            if all(len(np.unique(codes[:, l, :])) == 2 for l in range(2)):
                break
        ds = GenotypeDataset.from_codes(codes + 1)
        fit = run_em(ds, ModelSpec(2, (0, 1)), EmConfig(restarts=200, seed=inst))
        worst = min(worst, fit.loglik - grid_best_loglik(codes))
    elapsed = time.perf_counter() - start
    record(3, worst >= -1e-6 and elapsed < 300, f"min(EM - grid) {worst:.2e}, {elapsed:.1f}s")


def test_criterion_04_nesting():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        alleles = list(rng.integers(2, 5, size=4))
        ds = random_dataset(rng, 30, alleles)
        K = int(rng.integers(1, 4))
        S = tuple(sorted(rng.choice(4, size=int(rng.integers(1, 4)), replace=False)))
        spec = ModelSpec(K, S)
        theta = random_params(rng, spec, ds.index)
        base = dataset_loglik(ds, spec, theta)

        share = rng.uniform(0.05, 0.95)
        pi = np.concatenate([theta.pi[:-1], theta.pi[-1:] * share, theta.pi[-1:] * (1 - share)])
        split = MixtureParams(pi, np.concatenate([theta.alpha, theta.alpha[-1:]]), theta.beta)
        worst = max(worst, abs(dataset_loglik(ds, ModelSpec(K + 1, S), split) / base - 1))

        Sc = spec.complement(4)
        added = Sc[int(rng.integers(len(Sc)))]
        bigger = ModelSpec(K, S + (added,))
        alpha = np.insert(theta.alpha, bigger.S.index(added), theta.beta[Sc.index(added)], axis=1)
        beta = np.delete(theta.beta, Sc.index(added), axis=0)
        worst = max(worst, abs(dataset_loglik(ds, bigger, MixtureParams(theta.pi, alpha, beta)) / base - 1))
    record(4, worst <= 1e-10, f"max relative change {worst:.1e}")


def test_criterion_05_dimension_and_bound():
    index = AlleleIndex(tuple(tuple(range(1, a + 1)) for a in (2, 3, 4, 2)))
    mismatches = 0
    for K in range(1, 5):
        for r in range(1, 5):
            for S in itertools.combinations(range(4), r):
                spec = ModelSpec(K, S)
                # one coordinate per allele per simplex, minus one sum constraint per simplex
                simplices = [K] + [index.n_alleles[l] for l in S for _ in range(K)]
                simplices += [index.n_alleles[l] for l in spec.complement(4)]
                brute = sum(simplices) - len(simplices)
                mismatches += model_dimension(spec, index) != brute
    biallelic = AlleleIndex(((1, 2), (1, 2)))
    two, one = k_max_bound(biallelic, (0, 1)), k_max_bound(biallelic, (0,))
    record(5, mismatches == 0 and two == 3 and one == 1,
           f"{mismatches} dimension mismatches, bounds {two} and {one}")


def _run_reproduce(out):
    args = ["reproduce", "--scenario", "consistency", "--out", str(out),
            "--n-grid", "100,200,400", "--replicates", "20", "--kmax", "4"]
    assert cli.main(args) == 0
    with open(out / "curve.csv") as fh:
        return {int(row["n"]): float(row["true_model_rate"]) for row in csv.DictReader(fh)}


@pytest.fixture(scope="module")
def reproduce_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reproduce")
    start = time.perf_counter()
    curve = _run_reproduce(out)
    return out, curve, time.perf_counter() - start


def test_criterion_06_consistency(reproduce_run):
    _, curve, elapsed = reproduce_run
    ok = curve[400] >= 0.7 and curve[400] >= curve[100] and elapsed < 900
    rates = ", ".join(f"n={n}: {r:.2f}" for n, r in sorted(curve.items()))
    record(6, ok, f"{rates}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def noisy_runs():
    sc = bundled_scenario("noisy-loci")
    start = time.perf_counter()
    with_sel, without = [], []
    for r in range(10):
        ds, _ = simulate_dataset(sc, r)
        em = EmConfig(seed=r)
        cache = FitCache(ds, em)
        with_sel.append(select_model(ds, SelectionConfig(k_ceiling=4, em=em), cache))
        without.append(select_model(ds, SelectionConfig(k_ceiling=4, select_loci=False, em=em), cache))
    return with_sel, without, time.perf_counter() - start


def test_criterion_07_selection_benefit(noisy_runs):
    with_sel, without, elapsed = noisy_runs
    k3_sel = sum(r.K == 3 for r in with_sel)
    k3_all = sum(r.K == 3 for r in without)
    s_hits = sum(r.S == (0, 1, 2, 3) for r in with_sel)
    ok = k3_sel >= k3_all and s_hits >= 7 and elapsed < 1200
    record(7, ok, f"K=3 with selection {k3_sel}/10, without {k3_all}/10, S={{1,2,3,4}} {s_hits}/10, {elapsed:.0f}s")


def test_criterion_08_underestimation(noisy_runs):
    _, without, _ = noisy_runs
    ks = [r.K for r in without]
    counts = Counter(ks)
    modal = max(sorted(counts), key=lambda k: counts[k])
    ok = modal <= 3 and min(ks) < 3
    record(8, ok, f"all-loci K estimates {sorted(ks)}, modal {modal}")


def test_criterion_09_determinism(reproduce_run, tmp_path):
    first, _, _ = reproduce_run
    _run_reproduce(tmp_path)
    names = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    again = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    differing = [str(p) for p in names if (first / p).read_bytes() != (tmp_path / p).read_bytes()]
    ok = names == again and not differing
    record(9, ok, f"{len(names)} files compared, {len(differing)} differ")


def test_criterion_10_exhaustive_agreement():
    sc = bundled_scenario("consistency")
    agree = 0
    for r in range(20):
        ds, _ = simulate_dataset(sc, r)
        cache = FitCache(ds, EmConfig(seed=r))
        same = True
        for K in (1, 2, 3):
            step_S, _, _ = stepwise_select_S(ds, K, cache)
            full_S = exhaustive_select_S(ds, K, cache)
            if K == 1:
                # every (1, S) is the same distribution: compare the criterion, not the label set
                same &= cache.get(1, step_S).bic == cache.get(1, full_S).bic
            else:
                same &= step_S == full_S
        agree += same
    record(10, agree >= 18, f"stepwise equals exhaustive in {agree}/20 replicates")
