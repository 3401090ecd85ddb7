import numpy as np
import pytest

from genoclust.data import GenotypeDataset
from genoclust.likelihood import MixtureParams


def random_dataset(rng, n, n_alleles):
    """Dataset with raw codes 1..A_l drawn uniformly; every allele appears at least once."""
    L = len(n_alleles)
    codes = np.empty((n, L, 2), dtype=np.int64)
    for l, A in enumerate(n_alleles):
        codes[:, l, :] = rng.integers(1, A + 1, size=(n, 2))
        # force every allele to be observed so the index has exactly A_l labels
        flat = codes[:, l, :].reshape(-1)
        flat[: min(A, flat.size)] = np.arange(1, min(A, flat.size) + 1)
        codes[:, l, :] = flat.reshape(n, 2)
    return GenotypeDataset.from_codes(codes)


def random_params(rng, spec, index, concentration=1.0):
    """Strictly positive parameters for ``spec`` in the padded layout."""
    A = index.max_alleles
    a = index.n_alleles
    Sc = spec.complement(index.n_loci)
    pi = rng.dirichlet(np.full(spec.K, 2.0))
    alpha = np.zeros((spec.K, len(spec.S), A))
    for j, l in enumerate(spec.S):
        alpha[:, j, : a[l]] = rng.dirichlet(np.full(a[l], concentration), size=spec.K)
    beta = np.zeros((len(Sc), A))
    for j, l in enumerate(Sc):
        beta[j, : a[l]] = rng.dirichlet(np.full(a[l], concentration))
    alpha = np.maximum(alpha, 1e-12 * (alpha > 0))
    return MixtureParams(pi, alpha, beta)


def brute_force_loglik(ds, spec, theta):
    """Plain-arithmetic evaluation of the mixture density, one individual at a time."""
    Sc = spec.complement(ds.n_loci)
    total = 0.0
    for g in ds.genotypes:
        def hw(freqs, a1, a2):
            return (1.0 if a1 == a2 else 2.0) * freqs[a1] * freqs[a2]

        mix = 0.0
        for k in range(spec.K):
            prod = theta.pi[k]
            for j, l in enumerate(spec.S):
                prod *= hw(theta.alpha[k, j], g[l, 0], g[l, 1])
            mix += prod
        pooled = 1.0
        for j, l in enumerate(Sc):
            pooled *= hw(theta.beta[j], g[l, 0], g[l, 1])
        total += np.log(mix * pooled)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset():
    text = "L1 L2\nind1 7 7 1 2\nind2 7 9 2 2\nind3 9 9 1 1\nind4 7 9 1 2\n"
    from genoclust.data import parse_genotypes

    return parse_genotypes(text)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
