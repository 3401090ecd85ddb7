"""Hardy-Weinberg mixture likelihoods, model dimension and BIC.

A model ``(K, S)`` clusters individuals on the loci in ``S`` only; loci in the
complement share one pooled allele-frequency vector across all clusters.
Frequencies are stored in arrays padded to the largest allele count, with the
padding held at zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .data import AlleleIndex, GenotypeDataset

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ModelSpec:
    """Number of clusters ``K`` and the (0-based) clustering loci ``S``."""

    K: int
    S: tuple[int, ...]

    def __post_init__(self):
        S = tuple(sorted({int(l) for l in self.S}))
        if int(self.K) < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not S:
            raise ValueError("S must contain at least one locus")
        if S[0] < 0:
            raise ValueError("locus indices must be non-negative")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "S", S)

    @classmethod
    def all_loci(cls, K: int, n_loci: int) -> "ModelSpec":
        return cls(K, tuple(range(n_loci)))

    def complement(self, n_loci: int) -> tuple[int, ...]:
        if self.S[-1] >= n_loci:
            raise ValueError(f"S={self.S} refers to loci beyond L={n_loci}")
        chosen = set(self.S)
        return tuple(l for l in range(n_loci) if l not in chosen)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """``pi`` (K,), ``alpha`` (K, |S|, A_max) over S, ``beta`` (|S^c|, A_max) over the complement."""

    pi: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    def permuted(self, order) -> "MixtureParams":
        order = np.asarray(order)
        return MixtureParams(self.pi[order].copy(), self.alpha[order].copy(), self.beta.copy())

    def check(self, spec: ModelSpec, index: AlleleIndex, atol: float = 1e-12) -> None:
        """Raise ``ValueError`` unless the parameters lie on their simplices."""
        L = index.n_loci
        Sc = spec.complement(L)
        A = index.max_alleles
        if self.pi.shape != (spec.K,):
            raise ValueError(f"pi has shape {self.pi.shape}, expected ({spec.K},)")
        if self.alpha.shape != (spec.K, len(spec.S), A):
            raise ValueError(f"alpha has shape {self.alpha.shape}, expected {(spec.K, len(spec.S), A)}")
        if self.beta.shape != (len(Sc), A):
            raise ValueError(f"beta has shape {self.beta.shape}, expected {(len(Sc), A)}")
        if np.any(self.pi <= 0) or abs(self.pi.sum() - 1.0) > atol:
            raise ValueError("mixing proportions must be positive and sum to one")
        mask = index.allele_mask()
        for name, freqs, loci in (("alpha", self.alpha, spec.S), ("beta", self.beta[None], Sc)):
            m = mask[list(loci)]
            if np.any(freqs < 0) or np.any(freqs[..., ~m] != 0):
                raise ValueError(f"{name} has negative entries or non-zero padding")
            if np.any(np.abs(freqs.sum(axis=-1) - 1.0) > atol):
                raise ValueError(f"{name} rows must sum to one")


def hwe_genotype_prob(genotype, freqs) -> float:
    """Probability of an unordered genotype under Hardy-Weinberg proportions."""
    a1, a2 = (int(a) for a in genotype)
    freqs = np.asarray(freqs, dtype=float)
    if not (0 <= a1 < len(freqs) and 0 <= a2 < len(freqs)):
        raise IndexError(f"allele pair {genotype} outside 0..{len(freqs) - 1}")
    factor = 1.0 if a1 == a2 else 2.0
    return factor * freqs[a1] * freqs[a2]


def het_log_factor(genotypes: np.ndarray) -> np.ndarray:
    """``log(2 - 1[a1 == a2])`` for every (row, locus)."""
    return np.where(genotypes[..., 0] == genotypes[..., 1], 0.0, LOG2)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def cluster_log_scores(log_alpha: np.ndarray, genotypes: np.ndarray, loci: Iterable[int]) -> np.ndarray:
    """Sum over ``loci`` of per-cluster log genotype probabilities, without the het factor.

    ``log_alpha`` is (R, K, |S|, A); ``genotypes`` is (U, L, 2). Returns (R, U, K).
    """
    R, K = log_alpha.shape[:2]
    U = genotypes.shape[0]
    out = np.zeros((R, K, U))
    for j, l in enumerate(loci):
        la = log_alpha[:, :, j, :]
        out += la[:, :, genotypes[:, l, 0]]
        out += la[:, :, genotypes[:, l, 1]]
    return out.transpose(0, 2, 1)


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    """Stabilized log-sum-exp over the last axis, ``-inf`` when every entry is ``-inf``."""
    m = x.max(axis=-1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        s = np.exp(x - safe[..., None]).sum(axis=-1)
    return safe + _log(s)


def pooled_log_terms(log_beta: np.ndarray, genotypes: np.ndarray, loci: Iterable[int]) -> np.ndarray:
    """Per-row, per-locus log HW probability under pooled frequencies: (U, len(loci))."""
    loci = list(loci)
    U = genotypes.shape[0]
    out = np.empty((U, len(loci)))
    for j, l in enumerate(loci):
        g = genotypes[:, l, :]
        out[:, j] = log_beta[j, g[:, 0]] + log_beta[j, g[:, 1]] + het_log_factor(g)
    return out


def row_logliks(genotypes: np.ndarray, spec: ModelSpec, theta: MixtureParams) -> np.ndarray:
    """Log-probability of every row of ``genotypes`` (shape (U, L, 2)) under ``(spec, theta)``."""
    L = genotypes.shape[1]
    Sc = spec.complement(L)
    if spec.K == 1:
        # single population: one locus-ordered sum, so every S yields the same bits
        freqs = np.empty((L, theta.alpha.shape[-1]))
        freqs[list(spec.S)] = theta.alpha[0]
        if Sc:
            freqs[list(Sc)] = theta.beta
        return pooled_log_terms(_log(freqs), genotypes, range(L)).sum(axis=1)
    scores = cluster_log_scores(_log(theta.alpha)[None], genotypes, spec.S)[0]
    scores = scores + _log(theta.pi)[None, :]
    # sorting fixes the summation order, so relabelling clusters cannot change a bit
    mix = logsumexp_rows(np.sort(scores, axis=1)) + het_log_factor(genotypes[:, list(spec.S), :]).sum(axis=1)
    if Sc:
        mix = mix + pooled_log_terms(_log(theta.beta), genotypes, Sc).sum(axis=1)
    return mix


def individual_loglik(genotype: np.ndarray, spec: ModelSpec, theta: MixtureParams) -> float:
    """Log-probability of one individual's multilocus genotype, shape (L, 2)."""
    g = np.sort(np.asarray(genotype, dtype=np.int64), axis=-1)[None]
    return float(row_logliks(g, spec, theta)[0])


def individual_logliks(ds: GenotypeDataset, spec: ModelSpec, theta: MixtureParams) -> np.ndarray:
    """Per-individual log-probabilities, evaluated row by row in dataset order."""
    return row_logliks(ds.genotypes, spec, theta)


def dataset_loglik(ds: GenotypeDataset, spec: ModelSpec, theta: MixtureParams) -> float:
    """``sum_u n_u log P(u)`` over the distinct genotypes of ``ds``.

    Summation runs over the sorted genotype table, so the value does not depend on
    the order of individuals in the dataset.
    """
    ll = row_logliks(ds.unique_genotypes, spec, theta)
    return float(np.sum(ds.counts * ll))


def model_dimension(spec: ModelSpec, index: AlleleIndex) -> int:
    """Free parameters: ``(K-1) + K * sum_S (A_l - 1) + sum_{S^c} (A_l - 1)``."""
    a = index.n_alleles
    Sc = spec.complement(index.n_loci)
    in_s = int(sum(int(a[l]) - 1 for l in spec.S))
    out_s = int(sum(int(a[l]) - 1 for l in Sc))
    return (spec.K - 1) + spec.K * in_s + out_s


def bic_value(loglik: float, dimension: int, n: int) -> float:
    return 2.0 * loglik - dimension * math.log(n)


def bic(ds: GenotypeDataset, spec: ModelSpec, loglik: float, theta: Optional[MixtureParams] = None) -> float:
    """``2 * loglik - d_(K,S) * ln n``; ``loglik`` should be the maximised value for ``spec``."""
    if ds.n < 2:
        warnings.warn("BIC with n = 1 carries no dimension penalty", RuntimeWarning, stacklevel=2)
    if theta is not None:
        theta.check(spec, ds.index, atol=1e-9)
    return bic_value(loglik, model_dimension(spec, ds.index), ds.n)
