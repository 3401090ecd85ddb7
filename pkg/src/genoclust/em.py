"""Multi-restart EM for Hardy-Weinberg mixtures with a fixed ``(K, S)``.

All restarts of one fit run as a single batch over a leading restart axis and
work on the table of distinct genotypes weighted by their counts. Each restart
draws its starting responsibilities from its own generator seeded with
``(seed, restart)``, so results do not depend on how restarts are scheduled.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import GenotypeDataset, allele_copy_counts
from .likelihood import (
    MixtureParams,
    ModelSpec,
    _log,
    bic_value,
    cluster_log_scores,
    dataset_loglik,
    het_log_factor,
    logsumexp_rows,
    model_dimension,
    pooled_log_terms,
)

logger = logging.getLogger(__name__)

PI_FLOOR = 1e-8


@dataclass(frozen=True)
class EmConfig:
    restarts: int = 50
    epsilon: float = 1e-6
    max_iterations: int = 500
    freq_floor: float = 1e-10
    seed: int = 0
    stopping: str = "observed"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.freq_floor < 1e-4:
            raise ValueError("freq_floor must lie in (0, 1e-4)")
        if self.stopping not in ("observed", "complete"):
            raise ValueError("stopping must be 'observed' or 'complete'")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Best of all restarts for one model, with canonical cluster order."""

    spec: ModelSpec
    params: MixtureParams
    loglik: float
    bic: float
    dimension: int
    n: int
    restarts_run: int
    iterations: int
    converged: bool
    empty_cluster: bool
    clamped: bool
    restart_logliks: np.ndarray = field(repr=False)
    histories: Optional[tuple] = field(default=None, repr=False)


class _Workspace:
    """Data-only quantities shared by every restart of a fit."""

    def __init__(self, ds: GenotypeDataset, spec: ModelSpec):
        L = ds.n_loci
        self.spec = spec
        self.S = list(spec.S)
        self.Sc = list(spec.complement(L))
        self.n = ds.n
        self.geno = ds.unique_genotypes
        self.weights = ds.counts.astype(np.float64)
        self.inverse = ds.inverse
        A = ds.index.max_alleles
        self.mask = ds.index.allele_mask()[self.S]
        copies = allele_copy_counts(self.geno[:, self.S, :], ds.index.n_alleles[self.S])
        if copies.shape[-1] < A:
            copies = np.pad(copies, ((0, 0), (0, 0), (0, A - copies.shape[-1])))
        self.copies = copies.reshape(copies.shape[0], -1)
        self.copies_t = np.ascontiguousarray(self.copies.T)
        self.shape_alpha = (len(self.S), A)
        self.pooled_S = estimate_beta(ds, self.S)
        self.beta = estimate_beta(ds, self.Sc)
        const = het_log_factor(self.geno[:, self.S, :]).sum(axis=1)
        if self.Sc:
            const = const + pooled_log_terms(_log(self.beta), self.geno, self.Sc).sum(axis=1)
        self.const = float(np.sum(self.weights * const))

    def aggregate(self, tau: np.ndarray) -> np.ndarray:
        """Per-individual responsibilities (..., n, K) summed onto distinct genotypes, as (..., K, U)."""
        out = np.zeros(tau.shape[:-2] + (len(self.weights), tau.shape[-1]))
        np.add.at(out, (..., self.inverse, slice(None)), tau)
        return np.ascontiguousarray(np.swapaxes(out, -1, -2))

    def m_step(self, T: np.ndarray, floor: Optional[float]):
        """M-step from count-weighted responsibilities ``T`` (R, K, U).

        Returns ``(pi, alpha, empty, clamped)``; with ``floor=None`` no repair or
        clamping is applied and empty clusters keep ``pi_k = 0``.
        """
        R, K, U = T.shape
        nk = T.sum(axis=2)
        pi = nk / self.n
        numer = np.matmul(T, self.copies).reshape((R, K) + self.shape_alpha)
        with np.errstate(invalid="ignore", divide="ignore"):
            alpha = numer / (2.0 * nk)[:, :, None, None]
        empty = pi < PI_FLOOR
        if np.any(empty):
            alpha[empty] = self.pooled_S
            if floor is not None:
                pi = np.maximum(pi, PI_FLOOR)
                pi = pi / pi.sum(axis=1, keepdims=True)
        clamped = np.zeros(R, dtype=bool)
        if floor is not None:
            low = (alpha < floor) & self.mask
            if np.any(low):
                clamped = low.any(axis=(1, 2, 3))
                alpha = np.where(low, floor, alpha)
                alpha = alpha / alpha.sum(axis=-1, keepdims=True)
        return pi, alpha, empty.any(axis=1), clamped

    def e_step(self, pi: np.ndarray, alpha: np.ndarray, complete: bool = False):
        """Observed-data loglik (R,), weighted responsibilities (R, K, U) and,
        when ``complete`` is set, the expected complete-data loglik (R,)."""
        R, K = pi.shape
        # padding entries carry zero copies; give them a finite log so 0 * log stays 0
        log_alpha = _log(np.where(self.mask, alpha, 1.0))
        scores = np.matmul(log_alpha.reshape(R, K, -1), self.copies_t)
        scores += _log(pi)[:, :, None]
        top = scores.max(axis=1, keepdims=True)
        with np.errstate(under="ignore"):
            e = np.exp(scores - top)
        total = e.sum(axis=1, keepdims=True)
        lse = (top + np.log(total))[:, 0, :]
        loglik = lse @ self.weights + self.const
        T = e * (self.weights / total)
        if not complete:
            return loglik, T, None
        expected = np.where(T > 0, T * scores, 0.0).sum(axis=(1, 2)) + self.const
        return loglik, T, expected

    def params(self, pi, alpha) -> MixtureParams:
        return MixtureParams(np.array(pi, dtype=float), np.array(alpha, dtype=float), self.beta.copy())


def estimate_beta(ds: GenotypeDataset, loci) -> np.ndarray:
    """Observed allele frequencies among the ``2n`` gene copies, one padded row per locus."""
    loci = list(loci)
    A = ds.index.max_alleles
    out = np.zeros((len(loci), A))
    for j, l in enumerate(loci):
        counts = np.bincount(ds.genotypes[:, l, :].ravel(), minlength=A).astype(np.float64)
        out[j] = counts / (2.0 * ds.n)
    return out


def e_step(ds: GenotypeDataset, spec: ModelSpec, theta: MixtureParams) -> np.ndarray:
    """Posterior cluster probabilities ``tau`` of shape (n, K); loci outside S cancel."""
    scores = cluster_log_scores(_log(theta.alpha)[None], ds.unique_genotypes, spec.S)[0]
    scores = scores + _log(theta.pi)[None, :]
    with np.errstate(under="ignore"):
        tau = np.exp(scores - logsumexp_rows(scores)[:, None])
    return tau[ds.inverse]


def m_step(
    ds: GenotypeDataset, spec: ModelSpec, tau: np.ndarray, floor: Optional[float] = 1e-10
) -> MixtureParams:
    """Closed-form parameter update from responsibilities ``tau`` (n, K).

    ``floor=None`` returns the raw update (``pi_k`` may be 0 and an empty cluster's
    frequencies default to the pooled ones); otherwise near-empty clusters are
    repaired and frequencies clamped to ``floor`` then renormalised.
    """
    ws = _Workspace(ds, spec)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (ds.n, spec.K):
        raise ValueError(f"tau must have shape {(ds.n, spec.K)}, got {tau.shape}")
    pi, alpha, _, _ = ws.m_step(ws.aggregate(tau[None]), floor)
    return ws.params(pi[0], alpha[0])


def canonicalize(theta: MixtureParams) -> MixtureParams:
    """Order clusters by decreasing ``pi``, ties by lexicographic frequency rows."""
    flat = theta.alpha.reshape(theta.K, -1)
    keys = tuple(flat[:, j] for j in reversed(range(flat.shape[1]))) + (-theta.pi,)
    return theta.permuted(np.lexsort(keys))


def map_assign(ds: GenotypeDataset, spec: ModelSpec, theta: MixtureParams) -> np.ndarray:
    """MAP cluster (0-based) for every individual; ties go to the lowest index."""
    scores = cluster_log_scores(_log(theta.alpha)[None], ds.unique_genotypes, spec.S)[0]
    scores = scores + _log(theta.pi)[None, :]
    return np.argmax(scores, axis=1)[ds.inverse]


def _initial_responsibilities(n: int, K: int, seed: int, restart: int) -> np.ndarray:
    """One-hot random assignment of every individual to a cluster."""
    rng = np.random.default_rng([seed, restart])
    return np.eye(K)[rng.integers(K, size=n)]


def run_em(
    ds: GenotypeDataset,
    spec: ModelSpec,
    config: EmConfig = EmConfig(),
    keep_history: bool = False,
) -> FitResult:
    """Fit ``spec`` by EM from ``config.restarts`` random starts and keep the best."""
    ws = _Workspace(ds, spec)
    K = spec.K
    dim = model_dimension(spec, ds.index)
    if K == 1:
        # a single cluster reaches the M-step fixed point in one update
        pi, alpha, _, _ = ws.m_step(ws.weights[None, None, :].copy(), config.freq_floor)
        theta = ws.params(pi[0], alpha[0])
        ll = dataset_loglik(ds, spec, theta)
        return FitResult(
            spec, theta, ll, bic_value(ll, dim, ds.n), dim, ds.n, 1, 1, True, False, False,
            np.array([ll]), (np.array([ll]),) if keep_history else None,
        )

    R = config.restarts
    T0 = np.stack([ws.aggregate(_initial_responsibilities(ds.n, K, config.seed, r)) for r in range(R)])
    pi, alpha, empty, clamped = ws.m_step(T0, config.freq_floor)

    final_ll = np.full(R, -np.inf)
    prev = np.full(R, np.nan)
    iterations = np.zeros(R, dtype=np.int64)
    converged = np.zeros(R, dtype=bool)
    history: list[list[float]] = [[] for _ in range(R)]
    active = np.arange(R)
    for it in range(config.max_iterations + 1):
        ll, T, complete = ws.e_step(pi[active], alpha[active], config.stopping == "complete")
        stat = ll if complete is None else complete
        final_ll[active] = ll
        iterations[active] = it
        if keep_history:
            for r, v in zip(active, ll):
                history[r].append(float(v))
        done = np.abs(stat - prev[active]) < config.epsilon if it else np.zeros(len(active), bool)
        converged[active[done]] = True
        prev[active] = stat
        if it == config.max_iterations or done.all():
            break
        keep = ~done
        active = active[keep]
        new_pi, new_alpha, e, c = ws.m_step(T[keep], config.freq_floor)
        pi[active] = new_pi
        alpha[active] = new_alpha
        empty[active] |= e
        clamped[active] |= c

    best = int(np.argmax(final_ll))
    if not converged[best]:
        logger.debug("best restart for %s did not converge in %d iterations", spec, config.max_iterations)
    theta = canonicalize(ws.params(pi[best], alpha[best]))
    ll = dataset_loglik(ds, spec, theta)
    return FitResult(
        spec=spec,
        params=theta,
        loglik=ll,
        bic=bic_value(ll, dim, ds.n),
        dimension=dim,
        n=ds.n,
        restarts_run=R,
        iterations=int(iterations[best]),
        converged=bool(converged[best]),
        empty_cluster=bool(empty[best]),
        clamped=bool(clamped[best]),
        restart_logliks=final_ll,
        histories=tuple(np.array(h) for h in history) if keep_history else None,
    )
