"""Joint choice of the number of clusters and the clustering loci by BIC.

For each ``K`` a backward stepwise walk (exclusion then inclusion per pass)
searches the locus subsets; the ``K`` with the best BIC wins. Loci are 0-based.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import AlleleIndex, GenotypeDataset
from .em import EmConfig, FitResult, run_em
from .likelihood import ModelSpec

logger = logging.getLogger(__name__)

DEFAULT_K_CEILING = 10
EXHAUSTIVE_MAX_LOCI = 10


def k_max_bound(index: AlleleIndex, S, ceiling: Optional[int] = None) -> int:
    """``floor(prod_S G_l / (1 + sum_S (A_l - 1)))``, at least 1 and at most ``ceiling``.

    Python integers keep the product exact however many loci are involved.
    """
    S = list(S)
    if not S:
        raise ValueError("S must be non-empty")
    num = math.prod(int(index.n_genotypes[l]) for l in S)
    den = 1 + sum(int(index.n_alleles[l]) - 1 for l in S)
    bound = max(1, num // den)
    return min(bound, ceiling) if ceiling is not None else bound


def global_k_max(index: AlleleIndex, ceiling: int) -> int:
    """Largest ``k_max_bound`` over non-empty locus subsets, capped at ``ceiling``."""
    L = index.n_loci
    best = 1
    if L <= 15:
        subsets = (s for r in range(1, L + 1) for s in itertools.combinations(range(L), r))
    else:
        order = np.argsort(-index.n_genotypes, kind="stable")
        subsets = (tuple(order[: r + 1]) for r in range(L))
    for S in subsets:
        best = max(best, k_max_bound(index, S, ceiling))
        if best >= ceiling:
            return ceiling
    return best


def _tripartitions(S):
    """Unordered splits of ``S`` into three non-empty blocks."""
    S = list(S)
    first, rest = S[0], S[1:]
    for labels in itertools.product(range(3), repeat=len(rest)):
        blocks = ([first], [], [])
        for locus, b in zip(rest, labels):
            blocks[b].append(locus)
        if not blocks[1] or not blocks[2]:
            continue
        # block 1 must open before block 2 to skip mirrored duplicates
        if blocks[1][0] > blocks[2][0]:
            continue
        yield tuple(tuple(b) for b in blocks)


def identifiability_check(K: int, S, index: AlleleIndex):
    """Look for a tripartition with ``sum_i min(K, prod_{S_i} G_l) >= 2K + 2``.

    Returns ``("generic-identifiable", tripartition)`` on success, otherwise
    ``("unknown", None)``. Subsets of more than 12 loci are split greedily.
    """
    S = sorted(S)
    if len(S) < 3:
        return "unknown", None
    G = {l: int(index.n_genotypes[l]) for l in S}

    def holds(parts):
        return sum(min(K, math.prod(G[l] for l in p)) for p in parts) >= 2 * K + 2

    if len(S) <= 12:
        for parts in _tripartitions(S):
            if holds(parts):
                return "generic-identifiable", parts
        return "unknown", None
    bins: list[list[int]] = [[], [], []]
    for l in sorted(S, key=lambda l: (-G[l], l)):
        target = min(range(3), key=lambda b: (math.prod(G[x] for x in bins[b]), b))
        bins[target].append(l)
    parts = tuple(tuple(sorted(b)) for b in bins)
    return ("generic-identifiable", parts) if holds(parts) else ("unknown", None)


class FitCache:
    """Fits keyed by ``(K, sorted S)``; a repeated model returns the same object."""

    def __init__(self, ds: GenotypeDataset, config: EmConfig, fitter: Callable = run_em):
        self.ds = ds
        self.config = config
        self._fitter = fitter
        self._fits: dict[tuple[int, tuple[int, ...]], FitResult] = {}

    def get(self, K: int, S) -> FitResult:
        spec = ModelSpec(K, tuple(S))
        key = (spec.K, spec.S)
        fit = self._fits.get(key)
        if fit is None:
            fit = self._fitter(self.ds, spec, self.config)
            self._fits.setdefault(key, fit)
            fit = self._fits[key]
        return fit

    def __contains__(self, key) -> bool:
        K, S = key
        return (K, tuple(sorted(S))) in self._fits

    def __len__(self) -> int:
        return len(self._fits)

    def items(self):
        return self._fits.items()


@dataclass(frozen=True)
class Step:
    """One exclusion or inclusion decision, or the reason the walk stopped."""

    kind: str
    K: int
    S: tuple[int, ...]
    candidate: Optional[int] = None
    bic_before: Optional[float] = None
    bic_after: Optional[float] = None
    accepted: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "K": self.K,
            "S": [l + 1 for l in self.S],
            "candidate": None if self.candidate is None else self.candidate + 1,
            "bic_before": self.bic_before,
            "bic_after": self.bic_after,
            "accepted": self.accepted,
        }


def _model_key(fit: FitResult):
    """Sort key: larger BIC first, then smaller dimension, smaller K, lexicographic S."""
    return (-fit.bic, fit.dimension, fit.spec.K, fit.spec.S)


def best_fit(fits) -> FitResult:
    return min(fits, key=_model_key)


def exclusion_step(ds: GenotypeDataset, K: int, S, cache: FitCache) -> Optional[Step]:
    """Propose dropping the locus whose removal gives the best BIC; accept if BIC does not drop."""
    S = tuple(sorted(S))
    if len(S) < 2:
        return None
    current = cache.get(K, S)
    candidate, cand_fit = None, None
    for l in S:
        fit = cache.get(K, tuple(x for x in S if x != l))
        if cand_fit is None or fit.bic > cand_fit.bic:
            candidate, cand_fit = l, fit
    accepted = current.bic - cand_fit.bic <= 0
    return Step("exclusion", K, S, candidate, current.bic, cand_fit.bic, accepted)


def inclusion_step(ds: GenotypeDataset, K: int, S, cache: FitCache) -> Optional[Step]:
    """Propose adding the locus that gives the best BIC; accept on a strict BIC gain."""
    S = tuple(sorted(S))
    outside = [l for l in range(ds.n_loci) if l not in S]
    if not outside:
        return None
    current = cache.get(K, S)
    candidate, cand_fit = None, None
    for l in outside:
        fit = cache.get(K, S + (l,))
        if cand_fit is None or fit.bic > cand_fit.bic:
            candidate, cand_fit = l, fit
    accepted = cand_fit.bic - current.bic > 0
    return Step("inclusion", K, S, candidate, current.bic, cand_fit.bic, accepted)


def stepwise_select_S(ds: GenotypeDataset, K: int, cache: FitCache):
    """Backward stepwise search of the clustering loci for a fixed ``K``.

    Each pass tries one exclusion then one inclusion. The walk stops when a pass
    changes nothing, when there is nothing left to include, or after ``L**2``
    passes. Re-adding the locus just removed can never be accepted, because its
    exclusion already showed that the smaller set scores at least as well.

    Returns ``(best_S, final_S, steps)`` where ``best_S`` is the best-BIC subset
    visited along the walk.
    """
    L = ds.n_loci
    S = tuple(range(L))
    visited = {S: cache.get(K, S)}
    steps: list[Step] = []
    reason = "pass limit"
    for _ in range(max(1, L * L)):
        changed = False
        ex = exclusion_step(ds, K, S, cache)
        if ex is not None:
            steps.append(ex)
            if ex.accepted:
                S = tuple(l for l in S if l != ex.candidate)
                changed = True
                visited[S] = cache.get(K, S)
        inc = inclusion_step(ds, K, S, cache)
        if inc is None:
            if not changed:
                reason = "complement empty"
                break
        else:
            steps.append(inc)
            if inc.accepted:
                S = tuple(sorted(S + (inc.candidate,)))
                changed = True
                visited[S] = cache.get(K, S)
        if not changed:
            reason = "no change"
            break
    steps.append(Step("stop: " + reason, K, S))
    best = best_fit(visited.values())
    return best.spec.S, S, steps


def exhaustive_select_S(ds: GenotypeDataset, K: int, cache: FitCache) -> tuple[int, ...]:
    """Best-BIC subset among all non-empty subsets (test mode, small ``L`` only)."""
    L = ds.n_loci
    if L > EXHAUSTIVE_MAX_LOCI:
        raise ValueError(f"exhaustive search is limited to L <= {EXHAUSTIVE_MAX_LOCI}")
    fits = [
        cache.get(K, S) for r in range(1, L + 1) for S in itertools.combinations(range(L), r)
    ]
    return best_fit(fits).spec.S


@dataclass(frozen=True)
class SelectionConfig:
    k_ceiling: int = DEFAULT_K_CEILING
    select_loci: bool = True
    exhaustive: bool = False
    em: EmConfig = field(default_factory=EmConfig)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Winning model, the per-K fits and the full search trace."""

    K: int
    S: tuple[int, ...]
    fit: FitResult
    per_k: dict
    steps: tuple
    k_max: int
    cache: FitCache = field(repr=False)

    @property
    def s_applicable(self) -> bool:
        # every (1, S) model is the same distribution
        return self.K > 1

    def bic_table(self) -> list[dict]:
        return [
            {
                "K": K,
                "S": [l + 1 for l in fit.spec.S],
                "bic": fit.bic,
                "loglik": fit.loglik,
                "dimension": fit.dimension,
            }
            for K, fit in sorted(self.per_k.items())
        ]

    def trace(self) -> dict:
        return {
            "k_max": self.k_max,
            "steps": [s.to_dict() for s in self.steps],
            "bic_table": self.bic_table(),
            "selected": {"K": self.K, "S": [l + 1 for l in self.S], "s_applicable": self.s_applicable},
        }


def select_model(ds: GenotypeDataset, config: SelectionConfig = SelectionConfig(),
                 cache: Optional[FitCache] = None) -> SelectionResult:
    """Fit every ``K`` up to the identifiability cap and keep the best BIC."""
    if cache is None:
        cache = FitCache(ds, config.em)
    k_max = global_k_max(ds.index, config.k_ceiling)
    L = ds.n_loci
    per_k: dict[int, FitResult] = {}
    steps: list[Step] = []
    for K in range(1, k_max + 1):
        if not config.select_loci:
            S = tuple(range(L))
        elif config.exhaustive:
            S = exhaustive_select_S(ds, K, cache)
        else:
            S, _, k_steps = stepwise_select_S(ds, K, cache)
            steps.extend(k_steps)
        per_k[K] = cache.get(K, S)
        logger.info("K=%d S=%s BIC=%.4f", K, S, per_k[K].bic)
    winner = best_fit(per_k.values())
    return SelectionResult(winner.spec.K, winner.spec.S, winner, per_k, tuple(steps), k_max, cache)
