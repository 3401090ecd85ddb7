"""scikit-learn style estimator around model fitting and selection."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .data import MISSING_CODE, GenotypeDataset, GenotypeFormatError
from .em import EmConfig, FitResult, e_step, map_assign
from .likelihood import individual_logliks, row_logliks
from .selection import FitCache, SelectionConfig, best_fit, select_model, stepwise_select_S


def check_genotype_array(X) -> np.ndarray:
    """Validate raw allele codes and return them as an int array of shape (n, L, 2)."""
    if isinstance(X, GenotypeDataset):
        return X.raw_genotypes()
    arr = np.asarray(X)
    if arr.dtype.kind not in "iuf":
        raise GenotypeFormatError("genotype arrays must be numeric")
    if arr.ndim == 2:
        if arr.shape[1] % 2:
            raise GenotypeFormatError(f"expected 2L columns, got {arr.shape[1]}")
        arr = arr.reshape(arr.shape[0], arr.shape[1] // 2, 2)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise GenotypeFormatError(f"expected shape (n, L, 2) or (n, 2L), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise GenotypeFormatError("need at least one individual and one locus")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise GenotypeFormatError("allele codes must be integers")
    arr = arr.astype(np.int64)
    if np.any(arr == MISSING_CODE):
        raise GenotypeFormatError("missing-data code -9 is not supported")
    return arr


def check_genotypes(X) -> GenotypeDataset:
    if isinstance(X, GenotypeDataset):
        return X
    return GenotypeDataset.from_codes(check_genotype_array(X))


class GenotypeMixture(ClusterMixin, BaseEstimator):
    """Hardy-Weinberg mixture clustering of diploid multi-allelic genotypes.

    With ``n_clusters=None`` the number of clusters is chosen by BIC among
    ``1 .. max_clusters`` (further capped by the identifiability bound). With
    ``select_loci=True`` the clustering loci are chosen by backward stepwise
    search; otherwise all loci (or ``loci``, 0-based) cluster the individuals.

    ``X`` is an integer array of raw allele codes shaped ``(n, L, 2)`` or
    ``(n, 2L)``, or a :class:`GenotypeDataset`.
    """

    def __init__(
        self,
        n_clusters=None,
        max_clusters=10,
        select_loci=True,
        loci=None,
        n_restarts=50,
        tol=1e-6,
        max_iter=500,
        freq_floor=1e-10,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.max_clusters = max_clusters
        self.select_loci = select_loci
        self.loci = loci
        self.n_restarts = n_restarts
        self.tol = tol
        self.max_iter = max_iter
        self.freq_floor = freq_floor
        self.random_state = random_state

    def _em_config(self) -> EmConfig:
        seed = self.random_state
        if seed is None:
            seed = int(np.random.default_rng().integers(2**31))
        elif not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be an int or None")
        return EmConfig(
            restarts=self.n_restarts,
            epsilon=self.tol,
            max_iterations=self.max_iter,
            freq_floor=self.freq_floor,
            seed=int(seed),
        )

    def fit(self, X, y=None):
        ds = check_genotypes(X)
        em = self._em_config()
        cache = FitCache(ds, em)
        self.selection_ = None
        if self.loci is not None:
            S = tuple(sorted(int(l) for l in self.loci))
            if not S or S[0] < 0 or S[-1] >= ds.n_loci:
                raise ValueError(f"loci must be a non-empty subset of 0..{ds.n_loci - 1}")
        else:
            S = None
        if self.n_clusters is None:
            if S is not None:
                fit = best_fit([cache.get(K, S) for K in range(1, self.max_clusters + 1)])
            else:
                config = SelectionConfig(self.max_clusters, bool(self.select_loci), em=em)
                self.selection_ = select_model(ds, config, cache)
                fit = self.selection_.fit
        else:
            K = int(self.n_clusters)
            if S is None:
                S = stepwise_select_S(ds, K, cache)[0] if self.select_loci else tuple(range(ds.n_loci))
            fit = cache.get(K, S)
        self._store(ds, fit)
        return self

    def _store(self, ds: GenotypeDataset, fit: FitResult) -> None:
        self.fit_result_ = fit
        self.allele_index_ = ds.index
        self.n_features_in_ = ds.n_loci
        self.n_clusters_ = fit.spec.K
        self.loci_ = fit.spec.S
        self.weights_ = fit.params.pi
        self.allele_freqs_ = fit.params.alpha
        self.pooled_freqs_ = fit.params.beta
        self.loglik_ = fit.loglik
        self.bic_ = fit.bic
        self.converged_ = fit.converged
        self.labels_ = map_assign(ds, fit.spec, fit.params)

    def _encode(self, X) -> GenotypeDataset:
        check_is_fitted(self, "fit_result_")
        raw = check_genotype_array(X)
        index = self.allele_index_
        if raw.shape[1] != index.n_loci:
            raise ValueError(f"X has {raw.shape[1]} loci, the model was fitted on {index.n_loci}")
        labels = np.empty_like(raw)
        for l, codes in enumerate(index.raw_codes):
            codes = np.asarray(codes)
            pos = np.searchsorted(codes, raw[:, l, :])
            pos = np.minimum(pos, len(codes) - 1)
            if np.any(codes[pos] != raw[:, l, :]):
                raise ValueError(f"locus {l} carries allele codes not seen during fit")
            labels[:, l, :] = pos
        ids = tuple(f"ind{i + 1}" for i in range(len(raw)))
        names = tuple(f"L{l + 1}" for l in range(index.n_loci))
        return GenotypeDataset(labels, index, ids, names)

    def predict(self, X):
        ds = self._encode(X)
        return map_assign(ds, self.fit_result_.spec, self.fit_result_.params)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def predict_proba(self, X):
        ds = self._encode(X)
        return e_step(ds, self.fit_result_.spec, self.fit_result_.params)

    def score_samples(self, X):
        ds = self._encode(X)
        return individual_logliks(ds, self.fit_result_.spec, self.fit_result_.params)

    def score(self, X, y=None):
        """Mean log-likelihood per individual."""
        return float(np.mean(self.score_samples(X)))

    def bic(self, X):
        """BIC of the fitted parameters on ``X``."""
        ds = self._encode(X)
        fit = self.fit_result_
        ll = float(np.sum(ds.counts * row_logliks(ds.unique_genotypes, fit.spec, fit.params)))
        return 2.0 * ll - fit.dimension * np.log(ds.n)
