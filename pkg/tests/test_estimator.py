import numpy as np
import pytest
from sklearn.base import clone

from genoclust.data import GenotypeFormatError
from genoclust.estimator import GenotypeMixture, check_genotype_array
from genoclust.simulate import bundled_scenario, simulate_dataset


@pytest.fixture(scope="module")
def consistency_data():
    ds, z = simulate_dataset(bundled_scenario("consistency").with_n(300))
    return ds.raw_genotypes(), z


class TestValidation:
    def test_flat_layout(self):
        arr = check_genotype_array([[1, 2, 3, 3], [2, 2, 3, 4]])
        assert arr.shape == (2, 2, 2)

    @pytest.mark.parametrize(
        "X", [[[1, 2, 3]], [[1.5, 2.0]], [[1, -9]], np.zeros((0, 2)), [["a", "b"]]]
    )
    def test_rejects(self, X):
        with pytest.raises(GenotypeFormatError):
            check_genotype_array(X)


class TestGenotypeMixture:
    def test_params_round_trip(self):
        est = GenotypeMixture(n_clusters=2, n_restarts=5)
        params = est.get_params()
        assert params["n_clusters"] == 2 and params["n_restarts"] == 5
        copy = clone(est)
        assert copy.get_params() == params

    def test_fixed_model(self, consistency_data):
        X, _ = consistency_data
        est = GenotypeMixture(n_clusters=2, loci=[0, 1], n_restarts=10).fit(X)
        assert est.n_clusters_ == 2 and est.loci_ == (0, 1)
        assert est.labels_.shape == (300,)
        assert np.array_equal(est.predict(X), est.labels_)
        proba = est.predict_proba(X)
        assert np.allclose(proba.sum(axis=1), 1)
        assert np.array_equal(np.argmax(proba, axis=1), est.labels_)
        assert est.score(X) * 300 == pytest.approx(est.loglik_, rel=1e-10)
        assert est.bic(X) == pytest.approx(est.bic_, rel=1e-12)

    def test_selection(self, consistency_data):
        X, _ = consistency_data
        est = GenotypeMixture(max_clusters=3, n_restarts=10).fit(X)
        assert est.selection_ is not None
        assert 1 <= est.n_clusters_ <= 3

    def test_fit_predict_matches_labels(self, consistency_data):
        X, _ = consistency_data
        est = GenotypeMixture(n_clusters=2, select_loci=False, n_restarts=5)
        assert np.array_equal(est.fit_predict(X), est.labels_)
        assert est.loci_ == (0, 1, 2, 3)

    def test_unseen_allele(self, consistency_data):
        X, _ = consistency_data
        est = GenotypeMixture(n_clusters=1).fit(X)
        bad = X[:3].copy()
        bad[0, 0, 0] = 99
        with pytest.raises(ValueError, match="not seen"):
            est.predict(bad)

    def test_wrong_locus_count(self, consistency_data):
        X, _ = consistency_data
        est = GenotypeMixture(n_clusters=1).fit(X)
        with pytest.raises(ValueError):
            est.predict(X[:, :2])

    def test_not_fitted(self, consistency_data):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            GenotypeMixture().predict(consistency_data[0])

    def test_bad_loci(self, consistency_data):
        with pytest.raises(ValueError):
            GenotypeMixture(n_clusters=2, loci=[7]).fit(consistency_data[0])

    def test_reproducible(self, consistency_data):
        X, _ = consistency_data
        a = GenotypeMixture(n_clusters=2, loci=[0, 1], n_restarts=5, random_state=3).fit(X)
        b = GenotypeMixture(n_clusters=2, loci=[0, 1], n_restarts=5, random_state=3).fit(X)
        assert a.loglik_ == b.loglik_
