import numpy as np
import pytest

from ptlfusion.classifiers import ForestClassifier, KnnClassifier, _Tree
from ptlfusion.errors import DatasetError, ModelFormatError, ModelVersionError
from ptlfusion.model_io import model_load, model_save


def blob_dataset(seed=0, n=150, spread=1.0, gap=6.0):
    rng = np.random.default_rng(seed)
    X = np.vstack(
        [rng.normal(0, spread, (n, 2)), rng.normal(gap, spread, (n, 2))]
    )
    y = np.array(["red"] * n + ["green"] * n, dtype=object)
    return X, y


def stub_forest(leaf_dists, labels=("red", "green")):
    """Forest whose trees are single leaves with fixed label distributions."""
    model = ForestClassifier(n_trees=len(leaf_dists), labels=list(labels))
    model.classes_ = list(labels)
    model.n_features_in_ = 2
    model.trees_ = [
        _Tree(
            np.array([-1], dtype=np.int32),
            np.array([0.0]),
            np.array([0], dtype=np.int32),
            np.array([0], dtype=np.int32),
            np.array([dist], dtype=np.float64),
        )
        for dist in leaf_dists
    ]
    return model


class TestForest:
    def test_separable_blobs_reach_full_training_accuracy(self):
        X, y = blob_dataset()
        model = ForestClassifier(n_trees=30, seed=1, labels=["red", "green"]).fit(X, y)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_single_label_data(self):
        X = np.random.default_rng(3).normal(size=(20, 3))
        y = np.array(["green"] * 20, dtype=object)
        model = ForestClassifier(n_trees=5, seed=0).fit(X, y)
        prediction = model.predict_one(np.zeros(3))
        assert prediction.label == "green"
        assert prediction.confidences == {"green": 1.0}

    def test_training_is_deterministic(self):
        X, y = blob_dataset(seed=9)
        blob_a = model_save(ForestClassifier(n_trees=12, seed=7).fit(X, y))
        blob_b = model_save(ForestClassifier(n_trees=12, seed=7).fit(X, y))
        assert blob_a == blob_b

    def test_different_seeds_differ(self):
        X, y = blob_dataset(seed=9, spread=3.0)
        blob_a = model_save(ForestClassifier(n_trees=12, seed=7).fit(X, y))
        blob_b = model_save(ForestClassifier(n_trees=12, seed=8).fit(X, y))
        assert blob_a != blob_b

    def test_unanimous_trees_give_full_confidence(self):
        model = stub_forest([[1.0, 0.0]] * 5)
        assert model.predict_one(np.zeros(2)) .confidences["red"] == 1.0

    def test_seven_of_ten_trees(self):
        model = stub_forest([[0.0, 1.0]] * 7 + [[1.0, 0.0]] * 3)
        prediction = model.predict_one(np.zeros(2))
        assert prediction.label == "green"
        assert prediction.confidences["green"] == pytest.approx(0.7)

    def test_exact_tie_yields_red(self):
        model = stub_forest([[0.0, 1.0]] * 5 + [[1.0, 0.0]] * 5)
        assert model.predict_one(np.zeros(2)).label == "red"

    def test_dimension_mismatch(self):
        X, y = blob_dataset()
        model = ForestClassifier(n_trees=3, seed=0).fit(X, y)
        with pytest.raises(ValueError, match="features"):
            model.predict(np.zeros((4, 5)))

    def test_confidences_sum_to_one(self):
        X, y = blob_dataset(seed=17, spread=4.0)
        model = ForestClassifier(n_trees=25, seed=2).fit(X, y)
        rng = np.random.default_rng(4)
        proba = model.predict_proba(rng.normal(0, 4, (50, 2)))
        assert np.abs(proba.sum(axis=1) - 1.0).max() <= 1e-12

    def test_single_tree_no_bootstrap_memorizes_consistent_data(self):
        # Includes an XOR pattern: only achievable when nodes may split even
        # without an immediate Gini improvement.
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
        y = np.array(["a", "b", "b", "a", "a", "b"], dtype=object)
        model = ForestClassifier(
            n_trees=1, max_depth=None, max_features=None, bootstrap=False, seed=0
        ).fit(X, y)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_label_permutation_equivariance(self):
        X, y = blob_dataset(seed=23, spread=2.0)
        mapping = {"red": "alpha", "green": "beta"}
        renamed = np.array([mapping[v] for v in y], dtype=object)
        base = ForestClassifier(n_trees=15, seed=5, labels=["red", "green"]).fit(X, y)
        perm = ForestClassifier(n_trees=15, seed=5, labels=["alpha", "beta"]).fit(
            X, renamed
        )
        test = np.random.default_rng(8).normal(2, 3, (80, 2))
        assert [mapping[v] for v in base.predict(test)] == list(perm.predict(test))

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            ForestClassifier().fit(np.zeros((0, 2)), [])

    def test_single_row_degenerate_stump(self):
        model = ForestClassifier(n_trees=3, seed=0).fit([[1.0, 2.0]], ["red"])
        assert model.predict_one([9.0, 9.0]).label == "red"

    def test_sklearn_get_params(self):
        params = ForestClassifier(n_trees=42).get_params()
        assert params["n_trees"] == 42 and "seed" in params


class TestKnn:
    def test_exact_match_k1(self):
        X, y = blob_dataset(seed=2)
        model = KnnClassifier(k=1).fit(X, y)
        prediction = model.predict_one(X[3])
        assert prediction.label == y[3]
        assert prediction.confidences[y[3]] == 1.0

    def test_k3_majority_two_thirds(self):
        X = np.array([[0.0], [0.1], [10.0]])
        y = np.array(["red", "red", "green"], dtype=object)
        prediction = KnnClassifier(k=3).fit(X, y).predict_one([0.05])
        assert prediction.label == "red"
        assert prediction.confidences["red"] == pytest.approx(2 / 3)

    def test_k2_split_vote_takes_nearest(self):
        X = np.array([[0.0], [1.0]])
        y = np.array(["green", "red"], dtype=object)
        model = KnnClassifier(k=2).fit(X, y)
        assert model.predict(np.array([[0.2]]))[0] == "green"
        assert model.predict(np.array([[0.8]]))[0] == "red"

    def test_k1_training_accuracy(self):
        X, y = blob_dataset(seed=29, spread=3.0)
        model = KnnClassifier(k=1).fit(X, y)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_k_exceeding_rows_rejected(self):
        with pytest.raises(DatasetError):
            KnnClassifier(k=10).fit(np.zeros((3, 2)), ["a", "b", "a"])

    def test_dimension_mismatch(self):
        model = KnnClassifier(k=1).fit(np.zeros((3, 2)), ["a", "b", "a"])
        with pytest.raises(ValueError, match="features"):
            model.predict(np.zeros((1, 7)))

    def test_label_permutation_equivariance(self):
        X, y = blob_dataset(seed=31, spread=2.5)
        mapping = {"red": "x", "green": "y"}
        renamed = np.array([mapping[v] for v in y], dtype=object)
        base = KnnClassifier(k=5, labels=["red", "green"]).fit(X, y)
        perm = KnnClassifier(k=5, labels=["x", "y"]).fit(X, renamed)
        test = np.random.default_rng(6).normal(2, 3, (60, 2))
        assert [mapping[v] for v in base.predict(test)] == list(perm.predict(test))


class TestModelIo:
    def test_forest_round_trip_predictions(self):
        X, y = blob_dataset(seed=37, spread=2.0)
        model = ForestClassifier(n_trees=10, seed=3).fit(X, y)
        restored, metadata = model_load(model_save(model, {"mode": "audio"}))
        assert metadata == {"mode": "audio"}
        probe = np.random.default_rng(11).normal(2, 3, (100, 2))
        assert np.array_equal(model.predict(probe), restored.predict(probe))
        assert np.allclose(model.predict_proba(probe), restored.predict_proba(probe))

    def test_knn_round_trip_predictions(self):
        X, y = blob_dataset(seed=41)
        model = KnnClassifier(k=3).fit(X, y)
        restored, _ = model_load(model_save(model))
        probe = np.random.default_rng(12).normal(2, 3, (100, 2))
        assert np.array_equal(model.predict(probe), restored.predict(probe))

    def test_truncated_payload(self):
        X, y = blob_dataset(seed=43)
        blob = model_save(ForestClassifier(n_trees=2, seed=0).fit(X, y))
        with pytest.raises(ModelFormatError, match="truncated"):
            model_load(blob[: len(blob) // 2])

    def test_wrong_version_byte(self):
        X, y = blob_dataset(seed=47)
        blob = bytearray(model_save(KnnClassifier(k=1).fit(X, y)))
        blob[4] = 99
        with pytest.raises(ModelVersionError, match="version"):
            model_load(bytes(blob))

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError, match="magic"):
            model_load(b"NOPE" + b"\x00" * 32)

    def test_trailing_garbage(self):
        X, y = blob_dataset(seed=53)
        blob = model_save(KnnClassifier(k=1).fit(X, y))
        with pytest.raises(ModelFormatError, match="trailing"):
            model_load(blob + b"\x00")

    def test_unfitted_model_rejected(self):
        with pytest.raises(RuntimeError):
            model_save(ForestClassifier())
