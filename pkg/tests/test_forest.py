import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euprint import forest
from euprint.forest import (
    DimensionMismatch,
    EmptyDataset,
    ForestConfig,
    InsufficientSamplesPerClass,
    SingleClassDataset,
    ZeroBaseRate,
    accuracy_gain,
    fit,
    from_json,
    kfold_accuracy,
    load_model,
    predict,
    predict_proba,
    predict_proba_batch,
    save_model,
    to_json,
)


def blobs(rng, centers, n_per, sigma=0.15):
    """Gaussian clusters, one label per center."""
    X, y = [], []
    for label, center in centers.items():
        pts = rng.normal(0.0, sigma, size=(n_per, len(center))) + np.asarray(center)
        X.append(pts)
        y.extend([label] * n_per)
    return np.vstack(X), np.asarray(y)


class TestConfig:
    def test_defaults(self):
        cfg = ForestConfig()
        assert cfg.n_trees == 100
        assert cfg.min_samples_leaf == 1
        assert cfg.features_per_split == "sqrt"

    @pytest.mark.parametrize(
        "kw",
        [
            dict(n_trees=0),
            dict(max_depth=0),
            dict(min_samples_leaf=0),
            dict(features_per_split="log2"),
            dict(features_per_split=0),
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            ForestConfig(**kw)


class TestFit:
    def test_single_class_binary_raises(self):
        X = np.zeros((100, 3))
        y = np.array(["same"] * 100)
        with pytest.raises(SingleClassDataset):
            fit(X, y, ForestConfig(n_trees=5), binary=True)

    def test_single_class_multinomial_warns(self):
        X = np.zeros((10, 3))
        y = np.array(["only"] * 10)
        with pytest.warns(UserWarning):
            model = fit(X, y, ForestConfig(n_trees=5))
        assert predict_proba(model, np.zeros(3)).tolist() == [1.0]

    def test_separable_blobs_train_accuracy(self):
        rng = np.random.default_rng(0)
        X, y = blobs(rng, {"a": (0, 0), "b": (4, 4)}, 50)
        model = fit(X, y, ForestConfig(n_trees=25, seed=1))
        assert predict(model, X) == y.tolist()

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        X, y = blobs(rng, {"a": (0, 0), "b": (1.5, 0), "c": (0, 1.5)}, 40, sigma=0.5)
        held = rng.normal(0.5, 1.0, size=(30, 2))
        cfg = ForestConfig(n_trees=10, seed=8)
        p1 = predict_proba_batch(fit(X, y, cfg), held)
        p2 = predict_proba_batch(fit(X, y, cfg), held)
        assert np.array_equal(p1, p2)

    def test_too_few_samples(self):
        with pytest.raises(EmptyDataset):
            fit(np.zeros((1, 4)), np.array(["a"]), ForestConfig(n_trees=1))

    def test_zero_features(self):
        with pytest.raises(EmptyDataset):
            fit(np.zeros((5, 0)), np.array(list("ababa")), ForestConfig(n_trees=1))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fit(np.zeros((5, 2)), np.array(["a", "b"]), ForestConfig(n_trees=1))


class TestPredictProba:
    def test_two_point_symmetric(self):
        # a query at one training point should lean toward its own label
        X = np.array([[0.0], [1.0]])
        y = np.array(["A", "B"])
        model = fit(X, y, ForestConfig(n_trees=50, seed=0))
        pa, pb = predict_proba(model, np.array([0.0]))
        assert pa >= pb

    def test_sums_to_one_on_random_queries(self):
        rng = np.random.default_rng(5)
        X, y = blobs(rng, {"a": (0, 0, 0), "b": (1, 1, 1), "c": (2, 0, 2)}, 40, sigma=0.8)
        model = fit(X, y, ForestConfig(n_trees=20, seed=4))
        queries = rng.normal(1.0, 2.0, size=(1000, 3))
        proba = predict_proba_batch(model, queries)
        assert proba.min() >= 0.0
        assert np.abs(proba.sum(axis=1) - 1.0).max() <= 1e-9

    def test_dimension_mismatch(self):
        X = np.zeros((10, 2))
        y = np.array(list("ababababab"))
        model = fit(X, y, ForestConfig(n_trees=2))
        with pytest.raises(DimensionMismatch):
            predict_proba(model, np.zeros(3))

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        X, y = blobs(rng, {0: (0, 0), 1: (1, 1), 2: (2, 0)}, 20, sigma=0.6)
        relabel = {0: "c", 1: "a", 2: "b"}
        y2 = np.array([relabel[v] for v in y.tolist()])
        cfg = ForestConfig(n_trees=10, seed=6)
        m1 = fit(X, y, cfg)
        m2 = fit(X, y2, cfg)
        queries = rng.normal(1.0, 1.0, size=(50, 2))
        p1 = predict_proba_batch(m1, queries)
        p2 = predict_proba_batch(m2, queries)
        for j, label in enumerate(m1.classes):
            k = m2.classes.index(relabel[label])
            assert np.allclose(p1[:, j], p2[:, k], atol=1e-9)


class TestKfold:
    def test_separable_is_perfect(self):
        rng = np.random.default_rng(1)
        X, y = blobs(rng, {"a": (0, 0), "b": (5, 0), "c": (0, 5)}, 25)
        mean, std = kfold_accuracy(X, y, ForestConfig(n_trees=10, seed=2), 5)
        assert mean == 1.0
        assert std == 0.0

    def test_shuffled_labels_near_chance(self):
        # 10 balanced classes with labels drawn independently of X: accuracy
        # should sit within 3 binomial sigmas of 0.1 (sqrt(.1*.9/300)*3)
        rng = np.random.default_rng(0)
        X = rng.normal(0.0, 1.0, size=(300, 5))
        y = rng.permutation(np.repeat(np.arange(10), 30))
        mean, _ = kfold_accuracy(X, y, ForestConfig(n_trees=10, min_samples_leaf=2, seed=0), 5)
        assert abs(mean - 0.10) <= 0.052

    def test_class_smaller_than_k(self):
        X = np.zeros((13, 2))
        y = np.array(["a"] * 10 + ["b"] * 3)
        with pytest.raises(InsufficientSamplesPerClass):
            kfold_accuracy(X, y, ForestConfig(n_trees=2), 5)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kfold_accuracy(np.zeros((6, 2)), np.array(["a"] * 5), ForestConfig(), 5)

    def test_more_trees_never_noisier(self):
        # ensemble averaging: k-fold mean variance across seeds must not grow
        # with tree count (noisy boundary keeps single trees unstable)
        rng = np.random.default_rng(11)
        X = rng.normal(0.0, 1.0, size=(200, 10))
        y = (X[:, 0] + 0.8 * rng.normal(0.0, 1.0, size=200) > 0).astype(int)
        variances = []
        for n_trees in (5, 25):
            means = [
                kfold_accuracy(X, y, ForestConfig(n_trees=n_trees, min_samples_leaf=3, seed=s), 5)[0]
                for s in range(5)
            ]
            variances.append(np.var(means))
        assert variances[1] <= variances[0]


class TestAccuracyGain:
    def test_ninefold(self):
        assert accuracy_gain(0.93, 0.10) == pytest.approx(9.3)

    def test_no_advantage(self):
        assert accuracy_gain(0.10, 0.10) == pytest.approx(1.0)

    def test_offscreen_row(self):
        assert accuracy_gain(0.637, 0.043) == pytest.approx(14.8, abs=0.2)

    @pytest.mark.parametrize("base", [0.0, -0.1])
    def test_zero_base_rate(self, base):
        with pytest.raises(ZeroBaseRate):
            accuracy_gain(0.5, base)

    @given(
        accuracy=st.floats(0.0, 1.0),
        base=st.floats(1e-6, 1.0),
    )
    def test_gain_times_base_recovers_accuracy(self, accuracy, base):
        assert accuracy_gain(accuracy, base) * base == pytest.approx(accuracy, abs=1e-12)


class TestPersistence:
    def _model(self):
        rng = np.random.default_rng(2)
        X, y = blobs(rng, {"a": (0, 0), "b": (2, 2)}, 30, sigma=0.5)
        return fit(X, y, ForestConfig(n_trees=8, max_depth=4, seed=3)), rng

    def test_round_trip_predictions(self, tmp_path):
        model, rng = self._model()
        path = tmp_path / "forest.json"
        save_model(model, path)
        loaded = load_model(path)
        queries = rng.normal(1.0, 1.5, size=(100, 2))
        assert np.array_equal(
            predict_proba_batch(model, queries), predict_proba_batch(loaded, queries)
        )
        assert loaded.classes == model.classes
        assert loaded.config == model.config

    def test_rejects_foreign_json(self):
        with pytest.raises(ValueError):
            from_json('{"format": "something-else", "version": 1}')

    def test_leaf_histograms_count_bootstrap_samples(self):
        # every bootstrap row lands in exactly one leaf
        model, _ = self._model()
        for tree in model.trees:
            leaves = tree.feature == -1
            assert tree.histogram[leaves].sum() == 60
            assert (tree.histogram[leaves].sum(axis=1) > 0).all()


class TestLabGrade:
    def test_ten_device_corpus_beats_base_rate(self):
        # 10 simulated devices of one class; mean accuracy must dwarf the
        # 10% base rate (the real-hardware reference point is far stricter)
        from euprint.synthdevice import (
            DeviceClassSpec,
            DispatchPolicy,
            TimerKind,
            TimerModel,
            make_profiles,
            sample_trace,
        )
        from euprint.tracemodel import CollectorConfig, Method, Operator

        timer = TimerModel(kind=TimerKind.MILLISECOND_JITTER)
        cfg = CollectorConfig(
            method=Method.OFFSCREEN,
            operator=Operator.SINH,
            point_count=8,
            iterations_per_point=11,
            subset_mode=False,
            stall_loop_length=1500,
        )
        rng = np.random.default_rng(17)
        profiles = make_profiles(
            [DeviceClassSpec(name="gen3", device_count=10, eu_count=24,
                             eu_speed_spread=0.02, within_noise_sigma=0.008)],
            rng,
        )
        X, y = [], []
        for profile in profiles:
            for _ in range(60):
                X.append(sample_trace(profile, cfg, timer, DispatchPolicy(), rng).timings)
                y.append(profile.device_id)
        mean, _ = kfold_accuracy(
            np.asarray(X), np.asarray(y), ForestConfig(n_trees=15, min_samples_leaf=3, seed=2), 5
        )
        assert mean > 0.5
