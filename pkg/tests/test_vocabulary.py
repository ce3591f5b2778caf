import numpy as np
import pytest

from vlpr.vocabulary import (
    Histogram,
    TrainingMeta,
    Vocabulary,
    histogram,
    lloyd_kmeans,
    load_vocabulary,
    quantize,
    quantize_batch,
    save_vocabulary,
    train_vocabulary,
    vocabulary_from_bytes,
    vocabulary_to_bytes,
)
from vlpr.formats import FormatError


def brute_force_nearest(descriptor, centroids):
    """Oracle: exhaustive scan with direct squared differences in float64."""
    best_idx, best_d2 = 0, np.inf
    for v in range(centroids.shape[0]):
        diff = descriptor.astype(np.float64) - centroids[v].astype(np.float64)
        d2 = float(np.sum(diff * diff))
        if d2 < best_d2:
            best_idx, best_d2 = v, d2
    return best_idx


def planted_blobs(rng, n_blobs, per_blob, d, sigma, spread=4.0):
    means = rng.normal(size=(n_blobs, d)) * spread
    points = np.concatenate(
        [means[b] + sigma * rng.normal(size=(per_blob, d)) for b in range(n_blobs)]
    )
    truth = np.repeat(np.arange(n_blobs), per_blob)
    return points, means, truth


class TestTrainVocabulary:
    def test_v_distinct_points_become_the_centroids(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(5, 3))
        vocab = train_vocabulary(points, v=5, seed=0)
        got = sorted(map(tuple, vocab.centroids.astype(np.float64).round(5)))
        expected = sorted(map(tuple, points.round(5)))
        assert got == expected
        assert vocab.training_meta.inertia == pytest.approx(0.0, abs=1e-12)

    def test_two_blobs_recover_their_means(self):
        # Oracle: the planted per-blob sample means.
        rng = np.random.default_rng(8)
        sigma, n = 0.1, 400
        a = np.array([0.0, 0.0]) + sigma * rng.normal(size=(n, 2))
        b = np.array([5.0, 5.0]) + sigma * rng.normal(size=(n, 2))
        corpus = np.concatenate([a, b])
        vocab = train_vocabulary(corpus, v=2, seed=3)
        blob_means = np.stack([a.mean(axis=0), b.mean(axis=0)])
        tol = 3 * sigma / np.sqrt(n)
        for mean in blob_means:
            nearest = vocab.centroids[
                np.argmin(np.sum((vocab.centroids - mean.astype(np.float32)) ** 2, axis=1))
            ]
            assert np.linalg.norm(nearest - mean) <= tol

    @pytest.mark.parametrize("seed", range(5))
    def test_inertia_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        corpus = rng.normal(size=(300, 6))
        result = lloyd_kmeans(corpus, v=10, seed=seed)
        history = result.inertia_history
        assert len(history) >= 1
        assert all(b <= a for a, b in zip(history, history[1:]))

    def test_small_corpus_rejected_with_counts(self):
        with pytest.raises(ValueError, match="3 descriptors is smaller than V=8"):
            train_vocabulary(np.zeros((3, 2)), v=8)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(44)
        corpus = rng.normal(size=(200, 4))
        v1 = train_vocabulary(corpus, v=16, seed=5)
        v2 = train_vocabulary(corpus, v=16, seed=5)
        assert v1.centroids.tobytes() == v2.centroids.tobytes()
        assert v1.training_meta == v2.training_meta

    def test_duplicate_heavy_corpus_rejected(self):
        corpus = np.tile(np.array([[1.0, 2.0], [3.0, 4.0]]), (10, 1))
        with pytest.raises(ValueError, match="distinct"):
            train_vocabulary(corpus, v=4, seed=0)

    def test_empty_cluster_reseeding_keeps_v_centroids(self):
        # One far outlier plus a tight clump often empties a cluster.
        rng = np.random.default_rng(10)
        clump = rng.normal(size=(50, 2)) * 0.01
        outlier = np.array([[100.0, 100.0]])
        vocab = train_vocabulary(np.concatenate([clump, outlier]), v=3, seed=2)
        assert vocab.v == 3


class TestQuantize:
    def make_vocab(self, centroids):
        return Vocabulary(
            centroids=np.asarray(centroids, dtype=np.float32),
            training_meta=TrainingMeta(iterations=0, inertia=0.0, seed=0),
        )

    def test_descriptor_at_centroid_maps_to_it(self):
        rng = np.random.default_rng(6)
        vocab = self.make_vocab(rng.normal(size=(6, 4)))
        assert quantize(vocab.centroids[3], vocab) == 3

    def test_equidistant_tie_takes_lowest_index(self):
        # Integer coordinates make both squared distances exactly 4.0.
        vocab = self.make_vocab([[10.0, 0.0], [0.0, 2.0], [10.0, 10.0], [-6.0, 0.0], [0.0, -2.0]])
        assert quantize(np.array([0.0, 0.0]), vocab) == 1

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(123)
        vocab = self.make_vocab(rng.normal(size=(32, 8)))
        descriptors = rng.normal(size=(300, 8)).astype(np.float32)
        got = quantize_batch(descriptors, vocab)
        for i in range(descriptors.shape[0]):
            assert got[i] == brute_force_nearest(descriptors[i], vocab.centroids)

    def test_idempotent_on_every_centroid(self):
        rng = np.random.default_rng(15)
        vocab = self.make_vocab(rng.normal(size=(20, 5)))
        for v in range(vocab.v):
            assert quantize(vocab.centroids[v], vocab) == v

    def test_dim_mismatch_rejected(self):
        vocab = self.make_vocab(np.eye(3))
        with pytest.raises(ValueError, match="dim"):
            quantize(np.zeros(5), vocab)


class TestHistogram:
    def make_vocab(self, seed=0, v=8, d=4):
        rng = np.random.default_rng(seed)
        return Vocabulary(
            centroids=rng.normal(size=(v, d)).astype(np.float32),
            training_meta=TrainingMeta(iterations=0, inertia=0.0, seed=0),
        )

    def test_single_descriptor_at_centroid_zero(self):
        vocab = self.make_vocab()
        h = histogram([vocab.centroids[0]], vocab, norm_mode="counts")
        expected = np.zeros(8)
        expected[0] = 1
        np.testing.assert_array_equal(h.bins, expected)

    def test_identical_descriptors_l1_single_bin(self):
        vocab = self.make_vocab()
        h = histogram([vocab.centroids[5]] * 40, vocab, norm_mode="l1")
        assert h.bins[5] == pytest.approx(1.0)
        assert h.bins.sum() == pytest.approx(1.0)
        assert np.count_nonzero(h.bins) == 1

    def test_counts_match_per_descriptor_quantize_oracle(self):
        rng = np.random.default_rng(55)
        vocab = self.make_vocab(seed=1)
        descriptors = rng.normal(size=(200, 4)).astype(np.float32)
        h = histogram(descriptors, vocab, norm_mode="counts")
        assert h.bins.sum() == 200
        expected = np.zeros(8)
        for d in descriptors:
            expected[quantize(d, vocab)] += 1
        np.testing.assert_array_equal(h.bins, expected)

    def test_order_invariance(self):
        rng = np.random.default_rng(66)
        vocab = self.make_vocab(seed=2)
        descriptors = rng.normal(size=(50, 4)).astype(np.float32)
        h1 = histogram(descriptors, vocab, norm_mode="l1")
        h2 = histogram(descriptors[::-1].copy(), vocab, norm_mode="l1")
        np.testing.assert_array_equal(h1.bins, h2.bins)

    def test_empty_descriptor_list_is_flagged_empty(self):
        vocab = self.make_vocab()
        h = histogram([], vocab, norm_mode="l1")
        assert h.is_empty
        assert np.all(h.bins == 0)

    def test_l2_mode_has_unit_norm(self):
        rng = np.random.default_rng(77)
        vocab = self.make_vocab(seed=3)
        h = histogram(rng.normal(size=(64, 4)).astype(np.float32), vocab, norm_mode="l2")
        assert np.linalg.norm(h.bins) == pytest.approx(1.0, abs=1e-9)

    def test_invalid_bins_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            Histogram(bins=np.array([-0.1, 1.1]), norm_mode="counts")
        with pytest.raises(ValueError, match="integers"):
            Histogram(bins=np.array([0.5, 0.5]), norm_mode="counts")
        with pytest.raises(ValueError, match="sum"):
            Histogram(bins=np.array([0.5, 0.6]), norm_mode="l1")


class TestVocabularyFormat:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(33)
        vocab = train_vocabulary(rng.normal(size=(100, 6)), v=8, seed=4)
        path = tmp_path / "v.vlvb"
        save_vocabulary(vocab, path)
        again = load_vocabulary(path)
        assert again.centroids.tobytes() == vocab.centroids.tobytes()
        assert again.training_meta == vocab.training_meta
        assert vocabulary_to_bytes(again) == path.read_bytes()

    def test_corruption_rejected(self):
        rng = np.random.default_rng(34)
        vocab = train_vocabulary(rng.normal(size=(50, 3)), v=4, seed=1)
        raw = vocabulary_to_bytes(vocab)
        with pytest.raises(FormatError, match="magic"):
            vocabulary_from_bytes(b"ZZZZ" + raw[4:])
        with pytest.raises(FormatError, match="truncated"):
            vocabulary_from_bytes(raw[:-4])
        with pytest.raises(FormatError, match="trailing"):
            vocabulary_from_bytes(raw + b"!")

    def test_identical_centroids_rejected(self):
        with pytest.raises(ValueError, match="identical"):
            Vocabulary(
                centroids=np.ones((3, 2), dtype=np.float32),
                training_meta=TrainingMeta(iterations=0, inertia=0.0, seed=0),
            )
