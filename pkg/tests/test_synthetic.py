import numpy as np
import pytest

from vlpr.embedding import FilterSet, dynamic_mask, label_map
from vlpr.synthetic import RevisitSpec, generate_revisit_corpus, write_revisit_corpus
from vlpr.formats import read_embedding_map, read_text_embeddings


@pytest.fixture(scope="module")
def corpus():
    return generate_revisit_corpus(RevisitSpec(n_places=8, seed=42))


class TestGeneratedCorpus:
    def test_counts_and_ids(self, corpus):
        assert len(corpus.database) == 8
        assert len(corpus.queries) == 8
        assert set(corpus.db_poses.entries) == set(corpus.database)
        assert set(corpus.query_poses.entries) == set(corpus.queries)

    def test_deterministic_for_seed(self):
        a = generate_revisit_corpus(RevisitSpec(n_places=4, seed=9))
        b = generate_revisit_corpus(RevisitSpec(n_places=4, seed=9))
        for image_id in a.database:
            assert a.database[image_id].data.tobytes() == b.database[image_id].data.tobytes()
        for image_id in a.queries:
            assert a.queries[image_id].data.tobytes() == b.queries[image_id].data.tobytes()

    def test_database_views_contain_no_dynamic_labels(self, corpus):
        spec = RevisitSpec(n_places=8, seed=42)
        dyn = corpus.texts.index_of(spec.dynamic_label)
        for emb in corpus.database.values():
            lm = label_map(emb, corpus.texts)
            assert not np.any(lm.labels == dyn)

    def test_queries_contain_dynamic_blob_near_target_fraction(self, corpus):
        spec = RevisitSpec(n_places=8, seed=42)
        dyn = corpus.texts.index_of(spec.dynamic_label)
        total = spec.height * spec.width
        for emb in corpus.queries.values():
            lm = label_map(emb, corpus.texts)
            fraction = np.count_nonzero(lm.labels == dyn) / total
            assert abs(fraction - spec.dynamic_fraction) < 0.02

    def test_filtering_removes_exactly_the_blob(self, corpus):
        emb = next(iter(corpus.queries.values()))
        lm = label_map(emb, corpus.texts)
        mask = dynamic_mask(lm, corpus.texts, FilterSet({"car"}))
        assert np.array_equal(~mask, lm.labels == corpus.texts.index_of("car"))

    def test_poses_put_views_of_a_place_together(self, corpus):
        for place in range(8):
            db_pose = corpus.db_poses.get(f"place{place:03d}_db")
            q_pose = corpus.query_poses.get(f"place{place:03d}_q")
            assert db_pose == q_pose

    def test_write_layout(self, tmp_path, corpus):
        write_revisit_corpus(corpus, tmp_path)
        assert len(list((tmp_path / "db").glob("*.vlpr"))) == 8
        assert len(list((tmp_path / "queries").glob("*.vlpr"))) == 8
        texts = read_text_embeddings(tmp_path / "labels.vltx")
        assert texts.labels == corpus.texts.labels
        one = read_embedding_map(sorted((tmp_path / "db").glob("*.vlpr"))[0])
        assert one.dim == texts.dim

    def test_odd_place_count_rejected(self):
        with pytest.raises(ValueError, match="even"):
            generate_revisit_corpus(RevisitSpec(n_places=3))
