import numpy as np
import pytest

from vlpr.cli import main
from vlpr.config import PipelineConfig
from vlpr.embedding import DEFAULT_LABELS, PixelEmbeddingMap, TextEmbeddingSet
from vlpr.evaluation import PoseTable, write_pose_csv
from vlpr.formats import write_embedding_map, write_text_embeddings
from vlpr.index import index_to_bytes, load_index
from vlpr.pipeline import (
    build_index_from_maps,
    build_vocabulary_from_maps,
    evaluate_queries,
)
from vlpr.synthetic import RevisitSpec, generate_revisit_corpus, write_revisit_corpus
from vlpr.vocabulary import load_vocabulary


def orthonormal_texts(dim=16):
    rng = np.random.default_rng(123)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return TextEmbeddingSet(labels=DEFAULT_LABELS, vectors=q[: len(DEFAULT_LABELS)].astype(np.float32))


def planted_cluster_maps(texts, n_files=3, side=16, sigma=0.05, seed=0):
    """Maps whose pixels sit near 8 planted centers tied to static labels."""
    rng = np.random.default_rng(seed)
    static = ["road", "sidewalk", "building", "vegetation", "trunk", "terrain", "pole", "sky"]
    centers = np.stack(
        [2.0 * texts.vectors[texts.index_of(l)].astype(np.float64) for l in static]
    )
    maps = []
    for f in range(n_files):
        assignment = rng.integers(0, 8, size=(side, side))
        data = centers[assignment] + sigma * rng.normal(size=(side, side, texts.dim))
        maps.append(
            PixelEmbeddingMap.from_array(data.astype(np.float32), f"synth{f:02d}")
        )
    return maps, centers


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    corpus = generate_revisit_corpus(RevisitSpec(n_places=10, seed=5))
    write_revisit_corpus(corpus, out)
    return out


class TestBuildVocabCommand:
    def test_three_files_v8_loads_with_matching_dims(self, tmp_path):
        texts = orthonormal_texts()
        maps, _ = planted_cluster_maps(texts)
        emb_dir = tmp_path / "maps"
        emb_dir.mkdir()
        for m in maps:
            write_embedding_map(m, emb_dir / f"{m.source_image_id}.vlpr")
        write_text_embeddings(texts, tmp_path / "labels.vltx")
        out = tmp_path / "vocab.vlvb"
        code = main([
            "build-vocab",
            "--embeddings", str(emb_dir),
            "--texts", str(tmp_path / "labels.vltx"),
            "--out", str(out),
            "--v", "8", "--k", "256", "--seed", "3",
        ])
        assert code == 0
        vocab = load_vocabulary(out)
        assert vocab.v == 8
        assert vocab.dim == texts.dim

    def test_rerun_same_seed_bit_identical(self, corpus_dir, tmp_path):
        args = [
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--v", "16", "--k", "150", "--seed", "21",
        ]
        out1, out2 = tmp_path / "v1.vlvb", tmp_path / "v2.vlvb"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_planted_clusters_recovered(self, tmp_path):
        # Oracle: the planted cluster centers themselves.
        texts = orthonormal_texts()
        maps, centers = planted_cluster_maps(texts, sigma=0.05)
        cfg = PipelineConfig(k=256, v=8, seed=9)
        vocab, _ = build_vocabulary_from_maps(maps, texts, cfg)
        for center in centers:
            best = np.min(
                np.linalg.norm(vocab.centroids.astype(np.float64) - center, axis=1)
            )
            assert best < 0.1

    def test_corpus_smaller_than_v_is_computation_error(self, corpus_dir, tmp_path):
        code = main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(tmp_path / "x.vlvb"),
            "--v", "512", "--k", "10",
        ])
        assert code == 4


class TestIndexCommand:
    def build_vocab(self, corpus_dir, tmp_path):
        vocab_path = tmp_path / "vocab.vlvb"
        assert main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(vocab_path),
            "--v", "16", "--k", "150", "--seed", "21",
        ]) == 0
        return vocab_path

    def test_index_round_trip_and_contents(self, corpus_dir, tmp_path):
        vocab_path = self.build_vocab(corpus_dir, tmp_path)
        out = tmp_path / "db.vlix"
        code = main([
            "index",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--poses", str(corpus_dir / "db_poses.csv"),
            "--out", str(out),
            "--k", "150", "--seed", "21",
        ])
        assert code == 0
        db = load_index(out)
        assert len(db) == 10
        for record in db.records():
            assert record.pose is not None
            assert record.graph_payload

    def test_missing_poses_warn_and_skip(self, corpus_dir, tmp_path):
        vocab_path = self.build_vocab(corpus_dir, tmp_path)
        poses = PoseTable(entries={"place000_db": (0.0, 0.0), "place001_db": (100.0, 0.0)})
        pose_path = tmp_path / "partial.csv"
        write_pose_csv(poses, pose_path)
        out = tmp_path / "partial.vlix"
        code = main([
            "index",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--poses", str(pose_path),
            "--out", str(out),
            "--k", "150", "--seed", "21",
        ])
        assert code == 0
        assert len(load_index(out)) == 2


class TestEvalCommand:
    def prepare(self, corpus_dir, tmp_path):
        vocab_path = tmp_path / "vocab.vlvb"
        index_path = tmp_path / "db.vlix"
        common = ["--k", "150", "--seed", "21"]
        assert main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(vocab_path), "--v", "16", *common,
        ]) == 0
        assert main([
            "index",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--poses", str(corpus_dir / "db_poses.csv"),
            "--out", str(index_path), *common,
        ]) == 0
        return vocab_path, index_path, common

    def test_self_retrieval_perfect_recall(self, corpus_dir, tmp_path, capsys):
        vocab_path, index_path, common = self.prepare(corpus_dir, tmp_path)
        code = main([
            "eval",
            "--index", str(index_path),
            "--queries", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--query-poses", str(corpus_dir / "db_poses.csv"),
            *common,
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "retrieval_recall@1=1.000000" in out
        assert "reranked_recall@1=1.000000" in out

    def test_report_files_written(self, corpus_dir, tmp_path):
        vocab_path, index_path, common = self.prepare(corpus_dir, tmp_path)
        report_dir = tmp_path / "report"
        code = main([
            "eval",
            "--index", str(index_path),
            "--queries", str(corpus_dir / "queries"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--query-poses", str(corpus_dir / "query_poses.csv"),
            "--report-dir", str(report_dir),
            *common,
        ])
        assert code == 0
        for name in ("report.txt", "report.kv", "per_query.csv", "recall_curve.png", "rank_histogram.png"):
            assert (report_dir / name).exists(), name
        kv = (report_dir / "report.kv").read_text()
        assert "retrieval_recall@1=" in kv
        csv_text = (report_dir / "per_query.csv").read_text()
        assert csv_text.startswith("query_id,retrieval_first_rank,reranked_first_rank")
        assert len(csv_text.strip().split("\n")) == 11

    def test_query_command_outputs_candidates(self, corpus_dir, tmp_path, capsys):
        vocab_path, index_path, common = self.prepare(corpus_dir, tmp_path)
        capsys.readouterr()  # drop the build/index chatter
        query_file = sorted((corpus_dir / "queries").glob("*.vlpr"))[0]
        code = main([
            "query",
            "--index", str(index_path),
            "--embedding", str(query_file),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "-n", "3", *common,
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0] == "rank,image_id,score"
        assert len(lines) == 4
        assert lines[1].startswith("1,place000_db")


class TestInspectCommand:
    def test_inspect_all_formats(self, corpus_dir, tmp_path, capsys):
        vocab_path = tmp_path / "vocab.vlvb"
        index_path = tmp_path / "db.vlix"
        assert main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(vocab_path), "--v", "16", "--k", "100",
        ]) == 0
        assert main([
            "index",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--vocab", str(vocab_path),
            "--poses", str(corpus_dir / "db_poses.csv"),
            "--out", str(index_path), "--k", "100",
        ]) == 0
        for path, marker in [
            (sorted((corpus_dir / "db").glob("*.vlpr"))[0], "embedding map"),
            (corpus_dir / "labels.vltx", "text embeddings"),
            (vocab_path, "vocabulary"),
            (index_path, "index"),
        ]:
            assert main(["inspect", "--file", str(path)]) == 0
            assert marker in capsys.readouterr().out


class TestExitCodes:
    def test_config_error_is_2(self, corpus_dir, tmp_path):
        code = main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(tmp_path / "v.vlvb"),
            "--k", "0",
        ])
        assert code == 2

    def test_unknown_config_key_is_2(self, corpus_dir, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("no_such_option = 5\n")
        code = main([
            "build-vocab",
            "--embeddings", str(corpus_dir / "db"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(tmp_path / "v.vlvb"),
            "--config", str(bad),
        ])
        assert code == 2

    def test_input_error_is_3(self, corpus_dir, tmp_path):
        code = main([
            "build-vocab",
            "--embeddings", str(tmp_path / "nowhere"),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(tmp_path / "v.vlvb"),
        ])
        assert code == 3

    def test_truncated_input_named_and_rejected(self, corpus_dir, tmp_path):
        broken_dir = tmp_path / "broken"
        broken_dir.mkdir()
        src = sorted((corpus_dir / "db").glob("*.vlpr"))[0]
        (broken_dir / "bad.vlpr").write_bytes(src.read_bytes()[:40])
        code = main([
            "build-vocab",
            "--embeddings", str(broken_dir),
            "--texts", str(corpus_dir / "labels.vltx"),
            "--out", str(tmp_path / "v.vlvb"),
        ])
        assert code == 3


class TestDeterminismAndWorkers:
    def test_worker_pool_output_identical_to_sequential(self):
        corpus = generate_revisit_corpus(RevisitSpec(n_places=6, seed=77))
        maps = list(corpus.database.values())
        base = dict(k=120, v=16, seed=13)
        cfg1 = PipelineConfig(workers=1, **base)
        cfg4 = PipelineConfig(workers=4, **base)
        vocab1, _ = build_vocabulary_from_maps(maps, corpus.texts, cfg1)
        vocab4, _ = build_vocabulary_from_maps(maps, corpus.texts, cfg4)
        assert vocab1.centroids.tobytes() == vocab4.centroids.tobytes()
        db1, _ = build_index_from_maps(maps, corpus.texts, vocab1, corpus.db_poses, cfg1)
        db4, _ = build_index_from_maps(maps, corpus.texts, vocab4, corpus.db_poses, cfg4)
        assert index_to_bytes(db1) == index_to_bytes(db4)

    def test_filtering_ablation_on_dynamic_corpus(self):
        corpus = generate_revisit_corpus(RevisitSpec(n_places=20, seed=31))
        maps = list(corpus.database.values())
        queries = list(corpus.queries.values())
        recalls = {}
        for filtering in (True, False):
            cfg = PipelineConfig(k=200, v=48, seed=11, filtering=filtering)
            vocab, _ = build_vocabulary_from_maps(maps, corpus.texts, cfg)
            db, _ = build_index_from_maps(maps, corpus.texts, vocab, corpus.db_poses, cfg)
            outcome = evaluate_queries(db, queries, corpus.texts, vocab, corpus.query_poses, cfg)
            recalls[filtering] = outcome.retrieval.recalls[1]
        assert recalls[True] >= recalls[False]
