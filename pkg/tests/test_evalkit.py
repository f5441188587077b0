"""Relevance, AP@k and mAP evaluation against an independent brute-force oracle."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geovec.compress import CompressionSpec, Method
from geovec.errors import ConfigError, EvaluationError, ValidationError
from geovec.evalkit import EvalConfig, ap_at_k, compare_methods, evaluate, relevance
from geovec.index import IvfParams
from geovec.metrics import Metric
from geovec.vecstore import DatasetManifest, EmbeddingMatrix, ManifestRecord, Split


def make_dataset(n_queries, n_db, dim, vocab_size, max_labels, seed, n_train=0):
    """Random multi-label dataset: val rows are queries, test rows the database."""
    rng = np.random.default_rng(seed)
    total = n_queries + n_db + n_train
    matrix = EmbeddingMatrix.from_floats(rng.standard_normal((total, dim)).astype(np.float32))
    records = []
    for i in range(total):
        n_labels = int(rng.integers(1, max_labels + 1))
        labels = frozenset(rng.choice(vocab_size, size=n_labels, replace=False).tolist())
        split = Split.VAL if i < n_queries else (Split.TEST if i < n_queries + n_db else Split.TRAIN)
        records.append(ManifestRecord(f"rec-{i:05d}", i, split, labels))
    vocab = tuple(f"label_{v}" for v in range(vocab_size))
    return matrix, DatasetManifest(tuple(records), vocab)


def brute_force_map(matrix, manifest, k, metric):
    """Independent oracle: full pairwise sort plus the direct AP formula."""
    from scipy.spatial.distance import cdist

    metric_name = {Metric.L1: "cityblock", Metric.L2: "euclidean"}[metric]
    queries = [r for r in manifest.records if r.split is Split.VAL]
    database = sorted(
        (r for r in manifest.records if r.split is Split.TEST), key=lambda r: r.row
    )
    db_rows = np.array([r.row for r in database])
    dists = cdist(
        matrix.data[[q.row for q in queries]].astype(np.float64),
        matrix.data[db_rows].astype(np.float64),
        metric=metric_name,
    )
    aps = []
    skipped = 0
    for qi, q in enumerate(queries):
        relevant = np.array([bool(q.labels & d.labels) for d in database])
        if not relevant.any():
            skipped += 1
            continue
        order = np.lexsort((db_rows, dists[qi]))[:k]
        flags = relevant[order]
        hits = 0
        precision_sum = 0.0
        for rank, f in enumerate(flags, start=1):
            if f:
                hits += 1
                precision_sum += hits / rank
        aps.append(precision_sum / hits if hits else 0.0)
    return (sum(aps) / len(aps) if aps else None), skipped


class TestRelevance:
    def test_overlap(self):
        assert relevance(frozenset({1, 5}), frozenset({5, 9})) == 1

    def test_disjoint(self):
        assert relevance(frozenset({1, 5}), frozenset({2, 9})) == 0

    def test_singleton_equality(self):
        assert relevance(frozenset({3}), frozenset({3})) == 1

    def test_symmetry(self):
        a, b = frozenset({1, 2}), frozenset({2, 7})
        assert relevance(a, b) == relevance(b, a)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            relevance(frozenset(), frozenset({1}))


class TestApAtK:
    def test_perfect_ranking(self):
        assert ap_at_k([1] * 20, 20) == 1.0

    def test_total_miss(self):
        assert ap_at_k([0] * 20, 20) == 0.0

    def test_hand_computed(self):
        assert ap_at_k([1, 0, 1], 3) == pytest.approx(5 / 6)

    def test_too_many_flags(self):
        with pytest.raises(ValidationError):
            ap_at_k([1, 0, 1], 2)

    def test_short_list_allowed(self):
        assert ap_at_k([1], 20) == 1.0

    @given(st.lists(st.integers(0, 1), min_size=0, max_size=19))
    @settings(max_examples=60, deadline=None)
    def test_prepending_relevant_never_decreases(self, flags):
        base = ap_at_k(flags, 20)
        assert ap_at_k([1] + flags, 20) >= base - 1e-12

    @given(st.lists(st.integers(0, 1), min_size=0, max_size=19))
    @settings(max_examples=60, deadline=None)
    def test_prepending_irrelevant_never_increases(self, flags):
        base = ap_at_k(flags, 20)
        assert ap_at_k([0] + flags, 20) <= base + 1e-12

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=15))
    @settings(max_examples=60, deadline=None)
    def test_trailing_zeros_do_not_change_ap(self, flags):
        padded = flags + [0] * (20 - len(flags))
        assert ap_at_k(padded, 20) == pytest.approx(ap_at_k(flags, 20))

    def test_range(self):
        assert 0.0 <= ap_at_k([0, 1, 0, 1, 1], 5) <= 1.0


class TestEvaluate:
    def test_all_relevant_gives_map_one(self):
        matrix, manifest = make_dataset(10, 50, 8, vocab_size=1, max_labels=1, seed=1)
        report = evaluate(matrix, manifest, EvalConfig(k=20))
        assert report.map_at_k == 1.0
        assert report.skipped_queries == 0

    def test_matches_brute_force_oracle(self):
        matrix, manifest = make_dataset(50, 400, 16, vocab_size=12, max_labels=5, seed=2)
        report = evaluate(matrix, manifest, EvalConfig(k=20, metric=Metric.L1))
        oracle_map, oracle_skipped = brute_force_map(matrix, manifest, 20, Metric.L1)
        assert report.skipped_queries == oracle_skipped
        assert report.map_at_k == pytest.approx(oracle_map, abs=1e-9)

    def test_flat_equals_full_probe_ivf(self):
        matrix, manifest = make_dataset(30, 300, 16, vocab_size=8, max_labels=3, seed=3)
        flat = evaluate(matrix, manifest, EvalConfig(k=20))
        ivf = evaluate(
            matrix, manifest, EvalConfig(k=20, index=IvfParams(nlist=8, nprobe=8, seed=5))
        )
        assert flat.map_at_k == ivf.map_at_k
        assert [q.ap for q in flat.per_query] == [q.ap for q in ivf.per_query]

    def test_positive_scaling_leaves_map_unchanged(self):
        matrix, manifest = make_dataset(20, 150, 12, vocab_size=6, max_labels=3, seed=4)
        scaled = EmbeddingMatrix.from_floats(matrix.data * np.float32(7.25))
        for metric in (Metric.L1, Metric.L2, Metric.COSINE):
            a = evaluate(matrix, manifest, EvalConfig(k=10, metric=metric))
            b = evaluate(scaled, manifest, EvalConfig(k=10, metric=metric))
            assert a.map_at_k == pytest.approx(b.map_at_k, abs=1e-12)

    def test_row_relabeling_leaves_map_unchanged(self):
        matrix, manifest = make_dataset(15, 120, 12, vocab_size=6, max_labels=3, seed=5)
        perm = np.random.default_rng(6).permutation(matrix.count)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(matrix.count)
        permuted_matrix = EmbeddingMatrix.from_floats(matrix.data[inverse])
        permuted_records = tuple(
            ManifestRecord(r.id, int(perm[r.row]), r.split, r.labels) for r in manifest.records
        )
        permuted = DatasetManifest(permuted_records, manifest.vocabulary)
        a = evaluate(matrix, manifest, EvalConfig(k=10))
        b = evaluate(permuted_matrix, permuted, EvalConfig(k=10))
        assert a.map_at_k == pytest.approx(b.map_at_k, abs=1e-12)

    def test_compression_applied_to_both_sides(self):
        matrix, manifest = make_dataset(10, 80, 32, vocab_size=4, max_labels=2, seed=7)
        cfg = EvalConfig(k=10, compression=CompressionSpec(Method.BINARIZE))
        report = evaluate(matrix, manifest, cfg)
        assert report.config["compression"]["method"] == "binarize"
        assert 0.0 <= report.map_at_k <= 1.0

    def test_skipped_queries_counted_and_excluded(self):
        # queries with label 0, database with label 1 except two shared rows
        records = [ManifestRecord("q0", 0, Split.VAL, frozenset({0}))]
        records.append(ManifestRecord("q1", 1, Split.VAL, frozenset({1})))
        for i in range(2, 12):
            records.append(ManifestRecord(f"d{i}", i, Split.TEST, frozenset({1})))
        rng = np.random.default_rng(8)
        matrix = EmbeddingMatrix.from_floats(rng.standard_normal((12, 8)).astype(np.float32))
        manifest = DatasetManifest(tuple(records), ("a", "b"))
        report = evaluate(matrix, manifest, EvalConfig(k=5))
        assert report.skipped_queries == 1
        assert len(report.per_query) == 2
        outcome = {q.query_id: q for q in report.per_query}
        assert outcome["q0"].relevant_in_db == 0
        assert report.map_at_k == outcome["q1"].ap

    def test_no_usable_queries_rejected(self):
        records = [ManifestRecord("q", 0, Split.VAL, frozenset({0}))]
        records += [ManifestRecord(f"d{i}", i, Split.TEST, frozenset({1})) for i in range(1, 5)]
        rng = np.random.default_rng(9)
        matrix = EmbeddingMatrix.from_floats(rng.standard_normal((5, 8)).astype(np.float32))
        manifest = DatasetManifest(tuple(records), ("a", "b"))
        with pytest.raises(EvaluationError):
            evaluate(matrix, manifest, EvalConfig(k=5))

    def test_same_split_rejected(self):
        matrix, manifest = make_dataset(5, 20, 8, vocab_size=2, max_labels=1, seed=10)
        with pytest.raises(ConfigError):
            evaluate(matrix, manifest, EvalConfig(query_split=Split.TEST, db_split=Split.TEST))

    def test_map_is_mean_of_usable_aps(self):
        matrix, manifest = make_dataset(25, 200, 12, vocab_size=10, max_labels=4, seed=11)
        report = evaluate(matrix, manifest, EvalConfig(k=10))
        usable = [q.ap for q in report.per_query if q.relevant_in_db > 0]
        assert report.map_at_k == pytest.approx(sum(usable) / len(usable), abs=1e-12)

    def test_per_query_csv_shape(self):
        matrix, manifest = make_dataset(8, 40, 8, vocab_size=3, max_labels=2, seed=12)
        report = evaluate(matrix, manifest, EvalConfig(k=5))
        lines = report.per_query_csv().strip().splitlines()
        assert lines[0] == "query_id,ap,relevant_retrieved,relevant_in_db"
        assert len(lines) == 9


class TestCompareMethods:
    def test_single_config_equals_evaluate(self):
        matrix, manifest = make_dataset(10, 80, 16, vocab_size=4, max_labels=2, seed=13)
        cfg = EvalConfig(k=10)
        table = compare_methods(matrix, manifest, [cfg])
        assert table.maps[0] == evaluate(matrix, manifest, cfg).map_at_k

    def test_three_method_columns(self):
        matrix, manifest = make_dataset(10, 80, 64, vocab_size=4, max_labels=2, seed=14)
        configs = [
            EvalConfig(k=10),
            EvalConfig(k=10, compression=CompressionSpec(Method.BINARIZE)),
            EvalConfig(k=10, compression=CompressionSpec(Method.TRIVIAL_HASH, output_bits=16)),
        ]
        table = compare_methods(matrix, manifest, configs)
        assert table.labels == ("embedding", "binary-embedding", "trivial-hash-16")
        assert len(table.maps) == 3
        csv_lines = table.to_csv().strip().splitlines()
        assert csv_lines[0] == "method,map_at_10"
        assert len(csv_lines) == 4
        assert "mAP@10" in table.to_text()

    def test_identical_configs_identical_columns(self):
        matrix, manifest = make_dataset(10, 60, 16, vocab_size=4, max_labels=2, seed=15)
        cfg = EvalConfig(k=10)
        table = compare_methods(matrix, manifest, [cfg, cfg])
        assert table.maps[0] == table.maps[1]

    def test_mismatched_k_rejected(self):
        matrix, manifest = make_dataset(5, 30, 8, vocab_size=2, max_labels=1, seed=16)
        with pytest.raises(ConfigError, match="share"):
            compare_methods(matrix, manifest, [EvalConfig(k=10), EvalConfig(k=20)])
