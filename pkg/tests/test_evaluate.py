import numpy as np
import pytest

import qbesearch.search
from qbesearch.config import RunConfig
from qbesearch.corpus import FeatureMatrix, compute_norm_stats, select_queries
from qbesearch.evaluate import (
    EvalReport,
    average_precision,
    benchmark,
    build_relevance,
    evaluate_rankings,
    mean_average_precision,
    padding_sweep,
    precision_at_5,
    precision_at_n,
    save_report,
    sweep_rows_to_tsv,
)
from qbesearch.indexer import build_index
from qbesearch.network import init_params
from qbesearch.search import QueryResult

from conftest import SMALL_NET
from oracles import ap_oracle, p_at_5_oracle, p_at_n_oracle


class TestAveragePrecision:
    def test_two_relevant_at_ranks_one_and_three(self):
        ranking = ["a", "b", "c", "d"]
        assert average_precision(ranking, {"a", "c"}) == pytest.approx((1.0 + 2.0 / 3.0) / 2)

    def test_all_relevant_on_top(self):
        assert average_precision(["a", "b", "c"], {"a", "b"}) == 1.0

    def test_no_relevant_retrieved(self):
        assert average_precision(["a", "b"], {"z"}) == 0.0

    def test_empty_ranking_rejected(self):
        with pytest.raises(ValueError):
            average_precision([], {"a"})


class TestPrecisionAtN:
    def test_perfect_top_n(self):
        assert precision_at_n(["a", "b", "c", "d"], {"a", "b"}) == 1.0

    def test_partial(self):
        assert precision_at_n(["a", "x", "b", "y"], {"a", "b"}) == 0.5

    def test_empty_relevant_rejected(self):
        with pytest.raises(ValueError):
            precision_at_n(["a"], set())


class TestPrecisionAt5:
    def test_two_of_five(self):
        ranking = ["a", "x", "b", "y", "z", "q"]
        assert precision_at_5(ranking, {"a", "b"}) == pytest.approx(0.4)

    def test_short_ranking_divisor(self):
        assert precision_at_5(["a", "x", "b"], {"a", "b"}) == pytest.approx(2.0 / 3.0)


class TestOracleEquivalence:
    def test_metrics_match_enumeration_on_random_rankings(self):
        rng = np.random.default_rng(0)
        ids = [f"u{k:02d}" for k in range(20)]
        for _ in range(100):
            perm = rng.permutation(20)
            ranking = [ids[i] for i in perm]
            n_rel = int(rng.integers(1, 10))
            relevant = set(rng.choice(ids, size=n_rel, replace=False).tolist())
            assert average_precision(ranking, relevant) == ap_oracle(ranking, relevant)
            assert precision_at_n(ranking, relevant) == p_at_n_oracle(ranking, relevant)
            assert precision_at_5(ranking, relevant) == p_at_5_oracle(ranking, relevant)

    def test_map_is_plain_mean(self):
        aps = [0.25, 0.5, 1.0]
        assert mean_average_precision(aps) == sum(aps) / 3
        with pytest.raises(ValueError):
            mean_average_precision([])

    def test_metric_bounds(self):
        rng = np.random.default_rng(1)
        ids = [f"u{k}" for k in range(12)]
        for _ in range(200):
            ranking = [ids[i] for i in rng.permutation(12)]
            relevant = set(rng.choice(ids, size=int(rng.integers(1, 6)), replace=False).tolist())
            for metric in (average_precision, precision_at_n, precision_at_5):
                v = metric(ranking, relevant)
                assert 0.0 <= v <= 1.0

    def test_map_one_iff_all_relevant_ranked_on_top(self):
        rng = np.random.default_rng(2)
        ids = [f"u{k}" for k in range(8)]
        for _ in range(100):
            ranking = [ids[i] for i in rng.permutation(8)]
            relevant = set(rng.choice(ids, size=3, replace=False).tolist())
            ap = average_precision(ranking, relevant)
            on_top = set(ranking[:3]) == relevant
            assert (ap == 1.0) == on_top


class TestEvaluateRankings:
    def make_results(self):
        return [
            QueryResult("q0", [("a", 0.1, 0), ("b", 0.2, 0), ("c", 0.3, 0)], "embedding"),
            QueryResult("q1", [("b", 0.1, 0), ("a", 0.4, 0), ("c", 0.6, 0)], "embedding"),
            QueryResult("q_unjudged", [("a", 0.2, 0)], "embedding"),
        ]

    def test_report_fields(self):
        relevance = {"q0": {"a"}, "q1": {"a", "c"}}
        report = evaluate_rankings(self.make_results(), relevance, {"window_len": 24}, 1.5)
        assert len(report.per_query) == 2  # unjudged query excluded
        assert report.method == "embedding"
        assert report.seconds == 1.5
        assert report.config_echo == {"window_len": 24}
        assert report.map == pytest.approx((1.0 + (0.5 + 2.0 / 3.0) / 2) / 2)

    def test_no_judged_queries_rejected(self):
        with pytest.raises(ValueError):
            evaluate_rankings(self.make_results(), {})

    def test_save_report_files(self, tmp_path):
        relevance = {"q0": {"a"}, "q1": {"a", "c"}}
        report = evaluate_rankings(self.make_results(), relevance, {"window_len": 24}, 0.25)
        save_report(report, tmp_path / "report.tsv", tmp_path / "summary.cfg")
        tsv = (tmp_path / "report.tsv").read_text().splitlines()
        assert tsv[0] == "query_id\tnum_relevant\tap\tp_at_n\tp_at_5"
        assert len(tsv) == 3
        summary = dict(
            ln.split("=", 1) for ln in (tmp_path / "summary.cfg").read_text().splitlines()
        )
        assert summary["method"] == "embedding"
        assert summary["num_queries"] == "2"
        assert summary["window_len"] == "24"
        assert float(summary["map"]) == pytest.approx(report.map)


class TestRelevance:
    def test_words_absent_from_test_split_excluded(self, small_corpus):
        queries = select_queries(small_corpus, per_word=1, seed=0)
        relevance = build_relevance(queries, small_corpus)
        test_words = {a.word for a in small_corpus.split_annotations("test")}
        for qid, _, word in queries:
            assert (qid in relevance) == (word in test_words)
        for qid, rel in relevance.items():
            assert rel <= {u.utterance_id for u in small_corpus.split_utterances("test")}


def mini_run_config():
    return RunConfig(
        {
            "vocab_size": 5,
            "instances_per_word": 6,
            "feature_dim": 6,
            "word_len_min": 8,
            "word_len_max": 12,
            "words_per_utterance_min": 1,
            "words_per_utterance_max": 2,
            "noise_std": 0.05,
            "warp_min": 0.95,
            "warp_max": 1.05,
            "queries_per_word": 2,
            "window_len": 24,
            "shift": 4,
            "conv1_filters": 8,
            "conv1_width": 5,
            "pool1": 2,
            "conv2_filters": 8,
            "conv2_width": 3,
            "hidden_units": 16,
            "embedding_dim": 8,
            "batch_size": 16,
            "max_epochs": 2,
            "patience": 2,
            "triplets_per_epoch": 48,
            "dev_triplets": 16,
            "pair_counts": [10, 30],
            "seed": 13,
            "bench_repeats": 1,
        }
    )


@pytest.fixture(scope="module")
def mini_corpus():
    from qbesearch.corpus import generate_synthetic

    cfg = mini_run_config()
    return generate_synthetic(cfg.synthetic_config(), cfg.split_fractions())


class TestBenchmark:
    def test_reports_and_timing(self, mini_corpus):
        cfg = mini_run_config()
        queries = select_queries(mini_corpus, cfg.queries_per_word, cfg.seed)
        norm = compute_norm_stats(mini_corpus.split_utterances("train"))
        params = init_params(cfg.net_config(), seed=1)
        from qbesearch.corpus import apply_norm

        test_utts = [apply_norm(u, norm) for u in mini_corpus.split_utterances("test")]
        index = build_index(params, test_utts, cfg.window_len, cfg.shift)
        reports = benchmark(queries, index, mini_corpus, params, norm, repeats=1)
        assert set(reports) == {"embedding", "dtw"}
        for method, report in reports.items():
            assert report.seconds > 0.0
            assert report.config_echo == {"window_len": 24, "shift": 4}
            assert 0.0 <= report.map <= 1.0
        assert reports["embedding"].method == "embedding"
        assert reports["dtw"].method == "dtw"

    def test_embedding_search_never_runs_the_alignment_kernel(self, mini_corpus, monkeypatch):
        cfg = mini_run_config()
        queries = select_queries(mini_corpus, cfg.queries_per_word, cfg.seed)
        norm = compute_norm_stats(mini_corpus.split_utterances("train"))
        params = init_params(cfg.net_config(), seed=1)
        from qbesearch.corpus import apply_norm
        from qbesearch.search import run_queries

        test_utts = [apply_norm(u, norm) for u in mini_corpus.split_utterances("test")]
        index = build_index(params, test_utts, cfg.window_len, cfg.shift)
        calls = {"n": 0}
        real = qbesearch.search.dtw_cost

        def counting(*args, **kwargs):
            calls["n"] += 1
            return real(*args, **kwargs)

        monkeypatch.setattr(qbesearch.search, "dtw_cost", counting)
        nqueries = [(qid, apply_norm(m, norm), w) for qid, m, w in queries]
        run_queries(nqueries, params, index)
        assert calls["n"] == 0
        qbesearch.search.dtw_rank(nqueries[0][1], test_utts)
        assert calls["n"] == len(test_utts)


class TestPaddingSweep:
    def test_rows_and_columns(self, mini_corpus):
        cfg = mini_run_config()
        queries = select_queries(mini_corpus, cfg.queries_per_word, cfg.seed)
        rows = padding_sweep(mini_corpus, queries, cfg)
        assert len(rows) == 4  # 2 pair counts x 2 paddings
        assert [(r["pair_count"], r["padding"]) for r in rows] == [
            (10, "context"),
            (10, "zero"),
            (30, "context"),
            (30, "zero"),
        ]
        for r in rows:
            assert 0.0 <= r["map"] <= 1.0
            assert r["train_seconds"] > 0.0
        tsv = sweep_rows_to_tsv(rows).splitlines()
        assert tsv[0].split("\t") == [
            "pair_count",
            "padding",
            "map",
            "p_at_n",
            "p_at_5",
            "train_seconds",
            "search_seconds",
        ]
        assert len(tsv) == 5

    def test_pair_count_beyond_available_errors_with_maximum(self, mini_corpus):
        cfg = mini_run_config()
        cfg.values["pair_counts"] = [10_000]
        queries = select_queries(mini_corpus, cfg.queries_per_word, cfg.seed)
        with pytest.raises(ValueError, match=r"only \d+ are available"):
            padding_sweep(mini_corpus, queries, cfg)
