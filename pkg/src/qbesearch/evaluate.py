"""Retrieval metrics and the run-time / padding / pair-count experiments.

Metrics are computed over full rankings of the test split: average
precision per query, their mean (MAP), precision at N (N = number of
relevant utterances for the query) and precision at 5.  The benchmark
times the embedding scan against the frame-level alignment baseline on
identical query and test sets; the sweep trains one model per
(pair count, padding) cell and tabulates the metrics.
"""

import statistics
import time
from dataclasses import dataclass, field

from .checkpoint import params_digest
from .corpus import apply_norm, compute_norm_stats, normalize_corpus
from .indexer import build_index
from .network import train
from .search import dtw_rank, run_queries
from .segmenter import build_pairs, subsample_pairs


def average_precision(ranking, relevant):
    """Mean of precision at each relevant item's rank; 0 if none retrieved."""
    if not ranking:
        raise ValueError("empty ranking")
    hits = 0
    total = 0.0
    for rank, uid in enumerate(ranking, 1):
        if uid in relevant:
            hits += 1
            total += hits / rank
    if hits == 0:
        return 0.0
    return total / len(relevant)


def precision_at_n(ranking, relevant):
    """Precision among the top N, with N the number of relevant utterances."""
    if not ranking:
        raise ValueError("empty ranking")
    n = len(relevant)
    if n == 0:
        raise ValueError("precision@N is undefined without relevant utterances")
    top = ranking[:n]
    return sum(1 for uid in top if uid in relevant) / n


def precision_at_5(ranking, relevant):
    """Relevant among the top 5, divided by min(5, ranking length)."""
    if not ranking:
        raise ValueError("empty ranking")
    k = min(5, len(ranking))
    return sum(1 for uid in ranking[:5] if uid in relevant) / k


def mean_average_precision(aps):
    if not aps:
        raise ValueError("MAP needs at least one query")
    return sum(aps) / len(aps)


def build_relevance(queries, corpus, split="test"):
    """query_id -> set of split utterances containing the query's word.

    Queries whose word never occurs in the split are left out entirely.
    """
    by_word = {}
    for ann in corpus.split_annotations(split):
        by_word.setdefault(ann.word, set()).add(ann.utterance_id)
    out = {}
    for qid, _, word in queries:
        if word in by_word:
            out[qid] = by_word[word]
    return out


@dataclass
class EvalReport:
    map: float
    p_at_n: float
    p_at_5: float
    per_query: list  # (query_id, num_relevant, ap, p_at_n, p_at_5)
    method: str = "embedding"
    seconds: float = None
    config_echo: dict = field(default_factory=dict)


def evaluate_rankings(results, relevance, config_echo=None, seconds=None):
    """Score a list of QueryResult against a relevance mapping."""
    rows = []
    for res in results:
        rel = relevance.get(res.query_id)
        if not rel:
            continue  # no relevant utterance in the split: excluded from metrics
        ranking = [uid for uid, _, _ in res.ranking]
        rows.append(
            (
                res.query_id,
                len(rel),
                average_precision(ranking, rel),
                precision_at_n(ranking, rel),
                precision_at_5(ranking, rel),
            )
        )
    if not rows:
        raise ValueError("no query has relevant utterances in the evaluated split")
    methods = {res.method for res in results}
    return EvalReport(
        map=mean_average_precision([r[2] for r in rows]),
        p_at_n=sum(r[3] for r in rows) / len(rows),
        p_at_5=sum(r[4] for r in rows) / len(rows),
        per_query=rows,
        method=methods.pop() if len(methods) == 1 else "mixed",
        seconds=seconds,
        config_echo=dict(config_echo or {}),
    )


def save_report(report, tsv_path, summary_path):
    lines = ["query_id\tnum_relevant\tap\tp_at_n\tp_at_5"]
    for qid, n_rel, ap, pn, p5 in report.per_query:
        lines.append(f"{qid}\t{n_rel}\t{ap:.9g}\t{pn:.9g}\t{p5:.9g}")
    tsv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = [
        f"method={report.method}",
        f"num_queries={len(report.per_query)}",
        f"map={report.map:.9g}",
        f"p_at_n={report.p_at_n:.9g}",
        f"p_at_5={report.p_at_5:.9g}",
    ]
    if report.seconds is not None:
        summary.append(f"search_seconds={report.seconds:.6f}")
    for key in sorted(report.config_echo):
        summary.append(f"{key}={report.config_echo[key]}")
    summary_path.write_text("\n".join(summary) + "\n", encoding="utf-8")


def _median_time(fn, repeats):
    times = []
    out = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def benchmark(queries, index, corpus, params, norm=None, repeats=3, jobs=1):
    """Time embedding search vs the DTW baseline on identical data.

    ``queries`` are raw (query_id, FeatureMatrix, word) triples and
    ``corpus`` the raw corpus; both methods see the same normalized
    features.  Only the search phase is timed (indexing is excluded);
    the median over ``repeats`` runs is reported.  Returns a dict
    method -> EvalReport with ``seconds`` filled in.
    """
    test_utts = corpus.split_utterances("test")
    if norm is not None:
        test_utts = [apply_norm(u, norm) for u in test_utts]
        nqueries = [(qid, apply_norm(m, norm), w) for qid, m, w in queries]
    else:
        nqueries = list(queries)
    relevance = build_relevance(queries, corpus)
    echo = {"window_len": index.window_len, "shift": index.shift}

    emb_seconds, emb_results = _median_time(
        lambda: run_queries(nqueries, params, index, jobs=jobs), repeats
    )
    dtw_seconds, dtw_results = _median_time(
        lambda: [dtw_rank(mat, test_utts, query_id=qid) for qid, mat, _ in nqueries], repeats
    )
    return {
        "embedding": evaluate_rankings(emb_results, relevance, echo, emb_seconds),
        "dtw": evaluate_rankings(dtw_results, relevance, echo, dtw_seconds),
    }


def padding_sweep(corpus, queries, cfg):
    """Train one model per (pair count, padding kind) cell and score it.

    All cells share the seed, the normalization stats and the query set, so
    only the swept variables differ.  Returns one dict per cell with keys
    pair_count, padding, map, p_at_n, p_at_5, train_seconds, search_seconds.
    """
    norm = compute_norm_stats(corpus.split_utterances("train"))
    ncorpus = normalize_corpus(corpus, norm)
    nqueries = [(qid, apply_norm(m, norm), w) for qid, m, w in queries]
    relevance = build_relevance(queries, corpus)
    train_anns = ncorpus.split_annotations("train")
    cap = cfg.max_pairs_per_word or None
    all_pairs = build_pairs(train_anns, max_pairs_per_word=cap, seed=[cfg.seed, 0xA1])
    net_cfg = cfg.net_config()
    test_utts = ncorpus.split_utterances("test")

    rows = []
    for pair_count in cfg.pair_counts:
        pairs = subsample_pairs(all_pairs, pair_count, cfg.seed)
        for padding in ("context", "zero"):
            t0 = time.perf_counter()
            params, _ = train(ncorpus, net_cfg, cfg.train_config(), padding, pairs=pairs)
            train_seconds = time.perf_counter() - t0
            index = build_index(
                params,
                test_utts,
                cfg.window_len,
                cfg.shift,
                params_digest(params, norm),
                jobs=cfg.jobs,
            )
            t0 = time.perf_counter()
            results = run_queries(nqueries, params, index, jobs=cfg.jobs)
            search_seconds = time.perf_counter() - t0
            report = evaluate_rankings(results, relevance)
            rows.append(
                {
                    "pair_count": pair_count,
                    "padding": padding,
                    "map": report.map,
                    "p_at_n": report.p_at_n,
                    "p_at_5": report.p_at_5,
                    "train_seconds": train_seconds,
                    "search_seconds": search_seconds,
                }
            )
    return rows


SWEEP_HEADER = "pair_count\tpadding\tmap\tp_at_n\tp_at_5\ttrain_seconds\tsearch_seconds"


def sweep_rows_to_tsv(rows):
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(
            f"{r['pair_count']}\t{r['padding']}\t{r['map']:.9g}\t{r['p_at_n']:.9g}"
            f"\t{r['p_at_5']:.9g}\t{r['train_seconds']:.6f}\t{r['search_seconds']:.6f}"
        )
    return "\n".join(lines) + "\n"
