"""Command-line pipeline: gen-data, train, index, search, evaluate, bench, sweep.

Each command is driven by a key=value config file plus overriding flags,
echoes its resolved config into the output directory, and exits 0 only
when all outputs were written.  Failures print one ``error: ...`` line to
stderr and exit 1.
"""

import argparse
import sys
import time
from pathlib import Path

from . import accel, kernels
from .checkpoint import load_checkpoint, params_digest, save_checkpoint
from .config import RunConfig
from .corpus import (
    compute_norm_stats,
    generate_synthetic,
    load_corpus,
    load_queries,
    normalize_corpus,
    apply_norm,
    save_corpus,
    save_queries,
    select_queries,
)
from .evaluate import (
    benchmark,
    build_relevance,
    evaluate_rankings,
    padding_sweep,
    save_report,
    sweep_rows_to_tsv,
)
from .indexer import build_index, load_index, save_index
from .network import train
from .search import load_results, run_queries, save_results


def _common_flags(parser):
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--padding", choices=("context", "zero"), help="segment padding kind")
    parser.add_argument("--window", type=int, help="analysis window length in frames")
    parser.add_argument("--shift", type=int, help="window shift in frames")
    parser.add_argument("--jobs", type=int, help="parallel worker bound for index/search/sweep")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _resolve_config(args):
    overrides = {
        "seed": args.seed,
        "padding": args.padding,
        "window_len": args.window,
        "shift": args.shift,
        "jobs": args.jobs,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config is not None:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig(overrides)


def _prepare_out(args, cfg, command):
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / f"{command}.resolved.cfg")
    return out


def cmd_gen_data(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "gen-data")
    corpus = generate_synthetic(cfg.synthetic_config(), cfg.split_fractions())
    save_corpus(corpus, out)
    queries = select_queries(corpus, cfg.queries_per_word, cfg.seed)
    save_queries(queries, out)
    print(
        f"gen-data: {len(corpus.utterances)} utterances, {len(corpus.annotations)} annotations, "
        f"{len(queries)} queries -> {out}"
    )
    return 0


def cmd_train(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "train")
    corpus = load_corpus(args.corpus)
    norm = compute_norm_stats(corpus.split_utterances("train"))
    ncorpus = normalize_corpus(corpus, norm)
    params, history = train(ncorpus, cfg.net_config(), cfg.train_config(), cfg.padding)
    ckpt = out / "model.qbem"
    save_checkpoint(params, ckpt, norm)
    lines = ["epoch\ttrain_loss\tdev_loss\timproved"]
    for h in history:
        lines.append(f"{h.epoch}\t{h.train_loss!r}\t{h.dev_loss!r}\t{int(h.improved)}")
    (out / "history.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    best = min(history, key=lambda h: h.dev_loss)
    print(f"train: {len(history)} epochs, best dev loss {best.dev_loss:.6f} -> {ckpt}")
    return 0


def cmd_index(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "index")
    params, norm = load_checkpoint(args.checkpoint)
    if args.window is not None and args.window != params.config.input_len:
        raise ValueError(
            f"--window {args.window} conflicts with checkpoint input length "
            f"{params.config.input_len}"
        )
    window_len = params.config.input_len
    corpus = load_corpus(args.corpus)
    utts = corpus.split_utterances(args.split)
    if norm is not None:
        utts = [apply_norm(u, norm) for u in utts]
    index = build_index(
        params, utts, window_len, cfg.shift, params_digest(params, norm), jobs=cfg.jobs
    )
    path = out / "index.qbei"
    save_index(index, path)
    print(f"index: {len(index.entries)} utterances, {index.num_rows} windows -> {path}")
    return 0


def cmd_search(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "search")
    params, norm = load_checkpoint(args.checkpoint)
    index = load_index(args.index)
    if index.checkpoint_hash != params_digest(params, norm):
        print(
            "warning: index checkpoint hash does not match the loaded checkpoint; "
            "costs may be inconsistent",
            file=sys.stderr,
        )
    queries = load_queries(args.queries)
    if norm is not None:
        queries = [(qid, apply_norm(mat, norm), word) for qid, mat, word in queries]
    results = run_queries(queries, params, index, jobs=cfg.jobs)
    path = out / "results.tsv"
    save_results(results, path)
    print(f"search: {len(results)} queries over {len(index.entries)} utterances -> {path}")
    return 0


def cmd_evaluate(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "evaluate")
    results = load_results(args.results)
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    relevance = build_relevance(queries, corpus, split=args.split)
    report = evaluate_rankings(results, relevance)
    save_report(report, out / "report.tsv", out / "summary.cfg")
    print(
        f"evaluate: {len(report.per_query)} queries, MAP {report.map:.4f}, "
        f"P@N {report.p_at_n:.4f}, P@5 {report.p_at_5:.4f} -> {out}"
    )
    return 0


def cmd_bench(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "bench")
    corpus = generate_synthetic(cfg.synthetic_config(), cfg.split_fractions())
    queries = select_queries(corpus, cfg.queries_per_word, cfg.seed)
    norm = compute_norm_stats(corpus.split_utterances("train"))
    ncorpus = normalize_corpus(corpus, norm)
    t0 = time.perf_counter()
    params, _ = train(ncorpus, cfg.net_config(), cfg.train_config(), cfg.padding)
    train_seconds = time.perf_counter() - t0
    index = build_index(
        params,
        ncorpus.split_utterances("test"),
        cfg.window_len,
        cfg.shift,
        params_digest(params, norm),
        jobs=cfg.jobs,
    )
    reports = benchmark(
        queries, index, corpus, params, norm, repeats=cfg.bench_repeats, jobs=cfg.jobs
    )
    lines = ["method\tuses_dtw\tsearch_seconds\tmap\tp_at_n\tp_at_5"]
    for method in ("dtw", "embedding"):
        r = reports[method]
        uses = "yes" if method == "dtw" else "no"
        lines.append(
            f"{method}\t{uses}\t{r.seconds:.6f}\t{r.map:.9g}\t{r.p_at_n:.9g}\t{r.p_at_5:.9g}"
        )
    path = out / "bench.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    emb, dtw = reports["embedding"], reports["dtw"]
    print(
        f"bench: train {train_seconds:.1f}s; embedding {emb.seconds:.3f}s MAP {emb.map:.4f} "
        f"vs dtw {dtw.seconds:.3f}s MAP {dtw.map:.4f} -> {path}"
    )
    return 0


def cmd_sweep(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args, cfg, "sweep")
    corpus = generate_synthetic(cfg.synthetic_config(), cfg.split_fractions())
    queries = select_queries(corpus, cfg.queries_per_word, cfg.seed)
    rows = padding_sweep(corpus, queries, cfg)
    path = out / "sweep.tsv"
    path.write_text(sweep_rows_to_tsv(rows), encoding="utf-8")
    print(f"sweep: {len(rows)} cells -> {path}")
    return 0


def cmd_kernel_bench(args):
    rows = kernels.benchmark_backends(repeats=args.repeats)
    header = f"{'kernel':<20} {'numba_s':>10} {'numpy_s':>10} {'speedup':>8}"
    print(f"active backend: {accel.current_backend()}")
    print(header)
    for r in rows:
        print(
            f"{r['kernel']:<20} {r['numba_seconds']:>10.5f} {r['numpy_seconds']:>10.5f} "
            f"{r['speedup']:>8.2f}"
        )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        lines = ["kernel\tnumba_seconds\tnumpy_seconds\tspeedup"]
        for r in rows:
            lines.append(
                f"{r['kernel']}\t{r['numba_seconds']:.6f}\t{r['numpy_seconds']:.6f}"
                f"\t{r['speedup']:.3f}"
            )
        (args.out / "kernel_bench.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qbesearch",
        description="Query-by-example speech search with acoustic word embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus with queries")
    _common_flags(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the embedding network on a corpus")
    _common_flags(p)
    p.add_argument("corpus", type=Path, help="corpus directory (or manifest path)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("index", help="embed analysis windows of a split")
    _common_flags(p)
    p.add_argument("corpus", type=Path)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("search", help="rank indexed utterances for each query")
    _common_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True, help="queries manifest TSV")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("evaluate", help="score a results file with MAP/P@N/P@5")
    _common_flags(p)
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="embedding-scan vs DTW run-time comparison")
    _common_flags(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("sweep", help="padding and pair-count sweep")
    _common_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("kernel-bench", help="numba vs numpy kernel timings")
    p.add_argument("--out", type=Path, help="optional output directory")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(fn=cmd_kernel_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single machine-parsable line, exit code 1
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
