"""Query-side retrieval: embedding scan over the index and the DTW baseline.

A query is zero-padded to the analysis window length, embedded once, and
scored against every indexed window with (1 - cos)/2; an utterance's cost
is the minimum over its windows.  The baseline aligns the raw query frames
against each utterance with a subsequence dynamic program instead - no
index, quadratic per utterance pair.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import FormatError
from .network import forward
from .segmenter import center_pad_frames

RESULT_HEADER = "query_id\trank\tutterance_id\tcost\toffset\tmethod"


@dataclass(eq=False)
class QueryResult:
    """One query's ranking: (utterance_id, cost, offset) by ascending cost."""

    query_id: str
    ranking: list
    method: str


def embed_query(params, query, window_len):
    """Embed a query: zero-pad (or center-truncate) to the window, then forward."""
    if query.dim != params.config.input_dim:
        raise ValueError(
            f"query dim {query.dim} does not match model dim {params.config.input_dim}"
        )
    if window_len != params.config.input_len:
        raise ValueError(
            f"window_len {window_len} does not match model input length {params.config.input_len}"
        )
    return forward(params, center_pad_frames(query.frames, window_len))


def utterance_cost(query_emb, entry):
    """Minimum window cost for one utterance; first offset wins ties."""
    if entry.embeddings.shape[0] < 1:
        raise ValueError(f"{entry.utterance_id}: no index rows")
    costs = kernels.cosine_costs(entry.embeddings, query_emb)
    k = int(np.argmin(costs))
    return float(costs[k]), int(entry.offsets[k])


def rank_utterances(query, params, index, query_id=None):
    """Rank every indexed utterance by its minimum window cost.

    An empty index is searchable and yields an empty ranking.
    """
    if not index.entries:
        return QueryResult(query_id or query.utterance_id, [], "embedding")
    emb = embed_query(params, query, index.window_len)
    scored = []
    for entry in index.entries:
        cost, offset = utterance_cost(emb, entry)
        scored.append((entry.utterance_id, cost, offset))
    scored.sort(key=lambda item: (item[1], item[0]))
    return QueryResult(query_id or query.utterance_id, scored, "embedding")


def dtw_cost(query, utterance):
    """Best path-normalized subsequence alignment cost of query vs utterance.

    Returns (cost, start, end): cost in [0, 1] and the matched content span.
    """
    if query.dim != utterance.dim:
        raise ValueError(f"feature dim mismatch: {query.dim} vs {utterance.dim}")
    dmat = kernels.frame_dist_matrix(query.frames, utterance.frames)
    return kernels.dtw_best(dmat)


def dtw_rank(query, utterances, query_id=None):
    """Rank utterances by subsequence alignment cost (the frame-level baseline)."""
    if not utterances:
        raise ValueError("cannot rank an empty utterance list")
    scored = []
    for utt in utterances:
        cost, start, _ = dtw_cost(query, utt)
        scored.append((utt.utterance_id, cost, start))
    scored.sort(key=lambda item: (item[1], item[0]))
    return QueryResult(query_id or query.utterance_id, scored, "dtw")


def run_queries(queries, params, index, jobs=1):
    """rank_utterances for (query_id, FeatureMatrix, word) triples, in order."""

    def one(item):
        qid, mat, _ = item
        return rank_utterances(mat, params, index, query_id=qid)

    if jobs > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, queries))
    return [one(q) for q in queries]


# ---------------------------------------------------------------------------
# results files


def save_results(results, path):
    lines = [RESULT_HEADER]
    for res in results:
        for rank, (uid, cost, offset) in enumerate(res.ranking, 1):
            lines.append(f"{res.query_id}\t{rank}\t{uid}\t{cost:.9g}\t{offset}\t{res.method}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_results(path):
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0] != RESULT_HEADER:
        raise FormatError(f"{path}: missing results header")
    by_query = {}
    order = []
    for ln in lines[1:]:
        cols = ln.split("\t")
        if len(cols) != 6:
            raise FormatError(f"{path}: expected 6 columns: {ln!r}")
        qid, rank, uid, cost, offset, method = cols
        if qid not in by_query:
            by_query[qid] = QueryResult(qid, [], method)
            order.append(qid)
        if method != by_query[qid].method:
            raise FormatError(f"{path}: mixed methods for query {qid!r}")
        by_query[qid].ranking.append((uid, float(cost), int(offset)))
    return [by_query[q] for q in order]
