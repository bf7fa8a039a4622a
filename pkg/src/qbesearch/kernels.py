"""Loop-bound numeric kernels with numba and pure-numpy backends.

Three kernels dominate search run-time and cannot be expressed as single
BLAS calls:

* ``frame_dist_matrix`` - pairwise (1 - cos)/2 distances between two frame
  sequences,
* ``dtw_best`` - the subsequence alignment dynamic program over such a
  distance matrix (the frame-level baseline),
* ``cosine_costs`` - the per-row cosine cost scan over an embedding block.

Both backends accumulate dot products and squared norms sequentially over
the feature axis, so the numba and numpy paths produce bit-identical
distance matrices and DTW costs.  The convolutional layers of the network
are deliberately *not* duplicated here: they lower to im2col + GEMM and a
hand loop cannot beat BLAS there.

Alignment steps are (1,1), (1,0) and (0,1) over (query, content); ties in
accumulated cost prefer the shorter path, then diagonal over vertical over
horizontal.  The final cost is the accumulated cost divided by the number
of cells on the path, clipped to [0, 1].
"""

import time

import numpy as np

from . import accel
from .accel import njit


# ---------------------------------------------------------------------------
# frame distance matrix


def _frame_dist_numpy(query, content):
    tq, dim = query.shape
    tu = content.shape[0]
    dots = np.zeros((tq, tu))
    sq = np.zeros(tq)
    su = np.zeros(tu)
    for k in range(dim):  # sequential in k: matches the numba loop bit-exactly
        qk = query[:, k]
        uk = content[:, k]
        dots += qk[:, None] * uk[None, :]
        sq += qk * qk
        su += uk * uk
    denom = np.sqrt(sq)[:, None] * np.sqrt(su)[None, :]
    zero = denom == 0.0
    cos = dots / np.where(zero, 1.0, denom)
    # zero-norm frames: distance 0 against another zero frame, 0.5 otherwise
    both = zero & (sq[:, None] == 0.0) & (su[None, :] == 0.0)
    cos = np.where(zero, np.where(both, 1.0, 0.0), cos)
    return 0.5 * (1.0 - cos)


@njit(cache=True)
def _frame_dist_numba(query, content):  # pragma: no cover - exercised via dispatch
    tq, dim = query.shape
    tu = content.shape[0]
    sq = np.zeros(tq)
    su = np.zeros(tu)
    for i in range(tq):
        acc = 0.0
        for k in range(dim):
            acc += query[i, k] * query[i, k]
        sq[i] = acc
    for j in range(tu):
        acc = 0.0
        for k in range(dim):
            acc += content[j, k] * content[j, k]
        su[j] = acc
    out = np.empty((tq, tu))
    for i in range(tq):
        for j in range(tu):
            dot = 0.0
            for k in range(dim):
                dot += query[i, k] * content[j, k]
            denom = np.sqrt(sq[i]) * np.sqrt(su[j])
            if denom == 0.0:
                cos = 1.0 if (sq[i] == 0.0 and su[j] == 0.0) else 0.0
            else:
                cos = dot / denom
            out[i, j] = 0.5 * (1.0 - cos)
    return out


def frame_dist_matrix(query, content):
    """Pairwise (1 - cos)/2 distance between two frame sequences.

    Both inputs are (T, D) arrays sharing D; the result is float64 (Tq, Tu).
    """
    q = np.ascontiguousarray(query, dtype=np.float64)
    u = np.ascontiguousarray(content, dtype=np.float64)
    if q.ndim != 2 or u.ndim != 2 or q.shape[1] != u.shape[1]:
        raise ValueError(
            f"frame dimension mismatch: {query.shape} vs {content.shape}"
        )
    if accel.numba_enabled():
        return _frame_dist_numba(q, u)
    return _frame_dist_numpy(q, u)


# ---------------------------------------------------------------------------
# subsequence alignment DP


def _dtw_numpy(dmat):
    tq, tu = dmat.shape
    acc = np.empty((tq, tu))
    plen = np.empty((tq, tu), dtype=np.int64)
    start = np.empty((tq, tu), dtype=np.int64)
    for j in range(tu):
        # fresh start anywhere in row 0; a horizontal continuation only wins
        # on strictly smaller accumulated cost (equal cost -> shorter path)
        a, l, s = dmat[0, j], 1, j
        if j > 0 and acc[0, j - 1] + dmat[0, j] < a:
            a = acc[0, j - 1] + dmat[0, j]
            l = plen[0, j - 1] + 1
            s = start[0, j - 1]
        acc[0, j], plen[0, j], start[0, j] = a, l, s
    for i in range(1, tq):
        for j in range(tu):
            best_a = np.inf
            best_l = 0
            best_s = 0
            if j > 0:  # diagonal
                best_a, best_l, best_s = acc[i - 1, j - 1], plen[i - 1, j - 1], start[i - 1, j - 1]
            if acc[i - 1, j] < best_a or (acc[i - 1, j] == best_a and plen[i - 1, j] < best_l):
                best_a, best_l, best_s = acc[i - 1, j], plen[i - 1, j], start[i - 1, j]
            if j > 0 and (
                acc[i, j - 1] < best_a or (acc[i, j - 1] == best_a and plen[i, j - 1] < best_l)
            ):
                best_a, best_l, best_s = acc[i, j - 1], plen[i, j - 1], start[i, j - 1]
            acc[i, j] = best_a + dmat[i, j]
            plen[i, j] = best_l + 1
            start[i, j] = best_s
    best_j = 0
    best_cost = np.inf
    for j in range(tu):
        c = acc[tq - 1, j] / plen[tq - 1, j]
        if c < best_cost:
            best_cost = c
            best_j = j
    cost = min(1.0, max(0.0, best_cost))
    return cost, int(start[tq - 1, best_j]), best_j + 1


@njit(cache=True)
def _dtw_numba(dmat):  # pragma: no cover - exercised via dispatch
    tq, tu = dmat.shape
    acc = np.empty((tq, tu))
    plen = np.empty((tq, tu), dtype=np.int64)
    start = np.empty((tq, tu), dtype=np.int64)
    for j in range(tu):
        a = dmat[0, j]
        l = 1
        s = j
        if j > 0 and acc[0, j - 1] + dmat[0, j] < a:
            a = acc[0, j - 1] + dmat[0, j]
            l = plen[0, j - 1] + 1
            s = start[0, j - 1]
        acc[0, j] = a
        plen[0, j] = l
        start[0, j] = s
    for i in range(1, tq):
        for j in range(tu):
            best_a = np.inf
            best_l = 0
            best_s = 0
            if j > 0:
                best_a = acc[i - 1, j - 1]
                best_l = plen[i - 1, j - 1]
                best_s = start[i - 1, j - 1]
            if acc[i - 1, j] < best_a or (acc[i - 1, j] == best_a and plen[i - 1, j] < best_l):
                best_a = acc[i - 1, j]
                best_l = plen[i - 1, j]
                best_s = start[i - 1, j]
            if j > 0 and (
                acc[i, j - 1] < best_a or (acc[i, j - 1] == best_a and plen[i, j - 1] < best_l)
            ):
                best_a = acc[i, j - 1]
                best_l = plen[i, j - 1]
                best_s = start[i, j - 1]
            acc[i, j] = best_a + dmat[i, j]
            plen[i, j] = best_l + 1
            start[i, j] = best_s
    best_j = 0
    best_cost = np.inf
    for j in range(tu):
        c = acc[tq - 1, j] / plen[tq - 1, j]
        if c < best_cost:
            best_cost = c
            best_j = j
    cost = min(1.0, max(0.0, best_cost))
    return cost, start[tq - 1, best_j], best_j + 1


def dtw_best(dmat):
    """Best path-length-normalized subsequence alignment over ``dmat``.

    Returns ``(cost, start, end)`` where content frames [start, end) are the
    matched span and cost lies in [0, 1].
    """
    d = np.ascontiguousarray(dmat, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
        raise ValueError(f"distance matrix must be non-empty 2-D, got {dmat.shape}")
    if accel.numba_enabled():
        cost, s, e = _dtw_numba(d)
    else:
        cost, s, e = _dtw_numpy(d)
    return float(cost), int(s), int(e)


# ---------------------------------------------------------------------------
# cosine cost scan


def _cosine_costs_numpy(rows, q):
    sq = np.einsum("ij,ij->i", rows, rows)
    if np.any(sq == 0.0):
        raise ValueError("zero-norm embedding row in scan")
    nq = np.sqrt(np.dot(q, q))
    if nq == 0.0:
        raise ValueError("zero-norm query embedding")
    cos = rows @ q / (np.sqrt(sq) * nq)
    return np.clip(0.5 * (1.0 - cos), 0.0, 1.0)


@njit(cache=True)
def _cosine_costs_numba(rows, q):  # pragma: no cover - exercised via dispatch
    n, dim = rows.shape
    nq = 0.0
    for k in range(dim):
        nq += q[k] * q[k]
    if nq == 0.0:
        raise ValueError("zero-norm query embedding")
    nq = np.sqrt(nq)
    out = np.empty(n)
    for i in range(n):
        dot = 0.0
        sr = 0.0
        for k in range(dim):
            dot += rows[i, k] * q[k]
            sr += rows[i, k] * rows[i, k]
        if sr == 0.0:
            raise ValueError("zero-norm embedding row in scan")
        c = 0.5 * (1.0 - dot / (np.sqrt(sr) * nq))
        out[i] = min(1.0, max(0.0, c))
    return out


def cosine_costs(rows, q):
    """(1 - cos)/2 between ``q`` and every row of ``rows``, float64 (N,)."""
    r = np.ascontiguousarray(rows, dtype=np.float64)
    v = np.ascontiguousarray(q, dtype=np.float64)
    if r.ndim != 2 or v.ndim != 1 or r.shape[1] != v.shape[0]:
        raise ValueError(f"embedding dimension mismatch: {rows.shape} vs {q.shape}")
    if accel.numba_enabled():
        return _cosine_costs_numba(r, v)
    return _cosine_costs_numpy(r, v)


# ---------------------------------------------------------------------------
# backend benchmark


def warmup():
    """Trigger numba compilation of all kernels (no-op on the numpy backend)."""
    if not accel.numba_enabled():
        return
    q = np.random.default_rng(0).normal(size=(4, 3))
    u = np.random.default_rng(1).normal(size=(6, 3))
    _dtw_numba(_frame_dist_numba(q, u))
    _cosine_costs_numba(u, q[0])


def benchmark_backends(query_len=50, content_len=2000, dim=40, rows=5000, emb_dim=1024, repeats=3, seed=0):
    """Time each kernel under both backends on synthetic data.

    Returns a list of dict rows with keys kernel, numba_seconds,
    numpy_seconds, speedup.  Numba timings are NaN when numba is missing.
    """
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(query_len, dim))
    u = rng.normal(size=(content_len, dim))
    emb_rows = rng.normal(size=(rows, emb_dim))
    emb_q = rng.normal(size=emb_dim)

    def run_dist():
        frame_dist_matrix(q, u)

    dmat = _frame_dist_numpy(q, u)

    def run_dtw():
        dtw_best(dmat)

    def run_scan():
        cosine_costs(emb_rows, emb_q)

    cases = [
        ("frame_dist_matrix", run_dist),
        ("dtw_best", run_dtw),
        ("cosine_costs", run_scan),
    ]
    prev = accel.current_backend()
    out = []
    try:
        for name, fn in cases:
            times = {}
            for backend in ("numba", "numpy"):
                if backend == "numba" and not accel.NUMBA_AVAILABLE:
                    times[backend] = float("nan")
                    continue
                accel.set_backend(backend)
                if backend == "numba":
                    warmup()
                fn()  # one untimed call per backend
                best = min(_timed(fn) for _ in range(repeats))
                times[backend] = best
            speedup = times["numpy"] / times["numba"] if times["numba"] == times["numba"] else float("nan")
            out.append(
                {
                    "kernel": name,
                    "numba_seconds": times["numba"],
                    "numpy_seconds": times["numpy"],
                    "speedup": speedup,
                }
            )
    finally:
        accel.set_backend(prev)
    return out


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0
