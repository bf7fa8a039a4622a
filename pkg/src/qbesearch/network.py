"""The embedding network: convolutional forward/backward, triplet loss, training.

Architecture: two valid 1-D convolutions over time (the first spans all
feature dimensions, the second all channels), each followed by ReLU and max
pooling (width-3 non-overlapping, then global over the remaining time), a
fully-connected ReLU layer and a fully-connected linear output whose
activations are the embedding.  Convolutions are lowered to im2col + GEMM.

Loss: hinge on cosine distances, max(0, margin + d_plus - d_minus) with
d = (1 - cos)/2, so positives must sit closer to the anchor than negatives
by the margin.  All loss and gradient arithmetic runs in float64 regardless
of the parameter dtype; parameters are stored float32 by default.
"""

from dataclasses import dataclass

import numpy as np

from .segmenter import build_pairs, sample_triplets


@dataclass(frozen=True)
class NetConfig:
    """Layer sizes; the time axis after each stage is derived and validated."""

    input_len: int = 200
    input_dim: int = 40
    conv1_filters: int = 96
    conv1_width: int = 9
    pool1: int = 3
    conv2_filters: int = 96
    conv2_width: int = 8
    hidden_units: int = 2048
    embedding_dim: int = 1024

    def __post_init__(self):
        for name in (
            "input_len",
            "input_dim",
            "conv1_filters",
            "conv1_width",
            "pool1",
            "conv2_filters",
            "conv2_width",
            "hidden_units",
            "embedding_dim",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.t2 < 1:
            raise ValueError(
                f"input_len {self.input_len} too short for conv widths "
                f"{self.conv1_width}/{self.conv2_width} and pool {self.pool1}"
            )

    @property
    def t1(self):
        return self.input_len - self.conv1_width + 1

    @property
    def t1p(self):
        return self.t1 // self.pool1

    @property
    def t2(self):
        return self.t1p - self.conv2_width + 1


_TENSOR_FIELDS = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "fc1_w",
    "fc1_b",
    "fc2_w",
    "fc2_b",
)


@dataclass(eq=False)
class ModelParams:
    """All weights of the embedding function, shapes tied to a NetConfig."""

    config: NetConfig
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def __post_init__(self):
        c = self.config
        expected = {
            "conv1_w": (c.conv1_filters, c.conv1_width, c.input_dim),
            "conv1_b": (c.conv1_filters,),
            "conv2_w": (c.conv2_filters, c.conv2_width, c.conv1_filters),
            "conv2_b": (c.conv2_filters,),
            "fc1_w": (c.conv2_filters, c.hidden_units),
            "fc1_b": (c.hidden_units,),
            "fc2_w": (c.hidden_units, c.embedding_dim),
            "fc2_b": (c.embedding_dim,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name}: non-finite values")

    def tensors(self):
        return [(name.replace("_", "."), getattr(self, name)) for name in _TENSOR_FIELDS]

    def copy(self):
        kwargs = {name: getattr(self, name).copy() for name in _TENSOR_FIELDS}
        return ModelParams(self.config, **kwargs)

    @property
    def dtype(self):
        return self.conv1_w.dtype


def init_params(config, seed=0, dtype=np.float32):
    """Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-r, r, size=shape).astype(dtype)

    c = config
    return ModelParams(
        config=c,
        conv1_w=glorot(
            (c.conv1_filters, c.conv1_width, c.input_dim),
            c.conv1_width * c.input_dim,
            c.conv1_width * c.conv1_filters,
        ),
        conv1_b=np.zeros(c.conv1_filters, dtype=dtype),
        conv2_w=glorot(
            (c.conv2_filters, c.conv2_width, c.conv1_filters),
            c.conv2_width * c.conv1_filters,
            c.conv2_width * c.conv2_filters,
        ),
        conv2_b=np.zeros(c.conv2_filters, dtype=dtype),
        fc1_w=glorot((c.conv2_filters, c.hidden_units), c.conv2_filters, c.hidden_units),
        fc1_b=np.zeros(c.hidden_units, dtype=dtype),
        fc2_w=glorot((c.hidden_units, c.embedding_dim), c.hidden_units, c.embedding_dim),
        fc2_b=np.zeros(c.embedding_dim, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# forward / backward


def _im2col(x, width):
    # (B, T, C) -> (B, T-width+1, width*C); row-major (tau, channel) layout
    view = np.lib.stride_tricks.sliding_window_view(x, width, axis=1)
    b, tc = view.shape[0], view.shape[1]
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(b, tc, -1)


def _forward_batch(params, x, need_cache=False):
    """Embed a (B, L, D) batch in float64; optionally keep backprop caches."""
    c = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (c.input_len, c.input_dim):
        raise ValueError(
            f"expected batch of ({c.input_len}, {c.input_dim}) segments, got {x.shape}"
        )
    b = x.shape[0]
    w1 = params.conv1_w.astype(np.float64).reshape(c.conv1_filters, -1)
    w2 = params.conv2_w.astype(np.float64)
    w3 = params.fc1_w.astype(np.float64)
    w4 = params.fc2_w.astype(np.float64)

    cols1 = _im2col(x, c.conv1_width)
    z1 = cols1 @ w1.T + params.conv1_b.astype(np.float64)
    a1 = np.maximum(z1, 0.0)

    a1v = a1[:, : c.t1p * c.pool1].reshape(b, c.t1p, c.pool1, c.conv1_filters)
    arg1 = a1v.argmax(axis=2)
    p1 = np.take_along_axis(a1v, arg1[:, :, None, :], axis=2)[:, :, 0, :]

    cols2 = _im2col(p1, c.conv2_width)
    z2 = cols2 @ w2.reshape(c.conv2_filters, -1).T + params.conv2_b.astype(np.float64)
    a2 = np.maximum(z2, 0.0)

    arg2 = a2.argmax(axis=1)
    g = np.take_along_axis(a2, arg2[:, None, :], axis=1)[:, 0, :]

    z3 = g @ w3 + params.fc1_b.astype(np.float64)
    a3 = np.maximum(z3, 0.0)
    emb = a3 @ w4 + params.fc2_b.astype(np.float64)

    if not need_cache:
        return emb, None
    cache = {
        "cols1": cols1,
        "mask1": z1 > 0.0,
        "arg1": arg1,
        "cols2": cols2,
        "mask2": z2 > 0.0,
        "arg2": arg2,
        "g": g,
        "mask3": z3 > 0.0,
        "a3": a3,
        "w2": w2,
        "w3": w3,
        "w4": w4,
    }
    return emb, cache


def _backward_batch(params, cache, demb):
    """Parameter gradients for a (B, E) upstream embedding gradient."""
    c = params.config
    b = demb.shape[0]
    a3, g = cache["a3"], cache["g"]

    dw4 = a3.reshape(b, -1).T @ demb
    db4 = demb.sum(axis=0)
    dz3 = (demb @ cache["w4"].T) * cache["mask3"]
    dw3 = g.T @ dz3
    db3 = dz3.sum(axis=0)
    dg = dz3 @ cache["w3"].T

    dz2 = np.zeros((b, c.t2, c.conv2_filters))
    np.put_along_axis(dz2, cache["arg2"][:, None, :], dg[:, None, :], axis=1)
    dz2 *= cache["mask2"]
    dw2 = (
        dz2.reshape(-1, c.conv2_filters).T @ cache["cols2"].reshape(b * c.t2, -1)
    ).reshape(c.conv2_filters, c.conv2_width, c.conv1_filters)
    db2 = dz2.sum(axis=(0, 1))

    dp1 = np.zeros((b, c.t1p, c.conv1_filters))
    for tau in range(c.conv2_width):  # col2im: scatter conv2 input gradients
        dp1[:, tau : tau + c.t2, :] += dz2 @ cache["w2"][:, tau, :]

    dz1 = np.zeros((b, c.t1, c.conv1_filters))
    dz1v = dz1[:, : c.t1p * c.pool1].reshape(b, c.t1p, c.pool1, c.conv1_filters)
    np.put_along_axis(dz1v, cache["arg1"][:, :, None, :], dp1[:, :, None, :], axis=2)
    dz1 *= cache["mask1"]
    dw1 = (
        dz1.reshape(-1, c.conv1_filters).T @ cache["cols1"].reshape(b * c.t1, -1)
    ).reshape(c.conv1_filters, c.conv1_width, c.input_dim)
    db1 = dz1.sum(axis=(0, 1))

    return {
        "conv1.w": dw1,
        "conv1.b": db1,
        "conv2.w": dw2,
        "conv2.b": db2,
        "fc1.w": dw3,
        "fc1.b": db3,
        "fc2.w": dw4,
        "fc2.b": db4,
    }


def forward(params, segment):
    """Embed one (L, D) segment; output dtype follows the parameter dtype."""
    seg = np.asarray(segment)
    if seg.ndim != 2:
        raise ValueError(f"segment must be 2-D, got shape {seg.shape}")
    emb, _ = _forward_batch(params, seg[None])
    return emb[0].astype(params.dtype)


# ---------------------------------------------------------------------------
# loss


def cosine_distance(a, b):
    """(1 - cos(a, b)) / 2 in [0, 1]; errors on zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt(np.dot(a, a))
    nb = np.sqrt(np.dot(b, b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    d = 0.5 * (1.0 - np.dot(a, b) / (na * nb))
    return float(min(1.0, max(0.0, d)))


def triplet_loss(emb_p, emb_a, emb_n, margin):
    """max(0, margin + d(p, a) - d(n, a)) on cosine distances."""
    d_plus = cosine_distance(emb_p, emb_a)
    d_minus = cosine_distance(emb_n, emb_a)
    return max(0.0, margin + d_plus - d_minus)


def _triplet_loss_grads(ea, ep, en, margin):
    """Vectorized losses and d(loss)/d(embedding) for stacked triplet rows."""
    na = np.sqrt((ea * ea).sum(axis=1))
    npp = np.sqrt((ep * ep).sum(axis=1))
    nn = np.sqrt((en * en).sum(axis=1))
    if np.any(na == 0.0) or np.any(npp == 0.0) or np.any(nn == 0.0):
        raise ValueError("cosine distance is undefined for zero vectors")
    cos_ap = (ea * ep).sum(axis=1) / (na * npp)
    cos_an = (ea * en).sum(axis=1) / (na * nn)
    d_plus = np.clip(0.5 * (1.0 - cos_ap), 0.0, 1.0)
    d_minus = np.clip(0.5 * (1.0 - cos_an), 0.0, 1.0)
    raw = margin + d_plus - d_minus
    active = raw > 0.0
    losses = np.where(active, raw, 0.0)

    act = active[:, None].astype(np.float64)
    na_, np_, nn_ = na[:, None], npp[:, None], nn[:, None]
    cap, can = cos_ap[:, None], cos_an[:, None]
    # d d_plus/d p = -1/2 * d cos(a,p)/d p, and likewise for the others
    gp = act * (-0.5) * (ea / (na_ * np_) - cap * ep / np_**2)
    gn = act * 0.5 * (ea / (na_ * nn_) - can * en / nn_**2)
    ga = act * (
        (-0.5) * (ep / (na_ * np_) - cap * ea / na_**2)
        + 0.5 * (en / (na_ * nn_) - can * ea / na_**2)
    )
    return losses, ga, gp, gn


def batch_grad(params, triplets, margin):
    """Mean triplet loss over a batch and its exact parameter gradients.

    The three branches share weights, so anchor, positive and negative
    segments go through one stacked forward pass and their gradients are
    reduced in one backward pass.
    """
    if not triplets:
        raise ValueError("batch_grad needs a non-empty batch")
    b = len(triplets)
    x = np.stack(
        [t.anchor.frames for t in triplets]
        + [t.positive.frames for t in triplets]
        + [t.negative.frames for t in triplets]
    )
    emb, cache = _forward_batch(params, x, need_cache=True)
    ea, ep, en = emb[:b], emb[b : 2 * b], emb[2 * b :]
    losses, ga, gp, gn = _triplet_loss_grads(ea, ep, en, margin)
    demb = np.concatenate([ga, gp, gn]) / b
    grads = _backward_batch(params, cache, demb)
    return float(losses.mean()), grads


def mean_triplet_loss(params, triplets, margin, batch_size=256):
    """Mean loss over ``triplets`` without gradients (for dev evaluation)."""
    total = 0.0
    for i in range(0, len(triplets), batch_size):
        chunk = triplets[i : i + batch_size]
        b = len(chunk)
        x = np.stack(
            [t.anchor.frames for t in chunk]
            + [t.positive.frames for t in chunk]
            + [t.negative.frames for t in chunk]
        )
        emb, _ = _forward_batch(params, x)
        losses, _, _, _ = _triplet_loss_grads(emb[:b], emb[b : 2 * b], emb[2 * b :], margin)
        total += float(losses.sum())
    return total / len(triplets)


# ---------------------------------------------------------------------------
# optimizer


@dataclass(eq=False)
class AdadeltaState:
    """Running averages E[g^2] and E[dx^2] per parameter tensor, zero-initialized."""

    grad_avg: dict
    update_avg: dict

    @classmethod
    def for_params(cls, params):
        grad_avg = {name: np.zeros(arr.shape) for name, arr in params.tensors()}
        update_avg = {name: np.zeros(arr.shape) for name, arr in params.tensors()}
        return cls(grad_avg, update_avg)


def adadelta_step(params, state, grads, rho, eps):
    """One accumulator-scaled update, in place on ``params`` and ``state``.

    E[g^2] <- rho E[g^2] + (1-rho) g^2, then
    dx = -sqrt((E[dx^2]+eps)/(E[g^2]+eps)) * g, then
    E[dx^2] <- rho E[dx^2] + (1-rho) dx^2.
    """
    for name, arr in params.tensors():
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for {name}")
        eg2 = state.grad_avg[name]
        edx2 = state.update_avg[name]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        dx = -np.sqrt((edx2 + eps) / (eg2 + eps)) * g
        edx2 *= rho
        edx2 += (1.0 - rho) * dx * dx
        arr[...] = (arr.astype(np.float64) + dx).astype(arr.dtype)
    return params, state


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    margin: float = 0.15
    batch_size: int = 1024
    rho: float = 0.9
    epsilon: float = 1e-6
    patience: int = 20
    max_epochs: int = 100
    triplets_per_epoch: int = 10000
    dev_triplets: int = 512
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.margin < 1.0:
            raise ValueError("margin must lie in (0, 1)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        for name in ("batch_size", "max_epochs", "triplets_per_epoch", "dev_triplets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_loss: float
    improved: bool


def train(corpus, net_config, train_config, padding_kind, pairs=None):
    """Train the embedding network with early stopping on dev triplet loss.

    ``corpus`` is used as-is (normalize beforehand).  Train triplets are
    resampled every epoch from epoch-derived seeds; the dev triplet set is
    sampled once and stays fixed.  Returns the best-dev parameters and the
    per-epoch history.  Deterministic given (corpus, configs, seed).
    """
    tc = train_config
    train_anns = corpus.split_annotations("train")
    dev_anns = corpus.split_annotations("dev")
    if pairs is None:
        pairs = build_pairs(train_anns, seed=[tc.seed, 0xA1])
    dev_pairs = build_pairs(dev_anns, seed=[tc.seed, 0xA2])
    if not pairs:
        raise ValueError("training split yields no word pairs")
    if not dev_pairs:
        raise ValueError("dev split yields no word pairs")
    target_len = net_config.input_len
    dev_set = sample_triplets(
        corpus, dev_pairs, dev_anns, tc.dev_triplets, padding_kind, target_len, [tc.seed, 0xDE7]
    )

    params = init_params(net_config, seed=[tc.seed, 0x171])
    state = AdadeltaState.for_params(params)
    best_params = params.copy()
    best_dev = np.inf
    since_best = 0
    history = []

    for epoch in range(1, tc.max_epochs + 1):
        triplets = sample_triplets(
            corpus, pairs, train_anns, tc.triplets_per_epoch, padding_kind, target_len, [tc.seed, epoch]
        )
        loss_sum = 0.0
        for i in range(0, len(triplets), tc.batch_size):
            chunk = triplets[i : i + tc.batch_size]
            loss, grads = batch_grad(params, chunk, tc.margin)
            adadelta_step(params, state, grads, tc.rho, tc.epsilon)
            loss_sum += loss * len(chunk)
        train_loss = loss_sum / len(triplets)
        dev_loss = mean_triplet_loss(params, dev_set, tc.margin, tc.batch_size)
        improved = dev_loss < best_dev
        if improved:
            best_dev = dev_loss
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
        history.append(EpochStats(epoch, train_loss, dev_loss, improved))
        if since_best >= tc.patience:
            break
    return best_params, history
