"""Query-by-example speech search over learned acoustic word embeddings."""

from .accel import current_backend, numba_enabled, set_backend
from .checkpoint import load_checkpoint, params_digest, save_checkpoint
from .config import RunConfig
from .corpus import (
    Corpus,
    FeatureMatrix,
    FeatureNorm,
    SyntheticConfig,
    WordAnnotation,
    apply_norm,
    compute_norm_stats,
    generate_synthetic,
    load_corpus,
    load_features,
    normalize_corpus,
    save_corpus,
    save_features,
)
from .evaluate import (
    EvalReport,
    average_precision,
    benchmark,
    build_relevance,
    evaluate_rankings,
    mean_average_precision,
    padding_sweep,
    precision_at_5,
    precision_at_n,
)
from .indexer import EmbeddingIndex, build_index, load_index, save_index
from .network import (
    AdadeltaState,
    ModelParams,
    NetConfig,
    TrainConfig,
    adadelta_step,
    batch_grad,
    cosine_distance,
    forward,
    init_params,
    train,
    triplet_loss,
)
from .search import QueryResult, dtw_cost, dtw_rank, embed_query, rank_utterances, utterance_cost
from .segmenter import (
    Segment,
    SegmentTriplet,
    WordPair,
    build_pairs,
    context_pad,
    extract_windows,
    sample_triplets,
    zero_pad,
)

__version__ = "0.1.0"
