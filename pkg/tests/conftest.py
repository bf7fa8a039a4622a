import numpy as np
import pytest

from qbesearch import accel
from qbesearch.corpus import SyntheticConfig, generate_synthetic
from qbesearch.network import NetConfig, init_params
from qbesearch.segmenter import Segment, SegmentTriplet

TINY_NET = NetConfig(
    input_len=8,
    input_dim=3,
    conv1_filters=4,
    conv1_width=3,
    pool1=2,
    conv2_filters=4,
    conv2_width=2,
    hidden_units=8,
    embedding_dim=4,
)

# small but non-trivial: fast enough for unit tests that embed segments
SMALL_NET = NetConfig(
    input_len=24,
    input_dim=6,
    conv1_filters=8,
    conv1_width=5,
    pool1=2,
    conv2_filters=8,
    conv2_width=3,
    hidden_units=16,
    embedding_dim=8,
)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    prev = accel.current_backend()
    try:
        accel.set_backend(request.param)
    except RuntimeError:
        pytest.skip("numba not available")
    yield request.param
    accel.set_backend(prev)


@pytest.fixture
def tiny_params():
    return init_params(TINY_NET, seed=5, dtype=np.float64)


@pytest.fixture
def small_params():
    return init_params(SMALL_NET, seed=9)


@pytest.fixture(scope="session")
def small_corpus():
    cfg = SyntheticConfig(
        vocab_size=6,
        instances_per_word=6,
        feature_dim=6,
        word_len_range=(8, 14),
        words_per_utterance_range=(2, 4),
        noise_std=0.05,
        warp_range=(0.9, 1.1),
        seed=11,
    )
    return generate_synthetic(cfg)


def random_triplet(seed, shape=(8, 3), scale=1.0):
    rng = np.random.default_rng(seed)

    def seg():
        return Segment(scale * rng.normal(size=shape), "u", 0, "zero")

    return SegmentTriplet(seg(), seg(), seg(), "a", "b")
