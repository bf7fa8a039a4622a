"""Run configuration: flat key=value files with a strict schema.

Files hold one ``key=value`` per line with ``#`` comments; command-line
flags override file values.  Unknown keys and malformed values are
rejected so a run is always fully described by its echoed config.
"""

from pathlib import Path

from .corpus import SyntheticConfig
from .errors import ConfigError
from .network import NetConfig, TrainConfig


def _int_list(text):
    return [int(part) for part in str(text).split(",") if part.strip()]


# key -> (parser, default)
SCHEMA = {
    # synthetic corpus
    "vocab_size": (int, 20),
    "instances_per_word": (int, 10),
    "feature_dim": (int, 40),
    "word_len_min": (int, 30),
    "word_len_max": (int, 60),
    "words_per_utterance_min": (int, 2),
    "words_per_utterance_max": (int, 5),
    "noise_std": (float, 0.1),
    "warp_min": (float, 0.85),
    "warp_max": (float, 1.15),
    "split_train": (float, 0.6),
    "split_dev": (float, 0.2),
    "split_test": (float, 0.2),
    "queries_per_word": (int, 3),
    # segmentation and search
    "window_len": (int, 200),
    "shift": (int, 5),
    "padding": (str, "context"),
    "max_pairs_per_word": (int, 0),  # 0 = unlimited
    "pair_count": (int, 0),  # 0 = use all pairs
    "pair_counts": (_int_list, [200, 2000]),
    # network
    "conv1_filters": (int, 96),
    "conv1_width": (int, 9),
    "pool1": (int, 3),
    "conv2_filters": (int, 96),
    "conv2_width": (int, 8),
    "hidden_units": (int, 2048),
    "embedding_dim": (int, 1024),
    # training
    "margin": (float, 0.15),
    "batch_size": (int, 1024),
    "rho": (float, 0.9),
    "epsilon": (float, 1e-6),
    "patience": (int, 20),
    "max_epochs": (int, 100),
    "triplets_per_epoch": (int, 10000),
    "dev_triplets": (int, 512),
    # misc
    "seed": (int, 0),
    "jobs": (int, 1),
    "bench_repeats": (int, 3),
}

_CHOICES = {"padding": ("context", "zero")}


class RunConfig:
    """A validated, fully-defaulted view of one run's parameters."""

    def __init__(self, values=None):
        merged = {key: default for key, (_, default) in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            parser, _ = SCHEMA[key]
            try:
                merged[key] = parser(value) if not isinstance(value, (list, bool)) else value
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
        for key, choices in _CHOICES.items():
            if merged[key] not in choices:
                raise ConfigError(f"{key} must be one of {choices}, got {merged[key]!r}")
        self.values = merged

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @classmethod
    def from_file(cls, path, overrides=None):
        raw = {}
        for lineno, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            key, sep, value = ln.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {ln!r}")
            raw[key.strip()] = value.strip()
        raw.update(overrides or {})
        return cls(raw)

    def synthetic_config(self):
        try:
            return SyntheticConfig(
                vocab_size=self.vocab_size,
                instances_per_word=self.instances_per_word,
                feature_dim=self.feature_dim,
                word_len_range=(self.word_len_min, self.word_len_max),
                words_per_utterance_range=(
                    self.words_per_utterance_min,
                    self.words_per_utterance_max,
                ),
                noise_std=self.noise_std,
                warp_range=(self.warp_min, self.warp_max),
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_fractions(self):
        return (self.split_train, self.split_dev, self.split_test)

    def net_config(self):
        try:
            return NetConfig(
                input_len=self.window_len,
                input_dim=self.feature_dim,
                conv1_filters=self.conv1_filters,
                conv1_width=self.conv1_width,
                pool1=self.pool1,
                conv2_filters=self.conv2_filters,
                conv2_width=self.conv2_width,
                hidden_units=self.hidden_units,
                embedding_dim=self.embedding_dim,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self):
        try:
            return TrainConfig(
                margin=self.margin,
                batch_size=self.batch_size,
                rho=self.rho,
                epsilon=self.epsilon,
                patience=self.patience,
                max_epochs=self.max_epochs,
                triplets_per_epoch=self.triplets_per_epoch,
                dev_triplets=self.dev_triplets,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def lines(self):
        out = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            out.append(f"{key}={value}")
        return out

    def write(self, path):
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
