"""Declarative configuration: one file, one section per subsystem.

All defaults live in the dataclasses below; a YAML file only needs to state
what it overrides.  Loading is strict: unknown keys raise
:class:`~entitopic.errors.ConfigError` with the full field path so a typo in
a config file fails loudly instead of silently using a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ConfigError

DEFAULT_LANGUAGES = ("en", "fr", "es", "de", "it")


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    word_buckets: int = 4096
    char_buckets: int = 2048
    vocab_min_count: int = 1
    adapter_rank: int = 8
    contrast_tau: float = 0.1
    diversity_margin: float = 1.0
    diversity_lambda: float = 1.0
    curriculum_beta: float = 1.0
    align_lambda: float = 0.1
    calibration_enabled: bool = True


@dataclass
class EntityConfig:
    entity_types: tuple[str, ...] = ("PER", "ORG", "LOC", "MISC")
    lstm_hidden: int | None = None  # defaults to d_model // 2
    adapter_rank: int = 4
    n_heads: int = 4
    metric: str = "sq_euclidean"  # sq_euclidean | euclidean | cosine
    bank_momentum: float = 0.5
    proto_attention: str = "uniform"  # uniform | query
    forbidden_penalty: float = -1e4


@dataclass
class TopicConfig:
    n_topics: int = 10
    alpha: float | None = None  # defaults to 50 / n_topics
    beta: float = 0.01
    train_sweeps: int = 200
    infer_sweeps: int = 20
    top_m: int = 10
    npmi_window: int = 10
    npmi_eps: float = 1e-12
    classify_tau: float = 0.1
    coherence_lambda: float = 0.1
    remove_stopwords: bool = True


@dataclass
class BridgeConfig:
    enabled: bool = True
    n_heads: int = 4
    d_shared: int | None = None  # defaults to d_model
    residual_alpha_init: float = 0.9
    scaler_mode: str = "vector"  # vector | scalar


@dataclass
class EpisodeConfig:
    n_way: int = 5
    k_support: int = 5
    k_query: int = 2
    type_temperature: float = 1.0
    pair_temperature: float = 1.0
    # language-pair similarity: identity diagonal plus uniform off-diagonal
    pair_self_similarity: float = 1.0
    pair_cross_similarity: float = 0.5
    batch_scale_c: float = 2.0
    batch_max: int = 64


@dataclass
class AugmentConfig:
    weight_synonym: float = 1.0
    weight_paraphrase: float = 1.0
    weight_context: float = 1.0
    perturb_strength: float = 0.2
    quality_threshold: float = 0.7


@dataclass
class LossConfig:
    w_ner: float = 1.0
    w_topic: float = 0.5
    w_align: float = 0.1
    w_contrast: float = 0.1
    w_reg: float = 0.01
    lambda_crf: float = 1.0
    lambda_div: float = 0.1
    lambda_mutual: float = 0.1
    lambda_smooth: float = 1e-4
    # crf_term="nll" adds the sequence negative log-likelihood; "log_prob"
    # adds +lambda_crf * log P(Y|X) verbatim, which rewards unlikely gold
    # sequences when minimized.  Kept selectable; "nll" is the default.
    crf_term: str = "nll"
    # +1 penalizes the mutual-information surrogate, -1 rewards it
    mi_sign: float = 1.0
    # multiplicative weight adaptation from validation loss, 0 disables
    adapt_every: int = 0
    adapt_factor: float = 1.1


@dataclass
class TrainingConfig:
    epochs: int = 10
    episodes_per_epoch: int = 50
    val_episodes: int = 20
    patience: int = 3
    seed: int = 0
    warmup_steps: int = 20
    cosine_floor: float = 0.1
    clip_norm: float = 1.0
    grad_accumulation: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    dtype: str = "float32"  # float32 | float64
    lr_encoder: float = 1e-5
    lr_entity: float = 2e-5
    lr_topic: float = 3e-5
    lr_bridge: float = 2e-5
    parallel_pairs_per_step: int = 2


@dataclass
class InferenceConfig:
    entity_threshold: float = 0.3
    topic_threshold: float = 0.3
    detect_min_prob: float = 0.5
    default_language: str | None = None
    embedding_cache_size: int = 256


@dataclass
class Config:
    languages: tuple[str, ...] = DEFAULT_LANGUAGES
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    entity: EntityConfig = field(default_factory=EntityConfig)
    topic: TopicConfig = field(default_factory=TopicConfig)
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    episodes: EpisodeConfig = field(default_factory=EpisodeConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def __post_init__(self) -> None:
        if self.entity.lstm_hidden is None:
            self.entity.lstm_hidden = self.encoder.d_model // 2
        if self.topic.alpha is None:
            self.topic.alpha = 50.0 / self.topic.n_topics
        if self.bridge.d_shared is None:
            self.bridge.d_shared = self.encoder.d_model

    @property
    def tag_set(self) -> tuple[str, ...]:
        """Full BIO tag list: O first, then B-X/I-X per entity type."""
        tags = ["O"]
        for t in self.entity.entity_types:
            tags.append(f"B-{t}")
            tags.append(f"I-{t}")
        return tuple(tags)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


_SECTION_TYPES = {
    "encoder": EncoderConfig,
    "entity": EntityConfig,
    "topic": TopicConfig,
    "bridge": BridgeConfig,
    "episodes": EpisodeConfig,
    "augment": AugmentConfig,
    "loss": LossConfig,
    "training": TrainingConfig,
    "inference": InferenceConfig,
}

_LIST_FIELDS = {"languages", "entity_types"}


def _build_section(cls: type, values: dict, path: str) -> Any:
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
        if isinstance(value, dict):
            raise ConfigError(f"{path}.{key}: scalar expected, got a mapping")
        if key in _LIST_FIELDS and isinstance(value, (list, tuple)):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("top level: mapping expected")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key == "languages":
            if not isinstance(value, (list, tuple)) or not all(
                isinstance(x, str) for x in value
            ):
                raise ConfigError("languages: list of strings expected")
            kwargs["languages"] = tuple(value)
        elif key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: mapping expected")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            raise ConfigError(f"{key}: unknown section")
    return Config(**kwargs)


def load_config(path: str) -> Config:
    """Load a YAML config file, applying defaults for anything unstated."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        data = {}
    return config_from_dict(data)


def dump_default_config() -> str:
    """YAML text of the full default configuration."""
    return yaml.safe_dump(Config().to_dict(), sort_keys=False)
