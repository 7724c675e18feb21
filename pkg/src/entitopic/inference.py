"""Joint inference: topic-conditioned decoding with confidence flagging.

A document's topic distribution is computed first and fed through the
bridge; entity tags then come from Viterbi decoding over prototype-bank
emissions.  Per-token and topic confidences are normalized-entropy
complements in [0, 1]; anything under the configured thresholds is flagged
for review.  Language is detected from character n-grams when not given.

Efficiency helpers: an LRU cache for encoder outputs, a prototype cache
invalidated by the bank's version counter, and batch inference that groups
documents by language while keeping outputs bit-identical to one-at-a-time
calls.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import zlib
from collections import OrderedDict
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import torch

from .data import Document, TokenSequence
from .encoder import tokenize
from .entity import viterbi
from .errors import EmptyInput, NotADistribution, UnknownLanguage
from .model import JointModel

logger = logging.getLogger(__name__)


# --- language detection ------------------------------------------------------


class LanguageDetector:
    """Multinomial model over hashed character 1-3 grams.

    Fitting stores smoothed log-likelihood rows per language; prediction is
    a softmax over (prior + W h) where h counts the text's n-gram buckets,
    so the reported probability is a posterior.
    """

    def __init__(self, buckets: int = 1 << 14, smoothing: float = 0.5):
        self.buckets = buckets
        self.smoothing = smoothing
        self.languages: list[str] = []
        self.log_likelihood: np.ndarray | None = None  # [L x buckets]
        self.log_prior: np.ndarray | None = None

    def _features(self, text: str) -> dict[int, int]:
        text = f" {text.lower()} "
        counts: dict[int, int] = {}
        for n in (1, 2, 3):
            for i in range(len(text) - n + 1):
                key = zlib.crc32(text[i : i + n].encode("utf-8")) % self.buckets
                counts[key] = counts.get(key, 0) + 1
        return counts

    def fit(self, texts_by_language: dict[str, list[str]]) -> "LanguageDetector":
        self.languages = sorted(texts_by_language)
        counts = np.zeros((len(self.languages), self.buckets))
        totals = np.zeros(len(self.languages))
        for row, lang in enumerate(self.languages):
            for text in texts_by_language[lang]:
                for key, c in self._features(text).items():
                    counts[row, key] += c
                    totals[row] += c
        self.log_likelihood = np.log(
            (counts + self.smoothing)
            / (totals[:, None] + self.smoothing * self.buckets)
        )
        self.log_prior = np.log(np.full(len(self.languages), 1.0 / len(self.languages)))
        return self

    def predict(self, text: str) -> tuple[str, float]:
        if not text.strip():
            raise EmptyInput("cannot detect the language of empty text")
        if self.log_likelihood is None:
            raise ValueError("detector is not fitted")
        scores = self.log_prior.copy()
        for key, c in self._features(text).items():
            scores += c * self.log_likelihood[:, key]
        scores -= scores.max()
        probs = np.exp(scores)
        probs /= probs.sum()
        best = int(np.argmax(probs))
        return self.languages[best], float(probs[best])

    def state_dict(self) -> dict:
        return {
            "buckets": self.buckets,
            "smoothing": self.smoothing,
            "languages": self.languages,
            "log_likelihood": self.log_likelihood,
            "log_prior": self.log_prior,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "LanguageDetector":
        det = cls(state["buckets"], state["smoothing"])
        det.languages = list(state["languages"])
        det.log_likelihood = state["log_likelihood"]
        det.log_prior = state["log_prior"]
        return det


# --- small ops ---------------------------------------------------------------


def map_features(f: np.ndarray, a_matrix: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine per-language feature mapping A f + b."""
    if a_matrix.shape[1] != f.shape[-1] or a_matrix.shape[0] != bias.shape[0]:
        raise ValueError(
            f"shapes incompatible: A {a_matrix.shape}, f {f.shape}, b {bias.shape}"
        )
    return a_matrix @ f + bias


def residual_adapt(
    h_adapted: np.ndarray, h_original: np.ndarray, gamma: float
) -> np.ndarray:
    """Convex mix of adapted and original features."""
    if not 0.0 <= gamma <= 1.0:
        logger.warning("residual_adapt: gamma %.3f outside [0, 1], clamping", gamma)
        gamma = min(1.0, max(0.0, gamma))
    return gamma * h_adapted + (1.0 - gamma) * h_original


def confidence(dist: np.ndarray) -> float:
    """1 - H(p)/ln(m): 1 for a point mass, 0 for the uniform distribution."""
    p = np.asarray(dist, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise NotADistribution("confidence needs a distribution over >= 2 outcomes")
    if np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-6:
        raise NotADistribution(f"probabilities sum to {p.sum():.6f}")
    p = np.clip(p, 0.0, 1.0)
    nz = p[p > 0]
    h = -(nz * np.log(nz)).sum()
    return float(1.0 - h / math.log(p.shape[0]))


# --- caches ------------------------------------------------------------------


class LruCache:
    """Thread-safe LRU: get refreshes recency, put evicts the oldest."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            if key not in self._data:
                self.misses += 1
                return None
            self._data.move_to_end(key)
            self.hits += 1
            return self._data[key]

    def put(self, key, value) -> None:
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
            self._data[key] = value
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def __contains__(self, key) -> bool:
        with self._lock:
            return key in self._data

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


class PrototypeCache:
    """Caches stacked bank prototypes, invalidated by the bank version."""

    def __init__(self):
        self._lock = threading.Lock()
        self._version: int | None = None
        self._value = None

    def get(self, version: int):
        with self._lock:
            if self._version != version:
                return None
            return self._value

    def put(self, version: int, value) -> None:
        with self._lock:
            self._version = version
            self._value = value


# --- predictions -------------------------------------------------------------


@dataclass
class Prediction:
    doc_id: str
    language: str
    language_prob: float
    tags: list[str]
    tag_confidence: list[float]
    flags: list[bool]
    topic_dist: list[float]
    topic_confidence: float
    topic_flag: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "doc_id": self.doc_id,
                "language": self.language,
                "language_prob": round(self.language_prob, 6),
                "tags": self.tags,
                "confidences": [round(c, 6) for c in self.tag_confidence],
                "flags": self.flags,
                "topic_dist": [round(p, 6) for p in self.topic_dist],
                "topic_confidence": round(self.topic_confidence, 6),
                "topic_flag": self.topic_flag,
            }
        )


@dataclass
class FailedPrediction:
    doc_id: str
    error: str


def flag(pred: Prediction, entity_threshold: float, topic_threshold: float) -> Prediction:
    """Recompute flag bits: strictly-below-threshold confidences are flagged."""
    pred.flags = [c < entity_threshold for c in pred.tag_confidence]
    pred.topic_flag = pred.topic_confidence < topic_threshold
    return pred


class Inferencer:
    """Joint prediction over documents using the trained model and bank."""

    def __init__(
        self,
        model: JointModel,
        detector: LanguageDetector | None = None,
    ):
        self.model = model
        self.detector = detector
        cfg = model.config.inference
        self.embedding_cache = LruCache(cfg.embedding_cache_size)
        self.prototype_cache = PrototypeCache()

    # -- language resolution --

    def resolve_language(self, text: str) -> tuple[str, float]:
        cfg = self.model.config.inference
        if self.detector is None:
            if cfg.default_language:
                return cfg.default_language, 1.0
            raise UnknownLanguage("no detector and no default language configured")
        lang, prob = self.detector.predict(text)
        if prob < cfg.detect_min_prob:
            if cfg.default_language:
                logger.info(
                    "language detection below threshold (%.2f), using default %r",
                    prob, cfg.default_language,
                )
                return cfg.default_language, prob
            raise UnknownLanguage(
                f"detected {lang!r} with low confidence {prob:.2f} and no default"
            )
        return lang, prob

    # -- prototype handling --

    def bank_prototypes(self) -> tuple[list[str], torch.Tensor]:
        version = self.model.bank.version
        cached = self.prototype_cache.get(version)
        if cached is not None:
            return cached
        value = self.model.bank.stacked()
        self.prototype_cache.put(version, value)
        return value

    # -- document plumbing --

    def _as_document(self, doc) -> tuple[Document, float]:
        if isinstance(doc, Document):
            return doc, 1.0
        if isinstance(doc, TokenSequence):
            if doc.language:
                return Document(doc.doc_id, doc.language, (doc,)), 1.0
            text = " ".join(doc.tokens)
            lang, prob = self.resolve_language(text)
            seq = TokenSequence(doc.tokens, lang, doc.labels, doc.doc_id)
            return Document(doc.doc_id, lang, (seq,)), prob
        if isinstance(doc, str):
            if not doc.strip():
                raise EmptyInput("empty document")
            lang, prob = self.resolve_language(doc)
            seq = tokenize(doc, lang)
            return Document("", lang, (seq,)), prob
        raise TypeError(f"cannot infer over {type(doc).__name__}")

    def _cached_sentence_features(self, seq: TokenSequence, topic) -> torch.Tensor:
        key = (seq.language, seq.tokens, self.model.bank.version)
        hit = self.embedding_cache.get(key)
        if hit is not None:
            return hit
        feats = self.model.sentence_features(seq, topic)
        self.embedding_cache.put(key, feats)
        return feats

    # -- prediction --

    def joint_predict(self, doc) -> Prediction:
        document, lang_prob = self._as_document(doc)
        if document.language not in self.model.config.languages:
            raise UnknownLanguage(
                f"language {document.language!r} is not configured"
            )
        if not document.tokens:
            raise EmptyInput(f"document {document.doc_id!r} has no tokens")
        cfg = self.model.config.inference
        with torch.no_grad():
            topic = (
                self.model.doc_topic_features(document)
                if self.model.bridge is not None
                else None
            )
            theta = topic.theta if topic is not None else self.model.doc_theta(document)
            types, protos = self.bank_prototypes()
            tags: list[str] = []
            confs: list[float] = []
            for seq in document.sentences:
                feats = self._cached_sentence_features(seq, topic)
                emissions = self.model.episode_tag_emissions(feats, types, protos)
                seq_tags, _ = viterbi(emissions, self.model.crf)
                probs = torch.softmax(emissions, dim=-1).numpy()
                tags.extend(seq_tags)
                confs.extend(confidence(row) for row in probs)
        topic_conf = confidence(theta) if len(theta) >= 2 else 1.0
        pred = Prediction(
            doc_id=document.doc_id,
            language=document.language,
            language_prob=lang_prob,
            tags=tags,
            tag_confidence=confs,
            flags=[],
            topic_dist=[float(x) for x in theta],
            topic_confidence=topic_conf,
            topic_flag=False,
        )
        return flag(pred, cfg.entity_threshold, cfg.topic_threshold)

    def batch_infer(self, docs: list) -> list[Prediction | FailedPrediction]:
        """Grouped-by-language inference; output order matches input order.

        Per-document failures are captured as FailedPrediction entries
        instead of aborting the batch.
        """
        resolved: list[tuple[int, object, str]] = []
        results: dict[int, Prediction | FailedPrediction] = {}
        for i, doc in enumerate(docs):
            try:
                document, _ = self._as_document(doc)
                resolved.append((i, doc, document.language))
            except Exception as exc:  # noqa: BLE001 - propagate per doc
                doc_id = getattr(doc, "doc_id", "")
                results[i] = FailedPrediction(doc_id, f"{type(exc).__name__}: {exc}")
        groups: dict[str, list[tuple[int, object]]] = defaultdict(list)
        for i, doc, lang in resolved:
            groups[lang].append((i, doc))
        logger.info(
            "batch_infer grouping: %s",
            {lang: len(items) for lang, items in sorted(groups.items())},
        )
        for lang in sorted(groups):
            for i, doc in groups[lang]:
                try:
                    results[i] = self.joint_predict(doc)
                except Exception as exc:  # noqa: BLE001
                    doc_id = getattr(doc, "doc_id", "")
                    results[i] = FailedPrediction(
                        doc_id, f"{type(exc).__name__}: {exc}"
                    )
        return [results[i] for i in range(len(docs))]
