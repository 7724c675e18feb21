"""Joint model: shared encoder, entity branch, topic branch, bridge.

Construction is seed-stable per component: each submodule is re-initialized
from a seed derived from (master seed, component name), so building a model
without the bridge leaves every other component's weights bit-identical to
a full build.  That property is the contract behind the bridge ablation.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .bridge import Bridge
from .config import Config
from .data import Dataset, Document, TokenSequence
from .encoder import EncodedSequence, MultilingualEncoder
from .entity import CrfParams, EntityEncoder, PrototypeBank, PrototypeClassifier
from .episodes import Episode, LanguageStats
from .topic import (
    AdaptivePool,
    TopicFusion,
    TopicModelState,
    TopicProjector,
    gibbs_train,
    infer_theta,
    load_stopwords,
)
from .util import reseed_module


def component_seed(master: int, name: str) -> int:
    return zlib.crc32(f"{master}:{name}".encode("utf-8")) & 0x7FFFFFFF


@dataclass
class DocTopicFeatures:
    theta: np.ndarray  # [K] document-topic distribution
    fused: torch.Tensor  # [d_model] GeLU fusion of theta and doc embedding
    pooled: torch.Tensor  # [d_model] topic-conditioned token pooling
    matrix: torch.Tensor  # [(K+1) x (K + d_model)] bridge input rows


class JointModel:
    """Owns all trainable modules plus the non-neural state (LDA, bank)."""

    def __init__(self, config: Config, seed: int = 0):
        self.config = config
        self.seed = seed
        languages = config.languages
        d = config.encoder.d_model
        k = config.topic.n_topics

        self.encoder = MultilingualEncoder(config.encoder, languages)
        self.entity_encoder = EntityEncoder(config.entity, d, languages)
        self.prototype = PrototypeClassifier(
            d, config.entity.metric, config.entity.proto_attention
        )
        self.crf = CrfParams(
            config.tag_set, constrained=True,
            forbidden_penalty=config.entity.forbidden_penalty,
        )

        d_topic = k + d
        self.topic_fusion = TopicFusion(k, d, d)
        self.topic_pool = AdaptivePool(d, d)
        self.topic_projector = TopicProjector(d, d, d)
        self.topic_embed = nn.Embedding(k, d)
        self.align_entity = nn.Linear(d, d)
        self.align_topic = nn.Linear(d, d)
        self.bridge: Bridge | None = (
            Bridge(config.bridge, d, d_topic, languages)
            if config.bridge.enabled
            else None
        )

        for name, module in self.torch_modules().items():
            reseed_module(module, component_seed(seed, name))

        self.bank: PrototypeBank = self.prototype.make_bank(config.entity.bank_momentum)
        self.lda: dict[str, TopicModelState] = {}
        self.stats = LanguageStats()
        self.stopwords = {
            lang: (load_stopwords(lang) if config.topic.remove_stopwords else frozenset())
            for lang in languages
        }

    # --- module bookkeeping -------------------------------------------------

    def torch_modules(self) -> dict[str, nn.Module]:
        groups = {
            "encoder": self.encoder,
            "entity": nn.ModuleList(
                [self.entity_encoder, self.prototype, self.crf]
            ),
            "topic": nn.ModuleList(
                [
                    self.topic_fusion,
                    self.topic_pool,
                    self.topic_projector,
                    self.topic_embed,
                    self.align_entity,
                    self.align_topic,
                ]
            ),
        }
        if self.bridge is not None:
            groups["bridge"] = self.bridge
        return groups

    def parameters(self):
        for module in self.torch_modules().values():
            yield from module.parameters()

    def set_dtype(self, dtype: torch.dtype) -> None:
        for module in self.torch_modules().values():
            module.to(dtype)

    def train_mode(self, flag: bool) -> None:
        for module in self.torch_modules().values():
            module.train(flag)

    def params_sq_norm(self) -> torch.Tensor:
        return sum((p**2).sum() for p in self.parameters())

    # --- corpus fitting -----------------------------------------------------

    def fit_corpus(self, dataset: Dataset) -> None:
        """Vocabulary, per-language LDA, and normalization statistics."""
        self.encoder.fit_vocab(dataset.sequences)
        for lang in self.config.languages:
            docs = [doc.tokens for doc in dataset.documents(lang)]
            if not docs:
                continue
            rng = np.random.default_rng(component_seed(self.seed, f"lda:{lang}"))
            self.lda[lang] = gibbs_train(
                docs,
                self.config.topic.n_topics,
                self.config.topic.alpha,
                self.config.topic.beta,
                self.config.topic.train_sweeps,
                rng,
                language=lang,
                stopwords=self.stopwords.get(lang, frozenset()),
            )
        configured = [l for l in self.config.languages if l in dataset.by_language]
        vocab_sizes = {lang: dataset.vocabulary_size(lang) for lang in configured}
        feats = {}
        with torch.no_grad():
            for lang in configured:
                sample = dataset.by_language[lang][:64]
                if not sample:
                    continue
                encoded = self.encoder.encode_calibrated(sample)
                feats[lang] = np.stack(
                    [e.mean_embedding().numpy() for e in encoded]
                )
        self.stats.fit(feats, vocab_sizes)

    # --- forward paths ------------------------------------------------------

    def _dtype(self) -> torch.dtype:
        return self.encoder.embedder.word_table.weight.dtype

    def doc_theta(self, doc: Document | TokenSequence) -> np.ndarray:
        """Topic distribution for a document, inferred with frozen counts.

        The sampler is re-seeded from the document content, so the result
        is independent of call order and batch composition.
        """
        language = doc.language
        tokens = doc.tokens
        state = self.lda.get(language)
        if state is None:
            k = self.config.topic.n_topics
            return np.full(k, 1.0 / k)
        rng = np.random.default_rng(
            component_seed(self.seed, "theta:" + "\x1f".join(tokens))
        )
        return infer_theta(
            state,
            tokens,
            self.config.topic.infer_sweeps,
            rng,
            self.stopwords.get(language, frozenset()),
        )

    def _topic_from_encoded(
        self, doc, encoded: list[EncodedSequence], theta: np.ndarray
    ) -> DocTopicFeatures:
        hidden = torch.cat([e.hidden for e in encoded], dim=0)
        mask = torch.cat([e.mask for e in encoded], dim=0)
        joined = EncodedSequence(hidden, doc.language, mask)
        h_doc = joined.mean_embedding()
        theta_t = torch.tensor(theta, dtype=self._dtype())
        fused = self.topic_fusion(theta_t, h_doc)
        pooled = self.topic_pool(joined, fused)
        k = self.config.topic.n_topics
        doc_row = torch.cat([theta_t, pooled])
        proto_rows = torch.cat(
            [torch.eye(k, dtype=self._dtype()), self.topic_embed.weight], dim=1
        )
        matrix = torch.cat([doc_row.unsqueeze(0), proto_rows], dim=0)
        return DocTopicFeatures(theta, fused, pooled, matrix)

    def doc_topic_features(self, doc: Document | TokenSequence) -> DocTopicFeatures:
        """Theta, fused/pooled vectors, and the bridge input matrix."""
        sentences = list(doc.sentences) if isinstance(doc, Document) else [doc]
        encoded = self.encoder.encode_calibrated(sentences)
        return self._topic_from_encoded(doc, encoded, self.doc_theta(doc))

    def episode_features(
        self,
        episode: Episode,
        doc_lookup=None,
        theta_cache: dict | None = None,
        with_topics: bool = True,
    ) -> tuple[list[torch.Tensor], list[torch.Tensor], dict[str, DocTopicFeatures]]:
        """Entity features for all episode sentences with one encoder pass.

        Returns (support features, query features, topic features per doc).
        Topic features come from each sentence's full document when a
        lookup is given, so document-level context conditions the bridge.
        """
        sents = list(episode.support) + list(episode.query)
        docs: dict[str, Document | TokenSequence] = {}
        if with_topics:
            for seq in sents:
                if seq.doc_id in docs:
                    continue
                doc = doc_lookup(seq.doc_id) if doc_lookup is not None else None
                docs[seq.doc_id] = doc if doc is not None else seq
        context: list[TokenSequence] = []
        spans: dict[str, tuple[int, int]] = {}
        for doc_id, doc in docs.items():
            doc_sents = list(doc.sentences) if isinstance(doc, Document) else [doc]
            spans[doc_id] = (len(context), len(context) + len(doc_sents))
            context.extend(doc_sents)

        encoded = self.encoder.encode_calibrated(sents + context)
        enc_sents = encoded[: len(sents)]
        enc_context = encoded[len(sents):]

        topics: dict[str, DocTopicFeatures] = {}
        for doc_id, doc in docs.items():
            lo, hi = spans[doc_id]
            theta = None
            if theta_cache is not None:
                theta = theta_cache.get(doc_id)
            if theta is None:
                theta = self.doc_theta(doc)
                if theta_cache is not None:
                    theta_cache[doc_id] = theta
            topics[doc_id] = self._topic_from_encoded(
                doc, enc_context[lo:hi], theta
            )

        feats = self.entity_encoder.forward_batch(enc_sents)
        if self.bridge is not None and topics:
            feats = self.bridge.forward_batch(
                feats,
                [topics[seq.doc_id].matrix for seq in sents],
                [seq.language for seq in sents],
            )
        n_support = len(episode.support)
        return feats[:n_support], feats[n_support:], topics

    def sentence_features(
        self,
        seq: TokenSequence,
        topic: DocTopicFeatures | None = None,
        encoded: EncodedSequence | None = None,
    ) -> torch.Tensor:
        """Entity-branch token features [n x d], bridge-fused when enabled."""
        if encoded is None:
            encoded = self.encoder.encode_calibrated([seq])[0]
        feats = self.entity_encoder(encoded)
        real = feats.hidden[feats.mask]
        if self.bridge is not None and topic is not None:
            real, _ = self.bridge(real, topic.matrix, seq.language)
        return real

    def episode_tag_emissions(
        self, features: torch.Tensor, types: list[str], protos: torch.Tensor
    ) -> torch.Tensor:
        """Emission matrix over the global tag set from episode prototypes.

        A missing I-X prototype borrows the B-X prototype (single-token
        support entities are common); tags with no prototype at all keep
        the forbidden-score floor.
        """
        known = dict(zip(types, protos))
        full_types, full_protos = [], []
        for tag in self.crf.tags:
            if tag in known:
                full_types.append(tag)
                full_protos.append(known[tag])
            elif tag.startswith("I-") and f"B-{tag[2:]}" in known:
                full_types.append(tag)
                full_protos.append(known[f"B-{tag[2:]}"])
        return self.prototype.emissions(
            features,
            full_types,
            torch.stack(full_protos),
            self.crf.tags,
            missing_score=self.config.entity.forbidden_penalty,
        )

    def batch_sentence_features(
        self,
        seqs: list[TokenSequence],
        topics: list[DocTopicFeatures | None],
    ) -> list[torch.Tensor]:
        """Entity features for several sentences with one encoder pass."""
        encoded = self.encoder.encode_calibrated(seqs)
        out = []
        for seq, enc, topic in zip(seqs, encoded, topics):
            feats = self.entity_encoder(enc)
            real = feats.hidden[feats.mask]
            if self.bridge is not None and topic is not None:
                real, _ = self.bridge(real, topic.matrix, seq.language)
            out.append(real)
        return out

    def support_pairs(
        self, episode: Episode, doc_lookup=None, cache: dict | None = None
    ) -> list[tuple[torch.Tensor, str]]:
        """(token feature, gold tag) pairs from the support set."""
        topics = [self._topic_for(s, doc_lookup, cache) for s in episode.support]
        features = self.batch_sentence_features(episode.support, topics)
        pairs = []
        for seq, feats in zip(episode.support, features):
            for vec, tag in zip(feats, seq.labels):
                pairs.append((vec, tag))
        return pairs

    def _topic_for(
        self, seq: TokenSequence, doc_lookup, cache: dict | None = None
    ) -> DocTopicFeatures | None:
        if self.bridge is None:
            return None
        if cache is not None and seq.doc_id in cache:
            return cache[seq.doc_id]
        doc = None
        if doc_lookup is not None:
            doc = doc_lookup(seq.doc_id)
        feats = self.doc_topic_features(doc if doc is not None else seq)
        if cache is not None:
            cache[seq.doc_id] = feats
        return feats

    def decode(
        self, seq: TokenSequence, types: list[str], protos: torch.Tensor,
        doc_lookup=None,
    ) -> list[str]:
        from .entity import viterbi

        topic = self._topic_for(seq, doc_lookup)
        feats = self.sentence_features(seq, topic)
        emissions = self.episode_tag_emissions(feats, types, protos)
        tags, _ = viterbi(emissions.detach(), self.crf)
        return tags
