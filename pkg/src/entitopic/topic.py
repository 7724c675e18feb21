"""Topic branch: per-language LDA plus neural feature fusion.

The probabilistic half is a latent Dirichlet allocation model trained with
collapsed Gibbs sampling over integer count matrices; document-topic
distributions come from the smoothed counts, and unseen documents are
inferred by extra sweeps with the global counts frozen.  The neural half
fuses the document-topic distribution with encoder features, pools tokens
with topic-conditioned attention, and projects topic vectors into a
prototype space classified by temperature-scaled cosine similarity.

Coherence metrics (NPMI over sliding-window co-occurrence, UMass over
document frequencies) and topic diversity live here as well.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import torch
from torch import nn

from .encoder import EncodedSequence
from .errors import (
    DegenerateEmbedding,
    EmptyCorpus,
    EmptySequence,
    NotEnoughWords,
    ShapeError,
)

logger = logging.getLogger(__name__)


def load_stopwords(language: str) -> frozenset[str]:
    """Bundled stoplist for a language; empty if none is shipped."""
    try:
        text = (
            resources.files("entitopic.resources")
            .joinpath(f"stopwords_{language}.txt")
            .read_text(encoding="utf-8")
        )
    except (FileNotFoundError, ModuleNotFoundError):
        return frozenset()
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def _doc_tokens(doc) -> list[str]:
    tokens = getattr(doc, "tokens", doc)
    return [t.lower() for t in tokens]


@dataclass
class TopicModelState:
    """LDA counts and assignments for one language."""

    language: str
    n_topics: int
    alpha: float
    beta: float
    vocab: list[str]
    word_topic: np.ndarray  # [V x K]
    doc_topic: np.ndarray  # [D x K]
    topic_totals: np.ndarray  # [K]
    assignments: list[np.ndarray]
    doc_words: list[np.ndarray]
    word_index: dict[str, int] = field(default_factory=dict)

    FORMAT_VERSION = 1

    def __post_init__(self) -> None:
        if not self.word_index:
            self.word_index = {w: i for i, w in enumerate(self.vocab)}

    def check_counts(self) -> None:
        """Assert the count-conservation invariants."""
        assert (self.word_topic >= 0).all()
        assert (self.doc_topic >= 0).all()
        np.testing.assert_array_equal(
            self.word_topic.sum(axis=0), self.topic_totals
        )
        for d, words in enumerate(self.doc_words):
            assert self.doc_topic[d].sum() == len(words)

    def topic_word_dist(self) -> np.ndarray:
        """phi[k, w]: smoothed word distribution per topic."""
        v = len(self.vocab)
        return (self.word_topic.T + self.beta) / (
            self.topic_totals[:, None] + v * self.beta
        )

    def top_words(self, top_m: int) -> list[list[str]]:
        phi = self.topic_word_dist()
        return [
            [self.vocab[i] for i in np.argsort(-phi[k])[:top_m]]
            for k in range(self.n_topics)
        ]

    def save(self, path: str) -> None:
        meta = {
            "format_version": self.FORMAT_VERSION,
            "language": self.language,
            "n_topics": self.n_topics,
            "alpha": self.alpha,
            "beta": self.beta,
            "vocab": self.vocab,
        }
        np.savez_compressed(
            path,
            meta=json.dumps(meta),
            word_topic=self.word_topic,
            doc_topic=self.doc_topic,
            topic_totals=self.topic_totals,
            assignments=np.array(
                [a.tolist() for a in self.assignments], dtype=object
            ),
            doc_words=np.array([w.tolist() for w in self.doc_words], dtype=object),
        )

    @classmethod
    def load(cls, path: str) -> "TopicModelState":
        data = np.load(path, allow_pickle=True)
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported topic state version {meta['format_version']}")
        return cls(
            language=meta["language"],
            n_topics=meta["n_topics"],
            alpha=meta["alpha"],
            beta=meta["beta"],
            vocab=list(meta["vocab"]),
            word_topic=data["word_topic"],
            doc_topic=data["doc_topic"],
            topic_totals=data["topic_totals"],
            assignments=[np.array(a, dtype=np.int64) for a in data["assignments"]],
            doc_words=[np.array(w, dtype=np.int64) for w in data["doc_words"]],
        )


def _sample_topic(
    w: int,
    d: int,
    word_topic: np.ndarray,
    doc_topic: np.ndarray,
    totals: np.ndarray,
    alpha: float,
    beta: float,
    beta_v: float,
    rng: np.random.Generator,
) -> int:
    p = (word_topic[w] + beta) / (totals + beta_v) * (doc_topic[d] + alpha)
    cum = np.cumsum(p)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def gibbs_train(
    corpus,
    n_topics: int,
    alpha: float,
    beta: float,
    sweeps: int,
    rng: np.random.Generator,
    language: str = "",
    stopwords: frozenset[str] = frozenset(),
    check_invariants_every: int = 0,
) -> TopicModelState:
    """Train LDA by collapsed Gibbs sampling.

    ``corpus`` is a list of documents (anything with ``.tokens`` or a plain
    token list); tokens are lowercased and stopwords dropped before the
    vocabulary is built.  Runs are bit-reproducible for a fixed generator.
    """
    if n_topics < 2:
        raise ValueError(f"need at least 2 topics, got {n_topics}")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    docs = [[t for t in _doc_tokens(doc) if t not in stopwords] for doc in corpus]
    vocab = sorted({t for doc in docs for t in doc})
    if not vocab:
        raise EmptyCorpus("no vocabulary after stopword removal")
    word_index = {w: i for i, w in enumerate(vocab)}

    v = len(vocab)
    d_count = len(docs)
    word_topic = np.zeros((v, n_topics), dtype=np.int64)
    doc_topic = np.zeros((d_count, n_topics), dtype=np.int64)
    totals = np.zeros(n_topics, dtype=np.int64)
    doc_words = [np.array([word_index[t] for t in doc], dtype=np.int64) for doc in docs]
    assignments = []
    for d, words in enumerate(doc_words):
        z = rng.integers(0, n_topics, size=len(words))
        assignments.append(z)
        for w, k in zip(words, z):
            word_topic[w, k] += 1
            doc_topic[d, k] += 1
            totals[k] += 1

    beta_v = beta * v
    state_for_check = None
    for sweep in range(sweeps):
        for d, words in enumerate(doc_words):
            z = assignments[d]
            for i, w in enumerate(words):
                k = z[i]
                word_topic[w, k] -= 1
                doc_topic[d, k] -= 1
                totals[k] -= 1
                k = _sample_topic(
                    w, d, word_topic, doc_topic, totals, alpha, beta, beta_v, rng
                )
                z[i] = k
                word_topic[w, k] += 1
                doc_topic[d, k] += 1
                totals[k] += 1
        if check_invariants_every and (sweep + 1) % check_invariants_every == 0:
            if state_for_check is None:
                state_for_check = TopicModelState(
                    language, n_topics, alpha, beta, vocab,
                    word_topic, doc_topic, totals, assignments, doc_words,
                )
            state_for_check.check_counts()

    return TopicModelState(
        language=language,
        n_topics=n_topics,
        alpha=alpha,
        beta=beta,
        vocab=vocab,
        word_topic=word_topic,
        doc_topic=doc_topic,
        topic_totals=totals,
        assignments=assignments,
        doc_words=doc_words,
    )


def doc_topic_distribution(state: TopicModelState, doc: int) -> np.ndarray:
    """Smoothed topic distribution of a training document."""
    counts = state.doc_topic[doc]
    return (counts + state.alpha) / (counts.sum() + state.n_topics * state.alpha)


def infer_theta(
    state: TopicModelState,
    tokens,
    sweeps: int,
    rng: np.random.Generator,
    stopwords: frozenset[str] = frozenset(),
) -> np.ndarray:
    """Topic distribution for an unseen document.

    Gibbs sweeps over the new document's assignments with the global
    word-topic counts frozen; out-of-vocabulary tokens are skipped, and a
    document with no known tokens falls back to the uniform prior.
    """
    words = np.array(
        [
            state.word_index[t]
            for t in _doc_tokens(tokens)
            if t not in stopwords and t in state.word_index
        ],
        dtype=np.int64,
    )
    k_topics = state.n_topics
    local = np.zeros(k_topics, dtype=np.int64)
    if len(words) == 0:
        return np.full(k_topics, 1.0 / k_topics)
    z = rng.integers(0, k_topics, size=len(words))
    for k in z:
        local[k] += 1
    beta_v = state.beta * len(state.vocab)
    phi_num = state.word_topic  # frozen
    for _ in range(sweeps):
        for i, w in enumerate(words):
            local[z[i]] -= 1
            p = (phi_num[w] + state.beta) / (state.topic_totals + beta_v) * (
                local + state.alpha
            )
            cum = np.cumsum(p)
            k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            z[i] = k
            local[k] += 1
    return (local + state.alpha) / (local.sum() + k_topics * state.alpha)


# --- neural half -----------------------------------------------------------


class TopicFusion(nn.Module):
    """GeLU(W [theta; h_doc] + b): joins statistical and neural features."""

    def __init__(self, n_topics: int, d_model: int, out_dim: int | None = None):
        super().__init__()
        self.fuse = nn.Linear(n_topics + d_model, out_dim or d_model)

    def forward(self, theta: torch.Tensor, h_doc: torch.Tensor) -> torch.Tensor:
        if theta.shape[-1] + h_doc.shape[-1] != self.fuse.in_features:
            raise ShapeError(
                f"fusion expects {self.fuse.in_features} inputs, got "
                f"{theta.shape[-1]} + {h_doc.shape[-1]}"
            )
        return torch.nn.functional.gelu(self.fuse(torch.cat([theta, h_doc], dim=-1)))


class AdaptivePool(nn.Module):
    """Attention-weighted token pooling conditioned on the fused doc vector."""

    def __init__(self, d_model: int, fused_dim: int):
        super().__init__()
        self.token_proj = nn.Linear(d_model, d_model)
        self.doc_proj = nn.Linear(fused_dim, d_model)
        self.scorer = nn.Parameter(torch.zeros(d_model))

    def forward(self, tokens: EncodedSequence, fused: torch.Tensor) -> torch.Tensor:
        h = tokens.hidden[tokens.mask]
        if h.shape[0] == 0:
            raise EmptySequence("cannot pool a fully masked sequence")
        scores = torch.tanh(self.token_proj(h) + self.doc_proj(fused)) @ self.scorer
        weights = torch.softmax(scores, dim=0)
        return weights @ h


class TopicProjector(nn.Module):
    """Two-layer ReLU projection into the topic prototype space."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        super().__init__()
        self.lin1 = nn.Linear(d_in, d_hidden)
        self.lin2 = nn.Linear(d_hidden, d_out)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        if t.shape[-1] != self.lin1.in_features:
            raise ShapeError(
                f"projector expects {self.lin1.in_features} inputs, got {t.shape[-1]}"
            )
        return self.lin2(torch.relu(self.lin1(t)))

    def lipschitz_bound(self) -> float:
        s1 = torch.linalg.matrix_norm(self.lin1.weight, ord=2)
        s2 = torch.linalg.matrix_norm(self.lin2.weight, ord=2)
        return float(s1 * s2)


def _unit(v: torch.Tensor) -> torch.Tensor:
    n = v.norm()
    if n.item() == 0.0:
        raise DegenerateEmbedding("zero-norm vector in cosine similarity")
    return v / n


def topic_classify(
    query: torch.Tensor, prototypes: dict[str, torch.Tensor], tau: float
) -> dict[str, float]:
    """Softmax over temperature-scaled cosine similarity to each prototype."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if not prototypes:
        raise ValueError("prototypes must be non-empty")
    names = sorted(prototypes)
    q = _unit(query)
    sims = torch.stack([_unit(prototypes[c]) @ q for c in names]) / tau
    probs = torch.softmax(sims, dim=0)
    return {c: float(p) for c, p in zip(names, probs)}


def compute_topic_prototype(
    projected: list[torch.Tensor],
    query: torch.Tensor | None,
    coherences: list[float] | None,
    coherence_lambda: float,
) -> torch.Tensor:
    """Coherence-biased attention average of projected topic vectors."""
    stacked = torch.stack(projected)
    scores = torch.zeros(len(projected), dtype=stacked.dtype)
    if query is not None:
        q = _unit(query)
        scores = scores + torch.stack([_unit(p) @ q for p in projected])
    if coherences is not None:
        scores = scores + coherence_lambda * torch.tensor(
            coherences, dtype=stacked.dtype
        )
    weights = torch.softmax(scores, dim=0)
    return weights @ stacked


# --- coherence and diversity metrics ---------------------------------------


@dataclass
class CooccurrenceCounts:
    """Sliding-window co-occurrence statistics from a reference corpus."""

    n_windows: int
    word_counts: Counter
    pair_counts: Counter  # key: frozenset({w1, w2})

    @classmethod
    def from_corpus(cls, docs, window: int = 10) -> "CooccurrenceCounts":
        word_counts: Counter = Counter()
        pair_counts: Counter = Counter()
        n_windows = 0
        for doc in docs:
            tokens = _doc_tokens(doc)
            if not tokens:
                continue
            spans = (
                [tokens]
                if len(tokens) <= window
                else [tokens[i : i + window] for i in range(len(tokens) - window + 1)]
            )
            for span in spans:
                n_windows += 1
                uniq = sorted(set(span))
                for w in uniq:
                    word_counts[w] += 1
                for i, w1 in enumerate(uniq):
                    for w2 in uniq[i + 1 :]:
                        pair_counts[frozenset((w1, w2))] += 1
        return cls(n_windows, word_counts, pair_counts)

    def p_word(self, w: str) -> float:
        return self.word_counts.get(w.lower(), 0) / self.n_windows

    def p_pair(self, w1: str, w2: str) -> float:
        key = frozenset((w1.lower(), w2.lower()))
        return self.pair_counts.get(key, 0) / self.n_windows


def npmi_pair(w1: str, w2: str, cooc: CooccurrenceCounts, eps: float = 1e-12) -> float:
    """Normalized pointwise mutual information of one word pair, in [-1, 1]."""
    p1 = cooc.p_word(w1) + eps
    p2 = cooc.p_word(w2) + eps
    p12 = cooc.p_pair(w1, w2) + eps
    return (np.log(p12) - np.log(p1 * p2)) / (-np.log(p12))


def npmi(
    topics: list[list[str]], cooc: CooccurrenceCounts, eps: float = 1e-12
) -> float:
    """Mean NPMI over all unordered top-word pairs, averaged across topics."""
    per_topic = []
    for words in topics:
        if len(words) < 2:
            raise NotEnoughWords("NPMI needs at least two words per topic")
        vals = [
            npmi_pair(words[i], words[j], cooc, eps)
            for i in range(len(words))
            for j in range(i + 1, len(words))
        ]
        per_topic.append(float(np.mean(vals)))
    return float(np.mean(per_topic))


def pmi_pair(w1: str, w2: str, cooc: CooccurrenceCounts, eps: float = 1e-12) -> float:
    p1 = cooc.p_word(w1) + eps
    p2 = cooc.p_word(w2) + eps
    p12 = cooc.p_pair(w1, w2) + eps
    return float(np.log(p12) - np.log(p1 * p2))


@dataclass
class DocFrequency:
    """Document-frequency counts for the UMass coherence score."""

    n_docs: int
    word_docs: Counter
    pair_docs: Counter

    @classmethod
    def from_corpus(cls, docs) -> "DocFrequency":
        word_docs: Counter = Counter()
        pair_docs: Counter = Counter()
        n_docs = 0
        for doc in docs:
            uniq = sorted(set(_doc_tokens(doc)))
            if not uniq:
                continue
            n_docs += 1
            for w in uniq:
                word_docs[w] += 1
            for i, w1 in enumerate(uniq):
                for w2 in uniq[i + 1 :]:
                    pair_docs[frozenset((w1, w2))] += 1
        return cls(n_docs, word_docs, pair_docs)

    def d_word(self, w: str) -> int:
        return self.word_docs.get(w.lower(), 0)

    def d_pair(self, w1: str, w2: str) -> int:
        return self.pair_docs.get(frozenset((w1.lower(), w2.lower())), 0)


def umass(topics: list[list[str]], freq: DocFrequency) -> float:
    """UMass coherence: sum of log((D(w_m, w_l)+1)/D(w_l)) over ranked pairs
    (l ranked above m), averaged across topics.  Pairs whose conditioning
    word never occurs are skipped and logged."""
    per_topic = []
    for words in topics:
        total = 0.0
        for m in range(1, len(words)):
            for l in range(m):
                d_l = freq.d_word(words[l])
                if d_l == 0:
                    logger.warning(
                        "umass: skipping pair (%s, %s), %r absent from corpus",
                        words[m], words[l], words[l],
                    )
                    continue
                total += float(np.log((freq.d_pair(words[m], words[l]) + 1) / d_l))
        per_topic.append(total)
    return float(np.mean(per_topic)) if per_topic else 0.0


def diversity_score(topics: list[list[str]]) -> float:
    """Fraction of unique words among all topics' top terms."""
    total = sum(len(t) for t in topics)
    if total == 0:
        raise NotEnoughWords("diversity needs at least one word")
    unique = len({w for t in topics for w in t})
    return unique / total


def coherence_energy(
    phi: np.ndarray,
    vocab: list[str],
    cooc: CooccurrenceCounts,
    top_m: int,
    eps: float = 1e-12,
) -> float:
    """Sum over topics of PMI-weighted products of top-word probabilities.

    This is the (negated) coherence half of the topic objective; it grades
    how much probability mass each topic puts on word pairs that actually
    co-occur.
    """
    total = 0.0
    for k in range(phi.shape[0]):
        top = np.argsort(-phi[k])[:top_m]
        for a in range(len(top)):
            for b in range(a + 1, len(top)):
                i, j = int(top[a]), int(top[b])
                total += pmi_pair(vocab[i], vocab[j], cooc, eps) * float(
                    phi[k, i] * phi[k, j]
                )
    return total
