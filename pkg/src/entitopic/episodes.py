"""Episodic sampling and dataset-level feature machinery.

Episodes are N-way K-shot: N entity types drawn from a temperature-scaled
frequency softmax, a language pair drawn from a similarity softmax, then
K_s support sentences (first language) and K_q query sentences (second
language) per type with document-level support/query disjointness.  Labels
outside the sampled N types are rewritten to O for the episode.

Also here: per-language feature normalization with an inverse transform,
sparse cross-lingual alignment matrices (lasso, coordinate descent), and
the vocabulary-scaled dynamic batch size.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, TokenSequence
from .errors import InsufficientData, NotEnoughTypes, NotFitted

logger = logging.getLogger(__name__)


@dataclass
class Episode:
    support: list[TokenSequence]
    query: list[TokenSequence]
    entity_types: list[str]
    languages: list[str]  # [support language, query language]

    def check_invariants(self, k_support: int, k_query: int) -> None:
        support_docs = {s.doc_id for s in self.support}
        query_docs = {q.doc_id for q in self.query}
        assert not support_docs & query_docs, "support and query share documents"
        for etype in self.entity_types:
            in_support = sum(1 for s in self.support if etype in s.entity_types)
            in_query = sum(1 for q in self.query if etype in q.entity_types)
            assert in_support >= k_support, f"{etype}: {in_support} < {k_support} support"
            assert in_query >= k_query, f"{etype}: {in_query} < {k_query} query"

    def to_json(self) -> str:
        def enc(seq: TokenSequence) -> dict:
            return {
                "tokens": list(seq.tokens),
                "labels": list(seq.labels) if seq.labels else None,
                "language": seq.language,
                "doc_id": seq.doc_id,
            }

        return json.dumps(
            {
                "entity_types": self.entity_types,
                "languages": self.languages,
                "support": [enc(s) for s in self.support],
                "query": [enc(q) for q in self.query],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Episode":
        data = json.loads(text)

        def dec(d: dict) -> TokenSequence:
            return TokenSequence(
                tuple(d["tokens"]),
                d["language"],
                tuple(d["labels"]) if d["labels"] else None,
                d["doc_id"],
            )

        return cls(
            support=[dec(s) for s in data["support"]],
            query=[dec(q) for q in data["query"]],
            entity_types=data["entity_types"],
            languages=data["languages"],
        )


@dataclass
class LanguageStats:
    """Per-language feature mean/std plus vocabulary sizes and alignments."""

    eps: float = 1e-8
    mean: dict[str, np.ndarray] = field(default_factory=dict)
    std: dict[str, np.ndarray] = field(default_factory=dict)
    vocab_size: dict[str, int] = field(default_factory=dict)
    alignment: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def fit(
        self,
        features_by_language: dict[str, np.ndarray],
        vocab_sizes: dict[str, int] | None = None,
    ) -> "LanguageStats":
        for lang, feats in features_by_language.items():
            self.mean[lang] = feats.mean(axis=0)
            std = feats.std(axis=0)
            self.std[lang] = np.maximum(std, self.eps)
        if vocab_sizes:
            self.vocab_size.update(vocab_sizes)
        return self

    def _require(self, language: str) -> None:
        if language not in self.mean:
            raise NotFitted(f"statistics not fitted for language {language!r}")

    def normalize(self, features: np.ndarray, language: str) -> np.ndarray:
        self._require(language)
        return (features - self.mean[language]) / self.std[language]

    def inverse(self, normalized: np.ndarray, language: str) -> np.ndarray:
        self._require(language)
        return normalized * self.std[language] + self.mean[language]


def normalize_features(
    features: np.ndarray, stats: LanguageStats, language: str
) -> np.ndarray:
    return stats.normalize(features, language)


def _soft_threshold(x: float, thresh: float) -> float:
    if x > thresh:
        return x - thresh
    if x < -thresh:
        return x + thresh
    return 0.0


def alignment_objective(
    x1: np.ndarray, x2: np.ndarray, a: np.ndarray, lam: float
) -> float:
    return float(np.sum((x1 @ a - x2) ** 2) + lam * np.abs(a).sum())


def fit_alignment(
    x1: np.ndarray,
    x2: np.ndarray,
    lam: float,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> np.ndarray:
    """Minimize ||X1 A - X2||^2 + lam * ||A||_1 over the matrix A.

    lam = 0 reduces to least squares (pseudo-inverse on rank-deficient
    inputs, logged); lam > 0 runs column-wise coordinate descent with soft
    thresholding.
    """
    if x1.shape[0] != x2.shape[0]:
        raise ValueError(f"row counts differ: {x1.shape[0]} vs {x2.shape[0]}")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if lam == 0:
        rank = np.linalg.matrix_rank(x1)
        if rank < x1.shape[1]:
            logger.warning(
                "fit_alignment: rank-deficient features (rank %d < %d), "
                "using pseudo-inverse", rank, x1.shape[1],
            )
            return np.linalg.pinv(x1) @ x2
        return np.linalg.lstsq(x1, x2, rcond=None)[0]

    gram = x1.T @ x1
    corr = x1.T @ x2
    d_in, d_out = x1.shape[1], x2.shape[1]
    a = np.zeros((d_in, d_out))
    diag = np.diag(gram)
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(d_in):
            if diag[j] == 0.0:
                continue
            # residual correlation excluding coordinate j
            rho = corr[j] - gram[j] @ a + diag[j] * a[j]
            new = np.array([_soft_threshold(r, lam / 2.0) / diag[j] for r in rho])
            max_delta = max(max_delta, float(np.abs(new - a[j]).max()))
            a[j] = new
        if max_delta < tol:
            break
    return a


def sample_entity_types(
    frequencies: dict[str, float],
    n_way: int,
    temperature: float,
    rng: np.random.Generator,
) -> list[str]:
    """N distinct types by sequential renormalized softmax sampling.

    Inclusion probability follows exp(f / temperature) at each draw; drawn
    types are removed and the remainder renormalized.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if len(frequencies) < n_way:
        raise NotEnoughTypes(
            f"need {n_way} entity types, only {len(frequencies)} available"
        )
    remaining = sorted(frequencies)
    chosen: list[str] = []
    for _ in range(n_way):
        logits = np.array([frequencies[t] / temperature for t in remaining])
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        idx = int(rng.choice(len(remaining), p=probs))
        chosen.append(remaining.pop(idx))
    return chosen


def default_similarity(
    languages: list[str], self_similarity: float = 1.0, cross_similarity: float = 0.5
) -> np.ndarray:
    m = len(languages)
    s = np.full((m, m), cross_similarity)
    np.fill_diagonal(s, self_similarity)
    return s


def sample_language_pair(
    similarity: np.ndarray,
    gamma: float,
    rng: np.random.Generator,
    languages: list[str],
) -> tuple[str, str]:
    """One ordered language pair from the similarity softmax."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not np.isfinite(similarity).all():
        raise ValueError("similarity matrix must be finite")
    m = len(languages)
    if similarity.shape != (m, m):
        raise ValueError(
            f"similarity shape {similarity.shape} does not match {m} languages"
        )
    if m == 1:
        return languages[0], languages[0]
    logits = (similarity / gamma).reshape(-1)
    logits = logits - logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    flat = int(rng.choice(m * m, p=probs))
    return languages[flat // m], languages[flat % m]


def construct_episode(
    dataset: Dataset,
    n_way: int,
    k_support: int,
    k_query: int,
    languages: list[str],
    type_temperature: float,
    pair_temperature: float,
    rng: np.random.Generator,
    similarity: np.ndarray | None = None,
    language_pair: tuple[str, str] | None = None,
) -> Episode:
    """Build one N-way K-shot episode from the dataset.

    Support comes from the first sampled language, query from the second;
    a document never contributes to both sides.  Entities outside the
    sampled type set are relabeled O.
    """
    if similarity is None:
        similarity = default_similarity(languages)
    if language_pair is None:
        l_support, l_query = sample_language_pair(
            similarity, pair_temperature, rng, languages
        )
    else:
        l_support, l_query = language_pair

    support_index = dataset.by_lang_type.get(l_support, {})
    query_index = dataset.by_lang_type.get(l_query, {})
    same = l_support == l_query
    eligible = {
        t: c
        for t, c in dataset.type_frequencies(l_support).items()
        if len(support_index.get(t, ())) >= k_support + (k_query if same else 0)
        and (k_query == 0 or len(query_index.get(t, ())) >= k_query)
    }
    types = sample_entity_types(eligible, n_way, type_temperature, rng)

    support: list[TokenSequence] = []
    query: list[TokenSequence] = []
    support_docs: set[str] = set()
    query_docs: set[str] = set()
    taken: set[int] = set()

    def draw(pool, k, own_docs, other_docs, etype, side):
        picked = []
        order = rng.permutation(len(pool))
        for idx in order:
            seq = pool[idx]
            if id(seq) in taken or seq.doc_id in other_docs:
                continue
            picked.append(seq)
            taken.add(id(seq))
            own_docs.add(seq.doc_id)
            if len(picked) == k:
                return picked
        raise InsufficientData(
            f"cannot fill {side} for type {etype!r}: "
            f"need {k}, found {len(picked)} usable sequences"
        )

    for etype in types:
        support.extend(
            draw(support_index[etype], k_support, support_docs, query_docs, etype, "support")
        )
        if k_query > 0:
            query.extend(
                draw(query_index[etype], k_query, query_docs, support_docs, etype, "query")
            )

    support = [s.restrict_types(types) for s in support]
    query = [q.restrict_types(types) for q in query]
    return Episode(support, query, types, [l_support, l_query])


def dynamic_batch_size(vocab_size: int, scale_c: float, batch_max: int) -> int:
    """min(batch_max, floor(c * sqrt(|V|))), clamped to at least 1."""
    if scale_c <= 0:
        raise ValueError(f"scale constant must be positive, got {scale_c}")
    return max(1, min(batch_max, int(scale_c * np.sqrt(max(vocab_size, 0)))))
