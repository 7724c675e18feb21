"""Data augmentation that never breaks BIO labels.

Four augmenters: lexicon-based entity substitution with a three-tier
weighting (synonym, paraphrase, context candidates), label-preserving
context perturbation of non-entity tokens, dictionary round-trip
back-translation with entity tokens protected, and a quality filter that
multiplies semantic and structural similarity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .data import TokenSequence, bio_to_spans
from .errors import DictionaryMissing

logger = logging.getLogger(__name__)

Lexicon = Mapping[str, list[tuple[str, str]]]  # surface -> [(candidate, type)]


@dataclass
class SubstitutionLexicons:
    synonym: Lexicon = field(default_factory=dict)
    paraphrase: Lexicon = field(default_factory=dict)
    context: Lexicon = field(default_factory=dict)


def entity_substitute(
    seq: TokenSequence,
    lexicons: SubstitutionLexicons,
    weights: tuple[float, float, float],
    rng: np.random.Generator,
) -> TokenSequence:
    """Replace entity surfaces with same-type candidates from the lexicons.

    The lexicon tier is drawn with probability proportional to its weight
    among tiers that actually offer a candidate; multi-token replacements
    are re-spanned as B-X I-X...  Entities without candidates stay put.
    """
    if any(w < 0 for w in weights):
        raise ValueError(f"weights must be non-negative, got {weights}")
    if not any(weights):
        raise ValueError("at least one substitution weight must be positive")
    if seq.labels is None:
        return seq
    spans = bio_to_spans(seq.labels)
    if not spans:
        return seq

    tiers = (lexicons.synonym, lexicons.paraphrase, lexicons.context)
    tokens = list(seq.tokens)
    labels = list(seq.labels)
    # replace back to front so earlier span offsets stay valid
    for start, end, etype in reversed(spans):
        surface = " ".join(tokens[start:end])
        options = []
        for tier, weight in zip(tiers, weights):
            if weight <= 0:
                continue
            cands = [c for c, t in tier.get(surface, ()) if t == etype]
            if cands:
                options.append((weight, cands))
        if not options:
            logger.debug("entity_substitute: no candidate for %r (%s)", surface, etype)
            continue
        probs = np.array([w for w, _ in options], dtype=np.float64)
        probs /= probs.sum()
        cands = options[int(rng.choice(len(options), p=probs))][1]
        replacement = cands[int(rng.integers(len(cands)))].split(" ")
        new_labels = [f"B-{etype}"] + [f"I-{etype}"] * (len(replacement) - 1)
        tokens[start:end] = replacement
        labels[start:end] = new_labels
    return replace(seq, tokens=tuple(tokens), labels=tuple(labels))


def perturb_context(
    seq: TokenSequence,
    strength: float,
    rng: np.random.Generator,
    filler_pool: list[str] | None = None,
) -> TokenSequence:
    """Rewrite at most ceil(strength * n) non-entity tokens.

    Entity spans and their labels pass through verbatim; replacements come
    from ``filler_pool`` or, by default, from the sequence's own O tokens,
    so the label sequence never changes.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    labels = seq.labels or tuple("O" for _ in seq.tokens)
    o_positions = [i for i, lab in enumerate(labels) if lab == "O"]
    if strength == 0.0 or not o_positions:
        return seq
    budget = math.ceil(strength * len(o_positions))
    pool = filler_pool or [seq.tokens[i] for i in o_positions]
    chosen = rng.permutation(len(o_positions))[:budget]
    tokens = list(seq.tokens)
    for idx in chosen:
        pos = o_positions[int(idx)]
        tokens[pos] = pool[int(rng.integers(len(pool)))]
    return replace(seq, tokens=tuple(tokens))


def _translate_token(
    token: str, table: Mapping[str, object], rng: np.random.Generator
) -> str:
    value = table.get(token, token)
    if isinstance(value, (list, tuple)):
        return str(value[int(rng.integers(len(value)))])
    return str(value)


def back_translate(
    seq: TokenSequence,
    forward: Mapping[str, object] | Callable[[str], str] | None,
    backward: Mapping[str, object] | Callable[[str], str] | None,
    rng: np.random.Generator,
) -> TokenSequence:
    """Round-trip each non-entity token through two translation tables.

    Tables are word maps (values may list several candidates) or arbitrary
    callables so a real translation system can slot in.  Tokens without an
    entry and all entity tokens pass through unchanged.
    """
    if forward is None or backward is None:
        raise DictionaryMissing("both translation directions are required")

    def apply(table, token: str) -> str:
        if callable(table):
            return table(token)
        return _translate_token(token, table, rng)

    labels = seq.labels or tuple("O" for _ in seq.tokens)
    tokens = tuple(
        tok if lab != "O" else apply(backward, apply(forward, tok))
        for tok, lab in zip(seq.tokens, labels)
    )
    return replace(seq, tokens=tokens)


def structural_similarity(a: tuple[str, ...], b: tuple[str, ...]) -> float:
    """1 - normalized token-level edit distance."""
    if not a and not b:
        return 1.0
    la, lb = len(a), len(b)
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return 1.0 - prev[lb] / max(la, lb)


def _bag_of_words_similarity(a: TokenSequence, b: TokenSequence) -> float:
    va, vb = set(a.tokens), set(b.tokens)
    if not va or not vb:
        return 0.0
    return len(va & vb) / math.sqrt(len(va) * len(vb))


def augmentation_quality(
    original: TokenSequence,
    augmented: TokenSequence,
    embed_fn: Callable[[TokenSequence], np.ndarray] | None = None,
) -> float:
    """Semantic similarity times structural similarity, in [0, 1]."""
    if embed_fn is None:
        semantic = _bag_of_words_similarity(original, augmented)
    else:
        va = np.asarray(embed_fn(original), dtype=np.float64)
        vb = np.asarray(embed_fn(augmented), dtype=np.float64)
        denom = np.linalg.norm(va) * np.linalg.norm(vb)
        semantic = float(va @ vb / denom) if denom > 0 else 0.0
    structural = structural_similarity(original.tokens, augmented.tokens)
    return max(0.0, semantic) * structural


def quality_filter(
    original: TokenSequence,
    augmented: TokenSequence,
    threshold: float,
    embed_fn: Callable[[TokenSequence], np.ndarray] | None = None,
) -> bool:
    """Accept the augmented sequence iff its quality exceeds the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return augmentation_quality(original, augmented, embed_fn) > threshold
