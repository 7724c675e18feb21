"""Synthetic corpora with controllable difficulty.

Two generators:

* a separable tagging task (one language, type-cued mentions) used for the
  training smoke test, and
* a two-language disambiguation suite where three mention kinds stress three
  different components:

  - plain mentions use recurring per-language name pools with an adjacent
    type cue word (easy for everyone),
  - topic-ambiguous mentions are one-off surfaces from a suffix family whose
    type depends on the document topic; the topic is only visible in the
    other sentence of the document, so resolving them needs document-level
    topic context,
  - language-conflict mentions are one-off surfaces from suffix families
    whose type flips between the two languages, inside otherwise
    language-neutral sentences, so resolving them needs a
    language-conditioned transform.

One-off surfaces never repeat, so episode supports cannot be memorized:
the suffix (seen through character-trigram embeddings of sub-threshold
vocabulary words) is the only generalizable signal.  Both "languages" are
synthetic (disjoint syllable inventories); every document is an entity
sentence plus a topic-carrier sentence.  Word lists are derived
deterministically from the seed.
"""

from __future__ import annotations

import numpy as np

from .config import Config, config_from_dict
from .data import Dataset, TokenSequence

SUITE_LANGUAGES = ("la", "lb")
SUITE_TYPES = ("PER", "ORG", "LOC", "PROD", "MISC")

_SYLLABLES = {
    "la": ["ka", "ro", "mi", "ta", "lu", "ve", "so", "na", "pi", "del"],
    "lb": ["zun", "bet", "ske", "vor", "dal", "gri", "mol", "hus", "fen", "wix"],
    "shared": ["om", "ix", "ul", "ar", "ek", "un", "os", "it", "ez", "ob"],
}

# language-conflict suffix families: suffix -> (type in la, type in lb);
# a derangement, so no family keeps its type across languages
CONFLICT_FAMILIES = {
    "arek": ("PER", "ORG"),
    "obur": ("ORG", "LOC"),
    "ulin": ("LOC", "MISC"),
    "ezod": ("MISC", "PROD"),
    "itar": ("PROD", "PER"),
}

# topic-ambiguous suffix families: suffix -> type per document topic
AMBIGUOUS_FAMILIES = {
    "unax": {0: "ORG", 1: "LOC"},
    "osek": {0: "PER", 1: "PROD"},
}


def _make_words(
    rng: np.random.Generator,
    syllables: list[str],
    count: int,
    min_syll: int = 2,
    max_syll: int = 3,
    capitalize: bool = False,
) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < count:
        n = int(rng.integers(min_syll, max_syll + 1))
        word = "".join(rng.choice(syllables) for _ in range(n))
        if capitalize:
            word = word.capitalize()
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


class _SuiteVocab:
    """Deterministic word pools for the disambiguation suite."""

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        self.topic_words = {
            lang: {
                t: _make_words(rng, _SYLLABLES[lang], 14)
                for t in (0, 1)
            }
            for lang in SUITE_LANGUAGES
        }
        self.neutral = _make_words(rng, _SYLLABLES["shared"], 10)
        self.names = {
            lang: {
                etype: _make_words(rng, _SYLLABLES[lang], 10, capitalize=True)
                for etype in SUITE_TYPES
            }
            for lang in SUITE_LANGUAGES
        }
        self.cues = {
            lang: {
                etype: _make_words(rng, _SYLLABLES[lang], 1)[0]
                for etype in SUITE_TYPES
            }
            for lang in SUITE_LANGUAGES
        }
        self.seen_surfaces: set[str] = set()

    def fresh_surface(self, suffix: str, rng: np.random.Generator) -> str:
        """A one-off capitalized surface ending in the family suffix."""
        while True:
            n = int(rng.integers(1, 3))
            stem = "".join(rng.choice(_SYLLABLES["shared"]) for _ in range(n))
            word = (stem + suffix).capitalize()
            if word not in self.seen_surfaces:
                self.seen_surfaces.add(word)
                return word

    def translation_table(self) -> dict[str, str]:
        """Word map la -> lb built from pool correspondences."""
        table: dict[str, str] = {}
        for t in (0, 1):
            for a, b in zip(self.topic_words["la"][t], self.topic_words["lb"][t]):
                table[a] = b
        for etype in SUITE_TYPES:
            for a, b in zip(self.names["la"][etype], self.names["lb"][etype]):
                table[a] = b
            table[self.cues["la"][etype]] = self.cues["lb"][etype]
        return table


def mention_kind(surface: str) -> str:
    low = surface.lower()
    if any(low.endswith(sfx) for sfx in CONFLICT_FAMILIES):
        return "conflict"
    if any(low.endswith(sfx) for sfx in AMBIGUOUS_FAMILIES):
        return "topic-amb"
    return "plain"


def _filler_sentence(
    vocab: _SuiteVocab, lang: str, topic: int, rng: np.random.Generator, doc_id: str
) -> TokenSequence:
    pool = vocab.topic_words[lang][topic]
    n = int(rng.integers(10, 15))
    tokens = tuple(pool[int(rng.integers(len(pool)))] for _ in range(n))
    return TokenSequence(tokens, lang, tuple("O" for _ in tokens), doc_id)


def _neutral_fill(vocab: _SuiteVocab, rng: np.random.Generator, n: int) -> list[str]:
    return [vocab.neutral[int(rng.integers(len(vocab.neutral)))] for _ in range(n)]


def _entity_sentence(
    vocab: _SuiteVocab,
    lang: str,
    topic: int,
    rng: np.random.Generator,
    doc_id: str,
    conflict_share: float,
    topic_share: float,
) -> TokenSequence:
    tokens: list[str] = []
    labels: list[str] = []

    def emit_o(words: list[str]) -> None:
        tokens.extend(words)
        labels.extend("O" for _ in words)

    def emit_entity(words: list[str], etype: str) -> None:
        tokens.extend(words)
        labels.append(f"B-{etype}")
        labels.extend(f"I-{etype}" for _ in words[1:])

    draw = rng.random()
    if draw < conflict_share:
        # one-off suffix-family surface in a language-neutral sentence;
        # the type flips with the language
        families = sorted(CONFLICT_FAMILIES)
        suffix = families[int(rng.integers(len(families)))]
        surface = vocab.fresh_surface(suffix, rng)
        etype = CONFLICT_FAMILIES[suffix][SUITE_LANGUAGES.index(lang)]
        emit_o(_neutral_fill(vocab, rng, 2))
        emit_entity([surface], etype)
        emit_o(_neutral_fill(vocab, rng, 3))
    elif draw < conflict_share + topic_share:
        # one-off suffix-family surface; the type follows the document topic
        families = sorted(AMBIGUOUS_FAMILIES)
        suffix = families[int(rng.integers(len(families)))]
        surface = vocab.fresh_surface(suffix, rng)
        etype = AMBIGUOUS_FAMILIES[suffix][topic]
        emit_o(_neutral_fill(vocab, rng, 2))
        emit_entity([surface], etype)
        emit_o(_neutral_fill(vocab, rng, 3))
    else:
        # plain cued mention, sometimes two of them
        n_mentions = 1 + int(rng.random() < 0.3)
        emit_o(_neutral_fill(vocab, rng, 1))
        for _ in range(n_mentions):
            etype = SUITE_TYPES[int(rng.integers(len(SUITE_TYPES)))]
            names = vocab.names[lang][etype]
            name = names[int(rng.integers(len(names)))]
            second = names[int(rng.integers(len(names)))]
            emit_o([vocab.cues[lang][etype]])
            if rng.random() < 0.25:
                emit_entity([name, second], etype)
            else:
                emit_entity([name], etype)
            emit_o(_neutral_fill(vocab, rng, 2))
    return TokenSequence(tuple(tokens), lang, tuple(labels), doc_id)


def make_disambiguation_dataset(
    seed: int,
    docs_per_language: int = 110,
    vocab_seed: int = 7,
    conflict_share: float = 0.42,
    topic_share: float = 0.30,
    doc_prefix: str = "train",
    n_parallel: int = 40,
) -> Dataset:
    """Two-sentence documents (entity + topic carrier) in two synthetic languages."""
    vocab = _SuiteVocab(vocab_seed)
    rng = np.random.default_rng(seed)
    sequences: list[TokenSequence] = []
    for lang in SUITE_LANGUAGES:
        for d in range(docs_per_language):
            doc_id = f"{doc_prefix}:{lang}:{d}"
            topic = int(rng.integers(2))
            sequences.append(
                _entity_sentence(
                    vocab, lang, topic, rng, doc_id, conflict_share, topic_share
                )
            )
            sequences.append(_filler_sentence(vocab, lang, topic, rng, doc_id))

    table = vocab.translation_table()
    parallel = []
    for i in range(n_parallel):
        topic = int(rng.integers(2))
        left = _filler_sentence(vocab, "la", topic, rng, f"par:{i}")
        right = tuple(table.get(t, t) for t in left.tokens)
        parallel.append((" ".join(left.tokens), " ".join(right)))
    reverse = {v: k for k, v in table.items()}
    return Dataset(
        sequences=sequences,
        parallel={("la", "lb"): parallel},
        dictionaries={("la", "lb"): table, ("lb", "la"): reverse},
    )


def make_disambiguation_split(
    seed: int, train_docs: int = 110, val_docs: int = 80
) -> tuple[Dataset, Dataset]:
    train = make_disambiguation_dataset(seed, train_docs, doc_prefix=f"tr{seed}")
    val = make_disambiguation_dataset(seed + 1000, val_docs, doc_prefix=f"va{seed}")
    return train, val


def suite_config(**overrides) -> Config:
    """Desk-scale config tuned for the disambiguation suite."""
    base = {
        "languages": list(SUITE_LANGUAGES),
        "encoder": {
            "d_model": 32,
            "n_layers": 1,
            "n_heads": 4,
            "ffn_dim": 64,
            "adapter_rank": 8,
            "contrast_tau": 0.1,
            "diversity_margin": 6.0,
            "vocab_min_count": 2,
        },
        "entity": {
            "entity_types": list(SUITE_TYPES),
            "adapter_rank": 2,
            "n_heads": 2,
        },
        "topic": {
            "n_topics": 2,
            "alpha": 0.5,
            "beta": 0.01,
            "train_sweeps": 60,
            "infer_sweeps": 15,
            "top_m": 8,
        },
        "bridge": {"n_heads": 2, "residual_alpha_init": 0.5},
        "episodes": {
            "n_way": 5,
            "k_support": 5,
            "k_query": 2,
            "pair_self_similarity": 1.0,
            "pair_cross_similarity": 0.2,
            "pair_temperature": 0.3,
        },
        "loss": {"w_topic": 0.2, "w_align": 0.05, "w_contrast": 0.2, "w_reg": 0.005},
        "training": {
            "epochs": 10,
            "episodes_per_epoch": 40,
            "val_episodes": 20,
            "patience": 6,
            "warmup_steps": 10,
            "lr_encoder": 5e-3,
            "lr_entity": 8e-3,
            "lr_topic": 5e-3,
            "lr_bridge": 8e-3,
            "parallel_pairs_per_step": 2,
        },
    }
    data = _deep_update(base, overrides)
    return config_from_dict(data)


def _deep_update(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


# --- separable smoke task ----------------------------------------------------


def make_separable_dataset(
    seed: int,
    language: str = "en",
    n_docs: int = 160,
    types: tuple[str, ...] = ("PER", "ORG", "LOC", "MISC"),
    doc_prefix: str = "sep",
) -> Dataset:
    """One-language task where an adjacent cue word gives the type away."""
    rng = np.random.default_rng(seed)
    word_rng = np.random.default_rng(99)
    fillers = _make_words(word_rng, _SYLLABLES["la"], 20)
    cues = {t: _make_words(word_rng, _SYLLABLES["la"], 1)[0] for t in types}
    names = {
        t: _make_words(word_rng, _SYLLABLES["lb"], 12, capitalize=True) for t in types
    }
    sequences = []
    for d in range(n_docs):
        doc_id = f"{doc_prefix}:{d}"
        tokens: list[str] = []
        labels: list[str] = []
        for _ in range(int(rng.integers(1, 3))):
            for w in rng.choice(fillers, size=2):
                tokens.append(str(w))
                labels.append("O")
            etype = types[int(rng.integers(len(types)))]
            name = names[etype][int(rng.integers(len(names[etype])))]
            tokens.append(cues[etype])
            labels.append("O")
            tokens.append(name)
            labels.append(f"B-{etype}")
            if rng.random() < 0.3:
                tokens.append(names[etype][int(rng.integers(len(names[etype])))])
                labels.append(f"I-{etype}")
        tokens.append(str(rng.choice(fillers)))
        labels.append("O")
        sequences.append(TokenSequence(tuple(tokens), language, tuple(labels), doc_id))
    return Dataset(sequences=sequences)


def smoke_config(**overrides) -> Config:
    """Small single-language config that trains in well under a minute."""
    base = {
        "languages": ["en"],
        "encoder": {
            "d_model": 32, "n_layers": 1, "n_heads": 2, "ffn_dim": 64,
            "diversity_margin": 6.0,
        },
        "entity": {"n_heads": 2},
        "topic": {"n_topics": 2, "train_sweeps": 30, "infer_sweeps": 10, "top_m": 5},
        "bridge": {"enabled": False},
        "episodes": {"n_way": 4, "k_support": 4, "k_query": 2},
        "training": {
            "epochs": 5,
            "episodes_per_epoch": 40,
            "val_episodes": 12,
            "patience": 5,
            "warmup_steps": 10,
            "lr_encoder": 5e-3,
            "lr_entity": 8e-3,
            "lr_topic": 5e-3,
            "lr_bridge": 8e-3,
        },
    }
    return config_from_dict(_deep_update(base, overrides))
