"""Token sequences, BIO tags, CoNLL files, and the dataset container.

A :class:`TokenSequence` is one sentence: tokens, a language id, optional
BIO labels, and the id of the document it belongs to.  Sentences sharing a
``doc_id`` form a :class:`Document`, which is the unit the topic branch
sees; the entity branch works per sentence.
"""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .errors import ConfigError


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    language: str
    labels: tuple[str, ...] | None = None
    doc_id: str = ""

    def __post_init__(self) -> None:
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.tokens)} tokens "
                f"(doc_id={self.doc_id!r})"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def entity_types(self) -> frozenset[str]:
        """Entity types mentioned in this sentence (empty if unlabeled)."""
        if self.labels is None:
            return frozenset()
        return frozenset(lab.split("-", 1)[1] for lab in self.labels if lab != "O")

    def restrict_types(self, keep: Iterable[str]) -> "TokenSequence":
        """Relabel entities outside ``keep`` as O (episode label-space restriction)."""
        if self.labels is None:
            return self
        keep = set(keep)
        labels = tuple(
            lab if lab == "O" or lab.split("-", 1)[1] in keep else "O"
            for lab in self.labels
        )
        return replace(self, labels=labels)


@dataclass(frozen=True)
class Document:
    doc_id: str
    language: str
    sentences: tuple[TokenSequence, ...]

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(tok for s in self.sentences for tok in s.tokens)


def bio_violations(labels: Iterable[str]) -> list[int]:
    """Positions where an I-X tag lacks a preceding B-X or I-X."""
    bad = []
    prev = "O"
    for i, lab in enumerate(labels):
        if lab.startswith("I-"):
            ent = lab[2:]
            if prev not in (f"B-{ent}", f"I-{ent}"):
                bad.append(i)
        prev = lab
    return bad


def validate_bio(labels: Iterable[str]) -> bool:
    return not bio_violations(labels)


def bio_to_spans(labels: Iterable[str]) -> list[tuple[int, int, str]]:
    """BIO labels to (start, end_exclusive, type) spans.

    An I-X continuing nothing (after O or a different type) opens a new span,
    the standard CoNLL repair.
    """
    spans: list[tuple[int, int, str]] = []
    start = None
    cur = None
    labels = list(labels)
    for i, lab in enumerate(labels):
        if lab == "O":
            if start is not None:
                spans.append((start, i, cur))
                start, cur = None, None
            continue
        prefix, ent = lab.split("-", 1)
        if prefix == "B" or cur != ent or start is None:
            if start is not None:
                spans.append((start, i, cur))
            start, cur = i, ent
    if start is not None:
        spans.append((start, len(labels), cur))
    return spans


def read_conll(path: str, language: str, doc_prefix: str | None = None) -> list[TokenSequence]:
    """Read a CoNLL column file: TOKEN<TAB>TAG, blank line between sentences.

    A comment line ``# doc <id>`` starts a new document; sentences without
    one get a per-sentence doc id.
    """
    prefix = doc_prefix if doc_prefix is not None else os.path.basename(path)
    sentences: list[TokenSequence] = []
    tokens: list[str] = []
    tags: list[str] = []
    doc_id: str | None = None
    auto = 0

    def flush() -> None:
        nonlocal tokens, tags, auto
        if tokens:
            did = doc_id if doc_id is not None else f"{prefix}:{auto}"
            if doc_id is None:
                auto += 1
            sentences.append(
                TokenSequence(tuple(tokens), language, tuple(tags), did)
            )
            tokens, tags = [], []

    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if line.startswith("# doc "):
                flush()
                doc_id = line[len("# doc "):].strip()
                continue
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected TOKEN<TAB>TAG, got {line!r}"
                )
            tokens.append(parts[0])
            tags.append(parts[1])
    flush()
    return sentences


def write_conll(path: str, sentences: Iterable[TokenSequence]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        last_doc = object()
        for seq in sentences:
            if seq.doc_id != last_doc:
                f.write(f"# doc {seq.doc_id}\n")
                last_doc = seq.doc_id
            for tok, tag in zip(seq.tokens, seq.labels or ["O"] * len(seq)):
                f.write(f"{tok}\t{tag}\n")
            f.write("\n")


def read_tsv_pairs(path: str) -> list[tuple[str, str]]:
    """Two-column TSV (left, right), used for parallel sentences."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            left, right = line.split("\t")[:2]
            out.append((left, right))
    return out


def read_dictionary(path: str) -> dict[str, str]:
    """Word-to-word dictionary TSV (source TAB target)."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            src, tgt = line.split("\t")[:2]
            out[src] = tgt
    return out


def read_lexicon(path: str) -> dict[str, list[tuple[str, str]]]:
    """Substitution lexicon TSV: surface TAB candidate TAB type."""
    out: dict[str, list[tuple[str, str]]] = defaultdict(list)
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            surface, cand, etype = line.split("\t")[:3]
            out[surface].append((cand, etype))
    return dict(out)


DATA_ROOT_ENV = "ENTITOPIC_DATA_ROOT"


@dataclass
class Dataset:
    """Immutable-after-load container indexing sentences by language and type."""

    sequences: list[TokenSequence] = field(default_factory=list)
    parallel: dict[tuple[str, str], list[tuple[str, str]]] = field(default_factory=dict)
    dictionaries: dict[tuple[str, str], dict[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._reindex()

    def _reindex(self) -> None:
        self.by_language: dict[str, list[TokenSequence]] = defaultdict(list)
        self.by_lang_type: dict[str, dict[str, list[TokenSequence]]] = defaultdict(
            lambda: defaultdict(list)
        )
        self._documents: dict[str, list[TokenSequence]] = defaultdict(list)
        for seq in self.sequences:
            self.by_language[seq.language].append(seq)
            self._documents[seq.doc_id].append(seq)
            for etype in seq.entity_types:
                self.by_lang_type[seq.language][etype].append(seq)

    @property
    def languages(self) -> list[str]:
        return sorted(self.by_language)

    def document(self, doc_id: str) -> Document:
        sents = self._documents.get(doc_id)
        if not sents:
            raise KeyError(f"unknown doc_id {doc_id!r}")
        return Document(doc_id, sents[0].language, tuple(sents))

    def documents(self, language: str | None = None) -> Iterator[Document]:
        for doc_id, sents in self._documents.items():
            if language is None or sents[0].language == language:
                yield Document(doc_id, sents[0].language, tuple(sents))

    def type_frequencies(self, language: str | None = None) -> dict[str, int]:
        freq: dict[str, int] = defaultdict(int)
        for seq in self.sequences:
            if language is not None and seq.language != language:
                continue
            for etype in seq.entity_types:
                freq[etype] += 1
        return dict(freq)

    def vocabulary_size(self, language: str) -> int:
        return len({t for s in self.by_language.get(language, []) for t in s.tokens})

    @classmethod
    def from_manifest(cls, manifest_path: str, data_root: str | None = None) -> "Dataset":
        """Load from a manifest JSON listing per-language CoNLL files.

        Relative paths resolve against ``data_root``, the ``ENTITOPIC_DATA_ROOT``
        environment variable, or the manifest's directory, in that order.
        """
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        root = data_root or os.environ.get(DATA_ROOT_ENV) or os.path.dirname(
            os.path.abspath(manifest_path)
        )

        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.join(root, p)

        if "languages" not in manifest or not isinstance(manifest["languages"], dict):
            raise ConfigError("manifest.languages: mapping language -> conll path expected")

        sequences: list[TokenSequence] = []
        for lang, path in manifest["languages"].items():
            sequences.extend(read_conll(resolve(path), lang))

        parallel = {}
        for key, path in manifest.get("parallel", {}).items():
            l1, l2 = key.split("-", 1)
            parallel[(l1, l2)] = read_tsv_pairs(resolve(path))

        dictionaries = {}
        for key, path in manifest.get("dictionaries", {}).items():
            l1, l2 = key.split("-", 1)
            dictionaries[(l1, l2)] = read_dictionary(resolve(path))

        return cls(sequences=sequences, parallel=parallel, dictionaries=dictionaries)
