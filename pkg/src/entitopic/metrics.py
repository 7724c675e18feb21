"""Span-level evaluation in the CoNLL convention: exact-match spans."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .data import bio_to_spans


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _prf(tp: int, fp: int, fn: int) -> PRF:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f1, tp, fp, fn)


def span_f1(
    gold: Iterable[Sequence[str]], pred: Iterable[Sequence[str]]
) -> PRF:
    """Micro precision/recall/F1 over exact (start, end, type) spans."""
    tp = fp = fn = 0
    for g_labels, p_labels in zip(gold, pred, strict=True):
        g = set(bio_to_spans(g_labels))
        p = set(bio_to_spans(p_labels))
        tp += len(g & p)
        fp += len(p - g)
        fn += len(g - p)
    return _prf(tp, fp, fn)


def span_f1_by_language(
    gold: Iterable[Sequence[str]],
    pred: Iterable[Sequence[str]],
    languages: Iterable[str],
) -> dict[str, PRF]:
    """Per-language micro P/R/F1; key ``macro`` holds the F1 average."""
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for g_labels, p_labels, lang in zip(gold, pred, languages, strict=True):
        g = set(bio_to_spans(g_labels))
        p = set(bio_to_spans(p_labels))
        c = counts[lang]
        c[0] += len(g & p)
        c[1] += len(p - g)
        c[2] += len(g - p)
    out = {lang: _prf(*c) for lang, c in counts.items()}
    if out:
        macro_f1 = sum(m.f1 for m in out.values()) / len(out)
        macro_p = sum(m.precision for m in out.values()) / len(out)
        macro_r = sum(m.recall for m in out.values()) / len(out)
        out["macro"] = PRF(macro_p, macro_r, macro_f1, 0, 0, 0)
    return out
