"""Single-file checkpoints: model weights, bank, topic states, detector.

The file is a torch-serialized dict carrying a format version, the full
config (plus its hash), per-component state dicts, the prototype bank, the
per-language topic model counts, normalization statistics, the language
detector, and whatever resume state the trainer wants to stash.
"""

from __future__ import annotations

import numpy as np
import torch

from .config import Config, config_from_dict
from .entity import BankEntry
from .errors import CheckpointError
from .inference import LanguageDetector
from .model import JointModel
from .topic import TopicModelState

FORMAT_VERSION = 1


def _bank_state(model: JointModel) -> dict:
    return {
        "momentum": model.bank.momentum,
        "version": model.bank.version,
        "entries": {
            t: (e.prototype.numpy(), e.count, e.variance.numpy())
            for t, e in model.bank.entries.items()
        },
    }


def _lda_state(state: TopicModelState) -> dict:
    return {
        "language": state.language,
        "n_topics": state.n_topics,
        "alpha": state.alpha,
        "beta": state.beta,
        "vocab": state.vocab,
        "word_topic": state.word_topic,
        "doc_topic": state.doc_topic,
        "topic_totals": state.topic_totals,
        "assignments": [a for a in state.assignments],
        "doc_words": [w for w in state.doc_words],
    }


def save_checkpoint(
    model: JointModel,
    path: str,
    detector: LanguageDetector | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "config_hash": model.config.content_hash(),
        "seed": model.seed,
        "modules": {
            name: module.state_dict() for name, module in model.torch_modules().items()
        },
        "bank": _bank_state(model),
        "lda": {lang: _lda_state(s) for lang, s in model.lda.items()},
        "stats": {
            "mean": model.stats.mean,
            "std": model.stats.std,
            "vocab_size": model.stats.vocab_size,
            "alignment": model.stats.alignment,
        },
        "detector": detector.state_dict() if detector is not None else None,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str) -> tuple[JointModel, LanguageDetector | None, dict]:
    try:
        payload = torch.load(path, weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:  # corrupt or wrong format
        raise CheckpointError(f"cannot read checkpoint {path!r}: {exc}") from exc
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {payload.get('format_version')} unsupported"
        )
    config: Config = config_from_dict(
        {k: v for k, v in payload["config"].items()}
    )
    model = JointModel(config, seed=payload["seed"])
    for name, module in model.torch_modules().items():
        if name in payload["modules"]:
            module.load_state_dict(payload["modules"][name])

    bank = payload["bank"]
    model.bank.momentum = bank["momentum"]
    model.bank.version = bank["version"]
    model.bank.entries = {
        t: BankEntry(
            torch.from_numpy(np.asarray(p)).to(model.prototype.w_attention.dtype),
            int(n),
            torch.from_numpy(np.asarray(v)).to(model.prototype.w_attention.dtype),
        )
        for t, (p, n, v) in bank["entries"].items()
    }
    model.bank.attention = model.prototype.w_attention

    for lang, s in payload["lda"].items():
        model.lda[lang] = TopicModelState(
            language=s["language"],
            n_topics=s["n_topics"],
            alpha=s["alpha"],
            beta=s["beta"],
            vocab=list(s["vocab"]),
            word_topic=s["word_topic"],
            doc_topic=s["doc_topic"],
            topic_totals=s["topic_totals"],
            assignments=[np.asarray(a) for a in s["assignments"]],
            doc_words=[np.asarray(w) for w in s["doc_words"]],
        )

    stats = payload["stats"]
    model.stats.mean = stats["mean"]
    model.stats.std = stats["std"]
    model.stats.vocab_size = stats["vocab_size"]
    model.stats.alignment = stats["alignment"]

    detector = (
        LanguageDetector.from_state_dict(payload["detector"])
        if payload["detector"] is not None
        else None
    )
    return model, detector, payload["extra"]
