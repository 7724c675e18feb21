"""The five training-loss components and their weighted combination.

Everything differentiable is written against torch tensors so gradients
flow to the model; the topic-coherence half is a function of the sampled
topic model's counts and enters as a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .encoder import contrastive_align_loss
from .entity import CrfParams, crf_nll
from .errors import InvalidWeight, NotADistribution, ShapeError
from .util import check_distribution, entropy

LOSS_NAMES = ("ner", "topic", "align", "contrast", "reg")


@dataclass
class LossBreakdown:
    ner: torch.Tensor
    topic: torch.Tensor
    align: torch.Tensor
    contrast: torch.Tensor
    reg: torch.Tensor
    weights: dict[str, float]
    total: torch.Tensor

    def __post_init__(self) -> None:
        parts = [self.ner, self.topic, self.align, self.contrast, self.reg]
        for name, part in zip(LOSS_NAMES, parts):
            if not torch.isfinite(part).all():
                raise ValueError(f"loss component {name!r} is not finite")
        expected = sum(
            self.weights[name] * part.detach() for name, part in zip(LOSS_NAMES, parts)
        )
        if abs(float(expected - self.total.detach())) > 1e-9 * max(
            1.0, abs(float(expected))
        ):
            raise ValueError("total does not equal the weighted component sum")

    def to_dict(self) -> dict:
        return {
            "ner": float(self.ner.detach()),
            "topic": float(self.topic.detach()),
            "align": float(self.align.detach()),
            "contrast": float(self.contrast.detach()),
            "reg": float(self.reg.detach()),
            "weights": dict(self.weights),
            "total": float(self.total.detach()),
        }


def ner_loss(
    token_log_probs: torch.Tensor,
    emissions: torch.Tensor,
    gold: list[str] | list[int],
    crf: CrfParams,
    lambda_crf: float,
    crf_term: str = "nll",
) -> torch.Tensor:
    """Token-level cross entropy plus the sequence-level CRF term.

    ``crf_term="nll"`` adds lambda_crf times the CRF negative log-likelihood;
    ``"log_prob"`` adds +lambda_crf * log P(Y|X) instead, which rewards an
    unlikely gold path when minimized.
    """
    if token_log_probs.shape != emissions.shape:
        raise ShapeError(
            f"log-prob shape {tuple(token_log_probs.shape)} does not match "
            f"emissions {tuple(emissions.shape)}"
        )
    gold_ids = torch.tensor(
        [crf.tag_index[t] if isinstance(t, str) else int(t) for t in gold]
    )
    ce = -token_log_probs[torch.arange(len(gold_ids)), gold_ids].sum()
    if lambda_crf == 0.0:
        return ce
    nll = crf_nll(emissions, gold, crf)
    if crf_term == "nll":
        return ce + lambda_crf * nll
    if crf_term == "log_prob":
        return ce - lambda_crf * nll
    raise ValueError(f"unknown crf_term {crf_term!r}")


def topic_loss(
    topic_word_dists: np.ndarray,
    pmi_table: np.ndarray,
    prototypes: torch.Tensor,
    lambda_div: float,
) -> torch.Tensor:
    """Negative PMI-weighted coherence plus a prototype orthogonality penalty.

    The coherence half is a function of the sampled topic-word counts and
    carries no gradient; the diversity half is squared Frobenius distance
    of P P^T from the identity and trains the prototypes.
    """
    k, v = topic_word_dists.shape
    if pmi_table.shape != (v, v):
        raise ShapeError(
            f"PMI table {pmi_table.shape} does not match vocabulary size {v}"
        )
    row_sums = topic_word_dists.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise NotADistribution("topic-word rows must sum to 1")
    coherence = -float(
        np.einsum("ki,ij,kj->", topic_word_dists, pmi_table, topic_word_dists)
    )
    if prototypes.ndim != 2:
        raise ShapeError("prototypes must be a [C x d] matrix")
    eye = torch.eye(prototypes.shape[0], dtype=prototypes.dtype)
    penalty = torch.linalg.matrix_norm(
        prototypes @ prototypes.T - eye, ord="fro"
    ) ** 2
    return coherence + lambda_div * penalty


def _whiten(h: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    mean = h.mean(dim=0, keepdim=True)
    std = h.std(dim=0, unbiased=False, keepdim=True).clamp_min(eps)
    return (h - mean) / std


def mutual_information_surrogate(h_e: torch.Tensor, h_t: torch.Tensor) -> torch.Tensor:
    """Squared Frobenius norm of the whitened cross-correlation matrix.

    Zero in expectation for independent batches, grows with any linear
    dependence; a tractable stand-in for mutual information.
    """
    n = h_e.shape[0]
    corr = _whiten(h_e).T @ _whiten(h_t) / n
    return (corr**2).sum()


def cross_task_align_loss(
    h_entity: torch.Tensor,
    h_topic: torch.Tensor,
    project_entity,
    project_topic,
    lambda_mutual: float,
    mi_sign: float = 1.0,
) -> torch.Tensor:
    """Squared distance of projected features plus the dependence surrogate."""
    if h_entity.shape[0] != h_topic.shape[0]:
        raise ShapeError(
            f"batch sizes differ: {h_entity.shape[0]} vs {h_topic.shape[0]}"
        )
    pe = project_entity(h_entity)
    pt = project_topic(h_topic)
    if pe.shape != pt.shape:
        raise ShapeError(
            f"projected shapes differ: {tuple(pe.shape)} vs {tuple(pt.shape)}"
        )
    dist = ((pe - pt) ** 2).sum()
    if lambda_mutual == 0.0:
        return dist
    return dist + mi_sign * lambda_mutual * mutual_information_surrogate(
        h_entity, h_topic
    )


def contrastive_loss(
    anchors: list[torch.Tensor],
    positives: list[torch.Tensor],
    tau: float,
    extra_negatives: list[torch.Tensor] | None = None,
) -> torch.Tensor:
    """Mean InfoNCE over the batch with in-batch negatives.

    Anchor i treats every other positive (plus any extra negatives) as its
    negatives; a single anchor-positive pair alone scores zero.
    """
    if len(anchors) != len(positives):
        raise ShapeError(f"{len(anchors)} anchors for {len(positives)} positives")
    if not anchors:
        raise ValueError("need at least one anchor")
    extras = extra_negatives or []
    terms = []
    for i, (a, p) in enumerate(zip(anchors, positives)):
        negatives = [q for j, q in enumerate(positives) if j != i] + extras
        terms.append(contrastive_align_loss(a, p, negatives, tau))
    return torch.stack(terms).mean()


def regularization(
    p_entity: torch.Tensor,
    p_topic: torch.Tensor,
    params_sq_norm: torch.Tensor | float,
    lambda_smooth: float,
) -> torch.Tensor:
    """Confidence penalty (negative entropies, nats) plus L2 smoothing."""
    check_distribution(p_entity)
    check_distribution(p_topic)
    h_e = entropy(p_entity).mean()
    h_t = entropy(p_topic).mean()
    if not torch.is_tensor(params_sq_norm):
        params_sq_norm = torch.tensor(float(params_sq_norm))
    return -h_e - h_t + lambda_smooth * params_sq_norm


def total_loss(
    ner: torch.Tensor,
    topic: torch.Tensor,
    align: torch.Tensor,
    contrast: torch.Tensor,
    reg: torch.Tensor,
    weights: dict[str, float],
) -> LossBreakdown:
    """Weighted sum of the five components as a LossBreakdown."""
    for name in LOSS_NAMES:
        if name not in weights:
            raise InvalidWeight(f"missing weight for {name!r}")
        if weights[name] < 0 or not math.isfinite(weights[name]):
            raise InvalidWeight(f"weight {name!r} must be finite and >= 0")
    parts = {"ner": ner, "topic": topic, "align": align, "contrast": contrast, "reg": reg}
    parts = {
        k: (v if torch.is_tensor(v) else torch.tensor(float(v)))
        for k, v in parts.items()
    }
    total = sum(weights[k] * parts[k] for k in LOSS_NAMES)
    return LossBreakdown(
        ner=parts["ner"],
        topic=parts["topic"],
        align=parts["align"],
        contrast=parts["contrast"],
        reg=parts["reg"],
        weights={k: float(weights[k]) for k in LOSS_NAMES},
        total=total,
    )
