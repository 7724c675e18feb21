"""Entity recognition branch.

Three stages on top of the shared encoder: a BiLSTM over each sentence, a
per-language bottleneck adapter, and multi-head self-attention.  Token
features feed a prototype classifier (one prototype per BIO tag, O
included) whose negative distances act as CRF emissions; a linear-chain CRF
with BIO transition constraints produces the final tag sequence by Viterbi
decoding.

A prototype memory bank keeps exponential-moving-average prototypes with
counts and per-dimension variances so inference can classify without a
support set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .config import EntityConfig
from .encoder import EncodedSequence, MultiHeadSelfAttention
from .errors import (
    EmptyBank,
    EmptySupport,
    IllegalGoldSequence,
    InfeasibleMask,
    InvalidEmissions,
    UnknownLanguage,
)


class EntityEncoder(nn.Module):
    """BiLSTM -> language adapter -> self-attention over token features."""

    def __init__(self, cfg: EntityConfig, d_model: int, languages: tuple[str, ...]):
        super().__init__()
        hidden = cfg.lstm_hidden or d_model // 2
        self.forward_lstm = nn.LSTM(d_model, hidden, batch_first=True)
        self.backward_lstm = nn.LSTM(d_model, hidden, batch_first=True)
        self.proj = nn.Linear(2 * hidden, d_model)
        self.adapters = nn.ModuleDict(
            {
                lang: nn.ModuleDict(
                    {
                        "down": nn.Linear(d_model, cfg.adapter_rank),
                        "up": nn.Linear(cfg.adapter_rank, d_model),
                    }
                )
                for lang in languages
            }
        )
        self.attn = MultiHeadSelfAttention(d_model, cfg.n_heads)
        self.norm = nn.LayerNorm(d_model)

    def bilstm(self, x: torch.Tensor) -> torch.Tensor:
        """[n x d] -> [n x 2*hidden]: forward pass and reversed backward pass."""
        fwd, _ = self.forward_lstm(x.unsqueeze(0))
        bwd, _ = self.backward_lstm(x.flip(0).unsqueeze(0))
        return torch.cat([fwd.squeeze(0), bwd.squeeze(0).flip(0)], dim=-1)

    def adapt(self, h: torch.Tensor, language: str) -> torch.Tensor:
        if language not in self.adapters:
            raise UnknownLanguage(f"no entity adapter for language {language!r}")
        a = self.adapters[language]
        return h + a["up"](torch.relu(a["down"](h)))

    def forward_batch(self, encs: list[EncodedSequence]) -> list[torch.Tensor]:
        """Token features per sequence (real tokens only), batched."""
        from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

        for enc in encs:
            if enc.language not in self.adapters:
                raise UnknownLanguage(
                    f"no entity adapter for language {enc.language!r}"
                )
        reals = [enc.hidden[enc.mask] for enc in encs]
        lengths = [r.shape[0] for r in reals]
        b, max_n = len(reals), max(lengths)
        dtype = reals[0].dtype
        padded = torch.zeros(b, max_n, reals[0].shape[-1], dtype=dtype)
        flipped = torch.zeros_like(padded)
        mask = torch.zeros(b, max_n, dtype=torch.bool)
        for i, (r, n) in enumerate(zip(reals, lengths)):
            padded[i, :n] = r
            flipped[i, :n] = r.flip(0)
            mask[i, :n] = True

        def run(lstm, x):
            packed = pack_padded_sequence(
                x, lengths, batch_first=True, enforce_sorted=False
            )
            out, _ = lstm(packed)
            return pad_packed_sequence(out, batch_first=True, total_length=max_n)[0]

        fwd = run(self.forward_lstm, padded)
        bwd = run(self.backward_lstm, flipped)
        bwd_aligned = torch.zeros_like(bwd)
        for i, n in enumerate(lengths):
            bwd_aligned[i, :n] = bwd[i, :n].flip(0)
        h = self.proj(torch.cat([fwd, bwd_aligned], dim=-1))

        by_lang: dict[str, list[int]] = {}
        for i, enc in enumerate(encs):
            by_lang.setdefault(enc.language, []).append(i)
        adapted = torch.zeros_like(h)
        for lang, idxs in by_lang.items():
            rows = torch.tensor(idxs)
            adapted = adapted.index_copy(0, rows, self.adapt(h[rows], lang))
        attn_out, _ = self.attn(adapted, mask)
        h = self.norm(adapted + attn_out)
        return [h[i, :n] for i, n in enumerate(lengths)]

    def forward(self, enc: EncodedSequence, language: str | None = None) -> EncodedSequence:
        language = language or enc.language
        real = self.forward_batch(
            [EncodedSequence(enc.hidden, language, enc.mask)]
        )[0]
        out = torch.zeros(
            enc.hidden.shape[0], real.shape[-1], dtype=real.dtype, device=real.device
        )
        out[enc.mask] = real
        return EncodedSequence(out, language, enc.mask)


@dataclass
class BankEntry:
    prototype: torch.Tensor
    count: int
    variance: torch.Tensor


@dataclass
class PrototypeBank:
    """Per-tag prototype statistics with EMA updates and a version counter."""

    momentum: float = 0.5
    attention: torch.Tensor | None = None  # bilinear weight for support weighting
    entries: dict[str, BankEntry] = field(default_factory=dict)
    version: int = 0

    def types(self) -> list[str]:
        return sorted(self.entries)

    def stacked(self) -> tuple[list[str], torch.Tensor]:
        if not self.entries:
            raise EmptyBank("prototype bank is empty")
        types = self.types()
        return types, torch.stack([self.entries[t].prototype for t in types])


def compute_prototype(
    support: list[tuple[torch.Tensor, str]],
    query: torch.Tensor | None,
    bank: PrototypeBank,
    etype: str,
) -> torch.Tensor:
    """Attention-weighted mean of the support embeddings of one type.

    With ``query`` (and the bank's bilinear attention weight) the weights are
    a softmax over f(x_i)^T W_a f(x_q); without a query the mean is uniform.
    Either way the result is a convex combination of support embeddings.
    """
    vecs = [v for v, t in support if t == etype]
    if not vecs:
        raise EmptySupport(f"no support embeddings for type {etype!r}")
    stacked = torch.stack(vecs)
    if query is None or bank.attention is None:
        weights = torch.full(
            (len(vecs),), 1.0 / len(vecs), dtype=stacked.dtype, device=stacked.device
        )
    else:
        scores = stacked @ bank.attention @ query
        weights = torch.softmax(scores, dim=0)
    return weights @ stacked


def batch_statistics(
    support: list[tuple[torch.Tensor, str]]
) -> dict[str, tuple[torch.Tensor, torch.Tensor, int]]:
    """Per-type (mean, variance, count) of support embeddings."""
    by_type: dict[str, list[torch.Tensor]] = {}
    for vec, etype in support:
        by_type.setdefault(etype, []).append(vec)
    stats = {}
    for etype, vecs in by_type.items():
        stacked = torch.stack(vecs)
        mean = stacked.mean(dim=0)
        var = stacked.var(dim=0, unbiased=False)
        stats[etype] = (mean, var, len(vecs))
    return stats


def bank_update(
    bank: PrototypeBank,
    batch_stats: dict[str, tuple[torch.Tensor, torch.Tensor, int]],
) -> PrototypeBank:
    """EMA-update the bank in place; unseen types are inserted verbatim."""
    g = bank.momentum
    if not 0.0 <= g <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {g}")
    for etype, (p_batch, var_batch, n_batch) in batch_stats.items():
        entry = bank.entries.get(etype)
        if entry is None:
            bank.entries[etype] = BankEntry(
                p_batch.detach().clone(), n_batch, var_batch.detach().clone()
            )
        else:
            entry.prototype = (1 - g) * entry.prototype + g * p_batch.detach()
            entry.variance = (1 - g) * entry.variance + g * var_batch.detach()
            entry.count += n_batch
    bank.version += 1
    return bank


def _distances(query: torch.Tensor, protos: torch.Tensor, metric: str) -> torch.Tensor:
    if metric == "sq_euclidean":
        return ((protos - query) ** 2).sum(dim=-1)
    if metric == "euclidean":
        return ((protos - query) ** 2).sum(dim=-1).clamp_min(1e-30).sqrt()
    if metric == "cosine":
        qn = query / query.norm().clamp_min(1e-12)
        pn = protos / protos.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        return 1.0 - pn @ qn
    raise ValueError(f"unknown metric {metric!r}")


def pairwise_distances(
    features: torch.Tensor, protos: torch.Tensor, metric: str
) -> torch.Tensor:
    """[n x E] distances between token features and prototypes."""
    if metric == "sq_euclidean":
        return ((features.unsqueeze(1) - protos.unsqueeze(0)) ** 2).sum(dim=-1)
    if metric == "euclidean":
        sq = ((features.unsqueeze(1) - protos.unsqueeze(0)) ** 2).sum(dim=-1)
        return sq.clamp_min(1e-30).sqrt()
    if metric == "cosine":
        fn = features / features.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        pn = protos / protos.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        return 1.0 - fn @ pn.T
    raise ValueError(f"unknown metric {metric!r}")


def prototype_logits(
    query: torch.Tensor, protos: torch.Tensor, metric: str = "sq_euclidean"
) -> torch.Tensor:
    """Negative distances to each prototype (softmax-ready scores)."""
    return -_distances(query, protos, metric)


def prototype_log_probs(
    query: torch.Tensor, bank: PrototypeBank, metric: str = "sq_euclidean"
) -> dict[str, float]:
    """Softmax over negative distances to every bank prototype."""
    types, protos = bank.stacked()
    logits = prototype_logits(query.double(), protos.double(), metric)
    probs = torch.softmax(logits, dim=0)
    probs = probs / probs.sum()
    return {t: float(p) for t, p in zip(types, probs)}


def bio_transition_mask(tags: tuple[str, ...]) -> tuple[torch.Tensor, torch.Tensor]:
    """(allowed[from, to], start_allowed[to]) boolean masks for a BIO tag set.

    I-X may only follow B-X or I-X; everything else is free.  Sequences may
    not start inside an entity.
    """
    n = len(tags)
    allowed = torch.ones(n, n, dtype=torch.bool)
    start_allowed = torch.ones(n, dtype=torch.bool)
    for j, to_tag in enumerate(tags):
        if not to_tag.startswith("I-"):
            continue
        ent = to_tag[2:]
        start_allowed[j] = False
        for i, from_tag in enumerate(tags):
            if from_tag not in (f"B-{ent}", f"I-{ent}"):
                allowed[i, j] = False
    return allowed, start_allowed


class CrfParams(nn.Module):
    """Transition scores, start/end scores, and the BIO constraint mask.

    Forbidden transitions contribute a large negative additive penalty so
    all arithmetic stays finite and differentiable.
    """

    def __init__(
        self,
        tags: tuple[str, ...],
        constrained: bool = True,
        forbidden_penalty: float = -1e4,
    ):
        super().__init__()
        self.tags = tuple(tags)
        self.tag_index = {t: i for i, t in enumerate(self.tags)}
        n = len(self.tags)
        self.transitions = nn.Parameter(torch.zeros(n, n))
        self.start = nn.Parameter(torch.zeros(n))
        self.end = nn.Parameter(torch.zeros(n))
        self.forbidden_penalty = forbidden_penalty
        if constrained:
            allowed, start_allowed = bio_transition_mask(self.tags)
        else:
            allowed = torch.ones(n, n, dtype=torch.bool)
            start_allowed = torch.ones(n, dtype=torch.bool)
        self.register_buffer("allowed", allowed)
        self.register_buffer("start_allowed", start_allowed)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    def transition_scores(self) -> torch.Tensor:
        pen = self.forbidden_penalty
        return self.transitions + (~self.allowed) * pen

    def start_scores(self) -> torch.Tensor:
        return self.start + (~self.start_allowed) * self.forbidden_penalty

    def check_gold(self, tag_ids: list[int]) -> None:
        if not self.start_allowed[tag_ids[0]]:
            raise IllegalGoldSequence(
                f"sequence may not start with {self.tags[tag_ids[0]]}"
            )
        for a, b in zip(tag_ids, tag_ids[1:]):
            if not self.allowed[a, b]:
                raise IllegalGoldSequence(
                    f"forbidden transition {self.tags[a]} -> {self.tags[b]}"
                )


def _check_emissions(emissions: torch.Tensor, params: CrfParams) -> None:
    if emissions.ndim != 2 or emissions.shape[1] != params.n_tags:
        raise InvalidEmissions(
            f"emissions shape {tuple(emissions.shape)} does not match "
            f"{params.n_tags} tags"
        )
    if emissions.shape[0] < 1:
        raise InvalidEmissions("need at least one token")
    if torch.isnan(emissions).any():
        raise InvalidEmissions("emissions contain NaN")


def sequence_score(
    emissions: torch.Tensor, tag_ids: list[int], params: CrfParams
) -> torch.Tensor:
    """Path score: start + emissions + transitions + end, penalties included."""
    trans = params.transition_scores()
    score = params.start_scores()[tag_ids[0]] + emissions[0, tag_ids[0]]
    for i in range(1, len(tag_ids)):
        score = score + trans[tag_ids[i - 1], tag_ids[i]] + emissions[i, tag_ids[i]]
    return score + params.end[tag_ids[-1]]


def crf_log_partition(emissions: torch.Tensor, params: CrfParams) -> torch.Tensor:
    """log sum over all tag sequences of exp(path score), by the forward pass."""
    _check_emissions(emissions, params)
    trans = params.transition_scores()
    alpha = params.start_scores() + emissions[0]
    for i in range(1, emissions.shape[0]):
        alpha = torch.logsumexp(alpha.unsqueeze(1) + trans, dim=0) + emissions[i]
    return torch.logsumexp(alpha + params.end, dim=0)


def crf_nll(
    emissions: torch.Tensor, gold_tags: list[str] | list[int], params: CrfParams
) -> torch.Tensor:
    """Negative log-likelihood of the gold path: log Z minus the gold score."""
    _check_emissions(emissions, params)
    tag_ids = [
        params.tag_index[t] if isinstance(t, str) else int(t) for t in gold_tags
    ]
    if len(tag_ids) != emissions.shape[0]:
        raise InvalidEmissions(
            f"{len(tag_ids)} gold tags for {emissions.shape[0]} tokens"
        )
    params.check_gold(tag_ids)
    return crf_log_partition(emissions, params) - sequence_score(
        emissions, tag_ids, params
    )


def _check_feasible(n: int, params: CrfParams) -> None:
    reach = params.start_allowed.clone()
    for _ in range(n - 1):
        if not reach.any():
            break
        reach = (reach.unsqueeze(1) & params.allowed).any(dim=0)
    if not reach.any():
        raise InfeasibleMask("constraint mask admits no tag sequence")


def viterbi(
    emissions: torch.Tensor, params: CrfParams
) -> tuple[list[str], float]:
    """Highest-scoring tag sequence under the constrained CRF."""
    _check_emissions(emissions, params)
    n = emissions.shape[0]
    _check_feasible(n, params)
    with torch.no_grad():
        trans = params.transition_scores()
        score = params.start_scores() + emissions[0]
        backptr = []
        for i in range(1, n):
            cand = score.unsqueeze(1) + trans  # [from, to]
            best, idx = cand.max(dim=0)
            backptr.append(idx)
            score = best + emissions[i]
        score = score + params.end
        best_final = int(score.argmax())
        path = [best_final]
        for idx in reversed(backptr):
            path.append(int(idx[path[-1]]))
        path.reverse()
    return [params.tags[i] for i in path], float(score[best_final])


class PrototypeClassifier(nn.Module):
    """Learnable bilinear support-attention weight shared with the bank."""

    def __init__(self, d_model: int, metric: str = "sq_euclidean",
                 attention_mode: str = "uniform"):
        super().__init__()
        self.metric = metric
        self.attention_mode = attention_mode
        self.w_attention = nn.Parameter(torch.eye(d_model))

    def make_bank(self, momentum: float) -> PrototypeBank:
        return PrototypeBank(momentum=momentum, attention=self.w_attention)

    def episode_prototypes(
        self,
        support: list[tuple[torch.Tensor, str]],
        bank: PrototypeBank,
        query: torch.Tensor | None = None,
    ) -> tuple[list[str], torch.Tensor]:
        """Stacked prototypes for every type present in the support set."""
        types = sorted({t for _, t in support})
        q = query if self.attention_mode == "query" else None
        protos = torch.stack(
            [compute_prototype(support, q, bank, t) for t in types]
        )
        return types, protos

    def emissions(
        self,
        features: torch.Tensor,
        types: list[str],
        protos: torch.Tensor,
        tag_order: tuple[str, ...],
        missing_score: float = -1e4,
    ) -> torch.Tensor:
        """[n x n_tags] emission matrix; tags with no prototype get a floor."""
        n = features.shape[0]
        col = {t: i for i, t in enumerate(tag_order)}
        scale = 1.0 / math.sqrt(features.shape[-1])
        scores = -pairwise_distances(features, protos, self.metric) * scale
        out = torch.full(
            (n, len(tag_order)), missing_score,
            dtype=features.dtype, device=features.device,
        )
        cols = [col[t] for t in types if t in col]
        keep = [j for j, t in enumerate(types) if t in col]
        out = out.index_copy(1, torch.tensor(cols), scores[:, keep])
        return out
