"""Shared multilingual encoder.

A small trainable transformer stands in for a large pretrained model:
word-level hash embeddings with a character-trigram fallback for unseen
words, sinusoidal positions, a few self-attention layers, and a per-language
calibration block (language-specific attention with a learned bias plus a
bottleneck adapter, residually merged and layer-normalized).

Cross-lingual alignment tooling lives here too: the projection-similarity
penalty between per-language calibration weights, the temperature-scaled
contrastive loss over parallel sentences, and distance-weighted curriculum
sampling of sentence pairs.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import EncoderConfig
from .data import TokenSequence
from .errors import (
    DegenerateEmbedding,
    EmptyInput,
    EmptyPool,
    SequenceTooLong,
    ShapeError,
    UnknownLanguage,
)

PAD = "<pad>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str, language: str) -> TokenSequence:
    """Split text into word and punctuation tokens.

    Deterministic; joining the tokens reproduces every non-whitespace
    character of the input.
    """
    if not text.strip():
        raise EmptyInput("cannot tokenize empty text")
    tokens = tuple(_TOKEN_RE.findall(text))
    return TokenSequence(tokens=tokens, language=language)


def sinusoidal_pe(position: int, dim_index: int, d_model: int) -> float:
    """Sinusoidal positional value for one (position, dimension) cell."""
    if not 0 <= dim_index < d_model:
        raise ShapeError(f"dim_index {dim_index} out of range for d_model {d_model}")
    even = dim_index - (dim_index % 2)
    angle = position / (10000.0 ** (even / d_model))
    return math.sin(angle) if dim_index % 2 == 0 else math.cos(angle)


def positional_encoding(n_positions: int, d_model: int) -> torch.Tensor:
    """[n_positions x d_model] sinusoidal table."""
    pos = np.arange(n_positions)[:, None]
    dim = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (dim - dim % 2) / d_model)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return torch.from_numpy(table.astype(np.float64))


def _stable_hash(text: str, buckets: int, salt: str) -> int:
    return zlib.crc32(f"{salt}|{text}".encode("utf-8")) % buckets


class HashEmbedder(nn.Module):
    """Word embeddings over hashed ids; unseen words fall back to the mean
    of their character-trigram embeddings."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.word_table = nn.Embedding(cfg.word_buckets, cfg.d_model)
        self.char_table = nn.Embedding(cfg.char_buckets, cfg.d_model)
        self.known: set[str] = set()

    def fit_vocab(self, corpus) -> None:
        """Words below the minimum count stay out of the vocabulary and keep
        their character-trigram embedding."""
        from collections import Counter

        counts = Counter(tok for seq in corpus for tok in seq.tokens)
        self.known.update(
            w for w, c in counts.items() if c >= self.cfg.vocab_min_count
        )

    def get_extra_state(self):
        return {"known": sorted(self.known)}

    def set_extra_state(self, state):
        self.known = set(state["known"])

    def _trigrams(self, token: str) -> list[str]:
        padded = f"^{token}$"
        if len(padded) < 3:
            return [padded]
        return [padded[i : i + 3] for i in range(len(padded) - 2)]

    def embed_token(self, token: str) -> torch.Tensor:
        dev = self.word_table.weight.device
        if token in self.known:
            idx = _stable_hash(token, self.cfg.word_buckets, "w")
            return self.word_table(torch.tensor(idx, device=dev))
        idx = torch.tensor(
            [_stable_hash(g, self.cfg.char_buckets, "c") for g in self._trigrams(token)],
            device=dev,
        )
        return self.char_table(idx).mean(dim=0)

    def forward(self, tokens: tuple[str, ...]) -> torch.Tensor:
        """[n x d] embeddings; one table lookup plus trigram fixups."""
        ids = torch.tensor(
            [_stable_hash(t, self.cfg.word_buckets, "w") for t in tokens]
        )
        emb = self.word_table(ids)
        unknown = [i for i, t in enumerate(tokens) if t not in self.known]
        if unknown:
            fixes = torch.stack([self.embed_token(tokens[i]) for i in unknown])
            emb = emb.index_copy(0, torch.tensor(unknown), fixes)
        return emb


@dataclass
class EncodedSequence:
    hidden: torch.Tensor  # [n_tokens x d_model]; masked rows are zero
    language: str
    mask: torch.Tensor  # bool [n_tokens], True for real tokens

    @property
    def real_hidden(self) -> torch.Tensor:
        return self.hidden[self.mask]

    def mean_embedding(self) -> torch.Tensor:
        return self.hidden[self.mask].mean(dim=0)


def masked_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    mask: torch.Tensor,
    bias: torch.Tensor | float = 0.0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Scaled dot-product attention over unmasked key positions.

    q, k, v: [..., n, d_k]; mask: bool [..., n] broadcastable over the key
    axis.  Returns (context, weights); fully-masked query rows yield zeros.
    """
    d_k = q.shape[-1]
    scores = q @ k.transpose(-1, -2) / math.sqrt(d_k)
    scores = scores + bias
    key_mask = mask.unsqueeze(-2)  # [..., 1, n]
    scores = scores.masked_fill(~key_mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    weights = torch.nan_to_num(weights, nan=0.0)
    return weights @ v, weights


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads:
            raise ShapeError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, n, d = x.shape

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(b, n, self.n_heads, self.d_k).transpose(1, 2)

        ctx, weights = masked_attention(
            split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x)),
            mask.unsqueeze(1),
        )
        ctx = ctx.transpose(1, 2).reshape(b, n, d)
        return self.out_proj(ctx), weights


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attn = MultiHeadSelfAttention(cfg.d_model, cfg.n_heads)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.ffn_dim),
            nn.ReLU(),
            nn.Linear(cfg.ffn_dim, cfg.d_model),
        )
        self.norm2 = nn.LayerNorm(cfg.d_model)

    def forward(self, x, mask):
        attn_out, weights = self.attn(x, mask)
        x = self.norm1(x + attn_out)
        x = self.norm2(x + self.ffn(x))
        return x, weights


class LanguageCalibration(nn.Module):
    """One language's calibration: biased attention plus bottleneck adapter."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d, r = cfg.d_model, cfg.adapter_rank
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.attn_bias = nn.Parameter(torch.zeros(()))
        self.adapter_down = nn.Linear(d, r)
        self.adapter_up = nn.Linear(r, d)
        self.norm = nn.LayerNorm(d)

    def adapter(self, h: torch.Tensor) -> torch.Tensor:
        return self.adapter_up(torch.relu(self.adapter_down(h)))

    def forward(
        self, h: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        ctx, weights = masked_attention(
            self.q_proj(h), self.k_proj(h), self.v_proj(h), mask, bias=self.attn_bias
        )
        out = self.norm(h + self.adapter(ctx))
        return out, weights


class MultilingualEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, languages: tuple[str, ...]):
        super().__init__()
        self.cfg = cfg
        self.languages = tuple(languages)
        self.embedder = HashEmbedder(cfg)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.calibrations = nn.ModuleDict(
            {lang: LanguageCalibration(cfg) for lang in self.languages}
        )
        self.register_buffer(
            "pe", positional_encoding(cfg.max_len, cfg.d_model).float(), persistent=False
        )

    def fit_vocab(self, corpus) -> None:
        self.embedder.fit_vocab(corpus)

    def _embed_batch(self, batch: list[TokenSequence]) -> tuple[torch.Tensor, torch.Tensor]:
        max_n = max(len(s) for s in batch)
        dtype = self.embedder.word_table.weight.dtype
        mask = torch.zeros(len(batch), max_n, dtype=torch.bool)
        for i, seq in enumerate(batch):
            for j, tok in enumerate(seq.tokens):
                mask[i, j] = tok != PAD
        rows = []
        pe = self.pe.to(dtype)
        for i, seq in enumerate(batch):
            emb = self.embedder(seq.tokens) + pe[: len(seq)]
            if max_n > len(seq):
                emb = torch.cat(
                    [emb, torch.zeros(max_n - len(seq), self.cfg.d_model, dtype=dtype)]
                )
            rows.append(emb)
        x = torch.stack(rows) * mask.unsqueeze(-1)
        return x, mask

    def encode(
        self, batch: list[TokenSequence], return_attention: bool = False
    ):
        """Contextual embeddings for a batch of sentences.

        Returns a list of :class:`EncodedSequence`; with
        ``return_attention=True`` also returns per-layer attention weights
        ``[batch, heads, n, n]``.
        """
        if not batch:
            return ([], []) if return_attention else []
        for seq in batch:
            if len(seq) > self.cfg.max_len:
                raise SequenceTooLong(
                    f"{len(seq)} tokens exceeds max_len {self.cfg.max_len}"
                )
        x, mask = self._embed_batch(batch)
        attentions = []
        for layer in self.layers:
            x, weights = layer(x, mask)
            attentions.append(weights)
        x = x * mask.unsqueeze(-1)
        encoded = [
            EncodedSequence(x[i, : len(seq)], seq.language, mask[i, : len(seq)])
            for i, seq in enumerate(batch)
        ]
        if return_attention:
            return encoded, attentions
        return encoded

    def calibrate(
        self, enc: EncodedSequence, return_attention: bool = False
    ):
        """Apply the language-specific calibration block to one sequence."""
        if enc.language not in self.calibrations:
            raise UnknownLanguage(f"no calibration for language {enc.language!r}")
        cal = self.calibrations[enc.language]
        out, weights = cal(enc.hidden.unsqueeze(0), enc.mask.unsqueeze(0))
        out = out.squeeze(0) * enc.mask.unsqueeze(-1)
        result = EncodedSequence(out, enc.language, enc.mask)
        if return_attention:
            return result, weights.squeeze(0)
        return result

    def encode_calibrated(self, batch: list[TokenSequence]) -> list[EncodedSequence]:
        """Encode then calibrate, batching the calibration per language."""
        encoded = self.encode(batch)
        if not self.cfg.calibration_enabled or not batch:
            return encoded
        by_lang: dict[str, list[int]] = {}
        for i, enc in enumerate(encoded):
            by_lang.setdefault(enc.language, []).append(i)
        out: list[EncodedSequence | None] = [None] * len(encoded)
        for lang, idxs in by_lang.items():
            if lang not in self.calibrations:
                raise UnknownLanguage(f"no calibration for language {lang!r}")
            cal = self.calibrations[lang]
            max_n = max(encoded[i].hidden.shape[0] for i in idxs)
            h = torch.zeros(
                len(idxs), max_n, self.cfg.d_model, dtype=self._dtype()
            )
            mask = torch.zeros(len(idxs), max_n, dtype=torch.bool)
            for row, i in enumerate(idxs):
                n = encoded[i].hidden.shape[0]
                h[row, :n] = encoded[i].hidden
                mask[row, :n] = encoded[i].mask
            result, _ = cal(h, mask)
            result = result * mask.unsqueeze(-1)
            for row, i in enumerate(idxs):
                n = encoded[i].hidden.shape[0]
                out[i] = EncodedSequence(result[row, :n], lang, encoded[i].mask)
        return out

    def _dtype(self) -> torch.dtype:
        return self.embedder.word_table.weight.dtype


def projection_alignment_penalty(
    cal_l: LanguageCalibration, cal_m: LanguageCalibration
) -> torch.Tensor:
    """Frobenius distance of Q/K/V projection products from the identity.

    Zero exactly when each pair of projections satisfies W_l W_m^T = I;
    symmetric in its arguments.
    """
    total = None
    for attr in ("q_proj", "k_proj", "v_proj"):
        w_l = getattr(cal_l, attr).weight
        w_m = getattr(cal_m, attr).weight
        if w_l.shape != w_m.shape:
            raise ShapeError(f"{attr}: {tuple(w_l.shape)} vs {tuple(w_m.shape)}")
        eye = torch.eye(w_l.shape[0], dtype=w_l.dtype, device=w_l.device)
        term = torch.linalg.matrix_norm(w_l @ w_m.T - eye, ord="fro")
        total = term if total is None else total + term
    return total


def alignment_penalty_total(encoder: MultilingualEncoder) -> torch.Tensor:
    """Sum of pairwise penalties over unordered language pairs."""
    langs = sorted(encoder.calibrations.keys())
    total = torch.zeros((), dtype=encoder.embedder.word_table.weight.dtype)
    for i, l in enumerate(langs):
        for m in langs[i + 1 :]:
            total = total + projection_alignment_penalty(
                encoder.calibrations[l], encoder.calibrations[m]
            )
    return total


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na, nb = a.norm(), b.norm()
    if na.item() == 0.0 or nb.item() == 0.0:
        raise DegenerateEmbedding("zero-norm embedding in cosine similarity")
    return (a * b).sum() / (na * nb)


def contrastive_align_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negatives: list[torch.Tensor],
    tau: float,
) -> torch.Tensor:
    """Temperature-scaled InfoNCE over cosine similarities.

    The denominator runs over the positive plus all negatives; with no
    negatives the loss is exactly zero.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    sims = [_cosine(anchor, positive) / tau]
    sims.extend(_cosine(anchor, neg) / tau for neg in negatives)
    logits = torch.stack(sims)
    return torch.logsumexp(logits, dim=0) - logits[0]


def diversity_loss(embeddings: list[torch.Tensor], margin: float) -> torch.Tensor:
    """Hinge on the mean pairwise distance: penalizes a collapsed batch."""
    n = len(embeddings)
    if n < 2:
        raise ValueError("diversity needs at least two embeddings")
    dists = [
        (embeddings[i] - embeddings[j]).norm()
        for i in range(n)
        for j in range(i + 1, n)
    ]
    mean_dist = torch.stack(dists).mean()
    return torch.clamp(margin - mean_dist, min=0.0)


def curriculum_sample(
    pairs: list[tuple], beta: float, rng: np.random.Generator
) -> tuple:
    """Draw one (source, target, distance) pair with weight exp(-beta * d)."""
    if not pairs:
        raise EmptyPool("no sentence pairs to sample from")
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    d = np.array([p[2] for p in pairs], dtype=np.float64)
    if not np.isfinite(d).all():
        raise ValueError("distances must be finite")
    logits = -beta * d
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return pairs[rng.choice(len(pairs), p=probs)]


def curriculum_distance(a: EncodedSequence, b: EncodedSequence) -> float:
    """Cosine distance between mean-pooled sentence embeddings."""
    va, vb = a.mean_embedding(), b.mean_embedding()
    return float(1.0 - _cosine(va, vb))
