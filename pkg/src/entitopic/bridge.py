"""Cross-task bridge between entity and topic representations.

Both feature sets are projected into a shared space, exchanged through
bidirectional multi-head cross-attention scaled by a language-aware sigmoid
factor, and merged back through a gated fusion with a learned residual mix.
Disabling the bridge must leave the entity branch untouched, so the joint
model only calls into this module when it is enabled.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import BridgeConfig
from .errors import ShapeError, UnknownLanguage


class MultiHeadCrossAttention(nn.Module):
    """Queries from one task attend over the other task's features."""

    def __init__(self, d_shared: int, n_heads: int, out_dim: int):
        super().__init__()
        if d_shared % n_heads:
            raise ShapeError(f"d_shared {d_shared} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_k = d_shared // n_heads
        self.q_proj = nn.Linear(d_shared, d_shared)
        self.k_proj = nn.Linear(d_shared, d_shared)
        self.v_proj = nn.Linear(d_shared, d_shared)
        self.out_proj = nn.Linear(d_shared, out_dim)

    def forward(
        self, queries: torch.Tensor, keys: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        n, m = queries.shape[0], keys.shape[0]

        def split(t: torch.Tensor, length: int) -> torch.Tensor:
            return t.view(length, self.n_heads, self.d_k).transpose(0, 1)

        q = split(self.q_proj(queries), n)
        k = split(self.k_proj(keys), m)
        v = split(self.v_proj(keys), m)
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.d_k), dim=-1)
        ctx = (weights @ v).transpose(0, 1).reshape(n, -1)
        return self.out_proj(ctx), weights


class Bridge(nn.Module):
    def __init__(
        self,
        cfg: BridgeConfig,
        d_entity: int,
        d_topic: int,
        languages: tuple[str, ...],
        lang_embed_dim: int = 8,
    ):
        super().__init__()
        self.cfg = cfg
        d_s = cfg.d_shared or d_entity
        self.d_entity = d_entity
        self.d_topic = d_topic
        self.d_shared = d_s
        self.languages = tuple(sorted(languages))
        self.lang_index = {l: i for i, l in enumerate(self.languages)}

        self.project_e = nn.Linear(d_entity, d_s)
        self.project_t = nn.Linear(d_topic, d_s)
        self.cross_to_entity = MultiHeadCrossAttention(d_s, cfg.n_heads, d_entity)
        self.cross_to_topic = MultiHeadCrossAttention(d_s, cfg.n_heads, d_topic)
        self.norm_entity = nn.LayerNorm(d_entity)
        self.norm_topic = nn.LayerNorm(d_topic)

        self.lang_embed = nn.Embedding(len(self.languages), lang_embed_dim)
        scale_out_e = d_entity if cfg.scaler_mode == "vector" else 1
        scale_out_t = d_topic if cfg.scaler_mode == "vector" else 1
        self.scaler_e = nn.Linear(d_entity + lang_embed_dim, scale_out_e)
        self.scaler_t = nn.Linear(d_entity + lang_embed_dim, scale_out_t)

        self.gate = nn.Linear(d_entity + d_s, d_entity)
        self.fuse_entity = nn.Linear(d_entity, d_entity)
        self.fuse_topic = nn.Linear(d_s, d_entity)
        self.residual_alpha = nn.Parameter(torch.tensor(cfg.residual_alpha_init))

    def project_tasks(
        self, entity_feats: torch.Tensor, topic_feats: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Map both feature sets into the shared bridge dimensionality."""
        if entity_feats.shape[-1] != self.d_entity:
            raise ShapeError(
                f"entity features have dim {entity_feats.shape[-1]}, "
                f"expected {self.d_entity}"
            )
        if topic_feats.shape[-1] != self.d_topic:
            raise ShapeError(
                f"topic features have dim {topic_feats.shape[-1]}, "
                f"expected {self.d_topic}"
            )
        return self.project_e(entity_feats), self.project_t(topic_feats)

    def language_scale(self, entity_feats: torch.Tensor, language: str) -> tuple[
        torch.Tensor, torch.Tensor
    ]:
        """Sigmoid scaling factors from batch statistics and the language."""
        if language not in self.lang_index:
            raise UnknownLanguage(f"bridge has no language {language!r}")
        h_l = entity_feats.mean(dim=0)
        g_l = self.lang_embed(torch.tensor(self.lang_index[language]))
        joint = torch.cat([h_l, g_l])
        return torch.sigmoid(self.scaler_e(joint)), torch.sigmoid(self.scaler_t(joint))

    def cross_attend(
        self,
        entity_feats: torch.Tensor,
        topic_feats: torch.Tensor,
        e_proj: torch.Tensor,
        t_proj: torch.Tensor,
        language: str,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Bidirectional enrichment; returns entity-side attention weights."""
        if t_proj.shape[0] < 1:
            raise ShapeError("cross attention needs at least one topic feature")
        scale_e, scale_t = self.language_scale(entity_feats, language)
        to_entity, weights = self.cross_to_entity(e_proj, t_proj)
        to_topic, _ = self.cross_to_topic(t_proj, e_proj)
        enriched_e = self.norm_entity(entity_feats + scale_e * to_entity)
        enriched_t = self.norm_topic(topic_feats + scale_t * to_topic)
        return enriched_e, enriched_t, weights

    def gate_fuse(
        self, e: torch.Tensor, t: torch.Tensor, f_original: torch.Tensor
    ) -> torch.Tensor:
        """Sigmoid-gated mix of cross-task features with a residual floor."""
        if e.shape[-1] != self.d_entity or t.shape[-1] != self.d_shared:
            raise ShapeError(
                f"gate expects dims ({self.d_entity}, {self.d_shared}), got "
                f"({e.shape[-1]}, {t.shape[-1]})"
            )
        t_b = t.expand(e.shape[0], -1) if e.ndim > t.ndim else t
        g = torch.sigmoid(self.gate(torch.cat([e, t_b], dim=-1)))
        fused = g * (self.fuse_entity(e) + self.fuse_topic(t_b)) + (1 - g) * f_original
        alpha = self.residual_alpha.clamp(0.0, 1.0)
        return alpha * f_original + (1 - alpha) * fused

    def forward(
        self, entity_feats: torch.Tensor, topic_feats: torch.Tensor, language: str
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Full bridge pass for one sentence.

        entity_feats: [n x d_entity] token features; topic_feats:
        [m x d_topic] document topic features (first row is the document
        summary).  Returns (fused entity features, enriched topic features).
        """
        e_proj, t_proj = self.project_tasks(entity_feats, topic_feats)
        enriched_e, enriched_t, _ = self.cross_attend(
            entity_feats, topic_feats, e_proj, t_proj, language
        )
        doc_context = t_proj[0]
        fused = self.gate_fuse(enriched_e, doc_context, entity_feats)
        return fused, enriched_t

    def forward_batch(
        self,
        feats: list[torch.Tensor],
        matrices: list[torch.Tensor],
        languages: list[str],
    ) -> list[torch.Tensor]:
        """Entity-side bridge pass for many sentences in one shot.

        Equivalent to calling :meth:`forward` per sentence and keeping the
        entity output; the per-row arithmetic is identical, only padded
        rows (discarded) differ.
        """
        b = len(feats)
        lengths = [f.shape[0] for f in feats]
        max_n = max(lengths)
        dtype = feats[0].dtype
        padded = torch.zeros(b, max_n, self.d_entity, dtype=dtype)
        for i, f in enumerate(feats):
            padded[i, : f.shape[0]] = f
        topic = torch.stack(matrices)  # [b x m x d_topic]

        e_proj = self.project_e(padded)
        t_proj = self.project_t(topic)

        att = self.cross_to_entity
        m = topic.shape[1]
        k = att.k_proj(t_proj).view(b, m, att.n_heads, att.d_k).transpose(1, 2)
        v = att.v_proj(t_proj).view(b, m, att.n_heads, att.d_k).transpose(1, 2)
        q = att.q_proj(e_proj).view(b, max_n, att.n_heads, att.d_k).transpose(1, 2)
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(att.d_k), dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(b, max_n, -1)
        to_entity = att.out_proj(ctx)

        h_l = torch.stack(
            [f.mean(dim=0) for f in feats]
        )  # [b x d_entity] batch statistics per sentence
        lang_ids = torch.tensor([self.lang_index[l] for l in languages])
        for lang in languages:
            if lang not in self.lang_index:
                raise UnknownLanguage(f"bridge has no language {lang!r}")
        g_l = self.lang_embed(lang_ids)
        scale_e = torch.sigmoid(self.scaler_e(torch.cat([h_l, g_l], dim=-1)))
        enriched = self.norm_entity(padded + scale_e.unsqueeze(1) * to_entity)

        doc_context = t_proj[:, 0, :]  # [b x d_shared]
        t_b = doc_context.unsqueeze(1).expand(b, max_n, self.d_shared)
        g = torch.sigmoid(self.gate(torch.cat([enriched, t_b], dim=-1)))
        fused = g * (self.fuse_entity(enriched) + self.fuse_topic(t_b)) + (
            1 - g
        ) * padded
        alpha = self.residual_alpha.clamp(0.0, 1.0)
        out = alpha * padded + (1 - alpha) * fused
        return [out[i, :n] for i, n in enumerate(lengths)]
