"""Optimization and the episodic training loop.

The optimizer is a module-wise AdamW variant: exponential moving averages
of the gradient and its square drive the adaptive step, and the decoupled
weight decay is applied directly (not scaled by the learning rate).  Each
architectural component gets its own learning rate.  The schedule warms up
linearly and decays with a cosine to a configurable floor; gradients are
clipped by global norm and, for multi-language steps, rescaled by a softmax
over per-language statistics.

Training is episodic: every step samples one or more N-way K-shot episodes,
computes the five-part objective on the query sets, and early-stops on the
cross-language macro-F1 plateau.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import Config, TrainingConfig
from .data import Dataset
from .encoder import (
    alignment_penalty_total,
    curriculum_sample,
    diversity_loss,
    tokenize,
)
from .entity import bank_update, batch_statistics, viterbi
from .episodes import Episode, construct_episode, default_similarity
from .errors import InsufficientData, NonFiniteGradient
from .inference import LanguageDetector
from .losses import (
    LossBreakdown,
    contrastive_loss,
    cross_task_align_loss,
    ner_loss,
    regularization,
    topic_loss,
    total_loss,
)
from .metrics import span_f1_by_language
from .model import JointModel, component_seed
from .topic import CooccurrenceCounts, pmi_pair

logger = logging.getLogger(__name__)


# --- optimizer ---------------------------------------------------------------


def adamw_step(
    param: torch.Tensor,
    grad: torch.Tensor,
    m: torch.Tensor,
    v: torch.Tensor,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    step: int = 1,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """One update: EMA moments, bias-corrected adaptive step, then the
    decoupled decay applied directly (not scaled by the learning rate)."""
    if not torch.isfinite(grad).all():
        raise NonFiniteGradient("gradient contains NaN or Inf")
    m_new = beta1 * m + (1.0 - beta1) * grad
    v_new = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m_new / (1.0 - beta1**step)
    v_hat = v_new / (1.0 - beta2**step)
    param_new = param - lr * m_hat / (v_hat.sqrt() + eps) - weight_decay * param
    return param_new, m_new, v_new


class ModulewiseAdamW:
    """Adaptive optimizer with per-module learning rates and weight decay."""

    def __init__(
        self,
        groups: list[dict],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict[int, tuple[torch.Tensor, torch.Tensor, int]] = {}

    def parameters(self):
        for group in self.groups:
            yield from group["params"]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    @torch.no_grad()
    def step(self, lr_scale: float = 1.0) -> None:
        for group in self.groups:
            lr = group["lr"] * lr_scale
            wd = group.get("weight_decay", 0.0)
            for p in group["params"]:
                if p.grad is None:
                    continue
                m, v, t = self.state.get(
                    id(p), (torch.zeros_like(p), torch.zeros_like(p), 0)
                )
                new_p, m, v = adamw_step(
                    p, p.grad, m, v, lr, wd,
                    self.beta1, self.beta2, self.eps, step=t + 1,
                )
                p.copy_(new_p)
                self.state[id(p)] = (m, v, t + 1)


def module_learning_rates(cfg: TrainingConfig) -> dict[str, float]:
    """Per-component learning rates (encoder, entity, topic, bridge)."""
    return {
        "encoder": cfg.lr_encoder,
        "entity": cfg.lr_entity,
        "topic": cfg.lr_topic,
        "bridge": cfg.lr_bridge,
    }


def warmup_lr(t: int, t_warmup: int, eta_base: float) -> float:
    """Linear ramp from 0 to eta_base over the first t_warmup steps."""
    if t_warmup <= 0:
        raise ValueError(f"t_warmup must be positive, got {t_warmup}")
    return eta_base * min(t, t_warmup) / t_warmup


def schedule_scale(t: int, t_warmup: int, t_total: int, floor: float) -> float:
    """Warmup then cosine decay toward ``floor`` (a fraction of the base lr)."""
    if t < t_warmup:
        return t / t_warmup
    if t_total <= t_warmup:
        return 1.0
    progress = min(1.0, (t - t_warmup) / (t_total - t_warmup))
    return floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


def global_norm(grads: list[torch.Tensor]) -> float:
    return float(torch.sqrt(sum((g**2).sum() for g in grads)))


def clip_gradients(grads: list[torch.Tensor], clip_norm: float) -> float:
    """Scale all gradients by min(1, clip_norm / ||g||); returns the pre-norm."""
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads:
            g.mul_(scale)
    return norm


def language_gradient_scale(
    grads_by_language: dict[str, list[torch.Tensor]],
    weights: dict[str, np.ndarray],
    stats: dict[str, np.ndarray],
) -> tuple[list[torch.Tensor], dict[str, float]]:
    """Combine per-language gradients with softmax(w_l . h_l) scaling."""
    langs = sorted(grads_by_language)
    scores = np.array(
        [float(np.dot(weights[lang], stats[lang])) for lang in langs]
    )
    scores -= scores.max()
    alphas = np.exp(scores)
    alphas /= alphas.sum()
    combined = [torch.zeros_like(g) for g in grads_by_language[langs[0]]]
    for lang, alpha in zip(langs, alphas):
        for acc, g in zip(combined, grads_by_language[lang]):
            acc += float(alpha) * g
    return combined, {lang: float(a) for lang, a in zip(langs, alphas)}


# --- episode objective -------------------------------------------------------


@dataclass
class LdaTerms:
    phi: np.ndarray  # [K x V] topic-word distributions
    pmi: np.ndarray  # [V x V] reference PMI table


def build_lda_terms(model: JointModel, dataset: Dataset) -> dict[str, LdaTerms]:
    terms = {}
    for lang, state in model.lda.items():
        docs = [doc.tokens for doc in dataset.documents(lang)]
        cooc = CooccurrenceCounts.from_corpus(
            docs, window=model.config.topic.npmi_window
        )
        vocab = state.vocab
        pmi = np.zeros((len(vocab), len(vocab)))
        for i in range(len(vocab)):
            for j in range(i + 1, len(vocab)):
                if cooc.p_pair(vocab[i], vocab[j]) > 0:
                    val = pmi_pair(vocab[i], vocab[j], cooc, model.config.topic.npmi_eps)
                    pmi[i, j] = pmi[j, i] = val
        terms[lang] = LdaTerms(state.topic_word_dist(), pmi)
    return terms


class ParallelSampler:
    """Curriculum sampling over parallel sentence pairs."""

    def __init__(self, dataset: Dataset, model: JointModel, beta: float,
                 pool_size: int = 16):
        self.model = model
        self.beta = beta
        self.pool_size = pool_size
        self.pairs = []
        for (l1, l2), rows in dataset.parallel.items():
            for left, right in rows:
                self.pairs.append((l1, l2, left, right))

    def sample(self, count: int, rng: np.random.Generator):
        if not self.pairs or count <= 0:
            return []
        idx = rng.choice(
            len(self.pairs), size=min(self.pool_size, len(self.pairs)), replace=False
        )
        candidates = []
        with torch.no_grad():
            for i in idx:
                l1, l2, left, right = self.pairs[int(i)]
                a = tokenize(left, l1)
                b = tokenize(right, l2)
                enc = self.model.encoder.encode_calibrated([a, b])
                from .encoder import curriculum_distance

                candidates.append(((a, b), None, curriculum_distance(enc[0], enc[1])))
        chosen = [curriculum_sample(candidates, self.beta, rng)[0] for _ in range(count)]
        return chosen


def episode_objective(
    model: JointModel,
    episode: Episode,
    doc_lookup,
    lda_terms: dict[str, LdaTerms],
    parallel_pairs,
    weights: dict[str, float],
    theta_cache: dict | None = None,
) -> tuple[LossBreakdown, torch.Tensor, list[tuple[torch.Tensor, str]]]:
    """Five-part loss on one episode, the encoder alignment penalty, and the
    support (feature, tag) pairs for prototype-bank updates."""
    cfg = model.config.loss
    support_feats, query_feats, topics = model.episode_features(
        episode, doc_lookup, theta_cache
    )
    support_pairs = [
        (vec, tag)
        for seq, feats in zip(episode.support, support_feats)
        for vec, tag in zip(feats, seq.labels)
    ]
    types, protos = model.prototype.episode_prototypes(support_pairs, model.bank)
    query_topics = [topics[seq.doc_id] for seq in episode.query]

    l_ner = torch.zeros((), dtype=protos.dtype)
    n_tokens = 0
    p_entity_rows = []
    h_entity_rows = []
    for seq, feats in zip(episode.query, query_feats):
        emissions = model.episode_tag_emissions(feats, types, protos)
        logp = torch.log_softmax(emissions, dim=-1)
        l_ner = l_ner + ner_loss(
            logp, emissions, list(seq.labels), model.crf, cfg.lambda_crf, cfg.crf_term
        )
        n_tokens += len(seq)
        p_entity_rows.append(torch.softmax(emissions, dim=-1))
        h_entity_rows.append(feats.mean(dim=0))
    l_ner = l_ner / max(n_tokens, 1)

    lang = episode.languages[0]
    if lang in lda_terms:
        terms = lda_terms[lang]
        l_topic = topic_loss(
            terms.phi, terms.pmi, model.topic_embed.weight, cfg.lambda_div
        )
    else:
        eye = torch.eye(model.topic_embed.weight.shape[0])
        l_topic = cfg.lambda_div * torch.linalg.matrix_norm(
            model.topic_embed.weight @ model.topic_embed.weight.T - eye, ord="fro"
        ) ** 2

    h_entity = torch.stack(h_entity_rows)
    h_topic = torch.stack([t.fused for t in query_topics])
    l_align = cross_task_align_loss(
        h_entity, h_topic, model.align_entity, model.align_topic,
        cfg.lambda_mutual, cfg.mi_sign,
    )

    if parallel_pairs:
        anchors, positives = [], []
        for a_seq, b_seq in parallel_pairs:
            enc = model.encoder.encode_calibrated([a_seq, b_seq])
            anchors.append(enc[0].mean_embedding())
            positives.append(enc[1].mean_embedding())
        l_contrast = contrastive_loss(
            anchors, positives, model.config.encoder.contrast_tau
        )
    else:
        l_contrast = torch.zeros((), dtype=protos.dtype)

    p_entity = torch.cat(p_entity_rows, dim=0)
    p_topic = torch.stack(
        [torch.tensor(t.theta, dtype=protos.dtype) for t in query_topics]
    )
    l_reg = regularization(
        p_entity, p_topic, model.params_sq_norm(), cfg.lambda_smooth
    )

    breakdown = total_loss(l_ner, l_topic, l_align, l_contrast, l_reg, weights)
    if model.config.encoder.calibration_enabled and len(model.config.languages) > 1:
        enc_penalty = alignment_penalty_total(model.encoder)
    else:
        enc_penalty = torch.zeros((), dtype=protos.dtype)
    # margin hinge against prototype collapse; kept outside the five-part
    # objective so ablating the contrastive weight does not remove it
    diversity = diversity_loss(
        list(protos), model.config.encoder.diversity_margin
    )
    extras = {"encoder_align": enc_penalty, "prototype_diversity": diversity}
    return breakdown, extras, support_pairs


def evaluate_episodes(
    model: JointModel, episodes: list[Episode], doc_lookup=None,
    theta_cache: dict | None = None,
) -> dict:
    """Decode query sets with episode prototypes; span F1 per language."""
    gold, pred, langs = [], [], []
    with torch.no_grad():
        for episode in episodes:
            support_feats, query_feats, _ = model.episode_features(
                episode, doc_lookup, theta_cache,
                with_topics=model.bridge is not None,
            )
            pairs = [
                (vec, tag)
                for seq, feats in zip(episode.support, support_feats)
                for vec, tag in zip(feats, seq.labels)
            ]
            types, protos = model.prototype.episode_prototypes(pairs, model.bank)
            for seq, feats in zip(episode.query, query_feats):
                emissions = model.episode_tag_emissions(feats, types, protos)
                tags, _ = viterbi(emissions, model.crf)
                gold.append(list(seq.labels))
                pred.append(tags)
                langs.append(seq.language)
    metrics = span_f1_by_language(gold, pred, langs)
    return {
        "macro_f1": metrics.get("macro").f1 if metrics else 0.0,
        "per_language": {
            lang: {"f1": m.f1, "precision": m.precision, "recall": m.recall}
            for lang, m in metrics.items()
            if lang != "macro"
        },
    }


# --- trainer -----------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    best_macro_f1: float
    epochs_run: int
    aborted: bool = False
    history: list[dict] = field(default_factory=list)


class Trainer:
    def __init__(
        self,
        config: Config,
        train_data: Dataset,
        val_data: Dataset,
        out_dir: str,
        seed: int | None = None,
    ):
        self.config = config
        self.train_data = train_data
        self.val_data = val_data
        self.out_dir = out_dir
        self.seed = config.training.seed if seed is None else seed
        os.makedirs(out_dir, exist_ok=True)

    def _language_stats(self) -> dict[str, np.ndarray]:
        stats = {}
        for lang in self.train_data.languages:
            seqs = self.train_data.by_language[lang]
            mean_len = float(np.mean([len(s) for s in seqs])) if seqs else 0.0
            vocab = self.train_data.vocabulary_size(lang)
            stats[lang] = np.array([math.log(max(vocab, 1)), mean_len])
        return stats

    def _doc_lookup(self, dataset: Dataset):
        def lookup(doc_id: str):
            try:
                return dataset.document(doc_id)
            except KeyError:
                return None

        return lookup

    def _sample_episodes(self, dataset: Dataset, count: int, k_support: int,
                         rng: np.random.Generator) -> list[Episode]:
        cfg = self.config.episodes
        langs = [l for l in self.config.languages if l in dataset.by_language]
        sim = default_similarity(
            langs, cfg.pair_self_similarity, cfg.pair_cross_similarity
        )
        episodes = []
        failures = 0
        while len(episodes) < count:
            try:
                episodes.append(
                    construct_episode(
                        dataset, cfg.n_way, k_support, cfg.k_query, langs,
                        cfg.type_temperature, cfg.pair_temperature, rng, sim,
                    )
                )
            except InsufficientData:
                # unlucky draw (document collisions across types): resample
                failures += 1
                if failures > 10 * count:
                    raise
        return episodes

    def train(self) -> TrainResult:
        cfg = self.config.training
        torch.manual_seed(component_seed(self.seed, "torch"))
        torch.set_num_threads(1)

        model = JointModel(self.config, seed=self.seed)
        if cfg.dtype == "float64":
            model.set_dtype(torch.float64)
        model.fit_corpus(self.train_data)
        model.train_mode(True)

        detector = LanguageDetector()
        texts = {
            lang: [" ".join(s.tokens) for s in seqs]
            for lang, seqs in self.train_data.by_language.items()
        }
        detector.fit(texts)

        lda_terms = build_lda_terms(model, self.train_data)
        sampler = ParallelSampler(
            self.train_data, model, self.config.encoder.curriculum_beta
        )
        lang_stats = self._language_stats()
        lang_weights = {lang: np.ones(2) for lang in lang_stats}

        lrs = module_learning_rates(cfg)
        groups = [
            {
                "name": name,
                "params": list(module.parameters()),
                "lr": lrs.get(name, cfg.lr_entity),
                "weight_decay": cfg.weight_decay,
            }
            for name, module in model.torch_modules().items()
        ]
        optimizer = ModulewiseAdamW(groups, cfg.beta1, cfg.beta2, cfg.adam_eps)
        all_params = list(optimizer.parameters())

        steps_per_epoch = max(1, cfg.episodes_per_epoch // cfg.grad_accumulation)
        t_total = cfg.epochs * steps_per_epoch
        weights = {
            "ner": self.config.loss.w_ner,
            "topic": self.config.loss.w_topic,
            "align": self.config.loss.w_align,
            "contrast": self.config.loss.w_contrast,
            "reg": self.config.loss.w_reg,
        }

        rng = np.random.default_rng(component_seed(self.seed, "episodes"))
        log_path = os.path.join(self.out_dir, "training_log.jsonl")
        ckpt_path = os.path.join(self.out_dir, "best.ckpt")
        train_lookup = self._doc_lookup(self.train_data)
        val_lookup = self._doc_lookup(self.val_data)
        theta_cache: dict = {}
        val_theta_cache: dict = {}

        best_f1 = -1.0
        epochs_since_improve = 0
        history: list[dict] = []
        aborted = False
        step = 0
        save_checkpoint(model, ckpt_path, detector, {"epoch": 0, "macro_f1": 0.0})

        with open(log_path, "w", encoding="utf-8") as log:
            for epoch in range(1, cfg.epochs + 1):
                t_epoch = time.monotonic()
                for _ in range(steps_per_epoch):
                    episodes = self._sample_episodes(
                        self.train_data, cfg.grad_accumulation,
                        self.config.episodes.k_support, rng,
                    )
                    by_lang: dict[str, list[Episode]] = {}
                    for ep in episodes:
                        by_lang.setdefault(ep.languages[0], []).append(ep)

                    grads_by_lang: dict[str, list[torch.Tensor]] = {}
                    last_breakdown = None
                    for lang, eps in sorted(by_lang.items()):
                        optimizer.zero_grad()
                        objective = torch.zeros(())
                        for ep in eps:
                            pairs = sampler.sample(
                                cfg.parallel_pairs_per_step, rng
                            )
                            breakdown, extras, support_pairs = episode_objective(
                                model, ep, train_lookup, lda_terms, pairs, weights,
                                theta_cache,
                            )
                            enc_cfg = self.config.encoder
                            objective = objective + (
                                breakdown.total
                                + enc_cfg.align_lambda * extras["encoder_align"]
                                + enc_cfg.diversity_lambda
                                * extras["prototype_diversity"]
                            ) / len(episodes)
                            last_breakdown = breakdown
                            with torch.no_grad():
                                bank_update(
                                    model.bank, batch_statistics(support_pairs)
                                )
                        if not torch.isfinite(objective):
                            aborted = True
                            break
                        objective.backward()
                        grads = [
                            p.grad.clone() if p.grad is not None else torch.zeros_like(p)
                            for p in all_params
                        ]
                        clip_gradients(grads, cfg.clip_norm)
                        grads_by_lang[lang] = grads
                    if aborted:
                        break

                    if len(grads_by_lang) == 1:
                        combined = next(iter(grads_by_lang.values()))
                    else:
                        combined, _ = language_gradient_scale(
                            grads_by_lang, lang_weights, lang_stats
                        )
                    for p, g in zip(all_params, combined):
                        p.grad = g
                    step += 1
                    scale = schedule_scale(
                        step, cfg.warmup_steps, t_total, cfg.cosine_floor
                    )
                    optimizer.step(lr_scale=scale)

                    if last_breakdown is not None:
                        log.write(
                            json.dumps(
                                {
                                    "step": step,
                                    "epoch": epoch,
                                    "lr": {
                                        g["name"]: g["lr"] * scale for g in groups
                                    },
                                    "loss": last_breakdown.to_dict(),
                                }
                            )
                            + "\n"
                        )
                if aborted:
                    logger.error("non-finite loss at epoch %d; aborting", epoch)
                    break

                val_rng = np.random.default_rng(
                    component_seed(self.seed, f"val:{epoch}")
                )
                model.train_mode(False)
                val_eps = self._sample_episodes(
                    self.val_data, cfg.val_episodes,
                    self.config.episodes.k_support, val_rng,
                )
                metrics = evaluate_episodes(model, val_eps, val_lookup, val_theta_cache)
                model.train_mode(True)
                entry = {
                    "epoch": epoch,
                    "macro_f1": metrics["macro_f1"],
                    "per_language": metrics["per_language"],
                    "seconds": round(time.monotonic() - t_epoch, 2),
                }
                history.append(entry)
                log.write(json.dumps({"validation": entry}) + "\n")
                logger.info(
                    "epoch %d macro-F1 %.4f (%.1fs)",
                    epoch, metrics["macro_f1"], entry["seconds"],
                )

                if metrics["macro_f1"] > best_f1:
                    best_f1 = metrics["macro_f1"]
                    epochs_since_improve = 0
                    save_checkpoint(
                        model, ckpt_path, detector,
                        {"epoch": epoch, "macro_f1": best_f1},
                    )
                else:
                    epochs_since_improve += 1
                    if epochs_since_improve > cfg.patience:
                        logger.info("early stop at epoch %d", epoch)
                        break

                loss_cfg = self.config.loss
                if (
                    loss_cfg.adapt_every > 0
                    and epoch % loss_cfg.adapt_every == 0
                    and epochs_since_improve > 0
                ):
                    # plateau: emphasize the task loss, capped at 10x
                    weights["ner"] = min(
                        weights["ner"] * loss_cfg.adapt_factor, 10 * loss_cfg.w_ner
                    )

        return TrainResult(
            checkpoint_path=ckpt_path,
            log_path=log_path,
            best_macro_f1=max(best_f1, 0.0),
            epochs_run=len(history),
            aborted=aborted,
            history=history,
        )


def train_model(
    config: Config,
    train_data: Dataset,
    val_data: Dataset,
    out_dir: str,
    seed: int | None = None,
) -> TrainResult:
    return Trainer(config, train_data, val_data, out_dir, seed).train()
