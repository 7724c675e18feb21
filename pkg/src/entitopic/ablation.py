"""Paired ablation runs on the synthetic disambiguation suite.

Each ablation trains two models with shared seeds and shared evaluation
episodes: the full configuration and one with a component dropped.  Results
are cached per (variant, seed) on disk so repeated comparisons (and the
acceptance suite) reuse finished runs.
"""

from __future__ import annotations

import dataclasses
import json
import os

from .checkpoint import load_checkpoint
from .config import Config, config_from_dict
from .evaluation import few_shot_eval
from .synth import make_disambiguation_split, suite_config
from .training import train_model

DROPPABLE = ("none", "encoder-calibration", "bridge", "contrastive")

EVAL_SEED_OFFSET = 777
EVAL_EPISODES = 36


def apply_drop(config: Config, drop: str) -> Config:
    """Return a copy of the config with one component disabled."""
    if drop not in DROPPABLE:
        raise ValueError(f"unknown component {drop!r}; choose from {DROPPABLE}")
    data = config.to_dict()
    if drop == "bridge":
        data["bridge"]["enabled"] = False
    elif drop == "encoder-calibration":
        data["encoder"]["calibration_enabled"] = False
    elif drop == "contrastive":
        data["loss"]["w_contrast"] = 0.0
    return config_from_dict(data)


def run_suite_variant(
    drop: str,
    seed: int,
    out_dir: str,
    config: Config | None = None,
    k_eval_shots: tuple[int, ...] = (5,),
) -> dict:
    """Train one variant on the suite and evaluate it; cached on disk.

    The cache key includes the config hash, so stale results from a
    different configuration are never reused.
    """
    import time

    base = config or suite_config()
    cfg = apply_drop(base, drop)
    os.makedirs(out_dir, exist_ok=True)
    cache = os.path.join(
        out_dir, f"run_{drop}_{seed}_{cfg.content_hash()}.json"
    )
    if os.path.exists(cache):
        with open(cache, "r", encoding="utf-8") as f:
            return json.load(f)

    train_data, val_data = make_disambiguation_split(seed)
    run_dir = os.path.join(out_dir, f"{drop}_{seed}")
    t0 = time.monotonic()
    result = train_model(cfg, train_data, val_data, run_dir, seed=seed)
    train_seconds = time.monotonic() - t0
    model, _, _ = load_checkpoint(result.checkpoint_path)

    evals = {}
    for k in k_eval_shots:
        metrics = few_shot_eval(
            model, val_data,
            cfg.episodes.n_way, k, cfg.episodes.k_query,
            EVAL_EPISODES, seed + EVAL_SEED_OFFSET,
        )
        evals[str(k)] = metrics["macro_f1"]
    record = {
        "drop": drop,
        "seed": seed,
        "f1_by_k": evals,
        "f1": evals[str(k_eval_shots[0])],
        "val_f1": result.best_macro_f1,
        "checkpoint": result.checkpoint_path,
        "epochs_run": result.epochs_run,
        "train_seconds": round(train_seconds, 2),
    }
    with open(cache, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
    return record


def run_ablation(
    drop: str,
    seeds: list[int],
    out_dir: str,
    config: Config | None = None,
) -> dict:
    """Full-vs-dropped comparison across seeds; reports per-seed deltas."""
    runs = []
    for seed in seeds:
        full = run_suite_variant("none", seed, out_dir, config)
        dropped = run_suite_variant(drop, seed, out_dir, config)
        runs.append(
            {
                "seed": seed,
                "full_f1": full["f1"],
                "dropped_f1": dropped["f1"],
                "delta": full["f1"] - dropped["f1"],
            }
        )
    mean_delta = sum(r["delta"] for r in runs) / len(runs)
    return {
        "component": drop,
        "seeds": list(seeds),
        "runs": runs,
        "mean_full_f1": sum(r["full_f1"] for r in runs) / len(runs),
        "mean_dropped_f1": sum(r["dropped_f1"] for r in runs) / len(runs),
        "mean_delta": mean_delta,
    }


def describe_config(config: Config) -> dict:
    return dataclasses.asdict(config)
