"""Few-shot evaluation and topic-quality reporting.

Builds seeded evaluation episodes, decodes query sets, and aggregates
span-level precision/recall/F1 per language; topic quality is NPMI, UMass,
and diversity of each language's topic model against the evaluation corpus.
"""

from __future__ import annotations

import numpy as np

from .config import Config
from .data import Dataset
from .episodes import construct_episode, default_similarity
from .errors import EntitopicError, InsufficientData
from .model import JointModel
from .topic import CooccurrenceCounts, DocFrequency, diversity_score, npmi, umass
from .training import evaluate_episodes


def build_eval_episodes(
    dataset: Dataset,
    config: Config,
    n_way: int,
    k_support: int,
    k_query: int,
    n_episodes: int,
    seed: int,
) -> list:
    if k_query < 1:
        raise EntitopicError("query set empty: k_query must be at least 1")
    rng = np.random.default_rng(seed)
    langs = [l for l in config.languages if l in dataset.by_language]
    sim = default_similarity(
        langs,
        config.episodes.pair_self_similarity,
        config.episodes.pair_cross_similarity,
    )
    episodes = []
    failures = 0
    while len(episodes) < n_episodes:
        try:
            episodes.append(
                construct_episode(
                    dataset, n_way, k_support, k_query, langs,
                    config.episodes.type_temperature,
                    config.episodes.pair_temperature,
                    rng, sim,
                )
            )
        except InsufficientData:
            failures += 1
            if failures > 10 * n_episodes:
                raise
    return episodes


def few_shot_eval(
    model: JointModel,
    dataset: Dataset,
    n_way: int,
    k_support: int,
    k_query: int,
    n_episodes: int,
    seed: int,
) -> dict:
    """Macro and per-language span F1 over seeded evaluation episodes."""
    episodes = build_eval_episodes(
        dataset, model.config, n_way, k_support, k_query, n_episodes, seed
    )

    def lookup(doc_id: str):
        try:
            return dataset.document(doc_id)
        except KeyError:
            return None

    result = evaluate_episodes(model, episodes, lookup)
    result["n_way"] = n_way
    result["k_shot"] = k_support
    result["episodes"] = n_episodes
    return result


def topic_quality(model: JointModel, dataset: Dataset) -> list[dict]:
    """Per-language topic metrics in the {language, npmi, umass, diversity}
    record layout."""
    rows = []
    top_m = model.config.topic.top_m
    for lang in sorted(model.lda):
        state = model.lda[lang]
        docs = [doc.tokens for doc in dataset.documents(lang)]
        if not docs:
            continue
        topics = state.top_words(top_m)
        cooc = CooccurrenceCounts.from_corpus(docs, model.config.topic.npmi_window)
        freq = DocFrequency.from_corpus(docs)
        rows.append(
            {
                "language": lang,
                "npmi": npmi(topics, cooc, model.config.topic.npmi_eps),
                "umass": umass(topics, freq),
                "diversity": diversity_score(topics),
            }
        )
    return rows


def ner_table(results: list[dict], languages: list[str]) -> dict:
    """Stable-schema table: one row per configuration, F1/precision per
    language plus the macro average."""
    rows = []
    for res in results:
        row = {"configuration": f"{res['n_way']}-way {res['k_shot']}-shot"}
        for lang in languages:
            lang_metrics = res["per_language"].get(lang, {})
            row[f"{lang}_f1"] = round(lang_metrics.get("f1", 0.0), 4)
            row[f"{lang}_precision"] = round(lang_metrics.get("precision", 0.0), 4)
        row["macro_f1"] = round(res["macro_f1"], 4)
        rows.append(row)
    header = ["configuration"]
    for lang in languages:
        header += [f"{lang}_f1", f"{lang}_precision"]
    header.append("macro_f1")
    return {"columns": header, "rows": rows}


def topic_table(rows: list[dict]) -> dict:
    return {
        "columns": ["language", "npmi", "umass", "diversity"],
        "rows": [
            {
                "language": r["language"],
                "npmi": round(r["npmi"], 4),
                "umass": round(r["umass"], 4),
                "diversity": round(r["diversity"], 4),
            }
            for r in rows
        ],
    }


def table_to_csv(table: dict) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=table["columns"])
    writer.writeheader()
    for row in table["rows"]:
        writer.writerow(row)
    return buf.getvalue()
