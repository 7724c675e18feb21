"""Command-line entry points: train, eval, ablate, infer, config, make-data."""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from .checkpoint import load_checkpoint
from .config import Config, dump_default_config, load_config
from .data import Dataset, TokenSequence, read_conll, write_conll
from .encoder import tokenize
from .errors import EntitopicError
from .evaluation import (
    few_shot_eval,
    ner_table,
    table_to_csv,
    topic_quality,
    topic_table,
)
from .inference import Inferencer
from .sample_data import build_sample_corpus, sample_manifest_path
from .training import train_model

logger = logging.getLogger(__name__)


def _load_dataset(manifest: str | None) -> Dataset:
    path = manifest or sample_manifest_path()
    if not os.path.exists(path):
        raise click.ClickException(f"dataset manifest not found: {path}")
    return Dataset.from_manifest(path)


def _split_dataset(dataset: Dataset, val_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Deterministic document-level split."""
    import zlib

    train_seqs, val_seqs = [], []
    for seq in dataset.sequences:
        bucket = zlib.crc32(seq.doc_id.encode("utf-8")) % 100
        (val_seqs if bucket < int(val_fraction * 100) else train_seqs).append(seq)
    train = Dataset(train_seqs, dataset.parallel, dataset.dictionaries)
    val = Dataset(val_seqs, dataset.parallel, dataset.dictionaries)
    return train, val


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable info logging.")
def main(verbose: bool) -> None:
    """Few-shot multilingual NER with topic-aware context."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("config")
@click.option("--dump-defaults", is_flag=True, help="Print the default config YAML.")
@click.option("--validate", "validate_path", type=click.Path(exists=True),
              help="Check a config file against the schema.")
def config_cmd(dump_defaults: bool, validate_path: str | None) -> None:
    """Inspect or validate configuration files."""
    if dump_defaults:
        click.echo(dump_default_config(), nl=False)
        return
    if validate_path:
        try:
            load_config(validate_path)
        except EntitopicError as exc:
            raise click.ClickException(str(exc)) from exc
        click.echo(f"{validate_path}: ok")
        return
    raise click.UsageError("nothing to do: pass --dump-defaults or --validate")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="YAML config; defaults apply when omitted.")
@click.option("--data", "data_path", type=click.Path(),
              help="Dataset manifest (default: the bundled sample corpus).")
@click.option("--val-data", "val_path", type=click.Path(),
              help="Validation manifest (default: a 20% document split).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def train_cmd(config_path, data_path, val_path, out_dir, seed) -> None:
    """Train a model and write the best checkpoint plus a JSONL log."""
    try:
        cfg = load_config(config_path) if config_path else Config()
        dataset = _load_dataset(data_path)
        if val_path:
            train_data, val_data = dataset, _load_dataset(val_path)
        else:
            train_data, val_data = _split_dataset(dataset)
        result = train_model(cfg, train_data, val_data, out_dir, seed=seed)
    except EntitopicError as exc:
        raise click.ClickException(str(exc)) from exc
    if result.aborted:
        raise click.ClickException(
            f"training diverged; last good checkpoint at {result.checkpoint_path}"
        )
    click.echo(
        json.dumps(
            {
                "checkpoint": result.checkpoint_path,
                "log": result.log_path,
                "best_macro_f1": round(result.best_macro_f1, 4),
                "epochs_run": result.epochs_run,
            }
        )
    )


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(),
              help="Dataset manifest (default: the bundled sample corpus).")
@click.option("--n-way", type=int, default=4, show_default=True)
@click.option("--k-shot", "k_shots", type=int, multiple=True, default=(1, 5),
              show_default=True, help="Support sizes to evaluate (repeatable).")
@click.option("--k-query", type=int, default=2, show_default=True)
@click.option("--episodes", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def eval_cmd(checkpoint, data_path, n_way, k_shots, k_query, episodes, seed, out_dir) -> None:
    """Few-shot NER metrics and topic quality for a trained checkpoint."""
    try:
        model, _, _ = load_checkpoint(checkpoint)
        dataset = _load_dataset(data_path)
        results = [
            few_shot_eval(model, dataset, n_way, k, k_query, episodes, seed)
            for k in k_shots
        ]
        languages = [l for l in model.config.languages if l in dataset.by_language]
        ner = ner_table(results, languages)
        topics = topic_table(topic_quality(model, dataset))
    except EntitopicError as exc:
        raise click.ClickException(str(exc)) from exc

    os.makedirs(out_dir, exist_ok=True)
    payload = {"ner": ner, "topic": topics}
    json_path = os.path.join(out_dir, "metrics.json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    for name, table in payload.items():
        with open(os.path.join(out_dir, f"{name}.csv"), "w", encoding="utf-8") as f:
            f.write(table_to_csv(table))
    click.echo(json.dumps(payload["ner"]))
    click.echo(json.dumps(payload["topic"]))
    click.echo(f"written: {json_path}")


@main.command("ablate")
@click.option("--drop", type=click.Choice(
    ["none", "encoder-calibration", "bridge", "contrastive"]), required=True)
@click.option("--seeds", default="0,1,2", show_default=True,
              help="Comma-separated training seeds.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def ablate_cmd(drop, seeds, out_dir) -> None:
    """Paired full-vs-dropped runs on the synthetic disambiguation suite."""
    from .ablation import run_ablation

    seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    try:
        report = run_ablation(drop, seed_list, out_dir)
    except EntitopicError as exc:
        raise click.ClickException(str(exc)) from exc
    path = os.path.join(out_dir, f"ablation_{drop}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
    click.echo(json.dumps(report))


@main.command("infer")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["text", "conll"]),
              default="text", show_default=True)
@click.option("--language", default=None,
              help="Fix the language instead of detecting it.")
def infer_cmd(checkpoint, input_path, output_path, fmt, language) -> None:
    """Predict tags and topics for plain-text or CoNLL input; JSONL output."""
    try:
        model, detector, _ = load_checkpoint(checkpoint)
        inferencer = Inferencer(model, detector)
        docs = []
        if fmt == "conll":
            lang = language or (model.config.inference.default_language or
                                model.config.languages[0])
            for i, seq in enumerate(read_conll(input_path, lang)):
                docs.append(
                    TokenSequence(seq.tokens, lang, None, seq.doc_id or f"doc:{i}")
                )
        else:
            with open(input_path, "r", encoding="utf-8") as f:
                for i, line in enumerate(f):
                    line = line.strip()
                    if not line:
                        continue
                    if language:
                        seq = tokenize(line, language)
                        docs.append(
                            TokenSequence(seq.tokens, language, None, f"doc:{i}")
                        )
                    else:
                        docs.append(line)
        if not docs:
            raise click.ClickException(f"input file {input_path} has no documents")
        results = inferencer.batch_infer(docs)
    except EntitopicError as exc:
        raise click.ClickException(str(exc)) from exc

    failures = 0
    with open(output_path, "w", encoding="utf-8") as f:
        for res in results:
            if hasattr(res, "to_json"):
                f.write(res.to_json() + "\n")
            else:
                failures += 1
                f.write(json.dumps({"doc_id": res.doc_id, "error": res.error}) + "\n")
    click.echo(f"wrote {len(results)} predictions ({failures} failures) to {output_path}")
    if failures == len(results):
        sys.exit(1)


@main.command("make-data")
@click.option("--kind", type=click.Choice(["sample", "suite"]), default="sample",
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=13, show_default=True)
def make_data_cmd(kind, out_dir, seed) -> None:
    """Regenerate the bundled sample corpus or the synthetic suite."""
    if kind == "sample":
        manifest = build_sample_corpus(out_dir, seed=seed)
        click.echo(f"sample corpus written; manifest: {manifest}")
        return
    from .synth import make_disambiguation_split

    train, val = make_disambiguation_split(seed)
    os.makedirs(out_dir, exist_ok=True)
    for name, data in (("train", train), ("val", val)):
        manifest = {"languages": {}}
        for lang in data.languages:
            fname = f"{name}_{lang}.conll"
            write_conll(os.path.join(out_dir, fname), data.by_language[lang])
            manifest["languages"][lang] = fname
        with open(os.path.join(out_dir, f"{name}_manifest.json"), "w",
                  encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
    click.echo(f"suite written to {out_dir}")


if __name__ == "__main__":
    main()
