"""Acceptance suite: one test per numbered criterion.

Each test prints a single ``[ACCEPT nn] PASS/FAIL`` line (visible with
``pytest -s`` or on failure).  The paired training runs behind the ablation
criteria are cached on disk keyed by the suite config hash, so re-running
the suite reuses finished models; the timing criterion uses the recorded
fresh-run durations.
"""

import itertools
import json
import math
import os
import tempfile
import time

import numpy as np
import pytest
import torch
from scipy.optimize import linear_sum_assignment
from scipy.stats import chisquare

torch.set_num_threads(1)

SEEDS = (0, 1, 2)


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"\n[ACCEPT {num:02d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def suite_cache_dir() -> str:
    from entitopic.synth import suite_config

    override = os.environ.get("ENTITOPIC_ACCEPTANCE_CACHE")
    if override:
        return override
    return os.path.join(
        tempfile.gettempdir(), f"entitopic-suite-{suite_config().content_hash()}"
    )


@pytest.fixture(scope="session")
def suite_records():
    """Train (or load) all suite variants for all seeds."""
    from entitopic.ablation import run_suite_variant

    cache = suite_cache_dir()
    records = {}
    for seed in SEEDS:
        for drop in ("none", "bridge", "encoder-calibration", "contrastive"):
            records[(drop, seed)] = run_suite_variant(
                drop, seed, cache, k_eval_shots=(5, 1)
            )
    return records


@pytest.fixture(scope="session")
def tiny_trained():
    """A quickly trained single-language model for inference criteria."""
    from entitopic.checkpoint import load_checkpoint
    from entitopic.synth import make_separable_dataset, smoke_config
    from entitopic.training import train_model

    cfg = smoke_config(
        training={"epochs": 2, "episodes_per_epoch": 12, "val_episodes": 4},
        inference={"default_language": "en"},
    )
    train = make_separable_dataset(0, n_docs=140, doc_prefix="tr")
    val = make_separable_dataset(1, n_docs=70, doc_prefix="va")
    with tempfile.TemporaryDirectory() as tmp:
        result = train_model(cfg, train, val, tmp, seed=0)
        model, detector, _ = load_checkpoint(result.checkpoint_path)
    return model, detector, val


class TestCriterion01CrfOracle:
    def test_crf_matches_exhaustive_enumeration(self):
        from entitopic.entity import CrfParams, crf_log_partition, viterbi

        started = time.monotonic()
        rng = np.random.default_rng(0)
        gen = torch.Generator().manual_seed(0)
        max_abs_err = 0.0
        for case in range(500):
            n = int(rng.integers(1, 7))
            n_tags = int(rng.integers(2, 6))
            tags = tuple(f"t{i}" for i in range(n_tags))
            params = CrfParams(tags, constrained=False).double()
            with torch.no_grad():
                params.transitions.copy_(
                    torch.randn(n_tags, n_tags, generator=gen)
                )
                params.start.copy_(torch.randn(n_tags, generator=gen))
                params.end.copy_(torch.randn(n_tags, generator=gen))
            emissions = torch.randn(n, n_tags, generator=gen).double()

            # vectorized exhaustive oracle over all n_tags**n paths
            paths = np.array(
                list(itertools.product(range(n_tags), repeat=n)), dtype=np.int64
            )
            em = emissions.numpy()
            tr = params.transition_scores().detach().numpy()
            scores = params.start_scores().detach().numpy()[paths[:, 0]].copy()
            scores += params.end.detach().numpy()[paths[:, -1]]
            for i in range(n):
                scores += em[i, paths[:, i]]
            for i in range(1, n):
                scores += tr[paths[:, i - 1], paths[:, i]]

            oracle_log_z = float(
                np.logaddexp.reduce(scores.astype(np.float64))
            )
            log_z = float(crf_log_partition(emissions, params))
            max_abs_err = max(max_abs_err, abs(log_z - oracle_log_z))
            assert abs(log_z - oracle_log_z) < 1e-6, f"case {case}"

            best = int(np.argmax(scores))
            decoded, score = viterbi(emissions, params)
            decoded_ids = tuple(params.tag_index[t] for t in decoded)
            assert decoded_ids == tuple(paths[best]), f"case {case}"
            assert abs(score - float(scores[best])) < 1e-6

        elapsed = time.monotonic() - started
        report(
            1, "CRF oracle equivalence", elapsed < 30,
            f"500 instances, max |logZ err| {max_abs_err:.2e}, {elapsed:.1f}s",
        )


class TestCriterion02GradientSuite:
    def test_all_losses_match_finite_differences(self):
        from conftest import assert_grad_matches
        from entitopic.encoder import contrastive_align_loss
        from entitopic.entity import CrfParams
        from entitopic.losses import (
            cross_task_align_loss,
            ner_loss,
            regularization,
            topic_loss,
            total_loss,
        )

        started = time.monotonic()
        torch.manual_seed(0)
        checked = []

        # component: NER loss (token CE + CRF NLL)
        params = CrfParams(("O", "B-PER", "I-PER"), constrained=True)
        emissions = torch.randn(4, 3, generator=torch.Generator().manual_seed(1)).double()

        def ner_fn():
            logp = torch.log_softmax(emissions, dim=-1)
            return ner_loss(logp, emissions, ["O", "B-PER", "I-PER", "O"], params, 0.8)

        assert_grad_matches(ner_fn, emissions, [(0, 0), (1, 1), (2, 2), (3, 0)])
        checked.append("ner")

        # component: topic loss (prototype orthogonality half)
        phi = np.full((2, 4), 0.25)
        pmi = np.zeros((4, 4))
        protos = torch.randn(3, 4, generator=torch.Generator().manual_seed(2)).double()
        assert_grad_matches(
            lambda: topic_loss(phi, pmi, protos, 0.4), protos, [(0, 0), (2, 3)]
        )
        checked.append("topic")

        # component: cross-task alignment with dependence surrogate
        proj = torch.nn.Linear(4, 4).double()
        h_e = torch.randn(6, 4, generator=torch.Generator().manual_seed(3)).double()
        h_t = torch.randn(6, 4, generator=torch.Generator().manual_seed(4)).double()
        assert_grad_matches(
            lambda: cross_task_align_loss(h_e, h_t, proj, proj, 0.2),
            h_e, [(0, 0), (3, 2), (5, 3)],
        )
        checked.append("align")

        # component: contrastive loss
        anchor = torch.randn(5, generator=torch.Generator().manual_seed(5)).double()
        pos = torch.randn(5, generator=torch.Generator().manual_seed(6)).double()
        negs = [torch.randn(5, generator=torch.Generator().manual_seed(7 + i)).double()
                for i in range(3)]
        assert_grad_matches(
            lambda: contrastive_align_loss(anchor, pos, negs, 0.3),
            anchor, [(0,), (2,), (4,)],
        )
        checked.append("contrast")

        # component: regularization (entropy penalty through a softmax)
        logits = torch.randn(2, 4, generator=torch.Generator().manual_seed(11)).double()

        def reg_fn():
            p = torch.softmax(logits, dim=-1)
            return regularization(p, p[:1], (logits**2).sum(), 1e-3)

        assert_grad_matches(reg_fn, logits, [(0, 0), (1, 3)])
        checked.append("reg")

        # full weighted objective on a d_model=16 joint model
        from entitopic.episodes import construct_episode, default_similarity
        from entitopic.model import JointModel
        from entitopic.synth import make_separable_dataset, smoke_config
        from entitopic.training import episode_objective

        cfg = smoke_config(
            encoder={"d_model": 16, "n_layers": 1, "n_heads": 2, "ffn_dim": 32},
            entity={"n_heads": 2},
            bridge={"enabled": True, "n_heads": 2},
            training={"dtype": "float64"},
        )
        data = make_separable_dataset(5, n_docs=60)
        model = JointModel(cfg, seed=0)
        model.set_dtype(torch.float64)
        model.fit_corpus(data)
        episode = construct_episode(
            data, 3, 2, 1, ["en"], 1.0, 1.0, np.random.default_rng(0),
            default_similarity(["en"]),
        )
        weights = {"ner": 1.0, "topic": 0.5, "align": 0.1, "contrast": 0.1,
                   "reg": 0.01}

        def total_fn():
            breakdown, _, _ = episode_objective(
                model, episode, None, {}, [], weights
            )
            return breakdown.total

        probes = [
            (model.encoder.layers[0].attn.q_proj.weight, (0, 0)),
            (model.encoder.embedder.word_table.weight, (7, 3)),
            (model.entity_encoder.proj.weight, (1, 2)),
            (model.crf.transitions, (0, 1)),
            (model.topic_fusion.fuse.weight, (2, 2)),
            (model.bridge.gate.weight, (0, 0)),
        ]
        for tensor, coord in probes:
            assert_grad_matches(total_fn, tensor, [coord], rel_tol=1e-4, eps=1e-5)
        checked.append("total")

        elapsed = time.monotonic() - started
        report(
            2, "gradient suite", elapsed < 120,
            f"components {checked} all match finite differences, {elapsed:.1f}s",
        )


class TestCriterion03BioSoundness:
    def test_thousand_decodes_no_forbidden_transitions(self):
        from entitopic.config import Config
        from entitopic.data import bio_violations
        from entitopic.entity import CrfParams, viterbi

        tags = Config().tag_set
        params = CrfParams(tags, constrained=True)
        gen = torch.Generator().manual_seed(3)
        with torch.no_grad():
            params.transitions.copy_(
                torch.randn(len(tags), len(tags), generator=gen) * 2
            )
        violations = 0
        for _ in range(1000):
            n = int(torch.randint(1, 10, (1,), generator=gen))
            emissions = torch.randn(n, len(tags), generator=gen) * 4
            decoded, _ = viterbi(emissions, params)
            violations += len(bio_violations(decoded))
        report(3, "BIO soundness", violations == 0,
               f"{violations} violations in 1000 decodes")


class TestCriterion04PrototypeProperties:
    def test_prototype_contracts(self):
        from entitopic.entity import (
            PrototypeBank,
            bank_update,
            compute_prototype,
            prototype_log_probs,
        )

        gen = torch.Generator().manual_seed(4)
        bank = PrototypeBank(momentum=0.5, attention=torch.eye(6))

        # permutation invariance
        vecs = [torch.randn(6, generator=gen) for _ in range(4)]
        query = torch.randn(6, generator=gen)
        base = compute_prototype([(v, "T") for v in vecs], query, bank, "T")
        for perm in itertools.permutations(range(4)):
            p = compute_prototype([(vecs[i], "T") for i in perm], query, bank, "T")
            assert torch.allclose(p, base, atol=1e-6)

        # convex hull membership on a simplex
        simplex = [torch.eye(3)[i] for i in range(3)]
        bank3 = PrototypeBank(momentum=0.5, attention=torch.eye(3))
        proto = compute_prototype(
            [(v, "S") for v in simplex], torch.randn(3, generator=gen), bank3, "S"
        )
        hull_ok = proto.min() >= -1e-7 and abs(float(proto.sum()) - 1.0) < 1e-6

        # softmax normalization at 1e-9
        probs_bank = PrototypeBank(momentum=0.5)
        bank_update(
            probs_bank,
            {f"t{i}": (torch.randn(6, generator=gen), torch.zeros(6), 1)
             for i in range(5)},
        )
        total = sum(prototype_log_probs(torch.randn(6, generator=gen), probs_bank).values())
        norm_ok = abs(total - 1.0) < 1e-9

        # EMA endpoints
        b0 = PrototypeBank(momentum=0.0)
        bank_update(b0, {"A": (torch.tensor([1.0]), torch.zeros(1), 1)})
        bank_update(b0, {"A": (torch.tensor([9.0]), torch.zeros(1), 1)})
        gamma0_ok = float(b0.entries["A"].prototype) == 1.0
        b1 = PrototypeBank(momentum=1.0)
        bank_update(b1, {"A": (torch.tensor([1.0]), torch.zeros(1), 1)})
        bank_update(b1, {"A": (torch.tensor([9.0]), torch.zeros(1), 1)})
        gamma1_ok = float(b1.entries["A"].prototype) == 9.0

        ok = hull_ok and norm_ok and gamma0_ok and gamma1_ok
        report(4, "prototype properties", ok,
               f"hull={hull_ok} norm={norm_ok} ema0={gamma0_ok} ema1={gamma1_ok}")


class TestCriterion05LdaRecovery:
    def test_two_topic_recovery_with_invariants(self):
        from entitopic.topic import gibbs_train

        started = time.monotonic()
        rng = np.random.default_rng(5)
        vocab_a = [f"a{i}" for i in range(12)]
        vocab_b = [f"b{i}" for i in range(12)]
        docs = []
        for d in range(500):
            pool = vocab_a if d % 2 == 0 else vocab_b
            docs.append([pool[int(rng.integers(12))] for _ in range(12)])

        state = gibbs_train(
            docs, 2, 0.5, 0.01, 200, np.random.default_rng(0),
            check_invariants_every=1,
        )
        phi = state.topic_word_dist()
        truth = np.zeros((2, len(state.vocab)))
        for j, w in enumerate(state.vocab):
            truth[0 if w.startswith("a") else 1, j] = 1 / 12
        cost = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                cost[i, j] = 0.5 * np.abs(phi[i] - truth[j]).sum()
        rows, cols = linear_sum_assignment(cost)
        tv = float(cost[rows, cols].mean())
        elapsed = time.monotonic() - started
        report(
            5, "LDA recovery", tv < 0.2 and elapsed < 60,
            f"matched TV distance {tv:.3f}, invariants checked every sweep, "
            f"{elapsed:.1f}s",
        )


class TestCriterion06CoherenceOracles:
    def test_fixture_values(self):
        from entitopic.topic import (
            CooccurrenceCounts,
            DocFrequency,
            diversity_score,
            npmi,
            umass,
        )

        docs = [
            ["sun", "moon", "star"],
            ["sun", "moon"],
            ["sun", "rock"],
            ["moon", "rock", "tree"],
        ]
        cooc = CooccurrenceCounts.from_corpus(docs)
        freq = DocFrequency.from_corpus(docs)

        # brute-force NPMI for the topic [sun, moon, rock]
        windows = [set(d) for d in docs]
        n = len(windows)
        eps = 1e-12

        def p(*words):
            return sum(all(w in win for w in words) for win in windows) / n

        pairs = [("sun", "moon"), ("sun", "rock"), ("moon", "rock")]
        expected_npmi = np.mean(
            [
                (math.log(p(a, b) + eps) - math.log((p(a) + eps) * (p(b) + eps)))
                / -math.log(p(a, b) + eps)
                for a, b in pairs
            ]
        )
        got_npmi = npmi([["sun", "moon", "rock"]], cooc)
        npmi_ok = abs(got_npmi - expected_npmi) < 1e-9

        # hand-enumerated UMass: D(sun)=3, D(moon)=3;
        # D(moon,sun)=2, D(rock,sun)=1, D(rock,moon)=1
        expected_umass = (
            math.log(3 / 3) + math.log(2 / 3) + math.log(2 / 3)
        )
        got_umass = umass([["sun", "moon", "rock"]], freq)
        umass_ok = abs(got_umass - expected_umass) < 1e-9

        div_ok = (
            diversity_score([["a", "b", "c"]] * 4) == pytest.approx(0.25)
            and diversity_score([["a", "b"], ["c", "d"]]) == 1.0
            and diversity_score(
                [["a", "b", "c", "d", "e"], ["a", "b", "x", "y", "z"]]
            ) == pytest.approx(0.8)
        )
        ok = npmi_ok and umass_ok and div_ok
        report(
            6, "coherence oracles", ok,
            f"npmi {got_npmi:.6f} (oracle {expected_npmi:.6f}), "
            f"umass {got_umass:.6f} (oracle {expected_umass:.6f}), "
            f"diversity exact={div_ok}",
        )


class TestCriterion07BridgeGain:
    def test_mean_bridge_gain_exceeds_two_points(self, suite_records):
        full = [suite_records[("none", s)]["f1"] for s in SEEDS]
        dropped = [suite_records[("bridge", s)]["f1"] for s in SEEDS]
        gain = float(np.mean(full) - np.mean(dropped))
        runtime = sum(
            suite_records[(d, s)].get("train_seconds", 0.0)
            for d in ("none", "bridge")
            for s in SEEDS
        )
        ok = gain > 0.02 and runtime < 600
        report(
            7, "cross-task bridge gain", ok,
            f"mean F1 with bridge {np.mean(full):.4f} vs without "
            f"{np.mean(dropped):.4f} (gain {100 * gain:.1f} points), "
            f"training time {runtime:.0f}s",
        )


class TestCriterion08AblationOrdering:
    def test_component_drop_ordering(self, suite_records):
        full = np.mean([suite_records[("none", s)]["f1"] for s in SEEDS])
        drops = {
            name: full - np.mean(
                [suite_records[(name, s)]["f1"] for s in SEEDS]
            )
            for name in ("encoder-calibration", "bridge", "contrastive")
        }
        ok = (
            drops["encoder-calibration"] > drops["bridge"] > drops["contrastive"]
        )
        report(
            8, "ablation ordering", ok,
            "drop deltas: calibration "
            f"{100 * drops['encoder-calibration']:.1f} > bridge "
            f"{100 * drops['bridge']:.1f} > contrastive "
            f"{100 * drops['contrastive']:.1f} (points)",
        )


class TestCriterion09SupportMonotonicity:
    def test_five_shot_beats_one_shot_every_seed(self, suite_records):
        gaps = []
        for seed in SEEDS:
            rec = suite_records[("none", seed)]
            gaps.append(rec["f1_by_k"]["5"] - rec["f1_by_k"]["1"])
        ok = all(g > 0 for g in gaps)
        report(
            9, "support-size monotonicity", ok,
            "5-shot minus 1-shot per seed: "
            + ", ".join(f"{100 * g:.1f}" for g in gaps),
        )


class TestCriterion10LanguageDetection:
    def test_held_out_accuracy(self):
        from entitopic.data import Dataset
        from entitopic.inference import LanguageDetector
        from entitopic.sample_data import sample_manifest_path

        data = Dataset.from_manifest(sample_manifest_path())
        train_texts, held_out = {}, []
        for lang, seqs in data.by_language.items():
            texts = [" ".join(s.tokens) for s in seqs]
            train_texts[lang] = texts[:160]
            held_out.extend((lang, t) for t in texts[160:])
        started = time.monotonic()
        detector = LanguageDetector().fit(train_texts)
        fit_seconds = time.monotonic() - started
        correct = sum(
            detector.predict(text)[0] == lang for lang, text in held_out
        )
        accuracy = correct / len(held_out)
        ok = accuracy > 0.95 and fit_seconds < 10
        report(
            10, "language detection", ok,
            f"held-out accuracy {100 * accuracy:.1f}% on {len(held_out)} "
            f"sentences across 5 languages, fit in {fit_seconds:.2f}s",
        )


class TestCriterion11SamplerDistributions:
    def test_chi_square_against_softmax_targets(self):
        from entitopic.episodes import sample_entity_types, sample_language_pair

        rng = np.random.default_rng(11)
        # entity-type sampling: P(e) proportional to exp(f(e))
        freq = {"a": 0.0, "b": math.log(2), "c": math.log(4), "d": math.log(8)}
        n = 10000
        counts = {t: 0 for t in freq}
        for _ in range(n):
            counts[sample_entity_types(freq, 1, 1.0, rng)[0]] += 1
        weights = np.array([1, 2, 4, 8], dtype=float)
        expected = weights / weights.sum() * n
        observed = np.array([counts[t] for t in ("a", "b", "c", "d")])
        p_types = chisquare(observed, expected).pvalue

        # language-pair sampling over 2x2 ordered pairs
        langs = ["la", "lb"]
        sim = np.array([[math.log(2), 0.0], [0.0, math.log(2)]])
        pair_counts = np.zeros(4)
        for _ in range(n):
            l1, l2 = sample_language_pair(sim, 1.0, rng, langs)
            pair_counts[langs.index(l1) * 2 + langs.index(l2)] += 1
        pair_weights = np.exp(sim.reshape(-1))
        pair_expected = pair_weights / pair_weights.sum() * n
        p_pairs = chisquare(pair_counts, pair_expected).pvalue

        ok = p_types > 0.01 and p_pairs > 0.01
        report(
            11, "sampler distributions", ok,
            f"chi-square p-values: types {p_types:.3f}, pairs {p_pairs:.3f} "
            f"(10k draws each)",
        )


class TestCriterion12BatchingAndCaches:
    def test_batch_invariance_and_lru_contract(self, tiny_trained):
        from entitopic.inference import Inferencer, LruCache

        model, detector, val = tiny_trained
        docs = list(val.sequences[:12])
        sequential = [
            Inferencer(model, detector).joint_predict(d) for d in docs
        ]
        batched = Inferencer(model, detector).batch_infer(docs)
        shuffled_in = list(reversed(docs))
        shuffled = Inferencer(model, detector).batch_infer(shuffled_in)
        bit_equal = all(
            a.to_json() == b.to_json() for a, b in zip(sequential, batched)
        ) and all(
            a.to_json() == b.to_json()
            for a, b in zip(reversed(sequential), shuffled)
        )

        # LRU reference-model property over 10k random operations
        from test_inference import LruReferenceModel

        rng = np.random.default_rng(12)
        cache = LruCache(7)
        ref = LruReferenceModel(7)
        mismatches = 0
        for _ in range(10000):
            key = int(rng.integers(0, 25))
            if rng.random() < 0.5:
                cache.put(key, key * 3)
                ref.put(key, key * 3)
            else:
                if cache.get(key) != ref.get(key):
                    mismatches += 1
        ok = bit_equal and mismatches == 0
        report(
            12, "batching invariance and cache correctness", ok,
            f"bit-equal batches={bit_equal}, LRU mismatches={mismatches}/10k",
        )


class TestCriterion13EndToEndSmoke:
    def test_bundled_config_trains_evaluates_infers(self, tmp_path):
        import json as json_mod

        from click.testing import CliRunner
        from importlib import resources

        from entitopic.cli import main

        started = time.monotonic()
        runner = CliRunner()
        smoke_cfg = str(
            resources.files("entitopic.resources").joinpath("smoke.yaml")
        )
        out = tmp_path / "run"
        train_result = runner.invoke(
            main,
            ["train", "--config", smoke_cfg, "--out", str(out), "--seed", "0"],
        )
        assert train_result.exit_code == 0, train_result.output
        summary = json_mod.loads(train_result.output.strip().splitlines()[-1])

        eval_dir = tmp_path / "eval"
        eval_result = runner.invoke(
            main,
            ["eval", "--checkpoint", summary["checkpoint"],
             "--n-way", "4", "--k-shot", "1", "--k-shot", "3",
             "--episodes", "6", "--seed", "0", "--out", str(eval_dir)],
        )
        assert eval_result.exit_code == 0, eval_result.output
        payload = json_mod.load(open(eval_dir / "metrics.json"))
        f1_values = [row["macro_f1"] for row in payload["ner"]["rows"]]
        schema_ok = (
            payload["ner"]["columns"][0] == "configuration"
            and payload["topic"]["columns"]
            == ["language", "npmi", "umass", "diversity"]
            and all(0.0 <= f <= 1.0 for f in f1_values)
        )

        inp = tmp_path / "docs.txt"
        inp.write_text(
            "the minister said that Anna Weber will visit Lisbon next week .\n"
            "les analystes de Vectra AG prévoient une croissance .\n"
        )
        pred_path = tmp_path / "preds.jsonl"
        infer_result = runner.invoke(
            main,
            ["infer", "--checkpoint", summary["checkpoint"],
             "--input", str(inp), "--output", str(pred_path)],
        )
        assert infer_result.exit_code == 0, infer_result.output
        rows = [json_mod.loads(l) for l in open(pred_path)]
        preds_ok = len(rows) == 2 and all(
            set(r) >= {"doc_id", "language", "tags", "confidences", "flags",
                       "topic_dist"}
            for r in rows
        )
        elapsed = time.monotonic() - started
        ok = schema_ok and preds_ok and elapsed < 300
        report(
            13, "end-to-end smoke", ok,
            f"train+eval+infer on the bundled config in {elapsed:.0f}s, "
            f"schema valid={schema_ok}, predictions valid={preds_ok}",
        )


class TestTrainingQuality:
    def test_separable_task_reaches_high_f1(self):
        """200 training episodes on the separable task reach 0.9 F1."""
        from entitopic.synth import make_separable_dataset, smoke_config
        from entitopic.training import train_model

        cfg = smoke_config()
        train = make_separable_dataset(0, n_docs=160, doc_prefix="tr")
        val = make_separable_dataset(1, n_docs=60, doc_prefix="va")
        with tempfile.TemporaryDirectory() as tmp:
            result = train_model(cfg, train, val, tmp, seed=0)
        assert result.best_macro_f1 > 0.9, (
            f"validation macro-F1 {result.best_macro_f1:.3f} after "
            f"{cfg.training.epochs * cfg.training.episodes_per_epoch} episodes"
        )
