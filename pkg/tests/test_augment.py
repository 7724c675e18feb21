import numpy as np
import pytest

from entitopic.augment import (
    SubstitutionLexicons,
    augmentation_quality,
    back_translate,
    entity_substitute,
    perturb_context,
    quality_filter,
    structural_similarity,
)
from entitopic.data import TokenSequence, validate_bio
from entitopic.errors import DictionaryMissing


def seq(tokens, labels, lang="en", doc="d0"):
    return TokenSequence(tuple(tokens), lang, tuple(labels), doc)


MSFT = seq(["Microsoft", "announced", "new", "features"], ["B-ORG", "O", "O", "O"])


class TestEntitySubstitute:
    def lex(self, **candidates):
        return SubstitutionLexicons(synonym=candidates)

    def test_no_entities_is_identity(self, rng):
        s = seq(["just", "plain", "words"], ["O", "O", "O"])
        out = entity_substitute(s, self.lex(), (1.0, 0.0, 0.0), rng)
        assert out == s

    def test_single_candidate_replacement(self, rng):
        lex = self.lex(Microsoft=[("Apple", "ORG")])
        out = entity_substitute(MSFT, lex, (1.0, 0.0, 0.0), rng)
        assert out.tokens == ("Apple", "announced", "new", "features")
        assert out.labels == ("B-ORG", "O", "O", "O")

    def test_type_mismatch_skipped(self, rng):
        lex = self.lex(Microsoft=[("Apple", "PER")])  # wrong type
        out = entity_substitute(MSFT, lex, (1.0, 0.0, 0.0), rng)
        assert out == MSFT

    def test_multi_token_respan(self, rng):
        lex = self.lex(Microsoft=[("Globex Holding Corp", "ORG")])
        out = entity_substitute(MSFT, lex, (1.0, 0.0, 0.0), rng)
        assert out.tokens[:3] == ("Globex", "Holding", "Corp")
        assert out.labels[:3] == ("B-ORG", "I-ORG", "I-ORG")
        assert validate_bio(out.labels)

    def test_weights_select_tier(self, rng):
        lexicons = SubstitutionLexicons(
            synonym={"Microsoft": [("SynCo", "ORG")]},
            paraphrase={"Microsoft": [("ParaCo", "ORG")]},
            context={"Microsoft": [("CtxCo", "ORG")]},
        )
        for _ in range(20):
            out = entity_substitute(MSFT, lexicons, (1.0, 0.0, 0.0), rng)
            assert out.tokens[0] == "SynCo"

    def test_all_zero_weights_rejected(self, rng):
        with pytest.raises(ValueError):
            entity_substitute(MSFT, self.lex(), (0.0, 0.0, 0.0), rng)

    def test_deterministic_under_seed(self):
        lex = SubstitutionLexicons(
            synonym={"Microsoft": [("A", "ORG"), ("B", "ORG"), ("C", "ORG")]}
        )
        a = entity_substitute(MSFT, lex, (1.0, 1.0, 1.0), np.random.default_rng(3))
        b = entity_substitute(MSFT, lex, (1.0, 1.0, 1.0), np.random.default_rng(3))
        assert a == b


class TestPerturbContext:
    BASE = seq(
        ["the", "firm", "Acme", "Corp", "posted", "gains"],
        ["O", "O", "B-ORG", "I-ORG", "O", "O"],
    )

    def test_zero_strength_identity(self, rng):
        assert perturb_context(self.BASE, 0.0, rng) == self.BASE

    def test_entities_untouched(self, rng):
        for _ in range(50):
            out = perturb_context(self.BASE, 1.0, rng)
            assert out.tokens[2:4] == ("Acme", "Corp")
            assert out.labels == self.BASE.labels

    def test_budget_respected(self, rng):
        # strength 0.5 over 4 non-entity tokens allows at most 2 changes
        for _ in range(50):
            out = perturb_context(self.BASE, 0.5, rng)
            changed = sum(
                a != b for a, b in zip(out.tokens, self.BASE.tokens)
            )
            assert changed <= 2

    def test_bio_valid_after_perturbation(self, rng):
        for _ in range(200):
            out = perturb_context(self.BASE, 1.0, rng)
            assert validate_bio(out.labels)

    def test_invalid_strength(self, rng):
        with pytest.raises(ValueError):
            perturb_context(self.BASE, 1.5, rng)


class TestBackTranslate:
    SRC = seq(["good", "morning", "Paris"], ["O", "O", "B-LOC"])

    def test_missing_dictionaries(self, rng):
        with pytest.raises(DictionaryMissing):
            back_translate(self.SRC, None, {}, rng)

    def test_empty_dictionaries_identity(self, rng):
        out = back_translate(self.SRC, {}, {}, rng)
        assert out == self.SRC

    def test_inverse_round_trip(self, rng):
        fwd = {"good": "bon", "morning": "matin"}
        bwd = {"bon": "good", "matin": "morning"}
        out = back_translate(self.SRC, fwd, bwd, rng)
        assert out == self.SRC

    def test_synonym_drift(self, rng):
        fwd = {"good": "bon"}
        bwd = {"bon": "fine"}
        out = back_translate(self.SRC, fwd, bwd, rng)
        assert out.tokens == ("fine", "morning", "Paris")

    def test_entity_tokens_protected(self, rng):
        fwd = {"Paris": "Lutèce", "good": "bon"}
        bwd = {"Lutèce": "Rome", "bon": "good"}
        out = back_translate(self.SRC, fwd, bwd, rng)
        assert out.tokens[2] == "Paris"

    def test_callable_tables(self, rng):
        out = back_translate(self.SRC, str.upper, str.lower, rng)
        assert out.tokens == ("good", "morning", "Paris")

    def test_bio_preserved(self, rng):
        out = back_translate(self.SRC, {"good": "nice"}, {}, rng)
        assert validate_bio(out.labels)


class TestQualityFilter:
    def test_identity_scores_one(self):
        s = seq(["a", "b", "c"], ["O", "O", "O"])
        assert augmentation_quality(s, s) == pytest.approx(1.0, abs=1e-9)
        assert quality_filter(s, s, 0.99)

    def test_disjoint_rejected(self):
        a = seq(["x", "y", "z"], ["O", "O", "O"])
        b = seq(["p", "q", "r"], ["O", "O", "O"])
        assert augmentation_quality(a, b) == pytest.approx(0.0, abs=1e-9)
        assert not quality_filter(a, b, 0.5)

    def test_zero_threshold_accepts_perturbations(self, rng):
        base = seq(["the", "firm", "posted", "gains"], ["O", "O", "O", "O"])
        out = perturb_context(base, 0.5, rng)
        assert quality_filter(base, out, 0.0)

    def test_custom_embedding(self):
        a = seq(["x", "y"], ["O", "O"])
        b = seq(["x", "q"], ["O", "O"])
        q = augmentation_quality(a, b, embed_fn=lambda s: np.ones(4))
        # semantic similarity 1 by construction; structural = 1/2
        assert q == pytest.approx(0.5, abs=1e-9)

    def test_threshold_validated(self):
        s = seq(["a"], ["O"])
        with pytest.raises(ValueError):
            quality_filter(s, s, 1.5)


class TestStructuralSimilarity:
    def test_identical(self):
        assert structural_similarity(("a", "b"), ("a", "b")) == 1.0

    def test_empty(self):
        assert structural_similarity((), ()) == 1.0

    def test_single_edit(self):
        assert structural_similarity(("a", "b"), ("a", "c")) == pytest.approx(0.5)

    def test_length_mismatch(self):
        assert structural_similarity(("a",), ("a", "b", "c")) == pytest.approx(1 / 3)


class TestAugmentationInvariant:
    def test_all_augmenters_preserve_bio_validity(self, rng):
        """1000 random augmentations across the three ops: zero violations."""
        lexicons = SubstitutionLexicons(
            synonym={"Acme": [("Zorg Inc", "ORG"), ("Vex", "ORG")]},
            paraphrase={"Acme": [("The Acme Group", "ORG")]},
        )
        fwd = {"posted": "affiché", "gains": "gains"}
        bwd = {"affiché": "reported"}
        base = seq(
            ["the", "firm", "Acme", "posted", "gains"],
            ["O", "O", "B-ORG", "O", "O"],
        )
        for i in range(1000):
            op = i % 3
            if op == 0:
                out = entity_substitute(base, lexicons, (1.0, 0.5, 0.0), rng)
            elif op == 1:
                out = perturb_context(base, float(rng.random()), rng)
            else:
                out = back_translate(base, fwd, bwd, rng)
            assert validate_bio(out.labels)
            assert len(out.tokens) == len(out.labels)
