import itertools
import math

import pytest
import torch

from entitopic.data import validate_bio
from entitopic.entity import (
    CrfParams,
    bio_transition_mask,
    crf_log_partition,
    crf_nll,
    sequence_score,
    viterbi,
)
from entitopic.errors import IllegalGoldSequence, InfeasibleMask, InvalidEmissions
from conftest import assert_grad_matches

TAGS4 = ("O", "B-PER", "I-PER", "B-ORG")
TAGS5 = ("O", "B-PER", "I-PER", "B-ORG", "I-ORG")


def brute_force_scores(emissions, params):
    """Enumerate every tag sequence and its path score (the oracle)."""
    n, n_tags = emissions.shape
    out = []
    for path in itertools.product(range(n_tags), repeat=n):
        score = float(params.start_scores()[path[0]]) + float(emissions[0, path[0]])
        trans = params.transition_scores()
        for i in range(1, n):
            score += float(trans[path[i - 1], path[i]]) + float(emissions[i, path[i]])
        score += float(params.end[path[-1]])
        out.append((path, score))
    return out


def free_params(tags, seed=None):
    params = CrfParams(tags, constrained=False)
    if seed is not None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            params.transitions.copy_(torch.randn(len(tags), len(tags), generator=gen))
            params.start.copy_(torch.randn(len(tags), generator=gen))
            params.end.copy_(torch.randn(len(tags), generator=gen))
    return params


class TestLogPartition:
    def test_single_step_is_logsumexp(self):
        params = free_params(TAGS4)
        emissions = torch.tensor([[0.3, -1.2, 2.0, 0.1]])
        assert float(crf_log_partition(emissions, params)) == pytest.approx(
            float(torch.logsumexp(emissions[0], 0)), abs=1e-6
        )

    def test_uniform_paths_count(self):
        params = free_params(("a", "b", "c"))
        emissions = torch.zeros(2, 3)
        assert float(crf_log_partition(emissions, params)) == pytest.approx(
            math.log(9), abs=1e-6
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        gen = torch.Generator().manual_seed(100 + seed)
        params = free_params(TAGS4, seed=seed)
        emissions = torch.randn(3, 4, generator=gen)
        oracle = torch.logsumexp(
            torch.tensor([s for _, s in brute_force_scores(emissions, params)]), 0
        )
        assert float(crf_log_partition(emissions, params)) == pytest.approx(
            float(oracle), abs=1e-6
        )

    def test_log_z_upper_bounds_any_path(self):
        params = free_params(TAGS4, seed=9)
        emissions = torch.randn(4, 4, generator=torch.Generator().manual_seed(9))
        log_z = float(crf_log_partition(emissions, params))
        for path, score in brute_force_scores(emissions, params):
            assert log_z >= score - 1e-9

    def test_nan_rejected(self):
        params = free_params(TAGS4)
        emissions = torch.full((2, 4), float("nan"))
        with pytest.raises(InvalidEmissions):
            crf_log_partition(emissions, params)


class TestNll:
    def test_deterministic_distribution_is_zero(self):
        # one tag only: exactly one feasible sequence
        params = CrfParams(("O",), constrained=False)
        emissions = torch.tensor([[0.4], [1.2], [-0.3]])
        assert float(crf_nll(emissions, ["O", "O", "O"], params)) == pytest.approx(
            0.0, abs=1e-9
        )

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_enumeration(self, seed):
        gen = torch.Generator().manual_seed(40 + seed)
        params = free_params(("a", "b", "c"), seed=seed)
        emissions = torch.randn(3, 3, generator=gen)
        gold = [0, 2, 1]
        scored = brute_force_scores(emissions, params)
        scores = torch.tensor([s for _, s in scored])
        gold_idx = [p for p, _ in scored].index(tuple(gold))
        oracle = float(torch.logsumexp(scores, 0) - scores[gold_idx])
        assert float(crf_nll(emissions, gold, params)) == pytest.approx(oracle, abs=1e-6)

    def test_shift_invariance(self):
        params = free_params(TAGS4, seed=3)
        gen = torch.Generator().manual_seed(3)
        emissions = torch.randn(4, 4, generator=gen)
        gold = ["O", "B-PER", "I-PER", "O"]
        base = float(crf_nll(emissions, gold, params))
        shifted = float(crf_nll(emissions + 5.0, gold, params))
        assert base == pytest.approx(shifted, abs=1e-5)

    def test_nonnegative(self):
        params = free_params(TAGS5, seed=5)
        emissions = torch.randn(5, 5, generator=torch.Generator().manual_seed(5))
        assert float(crf_nll(emissions, ["O"] * 5, params)) >= 0.0

    def test_illegal_gold_rejected(self):
        params = CrfParams(TAGS4, constrained=True)
        emissions = torch.zeros(2, 4)
        with pytest.raises(IllegalGoldSequence):
            crf_nll(emissions, ["O", "I-PER"], params)
        with pytest.raises(IllegalGoldSequence):
            crf_nll(emissions, ["I-PER", "I-PER"], params)

    def test_gradient_matches_finite_differences(self):
        params = CrfParams(TAGS4, constrained=True)
        emissions = torch.randn(
            4, 4, generator=torch.Generator().manual_seed(11)
        ).to(torch.float64)

        def fn():
            return crf_nll(emissions, ["O", "B-PER", "I-PER", "O"], params)

        assert_grad_matches(
            fn, emissions, [(0, 0), (1, 1), (2, 2), (3, 3), (2, 0)], rel_tol=1e-4
        )


class TestViterbi:
    def test_zero_transitions_is_argmax(self):
        params = free_params(TAGS4)
        gen = torch.Generator().manual_seed(21)
        emissions = torch.randn(6, 4, generator=gen)
        tags, _ = viterbi(emissions, params)
        expected = [TAGS4[int(i)] for i in emissions.argmax(dim=1)]
        assert tags == expected

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_five_tags(self, seed):
        params = free_params(TAGS5, seed=seed)
        gen = torch.Generator().manual_seed(60 + seed)
        emissions = torch.randn(5, 5, generator=gen)
        best_path, best_score = max(
            brute_force_scores(emissions, params), key=lambda t: t[1]
        )
        tags, score = viterbi(emissions, params)
        assert tuple(TAGS5.index(t) for t in tags) == best_path
        assert score == pytest.approx(best_score, abs=1e-5)

    def test_mask_blocks_tempting_transition(self):
        params = CrfParams(("O", "B-PER", "I-PER"), constrained=True)
        # emissions strongly favor O -> I-PER, which the mask forbids
        emissions = torch.tensor([[5.0, 0.0, 0.0], [0.0, 0.0, 5.0]])
        tags, _ = viterbi(emissions, params)
        assert validate_bio(tags)
        assert tags != ["O", "I-PER"]
        # constrained brute force agrees
        feasible = [
            (p, s)
            for p, s in brute_force_scores(emissions, params)
            if validate_bio([params.tags[i] for i in p])
        ]
        best = max(feasible, key=lambda t: t[1])[0]
        assert tuple(params.tags.index(t) for t in tags) == best

    def test_infeasible_mask(self):
        params = CrfParams(("O", "B-PER"), constrained=False)
        params.start_allowed[:] = False
        emissions = torch.zeros(2, 2)
        with pytest.raises(InfeasibleMask):
            viterbi(emissions, params)

    def test_bio_soundness_thousand_decodes(self):
        tags = ("O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC")
        params = CrfParams(tags, constrained=True)
        gen = torch.Generator().manual_seed(7)
        with torch.no_grad():
            params.transitions.copy_(
                torch.randn(len(tags), len(tags), generator=gen)
            )
        for i in range(1000):
            n = int(torch.randint(1, 9, (1,), generator=gen))
            emissions = torch.randn(n, len(tags), generator=gen) * 3
            decoded, _ = viterbi(emissions, params)
            assert validate_bio(decoded), f"violation at case {i}: {decoded}"


class TestBioMask:
    def test_forbidden_pairs(self):
        allowed, start = bio_transition_mask(TAGS5)
        idx = {t: i for i, t in enumerate(TAGS5)}
        assert not allowed[idx["O"], idx["I-PER"]]
        assert not allowed[idx["B-PER"], idx["I-ORG"]]
        assert not allowed[idx["B-ORG"], idx["I-PER"]]
        assert allowed[idx["B-PER"], idx["I-PER"]]
        assert allowed[idx["I-ORG"], idx["I-ORG"]]
        assert allowed[idx["O"], idx["B-PER"]]
        assert not start[idx["I-PER"]]
        assert start[idx["O"]] and start[idx["B-ORG"]]

    def test_forbidden_entries_penalized(self):
        params = CrfParams(TAGS4, constrained=True, forbidden_penalty=-1e4)
        idx = {t: i for i, t in enumerate(TAGS4)}
        scores = params.transition_scores()
        assert float(scores[idx["O"], idx["I-PER"]]) <= -1e4 + 1.0
        assert float(scores[idx["O"], idx["B-PER"]]) == pytest.approx(0.0)

    def test_sequence_score_includes_ends(self):
        params = free_params(("a", "b"), seed=1)
        emissions = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        score = float(sequence_score(emissions, [0, 1], params))
        expected = (
            float(params.start_scores()[0])
            + 1.0
            + float(params.transition_scores()[0, 1])
            + 1.0
            + float(params.end[1])
        )
        assert score == pytest.approx(expected, abs=1e-6)
