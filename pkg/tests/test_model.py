import numpy as np
import pytest
import torch

from entitopic.checkpoint import load_checkpoint, save_checkpoint
from entitopic.data import TokenSequence
from entitopic.model import JointModel, component_seed
from entitopic.synth import make_separable_dataset, smoke_config


@pytest.fixture(scope="module")
def cfg():
    return smoke_config()


@pytest.fixture(scope="module")
def bridged_cfg():
    return smoke_config(bridge={"enabled": True})


class TestSeedStability:
    def test_component_seed_deterministic(self):
        assert component_seed(3, "encoder") == component_seed(3, "encoder")
        assert component_seed(3, "encoder") != component_seed(4, "encoder")
        assert component_seed(3, "encoder") != component_seed(3, "entity")

    def test_same_seed_same_weights(self, cfg):
        a = JointModel(cfg, seed=5)
        b = JointModel(cfg, seed=5)
        for (n1, p1), (n2, p2) in zip(
            a.encoder.named_parameters(), b.encoder.named_parameters()
        ):
            assert n1 == n2
            assert torch.equal(p1, p2)

    def test_bridge_presence_leaves_others_bit_identical(self, cfg, bridged_cfg):
        """The ablation contract: a build without the bridge matches the
        other components of a bridged build exactly."""
        with_bridge = JointModel(bridged_cfg, seed=7)
        without = JointModel(cfg, seed=7)
        for name in ("encoder", "entity", "topic"):
            mods_a = with_bridge.torch_modules()[name]
            mods_b = without.torch_modules()[name]
            for (n1, p1), (n2, p2) in zip(
                mods_a.named_parameters(), mods_b.named_parameters()
            ):
                assert n1 == n2
                assert torch.equal(p1, p2), f"{name}.{n1} differs"


class TestBridgeDisabledEquivalence:
    def test_entity_path_bit_identical(self, cfg, bridged_cfg):
        """Disabling the bridge reproduces the entity-only pipeline exactly."""
        data = make_separable_dataset(0, n_docs=30)
        bridged = JointModel(bridged_cfg, seed=3)
        plain = JointModel(cfg, seed=3)
        bridged.fit_corpus(data)
        plain.fit_corpus(data)
        bridged.bridge = None  # the config switch nulls the module
        with torch.no_grad():
            for seq in data.sequences[:20]:
                fa = bridged.sentence_features(seq, None)
                fb = plain.sentence_features(seq, None)
                assert torch.equal(fa, fb)


class TestDocTheta:
    def test_order_independent(self, cfg):
        data = make_separable_dataset(1, n_docs=30)
        model = JointModel(cfg, seed=0)
        model.fit_corpus(data)
        doc = data.document(data.sequences[0].doc_id)
        t1 = model.doc_theta(doc)
        # interleave other inferences, then repeat
        for seq in data.sequences[1:5]:
            model.doc_theta(data.document(seq.doc_id))
        t2 = model.doc_theta(doc)
        np.testing.assert_array_equal(t1, t2)

    def test_uniform_without_lda(self, cfg):
        model = JointModel(cfg, seed=0)
        theta = model.doc_theta(TokenSequence(("x", "y"), "en", None, "d"))
        np.testing.assert_allclose(theta, 1.0 / cfg.topic.n_topics)


class TestEpisodeFeatures:
    def test_shapes_and_consistency(self, bridged_cfg):
        from entitopic.episodes import construct_episode, default_similarity

        data = make_separable_dataset(2, n_docs=60)
        model = JointModel(bridged_cfg, seed=0)
        model.fit_corpus(data)
        rng = np.random.default_rng(0)
        ep = construct_episode(
            data, 3, 3, 2, ["en"], 1.0, 1.0, rng, default_similarity(["en"])
        )
        support, query, topics = model.episode_features(ep, None)
        assert len(support) == len(ep.support)
        assert len(query) == len(ep.query)
        for seq, feats in zip(ep.support, support):
            assert feats.shape == (len(seq), bridged_cfg.encoder.d_model)
        assert set(topics) == {s.doc_id for s in ep.support + ep.query}

    def test_emissions_follow_tag_order(self, cfg):
        model = JointModel(cfg, seed=0)
        feats = torch.randn(4, cfg.encoder.d_model)
        types = ["O", "B-PER"]
        protos = torch.randn(2, cfg.encoder.d_model)
        em = model.episode_tag_emissions(feats, types, protos)
        assert em.shape == (4, len(model.crf.tags))
        # I-PER borrows the B-PER prototype rather than the floor
        i_per = model.crf.tag_index["I-PER"]
        b_per = model.crf.tag_index["B-PER"]
        assert torch.allclose(em[:, i_per], em[:, b_per])
        # a type with no prototype at all stays at the floor
        b_org = model.crf.tag_index["B-ORG"]
        assert (em[:, b_org] == cfg.entity.forbidden_penalty).all()


class TestCheckpointRoundTrip:
    def test_weights_and_state_survive(self, tmp_path, bridged_cfg):
        data = make_separable_dataset(3, n_docs=40)
        model = JointModel(bridged_cfg, seed=1)
        model.fit_corpus(data)
        from entitopic.entity import bank_update

        bank_update(
            model.bank,
            {"B-PER": (torch.randn(bridged_cfg.encoder.d_model), torch.zeros(bridged_cfg.encoder.d_model), 3)},
        )
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(model, path, None, {"note": 1})
        loaded, detector, extra = load_checkpoint(path)
        assert extra == {"note": 1}
        assert detector is None
        for (n1, p1), (n2, p2) in zip(
            model.encoder.named_parameters(), loaded.encoder.named_parameters()
        ):
            assert torch.equal(p1, p2), n1
        assert loaded.bank.version == model.bank.version
        assert set(loaded.bank.entries) == {"B-PER"}
        assert loaded.encoder.embedder.known == model.encoder.embedder.known
        assert set(loaded.lda) == set(model.lda)
        np.testing.assert_array_equal(
            loaded.lda["en"].word_topic, model.lda["en"].word_topic
        )
        # identical inference behaviour
        seq = data.sequences[0]
        with torch.no_grad():
            fa = model.sentence_features(seq, None)
            fb = loaded.sentence_features(seq, None)
        assert torch.equal(fa, fb)

    def test_corrupt_file_rejected(self, tmp_path):
        from entitopic.errors import CheckpointError

        path = tmp_path / "bad.ckpt"
        path.write_text("not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))
