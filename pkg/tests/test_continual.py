"""Retraining cycle: gating, proposal clustering, reweighting, class growth."""
import math

import numpy as np
import pytest

from novemo.continual import (
    NewClassProposal,
    RetrainConfig,
    add_class,
    apply_proposal,
    cluster_novelties,
    reject_proposal,
    retrain,
    reweight_adaboost,
    should_retrain,
)
from novemo.errors import DuplicateClass, UnresolvedNovelties
from novemo.nn import TrainingConfig
from novemo.novelty import NoveltyBuffer, NoveltyVerdict
from novemo.pipeline import BundleConfig, ProviderConfig, classify, train_bundle
from novemo.synth import SyntheticScenarioConfig, synth_generate


def _verdict(sid):
    return NoveltyVerdict(sample_id=sid, mismatch_flag=True, mismatch_score=0.5,
                          context_flag=False, context_distance=0.0, reason="mismatch",
                          face_label=0, posture_label=1,
                          face_probs=[0.7, 0.3], posture_probs=[0.3, 0.7])


def _sample(sid, label=0):
    from novemo.data_io import SampleRecord
    return SampleRecord(id=sid, background=np.array([0.0]), label=label)


def _filled_buffer(n):
    buf = NoveltyBuffer()
    for i in range(n):
        buf.push(_sample(f"s{i}"), _verdict(f"s{i}"))
    return buf


class TestShouldRetrain:
    def test_empty_buffer(self):
        assert should_retrain(NoveltyBuffer(), min_pending=50) is False

    def test_boundary_met(self):
        assert should_retrain(_filled_buffer(5), min_pending=5) is True

    def test_boundary_not_met(self):
        assert should_retrain(_filled_buffer(4), min_pending=5) is False


class TestClusterNovelties:
    def test_empty_pending_no_proposals(self):
        proposals, residuals = cluster_novelties(NoveltyBuffer(), seed=0)
        assert proposals == [] and residuals == []

    def test_tight_blob_plus_scatter(self):
        # 20 tight vectors + 5 scattered, theta_new=10 -> exactly 1 proposal
        rng = np.random.default_rng(12)
        buf = NoveltyBuffer()
        for i in range(20):
            buf.push(_sample(f"blob-{i}"), _verdict(f"blob-{i}"),
                     features=np.array([5.0, 5.0, 5.0]) + rng.normal(0, 0.05, 3))
        for i in range(5):
            buf.push(_sample(f"stray-{i}"), _verdict(f"stray-{i}"),
                     features=rng.uniform(-20, 20, 3))
        proposals, residuals = cluster_novelties(buf, k_max=5, theta_new=10, seed=3)
        assert len(proposals) == 1
        members = set(proposals[0].member_ids)
        assert sum(1 for m in members if m.startswith("blob-")) == 20
        assert all(r.startswith("stray-") for r in residuals)

    def test_all_identical_single_proposal(self):
        buf = NoveltyBuffer()
        for i in range(12):
            buf.push(_sample(f"x{i}"), _verdict(f"x{i}"), features=np.ones(4))
        proposals, residuals = cluster_novelties(buf, k_max=4, theta_new=10, seed=0)
        assert len(proposals) == 1
        assert len(proposals[0].member_ids) == 12
        assert residuals == []

    def test_below_threshold_all_residual(self):
        buf = NoveltyBuffer()
        for i in range(4):
            buf.push(_sample(f"x{i}"), _verdict(f"x{i}"), features=np.ones(4) * i)
        proposals, residuals = cluster_novelties(buf, k_max=3, theta_new=10, seed=0)
        assert proposals == []
        assert len(residuals) == 4


class TestReweightAdaboost:
    def test_epsilon_half_is_identity(self):
        w = {"a": 0.5, "b": 0.3, "c": 0.2}
        out = reweight_adaboost(w, {"a"}, 0.5)
        for k in w:
            assert out[k] == pytest.approx(w[k], abs=1e-12)

    def test_quarter_epsilon_multiplier_is_sqrt3(self):
        alpha = 0.5 * math.log(0.75 / 0.25)
        assert math.exp(alpha) == pytest.approx(math.sqrt(3.0), abs=1e-12)
        w = {"a": 0.5, "b": 0.5}
        out = reweight_adaboost(w, {"a"}, 0.25)
        ratio = out["a"] / out["b"]
        assert ratio == pytest.approx(math.sqrt(3.0), abs=1e-12)

    def test_three_samples_hand_arithmetic(self):
        # equal thirds, one flagged at eps=0.25:
        # flagged -> sqrt(3)/(2+sqrt(3)) = 2*sqrt(3)-3, others -> 2-sqrt(3)
        w = {"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}
        out = reweight_adaboost(w, {"b"}, 0.25)
        assert out["b"] == pytest.approx(2 * math.sqrt(3.0) - 3.0, abs=1e-12)
        assert out["a"] == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-12)
        assert out["c"] == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-12)

    def test_normalization_and_positivity_preserved(self):
        rng = np.random.default_rng(5)
        w = {f"s{i}": float(v) for i, v in enumerate(rng.dirichlet(np.ones(20)))}
        for eps in (1e-9, 0.1, 0.4999, 0.9):
            out = reweight_adaboost(w, {f"s{i}" for i in range(0, 20, 3)}, eps)
            assert sum(out.values()) == pytest.approx(1.0, abs=1e-9)
            assert all(v > 0 for v in out.values())

    def test_empty_flagged_set_identity(self):
        w = {"a": 0.25, "b": 0.75}
        out = reweight_adaboost(w, set(), 0.2)
        for k in w:
            assert out[k] == pytest.approx(w[k], abs=1e-15)


def _trained_small():
    data = synth_generate(SyntheticScenarioConfig(
        class_count=3, train_per_class=15, probe_per_class=10, image_side=12, seed=9))
    cfg = BundleConfig(
        classes=data.class_names,
        face_provider=ProviderConfig(kind="none"),
        posture_provider=ProviderConfig(kind="none"),
        mlp_hidden=(24, 12),
        mlp_train=TrainingConfig(epochs=80, mini_batch_size=16,
                                 optimizer="adam", learning_rate=0.003),
        seed=4)
    return data, train_bundle(data.train, cfg)


def _face_logits(sample, bundle):
    from novemo.pipeline import fused_features
    fused = fused_features(sample, "face", bundle.face_provider)
    return bundle.face_classifier.logits(fused)


class TestAddClass:
    def test_old_logits_unchanged_new_logit_zero(self):
        data, bundle = _trained_small()
        samples = data.probe[:6]
        logits_before = [_face_logits(s, bundle) for s in samples]
        add_class(bundle, "contempt")
        for s, old in zip(samples, logits_before):
            new = _face_logits(s, bundle)
            np.testing.assert_array_equal(new[:-1], old)
            assert new[-1] == 0.0

    def test_argmax_over_old_classes_preserved(self):
        data, bundle = _trained_small()
        k_old = len(bundle.registry)
        argmax_before = [int(np.argmax(classify(s, "face", bundle))) for s in data.probe]
        probs_before = [classify(s, "face", bundle) for s in data.probe]
        add_class(bundle, "contempt")
        for s, was, old_probs in zip(data.probe, argmax_before, probs_before):
            probs = classify(s, "face", bundle)
            assert int(np.argmax(probs[:k_old])) == was
            # old probabilities scale by a common renormalization factor
            scale = probs[:k_old] / old_probs
            np.testing.assert_allclose(scale, scale[0], rtol=1e-9)

    def test_duplicate_class_rejected(self):
        _, bundle = _trained_small()
        with pytest.raises(DuplicateClass):
            add_class(bundle, bundle.registry.names[0])


class TestRetrain:
    def _fresh(self):
        return _trained_small()

    def test_pending_samples_block_retrain(self):
        data, bundle = self._fresh()
        buf = _filled_buffer(3)
        with pytest.raises(UnresolvedNovelties):
            retrain(bundle, data.train, data.probe, buf, RetrainConfig(epochs=0))

    def test_noop_retrain_keeps_bundle_and_rates(self):
        data, bundle = self._fresh()
        before_params = [p.copy() for p in bundle.face_classifier.parameters()]
        buf = NoveltyBuffer()
        _, report = retrain(bundle, data.train, data.probe, buf, RetrainConfig(epochs=0))
        for p, q in zip(bundle.face_classifier.parameters(), before_params):
            assert np.array_equal(p, q)
        assert report.mismatch_before == report.mismatch_after
        assert report.samples_relabeled == 0
        assert report.version_after == report.version_before + 1

    def test_retrain_deterministic(self):
        results = []
        for _ in range(2):
            data, bundle = self._fresh()
            buf = NoveltyBuffer()
            for s in data.probe[:4]:
                flagged = _verdict(s.id)
                buf.push(s, flagged, features=np.ones(3))
                buf.mark_labeled(s.id, s.label)
            _, report = retrain(bundle, data.train, data.probe[4:], buf,
                                RetrainConfig(epochs=5, mlp_train=TrainingConfig(
                                    epochs=0, mini_batch_size=16, optimizer="adam",
                                    learning_rate=0.003), seed=11))
            results.append([p.copy() for p in bundle.face_classifier.parameters()])
        for a, b in zip(*results):
            assert np.array_equal(a, b)

    def test_consumed_entries_not_remerged(self):
        data, bundle = self._fresh()
        buf = NoveltyBuffer()
        s = data.probe[0]
        buf.push(s, _verdict(s.id), features=np.ones(3))
        buf.mark_labeled(s.id, s.label)
        _, r1 = retrain(bundle, data.train, data.probe[1:], buf, RetrainConfig(epochs=0))
        assert r1.samples_relabeled == 1
        _, r2 = retrain(bundle, data.train, data.probe[1:], buf, RetrainConfig(epochs=0))
        assert r2.samples_relabeled == 0

    def test_proposal_approval_grows_classes_and_relabels(self):
        data, bundle = self._fresh()
        buf = NoveltyBuffer()
        for i, s in enumerate(data.probe[:12]):
            buf.push(s, _verdict(s.id), features=np.ones(3))
        proposal = NewClassProposal(proposal_id="prop-1",
                                    member_ids=[s.id for s in data.probe[:12]],
                                    centroid=np.ones(3))
        class_id = apply_proposal(bundle, buf, proposal, "contempt")
        assert bundle.registry.names[-1] == "contempt"
        assert class_id == len(bundle.registry) - 1
        assert buf.pending_count() == 0
        assert proposal.status == "approved"

    def test_reject_proposal_keeps_members_pending(self):
        buf = _filled_buffer(3)
        proposal = NewClassProposal(proposal_id="p", member_ids=["s0"], centroid=np.ones(1))
        reject_proposal(proposal)
        assert proposal.status == "rejected"
        assert buf.pending_count() == 3
