"""Fusion, providers, classification, bundle training, evaluation."""
import numpy as np
import pytest

from novemo.errors import EmptyDataset, EmptyEnsemble, MissingModality
from novemo.nn import ConvNet, ConvNetSpec, Mlp, MlpSpec, TrainingConfig
from novemo.pipeline import (
    BundleConfig,
    ClassRegistry,
    EnsembleCnnProvider,
    ExternalEmbeddingProvider,
    ModelBundle,
    ProviderConfig,
    classify,
    ensemble_deep_feature,
    evaluate,
    fuse_features,
    predicted_label,
    train_bundle,
)
from novemo.synth import SyntheticScenarioConfig, synth_generate


def small_scenario(**kw):
    defaults = dict(class_count=3, train_per_class=12, probe_per_class=8,
                    image_side=12, seed=42)
    defaults.update(kw)
    return synth_generate(SyntheticScenarioConfig(**defaults))


def small_bundle_config(data, **kw):
    defaults = dict(
        classes=data.class_names,
        face_provider=ProviderConfig(kind="none"),
        posture_provider=ProviderConfig(kind="none"),
        mlp_hidden=(24, 12),
        mlp_train=TrainingConfig(epochs=60, mini_batch_size=16,
                                 optimizer="adam", learning_rate=0.003),
        seed=7)
    defaults.update(kw)
    return BundleConfig(**defaults)


class TestFuseFeatures:
    def test_concatenation_order(self):
        np.testing.assert_array_equal(
            fuse_features(np.array([1.0]), np.array([2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_empty_deep_vector(self):
        visible = np.array([0.5, 0.7])
        np.testing.assert_array_equal(fuse_features(visible, np.zeros(0)), visible)

    def test_lengths_add(self):
        fused = fuse_features(np.zeros(14), np.zeros(64))
        assert fused.shape == (78,)


class TestEnsembleProvider:
    def _member(self, seed):
        return ConvNet(ConvNetSpec(input_side=8, conv_filters=(2,), fc_widths=(4, 3)), seed)

    def test_empty_ensemble_rejected(self):
        with pytest.raises(EmptyEnsemble):
            EnsembleCnnProvider([])

    def test_mean_of_identical_members_is_member(self):
        img = np.random.default_rng(0).uniform(size=(8, 8))
        provider = EnsembleCnnProvider([self._member(5), self._member(5), self._member(5)])
        np.testing.assert_array_equal(ensemble_deep_feature(provider, img),
                                      self._member(5).deep_features(img))

    def test_two_member_mean(self):
        # stub members exposing controlled features
        class Stub:
            spec = ConvNetSpec(input_side=8, conv_filters=(2,), fc_widths=(4, 3))

            def __init__(self, v):
                self.v = np.array(v)

            def deep_features(self, image):
                return self.v.copy()

        provider = EnsembleCnnProvider.__new__(EnsembleCnnProvider)
        provider.members = [Stub([0.0, 2.0]), Stub([2.0, 0.0])]
        np.testing.assert_array_equal(ensemble_deep_feature(provider, np.zeros((8, 8))),
                                      [1.0, 1.0])

    def test_seeded_members_mean_matches_external_average(self):
        img = np.random.default_rng(1).uniform(size=(8, 8))
        members = [self._member(s) for s in (1, 2, 3)]
        provider = EnsembleCnnProvider(members)
        expected = (members[0].deep_features(img) + members[1].deep_features(img)
                    + members[2].deep_features(img)) / 3
        np.testing.assert_allclose(ensemble_deep_feature(provider, img), expected,
                                   rtol=1e-12, atol=1e-14)


class TestClassify:
    def test_untrained_zero_weight_head_uniform(self, face_fixture, pose_fixture):
        from novemo.data_io import SampleRecord
        head = Mlp(MlpSpec(14, 4, 4, 5), seed=0)
        for p in head.parameters():
            p[...] = 0.0
        posture_head = Mlp(MlpSpec(16, 4, 4, 5), seed=0)
        bundle = ModelBundle(registry=ClassRegistry(("a", "b", "c", "d", "e")),
                             face_provider=None, face_classifier=head,
                             posture_provider=None, posture_classifier=posture_head)
        sample = SampleRecord(id="s", face=face_fixture, posture=pose_fixture)
        probs = classify(sample, "face", bundle)
        np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-12)

    def test_probabilities_sum_to_one(self):
        data = small_scenario()
        bundle = train_bundle(data.train, small_bundle_config(data))
        for s in data.probe[:10]:
            for modality in ("face", "posture"):
                assert classify(s, modality, bundle).sum() == pytest.approx(1.0, abs=1e-9)

    def test_missing_modality(self, face_fixture):
        from novemo.data_io import SampleRecord
        data = small_scenario()
        bundle = train_bundle(data.train, small_bundle_config(data))
        sample = SampleRecord(id="faceonly", face=face_fixture)
        with pytest.raises(MissingModality):
            classify(sample, "posture", bundle)

    def test_classify_matches_op_composition(self):
        # fixture sample through a fixture bundle equals composing the
        # individually oracle-checked ops
        from novemo.nn import softmax
        from novemo.pipeline import fuse_features, image_to_input
        from novemo.geometry import extract_face_features

        data = small_scenario()
        cfg = small_bundle_config(data, face_provider=ProviderConfig(
            kind="regular_cnn", input_side=12,
            train=TrainingConfig(epochs=2, mini_batch_size=16, optimizer="adam")))
        bundle = train_bundle(data.train, cfg)
        for s in data.probe[:5]:
            visible = extract_face_features(s.face).values
            deep = bundle.face_provider.net.deep_features(image_to_input(s.image))
            fused = fuse_features(visible, deep)
            expected = softmax(bundle.face_classifier.logits(fused))
            np.testing.assert_array_equal(classify(s, "face", bundle), expected)

    def test_argmax_invariant_under_monotone_logit_transform(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            logits = rng.normal(size=6)
            probs = np.exp(logits) / np.exp(logits).sum()
            transformed = 3.0 * logits + 11.0     # strictly increasing
            p2 = np.exp(transformed) / np.exp(transformed).sum()
            assert predicted_label(probs) == predicted_label(p2)


class TestExternalEmbeddings:
    def test_lookup_and_missing_id(self, face_fixture, pose_fixture):
        from novemo.data_io import SampleRecord
        provider = ExternalEmbeddingProvider({"a": np.array([1.0, 2.0])})
        sample = SampleRecord(id="a", face=face_fixture, posture=pose_fixture)
        np.testing.assert_array_equal(provider.features(sample), [1.0, 2.0])
        other = SampleRecord(id="b", face=face_fixture, posture=pose_fixture)
        with pytest.raises(MissingModality):
            provider.features(other)


class TestTrainBundle:
    def test_separable_synthetic_high_train_accuracy(self):
        data = small_scenario(class_count=2, train_per_class=20)
        bundle = train_bundle(data.train, small_bundle_config(data))
        for modality in ("face", "posture"):
            assert evaluate(data.train, bundle, modality).accuracy >= 0.99

    def test_same_seed_identical_bundles(self):
        data = small_scenario()
        cfg = small_bundle_config(data, face_provider=ProviderConfig(
            kind="regular_cnn", input_side=12,
            train=TrainingConfig(epochs=2, mini_batch_size=16, optimizer="adam")))
        b1 = train_bundle(data.train, cfg)
        b2 = train_bundle(data.train, cfg)
        for p1, p2 in zip(b1.face_classifier.parameters(), b2.face_classifier.parameters()):
            assert np.array_equal(p1, p2)
        for m1, m2 in zip([b1.face_provider.net], [b2.face_provider.net]):
            for p1, p2 in zip(m1.parameters(), m2.parameters()):
                assert np.array_equal(p1, p2)

    def test_missing_posture_landmarks_rejected(self):
        data = small_scenario()
        for s in data.train:
            s.posture = None
        with pytest.raises(MissingModality):
            train_bundle(data.train, small_bundle_config(data))

    def test_empty_dataset_rejected(self):
        data = small_scenario()
        with pytest.raises(EmptyDataset):
            train_bundle([], small_bundle_config(data))


class TestEvaluate:
    def test_perfect_predictor_identity_matrix(self):
        data = small_scenario(class_count=3, train_per_class=20)
        bundle = train_bundle(data.train, small_bundle_config(data))
        report = evaluate(data.train, bundle, "face")
        if report.accuracy == 1.0:
            np.testing.assert_allclose(report.confusion, np.eye(3), atol=1e-12)
        assert report.accuracy >= 0.99

    def test_constant_predictor_single_column(self, face_fixture, pose_fixture):
        from novemo.data_io import SampleRecord
        # zeroed face head with a positive bias on class 1 predicts 1 always
        head = Mlp(MlpSpec(14, 4, 4, 3), seed=0)
        for p in head.parameters():
            p[...] = 0.0
        head.b3[1] = 5.0
        bundle = ModelBundle(registry=ClassRegistry(("a", "b", "c")),
                             face_provider=None, face_classifier=head,
                             posture_provider=None,
                             posture_classifier=Mlp(MlpSpec(16, 4, 4, 3), seed=0))
        samples = [SampleRecord(id=f"s{i}", face=face_fixture, posture=pose_fixture,
                                label=i % 3) for i in range(9)]
        report = evaluate(samples, bundle, "face")
        np.testing.assert_allclose(report.confusion[:, 1], np.ones(3), atol=1e-12)
        assert report.accuracy == pytest.approx(1 / 3, abs=1e-12)

    def test_matrix_matches_tally_oracle(self):
        data = small_scenario()
        bundle = train_bundle(data.train, small_bundle_config(data))
        report = evaluate(data.probe, bundle, "face")
        # independent tally
        k = len(data.class_names)
        tally = np.zeros((k, k))
        for s in data.probe:
            pred = int(np.argmax(classify(s, "face", bundle)))
            tally[s.label, pred] += 1
        for row in range(k):
            total = tally[row].sum()
            if total:
                np.testing.assert_allclose(report.confusion[row], tally[row] / total,
                                           atol=1e-12)
                assert report.confusion[row].sum() == pytest.approx(1.0, abs=1e-9)

    def test_overall_accuracy_is_frequency_weighted_diagonal(self):
        data = small_scenario()
        bundle = train_bundle(data.train, small_bundle_config(data))
        report = evaluate(data.probe, bundle, "face")
        freqs = report.counts.sum(axis=1) / report.counts.sum()
        assert report.accuracy == pytest.approx(
            float((freqs * report.per_class).sum()), abs=1e-9)

    def test_empty_eval_rejected(self):
        data = small_scenario()
        bundle = train_bundle(data.train, small_bundle_config(data))
        with pytest.raises(EmptyDataset):
            evaluate([], bundle, "face")
