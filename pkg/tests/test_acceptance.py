"""Acceptance criteria, one test per criterion.

Each test prints one `[ACCEPT] <criterion>: PASS` line with the measured
numbers so the suite output doubles as the acceptance report. Tolerances
are stated inline and pinned; scenario constants live in scenarios.py.
"""
import contextlib
import io
import json
import time

import numpy as np
import pytest

from novemo.cli import main as cli_main
from novemo.continual import (
    RetrainConfig,
    auto_oracle_resolve,
    cluster_novelties,
    retrain,
)
from novemo.data_io import load_bundle, save_bundle, save_dataset
from novemo.geometry import extract_face_features
from novemo.nn import Mlp, MlpSpec, TrainingConfig, train_epochs
from novemo.novelty import (
    NoveltyBuffer,
    context_novelty,
    detect,
    detect_and_buffer,
    fit_context_model,
    kmeans,
)
from novemo.pipeline import (
    BundleConfig,
    ModelBundle,
    ProviderConfig,
    RegularCnnProvider,
    classify,
    derive_seed,
    evaluate,
    fused_features,
    predicted_label,
    train_bundle,
    visible_features,
)
from novemo.synth import SyntheticScenarioConfig, face_prototype, synth_generate

import scenarios
from gradcheck import REL_TOL, run_gradcheck
from test_novelty import partition_objectives


def announce(name, detail):
    print(f"\n[ACCEPT] {name}: PASS ({detail})")


@pytest.fixture(scope="module")
def flagship():
    data = scenarios.flagship_scenario()
    start = time.perf_counter()
    bundle = train_bundle(data.train, scenarios.flagship_config(data.class_names))
    report = evaluate(data.probe, bundle, "face")
    elapsed = time.perf_counter() - start
    return {"data": data, "bundle": bundle, "accuracy": report.accuracy,
            "seconds": elapsed}


def test_gradient_correctness():
    # 100 seeded small networks, dense+conv+pool+softmax paths, <= 500
    # parameters each; analytic vs central differences within 1e-4
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        err = run_gradcheck(seed)
        assert err <= REL_TOL, f"seed {seed}: relative error {err:.3e}"
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"gradient sweep took {elapsed:.1f}s"
    announce("gradient correctness",
             f"100 networks, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_synthetic_accuracy_substitute(flagship):
    # Bayes proxy: nearest-prototype classification on noiseless prototypes
    data = flagship["data"]
    protos = np.stack([extract_face_features(face_prototype(c)).values for c in range(7)])
    hits = 0
    for s in data.probe:
        f = visible_features(s, "face")
        hits += int(np.argmin(((protos - f) ** 2).sum(axis=1))) == s.label
    bayes_proxy = hits / len(data.probe)
    assert bayes_proxy >= 0.98, f"scenario too noisy: nearest-prototype {bayes_proxy:.3f}"

    assert flagship["accuracy"] >= 0.95, f"probe accuracy {flagship['accuracy']:.4f}"
    assert flagship["seconds"] < 300.0, f"took {flagship['seconds']:.0f}s"
    announce("ensemble-CNN desk-scale accuracy",
             f"700/700 probe acc {flagship['accuracy']:.4f} in {flagship['seconds']:.0f}s, "
             f"nearest-prototype proxy {bayes_proxy:.3f}")


def test_ensemble_at_least_single_members():
    ens_accs, member_accs = [], []
    for seed in scenarios.ENSEMBLE_SEEDS:
        data = scenarios.ensemble_scenario(seed)
        bundle = train_bundle(data.train, scenarios.ensemble_config(data.class_names, seed))
        ens_accs.append(evaluate(data.probe, bundle, "face").accuracy)
        head_cfg = scenarios.ensemble_head_train(seed)
        for member in bundle.face_provider.members:
            provider = RegularCnnProvider(member)
            rows = [(fused_features(s, "face", provider), s.label, s.weight)
                    for s in data.train]
            head = Mlp(MlpSpec(len(rows[0][0]), 32, 16, 7),
                       seed=derive_seed(seed, "single", "init"))
            train_epochs(head, rows, head_cfg)
            single = ModelBundle(registry=bundle.registry, face_provider=provider,
                                 face_classifier=head, posture_provider=None,
                                 posture_classifier=bundle.posture_classifier)
            member_accs.append(evaluate(data.probe, single, "face").accuracy)
    mean_ens, mean_mem = float(np.mean(ens_accs)), float(np.mean(member_accs))
    assert mean_ens >= mean_mem, f"ensemble {mean_ens:.4f} < members {mean_mem:.4f}"
    announce("ensemble >= single members",
             f"5 seeds: ensemble mean {mean_ens:.4f} vs member mean {mean_mem:.4f}")


def test_novelty_detection_quality():
    data = scenarios.novelty_quality_scenario()
    bundle = train_bundle(data.train, scenarios.novelty_quality_config(data.class_names))
    flagged_true = flagged_false = 0
    nominal = annotated = 0
    for s in data.probe:
        verdict = detect(s, bundle)
        if s.id in data.annotations:
            annotated += 1
            flagged_true += verdict.flagged
        else:
            nominal += 1
            flagged_false += verdict.flagged
    recall = flagged_true / annotated
    false_rate = flagged_false / nominal
    assert recall >= 0.8, f"novelty recall {recall:.3f}"
    assert false_rate <= 0.1, f"false-flag rate {false_rate:.3f}"
    announce("novelty detection quality",
             f"recall {recall:.3f} on {annotated} injected, "
             f"false-flag {false_rate:.3f} on {nominal} nominal")


def test_mismatch_reduction():
    data, stream, heldout, bundle = scenarios.mismatch_reduction_scenario()
    buffer = NoveltyBuffer()
    for s in stream:
        detect_and_buffer(s, bundle, buffer)
    proposals, _ = cluster_novelties(buffer, k_max=5, theta_new=10,
                                     seed=scenarios.MISMATCH_SEED)
    auto_oracle_resolve(bundle, buffer, proposals, data.annotations)
    _, report = retrain(bundle, data.train, heldout, buffer, RetrainConfig(
        epochs=120, mlp_train=TrainingConfig(epochs=0, **scenarios.HEAD_TRAIN),
        seed=33))
    assert 0.10 <= report.mismatch_before <= 0.15, \
        f"initial probe mismatch {report.mismatch_before:.4f} outside [0.10, 0.15]"
    drop = 1.0 - report.mismatch_after / report.mismatch_before
    assert drop >= 0.40, (f"mismatch {report.mismatch_before:.4f} -> "
                          f"{report.mismatch_after:.4f}, relative drop {drop:.2f}")
    announce("mismatch reduction",
             f"probe mismatch {report.mismatch_before:.4f} -> "
             f"{report.mismatch_after:.4f} ({drop:.0%} relative drop)")


def test_new_class_discovery():
    data, stream, heldout_unseen, heldout_nominal = scenarios.discovery_scenario()
    bundle = train_bundle(data.train, scenarios.discovery_config(data.class_names))
    buffer = NoveltyBuffer()
    for s in stream:
        detect_and_buffer(s, bundle, buffer)
    unseen_pending = sum(1 for e in buffer.pending()
                         if e.sample.id.startswith("probe-unseen"))
    assert unseen_pending >= 30, f"only {unseen_pending} unseen samples buffered"

    proposals, _ = cluster_novelties(buffer, k_max=5, theta_new=10,
                                     seed=scenarios.DISCOVERY_SEED)
    rich = [p for p in proposals
            if sum(m.startswith("probe-unseen") for m in p.member_ids) >= 25]
    assert len(proposals) == 1 and len(rich) == 1, \
        f"{len(proposals)} proposals, unseen-rich: {len(rich)}"

    approved, new_class_id = auto_oracle_resolve(bundle, buffer, proposals,
                                                 data.annotations)
    assert len(approved) == 1 and new_class_id is not None
    _, report = retrain(bundle, data.train, heldout_nominal, buffer, RetrainConfig(
        epochs=80, mlp_train=TrainingConfig(epochs=0, **scenarios.HEAD_TRAIN), seed=9))
    hits = sum(predicted_label(classify(s, "face", bundle)) == new_class_id
               for s in heldout_unseen)
    accuracy = hits / len(heldout_unseen)
    assert accuracy >= 0.7, f"held-out unseen accuracy {accuracy:.3f}"
    announce("new-class discovery",
             f"1 proposal with {len(proposals[0].member_ids)} members "
             f"({unseen_pending} unseen buffered), held-out accuracy {accuracy:.2f}")


def test_context_model_sanity():
    rng = np.random.default_rng(11)
    sigma = 0.5
    means = np.array([[0.0, 0, 0], [10.0, 0, 0], [0.0, 10, 0]])
    pts = np.concatenate([m + rng.normal(0, sigma, size=(1500, 3)) for m in means])
    model = fit_context_model(pts, k=3, z_mult=3.0, seed=5)

    worst = max(float(np.sqrt(((model.centroids - m) ** 2).sum(axis=1)).min())
                for m in means)
    assert worst <= 0.1 * sigma, f"centroid error {worst:.4f} > 0.1 sigma"

    train_flags = sum(context_novelty(p, model)[0] for p in pts)
    train_rate = train_flags / len(pts)
    assert train_rate <= 0.02, f"training flag rate {train_rate:.4f}"

    target = model.mean_distance + 5.0 * model.std_distance
    probe_rng = np.random.default_rng(99)
    flagged = 0
    probes = 300
    for _ in range(probes):
        c = model.centroids[int(probe_rng.integers(3))]
        direction = probe_rng.normal(size=3)
        direction /= np.sqrt((direction ** 2).sum())
        flagged += context_novelty(c + target * direction, model)[0]
    rate = flagged / probes
    assert rate >= 0.99, f"5-sigma probe flag rate {rate:.4f}"
    announce("context model sanity",
             f"centroid err {worst / sigma:.3f} sigma, train flags {train_rate:.3%}, "
             f"5-sigma flags {rate:.1%}")


@pytest.fixture(scope="module")
def saved_flagship(flagship, tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    save_dataset(flagship["data"].probe[:120], root / "probe",
                 classes=flagship["data"].class_names)
    save_bundle(flagship["bundle"], root / "bundle.naers")
    return root


def _run_cli(argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        rc = cli_main(argv)
    return rc, out.getvalue()


def test_cost_ratio_direction(saved_flagship):
    rc, out = _run_cli(["bench", "--dataset", str(saved_flagship / "probe"),
                        "--bundle", str(saved_flagship / "bundle.naers"),
                        "--repeat", "2"])
    assert rc == 0
    result = json.loads(out.strip().splitlines()[-1])
    assert result["ratio"] > 1.0, f"flagship bench ratio {result['ratio']:.3f}"
    assert result["reference_ratio"] == 1.5

    # a second bundle with CNN providers on both modality paths
    data = synth_generate(SyntheticScenarioConfig(
        class_count=3, train_per_class=10, probe_per_class=10, image_side=12, seed=88))
    both = train_bundle(data.train, BundleConfig(
        classes=data.class_names,
        face_provider=ProviderConfig(kind="regular_cnn", input_side=12,
                                     train=TrainingConfig(epochs=1, mini_batch_size=16,
                                                          optimizer="adam")),
        posture_provider=ProviderConfig(kind="regular_cnn", input_side=12,
                                        train=TrainingConfig(epochs=1, mini_batch_size=16,
                                                             optimizer="adam")),
        mlp_hidden=(16, 8),
        mlp_train=TrainingConfig(epochs=5, mini_batch_size=16, optimizer="adam"),
        seed=6))
    root = saved_flagship
    save_dataset(data.probe, root / "probe2", classes=data.class_names)
    save_bundle(both, root / "bundle2.naers")
    rc, out = _run_cli(["bench", "--dataset", str(root / "probe2"),
                        "--bundle", str(root / "bundle2.naers"), "--repeat", "3"])
    assert rc == 0
    result2 = json.loads(out.strip().splitlines()[-1])
    assert result2["ratio"] > 1.0, f"dual-CNN bench ratio {result2['ratio']:.3f}"
    announce("cost ratio direction",
             f"flagship ratio {result['ratio']:.2f}, dual-CNN ratio "
             f"{result2['ratio']:.2f}, reference 1.5 recorded")


def test_determinism_and_persistence(flagship, saved_flagship, tmp_path):
    # identical seeds -> byte-identical bundle files
    data = synth_generate(SyntheticScenarioConfig(
        class_count=3, train_per_class=10, probe_per_class=4, image_side=12, seed=55))
    cfg = BundleConfig(
        classes=data.class_names,
        face_provider=ProviderConfig(kind="regular_cnn", input_side=12,
                                     train=TrainingConfig(epochs=2, mini_batch_size=16,
                                                          optimizer="adam")),
        posture_provider=ProviderConfig(kind="none"),
        mlp_hidden=(16, 8),
        mlp_train=TrainingConfig(epochs=15, mini_batch_size=16, optimizer="adam"),
        seed=77)
    paths = []
    for name in ("one.naers", "two.naers"):
        bundle = train_bundle(data.train, cfg)
        save_bundle(bundle, tmp_path / name)
        paths.append(tmp_path / name)
    assert paths[0].read_bytes() == paths[1].read_bytes()

    # save/load/classify equivalence on the flagship bundle
    reloaded = load_bundle(saved_flagship / "bundle.naers")
    for s in flagship["data"].probe[:25]:
        for modality in ("face", "posture"):
            np.testing.assert_array_equal(
                classify(s, modality, reloaded),
                classify(s, modality, flagship["bundle"]))

    # buffer survives restart exactly
    buffer_path = tmp_path / "buffer.jsonl"
    buffer = NoveltyBuffer(path=buffer_path)
    flagged = 0
    for s in data.probe:
        verdict = detect_and_buffer(s, load_bundle(paths[0]), buffer)
        flagged += verdict.flagged
    buffer2 = NoveltyBuffer(path=buffer_path)
    assert len(buffer2) == len(buffer)
    for a, b in zip(buffer.entries(), buffer2.entries()):
        assert a.sample.id == b.sample.id and a.status == b.status
        assert a.verdict == b.verdict
        np.testing.assert_array_equal(a.features, b.features)
    announce("determinism & persistence",
             f"bundle files byte-identical, classify equal after reload, "
             f"buffer round trip exact ({len(buffer)} entries)")


def test_kmeans_partition_oracle():
    checked = suboptimal = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(4, 9))
        d = int(rng.integers(1, 4))
        k = int(rng.integers(2, 4))
        pts = rng.normal(size=(n, d))
        if len(np.unique(pts, axis=0)) < k:
            continue
        result = kmeans(pts, k=k, seed=seed)
        objectives = partition_objectives(pts, k)
        assert any(abs(result.objective - o) < 1e-9 for o in objectives), \
            f"seed {seed}: objective {result.objective} not a partition objective"
        if result.objective > min(objectives) + 1e-9:
            suboptimal += 1
        trace = np.array(result.objective_trace)
        assert np.all(np.diff(trace) <= 1e-9), f"seed {seed}: objective increased"
        checked += 1
    announce("k-means partition oracle",
             f"{checked} instances, all objectives in partition set "
             f"({suboptimal} documented local optima), traces non-increasing")
