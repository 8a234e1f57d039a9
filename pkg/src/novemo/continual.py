"""Periodic retraining: cluster buffered novelties into new-class
proposals, apply human relabels, reweight hard samples multiplicatively,
and continue training the classifier heads from their current weights.

Deep-feature providers stay frozen across a retrain; only the two
classifier heads continue training, which keeps the cycle cheap and the
deep-feature space stable for buffered feature vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, UnresolvedNovelties
from .nn import TrainingConfig, train_epochs
from .novelty import NoveltyBuffer, detect_mismatch, kmeans
from .pipeline import (
    ModelBundle,
    classify,
    derive_seed,
    fused_features,
    predicted_label,
)

EPSILON_MIN = 1e-6
DEFAULT_MIN_PENDING = 50
DEFAULT_THETA_NEW = 10


def should_retrain(buffer: NoveltyBuffer, min_pending: int = DEFAULT_MIN_PENDING) -> bool:
    """True once enough flagged samples await triage."""
    return buffer.pending_count() >= min_pending


@dataclass
class NewClassProposal:
    """A dense cluster of pending novelties that may deserve its own label."""

    proposal_id: str
    member_ids: list[str]
    centroid: np.ndarray
    proposed_name: str | None = None
    status: str = "proposed"    # proposed -> approved | rejected

    def to_json_dict(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "member_ids": list(self.member_ids),
            "centroid": [float(v) for v in self.centroid],
            "proposed_name": self.proposed_name,
            "status": self.status,
            "member_count": len(self.member_ids),
        }


@dataclass(frozen=True)
class RelabelRequest:
    """One operator decision for one buffered sample."""

    sample_id: str
    label_id: int
    operator: str
    timestamp: int = 0


def cluster_novelties(buffer: NoveltyBuffer, k_max: int = 5,
                      theta_new: int = DEFAULT_THETA_NEW, seed: int = 0,
                      penalty: float = 1.0, restarts: int = 8):
    """Cluster pending samples' fused feature vectors; clusters of at
    least theta_new members become proposals, the rest are residuals
    routed to per-sample relabeling.

    k is chosen over 1..k_max by the penalized objective
    (within-cluster sum of squares + penalty * k * dim) on per-dimension
    standardized features; each k keeps the best of several seeded
    k-means restarts.
    """
    pending = buffer.pending()
    residuals = [e.sample.id for e in pending if e.features is None]
    rows = [e for e in pending if e.features is not None]
    if not rows:
        return [], residuals

    raw = np.stack([e.features for e in rows])
    mean = raw.mean(axis=0)
    std = np.maximum(raw.std(axis=0), 1e-12)
    pts = (raw - mean) / std
    dim = pts.shape[1]

    distinct = len(np.unique(pts, axis=0))
    best = None
    for k in range(1, min(k_max, distinct) + 1):
        result = None
        for i in range(max(restarts, 1)):
            candidate = kmeans(pts, k, derive_seed(seed, "novelty-k", k, i))
            if result is None or candidate.objective < result.objective:
                result = candidate
        score = result.objective + penalty * k * dim
        if best is None or score < best[0]:
            best = (score, k, result)
    _, k, result = best

    proposals = []
    for c in range(k):
        member_idx = np.flatnonzero(result.assignments == c)
        members = [rows[i].sample.id for i in member_idx]
        if len(members) >= theta_new:
            centroid = raw[member_idx].mean(axis=0)
            proposals.append(NewClassProposal(
                proposal_id=f"prop-{len(proposals) + 1}",
                member_ids=members, centroid=centroid))
        else:
            residuals.extend(members)
    return proposals, residuals


def reweight_adaboost(weights: dict[str, float], flagged_ids, epsilon: float) -> dict[str, float]:
    """Multiply flagged samples' weights by e^alpha with
    alpha = 0.5*ln((1-eps)/eps), then renormalize to sum 1."""
    epsilon = min(max(epsilon, EPSILON_MIN), 0.5)
    alpha = 0.5 * math.log((1.0 - epsilon) / epsilon)
    boost = math.exp(alpha)
    flagged = set(flagged_ids)
    updated = {sid: (w * boost if sid in flagged else w) for sid, w in weights.items()}
    total = sum(updated.values())
    return {sid: w / total for sid, w in updated.items()}


def add_class(bundle: ModelBundle, name: str) -> ModelBundle:
    """Append a class to the registry and grow both classifier output
    layers by one zero-initialized unit; existing parameters untouched."""
    bundle.registry.add(name)
    bundle.face_classifier.add_output_unit()
    bundle.posture_classifier.add_output_unit()
    return bundle


def apply_proposal(bundle: ModelBundle, buffer: NoveltyBuffer,
                   proposal: NewClassProposal, name: str,
                   operator: str = "operator") -> int:
    """Approve a proposal: register its class (if new) and label every
    still-pending member with the new class id."""
    if name not in bundle.registry:
        add_class(bundle, name)
    class_id = bundle.registry.id_of(name)
    for sid in proposal.member_ids:
        if sid in buffer and buffer.get(sid).status == "pending":
            buffer.mark_labeled(sid, class_id, operator=operator,
                                proposal_id=proposal.proposal_id)
    proposal.proposed_name = name
    proposal.status = "approved"
    return class_id


def reject_proposal(proposal: NewClassProposal) -> None:
    """Members stay pending and must be relabeled or dismissed one by one."""
    proposal.status = "rejected"


def auto_oracle_resolve(bundle: ModelBundle, buffer: NoveltyBuffer, proposals,
                        annotations: dict, new_class_name: str = "contempt",
                        operator: str = "auto-oracle"):
    """Scripted stand-in for the human operator, driven by scenario
    ground truth: proposals dominated by unseen-class samples are
    approved under ``new_class_name``, everything else is relabeled with
    its annotated (or original) label.
    """
    approved = []
    new_class_id = None
    for proposal in proposals:
        unseen = sum(1 for m in proposal.member_ids
                     if annotations.get(m, {}).get("kind") == "unseen_class")
        if proposal.member_ids and unseen / len(proposal.member_ids) >= 0.5:
            new_class_id = apply_proposal(bundle, buffer, proposal, new_class_name,
                                          operator=operator)
            approved.append(proposal)
        else:
            reject_proposal(proposal)
    for entry in buffer.pending():
        sid = entry.sample.id
        ann = annotations.get(sid)
        if ann is not None and ann["kind"] == "unseen_class":
            if new_class_id is not None:
                buffer.mark_labeled(sid, new_class_id, operator=operator)
            else:
                buffer.mark_dismissed(sid)
        elif ann is not None and ann.get("true_label") is not None:
            buffer.mark_labeled(sid, ann["true_label"], operator=operator)
        elif entry.sample.label is not None:
            buffer.mark_labeled(sid, entry.sample.label, operator=operator)
        else:
            buffer.mark_dismissed(sid)
    return approved, new_class_id


def mismatch_rate(dataset, bundle: ModelBundle) -> float:
    """Fraction of samples whose face and posture predictions disagree."""
    if not dataset:
        return 0.0
    hits = 0
    for s in dataset:
        flag, _ = detect_mismatch(classify(s, "face", bundle),
                                  classify(s, "posture", bundle))
        hits += flag
    return hits / len(dataset)


@dataclass(frozen=True)
class RetrainConfig:
    """Continuation-training settings for one retrain cycle."""

    epochs: int = 30
    mlp_train: TrainingConfig = field(default_factory=lambda: TrainingConfig(epochs=0))
    seed: int = 0

    def head_config(self, tag: str, seed: int, n_samples: int) -> TrainingConfig:
        return replace(self.mlp_train, epochs=self.epochs,
                       mini_batch_size=min(self.mlp_train.mini_batch_size, n_samples),
                       rng_seed=derive_seed(seed, "retrain", tag))


@dataclass
class RetrainReport:
    mismatch_before: float
    mismatch_after: float
    classes_added: list[str]
    samples_relabeled: int
    epochs_run: int
    version_before: int
    version_after: int

    def to_json_dict(self) -> dict:
        return {
            "mismatch_before": self.mismatch_before,
            "mismatch_after": self.mismatch_after,
            "classes_added": list(self.classes_added),
            "samples_relabeled": self.samples_relabeled,
            "epochs_run": self.epochs_run,
            "version_before": self.version_before,
            "version_after": self.version_after,
        }


def retrain(bundle: ModelBundle, train_set, probe_set, buffer: NoveltyBuffer,
            config: RetrainConfig) -> tuple[ModelBundle, RetrainReport]:
    """One full retraining cycle over resolved novelties.

    Merges labeled, not-yet-consumed buffer entries into the training
    set, reweights currently misclassified-or-mismatched samples, and
    continues training both classifier heads in place. The probe set
    measures the mismatch rate before and after. Buffer entries are
    marked consumed.
    """
    if buffer.pending_count() > 0:
        raise UnresolvedNovelties(
            f"{buffer.pending_count()} pending samples must be resolved first")

    version_before = bundle.version
    before = mismatch_rate(probe_set, bundle)

    resolved = buffer.resolved_unconsumed()
    merged = list(train_set)
    relabeled = 0
    for entry in resolved:
        if entry.status != "labeled":
            continue
        sample = entry.sample
        sample.label = entry.resolved_label
        merged.append(sample)
        relabeled += 1
    if not merged:
        raise InvalidConfig("retrain needs a non-empty merged training set")

    # weighted error rate of the current bundle drives the boost factor
    weights = {s.id: s.weight for s in merged}
    total = sum(weights.values())
    weights = {sid: w / total for sid, w in weights.items()}
    flagged = set()
    for s in merged:
        face_probs = classify(s, "face", bundle)
        posture_probs = classify(s, "posture", bundle)
        wrong = predicted_label(face_probs) != s.label
        mismatched, _ = detect_mismatch(face_probs, posture_probs)
        if wrong or mismatched:
            flagged.add(s.id)
    epsilon = sum(weights[sid] for sid in flagged)
    weights = reweight_adaboost(weights, flagged, epsilon)

    n = len(merged)
    if config.epochs > 0:
        for modality, head in (("face", bundle.face_classifier),
                               ("posture", bundle.posture_classifier)):
            provider = bundle.provider_for(modality)
            rows = [(fused_features(s, modality, provider), s.label,
                     weights[s.id] * n) for s in merged]
            train_epochs(head, rows, config.head_config(modality, config.seed, n))

    bundle.version += 1
    buffer.mark_consumed([e.sample.id for e in resolved])
    after = mismatch_rate(probe_set, bundle)
    # classes this cycle introduced = labels routed in via approved proposals
    proposal_classes = sorted({bundle.registry.name_of(e.resolved_label)
                               for e in resolved
                               if e.proposal_id is not None and e.resolved_label is not None})
    report = RetrainReport(
        mismatch_before=before, mismatch_after=after,
        classes_added=proposal_classes,
        samples_relabeled=relabeled, epochs_run=config.epochs,
        version_before=version_before, version_after=bundle.version)
    return bundle, report
