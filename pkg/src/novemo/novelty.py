"""Novelty signals: modality mismatch, background-context outliers, and
the persistent buffer of flagged samples awaiting triage.

A sample is a potential novelty when its face-based and posture-based
predicted labels disagree, or when its background descriptor sits further
from every training-background cluster than the fitted threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BufferFull,
    DuplicateSample,
    InvalidK,
    InvalidTransition,
    MissingModality,
    ShapeMismatch,
)
from .pipeline import classify, fused_features, predicted_label

EPS_CTX = 1e-9


def detect_mismatch(face_probs: np.ndarray, posture_probs: np.ndarray):
    """(flag, score): flag when the argmaxes differ, score is the
    total-variation distance between the two probability vectors."""
    face_probs = np.asarray(face_probs, dtype=np.float64)
    posture_probs = np.asarray(posture_probs, dtype=np.float64)
    if face_probs.shape != posture_probs.shape:
        raise ShapeMismatch(
            f"probability vectors differ: {face_probs.shape} vs {posture_probs.shape}")
    flag = predicted_label(face_probs) != predicted_label(posture_probs)
    score = 0.5 * float(np.abs(face_probs - posture_probs).sum())
    return flag, score


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objective: float
    objective_trace: list[float]
    iterations: int


def kmeans(points, k: int, seed: int, max_iters: int = 100) -> KMeansResult:
    """Lloyd's iterations from a seeded distinct-point initialization.

    Stops when assignments stabilize or at max_iters. The objective is
    the sum of squared distances to assigned centroids, recorded after
    every assignment step (non-increasing by construction).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    distinct = np.unique(pts, axis=0)
    if not 1 <= k <= len(distinct):
        raise InvalidK(f"k={k} needs between 1 and {len(distinct)} distinct points")
    rng = np.random.default_rng(seed)
    centroids = distinct[rng.choice(len(distinct), size=k, replace=False)].copy()

    assignments = None
    trace: list[float] = []
    for iteration in range(max_iters):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(pts)), new_assignments].sum()))
        if assignments is not None and np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for c in range(k):
            members = pts[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return KMeansResult(centroids=centroids, assignments=assignments,
                        objective=trace[-1], objective_trace=trace,
                        iterations=len(trace))


@dataclass
class ContextModel:
    """Clustered training-background summary with an outlier threshold."""

    centroids: np.ndarray
    tau: float
    mean_distance: float
    std_distance: float
    k: int
    z_mult: float
    seed: int

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def min_centroid_distance(descriptor: np.ndarray, centroids: np.ndarray) -> float:
    deltas = centroids - descriptor[None, :]
    return float(np.sqrt((deltas ** 2).sum(axis=1)).min())


def fit_context_model(train_backgrounds, k: int, z_mult: float = 3.0,
                      seed: int = 0, restarts: int = 8) -> ContextModel:
    """Cluster training descriptors; threshold = mean + z_mult * std of
    the training min-centroid distances (std floored to stay positive).

    Runs several seeded k-means restarts and keeps the best objective so
    one unlucky initialization cannot misplace the centroids.
    """
    pts = np.asarray(train_backgrounds, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    result = None
    for i in range(max(restarts, 1)):
        candidate = kmeans(pts, k, seed + i)
        if result is None or candidate.objective < result.objective:
            result = candidate
    dists = np.array([min_centroid_distance(p, result.centroids) for p in pts])
    mu = float(dists.mean())
    sigma = float(dists.std())
    sigma = max(sigma, EPS_CTX * (1.0 + mu))
    return ContextModel(centroids=result.centroids, tau=mu + z_mult * sigma,
                        mean_distance=mu, std_distance=sigma,
                        k=k, z_mult=z_mult, seed=seed)


def context_novelty(descriptor: np.ndarray, model: ContextModel):
    """(flag, distance): min Euclidean distance to centroids vs tau."""
    descriptor = np.asarray(descriptor, dtype=np.float64)
    if descriptor.shape != (model.dim,):
        raise ShapeMismatch(f"descriptor length {descriptor.shape} != ({model.dim},)")
    distance = min_centroid_distance(descriptor, model.centroids)
    return distance > model.tau, distance


def descriptor_from_image(image: np.ndarray, person_mask: np.ndarray | None = None,
                          grid: int = 3) -> np.ndarray:
    """Grid-cell mean intensities over non-person pixels (grayscale)."""
    img = np.asarray(image, dtype=np.float64)
    keep = np.ones_like(img, dtype=bool) if person_mask is None else ~np.asarray(person_mask, dtype=bool)
    h, w = img.shape
    cells = []
    for i in range(grid):
        for j in range(grid):
            sl = (slice(i * h // grid, (i + 1) * h // grid),
                  slice(j * w // grid, (j + 1) * w // grid))
            block, mask = img[sl], keep[sl]
            cells.append(block[mask].mean() if mask.any() else 0.0)
    return np.array(cells)


REASONS = ("none", "mismatch", "context", "mismatch+context")


@dataclass
class NoveltyVerdict:
    sample_id: str
    mismatch_flag: bool
    mismatch_score: float
    context_flag: bool
    context_distance: float
    reason: str
    face_label: int
    posture_label: int
    face_probs: list[float] = field(default_factory=list)
    posture_probs: list[float] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return self.mismatch_flag or self.context_flag

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "mismatch_flag": self.mismatch_flag,
            "mismatch_score": self.mismatch_score,
            "context_flag": self.context_flag,
            "context_distance": self.context_distance,
            "reason": self.reason,
            "face_label": self.face_label,
            "posture_label": self.posture_label,
            "face_probs": self.face_probs,
            "posture_probs": self.posture_probs,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NoveltyVerdict":
        return cls(**d)


def detect(sample, bundle) -> NoveltyVerdict:
    """Run both classifiers plus the context check on one sample."""
    face_probs = classify(sample, "face", bundle)
    posture_probs = classify(sample, "posture", bundle)
    mismatch_flag, score = detect_mismatch(face_probs, posture_probs)

    context_flag, distance = False, 0.0
    if bundle.context is not None:
        descriptor = sample.background
        if descriptor is None and sample.image is not None:
            descriptor = descriptor_from_image(sample.image)
        if descriptor is None:
            raise MissingModality(
                f"sample {sample.id!r} has no background descriptor for the context check")
        context_flag, distance = context_novelty(descriptor, bundle.context)

    reason = {(False, False): "none", (True, False): "mismatch",
              (False, True): "context", (True, True): "mismatch+context"}[
        (mismatch_flag, context_flag)]
    return NoveltyVerdict(
        sample_id=sample.id, mismatch_flag=mismatch_flag, mismatch_score=score,
        context_flag=context_flag, context_distance=distance, reason=reason,
        face_label=predicted_label(face_probs),
        posture_label=predicted_label(posture_probs),
        face_probs=[float(p) for p in face_probs],
        posture_probs=[float(p) for p in posture_probs])


STATUSES = ("pending", "labeled", "dismissed")


@dataclass
class BufferEntry:
    sample: object
    verdict: NoveltyVerdict
    status: str = "pending"
    resolved_label: int | None = None
    operator: str | None = None
    proposal_id: str | None = None
    consumed: bool = False
    timestamp: int = 0
    features: np.ndarray | None = None


class NoveltyBuffer:
    """Append-only queue of flagged samples with single-writer mutation.

    Every mutation is persisted as one JSON line when a path is set;
    reopening the file replays the events and reproduces the state
    exactly. Timestamps are logical (the event index in the file) so
    that identical runs produce identical files.
    """

    def __init__(self, path=None, capacity: int = 10_000):
        self.path = path
        self.capacity = capacity
        self._entries: dict[str, BufferEntry] = {}
        self._clock = 0
        if path is not None:
            self._replay()

    # -- persistence ------------------------------------------------------

    def _replay(self):
        import os
        if not os.path.exists(self.path):
            return
        import json
        from .data_io import sample_from_json_dict
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._clock = max(self._clock, rec["timestamp"])
                kind = rec["event"]
                if kind == "push":
                    entry = BufferEntry(
                        sample=sample_from_json_dict(rec["sample"]),
                        verdict=NoveltyVerdict.from_json_dict(rec["verdict"]),
                        status="pending", timestamp=rec["timestamp"],
                        features=None if rec["features"] is None
                        else np.array(rec["features"], dtype=np.float64))
                    self._entries[entry.sample.id] = entry
                elif kind == "label":
                    e = self._entries[rec["id"]]
                    e.status = "labeled"
                    e.resolved_label = rec["label"]
                    e.operator = rec.get("operator")
                    e.proposal_id = rec.get("proposal_id")
                elif kind == "dismiss":
                    self._entries[rec["id"]].status = "dismissed"
                elif kind == "consume":
                    for sid in rec["ids"]:
                        self._entries[sid].consumed = True

    def _append(self, record: dict):
        if self.path is None:
            return
        import json
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    # -- queries ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._entries

    def get(self, sample_id: str) -> BufferEntry:
        return self._entries[sample_id]

    def entries(self) -> list[BufferEntry]:
        return sorted(self._entries.values(), key=lambda e: e.timestamp)

    def pending(self) -> list[BufferEntry]:
        return [e for e in self.entries() if e.status == "pending"]

    def pending_count(self) -> int:
        return sum(1 for e in self._entries.values() if e.status == "pending")

    def resolved_unconsumed(self) -> list[BufferEntry]:
        return [e for e in self.entries() if e.status != "pending" and not e.consumed]

    # -- mutations --------------------------------------------------------

    def push(self, sample, verdict: NoveltyVerdict, features=None):
        from .data_io import sample_to_json_dict
        if sample.id in self._entries:
            raise DuplicateSample(f"sample {sample.id!r} already buffered")
        if len(self._entries) >= self.capacity:
            raise BufferFull(f"buffer at capacity {self.capacity}")
        ts = self._tick()
        entry = BufferEntry(sample=sample, verdict=verdict, timestamp=ts,
                            features=None if features is None
                            else np.asarray(features, dtype=np.float64))
        self._entries[sample.id] = entry
        self._append({"event": "push", "timestamp": ts,
                      "sample": sample_to_json_dict(sample),
                      "verdict": verdict.to_json_dict(),
                      "status": "pending",
                      "features": None if entry.features is None
                      else [float(v) for v in entry.features]})
        return entry

    def _require_pending(self, sample_id: str) -> BufferEntry:
        if sample_id not in self._entries:
            raise KeyError(sample_id)
        entry = self._entries[sample_id]
        if entry.status != "pending":
            raise InvalidTransition(
                f"sample {sample_id!r} is {entry.status}, not pending")
        return entry

    def mark_labeled(self, sample_id: str, label_id: int, operator: str | None = None,
                     proposal_id: str | None = None):
        entry = self._require_pending(sample_id)
        entry.status = "labeled"
        entry.resolved_label = int(label_id)
        entry.operator = operator
        entry.proposal_id = proposal_id
        self._append({"event": "label", "timestamp": self._tick(), "id": sample_id,
                      "label": int(label_id), "operator": operator,
                      "proposal_id": proposal_id, "status": "labeled"})

    def mark_dismissed(self, sample_id: str):
        self._require_pending(sample_id)
        self._entries[sample_id].status = "dismissed"
        self._append({"event": "dismiss", "timestamp": self._tick(),
                      "id": sample_id, "status": "dismissed"})

    def mark_consumed(self, sample_ids):
        ids = [str(s) for s in sample_ids]
        for sid in ids:
            if self._entries[sid].status == "pending":
                raise InvalidTransition(f"cannot consume pending sample {sid!r}")
        for sid in ids:
            self._entries[sid].consumed = True
        if ids:
            self._append({"event": "consume", "timestamp": self._tick(), "ids": ids})


def buffer_push(buffer: NoveltyBuffer, sample, verdict: NoveltyVerdict,
                features=None) -> NoveltyBuffer:
    """Push only flagged verdicts; unflagged ones leave the buffer alone."""
    if verdict.flagged:
        buffer.push(sample, verdict, features=features)
    return buffer


def detect_and_buffer(sample, bundle, buffer: NoveltyBuffer) -> NoveltyVerdict:
    """detect() then buffer_push(), caching the fused face features the
    retraining clusterer will need."""
    verdict = detect(sample, bundle)
    features = None
    if verdict.flagged:
        features = fused_features(sample, "face", bundle.face_provider)
    buffer_push(buffer, sample, verdict, features=features)
    return verdict
