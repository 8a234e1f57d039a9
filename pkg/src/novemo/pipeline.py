"""Feature fusion, deep-feature providers, and the dual-modality bundle.

A ModelBundle holds one provider + classifier pair per modality (face,
posture) plus the background context model and the class registry. A
trained bundle is immutable in use; training and retraining produce new
parameter state under a bumped version id.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyDataset,
    EmptyEnsemble,
    DuplicateClass,
    InvalidConfig,
    MissingModality,
    ShapeMismatch,
)
from .geometry import extract_face_features, extract_posture_features
from .nn import ConvNet, ConvNetSpec, Mlp, MlpSpec, TrainingConfig, train_epochs

DEFAULT_CLASSES = ("anger", "disgust", "fear", "happiness", "neutral", "sadness", "surprise")

MODALITIES = ("face", "posture")


def derive_seed(master: int, *tags) -> int:
    """Stable sub-seed from a master seed and a tag path."""
    key = f"{master}:" + "/".join(str(t) for t in tags)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class EmotionLabel:
    id: int
    name: str


class ClassRegistry:
    """Append-only label registry; ids are dense from 0."""

    def __init__(self, names=DEFAULT_CLASSES):
        self._names: list[str] = []
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if name in self._names:
            raise DuplicateClass(f"class {name!r} already registered")
        self._names.append(name)
        return len(self._names) - 1

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._names

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def name_of(self, label_id: int) -> str:
        return self._names[label_id]

    def id_of(self, name: str) -> int:
        return self._names.index(name)

    def labels(self) -> list[EmotionLabel]:
        return [EmotionLabel(i, n) for i, n in enumerate(self._names)]


def image_to_input(image: np.ndarray) -> np.ndarray:
    """uint8 grayscale pixels -> float64 in [0, 1]."""
    return np.asarray(image, dtype=np.float64) / 255.0


def fuse_features(visible: np.ndarray, deep: np.ndarray) -> np.ndarray:
    """Concatenate visible entries first, then deep features."""
    visible = np.asarray(visible, dtype=np.float64)
    deep = np.asarray(deep, dtype=np.float64)
    if not (np.all(np.isfinite(visible)) and np.all(np.isfinite(deep))):
        raise ValueError("non-finite feature input")
    return np.concatenate([visible, deep])


class RegularCnnProvider:
    """Deep features from one trained CNN's last pool activation."""

    kind = "regular_cnn"

    def __init__(self, net: ConvNet):
        self.net = net

    @property
    def feature_length(self) -> int:
        return self.net.spec.deep_feature_len

    def features(self, sample) -> np.ndarray:
        if sample.image is None:
            raise MissingModality(f"sample {sample.id!r} has no image for the CNN provider")
        return self.net.deep_features(image_to_input(sample.image))


class EnsembleCnnProvider:
    """Mean of member CNN deep features; members share a spec but not seeds."""

    kind = "ensemble_cnn"

    def __init__(self, members: list[ConvNet]):
        if not members:
            raise EmptyEnsemble("ensemble provider needs at least one member")
        self.members = members

    @property
    def feature_length(self) -> int:
        return self.members[0].spec.deep_feature_len

    def features(self, sample) -> np.ndarray:
        if sample.image is None:
            raise MissingModality(f"sample {sample.id!r} has no image for the CNN provider")
        return ensemble_deep_feature(self, image_to_input(sample.image))


class ExternalEmbeddingProvider:
    """Embeddings precomputed elsewhere, looked up by sample id."""

    kind = "external_embedding"

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise InvalidConfig("external embedding table is empty")
        lengths = {len(v) for v in table.values()}
        if len(lengths) != 1:
            raise ShapeMismatch(f"embedding lengths differ: {sorted(lengths)}")
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    @property
    def feature_length(self) -> int:
        return len(next(iter(self.table.values())))

    def features(self, sample) -> np.ndarray:
        if sample.id not in self.table:
            raise MissingModality(f"no embedding for sample {sample.id!r}")
        return self.table[sample.id]


def ensemble_deep_feature(provider: EnsembleCnnProvider, image: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the member deep-feature vectors.

    Computed as first + mean(deviations) so that an ensemble of identical
    members reproduces the single-member features bit for bit.
    """
    if not provider.members:
        raise EmptyEnsemble("ensemble has no members")
    first = provider.members[0].deep_features(image)
    deviations = np.zeros_like(first)
    for member in provider.members[1:]:
        deviations += member.deep_features(image) - first
    return first + deviations / len(provider.members)


@dataclass
class ModelBundle:
    registry: ClassRegistry
    face_provider: object | None
    face_classifier: Mlp
    posture_provider: object | None
    posture_classifier: Mlp
    context: object | None = None
    version: int = 1

    def classifier_for(self, modality: str) -> Mlp:
        return self.face_classifier if modality == "face" else self.posture_classifier

    def provider_for(self, modality: str):
        return self.face_provider if modality == "face" else self.posture_provider


def visible_features(sample, modality: str) -> np.ndarray:
    if modality not in MODALITIES:
        raise InvalidConfig(f"unknown modality {modality!r}")
    if modality == "face":
        if sample.face is None:
            raise MissingModality(f"sample {sample.id!r} has no face landmarks")
        return extract_face_features(sample.face).values
    if sample.posture is None:
        raise MissingModality(f"sample {sample.id!r} has no posture landmarks")
    return extract_posture_features(sample.posture).values


def fused_features(sample, modality: str, provider) -> np.ndarray:
    visible = visible_features(sample, modality)
    deep = provider.features(sample) if provider is not None else np.zeros(0)
    return fuse_features(visible, deep)


def classify(sample, modality: str, bundle: ModelBundle) -> np.ndarray:
    """Softmax probabilities over the registry for one sample/modality."""
    fused = fused_features(sample, modality, bundle.provider_for(modality))
    return bundle.classifier_for(modality).forward(fused)


def predicted_label(probs: np.ndarray) -> int:
    """Argmax with lowest-index tie-break."""
    return int(np.argmax(probs))


@dataclass(frozen=True)
class ProviderConfig:
    """How one modality's deep-feature provider is built."""

    kind: str = "none"   # none | regular_cnn | ensemble_cnn | external_embedding
    ensemble_size: int = 3
    input_side: int = 32
    conv_filters: tuple[int, ...] = (8, 16)
    fc_hidden: int = 64
    train: TrainingConfig = field(default_factory=lambda: TrainingConfig(
        epochs=6, optimizer="adam"))
    embeddings: dict | None = None

    def __post_init__(self):
        if self.kind not in ("none", "regular_cnn", "ensemble_cnn", "external_embedding"):
            raise InvalidConfig(f"unknown provider kind {self.kind!r}")
        if self.kind == "ensemble_cnn" and self.ensemble_size < 1:
            raise InvalidConfig("ensemble_size must be >= 1")


@dataclass(frozen=True)
class BundleConfig:
    """Everything train_bundle needs besides the dataset itself."""

    classes: tuple[str, ...] = DEFAULT_CLASSES
    face_provider: ProviderConfig = field(default_factory=lambda: ProviderConfig(kind="ensemble_cnn"))
    posture_provider: ProviderConfig = field(default_factory=ProviderConfig)
    mlp_hidden: tuple[int, int] = (48, 24)
    mlp_train: TrainingConfig = field(default_factory=lambda: TrainingConfig(
        epochs=150, optimizer="adam", learning_rate=0.003))
    context_k: int = 3
    context_z_mult: float = 3.0
    seed: int = 0


def _build_provider(cfg: ProviderConfig, dataset, classes: int, seed: int, tag: str):
    if cfg.kind == "none":
        return None
    if cfg.kind == "external_embedding":
        if cfg.embeddings is None:
            raise InvalidConfig("external_embedding provider needs an embeddings table")
        return ExternalEmbeddingProvider(cfg.embeddings)

    spec = ConvNetSpec(input_side=cfg.input_side, conv_filters=cfg.conv_filters,
                       fc_widths=(cfg.fc_hidden, classes))
    count = cfg.ensemble_size if cfg.kind == "ensemble_cnn" else 1
    images = []
    for s in dataset:
        if s.image is None:
            raise MissingModality(f"sample {s.id!r} has no image for the CNN provider")
        images.append((image_to_input(s.image), s.label, s.weight))
    members = []
    for i in range(count):
        net = ConvNet(spec, seed=derive_seed(seed, tag, "init", i))
        member_cfg = replace(cfg.train, rng_seed=derive_seed(seed, tag, "shuffle", i))
        train_epochs(net, images, member_cfg)
        members.append(net)
    if cfg.kind == "regular_cnn":
        return RegularCnnProvider(members[0])
    return EnsembleCnnProvider(members)


def _train_head(dataset, modality: str, provider, hidden: tuple[int, int],
                train_cfg: TrainingConfig, classes: int, seed: int) -> Mlp:
    rows = [(fused_features(s, modality, provider), s.label, s.weight) for s in dataset]
    head = Mlp(MlpSpec(len(rows[0][0]), hidden[0], hidden[1], classes),
               seed=derive_seed(seed, modality, "head-init"))
    cfg = replace(train_cfg, rng_seed=derive_seed(seed, modality, "head-shuffle"))
    train_epochs(head, rows, cfg)
    return head


def train_bundle(dataset, config: BundleConfig) -> ModelBundle:
    """Train providers, both classifier heads, and the context model."""
    from .novelty import fit_context_model   # local import: novelty depends on pipeline

    if len(dataset) == 0:
        raise EmptyDataset("train_bundle needs a non-empty dataset")
    for s in dataset:
        if s.label is None:
            raise InvalidConfig(f"sample {s.id!r} is unlabeled")
        if s.face is None or s.posture is None:
            raise MissingModality(f"sample {s.id!r} lacks landmarks for both modalities")

    registry = ClassRegistry(config.classes)
    classes = len(registry)

    face_provider = _build_provider(config.face_provider, dataset, classes,
                                    config.seed, "face-provider")
    posture_provider = _build_provider(config.posture_provider, dataset, classes,
                                       config.seed, "posture-provider")
    face_head = _train_head(dataset, "face", face_provider, config.mlp_hidden,
                            config.mlp_train, classes, config.seed)
    posture_head = _train_head(dataset, "posture", posture_provider, config.mlp_hidden,
                               config.mlp_train, classes, config.seed)

    backgrounds = [s.background for s in dataset if s.background is not None]
    context = None
    if backgrounds:
        context = fit_context_model(np.array(backgrounds), config.context_k,
                                    config.context_z_mult,
                                    derive_seed(config.seed, "context"))
    return ModelBundle(registry=registry,
                       face_provider=face_provider, face_classifier=face_head,
                       posture_provider=posture_provider, posture_classifier=posture_head,
                       context=context, version=1)


@dataclass
class EvaluationReport:
    """Row-normalized confusion matrix plus overall/per-class accuracy."""

    accuracy: float
    confusion: np.ndarray          # rows true, cols predicted, row-normalized
    counts: np.ndarray             # raw tallies
    class_names: tuple[str, ...]

    @property
    def per_class(self) -> np.ndarray:
        return np.diagonal(self.confusion).copy()

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "class_names": list(self.class_names),
            "confusion": [[float(v) for v in row] for row in self.confusion],
            "counts": [[int(v) for v in row] for row in self.counts],
            "per_class": [float(v) for v in self.per_class],
        }


def evaluate(dataset, bundle: ModelBundle, modality: str) -> EvaluationReport:
    labeled = [s for s in dataset if s.label is not None]
    if not labeled:
        raise EmptyDataset("evaluate needs labeled samples")
    k = len(bundle.registry)
    counts = np.zeros((k, k), dtype=np.int64)
    for s in labeled:
        pred = predicted_label(classify(s, modality, bundle))
        counts[s.label, pred] += 1
    confusion = np.zeros((k, k))
    row_totals = counts.sum(axis=1)
    nonzero = row_totals > 0
    confusion[nonzero] = counts[nonzero] / row_totals[nonzero, None]
    accuracy = float(np.trace(counts)) / len(labeled)
    return EvaluationReport(accuracy=accuracy, confusion=confusion, counts=counts,
                            class_names=bundle.registry.names)
