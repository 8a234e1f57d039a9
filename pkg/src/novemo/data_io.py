"""Dataset and model serialization plus the synthetic scenario generator.

File formats:
  - samples: JSON lines, one object per sample (images base64-encoded)
  - landmarks / embeddings: JSON lines keyed by sample id
  - datasets: a directory with samples.jsonl + manifest.json (sha256
    checksums verified on load)
  - model bundles: binary, magic ``NAERS``, u32 format version,
    little-endian float64 parameter blocks, trailing CRC32
Loaders reject malformed input with the offending record's locus rather
than repairing it silently.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFile,
    DimensionMismatch,
    InvalidConfig,
    MalformedRow,
    MissingColumn,
    MissingLandmark,
    UnknownLandmarkName,
    VersionMismatch,
)
from .geometry import (
    FACE_POINT_NAMES,
    POSTURE_POINT_NAMES,
    FaceLandmarkSet,
    Point2,
    PostureLandmarkSet,
)
from .novelty import ContextModel
from .pipeline import (
    ClassRegistry,
    EnsembleCnnProvider,
    ExternalEmbeddingProvider,
    ModelBundle,
    RegularCnnProvider,
)
from .nn import ConvNet, ConvNetSpec, Mlp, MlpSpec

BUNDLE_MAGIC = b"NAERS"
BUNDLE_FORMAT_VERSION = 1
DATASET_FORMAT_VERSION = 1

FER_HEADER = ("emotion", "pixels", "Usage")
FER_SIDE = 48
FER_CODE_NAMES = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")
FER_USAGE_SPLITS = {"Training": "train", "PublicTest": "val", "PrivateTest": "test"}


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass
class SampleRecord:
    """One input frame's bundle of modalities."""

    id: str
    image: np.ndarray | None = None          # uint8, square
    face: FaceLandmarkSet | None = None
    posture: PostureLandmarkSet | None = None
    background: np.ndarray | None = None
    label: int | None = None
    weight: float = 1.0

    def __post_init__(self):
        if self.image is None and self.face is None and self.posture is None \
                and self.background is None:
            raise InvalidConfig(f"sample {self.id!r} carries no modality at all")
        if self.image is not None:
            self.image = np.asarray(self.image, dtype=np.uint8)
            if self.image.ndim != 2 or self.image.shape[0] != self.image.shape[1]:
                raise InvalidConfig(f"sample {self.id!r} image must be square grayscale")
        if self.background is not None:
            self.background = np.asarray(self.background, dtype=np.float64)
        if self.weight <= 0:
            raise InvalidConfig(f"sample {self.id!r} weight must be > 0")


def _points_to_json(lm) -> dict:
    return {name: [p.x, p.y] for name, p in lm.as_dict().items()}


def _points_from_json(obj: dict, cls, names, locus: str):
    unknown = set(obj) - set(names)
    if unknown:
        raise UnknownLandmarkName(f"{locus}: unknown point name(s) {sorted(unknown)}")
    missing = set(names) - set(obj)
    if missing:
        raise MissingLandmark(f"{locus}: missing point(s) {sorted(missing)}")
    points = {}
    for name in names:
        arr = obj[name]
        if not isinstance(arr, (list, tuple)) or len(arr) != 2:
            raise DimensionMismatch(f"{locus}: point {name!r} must be [x, y]")
        points[name] = Point2(float(arr[0]), float(arr[1]))
    return cls.from_dict(points)


def sample_to_json_dict(sample: SampleRecord) -> dict:
    return {
        "id": sample.id,
        "label": sample.label,
        "weight": sample.weight,
        "image": None if sample.image is None else {
            "side": int(sample.image.shape[0]),
            "data": base64.b64encode(sample.image.tobytes()).decode("ascii"),
        },
        "face": None if sample.face is None else _points_to_json(sample.face),
        "posture": None if sample.posture is None else _points_to_json(sample.posture),
        "background": None if sample.background is None
        else [float(v) for v in sample.background],
    }


def sample_from_json_dict(obj: dict) -> SampleRecord:
    locus = f"sample {obj.get('id', '?')!r}"
    image = None
    if obj.get("image") is not None:
        side = int(obj["image"]["side"])
        raw = base64.b64decode(obj["image"]["data"])
        if len(raw) != side * side:
            raise DimensionMismatch(f"{locus}: pixel count {len(raw)} != side^2 = {side * side}")
        image = np.frombuffer(raw, dtype=np.uint8).reshape(side, side).copy()
    face = None
    if obj.get("face") is not None:
        face = _points_from_json(obj["face"], FaceLandmarkSet, FACE_POINT_NAMES, locus)
    posture = None
    if obj.get("posture") is not None:
        posture = _points_from_json(obj["posture"], PostureLandmarkSet, POSTURE_POINT_NAMES, locus)
    background = None if obj.get("background") is None \
        else np.array(obj["background"], dtype=np.float64)
    return SampleRecord(id=obj["id"], image=image, face=face, posture=posture,
                        background=background, label=obj.get("label"),
                        weight=obj.get("weight", 1.0))


# ---------------------------------------------------------------------------
# dataset directories with manifests
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(samples: list[SampleRecord], directory, classes=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples_path = directory / "samples.jsonl"
    with open(samples_path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_json_dict(s), sort_keys=True) + "\n")
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "classes": list(classes) if classes is not None else None,
        "sample_count": len(samples),
        "checksums": {"samples.jsonl": _sha256(samples_path)},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_dataset(directory) -> tuple[list[SampleRecord], dict]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CorruptFile(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise VersionMismatch(
            f"dataset format {manifest.get('format_version')} != {DATASET_FORMAT_VERSION}")
    for name, digest in manifest["checksums"].items():
        actual = _sha256(directory / name)
        if actual != digest:
            raise CorruptFile(f"{name}: checksum {actual} != manifest {digest}")
    samples = []
    with open(directory / "samples.jsonl") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(sample_from_json_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise MalformedRow(i, f"bad JSON: {exc}") from exc
    if len(samples) != manifest["sample_count"]:
        raise CorruptFile(
            f"sample count {len(samples)} != manifest {manifest['sample_count']}")
    return samples, manifest


# ---------------------------------------------------------------------------
# FER-2013 CSV
# ---------------------------------------------------------------------------

def load_fer_csv(path, registry: ClassRegistry | None = None) -> dict[str, list[SampleRecord]]:
    """Parse the public 48x48 grayscale CSV layout into train/val/test splits."""
    import csv

    registry = registry or ClassRegistry()
    splits: dict[str, list[SampleRecord]] = {"train": [], "val": [], "test": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file, expected header emotion,pixels,Usage")
        if tuple(header) != FER_HEADER:
            missing = set(FER_HEADER) - set(header)
            raise MissingColumn(
                f"header {header} != {list(FER_HEADER)}"
                + (f" (missing {sorted(missing)})" if missing else ""))
        for row_num, row in enumerate(reader, start=1):
            if len(row) != 3:
                raise MalformedRow(row_num, f"expected 3 fields, got {len(row)}")
            emotion_raw, pixels_raw, usage = row
            try:
                code = int(emotion_raw)
            except ValueError:
                raise MalformedRow(row_num, f"emotion {emotion_raw!r} is not an integer")
            if not 0 <= code < len(FER_CODE_NAMES):
                raise MalformedRow(row_num, f"emotion {code} outside 0..6")
            parts = pixels_raw.split()
            if len(parts) != FER_SIDE * FER_SIDE:
                raise MalformedRow(row_num, f"{len(parts)} pixels, expected {FER_SIDE * FER_SIDE}")
            try:
                values = [int(p) for p in parts]
            except ValueError:
                raise MalformedRow(row_num, "non-integer pixel value")
            if any(not 0 <= v <= 255 for v in values):
                raise MalformedRow(row_num, "pixel value outside 0..255")
            if usage not in FER_USAGE_SPLITS:
                raise MalformedRow(row_num, f"unknown Usage {usage!r}")
            image = np.array(values, dtype=np.uint8).reshape(FER_SIDE, FER_SIDE)
            splits[FER_USAGE_SPLITS[usage]].append(SampleRecord(
                id=f"fer-{row_num:06d}", image=image,
                label=registry.id_of(FER_CODE_NAMES[code])))
    return splits


def write_fer_csv(path, rows) -> None:
    """Inverse of load_fer_csv for fixtures: rows of (code, pixels, usage)."""
    with open(path, "w") as fh:
        fh.write(",".join(FER_HEADER) + "\n")
        for code, pixels, usage in rows:
            fh.write(f"{code},{' '.join(str(int(v)) for v in pixels)},{usage}\n")


# ---------------------------------------------------------------------------
# landmark / embedding exchange files
# ---------------------------------------------------------------------------

def load_landmarks(path) -> dict[str, dict]:
    """JSON-lines landmark file -> {id: {"face": set|None, "posture": set|None}}."""
    out: dict[str, dict] = {}
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRow(i, f"bad JSON: {exc}") from exc
            if "id" not in obj:
                raise MalformedRow(i, "record without id")
            locus = f"line {i}"
            entry = {"face": None, "posture": None}
            if "face" in obj:
                entry["face"] = _points_from_json(obj["face"], FaceLandmarkSet,
                                                  FACE_POINT_NAMES, locus)
            if "posture" in obj:
                entry["posture"] = _points_from_json(obj["posture"], PostureLandmarkSet,
                                                     POSTURE_POINT_NAMES, locus)
            out[obj["id"]] = entry
    return out


def load_embeddings(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    length = None
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRow(i, f"bad JSON: {exc}") from exc
            if "id" not in obj or "embedding" not in obj:
                raise MalformedRow(i, "record needs id and embedding")
            vec = np.array(obj["embedding"], dtype=np.float64)
            if vec.ndim != 1:
                raise DimensionMismatch(f"line {i}: embedding must be a flat vector")
            if length is None:
                length = len(vec)
            elif len(vec) != length:
                raise DimensionMismatch(
                    f"line {i}: embedding length {len(vec)} != {length}")
            out[obj["id"]] = vec
    return out


# ---------------------------------------------------------------------------
# model bundle binary format
# ---------------------------------------------------------------------------

def _provider_header(provider, arrays: list[np.ndarray]):
    if provider is None:
        return None
    if isinstance(provider, RegularCnnProvider):
        arrays.extend(provider.net.parameters())
        spec = provider.net.spec
        return {"kind": "regular_cnn", "seed": provider.net.seed,
                "spec": {"input_side": spec.input_side,
                         "conv_filters": list(spec.conv_filters),
                         "fc_widths": list(spec.fc_widths)}}
    if isinstance(provider, EnsembleCnnProvider):
        for member in provider.members:
            arrays.extend(member.parameters())
        spec = provider.members[0].spec
        return {"kind": "ensemble_cnn",
                "seeds": [m.seed for m in provider.members],
                "spec": {"input_side": spec.input_side,
                         "conv_filters": list(spec.conv_filters),
                         "fc_widths": list(spec.fc_widths)}}
    if isinstance(provider, ExternalEmbeddingProvider):
        ids = sorted(provider.table)
        arrays.append(np.stack([provider.table[i] for i in ids]))
        return {"kind": "external_embedding", "ids": ids}
    raise InvalidConfig(f"unserializable provider {type(provider).__name__}")


def _provider_from_header(header, arrays: list[np.ndarray], cursor: list[int]):
    def take() -> np.ndarray:
        cursor[0] += 1
        return arrays[cursor[0] - 1]

    if header is None:
        return None
    kind = header["kind"]
    if kind in ("regular_cnn", "ensemble_cnn"):
        spec = ConvNetSpec(input_side=header["spec"]["input_side"],
                           conv_filters=tuple(header["spec"]["conv_filters"]),
                           fc_widths=tuple(header["spec"]["fc_widths"]))
        seeds = header["seeds"] if kind == "ensemble_cnn" else [header["seed"]]
        members = []
        for seed in seeds:
            net = ConvNet(spec, seed=seed)
            net.load_parameters([take() for _ in net.parameters()])
            members.append(net)
        return EnsembleCnnProvider(members) if kind == "ensemble_cnn" \
            else RegularCnnProvider(members[0])
    if kind == "external_embedding":
        matrix = take()
        return ExternalEmbeddingProvider(
            {sid: matrix[i] for i, sid in enumerate(header["ids"])})
    raise CorruptFile(f"unknown provider kind {kind!r}")


def _mlp_header(mlp: Mlp, arrays: list[np.ndarray]) -> dict:
    arrays.extend(mlp.parameters())
    s = mlp.spec
    return {"spec": [s.input_dim, s.hidden1, s.hidden2, s.output_dim], "seed": mlp.seed}


def _mlp_from_header(header: dict, arrays, cursor) -> Mlp:
    mlp = Mlp(MlpSpec(*header["spec"]), seed=header["seed"])
    mlp.load_parameters(arrays[cursor[0]:cursor[0] + 6])
    cursor[0] += 6
    return mlp


def save_bundle(bundle: ModelBundle, path) -> None:
    arrays: list[np.ndarray] = []
    header = {
        "registry": list(bundle.registry.names),
        "bundle_version": bundle.version,
        "face_provider": _provider_header(bundle.face_provider, arrays),
        "face_classifier": _mlp_header(bundle.face_classifier, arrays),
        "posture_provider": _provider_header(bundle.posture_provider, arrays),
        "posture_classifier": _mlp_header(bundle.posture_classifier, arrays),
        "context": None,
    }
    if bundle.context is not None:
        ctx = bundle.context
        header["context"] = {"tau": ctx.tau, "mean": ctx.mean_distance,
                             "std": ctx.std_distance, "k": ctx.k,
                             "z_mult": ctx.z_mult, "seed": ctx.seed}
        arrays.append(ctx.centroids)
    header["shapes"] = [list(a.shape) for a in arrays]

    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = bytearray()
    payload += BUNDLE_MAGIC
    payload += struct.pack("<I", BUNDLE_FORMAT_VERSION)
    payload += struct.pack("<Q", len(header_bytes))
    payload += header_bytes
    for a in arrays:
        payload += np.ascontiguousarray(a, dtype="<f8").tobytes()
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    Path(path).write_bytes(bytes(payload))


def load_bundle(path) -> ModelBundle:
    data = Path(path).read_bytes()
    if len(data) < len(BUNDLE_MAGIC) + 16 or not data.startswith(BUNDLE_MAGIC):
        raise CorruptFile(f"{path}: not a model bundle")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CorruptFile(f"{path}: checksum mismatch")
    offset = len(BUNDLE_MAGIC)
    version = struct.unpack_from("<I", data, offset)[0]
    offset += 4
    if version != BUNDLE_FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version} != {BUNDLE_FORMAT_VERSION}")
    header_len = struct.unpack_from("<Q", data, offset)[0]
    offset += 8
    header = json.loads(data[offset:offset + header_len].decode())
    offset += header_len

    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        block = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays.append(block.reshape(shape).astype(np.float64))
        offset += count * 8
    if offset != len(data) - 4:
        raise CorruptFile(f"{path}: trailing bytes after parameter blocks")

    cursor = [0]
    face_provider = _provider_from_header(header["face_provider"], arrays, cursor)
    face_classifier = _mlp_from_header(header["face_classifier"], arrays, cursor)
    posture_provider = _provider_from_header(header["posture_provider"], arrays, cursor)
    posture_classifier = _mlp_from_header(header["posture_classifier"], arrays, cursor)
    context = None
    if header["context"] is not None:
        ctx = header["context"]
        context = ContextModel(centroids=arrays[cursor[0]], tau=ctx["tau"],
                               mean_distance=ctx["mean"], std_distance=ctx["std"],
                               k=ctx["k"], z_mult=ctx["z_mult"], seed=ctx["seed"])
        cursor[0] += 1
    registry = ClassRegistry(header["registry"])
    return ModelBundle(registry=registry, face_provider=face_provider,
                       face_classifier=face_classifier,
                       posture_provider=posture_provider,
                       posture_classifier=posture_classifier,
                       context=context, version=header["bundle_version"])
