"""Synthetic scenario generation: class-dependent landmark prototypes,
low-frequency image patterns, clustered background descriptors, and
annotated novelty injections (unseen class, modality conflict,
background shift). Deterministic given the config seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_io import SampleRecord
from .errors import InvalidConfig
from .geometry import FaceLandmarkSet, Point2, PostureLandmarkSet
from .pipeline import DEFAULT_CLASSES

FACE_BASE = {
    "eye_w": 0.10, "eye_h": 0.040, "brow_y": 0.26, "nose_y": 0.55,
    "mouth_w": 0.24, "mouth_h": 0.060, "mouth_y": 0.75,
}

# per-class parameter overrides; index 7 is the canonical unseen class
FACE_CLASS_PARAMS = {
    0: {"brow_y": 0.31, "eye_h": 0.030, "mouth_w": 0.17, "mouth_h": 0.030},
    1: {"nose_y": 0.50, "mouth_y": 0.71, "mouth_h": 0.046, "eye_h": 0.032, "mouth_w": 0.27},
    2: {"eye_h": 0.064, "brow_y": 0.21, "mouth_w": 0.15, "mouth_h": 0.092},
    3: {"mouth_w": 0.34, "mouth_h": 0.100, "eye_h": 0.036},
    4: {},
    5: {"brow_y": 0.23, "mouth_y": 0.82, "mouth_w": 0.21, "mouth_h": 0.034},
    6: {"eye_h": 0.080, "eye_w": 0.125, "brow_y": 0.185, "mouth_w": 0.13, "mouth_h": 0.120},
    7: {"eye_w": 0.060, "eye_h": 0.020, "brow_y": 0.335, "mouth_w": 0.40,
        "mouth_h": 0.140, "mouth_y": 0.70, "nose_y": 0.60},
}

POSTURE_BASE = {"arm": 0.35, "bend": 0.50, "shoulder_w": 0.26, "hip_w": 0.18, "stance": 0.12}

POSTURE_CLASS_PARAMS = {
    0: {"arm": 0.35, "bend": 0.50, "stance": 0.10},
    1: {"arm": 0.60, "bend": 0.90, "shoulder_w": 0.24, "hip_w": 0.16, "stance": 0.16},
    2: {"arm": 1.05, "bend": 0.25, "shoulder_w": 0.22, "hip_w": 0.15, "stance": 0.06},
    3: {"arm": 1.35, "bend": 0.10, "shoulder_w": 0.28, "stance": 0.22},
    4: {"arm": 0.12, "bend": 0.15, "shoulder_w": 0.25, "hip_w": 0.17},
    5: {"arm": 0.06, "bend": 1.05, "shoulder_w": 0.21, "hip_w": 0.15, "stance": 0.05},
    6: {"arm": 1.20, "bend": 0.65, "shoulder_w": 0.27, "hip_w": 0.19, "stance": 0.30},
    7: {"arm": 0.82, "bend": 1.35, "shoulder_w": 0.32, "hip_w": 0.22, "stance": 0.40},
}


def _class_params(index: int, base: dict, table: dict, overrides=None) -> dict:
    params = dict(base)
    if overrides is not None and index in overrides:
        params.update(table.get(index, {}))
        params.update(overrides[index])
        return params
    if index in table:
        params.update(table[index])
        return params
    # deterministic fallback for class indices beyond the table
    rng = np.random.default_rng(1_000_003 * index + 17)
    for key in params:
        params[key] *= float(rng.uniform(0.6, 1.5))
    return params


def face_prototype(index: int, overrides=None) -> FaceLandmarkSet:
    p = _class_params(index, FACE_BASE, FACE_CLASS_PARAMS, overrides)
    lcx, rcx, eye_y = 0.32, 0.68, 0.35
    pts = {
        "left_eye_outer": (lcx - p["eye_w"] / 2, eye_y),
        "left_eye_inner": (lcx + p["eye_w"] / 2, eye_y),
        "left_eye_top": (lcx, eye_y - p["eye_h"] / 2),
        "left_eye_bottom": (lcx, eye_y + p["eye_h"] / 2),
        "right_eye_outer": (rcx + p["eye_w"] / 2, eye_y),
        "right_eye_inner": (rcx - p["eye_w"] / 2, eye_y),
        "right_eye_top": (rcx, eye_y - p["eye_h"] / 2),
        "right_eye_bottom": (rcx, eye_y + p["eye_h"] / 2),
        "left_brow_center": (lcx, p["brow_y"]),
        "right_brow_center": (rcx, p["brow_y"]),
        "nose_tip": (0.5, p["nose_y"]),
        "mouth_left": (0.5 - p["mouth_w"] / 2, p["mouth_y"]),
        "mouth_right": (0.5 + p["mouth_w"] / 2, p["mouth_y"]),
        "mouth_top": (0.5, p["mouth_y"] - p["mouth_h"] / 2),
        "mouth_bottom": (0.5, p["mouth_y"] + p["mouth_h"] / 2),
        "face_top": (0.5, 0.05),
        "face_bottom": (0.5, 0.95),
    }
    return FaceLandmarkSet.from_dict({k: Point2(*v) for k, v in pts.items()})


def posture_prototype(index: int, overrides=None) -> PostureLandmarkSet:
    p = _class_params(index, POSTURE_BASE, POSTURE_CLASS_PARAMS, overrides)
    arm, bend = p["arm"], p["bend"]
    upper, fore, thigh, shin = 0.16, 0.15, 0.20, 0.20
    shoulder_y, hip_y = 0.23, 0.52

    def arm_chain(side: float):
        sx = 0.5 + side * p["shoulder_w"] / 2
        elbow = (sx + side * upper * math.sin(arm), shoulder_y + upper * math.cos(arm))
        total = arm + bend
        wrist = (elbow[0] + side * fore * math.sin(total), elbow[1] + fore * math.cos(total))
        return (sx, shoulder_y), elbow, wrist

    def leg_chain(side: float):
        hx = 0.5 + side * p["hip_w"] / 2
        knee = (hx + side * thigh * math.sin(p["stance"]), hip_y + thigh * math.cos(p["stance"]))
        ankle = (knee[0] + side * shin * math.sin(p["stance"] / 2),
                 knee[1] + shin * math.cos(p["stance"] / 2))
        return (hx, hip_y), knee, ankle

    ls, le, lw = arm_chain(-1.0)
    rs, re, rw = arm_chain(+1.0)
    lh, lk, la = leg_chain(-1.0)
    rh, rk, ra = leg_chain(+1.0)
    pts = {
        "head": (0.5, 0.06), "neck": (0.5, 0.20),
        "left_shoulder": ls, "right_shoulder": rs,
        "left_elbow": le, "right_elbow": re,
        "left_wrist": lw, "right_wrist": rw,
        "left_hip": lh, "right_hip": rh,
        "left_knee": lk, "right_knee": rk,
        "left_ankle": la, "right_ankle": ra,
    }
    return PostureLandmarkSet.from_dict({k: Point2(*v) for k, v in pts.items()})


def class_image(index: int, side: int) -> np.ndarray:
    """A distinct low-frequency pattern per class."""
    fx = 1.0 + (index * 2) % 7
    fy = 1.0 + (index * 3) % 5
    phase = 0.8 * index
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    wave = np.sin(2 * math.pi * (fx * ii + fy * jj) / side + phase)
    return 127.5 + 90.0 * wave


def _noisy_landmarks(proto, sigma: float, rng) -> object:
    coords = proto.as_array()
    if sigma > 0:
        coords = coords + rng.normal(0.0, sigma, size=coords.shape)
    return type(proto).from_array(coords)


def scenario_class_names(count: int) -> tuple[str, ...]:
    names = list(DEFAULT_CLASSES[:count])
    while len(names) < count:
        names.append(f"class-{len(names)}")
    return tuple(names)


@dataclass(frozen=True)
class SyntheticScenarioConfig:
    class_count: int = 7
    train_per_class: int = 100
    probe_per_class: int = 100
    noise_sigma: float = 0.008
    posture_noise_sigma: float | None = None    # defaults to noise_sigma
    image_side: int = 32
    image_noise: float | None = None            # defaults to 600 * noise_sigma
    probe_image_noise: float | None = None      # defaults to image_noise
    background_dim: int = 27
    background_scenes: int = 3
    background_sigma: float = 0.05
    unseen_fraction: float = 0.0
    conflict_fraction: float = 0.0
    background_shift_fraction: float = 0.0
    background_shift_magnitude: float = 0.0
    # optional per-class prototype parameter overrides, keyed by class index
    face_class_params: dict | None = None
    posture_class_params: dict | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("unseen_fraction", "conflict_fraction", "background_shift_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1]")
        for name in ("noise_sigma", "background_sigma", "background_shift_magnitude"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.class_count < 2 or self.train_per_class < 1 or self.probe_per_class < 1:
            raise InvalidConfig("need at least 2 classes and 1 sample per class")
        for table, base in ((self.face_class_params, FACE_BASE),
                            (self.posture_class_params, POSTURE_BASE)):
            if table is None:
                continue
            for index, params in table.items():
                unknown = set(params) - set(base)
                if unknown:
                    raise InvalidConfig(
                        f"unknown prototype parameter(s) for class {index}: {sorted(unknown)}")

    @property
    def posture_sigma(self) -> float:
        return self.noise_sigma if self.posture_noise_sigma is None else self.posture_noise_sigma

    @property
    def pixel_noise(self) -> float:
        return 600.0 * self.noise_sigma if self.image_noise is None else self.image_noise

    @property
    def probe_pixel_noise(self) -> float:
        return self.pixel_noise if self.probe_image_noise is None else self.probe_image_noise


@dataclass
class ScenarioData:
    train: list[SampleRecord]
    probe: list[SampleRecord]
    annotations: dict[str, dict]
    class_names: tuple[str, ...]
    unseen_class_index: int


def synth_generate(config: SyntheticScenarioConfig) -> ScenarioData:
    """Build annotated train/probe sets; every injected anomaly is
    annotated and no nominal sample is."""
    rng = np.random.default_rng(config.seed)
    k = config.class_count
    centers = rng.uniform(0.0, 1.0, size=(config.background_scenes, config.background_dim))

    def make_sample(sid: str, class_index: int, label, pixel_noise: float) -> SampleRecord:
        face = _noisy_landmarks(face_prototype(class_index, config.face_class_params),
                                config.noise_sigma, rng)
        posture = _noisy_landmarks(posture_prototype(class_index, config.posture_class_params),
                                   config.posture_sigma, rng)
        image = class_image(class_index, config.image_side)
        if pixel_noise > 0:
            image = image + rng.normal(0.0, pixel_noise, size=image.shape)
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
        scene = int(rng.integers(config.background_scenes))
        background = centers[scene] + rng.normal(0.0, config.background_sigma,
                                                 size=config.background_dim)
        return SampleRecord(id=sid, image=image, face=face, posture=posture,
                            background=background, label=label)

    train = [make_sample(f"train-{c:02d}-{i:04d}", c, c, config.pixel_noise)
             for c in range(k) for i in range(config.train_per_class)]
    probe = [make_sample(f"probe-{c:02d}-{i:04d}", c, c, config.probe_pixel_noise)
             for c in range(k) for i in range(config.probe_per_class)]
    annotations: dict[str, dict] = {}

    # modality conflicts: replace the posture landmarks with another
    # class's prototype; the face (and label) stay authoritative
    n_conflict = round(config.conflict_fraction * len(probe))
    if n_conflict:
        chosen = rng.choice(len(probe), size=n_conflict, replace=False)
        for idx in sorted(int(i) for i in chosen):
            s = probe[idx]
            other = (s.label + 1 + int(rng.integers(k - 1))) % k
            s.posture = _noisy_landmarks(
                posture_prototype(other, config.posture_class_params),
                config.posture_sigma, rng)
            annotations[s.id] = {"kind": "modality_conflict", "true_label": s.label,
                                 "posture_class": other}

    # background shifts on so-far-nominal probes
    n_shift = round(config.background_shift_fraction * len(probe))
    if n_shift:
        nominal = [i for i, s in enumerate(probe) if s.id not in annotations]
        chosen = rng.choice(len(nominal), size=min(n_shift, len(nominal)), replace=False)
        for idx in sorted(nominal[int(i)] for i in chosen):
            s = probe[idx]
            direction = rng.normal(size=config.background_dim)
            direction /= np.sqrt((direction ** 2).sum())
            s.background = s.background + config.background_shift_magnitude * direction
            annotations[s.id] = {"kind": "background_shift", "true_label": s.label}

    # unseen-class samples appended to the probe stream
    n_unseen = round(config.unseen_fraction * k * config.probe_per_class)
    for j in range(n_unseen):
        s = make_sample(f"probe-unseen-{j:04d}", k, None, config.probe_pixel_noise)
        probe.append(s)
        annotations[s.id] = {"kind": "unseen_class", "true_label": None}

    return ScenarioData(train=train, probe=probe, annotations=annotations,
                        class_names=scenario_class_names(k), unseen_class_index=k)
