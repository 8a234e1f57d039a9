"""Geometric feature extraction from facial and postural landmark sets.

All length features are normalized by face height (face) or body height
(posture) so the vectors are invariant to translation, rotation, and
uniform scaling. Angles are reported in radians and are similarity
invariant by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry

EPS_GEOM = 1e-9

FACE_POINT_NAMES = (
    "left_eye_outer", "left_eye_inner", "left_eye_top", "left_eye_bottom",
    "right_eye_outer", "right_eye_inner", "right_eye_top", "right_eye_bottom",
    "left_brow_center", "right_brow_center",
    "nose_tip",
    "mouth_left", "mouth_right", "mouth_top", "mouth_bottom",
    "face_top", "face_bottom",
)

POSTURE_POINT_NAMES = (
    "head", "neck",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)

FACE_FEATURE_NAMES = (
    "width_left_eye", "width_right_eye", "width_mouth",
    "height_left_eye", "height_right_eye", "height_mouth",
    "dist_eye_to_eye", "dist_eyes_to_brows", "dist_eyes_to_mouth",
    "dist_eyes_to_nose", "dist_nose_to_mouth",
    "angle_at_left_eye", "angle_at_right_eye", "angle_at_mouth",
)

POSTURE_FEATURE_NAMES = (
    "angle_left_elbow", "angle_right_elbow",
    "angle_left_shoulder", "angle_right_shoulder",
    "angle_left_hip", "angle_right_hip",
    "dist_wrist_to_wrist", "dist_left_wrist_to_head", "dist_right_wrist_to_head",
    "dist_shoulder_to_shoulder", "dist_hip_to_hip", "dist_head_to_neck",
    "ratio_left_arm", "ratio_right_arm", "ratio_left_leg", "ratio_right_leg",
)


@dataclass(frozen=True)
class Point2:
    """A 2-D landmark position in image-plane units."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


def _dist(a: Point2, b: Point2) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def _midpoint(a: Point2, b: Point2) -> Point2:
    return Point2((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)


class _NamedPointSet:
    """Shared plumbing for the fixed-schema landmark dataclasses."""

    _names: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, Point2]:
        return {name: getattr(self, name) for name in self._names}

    def as_array(self) -> np.ndarray:
        """Points stacked in schema order, shape (n, 2)."""
        return np.array([[p.x, p.y] for p in self.as_dict().values()], dtype=np.float64)

    @classmethod
    def from_dict(cls, points: dict[str, Point2]):
        return cls(**{name: points[name] for name in cls._names})

    @classmethod
    def from_array(cls, coords) -> "_NamedPointSet":
        coords = np.asarray(coords, dtype=np.float64)
        return cls(**{name: Point2(float(x), float(y))
                      for name, (x, y) in zip(cls._names, coords)})


@dataclass(frozen=True)
class FaceLandmarkSet(_NamedPointSet):
    """The 17 named face-mesh points the face feature schema consumes."""

    left_eye_outer: Point2
    left_eye_inner: Point2
    left_eye_top: Point2
    left_eye_bottom: Point2
    right_eye_outer: Point2
    right_eye_inner: Point2
    right_eye_top: Point2
    right_eye_bottom: Point2
    left_brow_center: Point2
    right_brow_center: Point2
    nose_tip: Point2
    mouth_left: Point2
    mouth_right: Point2
    mouth_top: Point2
    mouth_bottom: Point2
    face_top: Point2
    face_bottom: Point2

    _names = FACE_POINT_NAMES


@dataclass(frozen=True)
class PostureLandmarkSet(_NamedPointSet):
    """The 14 named joints of the kinematic body model."""

    head: Point2
    neck: Point2
    left_shoulder: Point2
    right_shoulder: Point2
    left_elbow: Point2
    right_elbow: Point2
    left_wrist: Point2
    right_wrist: Point2
    left_hip: Point2
    right_hip: Point2
    left_knee: Point2
    right_knee: Point2
    left_ankle: Point2
    right_ankle: Point2

    _names = POSTURE_POINT_NAMES


@dataclass(frozen=True)
class VisibleFeatureVector:
    """Named geometric features in a fixed order."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if len(self.names) != self.values.shape[0]:
            raise ValueError("feature names and values disagree in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature value")
        for name, value in zip(self.names, self.values):
            if name.startswith("angle"):
                if not -1e-12 <= value <= math.pi + 1e-12:
                    raise ValueError(f"{name} = {value} outside [0, pi]")
            elif value <= 0.0:
                raise ValueError(f"{name} = {value} must be positive")

    def __len__(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


def angle_at(vertex: Point2, a: Point2, b: Point2) -> float:
    """Interior angle in [0, pi] between rays vertex->a and vertex->b."""
    ux, uy = a.x - vertex.x, a.y - vertex.y
    vx, vy = b.x - vertex.x, b.y - vertex.y
    nu = math.hypot(ux, uy)
    nv = math.hypot(vx, vy)
    if nu <= EPS_GEOM or nv <= EPS_GEOM:
        raise DegenerateGeometry(
            f"angle ray length below epsilon at vertex ({vertex.x}, {vertex.y})")
    c = (ux * vx + uy * vy) / (nu * nv)
    return math.acos(max(-1.0, min(1.0, c)))


def _safe_ratio(num: float, den: float, what: str) -> float:
    if den <= EPS_GEOM:
        raise DegenerateGeometry(f"{what} has length below epsilon")
    return num / den


def extract_face_features(landmarks: FaceLandmarkSet) -> VisibleFeatureVector:
    """14 face features: 3 widths, 3 heights, 5 distances (all divided by
    face height) and the 3 angles of the eye-eye-mouth triangle."""
    lm = landmarks
    face_height = _dist(lm.face_top, lm.face_bottom)
    if face_height <= EPS_GEOM:
        raise DegenerateGeometry("face height below epsilon")

    left_eye = _midpoint(lm.left_eye_outer, lm.left_eye_inner)
    right_eye = _midpoint(lm.right_eye_outer, lm.right_eye_inner)
    eye_mid = _midpoint(left_eye, right_eye)
    mouth_center = _midpoint(lm.mouth_top, lm.mouth_bottom)

    values = [
        _dist(lm.left_eye_outer, lm.left_eye_inner) / face_height,
        _dist(lm.right_eye_outer, lm.right_eye_inner) / face_height,
        _dist(lm.mouth_left, lm.mouth_right) / face_height,
        _dist(lm.left_eye_top, lm.left_eye_bottom) / face_height,
        _dist(lm.right_eye_top, lm.right_eye_bottom) / face_height,
        _dist(lm.mouth_top, lm.mouth_bottom) / face_height,
        _dist(left_eye, right_eye) / face_height,
        # mean of the two same-side eye-center-to-brow distances
        (_dist(left_eye, lm.left_brow_center)
         + _dist(right_eye, lm.right_brow_center)) / 2.0 / face_height,
        _dist(eye_mid, mouth_center) / face_height,
        _dist(eye_mid, lm.nose_tip) / face_height,
        _dist(lm.nose_tip, mouth_center) / face_height,
        angle_at(left_eye, right_eye, mouth_center),
        angle_at(right_eye, left_eye, mouth_center),
        angle_at(mouth_center, left_eye, right_eye),
    ]
    return VisibleFeatureVector(FACE_FEATURE_NAMES, np.array(values))


def extract_posture_features(landmarks: PostureLandmarkSet) -> VisibleFeatureVector:
    """16 posture features: 6 joint angles, 6 distances divided by body
    height, and 4 limb-length ratios."""
    lm = landmarks
    ankle_mid = _midpoint(lm.left_ankle, lm.right_ankle)
    body_height = _dist(lm.head, ankle_mid)
    if body_height <= EPS_GEOM:
        raise DegenerateGeometry("body height below epsilon")

    values = [
        angle_at(lm.left_elbow, lm.left_shoulder, lm.left_wrist),
        angle_at(lm.right_elbow, lm.right_shoulder, lm.right_wrist),
        angle_at(lm.left_shoulder, lm.neck, lm.left_elbow),
        angle_at(lm.right_shoulder, lm.neck, lm.right_elbow),
        angle_at(lm.left_hip, lm.neck, lm.left_knee),
        angle_at(lm.right_hip, lm.neck, lm.right_knee),
        _dist(lm.left_wrist, lm.right_wrist) / body_height,
        _dist(lm.left_wrist, lm.head) / body_height,
        _dist(lm.right_wrist, lm.head) / body_height,
        _dist(lm.left_shoulder, lm.right_shoulder) / body_height,
        _dist(lm.left_hip, lm.right_hip) / body_height,
        _dist(lm.head, lm.neck) / body_height,
        _safe_ratio(_dist(lm.left_shoulder, lm.left_elbow),
                    _dist(lm.left_elbow, lm.left_wrist), "left forearm"),
        _safe_ratio(_dist(lm.right_shoulder, lm.right_elbow),
                    _dist(lm.right_elbow, lm.right_wrist), "right forearm"),
        _safe_ratio(_dist(lm.left_hip, lm.left_knee),
                    _dist(lm.left_knee, lm.left_ankle), "left shin"),
        _safe_ratio(_dist(lm.right_hip, lm.right_knee),
                    _dist(lm.right_knee, lm.right_ankle), "right shin"),
    ]
    return VisibleFeatureVector(POSTURE_FEATURE_NAMES, np.array(values))
