import json
from pathlib import Path

import pytest

from novemo.geometry import FaceLandmarkSet, PostureLandmarkSet, Point2

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture_points(name: str, key: str) -> dict[str, tuple[float, float]]:
    line = (FIXTURES / name).read_text().strip().splitlines()[0]
    return {k: tuple(v) for k, v in json.loads(line)[key].items()}


@pytest.fixture
def face_fixture() -> FaceLandmarkSet:
    pts = load_fixture_points("face_fixture_01.jsonl", "face")
    return FaceLandmarkSet.from_dict({k: Point2(*v) for k, v in pts.items()})


@pytest.fixture
def pose_fixture() -> PostureLandmarkSet:
    pts = load_fixture_points("pose_fixture_01.jsonl", "posture")
    return PostureLandmarkSet.from_dict({k: Point2(*v) for k, v in pts.items()})
