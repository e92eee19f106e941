"""Domain types for 14-landmark 2D poses and labeled pose sequences.

The landmark model indexes the body 1..14 in image coordinates (y grows
downward):

====  ==================  ====  ==================
   1  head (merged face)     8  left wrist
   2  root (neck)            9  right hip
   3  right shoulder        10  right knee
   4  right elbow           11  right ankle
   5  right wrist           12  left hip
   6  left shoulder         13  left knee
   7  left elbow            14  left ankle
====  ==================  ====  ==================

Public APIs take and return 1-based landmark indices; array rows are the
usual 0-based offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AbsentLandmark, MalformedFrame, UnknownLabel

N_LANDMARKS = 14
HEAD = 1
ROOT = 2  # the neck; origin of every centered pose
RIGHT_HIP = 9
LEFT_HIP = 12

# Left/right counterpart of every landmark. Head and root sit on the symmetry
# axis and map to themselves. The map is an involution.
MIRROR = {
    1: 1, 2: 2,
    3: 6, 4: 7, 5: 8,
    6: 3, 7: 4, 8: 5,
    9: 12, 10: 13, 11: 14,
    12: 9, 13: 10, 14: 11,
}

VIEWPOINTS = (
    "front",
    "front-left",
    "front-right",
    "left",
    "right",
    "rear",
    "rear-left",
    "rear-right",
)

# Viewpoint relabeling under a left/right flip of the pose.
FLIP_VIEWPOINT = {
    "front": "front",
    "rear": "rear",
    "left": "right",
    "right": "left",
    "front-left": "front-right",
    "front-right": "front-left",
    "rear-left": "rear-right",
    "rear-right": "rear-left",
}

# Landmark subsets scored by the embedding stage: the whole body plus the four
# limbs. The keys are the identifiers used in embedded-channel headers.
SUBSETS = {
    "J": tuple(range(1, N_LANDMARKS + 1)),
    "J_a": (3, 4, 5),     # right arm
    "J_b": (6, 7, 8),     # left arm
    "J_c": (9, 10, 11),   # right leg
    "J_d": (12, 13, 14),  # left leg
}
SUBSET_NAMES = ("J", "J_a", "J_b", "J_c", "J_d")


def check_landmark(j: int) -> int:
    if not 1 <= int(j) <= N_LANDMARKS:
        raise UnknownLabel(f"landmark index {j} outside 1..{N_LANDMARKS}")
    return int(j)


@dataclass(frozen=True)
class Pose:
    """One frame: landmark coordinates plus per-landmark presence flags.

    Coordinates of absent landmarks carry no meaning and must only be read
    through :meth:`coord`, which refuses them.
    """

    xy: np.ndarray        # (14, 2) float64
    present: np.ndarray   # (14,) bool

    def __post_init__(self) -> None:
        xy = np.array(self.xy, dtype=np.float64, copy=True)
        present = np.array(self.present, dtype=bool, copy=True)
        if xy.shape != (N_LANDMARKS, 2):
            raise MalformedFrame(f"pose coordinates must be (14, 2), got {xy.shape}")
        if present.shape != (N_LANDMARKS,):
            raise MalformedFrame(f"presence flags must be (14,), got {present.shape}")
        xy.flags.writeable = False
        present.flags.writeable = False
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "present", present)

    def is_present(self, j: int) -> bool:
        return bool(self.present[check_landmark(j) - 1])

    def coord(self, j: int) -> tuple[float, float]:
        check_landmark(j)
        if not self.present[j - 1]:
            raise AbsentLandmark(f"landmark {j} is absent")
        return float(self.xy[j - 1, 0]), float(self.xy[j - 1, 1])


@dataclass(frozen=True)
class LinkVector:
    """Directed segment between two landmarks of one pose."""

    start: int
    end: int
    dx: float
    dy: float

    @property
    def norm(self) -> float:
        return float(np.hypot(self.dx, self.dy))


def link(pose: Pose, a: int, b: int) -> LinkVector:
    """Vector from landmark ``a`` to landmark ``b``.

    Raises AbsentLandmark when either endpoint is absent.
    """
    xa, ya = pose.coord(a)
    xb, yb = pose.coord(b)
    return LinkVector(a, b, xb - xa, yb - ya)


def missing_count(pose: Pose) -> int:
    return int((~pose.present).sum())


@dataclass(frozen=True)
class Sample:
    """A labeled pose sequence: one actor performing one action, seen from one
    viewpoint. Frames keep detector order; all-absent frames are legal here
    and are dealt with by the preprocessing stage."""

    poses: tuple[Pose, ...]
    action: str
    viewpoint: str
    actor: str
    dataset: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.poses) < 1:
            raise MalformedFrame("a sample needs at least one frame")
        if self.viewpoint not in VIEWPOINTS:
            raise UnknownLabel(f"unknown viewpoint {self.viewpoint!r}")

    def __len__(self) -> int:
        return len(self.poses)


def sample_arrays(sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    """Stack a sample into (T, 14, 2) coordinates and (T, 14) presence."""
    xy = np.stack([p.xy for p in sample.poses])
    present = np.stack([p.present for p in sample.poses])
    return xy, present
