"""Oriented 3D boxes, rigid transforms and exact box IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels

CATEGORIES = ("car", "truck", "van", "bus", "pedestrian", "cyclist", "other")


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]; in-range angles come back bit-for-bit."""
    theta = float(theta)
    if -np.pi < theta <= np.pi:
        return theta
    wrapped = float(np.arctan2(np.sin(theta), np.cos(theta)))
    if wrapped <= -np.pi:
        wrapped = np.pi
    return wrapped


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box3D:
    """A yaw-only detection box in one sensor frame.

    ``size`` is (length, width, height) along the box's local x, y, z axes.
    """

    category: str
    center: np.ndarray
    size: np.ndarray
    yaw: float
    confidence: float = 1.0
    track_id: Optional[int] = None

    def __post_init__(self):
        center = _frozen(self.center)
        size = _frozen(self.size)
        if center.shape != (3,) or size.shape != (3,):
            raise ValueError("center and size must be 3-vectors")
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(size)):
            raise ValueError("center and size must be finite")
        if np.any(size <= 0):
            raise ValueError(f"size components must be positive, got {size.tolist()}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "confidence", float(self.confidence))

    @property
    def rotation(self) -> np.ndarray:
        return rot_z(self.yaw)

    def to_oriented(self) -> "OrientedBox":
        return OrientedBox(self.rotation, self.center, self.size)


@dataclass(frozen=True, eq=False)
class OrientedBox:
    rotation: np.ndarray
    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation))
        object.__setattr__(self, "center", _frozen(self.center))
        object.__setattr__(self, "size", _frozen(self.size))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = _frozen(self.rotation)
        trans = _frozen(self.translation)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if (
            not np.all(np.isfinite(rot))
            or np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9
            or np.linalg.det(rot) < 0
        ):
            raise ValueError("rotation must be a proper rotation (orthonormal, det +1)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, mat) -> "RigidTransform":
        mat = np.asarray(mat, dtype=float)
        return cls(mat[:3, :3], mat[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rot_z(yaw), translation)

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, points) -> np.ndarray:
        """Map an ``(..., 3)`` array of points."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def is_yaw_only(self, tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.rotation[2], [0.0, 0.0, 1.0], atol=tol))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(t1: RigidTransform, t2: RigidTransform) -> RigidTransform:
    """``t1 o t2``: apply ``t2`` first, then ``t1``."""
    return RigidTransform(
        t1.rotation @ t2.rotation, t1.rotation @ t2.translation + t1.translation
    )


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


AnyBox = Union[Box3D, OrientedBox]


def _oriented(box: AnyBox) -> OrientedBox:
    return box.to_oriented() if isinstance(box, Box3D) else box


def box_vertices(box: AnyBox) -> np.ndarray:
    """The 8 corners of a box as an ``(8, 3)`` array.

    Local corners are enumerated as (+,+,-), (+,-,-), (-,-,-), (-,+,-),
    (+,+,+), (+,-,+), (-,-,+), (-,+,+) in units of half the (l, w, h) size,
    i.e. the bottom face counter-clockwise from the front-left corner, then
    the top face in the same order.
    """
    ob = _oriented(box)
    return kernels.box_corners(ob.rotation, ob.center, ob.size)


def apply_transform(t: RigidTransform, box: AnyBox) -> OrientedBox:
    ob = _oriented(box)
    return OrientedBox(
        t.rotation @ ob.rotation, t.rotation @ ob.center + t.translation, ob.size
    )


def transform_box3d(t: RigidTransform, box: Box3D) -> Box3D:
    """Apply a yaw-only transform and keep the result a :class:`Box3D`."""
    if not t.is_yaw_only(1e-9):
        raise ValueError("transform has roll/pitch; use apply_transform instead")
    return Box3D(
        box.category,
        t.rotation @ box.center + t.translation,
        box.size,
        box.yaw + t.yaw,
        box.confidence,
        box.track_id,
    )


def iou_3d(a: AnyBox, b: AnyBox) -> float:
    """Exact IoU of two oriented boxes via convex polytope clipping."""
    oa, ob = _oriented(a), _oriented(b)
    return float(
        kernels.box_iou(oa.rotation, oa.center, oa.size, ob.rotation, ob.center, ob.size)
    )


def stack_boxes(boxes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack boxes into contiguous ``(n,3,3)``, ``(n,3)``, ``(n,3)`` arrays."""
    n = len(boxes)
    rots = np.empty((n, 3, 3))
    centers = np.empty((n, 3))
    sizes = np.empty((n, 3))
    for k, box in enumerate(boxes):
        ob = _oriented(box)
        rots[k] = ob.rotation
        centers[k] = ob.center
        sizes[k] = ob.size
    return rots, centers, sizes
