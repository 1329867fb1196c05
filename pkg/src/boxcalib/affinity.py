"""Scene-level IoU scoring, box-pair extrinsic hypotheses and affinity matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .config import StrategyConfig
from .errors import DimensionMismatch, EmptyScene, InsufficientBoxes
from .geometry import AnyBox, Box3D, RigidTransform, rot_z, stack_boxes, wrap_angle

# |length - width| below this counts as a square footprint: quarter turns
# become admissible headings.
SQUARE_TOL = 0.05


@dataclass
class Scene:
    boxes: list
    frame_id: str = ""
    timestamp: Optional[float] = None

    def __len__(self):
        return len(self.boxes)

    @property
    def categories(self) -> list[str]:
        return [b.category for b in self.boxes]

    def arrays(self):
        return stack_boxes(self.boxes)


@dataclass
class AffinityMatrix:
    """Rows index infrastructure boxes, columns vehicle boxes."""

    values: np.ndarray
    hypothesis: list = field(default_factory=list)

    @property
    def shape(self):
        return self.values.shape

    def hypothesis_at(self, i: int, j: int) -> Optional[RigidTransform]:
        if not self.hypothesis:
            return None
        return self.hypothesis[i][j]


@dataclass
class EdgeAffinity:
    """Edge-pair affinities ``values[i, i2, j, j2] = K_q((i, i2), (j, j2))``.

    ``mask`` marks the endpoint-consistent edge pairs: ``i != i2``,
    ``j != j2`` and the far endpoints ``i2`` and ``j2`` share a category.
    """

    values: np.ndarray
    mask: np.ndarray

    @property
    def shape(self):
        return self.values.shape[0], self.values.shape[2]


def overall_iou(infra_boxes: Sequence[AnyBox], vehicle_boxes: Sequence[AnyBox]) -> float:
    """Sum of all pairwise 3D IoUs normalized by ``max(m, n)``.

    The infrastructure boxes must already be expressed in the vehicle frame.
    Either list being empty gives 0.
    """
    m, n = len(infra_boxes), len(vehicle_boxes)
    if m == 0 or n == 0:
        return 0.0
    ra, ca, sa = stack_boxes(infra_boxes)
    rb, cb, sb = stack_boxes(vehicle_boxes)
    return float(kernels.iou_sum(ra, ca, sa, rb, cb, sb)) / max(m, n)


def overall_iou_under(t: RigidTransform, scene_inf: Scene, scene_veh: Scene) -> float:
    """oIoU of the two scenes after mapping the infrastructure side through ``t``."""
    m, n = len(scene_inf), len(scene_veh)
    if m == 0 or n == 0:
        return 0.0
    ra, ca, sa = scene_inf.arrays()
    rb, cb, sb = scene_veh.arrays()
    sums = kernels.transformed_iou_sums(
        t.rotation[None].copy(), t.translation[None].copy(), ra, ca, sa, rb, cb, sb
    )
    return float(sums[0]) / max(m, n)


def is_square(box: Box3D) -> bool:
    return abs(box.size[0] - box.size[1]) < SQUARE_TOL


def hypothesis_extrinsics(b_inf: Box3D, b_veh: Box3D) -> list[RigidTransform]:
    """Transforms that carry ``b_inf`` onto ``b_veh``.

    A yaw-only box fixes the rotation only up to a heading flip, so two
    candidates come back (yaw difference and yaw difference + pi). When
    either footprint is square, the four quarter turns are returned instead.
    """
    base = b_veh.yaw - b_inf.yaw
    count = 4 if (is_square(b_inf) or is_square(b_veh)) else 2
    out = []
    for k in range(count):
        rot = rot_z(wrap_angle(base + k * 2.0 * np.pi / count))
        out.append(RigidTransform(rot, b_veh.center - rot @ b_inf.center))
    return out


def category_mask(scene_inf: Scene, scene_veh: Scene) -> np.ndarray:
    ci = np.array(scene_inf.categories, dtype=object)
    cv = np.array(scene_veh.categories, dtype=object)
    return ci[:, None] == cv[None, :]


def _require_nonempty(scene_inf: Scene, scene_veh: Scene):
    if len(scene_inf) == 0 or len(scene_veh) == 0:
        raise EmptyScene(
            f"need boxes on both sides (infrastructure={len(scene_inf)}, vehicle={len(scene_veh)})"
        )


def core_affinity(scene_inf: Scene, scene_veh: Scene, config: StrategyConfig) -> AffinityMatrix:
    """Score every admissible box pair by the oIoU its implied extrinsic achieves."""
    _require_nonempty(scene_inf, scene_veh)
    m, n = len(scene_inf), len(scene_veh)
    if config.uses_category:
        allowed = category_mask(scene_inf, scene_veh)
    else:
        allowed = np.ones((m, n), dtype=bool)

    owners = []
    cands = []
    for i in range(m):
        for j in range(n):
            if not allowed[i, j]:
                continue
            for t in hypothesis_extrinsics(scene_inf.boxes[i], scene_veh.boxes[j]):
                owners.append((i, j))
                cands.append(t)

    values = np.zeros((m, n))
    hyp = [[None] * n for _ in range(m)]
    if not cands:
        return AffinityMatrix(values, hyp)

    rots = np.stack([t.rotation for t in cands])
    trans = np.stack([t.translation for t in cands])
    ra, ca, sa = scene_inf.arrays()
    rb, cb, sb = scene_veh.arrays()
    scores = kernels.transformed_iou_sums(rots, trans, ra, ca, sa, rb, cb, sb) / max(m, n)

    # first-seen wins ties, so the result does not depend on evaluation order
    for k, (i, j) in enumerate(owners):
        if hyp[i][j] is None or scores[k] > values[i, j]:
            values[i, j] = scores[k]
            hyp[i][j] = cands[k]

    if config.use_confidence_weighting:
        conf_i = np.array([b.confidence for b in scene_inf.boxes])
        conf_j = np.array([b.confidence for b in scene_veh.boxes])
        values *= conf_i[:, None] * conf_j[None, :]
    return AffinityMatrix(values, hyp)


def _edge_mask(scene_inf: Scene, scene_veh: Scene) -> np.ndarray:
    m, n = len(scene_inf), len(scene_veh)
    if m < 2 or n < 2:
        raise InsufficientBoxes(
            f"edge affinities need >= 2 boxes per side (infrastructure={m}, vehicle={n})"
        )
    not_self_i = ~np.eye(m, dtype=bool)
    not_self_j = ~np.eye(n, dtype=bool)
    far_same = category_mask(scene_inf, scene_veh)  # (i2, j2)
    return not_self_i[:, :, None, None] & not_self_j[None, None, :, :] & far_same[None, :, None, :]


def length_affinity(scene_inf: Scene, scene_veh: Scene, sigma_len: float = 2.0) -> EdgeAffinity:
    """Edge similarity from inter-center distances, ``exp(-|d_inf - d_veh| / sigma)``."""
    mask = _edge_mask(scene_inf, scene_veh)
    _, ci, _ = scene_inf.arrays()
    _, cv, _ = scene_veh.arrays()
    d_inf = np.linalg.norm(ci[:, None] - ci[None], axis=-1)
    d_veh = np.linalg.norm(cv[:, None] - cv[None], axis=-1)
    diff = np.abs(d_inf[:, :, None, None] - d_veh[None, None, :, :])
    return EdgeAffinity(np.exp(-diff / sigma_len), mask)


def _relative_yaw(scene: Scene) -> np.ndarray:
    yaw = np.array([b.yaw for b in scene.boxes])
    rel = yaw[None, :] - yaw[:, None]
    return np.arctan2(np.sin(rel), np.cos(rel))


def angle_affinity(scene_inf: Scene, scene_veh: Scene, sigma_ang: float = 0.2) -> EdgeAffinity:
    """Edge similarity from the relative yaw of the two boxes on each edge."""
    mask = _edge_mask(scene_inf, scene_veh)
    a_inf = _relative_yaw(scene_inf)
    a_veh = _relative_yaw(scene_veh)
    diff = a_inf[:, :, None, None] - a_veh[None, None, :, :]
    diff = np.abs(np.arctan2(np.sin(diff), np.cos(diff)))
    return EdgeAffinity(np.exp(-diff / sigma_ang), mask)


def fuse_affinity(
    k_p, k_q: Optional[EdgeAffinity], config: StrategyConfig
) -> AffinityMatrix:
    """Blend vertex affinities with the mean of endpoint-consistent edge affinities.

    ``A = (1 - w) * K_p + w * mean(K_q over consistent edge pairs)``, with
    ``w = config.edge_fusion_weight``. Without ``k_q`` the result is ``K_p``.
    """
    if isinstance(k_p, AffinityMatrix):
        kp_vals, hyp = k_p.values, k_p.hypothesis
    else:
        kp_vals, hyp = np.asarray(k_p, dtype=float), []
    if k_q is None:
        return AffinityMatrix(kp_vals.copy(), hyp)
    if k_q.shape != kp_vals.shape or k_q.mask.shape != k_q.values.shape:
        raise DimensionMismatch(f"K_p is {kp_vals.shape} but K_q covers {k_q.shape}")
    w = config.edge_fusion_weight
    masked = np.where(k_q.mask, k_q.values, 0.0)
    total = masked.sum(axis=(1, 3))
    count = k_q.mask.sum(axis=(1, 3))
    edge_mean = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return AffinityMatrix((1.0 - w) * kp_vals + w * edge_mean, hyp)


def build_affinity(scene_inf: Scene, scene_veh: Scene, config: StrategyConfig) -> AffinityMatrix:
    """Affinity matrix for the strategy's ``affinity_kind``."""
    _require_nonempty(scene_inf, scene_veh)
    if config.uses_core:
        return core_affinity(scene_inf, scene_veh, config)

    cat = category_mask(scene_inf, scene_veh)
    kind = config.affinity_kind
    if kind == "length_category":
        k_q = length_affinity(scene_inf, scene_veh, config.sigma_len)
    elif kind == "angle_category":
        k_q = angle_affinity(scene_inf, scene_veh, config.sigma_ang)
    else:
        lq = length_affinity(scene_inf, scene_veh, config.sigma_len)
        aq = angle_affinity(scene_inf, scene_veh, config.sigma_ang)
        k_q = EdgeAffinity(lq.values * aq.values, lq.mask)
    fused = fuse_affinity(cat.astype(float), k_q, config)
    values = np.where(cat, fused.values, 0.0)
    if config.use_confidence_weighting:
        conf_i = np.array([b.confidence for b in scene_inf.boxes])
        conf_j = np.array([b.confidence for b in scene_veh.boxes])
        values = values * conf_i[:, None] * conf_j[None, :]
    m, n = values.shape
    return AffinityMatrix(values, [[None] * n for _ in range(m)])
