"""Calibration error metrics, difficulty labels and batch benchmarking."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .affinity import Scene
from .config import StrategyConfig
from .errors import EmptyDataset, EmptyScene, MissingGroundTruth
from .geometry import RigidTransform, apply_transform, iou_3d
from .pipeline import calibrate

log = logging.getLogger(__name__)

SUCCESS_RTE_M = 2.0
DIFFICULTIES = ("easy", "hard", "unknown")


@dataclass
class FramePairRecord:
    scene_inf: Scene
    scene_veh: Scene
    gt_extrinsic: Optional[RigidTransform] = None
    difficulty: str = "unknown"
    frame_id: str = ""


@dataclass
class DifficultyRule:
    min_common: int = 4
    max_translation_m: float = 60.0
    covisible_iou: float = 0.1


def rre(r_true, r_est) -> float:
    """Geodesic angle between two rotations, in degrees.

    Same angle as ``arccos((tr(R_true^T R_est) - 1) / 2)``, evaluated with
    atan2 so it stays accurate near 0 and 180 degrees.
    """
    delta = np.asarray(r_true, dtype=float).T @ np.asarray(r_est, dtype=float)
    cos = min(1.0, max(-1.0, (np.trace(delta) - 1.0) / 2.0))
    skew = np.array(
        [delta[2, 1] - delta[1, 2], delta[0, 2] - delta[2, 0], delta[1, 0] - delta[0, 1]]
    )
    sin = 0.5 * float(np.linalg.norm(skew))
    return math.degrees(math.atan2(sin, cos))


def rte(t_true, t_est) -> float:
    return float(np.linalg.norm(np.asarray(t_true, dtype=float) - np.asarray(t_est, dtype=float)))


def success(rte_value: Optional[float], threshold: float = SUCCESS_RTE_M, status: str = "ok") -> bool:
    if status != "ok" or rte_value is None:
        return False
    return rte_value < threshold


def count_covisible(record: FramePairRecord, iou_threshold: float = 0.1) -> int:
    if record.gt_extrinsic is None:
        raise MissingGroundTruth(f"frame {record.frame_id!r} has no ground-truth extrinsic")
    moved = [apply_transform(record.gt_extrinsic, b) for b in record.scene_inf.boxes]
    count = 0
    for a in moved:
        for b in record.scene_veh.boxes:
            if iou_3d(a, b) > iou_threshold:
                count += 1
    return count


def classify_difficulty(record: FramePairRecord, rule: DifficultyRule = DifficultyRule()) -> str:
    """``easy`` when enough objects are co-visible and the baseline is short."""
    covisible = count_covisible(record, rule.covisible_iou)
    dist = float(np.linalg.norm(record.gt_extrinsic.translation))
    if covisible >= rule.min_common and dist <= rule.max_translation_m:
        return "easy"
    return "hard"


@dataclass
class FrameRow:
    frame_id: str
    rre_deg: Optional[float]
    rte_m: Optional[float]
    success: bool
    time_ms: Optional[float]
    status: str
    difficulty: str

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "rre_deg": self.rre_deg,
            "rte_m": self.rte_m,
            "success": self.success,
            "time_ms": self.time_ms,
            "status": self.status,
            "difficulty": self.difficulty,
        }


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(sum(xs) / len(xs)) if xs else None


def aggregate(rows: Sequence[FrameRow]) -> dict:
    """Per-group summary; errors average only over frames that produced an estimate."""
    groups = {"all": list(rows)}
    for row in rows:
        groups.setdefault(row.difficulty, []).append(row)
    out = {}
    for name in sorted(groups):
        g = groups[name]
        ok = [r for r in g if r.status == "ok"]
        out[name] = {
            "n_frames": len(g),
            "n_ok": len(ok),
            "mean_rre_deg": _mean([r.rre_deg for r in ok]),
            "mean_rte_m": _mean([r.rte_m for r in ok]),
            "success_rate_pct": 100.0 * sum(r.success for r in g) / len(g),
            "mean_time_ms": _mean([r.time_ms for r in g]),
        }
    return out


@dataclass
class BenchmarkReport:
    rows: list
    aggregates: dict = field(default_factory=dict)
    strategy: Optional[dict] = None
    success_threshold_m: float = SUCCESS_RTE_M

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.rows)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "success_threshold_m": self.success_threshold_m,
            "rows": [r.to_dict() for r in self.rows],
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkReport":
        rows = [FrameRow(**r) for r in data["rows"]]
        return cls(rows, data.get("aggregates") or {}, data.get("strategy"),
                   data.get("success_threshold_m", SUCCESS_RTE_M))

    def without_timing(self) -> "BenchmarkReport":
        rows = [FrameRow(**{**r.to_dict(), "time_ms": None}) for r in self.rows]
        return BenchmarkReport(rows, {}, self.strategy, self.success_threshold_m)


def evaluate_record(
    record: FramePairRecord, config: StrategyConfig, threshold: float = SUCCESS_RTE_M
) -> FrameRow:
    if record.gt_extrinsic is None:
        raise MissingGroundTruth(f"frame {record.frame_id!r} has no ground-truth extrinsic")
    difficulty = record.difficulty
    if difficulty == "unknown":
        difficulty = classify_difficulty(record)
    start = time.perf_counter()
    try:
        result = calibrate(record.scene_inf, record.scene_veh, config)
        status = result.status
    except EmptyScene:
        status, result = "no_common_targets", None
    elapsed = (time.perf_counter() - start) * 1e3
    if status != "ok":
        log.info("frame %s failed: %s", record.frame_id, status)
        return FrameRow(record.frame_id, None, None, False, elapsed, status, difficulty)
    e_rot = rre(record.gt_extrinsic.rotation, result.extrinsic.rotation)
    e_trans = rte(record.gt_extrinsic.translation, result.extrinsic.translation)
    return FrameRow(
        record.frame_id, e_rot, e_trans, success(e_trans, threshold), elapsed, status, difficulty
    )


def run_benchmark(
    dataset: Sequence[FramePairRecord],
    config: StrategyConfig,
    jobs: int = 1,
    threshold: float = SUCCESS_RTE_M,
) -> BenchmarkReport:
    """Calibrate every record and summarize per difficulty group.

    Rows keep dataset order whatever ``jobs`` is.
    """
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no frame pairs")
    missing = [r.frame_id for r in dataset if r.gt_extrinsic is None]
    if missing:
        raise MissingGroundTruth(f"frames without ground truth: {missing[:5]}")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda r: evaluate_record(r, config, threshold), dataset))
    else:
        rows = [evaluate_record(r, config, threshold) for r in dataset]
    return BenchmarkReport(rows, {}, config.to_dict(), threshold)
