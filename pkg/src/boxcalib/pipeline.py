"""End-to-end calibration: affinity, assignment, filtering, fit, scoring."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .affinity import Scene, build_affinity, overall_iou_under
from .config import PRESETS, StrategyConfig
from .errors import DegenerateGeometry, InsufficientBoxes, InvalidStatus, NoMatches
from .extrinsics import point_weights, refine, resolve_correspondence
from .geometry import RigidTransform
from .matching import MatchSet, expand_matches, filter_matches, solve_assignment

STATUSES = ("ok", "no_common_targets", "degenerate")
STAGES = ("affinity", "matching", "solve", "refine")


@dataclass
class CalibrationResult:
    extrinsic: Optional[RigidTransform]
    matches: MatchSet
    scene_oiou: float
    stage_timings: dict
    strategy: StrategyConfig
    status: str = "ok"
    message: str = ""
    # Pairs behind the final fit: the gated matches plus any re-associated ones.
    support_pairs: list = field(default_factory=list)

    @property
    def total_ms(self) -> float:
        return float(sum(self.stage_timings.values()))

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "status": self.status,
            "extrinsic": None if self.extrinsic is None else self.extrinsic.matrix().tolist(),
            "scene_oiou": self.scene_oiou,
            "matches": [
                {"infra_index": p.infra_index, "vehicle_index": p.vehicle_index, "affinity": p.affinity}
                for p in self.matches
            ],
            "threshold_used": self.matches.threshold_used,
            "support_pairs": [list(p) for p in self.support_pairs],
            "strategy": self.strategy.to_dict(),
            "message": self.message,
        }
        if timings:
            out["stage_timings_ms"] = dict(self.stage_timings)
        return out


def calibrate(
    scene_inf: Scene, scene_veh: Scene, config: StrategyConfig = PRESETS["v1"]
) -> CalibrationResult:
    """Estimate the infrastructure-to-vehicle extrinsic from two detection sets.

    No prior extrinsic is used. Raises :class:`EmptyScene` when either side
    has no boxes; matching and geometry failures are reported via ``status``.
    """
    timings = {s: 0.0 for s in STAGES}
    clock = time.perf_counter

    def fail(status, matches, message):
        return CalibrationResult(None, matches, 0.0, timings, config, status, message)

    t0 = clock()
    try:
        affinity = build_affinity(scene_inf, scene_veh, config)
    except InsufficientBoxes as exc:
        timings["affinity"] = (clock() - t0) * 1e3
        return fail("degenerate", MatchSet([], config.oiou_gate), str(exc))
    t1 = clock()
    timings["affinity"] = (t1 - t0) * 1e3

    assignment = solve_assignment(affinity)
    try:
        matches = filter_matches(assignment, affinity, config.oiou_gate)
    except NoMatches as exc:
        timings["matching"] = (clock() - t1) * 1e3
        return fail("no_common_targets", MatchSet([], config.oiou_gate), str(exc))
    t2 = clock()
    timings["matching"] = (t2 - t1) * 1e3

    weights = None
    if config.use_confidence_weighting:
        weights = point_weights(matches, scene_inf, scene_veh)
    try:
        p_inf, p_veh, extrinsic, _ = resolve_correspondence(
            matches, scene_inf, scene_veh, weights, return_fit=True
        )
        t3 = clock()
        timings["solve"] = (t3 - t2) * 1e3
        support = matches
        if config.refine:
            params = config.refinement
            if params.reassociate_iou > 0:
                support = expand_matches(matches, extrinsic, scene_inf, scene_veh, params.reassociate_iou)
                if len(support) > len(matches):
                    if weights is not None:
                        weights = point_weights(support, scene_inf, scene_veh)
                    p_inf, p_veh, extrinsic, _ = resolve_correspondence(
                        support, scene_inf, scene_veh, weights, return_fit=True
                    )
            extrinsic = refine(extrinsic, p_inf, p_veh, params, weights)
            timings["refine"] = (clock() - t3) * 1e3
    except DegenerateGeometry as exc:
        return fail("degenerate", matches, str(exc))

    score = overall_iou_under(extrinsic, scene_inf, scene_veh)
    return CalibrationResult(
        extrinsic, matches, score, timings, config, "ok", support_pairs=support.index_pairs()
    )


def monitor_oiou(result: CalibrationResult, scene_inf: Scene, scene_veh: Scene) -> float:
    """Scene oIoU under the result's extrinsic; higher means better alignment."""
    if result.status != "ok" or result.extrinsic is None:
        raise InvalidStatus(f"calibration status is {result.status!r}, not 'ok'")
    return overall_iou_under(result.extrinsic, scene_inf, scene_veh)


def perturbed(t: RigidTransform, offset) -> RigidTransform:
    """``t`` with its translation shifted by ``offset`` (used for health checks)."""
    return RigidTransform(t.rotation, t.translation + np.asarray(offset, dtype=float))
