"""Extrinsic estimation from matched box pairs.

The 8 vertices of each matched box form one group of an abstract point
cloud. Which vertex of the infrastructure box corresponds to which vertex of
the vehicle box is not known a priori: a yaw-only box is symmetric under a
heading flip (and under quarter turns if its footprint is square). The
resolver picks one scene-wide rotation hypothesis, derives the per-box vertex
permutation from it and keeps the hypothesis with the smallest fit residual.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .affinity import Scene, is_square
from .config import RefinementParams
from .errors import DegenerateGeometry, NoMatches
from .geometry import RigidTransform, box_vertices, rot_z, wrap_angle
from .matching import MatchSet


def _quarter_turn_perms() -> np.ndarray:
    signs = kernels.CORNER_SIGNS
    perms = np.empty((4, 8), dtype=np.int64)
    for q in range(4):
        turned = signs @ rot_z(-q * np.pi / 2).T
        for k in range(8):
            perms[q, k] = int(np.argmin(np.abs(signs - np.round(turned[k])).sum(axis=1)))
    return perms


# QUARTER_PERMS[q][k] is the vehicle-box vertex matching infrastructure-box
# vertex k when the vehicle box's yaw leads the transformed infrastructure
# box's yaw by q quarter turns.
QUARTER_PERMS = _quarter_turn_perms()


def svd_fit(p_src, p_dst, weights=None) -> RigidTransform:
    """Least-squares rigid transform taking ``p_src`` onto ``p_dst``.

    Minimizes ``sum_k w_k ||R p_src[k] + t - p_dst[k]||^2`` with the
    reflection fix ``det(R) = +1``.
    """
    src = np.asarray(p_src, dtype=float)
    dst = np.asarray(p_dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError(f"point sets must be matching (N, 3) arrays, got {src.shape} and {dst.shape}")
    if src.shape[0] < 3:
        raise DegenerateGeometry("need at least 3 corresponded points")
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(src),) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum, one per point")
    w = w / w.sum()

    mu_s = w @ src
    mu_d = w @ dst
    xs = src - mu_s
    xd = dst - mu_d
    sv = np.linalg.svd(xs * np.sqrt(w)[:, None], compute_uv=False)
    if sv[0] < 1e-12 or sv[1] < 1e-9 * sv[0]:
        raise DegenerateGeometry("source points are collinear or coincident")

    h = (xs * w[:, None]).T @ xd
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, mu_d - rot @ mu_s)


def rms_residual(t: RigidTransform, p_src, p_dst) -> float:
    diff = t.apply(p_src) - np.asarray(p_dst, dtype=float)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def _admissible_turns(b_inf, b_veh) -> tuple:
    return (0, 1, 2, 3) if (is_square(b_inf) or is_square(b_veh)) else (0, 2)


def _turns_for(yaw_gap: float, turns) -> int:
    # Nearest admissible quarter-turn count to an angular gap.
    best, best_err = turns[0], np.inf
    for q in turns:
        err = abs(wrap_angle(yaw_gap - q * np.pi / 2))
        if err < best_err - 1e-12:
            best, best_err = q, err
    return best


def _clouds(matches: MatchSet, scene_inf: Scene, scene_veh: Scene, turns_per_pair):
    p_inf, p_veh = [], []
    for match, q in zip(matches, turns_per_pair):
        p_inf.append(box_vertices(scene_inf.boxes[match.infra_index]))
        veh = box_vertices(scene_veh.boxes[match.vehicle_index])
        p_veh.append(veh[QUARTER_PERMS[q]])
    return np.concatenate(p_inf), np.concatenate(p_veh)


def point_weights(matches: MatchSet, scene_inf: Scene, scene_veh: Scene) -> np.ndarray:
    w = [
        scene_inf.boxes[mt.infra_index].confidence * scene_veh.boxes[mt.vehicle_index].confidence
        for mt in matches
    ]
    return np.repeat(np.asarray(w, dtype=float), 8)


def resolve_correspondence(
    matches: MatchSet, scene_inf: Scene, scene_veh: Scene, weights=None, return_fit=False
):
    """Order the vehicle vertices of every matched box to correspond index-wise.

    Candidates are the naive canonical ordering plus one ordering per
    scene-wide rotation hypothesis (each matched pair's yaw gap under each
    admissible turn). Returns ``(P_inf, P_veh)``, or ``(P_inf, P_veh, fit,
    residual)`` with ``return_fit``.
    """
    if len(matches) == 0:
        raise NoMatches("cannot resolve correspondence without matches")
    pairs = [(scene_inf.boxes[mt.infra_index], scene_veh.boxes[mt.vehicle_index]) for mt in matches]
    turns = [_admissible_turns(bi, bv) for bi, bv in pairs]

    candidates = [tuple(0 for _ in pairs)]
    seen_phi = []
    for (bi, bv), adm in zip(pairs, turns):
        for q in adm:
            phi = wrap_angle(bv.yaw - bi.yaw - q * np.pi / 2)
            if any(abs(wrap_angle(phi - s)) < 1e-9 for s in seen_phi):
                continue
            seen_phi.append(phi)
            choice = tuple(
                _turns_for(b2.yaw - b1.yaw - phi, adm2) for (b1, b2), adm2 in zip(pairs, turns)
            )
            if choice not in candidates:
                candidates.append(choice)

    best = None
    for choice in candidates:
        p_inf, p_veh = _clouds(matches, scene_inf, scene_veh, choice)
        fit = svd_fit(p_inf, p_veh, weights)
        res = rms_residual(fit, p_inf, p_veh)
        if best is None or res < best[3] - 1e-12:
            best = (p_inf, p_veh, fit, res)
    if return_fit:
        return best
    return best[0], best[1]


def _group_targets(moved: np.ndarray, p_veh: np.ndarray, mode: str = "nearest") -> np.ndarray:
    # Correspondence search never leaves a box's own 8-vertex group.
    g = len(moved) // 8
    a = moved.reshape(g, 8, 1, 3)
    b = p_veh.reshape(g, 1, 8, 3)
    d2 = np.sum((a - b) ** 2, axis=-1)
    if mode == "assignment":
        idx = np.empty((g, 8), dtype=np.int64)
        for k in range(g):
            _, cols = linear_sum_assignment(d2[k])
            idx[k] = cols
    else:
        idx = np.argmin(d2, axis=2)
    groups = p_veh.reshape(g, 8, 3)
    return groups[np.arange(g)[:, None], idx].reshape(-1, 3)


def refine(
    t0: RigidTransform,
    p_inf,
    p_veh,
    params: Optional[RefinementParams] = None,
    weights=None,
    trace: Optional[list] = None,
) -> RigidTransform:
    """Point-to-point ICP with vertex search confined to each box group.

    ``params.correspondence`` selects plain nearest-vertex search or a
    one-to-one assignment inside each group. The RMS residual against those
    targets never increases; an iteration that would
    raise it is discarded. Pass a list as ``trace`` to collect the residual
    after each accepted iteration (the first entry is the initial residual).
    """
    params = params or RefinementParams()
    p_inf = np.asarray(p_inf, dtype=float)
    p_veh = np.asarray(p_veh, dtype=float)
    if len(p_inf) == 0 or len(p_inf) != len(p_veh) or len(p_inf) % 8:
        raise ValueError("clouds must be non-empty, equal length and grouped by 8")

    t = t0
    target = _group_targets(t.apply(p_inf), p_veh, params.correspondence)
    res = rms_residual(t, p_inf, target)
    if trace is not None:
        trace.append(res)
    for _ in range(params.max_iterations):
        try:
            t_new = svd_fit(p_inf, target, weights)
        except DegenerateGeometry:
            break
        target_new = _group_targets(t_new.apply(p_inf), p_veh, params.correspondence)
        res_new = rms_residual(t_new, p_inf, target_new)
        if res_new > res:
            break
        t, target = t_new, target_new
        done = res - res_new < params.convergence_tol
        res = res_new
        if trace is not None:
            trace.append(res)
        if done:
            break
    return t


def estimate_extrinsic(
    matches: MatchSet,
    scene_inf: Scene,
    scene_veh: Scene,
    params: Optional[RefinementParams] = None,
    do_refine: bool = True,
    use_confidence_weighting: bool = False,
) -> RigidTransform:
    """Resolve vertex correspondence, fit in closed form, then optionally refine."""
    if matches is None or len(matches) == 0:
        raise NoMatches("no matched box pairs")
    weights = point_weights(matches, scene_inf, scene_veh) if use_confidence_weighting else None
    p_inf, p_veh, fit, _ = resolve_correspondence(
        matches, scene_inf, scene_veh, weights, return_fit=True
    )
    if not do_refine:
        return fit
    return refine(fit, p_inf, p_veh, params, weights)
