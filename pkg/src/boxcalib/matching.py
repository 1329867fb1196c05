"""One-to-one assignment over an affinity matrix and confidence filtering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoMatches
from .geometry import RigidTransform, apply_transform, iou_3d


@dataclass
class Match:
    infra_index: int
    vehicle_index: int
    affinity: float
    hypothesis: Optional[RigidTransform] = None


@dataclass
class MatchSet:
    pairs: list = field(default_factory=list)
    threshold_used: float = 0.0

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def index_pairs(self) -> list[tuple[int, int]]:
        return [(p.infra_index, p.vehicle_index) for p in self.pairs]


def _best_weight(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(values, maximize=True)
    return float(values[rows, cols].sum())


def solve_assignment(values) -> list[tuple[int, int]]:
    """Maximum-weight one-to-one assignment of size ``min(m, n)``.

    Among equal-weight optima the lexicographically smallest column choice
    (row by row) is returned, so ties resolve the same way on every run.
    """
    a = np.asarray(getattr(values, "values", values), dtype=float)
    if a.ndim != 2:
        raise ValueError("affinity matrix must be 2-D")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("affinity matrix must be finite and non-negative")
    m, n = a.shape
    if m == 0 or n == 0:
        return []
    if m > n:
        return sorted((i, j) for j, i in solve_assignment(a.T))

    best = _best_weight(a)
    tol = 1e-12 * max(1.0, abs(best))

    # Canonicalize: row by row, take the smallest column that still admits
    # an optimal completion.
    pairs = []
    free_cols = list(range(n))
    acc = 0.0
    for i in range(m):
        rest = a[i + 1 :]
        for j in free_cols:
            remaining = [c for c in free_cols if c != j]
            tail = _best_weight(rest[:, remaining]) if rest.shape[0] else 0.0
            if acc + a[i, j] + tail >= best - tol:
                pairs.append((i, j))
                acc += a[i, j]
                free_cols = remaining
                break
        else:  # rounding defeated the tolerance; use the solver's own optimum
            rows, cols = linear_sum_assignment(a, maximize=True)
            return list(zip(rows.tolist(), cols.tolist()))
    return pairs


def assignment_weight(values, pairs) -> float:
    a = np.asarray(getattr(values, "values", values), dtype=float)
    return float(sum(a[i, j] for i, j in pairs))


def filter_matches(assignment, affinity, threshold: float) -> MatchSet:
    """Keep assigned pairs whose affinity reaches ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    values = np.asarray(getattr(affinity, "values", affinity), dtype=float)
    hyp_of = getattr(affinity, "hypothesis_at", None)
    kept = []
    for i, j in assignment:
        v = float(values[i, j])
        if v >= threshold and v > 0:
            hyp = hyp_of(i, j) if hyp_of is not None else None
            kept.append(Match(i, j, v, hyp))
    if not kept:
        raise NoMatches(f"no assigned pair reaches affinity {threshold}")
    return MatchSet(kept, threshold)


def expand_matches(matches: MatchSet, transform, scene_inf, scene_veh, min_iou: float = 0.1) -> MatchSet:
    """Add box pairs that line up under ``transform`` but missed the affinity gate.

    An unmatched infrastructure box joins when, after mapping into the vehicle
    frame, it and a same-category unmatched vehicle box are each other's best
    IoU partner with IoU above ``min_iou``. The added pairs carry their IoU as
    affinity, so the result may hold values below ``threshold_used``.
    """
    m, n = len(scene_inf.boxes), len(scene_veh.boxes)
    used_i = {p.infra_index for p in matches}
    used_j = {p.vehicle_index for p in matches}
    free_i = [i for i in range(m) if i not in used_i]
    free_j = [j for j in range(n) if j not in used_j]
    if not free_i or not free_j:
        return MatchSet(list(matches.pairs), matches.threshold_used)

    ious = np.zeros((m, n))
    for i in free_i:
        moved = apply_transform(transform, scene_inf.boxes[i])
        for j in free_j:
            if scene_inf.boxes[i].category == scene_veh.boxes[j].category:
                ious[i, j] = iou_3d(moved, scene_veh.boxes[j])
    pairs = list(matches.pairs)
    for i in free_i:
        j = int(np.argmax(ious[i]))
        if ious[i, j] > min_iou and int(np.argmax(ious[:, j])) == i:
            pairs.append(Match(i, j, float(ious[i, j]), None))
    return MatchSet(pairs, matches.threshold_used)
