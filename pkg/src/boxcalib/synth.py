"""Seeded synthetic cooperative scene pairs with a known extrinsic.

Randomness comes from numpy's ``Generator`` with the PCG64 bit generator.
Pair ``k`` of a dataset generated with base seed ``s`` is drawn from
``SeedSequence([s, k])``, so any single pair can be regenerated on its own.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .affinity import Scene
from .errors import PlacementFailure, SchemaError
from .evaluation import FramePairRecord
from .geometry import Box3D, RigidTransform, transform_box3d, wrap_angle

PRNG_NAME = "numpy.random.Generator(PCG64), SeedSequence([seed, pair_index])"

# Nominal (length, width, height) per category; each object scales these by
# a uniform factor in [0.9, 1.1] per axis.
NOMINAL_SIZE = {
    "car": (4.5, 1.9, 1.6),
    "van": (5.0, 2.0, 2.1),
    "truck": (8.0, 2.5, 3.2),
    "bus": (11.0, 2.6, 3.2),
    "pedestrian": (0.6, 0.6, 1.75),
    "cyclist": (1.8, 0.6, 1.7),
    "other": (1.0, 1.0, 1.0),
}

DEFAULT_MIX = {"car": 0.6, "truck": 0.1, "pedestrian": 0.15, "cyclist": 0.15}


@dataclass(frozen=True)
class SynthParams:
    n_common: int = 6
    n_infra_only: int = 0
    n_vehicle_only: int = 0
    area: float = 60.0
    gt_transform: Optional[RigidTransform] = None  # None draws a random one
    yaw_range: tuple = (-np.pi, np.pi)
    translation_range: float = 100.0
    z_range: float = 1.0
    noise_center_sigma: float = 0.0
    noise_yaw_sigma: float = 0.0
    noise_size_sigma: float = 0.0
    category_mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    min_gap: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_common", "n_infra_only", "n_vehicle_only"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("noise_center_sigma", "noise_yaw_sigma", "noise_size_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.area <= 0 or self.translation_range < 0 or self.z_range < 0:
            raise ValueError("area must be > 0 and ranges >= 0")
        unknown = set(self.category_mix) - set(NOMINAL_SIZE)
        if unknown or not self.category_mix or min(self.category_mix.values()) < 0:
            raise ValueError(f"bad category_mix {self.category_mix}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["yaw_range"] = list(self.yaw_range)
        gt = self.gt_transform
        out["gt_transform"] = "random" if gt is None else gt.matrix().tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SynthParams":
        if not isinstance(data, dict):
            raise SchemaError("synthesis params must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown synthesis params: {sorted(unknown)}")
        kwargs = dict(data)
        gt = kwargs.get("gt_transform")
        if gt is None or gt == "random":
            kwargs["gt_transform"] = None
        else:
            kwargs["gt_transform"] = RigidTransform.from_matrix(gt)
        if "yaw_range" in kwargs:
            kwargs["yaw_range"] = tuple(kwargs["yaw_range"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc)) from exc


def random_yaw_transform(rng: np.random.Generator, params: SynthParams) -> RigidTransform:
    yaw = rng.uniform(*params.yaw_range)
    z = rng.uniform(-params.z_range, params.z_range) if params.z_range > 0 else 0.0
    planar_max = np.sqrt(max(params.translation_range**2 - z**2, 0.0))
    r = planar_max * np.sqrt(rng.uniform())
    phi = rng.uniform(-np.pi, np.pi)
    return RigidTransform.from_yaw(yaw, (r * np.cos(phi), r * np.sin(phi), z))


def _place(rng, count, params, max_tries=2000):
    cats = sorted(params.category_mix)
    weights = np.array([params.category_mix[c] for c in cats], dtype=float)
    weights /= weights.sum()
    half = params.area / 2.0
    boxes, radii = [], []
    for _ in range(count):
        cat = cats[rng.choice(len(cats), p=weights)]
        size = np.array(NOMINAL_SIZE[cat]) * rng.uniform(0.9, 1.1, size=3)
        radius = 0.5 * np.hypot(size[0], size[1])
        for _ in range(max_tries):
            xy = rng.uniform(-half, half, size=2)
            # BEV circumcircles apart guarantees zero 3D overlap
            if all(
                np.hypot(*(xy - b.center[:2])) >= radius + r + params.min_gap
                for b, r in zip(boxes, radii)
            ):
                break
        else:
            raise PlacementFailure(
                f"could not place {count} non-overlapping boxes in a {params.area} m square"
            )
        yaw = rng.uniform(-np.pi, np.pi)
        boxes.append(Box3D(cat, [xy[0], xy[1], size[2] / 2.0], size, yaw))
        radii.append(radius)
    return boxes


def _noisy(rng, box: Box3D, params: SynthParams) -> Box3D:
    center = box.center + rng.normal(0.0, params.noise_center_sigma, size=3)
    size = np.maximum(box.size + rng.normal(0.0, params.noise_size_sigma, size=3), 0.1)
    yaw = wrap_angle(box.yaw + rng.normal(0.0, params.noise_yaw_sigma))
    return Box3D(box.category, center, size, yaw, box.confidence, box.track_id)


def synth_scene_pair(params: SynthParams, index: int = 0) -> FramePairRecord:
    """One frame pair; a pure function of ``(params, index)``."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([params.seed, index])))
    gt = params.gt_transform if params.gt_transform is not None else random_yaw_transform(rng, params)
    total = params.n_common + params.n_infra_only + params.n_vehicle_only
    objects = _place(rng, total, params)
    common = objects[: params.n_common]
    infra_only = objects[params.n_common : params.n_common + params.n_infra_only]
    vehicle_only = objects[params.n_common + params.n_infra_only :]

    infra = common + infra_only
    vehicle = [_noisy(rng, transform_box3d(gt, b), params) for b in common]
    vehicle += [_noisy(rng, transform_box3d(gt, b), params) for b in vehicle_only]

    infra = [infra[k] for k in rng.permutation(len(infra))]
    vehicle = [vehicle[k] for k in rng.permutation(len(vehicle))]
    fid = f"{index:05d}"
    return FramePairRecord(Scene(infra, fid), Scene(vehicle, fid), gt, "unknown", fid)


def synth_dataset(params: SynthParams, n_pairs: int) -> list:
    return [synth_scene_pair(params, k) for k in range(n_pairs)]
