"""Strategy configuration and the named presets v1/v2/v3."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, SchemaError

AFFINITY_KINDS = (
    "core_category",
    "core_only",
    "angle_category",
    "length_category",
    "length_angle_category",
)


@dataclass(frozen=True)
class RefinementParams:
    max_iterations: int = 30
    convergence_tol: float = 1e-4
    correspondence: str = "nearest"  # or "assignment": one-to-one within each box
    reassociate_iou: float = 0.1  # 0 disables re-association before refinement

    def __post_init__(self):
        if self.correspondence not in ("nearest", "assignment"):
            raise ValueError("correspondence must be 'nearest' or 'assignment'")
        if self.reassociate_iou < 0:
            raise ValueError("reassociate_iou must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")


@dataclass(frozen=True)
class StrategyConfig:
    affinity_kind: str = "core_category"
    use_confidence_weighting: bool = False
    oiou_gate: float = 0.25
    edge_fusion_weight: float = 0.0
    refine: bool = True
    sigma_len: float = 2.0
    sigma_ang: float = 0.2
    refinement: RefinementParams = field(default_factory=RefinementParams)
    name: str = "custom"

    def __post_init__(self):
        if self.affinity_kind not in AFFINITY_KINDS:
            raise ValueError(
                f"unknown affinity_kind {self.affinity_kind!r}; expected one of {AFFINITY_KINDS}"
            )
        if self.oiou_gate < 0:
            raise ValueError("oiou_gate must be >= 0")
        if not 0.0 <= self.edge_fusion_weight <= 1.0:
            raise ValueError("edge_fusion_weight must lie in [0, 1]")
        if self.sigma_len <= 0 or self.sigma_ang <= 0:
            raise ValueError("sigma_len and sigma_ang must be > 0")

    @property
    def uses_core(self) -> bool:
        return self.affinity_kind in ("core_category", "core_only")

    @property
    def uses_category(self) -> bool:
        return self.affinity_kind != "core_only"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyConfig":
        if not isinstance(data, dict):
            raise SchemaError("strategy config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown strategy fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "refinement" in kwargs:
            ref = kwargs["refinement"]
            if not isinstance(ref, dict):
                raise SchemaError("refinement must be an object")
            try:
                kwargs["refinement"] = RefinementParams(**ref)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad refinement params: {exc}") from exc
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc)) from exc


PRESETS = {
    "v1": StrategyConfig(affinity_kind="core_category", refine=True, name="v1"),
    "v2": StrategyConfig(affinity_kind="core_category", refine=False, name="v2"),
    "v3": StrategyConfig(
        affinity_kind="length_angle_category",
        edge_fusion_weight=1.0,
        oiou_gate=0.05,
        refine=True,
        name="v3",
    ),
}


def resolve_strategy(name_or_path: str) -> StrategyConfig:
    """Return a preset by name, or load a JSON strategy file."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    path = Path(name_or_path)
    if not path.suffix and not path.exists():
        raise ValueError(
            f"unknown strategy preset {name_or_path!r}; choose from {sorted(PRESETS)} "
            "or pass a path to a strategy JSON file"
        )
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return StrategyConfig.from_dict(data)
