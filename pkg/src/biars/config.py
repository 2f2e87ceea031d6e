"""Run configuration: YAML schema, defaults and physical validation.

All values are SI except the receiver angles, which are given in degrees.
Unknown keys are rejected at every level.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .baselines import BaselineConfig, SchemeId
from .bia import MAX_SLOTS, block_dimensions
from .experiments import ExperimentError, ExperimentSpec
from .power_opt import OptimizerConfig
from .scenario import (EyeSafetyParams, NoiseModel, ReceiverParams, RoomConfig, ScenarioConfig,
                       ScenarioError, VcselParams, vcsel_power_limit)


class ConfigError(ValueError):
    """A configuration that fails schema or physics checks.

    ``problems`` lists ``(path, message)`` pairs.
    """

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class RoomSection(_Strict):
    width: float = Field(8.0, gt=0, description="m")
    depth: float = Field(8.0, gt=0, description="m")
    height: float = Field(3.0, gt=0, description="m")
    floor_height: float = Field(2.0, gt=0, description="m, ceiling to receiving plane")


class VcselSection(_Strict):
    beam_waist: float = Field(8e-6, gt=0, description="m")
    wavelength: float = Field(1550e-9, gt=0, description="m")
    refractive_index: float = Field(1.0, ge=1.0)
    power_per_vcsel: float = Field(60e-3, gt=0, description="W")
    array_side: int = Field(40, ge=1)
    fanout_span: float = Field(8.0, ge=0, description="m")


class ReceiverSection(_Strict):
    n_photodiodes: int = Field(16, ge=1)
    detector_area: float = Field(15e-6, gt=0, description="m^2, whole detector")
    filter_gain: float = Field(1.0, gt=0)
    fov_deg: float = Field(60.0, gt=0, le=90)
    responsivity: float = Field(0.9, gt=0, description="A/W")
    tilt_deg: float = Field(30.0, ge=0, lt=90)


class NoiseSection(_Strict):
    snr_target_mode: bool = True
    snr_db: float = 30.0
    rin_db_per_hz: float = -155.0
    bandwidth: float = Field(1.5e9, gt=0, description="Hz")
    thermal_floor: float = Field(0.0, ge=0, description="A^2")


class EyeSafetySection(_Strict):
    cornea_diameter: float = Field(7e-3, gt=0, description="m")
    hazard_distance: float = Field(0.1, gt=0, description="m")
    mpe: float = Field(1000.0, gt=0, description="W/m^2")


class ScenarioSection(_Strict):
    room: RoomSection = RoomSection()
    vcsel: VcselSection = VcselSection()
    ap_grid: Tuple[int, int] = (4, 4)
    receiver: ReceiverSection = ReceiverSection()
    noise: NoiseSection = NoiseSection()
    eye_safety: EyeSafetySection = EyeSafetySection()
    n_users: int = Field(20, ge=1)
    rho: float = Field(1.0, gt=0, description="electric-to-optical factor")

    @field_validator("ap_grid")
    @classmethod
    def _grid(cls, v):
        if min(v) < 1:
            raise ValueError("ap_grid entries must be >= 1")
        return v


class GroupingSection(_Strict):
    G: Optional[int] = Field(None, ge=1, description="upper bound on the group count")
    d_th: float = Field(2.0, gt=0, description="m")
    seed: int = 0


class OptimizerSection(_Strict):
    eps_beta: float = Field(0.5, gt=0)
    eps_nu: float = Field(0.5, gt=0)
    eps_lam: float = Field(0.1, gt=0)
    eps_xi: float = Field(0.1, gt=0)
    eps_budget: float = Field(0.7, gt=0)
    max_outer: int = Field(25, ge=1)
    inner_iters: int = Field(4, ge=1)
    f_tol: float = Field(1e-6, gt=0)
    multiplier_tol: float = Field(1e-6, gt=0)
    power_tol: float = Field(1e-9, gt=0)
    init_multiplier: float = Field(0.1, ge=0)
    common_fraction: float = Field(0.5, ge=0, le=1)
    price_consumed_power: bool = False
    line_points: int = Field(17, ge=3)
    line_rounds: int = Field(7, ge=1)
    patience: int = Field(4, ge=1)


class BaselineSection(_Strict):
    common_fraction: float = Field(0.5, ge=0, le=1)
    edge_margin_db: float = Field(3.0, ge=0)
    noma_strong_share: float = Field(0.3, gt=0, lt=0.5)
    split_grid: int = Field(21, ge=2)


class ExperimentSection(_Strict):
    name: str
    kind: str = "rate"
    axis: str
    values: List[float]
    schemes: List[str] = [s.value for s in SchemeId]
    drops: int = Field(100, ge=1)
    seed: int = 0
    snr_db: float = 30.0
    n_users: Optional[int] = None
    blockage_p: float = Field(0.0, ge=0, le=1)
    pam_order: int = 2
    overhead_per_ap: float = Field(0.0, ge=0, description="W")
    min_errors: int = Field(100, ge=1)
    max_symbols: int = Field(2_000_000, ge=1)
    min_group_rate: float = Field(0.0, ge=0, description="bits/s/Hz per group")


def default_experiments() -> List[ExperimentSection]:
    """The five standard sweeps; the user sweep carries both the sum
    rate and the energy efficiency."""
    bia_rs = ["bia-rs-opt", "bia-rs-subopt"]
    return [
        ExperimentSection(name="convergence", kind="trace", axis="iterations",
                          values=list(range(26)), schemes=bia_rs, drops=20),
        ExperimentSection(name="snr", axis="snr_db", values=[0, 5, 10, 15, 20, 25, 30]),
        ExperimentSection(name="users", axis="users", values=[10, 20, 30, 35, 40],
                          overhead_per_ap=1.0),
        ExperimentSection(name="blockage", axis="blockage_p", values=[0, 0.2, 0.4, 0.6]),
        ExperimentSection(name="ber", kind="ber", axis="snr_db", values=[4, 6, 8, 10, 12, 14],
                          schemes=["bia-rs-opt", "rs", "bia"], drops=10),
    ]


class RunConfig(_Strict):
    scenario: ScenarioSection = ScenarioSection()
    grouping: GroupingSection = GroupingSection()
    optimizer: OptimizerSection = OptimizerSection()
    baselines: BaselineSection = BaselineSection()
    experiments: List[ExperimentSection] = Field(default_factory=default_experiments)
    output_dir: Optional[str] = None

    # -- conversions ------------------------------------------------------

    def scenario_config(self) -> ScenarioConfig:
        s = self.scenario
        r = s.receiver
        return ScenarioConfig(
            room=RoomConfig(**s.room.model_dump()),
            vcsel=VcselParams(**s.vcsel.model_dump()),
            ap_grid=tuple(s.ap_grid),
            receiver=ReceiverParams(r.n_photodiodes, r.detector_area, r.filter_gain,
                                    math.radians(r.fov_deg), r.responsivity,
                                    math.radians(r.tilt_deg)),
            noise=NoiseModel(**s.noise.model_dump()),
            eye_safety=EyeSafetyParams(**s.eye_safety.model_dump()),
            n_users=s.n_users, rho=s.rho)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(**self.optimizer.model_dump())

    def baseline_config(self) -> BaselineConfig:
        return BaselineConfig(**self.baselines.model_dump())

    def experiment_specs(self) -> List[ExperimentSpec]:
        out = []
        for e in self.experiments:
            kw = e.model_dump()
            if kw["n_users"] is None:
                kw["n_users"] = self.scenario.n_users
            out.append(ExperimentSpec(d_th=self.grouping.d_th, G_max=self.grouping.G,
                                      group_seed=self.grouping.seed, **kw))
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; equal configs hash equally."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Loading and overrides
# ---------------------------------------------------------------------------

def _set_path(doc: Dict[str, Any], path: str, value: Any) -> None:
    """Assign ``value`` at a dotted ``path``; list items are addressed by
    index or, for experiments, by name."""
    keys = path.split(".")
    node: Any = doc
    for i, key in enumerate(keys[:-1]):
        if isinstance(node, list):
            node = _list_item(node, key, ".".join(keys[:i + 1]))
            continue
        if key not in node or node[key] is None:
            node[key] = {}
        node = node[key]
    last = keys[-1]
    if isinstance(node, list):
        raise ConfigError([(path, "cannot replace a whole list item")])
    node[last] = value


def _list_item(items: list, key: str, where: str):
    if key.isdigit() and int(key) < len(items):
        return items[int(key)]
    for item in items:
        if isinstance(item, dict) and item.get("name") == key:
            return item
    raise ConfigError([(where, f"no list item {key!r}")])


def parse_override(text: str) -> Tuple[str, Any]:
    """Split ``a.b=value``; the value is parsed as YAML (so ``[10,20]`` is a list)."""
    if "=" not in text:
        raise ConfigError([(text, "override must look like key=value")])
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def load_config(path: Optional[str] = None, overrides: Sequence = (),
                doc: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Read a YAML file (or start from ``doc`` or the defaults) and apply
    ``key=value`` overrides, which take precedence over the file."""
    doc = copy.deepcopy(doc) if doc is not None else {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError([("<root>", "config must be a mapping")])
        doc = loaded or {}
    if overrides:
        if "experiments" not in doc:
            doc["experiments"] = [e.model_dump() for e in default_experiments()]
        for ov in overrides:
            key, value = parse_override(ov) if isinstance(ov, str) else ov
            if key.startswith("experiment."):
                key = "experiments." + key[len("experiment."):]
            _set_path(doc, key, value)
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError([(_loc(e), e["msg"]) for e in exc.errors()]) from None


# ---------------------------------------------------------------------------
# Physics checks
# ---------------------------------------------------------------------------

def physics_problems(cfg: RunConfig) -> List[Tuple[str, str]]:
    """Violations of eye safety, receiver-mode count and block size."""
    problems: List[Tuple[str, str]] = []
    try:
        sc = cfg.scenario_config()
    except ScenarioError as exc:
        return [("scenario", str(exc))]
    limit = vcsel_power_limit(sc)
    if sc.vcsel.power_per_vcsel > limit:
        problems.append(("scenario.vcsel.power_per_vcsel",
                         f"eye safety: {sc.vcsel.power_per_vcsel:.4g} W exceeds the "
                         f"permissible {limit:.4g} W per VCSEL"))
    L, M = sc.n_aps, sc.receiver.n_photodiodes
    if M < L:
        problems.append(("scenario.receiver.n_photodiodes",
                         f"need at least one receiver mode per AP (M={M} < L={L})"))
    if L < 2:
        problems.append(("scenario.ap_grid", "alignment needs at least two APs"))
    elif cfg.grouping.G is not None:
        n_slots = block_dimensions(L, cfg.grouping.G)[0]
        if n_slots > MAX_SLOTS:
            problems.append(("grouping.G", f"supersymbol of {n_slots} slots exceeds the "
                                           f"cap of {MAX_SLOTS}"))
    for i, e in enumerate(cfg.experiments):
        try:
            ExperimentSpec(**{**e.model_dump(), "n_users": e.n_users or sc.n_users})
        except (ExperimentError, ValueError) as exc:
            problems.append((f"experiments.{i}", str(exc)))
    return problems


def validate_config(cfg: RunConfig) -> None:
    problems = physics_problems(cfg)
    if problems:
        raise ConfigError(problems)
