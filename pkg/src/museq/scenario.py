"""Scenario configuration: the simulator's complete input, plus YAML I/O.

A scenario bundles the operating grid, the ground-truth behavior models the
simulated crowd draws from, capacity and policy knobs, and the seed. The
ground-truth duration distributions are discretized bell curves per slot
class whose location parameter is solved numerically so each class hits its
configured mean exactly; near closing time the remaining mass collapses
into the last feasible duration bin (visitors still inside at close are
flushed).
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .durations import DurationMatrix
from .errors import ConfigError, ParseError
from .kiosk import KioskFleet
from .noshow import NoShowModel
from .timegrid import (
    CLASS_LABELS,
    DayContext,
    SlotClass,
    SlotGrid,
    class_index_map,
    default_classes,
    validate_partition,
)

RELEASE_POLICIES = ("all_at_open", "spread_over_day")
PLANNING_SOURCES = ("truthful", "refit")

#: Nominal per-row sample count attached to ground-truth matrices.
_TRUTH_COUNT = 1_000_000


@dataclass(frozen=True)
class PolicyConfig:
    """Ticket-release and overbooking policy for one day."""

    overbooking: bool = True
    safety_margin: float = 0.05
    release: str = "all_at_open"
    lead_slots: int = 12

    def __post_init__(self):
        if self.release not in RELEASE_POLICIES:
            raise ConfigError(
                f"must be one of {RELEASE_POLICIES}", field="policy.release"
            )
        if self.safety_margin < 0:
            raise ConfigError("must be nonnegative", field="policy.safety_margin")
        if self.lead_slots < 1:
            raise ConfigError("must be >= 1", field="policy.lead_slots")


@dataclass(frozen=True)
class DriftInjection:
    """Mid-day ground-truth change: dwell times scale from a slot onward."""

    start_slot: int
    duration_factor: float

    def __post_init__(self):
        if self.duration_factor <= 0:
            raise ConfigError("must be positive", field="drift.duration_factor")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one simulated day needs; immutable and serializable."""

    grid: SlotGrid
    classes: tuple[SlotClass, ...]
    context: DayContext
    arrival_rate: tuple[float, ...]  # expected persons per slot
    class_mean_minutes: dict
    noshow_rates: tuple[float, ...]
    occupancy_cap: float
    entry_cap: float = 268.0
    issue_limit: int = 400
    issue_limit_profile: dict | None = None  # per-class release caps
    group_fraction: float = 0.05
    group_size_range: tuple[int, int] = (6, 15)
    class_sd_slots: float = 2.2
    d_max: int = 16
    deterministic_durations: bool = False
    noshow_bucket_edges: tuple[int, ...] = (5, 13, 25)
    noshow_class_offsets: dict = field(default_factory=dict)
    fleet: KioskFleet = KioskFleet(7, 15.0)
    policy: PolicyConfig = PolicyConfig()
    planning: str = "truthful"
    min_row_samples: int = 30
    drift: DriftInjection | None = None
    seed: int = 0

    def __post_init__(self):
        n = self.grid.num_slots
        validate_partition(self.classes, n)
        if len(self.arrival_rate) != n:
            raise ConfigError(
                f"needs {n} entries, got {len(self.arrival_rate)}",
                field="arrivals.per_slot_persons",
            )
        if any(r < 0 for r in self.arrival_rate):
            raise ConfigError("must be nonnegative", field="arrivals.per_slot_persons")
        if not 0.0 <= self.group_fraction <= 1.0:
            raise ConfigError("must lie in [0, 1]", field="groups.fraction")
        lo, hi = self.group_size_range
        if lo < 6 or hi < lo:
            raise ConfigError(
                "group sizes are parties of more than five persons",
                field="groups.min_size",
            )
        for label in {c.label for c in self.classes}:
            if label not in self.class_mean_minutes:
                raise ConfigError(
                    f"missing mean for class {label!r}",
                    field="durations.class_mean_minutes",
                )
        if len(self.noshow_rates) != len(self.noshow_bucket_edges) + 1:
            raise ConfigError(
                "one rate per gap bucket required", field="noshow.rates"
            )
        if any(not 0.0 <= r <= 1.0 for r in self.noshow_rates):
            raise ConfigError("rates must lie in [0, 1]", field="noshow.rates")
        if self.occupancy_cap < 0:
            raise ConfigError("must be nonnegative", field="capacity.occupancy_cap")
        if self.entry_cap < 0:
            raise ConfigError("must be nonnegative", field="capacity.entry_cap")
        if self.issue_limit < 0:
            raise ConfigError("must be nonnegative", field="capacity.issue_limit")
        if self.issue_limit_profile is not None:
            labels = {c.label for c in self.classes}
            for key, val in self.issue_limit_profile.items():
                if key not in labels:
                    raise ConfigError(
                        f"unknown class {key!r}", field="capacity.issue_limit_profile"
                    )
                if val < 0:
                    raise ConfigError(
                        "must be nonnegative", field=f"capacity.issue_limit_profile.{key}"
                    )
        if self.d_max < 1:
            raise ConfigError("must be >= 1", field="durations.d_max")
        if self.planning not in PLANNING_SOURCES:
            raise ConfigError(
                f"must be one of {PLANNING_SOURCES}", field="planning.source"
            )
        if self.drift is not None and not 0 <= self.drift.start_slot < n:
            raise ConfigError("must be a slot index", field="drift.start_slot")

    def issue_limits_vector(self) -> np.ndarray:
        """Per-slot release caps: the class profile where given, else flat."""
        n = self.grid.num_slots
        if self.issue_limit_profile is None:
            return np.full(n, float(self.issue_limit))
        idx = class_index_map(self.classes, n)
        out = np.empty(n)
        for s in range(n):
            label = self.classes[idx[s]].label
            out[s] = float(self.issue_limit_profile.get(label, self.issue_limit))
        return out

    # -- ground-truth model construction ------------------------------------

    def class_mean_slots(self) -> dict:
        return {
            label: minutes / self.grid.slot_length_minutes
            for label, minutes in self.class_mean_minutes.items()
        }

    def ground_truth_matrix(self, duration_factor: float = 1.0) -> DurationMatrix:
        """Per-slot dwell distributions, truncated at closing time.

        ``duration_factor`` scales the class means (used by drift injection).
        """
        n = self.grid.num_slots
        cls_idx = class_index_map(self.classes, n)
        base_rows = {}
        for i, cls in enumerate(self.classes):
            mean = self.class_mean_slots()[cls.label] * duration_factor
            base_rows[i] = _discretized_bell(
                mean, self.class_sd_slots, self.d_max, self.deterministic_durations
            )
        probs = np.zeros((n, self.d_max))
        for s in range(n):
            row = base_rows[cls_idx[s]].copy()
            remaining = n - s
            if remaining < self.d_max:
                row[remaining - 1] += row[remaining:].sum()
                row[remaining:] = 0.0
            probs[s] = row
        counts = np.full(n, _TRUTH_COUNT, dtype=np.int64)
        return DurationMatrix(probs, counts)

    def ground_truth_noshow(self) -> NoShowModel:
        model = NoShowModel(
            bucket_edges=tuple(self.noshow_bucket_edges),
            rates=tuple(self.noshow_rates),
            counts=(0,) * (len(self.noshow_bucket_edges) + 1),
            class_offsets=dict(self.noshow_class_offsets),
        )
        if self.noshow_class_offsets:
            labels = tuple(
                self.classes[i].label
                for i in class_index_map(self.classes, self.grid.num_slots)
            )
            model = replace(model, slot_class_labels=labels)
        return model

    def mean_party_size(self) -> float:
        lo, hi = self.group_size_range
        return (1.0 - self.group_fraction) + self.group_fraction * (lo + hi) / 2.0


def _discretized_bell(
    mean_slots: float, sd_slots: float, d_max: int, deterministic: bool
) -> np.ndarray:
    """Probability row over durations 1..d_max with the requested mean.

    A point mass when deterministic; otherwise a discretized normal whose
    location is solved by bisection so the discrete mean lands on target
    (clamped to the representable range).
    """
    d = np.arange(1, d_max + 1, dtype=float)
    if deterministic:
        row = np.zeros(d_max)
        row[int(np.clip(round(mean_slots), 1, d_max)) - 1] = 1.0
        return row
    target = float(np.clip(mean_slots, 1.0, d_max))

    def mean_at(mu: float) -> float:
        w = np.exp(-0.5 * ((d - mu) / sd_slots) ** 2)
        w /= w.sum()
        return float(w @ d)

    lo, hi = -4.0 * d_max, 5.0 * d_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mean_at(mid) < target:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    w = np.exp(-0.5 * ((d - mu) / sd_slots) ** 2)
    w /= w.sum()
    return w


# -- bundled defaults --------------------------------------------------------


def default_arrival_profile(num_slots: int = 44) -> tuple[float, ...]:
    """Two-peak arrival curve; calibrated so the peak slot is about 268
    persons and the day totals in the high-7000s."""
    s = np.arange(num_slots, dtype=float)
    morning = np.exp(-0.5 * ((s - 6.0) / 8.0) ** 2)
    afternoon = 0.6 * np.exp(-0.5 * ((s - 28.0) / 10.0) ** 2)
    shape = morning + afternoon
    profile = 268.0 * shape / shape.max()
    return tuple(float(round(v, 3)) for v in profile)


def default_scenario(seed: int = 20190305) -> ScenarioConfig:
    """The calibrated free-day scenario the acceptance suite runs.

    The per-slot issue limit is the everyday binder (an administrative
    release cap); the occupancy cap is a safety net that only activates
    when dwell behavior shifts.
    """
    grid = SlotGrid(slot_length_minutes=15, num_slots=44, opening_minute=8 * 60)
    classes = default_classes(grid)
    return ScenarioConfig(
        grid=grid,
        classes=classes,
        context=DayContext(
            date=datetime.date(2019, 3, 5), free_day=True, demand_multiplier=1.0
        ),
        arrival_rate=default_arrival_profile(grid.num_slots),
        class_mean_minutes={
            "early_morning": 160.0,
            "late_morning": 135.0,
            "afternoon": 110.0,
            "evening": 83.0,
        },
        noshow_rates=(0.065, 0.155, 0.30, 0.44),
        occupancy_cap=2600.0,
        entry_cap=268.0,
        issue_limit=295,
        issue_limit_profile={
            "early_morning": 95,
            "late_morning": 120,
            "afternoon": 140,
            "evening": 295,
        },
        seed=seed,
    )


def five_day_policy_schedule() -> list[dict]:
    """The consecutive-free-days experiment: whole-day release on day one,
    then spreading with a shrinking booking lead window."""
    return [
        {"policy": PolicyConfig(release="all_at_open")},
        {"policy": PolicyConfig(release="spread_over_day", lead_slots=18)},
        {"policy": PolicyConfig(release="spread_over_day", lead_slots=14)},
        {"policy": PolicyConfig(release="spread_over_day", lead_slots=9)},
        {"policy": PolicyConfig(release="spread_over_day", lead_slots=6)},
    ]


def deterministic_safety_scenario(seed: int = 7) -> ScenarioConfig:
    """Point-mass dwell, nobody no-shows, no margin: the hard-safety regime.

    With deterministic dwell the expected occupancy the planner caps is
    the realized occupancy, so the cap must hold on every path.
    """
    base = default_scenario(seed)
    return replace(
        base,
        deterministic_durations=True,
        noshow_rates=(0.0, 0.0, 0.0, 0.0),
        policy=PolicyConfig(overbooking=False, safety_margin=0.0),
        occupancy_cap=1650.0,
        issue_limit=240,  # let the occupancy cap be the binding constraint
        issue_limit_profile=None,
        seed=seed,
    )


def stochastic_noshow_safety_scenario(seed: int = 7) -> ScenarioConfig:
    """Deterministic dwell, flat stochastic no-show, margin 0.05.

    The gap-independent no-show curve keeps the planning show rate equal
    across slots, which the allocator plans against conservatively; the
    statistical occupancy-safety bound is measured in this regime.
    """
    base = default_scenario(seed)
    return replace(
        base,
        deterministic_durations=True,
        group_fraction=0.0,  # isolate no-show noise from party-size noise
        noshow_bucket_edges=(),
        noshow_rates=(0.18,),
        policy=PolicyConfig(overbooking=True, safety_margin=0.05),
        occupancy_cap=1650.0,
        issue_limit=240,
        issue_limit_profile=None,
        seed=seed,
    )


def compact_drift_scenario(seed: int = 11) -> ScenarioConfig:
    """Small constructed day with a binding occupancy cap and a mid-day
    dwell lengthening; exercises drift detection and replanning."""
    grid = SlotGrid(slot_length_minutes=15, num_slots=24, opening_minute=9 * 60)
    classes = default_classes(grid)
    return ScenarioConfig(
        grid=grid,
        classes=classes,
        context=DayContext(date=datetime.date(2019, 6, 3)),
        arrival_rate=tuple([52.0] * grid.num_slots),
        class_mean_minutes={label: 50.0 for label in CLASS_LABELS},
        deterministic_durations=True,
        group_fraction=0.0,
        noshow_bucket_edges=(),
        noshow_rates=(0.0,),
        occupancy_cap=150.0,
        entry_cap=268.0,
        issue_limit=60,
        policy=PolicyConfig(overbooking=False, safety_margin=0.0),
        drift=DriftInjection(start_slot=12, duration_factor=1.5),
        seed=seed,
    )


# -- YAML serialization -------------------------------------------------------


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "format": "museq-scenario/1",
        "seed": cfg.seed,
        "grid": {
            "slot_length_minutes": cfg.grid.slot_length_minutes,
            "num_slots": cfg.grid.num_slots,
            "opening_minute": cfg.grid.opening_minute,
        },
        "classes": [
            {"label": c.label, "start_slot": c.start_slot, "end_slot": c.end_slot}
            for c in cfg.classes
        ],
        "context": {
            "date": cfg.context.date.isoformat(),
            "free_day": cfg.context.free_day,
            "demand_multiplier": cfg.context.demand_multiplier,
            "special_events": [list(ev) for ev in cfg.context.special_events],
        },
        "arrivals": {"per_slot_persons": list(cfg.arrival_rate)},
        "groups": {
            "fraction": cfg.group_fraction,
            "min_size": cfg.group_size_range[0],
            "max_size": cfg.group_size_range[1],
        },
        "durations": {
            "class_mean_minutes": dict(sorted(cfg.class_mean_minutes.items())),
            "sd_slots": cfg.class_sd_slots,
            "d_max": cfg.d_max,
            "deterministic": cfg.deterministic_durations,
        },
        "noshow": {
            "bucket_edges": list(cfg.noshow_bucket_edges),
            "rates": list(cfg.noshow_rates),
            "class_offsets": dict(sorted(cfg.noshow_class_offsets.items())),
        },
        "capacity": {
            "occupancy_cap": cfg.occupancy_cap,
            "entry_cap": cfg.entry_cap,
            "issue_limit": cfg.issue_limit,
            "issue_limit_profile": (
                dict(sorted(cfg.issue_limit_profile.items()))
                if cfg.issue_limit_profile
                else None
            ),
        },
        "fleet": {
            "num_kiosks": cfg.fleet.num_kiosks,
            "service_time_seconds": cfg.fleet.service_time,
        },
        "policy": {
            "overbooking": cfg.policy.overbooking,
            "safety_margin": cfg.policy.safety_margin,
            "release": cfg.policy.release,
            "lead_slots": cfg.policy.lead_slots,
        },
        "planning": {"source": cfg.planning, "min_row_samples": cfg.min_row_samples},
        "drift": (
            None
            if cfg.drift is None
            else {
                "start_slot": cfg.drift.start_slot,
                "duration_factor": cfg.drift.duration_factor,
            }
        ),
    }


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError("missing required field", field=f"{path}.{key}" if path else key)
    return mapping[key]


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping")
    if doc.get("format") != "museq-scenario/1":
        raise ConfigError("expected museq-scenario/1", field="format")
    g = _require(doc, "grid", "")
    grid = SlotGrid(
        slot_length_minutes=int(_require(g, "slot_length_minutes", "grid")),
        num_slots=int(_require(g, "num_slots", "grid")),
        opening_minute=int(_require(g, "opening_minute", "grid")),
    )
    cls_docs = doc.get("classes")
    if cls_docs:
        classes = tuple(
            SlotClass(c["label"], int(c["start_slot"]), int(c["end_slot"]))
            for c in cls_docs
        )
    else:
        classes = default_classes(grid)
    ctx_doc = doc.get("context", {})
    context = DayContext(
        date=datetime.date.fromisoformat(ctx_doc.get("date", "2019-03-05")),
        free_day=bool(ctx_doc.get("free_day", False)),
        demand_multiplier=float(ctx_doc.get("demand_multiplier", 1.0)),
        special_events=tuple(
            (str(e[0]), int(e[1]), int(e[2]))
            for e in ctx_doc.get("special_events", [])
        ),
    )
    arr = _require(doc, "arrivals", "")
    groups = doc.get("groups", {})
    dur = _require(doc, "durations", "")
    ns = _require(doc, "noshow", "")
    cap = _require(doc, "capacity", "")
    fleet_doc = doc.get("fleet", {})
    pol = doc.get("policy", {})
    planning_doc = doc.get("planning", {})
    drift_doc = doc.get("drift")
    return ScenarioConfig(
        grid=grid,
        classes=classes,
        context=context,
        arrival_rate=tuple(float(v) for v in _require(arr, "per_slot_persons", "arrivals")),
        class_mean_minutes={
            str(k): float(v)
            for k, v in _require(dur, "class_mean_minutes", "durations").items()
        },
        noshow_rates=tuple(float(v) for v in _require(ns, "rates", "noshow")),
        occupancy_cap=float(_require(cap, "occupancy_cap", "capacity")),
        entry_cap=float(cap.get("entry_cap", 268.0)),
        issue_limit=int(cap.get("issue_limit", 400)),
        issue_limit_profile=(
            {str(k): int(v) for k, v in cap["issue_limit_profile"].items()}
            if cap.get("issue_limit_profile")
            else None
        ),
        group_fraction=float(groups.get("fraction", 0.05)),
        group_size_range=(
            int(groups.get("min_size", 6)),
            int(groups.get("max_size", 15)),
        ),
        class_sd_slots=float(dur.get("sd_slots", 2.2)),
        d_max=int(dur.get("d_max", 16)),
        deterministic_durations=bool(dur.get("deterministic", False)),
        noshow_bucket_edges=tuple(int(v) for v in ns.get("bucket_edges", (5, 13, 25))),
        noshow_class_offsets={
            str(k): float(v) for k, v in ns.get("class_offsets", {}).items()
        },
        fleet=KioskFleet(
            num_kiosks=int(fleet_doc.get("num_kiosks", 7)),
            service_time=float(fleet_doc.get("service_time_seconds", 15.0)),
        ),
        policy=PolicyConfig(
            overbooking=bool(pol.get("overbooking", True)),
            safety_margin=float(pol.get("safety_margin", 0.05)),
            release=str(pol.get("release", "all_at_open")),
            lead_slots=int(pol.get("lead_slots", 12)),
        ),
        planning=str(planning_doc.get("source", "truthful")),
        min_row_samples=int(planning_doc.get("min_row_samples", 30)),
        drift=(
            None
            if not drift_doc
            else DriftInjection(
                start_slot=int(drift_doc["start_slot"]),
                duration_factor=float(drift_doc["duration_factor"]),
            )
        ),
        seed=int(doc.get("seed", 0)),
    )


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(cfg), fh, sort_keys=False)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = None if mark is None else mark.line + 1
            raise ParseError(f"invalid YAML: {exc}", line=line) from exc
    return scenario_from_dict(doc)
