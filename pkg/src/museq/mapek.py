"""Run-time adaptation loop: Monitor, Analyze, Plan, Execute over a Knowledge base.

The knowledge base folds an identity-free behavior event stream into
replayable tallies plus two rolling evidence windows (completed visits and
resolved tickets). Each slot boundary the loop checks those windows against
the current models, refits from the trailing window when they drift apart,
re-solves the remaining horizon, and publishes an availability snapshot.

Single-writer contract: exactly one caller mutates a knowledge base;
``monitor`` and ``tick`` must be serialized through one ordered stream.
Snapshots and verdicts are plain values and may be shared freely.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import allocator
from .durations import DurationMatrix, SurvivalMatrix, fit_duration_matrix, survival
from .errors import ConfigError, DoubleTickError, OutOfOrderEventError
from .noshow import NoShowModel, TicketRecord, fit_noshow, predict_noshow
from .durations import VisitRecord
from .timegrid import SlotClass, SlotGrid

EVENT_KINDS = ("booking", "show", "noshow", "entry", "exit", "count_update")

VERDICT_NONE = "none"
VERDICT_DURATION = "duration_drift"
VERDICT_NOSHOW = "noshow_drift"

#: Event kinds that resolve a ticket and therefore carry the booking gap.
_GAP_KINDS = ("booking", "show", "noshow")


@dataclass(frozen=True)
class Event:
    """One identity-free behavior observation.

    ``anon_tag`` is an opaque correlation token pairing an entry with its
    exit; it never appears on any other kind. ``gap_slots`` (booking-to-visit
    gap) rides on booking and ticket-resolution kinds. ``count_update``
    reuses ``group_size`` as the measured occupancy count.
    """

    ts: float
    kind: str
    slot: int
    group_size: int = 1
    gap_slots: int | None = None
    anon_tag: str | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}", field="kind")
        if self.slot < 0:
            raise ConfigError("must be >= 0", field="slot")
        min_size = 0 if self.kind == "count_update" else 1
        if self.group_size < min_size:
            raise ConfigError(f"must be >= {min_size}", field="group_size")
        if self.kind in _GAP_KINDS:
            if self.gap_slots is None or self.gap_slots < 0:
                raise ConfigError("required and >= 0 for this kind", field="gap_slots")
        elif self.gap_slots is not None:
            raise ConfigError("only booking/show/noshow carry it", field="gap_slots")
        if self.kind in ("entry", "exit"):
            if not self.anon_tag:
                raise ConfigError("required for entry/exit", field="anon_tag")
        elif self.anon_tag is not None:
            raise ConfigError("only entry/exit carry it", field="anon_tag")


@dataclass(frozen=True)
class DriftConfig:
    """Windowed relative-deviation drift detector settings.

    The relative threshold is paired with an absolute floor per signal so
    sampling noise at moderate rates stays below a 1% false-positive rate
    (floors chosen by Monte-Carlo calibration, then frozen here).
    """

    duration_window: int = 200
    noshow_window: int = 500
    theta: float = 0.2
    duration_floor_slots: float = 0.25
    noshow_floor: float = 0.05


class KnowledgeBase:
    """Shared state of the adaptation loop; replayable from its event log."""

    def __init__(
        self,
        grid: SlotGrid,
        classes: tuple[SlotClass, ...],
        duration_matrix: DurationMatrix,
        noshow_model: NoShowModel,
        occupancy_cap: float,
        entry_cap: float,
        issue_limit: int,
        issue_limits: np.ndarray | None = None,
        safety_margin: float = 0.05,
        overbooking: bool = True,
        drift: DriftConfig = DriftConfig(),
        min_row_samples: int = 30,
    ):
        self.grid = grid
        self.classes = classes
        self.duration_matrix = duration_matrix
        self.survival: SurvivalMatrix = survival(duration_matrix)
        self.noshow_model = noshow_model
        self.occupancy_cap = float(occupancy_cap)
        self.entry_cap = float(entry_cap)
        self.issue_limit = int(issue_limit)
        self.issue_limits = (
            np.full(grid.num_slots, float(issue_limit))
            if issue_limits is None
            else np.asarray(issue_limits, dtype=float)
        )
        self.safety_margin = float(safety_margin)
        self.overbooking = overbooking
        self.drift = drift
        self.min_row_samples = min_row_samples

        n = grid.num_slots
        self.version = 0
        self.last_ts = float("-inf")
        self.last_tick = -1
        self.day_index = 0
        self.plan: allocator.AllocationPlan | None = None
        self.sold = np.zeros(n, dtype=np.int64)
        self.committed_shows = np.zeros(n)  # booking-time expected bodies
        self.entered = np.zeros(n, dtype=np.int64)
        self.exited = np.zeros(n, dtype=np.int64)
        self.sold_since_solve = np.zeros(n, dtype=np.int64)
        self.occupancy_observed = np.full(n, -1, dtype=np.int64)
        self.orphan_exits = 0
        self.event_history: list[Event] = []
        self.open_entries: dict[str, tuple[int, int]] = {}
        self.completed_visits: deque = deque(maxlen=drift.duration_window)
        self.resolved_tickets: deque = deque(maxlen=drift.noshow_window)
        self.tick_trace: list[dict] = []

    # -- day management -----------------------------------------------------

    def start_day(self, day_index: int) -> None:
        """Reset per-day tallies; models and evidence windows persist."""
        n = self.grid.num_slots
        self.day_index = day_index
        self.last_tick = -1
        self.plan = None
        self.sold[:] = 0
        self.committed_shows[:] = 0.0
        self.entered[:] = 0
        self.exited[:] = 0
        self.sold_since_solve[:] = 0
        self.occupancy_observed[:] = -1
        self.orphan_exits = 0
        self.event_history = []
        self.open_entries = {}
        self.tick_trace = []

    # -- planning inputs ----------------------------------------------------

    def planning_show_rate(self, first_future: int) -> np.ndarray:
        """Per-slot show probability used by the allocator.

        A ticket for slot ``s`` sold right now has gap ``s - first_future``;
        committed older tickets have larger gaps, so this rate is an upper
        bound on their true show rate, which keeps planning conservative.
        With overbooking off, tickets are planned as bodies (rate one).
        """
        n = self.grid.num_slots
        if not self.overbooking:
            return np.ones(n)
        rates = np.empty(n)
        for s in range(n):
            gap = max(s - max(first_future, 0), 0)
            ns = predict_noshow(self.noshow_model, gap, s)
            rates[s] = min(1.0, max(1e-6, 1.0 - ns + self.safety_margin))
        return rates

    def availability(self) -> np.ndarray:
        """Current snapshot: plan allocation minus sales since the solve."""
        if self.plan is None:
            return np.zeros(self.grid.num_slots, dtype=np.int64)
        return np.maximum(self.plan.x - self.sold_since_solve, 0)

    # -- canonical state digest (replay determinism checks) -----------------

    def state_digest(self) -> str:
        payload = {
            "day": self.day_index,
            "version": self.version,
            "last_tick": self.last_tick,
            "sold": self.sold.tolist(),
            "entered": self.entered.tolist(),
            "exited": self.exited.tolist(),
            "orphan_exits": self.orphan_exits,
            "occupancy_observed": self.occupancy_observed.tolist(),
            "plan_x": None if self.plan is None else self.plan.x.tolist(),
            "availability": self.availability().tolist(),
            "duration_matrix": self.duration_matrix.to_text(),
            "noshow_model": self.noshow_model.to_text(),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def monitor(kb: KnowledgeBase, event: Event) -> KnowledgeBase:
    """Fold one event into the knowledge base; no model changes here."""
    if event.ts < kb.last_ts:
        raise OutOfOrderEventError(
            f"event at ts={event.ts} is older than last ingested ts={kb.last_ts}"
        )
    if event.slot >= kb.grid.num_slots:
        raise ConfigError(f"slot {event.slot} outside grid", field="slot")
    kb.last_ts = event.ts
    kb.event_history.append(event)
    kind = event.kind
    if kind == "booking":
        kb.sold[event.slot] += event.group_size
        kb.sold_since_solve[event.slot] += event.group_size
        # price the ticket at the same margined rate the plan issued it at,
        # so replans stay conservative about bodies already promised
        if kb.overbooking:
            ns = predict_noshow(kb.noshow_model, event.gap_slots, event.slot)
            show_p = min(1.0, max(1e-6, 1.0 - ns + kb.safety_margin))
        else:
            show_p = 1.0
        kb.committed_shows[event.slot] += event.group_size * show_p
    elif kind == "show":
        kb.resolved_tickets.append(
            (event.gap_slots, event.slot, True, event.group_size)
        )
    elif kind == "noshow":
        kb.resolved_tickets.append(
            (event.gap_slots, event.slot, False, event.group_size)
        )
    elif kind == "entry":
        kb.entered[event.slot] += event.group_size
        kb.open_entries[event.anon_tag] = (event.slot, event.group_size)
    elif kind == "exit":
        opened = kb.open_entries.pop(event.anon_tag, None)
        if opened is None:
            kb.orphan_exits += event.group_size
        else:
            entry_slot, size = opened
            kb.exited[event.slot] += size
            duration = event.slot - entry_slot + 1
            if duration >= 1:
                n = kb.grid.num_slots
                kb.completed_visits.append(
                    (
                        entry_slot,
                        duration,
                        size,
                        kb.day_index * n + entry_slot,  # absolute entry index
                        kb.day_index * n + event.slot,  # absolute exit index
                    )
                )
    elif kind == "count_update":
        kb.occupancy_observed[event.slot] = event.group_size
    return kb


def analyze(kb: KnowledgeBase) -> str:
    """Compare rolling windows against the current models; pure in ``kb``.

    Mid-day the completed-visit window is right-censored (only visits short
    enough to have ended are in it), so the predicted mean is conditioned
    on completion by the current boundary; without that the detector flags
    phantom drift every morning. The no-show check weighs tickets, not
    persons, because group parties show or vanish as one draw.
    """
    cfg = kb.drift
    if len(kb.completed_visits) >= cfg.duration_window:
        entries = np.array([v[0] for v in kb.completed_visits])
        durations = np.array([v[1] for v in kb.completed_visits], dtype=float)
        entry_abs = np.array([v[3] for v in kb.completed_visits])
        exit_abs = np.array([v[4] for v in kb.completed_visits])
        observed = float(durations.mean())
        probs = kb.duration_matrix.probs
        d_max = kb.duration_matrix.d_max
        d = np.arange(1, d_max + 1, dtype=float)
        mass_cum = np.cumsum(probs, axis=1)
        mean_cum = np.cumsum(probs * d, axis=1)
        # a visit sits in the window iff its exit landed between the oldest
        # retained exit and the current boundary, so its duration is both
        # right-censored (exited by now) and left-truncated (not yet pushed
        # out); condition the prediction on exactly that duration band
        now_abs = kb.day_index * kb.grid.num_slots + kb.last_tick
        oldest_exit = int(exit_abs.min())
        hi = np.clip(now_abs - entry_abs, 1, d_max)
        lo = np.clip(oldest_exit - entry_abs + 1, 1, d_max)
        lo = np.minimum(lo, hi)
        num = mean_cum[entries, hi - 1] - np.where(
            lo > 1, mean_cum[entries, lo - 2], 0.0
        )
        den = mass_cum[entries, hi - 1] - np.where(
            lo > 1, mass_cum[entries, lo - 2], 0.0
        )
        uncond = probs @ d
        preds = np.where(den > 1e-12, num / np.maximum(den, 1e-12), uncond[entries])
        predicted = float(preds.mean())
        if predicted > 0:
            dev = abs(observed - predicted)
            if dev > cfg.theta * predicted and dev > cfg.duration_floor_slots:
                return VERDICT_DURATION
    if len(kb.resolved_tickets) >= cfg.noshow_window:
        missed = np.array(
            [0.0 if t[2] else 1.0 for t in kb.resolved_tickets], dtype=float
        )
        observed = float(missed.mean())
        preds = np.array(
            [predict_noshow(kb.noshow_model, t[0], t[1]) for t in kb.resolved_tickets]
        )
        predicted = float(preds.mean())
        dev = abs(observed - predicted)
        if dev > cfg.theta * max(predicted, 1e-9) and dev > cfg.noshow_floor:
            return VERDICT_NOSHOW
    return VERDICT_NONE


def plan(kb: KnowledgeBase, verdict: str) -> allocator.AllocationPlan:
    """Refit the flagged model from its trailing window, then replan.

    The evidence window is cleared after a refit so the detector gathers
    fresh samples against the new model instead of re-flagging the mixture.
    """
    if verdict == VERDICT_DURATION:
        records = [
            VisitRecord(entry_slot=s, duration_slots=d, group_size=g)
            for (s, d, g, _ea, _xa) in kb.completed_visits
        ]
        kb.duration_matrix = fit_duration_matrix(
            records,
            kb.grid,
            d_max=kb.duration_matrix.d_max,
            min_row_samples=kb.min_row_samples,
            classes=kb.classes,
        )
        kb.survival = survival(kb.duration_matrix)
        kb.version += 1
        kb.completed_visits.clear()
    elif verdict == VERDICT_NOSHOW:
        # the gap is the covariate the fit consumes; anchor bookings at 0
        # so gaps survive reconstruction even across day boundaries
        tickets = [
            TicketRecord(booking_slot=0, visit_slot=gap, group_size=g, showed=showed)
            for (gap, _slot, showed, g) in kb.resolved_tickets
        ]
        kb.noshow_model = fit_noshow(tickets, kb.noshow_model.bucket_edges)
        kb.version += 1
        kb.resolved_tickets.clear()
    new_plan = allocator.replan(kb.last_tick - 1, kb)
    kb.plan = new_plan
    kb.sold_since_solve[:] = 0
    return new_plan


def execute(kb: KnowledgeBase, plan_: allocator.AllocationPlan) -> np.ndarray:
    """Publish the availability snapshot bookings will consult."""
    snapshot = np.maximum(plan_.x - kb.sold_since_solve, 0).astype(np.int64)
    return snapshot


def visits_from_events(events: list[Event]) -> list[VisitRecord]:
    """Pair entry and exit events into completed-visit records."""
    opened: dict[str, tuple[int, int]] = {}
    visits: list[VisitRecord] = []
    for ev in events:
        if ev.kind == "entry":
            opened[ev.anon_tag] = (ev.slot, ev.group_size)
        elif ev.kind == "exit" and ev.anon_tag in opened:
            slot, size = opened.pop(ev.anon_tag)
            visits.append(
                VisitRecord(
                    entry_slot=slot,
                    duration_slots=max(ev.slot - slot + 1, 1),
                    group_size=size,
                )
            )
    return visits


def tickets_from_events(events: list[Event]) -> list[TicketRecord]:
    """Ticket outcomes straight from the resolution events."""
    tickets: list[TicketRecord] = []
    for ev in events:
        if ev.kind in ("show", "noshow"):
            tickets.append(
                TicketRecord(
                    booking_slot=0,
                    visit_slot=ev.gap_slots,
                    group_size=ev.group_size,
                    showed=ev.kind == "show",
                )
            )
    return tickets


def replay_log(kb: KnowledgeBase, events: list[Event]) -> list[dict]:
    """Fold a recorded event log through a fresh knowledge base.

    Boundaries are derived from the grid: every day present in the log gets
    its full set of ticks, with each slot's events ingested after that
    slot's boundary tick, exactly as live operation interleaves them.
    Returns the combined tick trace.
    """
    n = kb.grid.num_slots
    max_day = 0
    for ev in events:
        max_day = max(max_day, int(ev.ts // 86400.0))
    trace: list[dict] = []
    cursor = 0
    for day in range(max_day + 1):
        kb.start_day(day)
        offset = day * 86400.0
        for boundary in range(n):
            tick(kb, boundary)
            end_ts = offset + kb.grid.slot_start_second(boundary + 1)
            while cursor < len(events) and events[cursor].ts < end_ts:
                monitor(kb, events[cursor])
                cursor += 1
        trace.extend(kb.tick_trace)
    while cursor < len(events):  # stragglers recorded past the final close
        monitor(kb, events[cursor])
        cursor += 1
    return trace


def tick(kb: KnowledgeBase, slot_boundary: int) -> np.ndarray:
    """One loop turn at a slot boundary: analyze, plan, execute, snapshot."""
    if slot_boundary != kb.last_tick + 1:
        raise DoubleTickError(
            f"expected boundary {kb.last_tick + 1}, got {slot_boundary}"
        )
    kb.last_tick = slot_boundary
    verdict = analyze(kb)
    new_plan = plan(kb, verdict)
    snapshot = execute(kb, new_plan)
    kb.tick_trace.append(
        {
            "boundary": slot_boundary,
            "verdict": verdict,
            "version": kb.version,
            "feasible": new_plan.feasible,
            "available_total": int(snapshot.sum()),
        }
    )
    return snapshot
