"""Discrete-event visitor simulation driving the full control loop.

One simulated day: parties arrive on a non-homogeneous Poisson schedule,
queue at the kiosk fleet, read the availability snapshot published at the
last slot boundary, book the earliest feasible slot their release policy
exposes, then show or no-show according to the ground-truth gap curve;
shows dwell per the ground-truth duration distribution and exit. Every
behavior event feeds the monitor; the MAPE-K loop ticks at each boundary.

Deterministic for a fixed (config, seed): all randomness flows from one
seeded generator and events are folded in (timestamp, sequence) order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import mapek
from .durations import DurationMatrix, VisitRecord, predict_exits
from .errors import ConfigError
from .mapek import Event, KnowledgeBase
from .noshow import NoShowModel, TicketRecord, predict_noshow
from .scenario import ScenarioConfig
from .timegrid import class_index_map


@dataclass(frozen=True)
class QoESummary:
    """The visitor-experience metrics the day is judged by."""

    mean_wait: float
    max_wait: float
    p95_wait: float
    rejection_fraction: float
    mean_gap_slots: float
    noshow_rate: float


@dataclass(frozen=True)
class SimResult:
    """Everything one simulated day produced."""

    day_index: int
    seed: int
    availability: np.ndarray  # snapshot value for slot s at slot s's own tick
    sales: np.ndarray  # persons sold per visit slot
    entries: np.ndarray
    exits: np.ndarray
    occupancy: np.ndarray  # realized persons inside per slot
    predicted_exits: np.ndarray  # planning-model exits given realized entries
    issued: int
    shows: int
    noshows: int
    rejections: int
    arrivals: int
    kiosk_waits: np.ndarray  # seconds, one per served party
    gap_person_sum: float
    model_version_end: int
    rejections_by_slot: np.ndarray = None  # persons turned away, by booking slot
    kiosk_overflow: int = 0  # persons whose service finished after closing
    events: list = field(repr=False, default_factory=list)
    tick_trace: list = field(repr=False, default_factory=list)

    def __post_init__(self):
        if self.issued != self.shows + self.noshows:
            raise ConfigError(
                "issued must equal shows plus no-shows", field="issued"
            )
        if np.any(self.occupancy < 0):
            raise ConfigError("occupancy went negative", field="occupancy")
        if np.any(self.entries > self.sales):
            raise ConfigError(
                "entries exceeded tickets sold for a slot", field="entries"
            )


def build_knowledge_base(config: ScenarioConfig) -> KnowledgeBase:
    """Planning models per the scenario's planning source.

    ``truthful`` hands the controller the ground-truth models (pre-drift);
    ``refit`` hands it the same shapes refit from a generated corpus, which
    keeps the planner honest about estimation noise.
    """
    truth_matrix = config.ground_truth_matrix()
    truth_noshow = config.ground_truth_noshow()
    if config.planning == "refit":
        visits, tickets = generate_records(config, config.seed + 1, 20_000)
        from .durations import fit_duration_matrix
        from .noshow import fit_noshow

        matrix = fit_duration_matrix(
            visits,
            config.grid,
            d_max=config.d_max,
            min_row_samples=config.min_row_samples,
            classes=config.classes,
        )
        ns_model = fit_noshow(tickets, config.noshow_bucket_edges)
    else:
        matrix, ns_model = truth_matrix, truth_noshow
    return KnowledgeBase(
        grid=config.grid,
        classes=config.classes,
        duration_matrix=matrix,
        noshow_model=ns_model,
        occupancy_cap=config.occupancy_cap,
        entry_cap=config.entry_cap,
        issue_limit=config.issue_limit,
        issue_limits=config.issue_limits_vector(),
        safety_margin=config.policy.safety_margin,
        overbooking=config.policy.overbooking,
        min_row_samples=config.min_row_samples,
    )


class _DaySim:
    """Single-day simulation state; confined to one execution context."""

    def __init__(self, config: ScenarioConfig, kb: KnowledgeBase, day_index: int):
        self.config = config
        self.kb = kb
        self.day = day_index
        self.grid = config.grid
        self.n = config.grid.num_slots
        self.rng = np.random.default_rng([config.seed, day_index])
        self.day_offset = day_index * 86400.0
        self.slot_seconds = config.grid.slot_length_minutes * 60.0
        self.truth = config.ground_truth_matrix()
        self.drifted = (
            None
            if config.drift is None
            else config.ground_truth_matrix(config.drift.duration_factor)
        )
        self.truth_noshow = config.ground_truth_noshow()
        self.seq = 0

    def boundary(self, slot: int) -> float:
        return self.day_offset + self.grid.slot_start_second(slot)

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def dwell_row(self, entry_slot: int) -> np.ndarray:
        drift = self.config.drift
        if drift is not None and self.drifted is not None and entry_slot >= drift.start_slot:
            return self.drifted.probs[entry_slot]
        return self.truth.probs[entry_slot]

    def true_noshow(self, gap: int, visit_slot: int) -> float:
        return predict_noshow(self.truth_noshow, gap, visit_slot)

    # -- arrivals and kiosk schedule ----------------------------------------

    def draw_parties(self):
        """Poisson party arrivals per slot with arrival times inside the slot."""
        cfg = self.config
        rate = np.asarray(cfg.arrival_rate) * cfg.context.demand_multiplier
        party_rate = rate / cfg.mean_party_size()
        lo, hi = cfg.group_size_range
        parties = []
        for s in range(self.n):
            n_groups = self.rng.poisson(party_rate[s] * cfg.group_fraction)
            n_singles = self.rng.poisson(party_rate[s] * (1.0 - cfg.group_fraction))
            total = n_groups + n_singles
            if total == 0:
                continue
            times = np.sort(self.rng.uniform(0.0, self.slot_seconds, total))
            sizes = np.ones(total, dtype=np.int64)
            if n_groups:
                which = self.rng.choice(total, size=n_groups, replace=False)
                sizes[np.sort(which)] = self.rng.integers(lo, hi + 1, n_groups)
            start = self.boundary(s)
            for t, size in zip(times, sizes):
                parties.append((start + float(t), int(size)))
        parties.sort(key=lambda p: p[0])
        return parties

    def kiosk_schedule(self, parties):
        """FIFO service through the fleet; returns (service_end, size, wait)."""
        fleet = self.config.fleet
        servers = [self.boundary(0)] * fleet.num_kiosks
        heapq.heapify(servers)
        out = []
        for arrival, size in parties:
            free_at = heapq.heappop(servers)
            start = max(arrival, free_at)
            end = start + fleet.service_time
            heapq.heappush(servers, end)
            out.append((end, size, start - arrival))
        return out


def run_day(
    config: ScenarioConfig, kb: KnowledgeBase | None = None, day_index: int = 0
) -> SimResult:
    """Simulate one operating day through the adaptation loop."""
    if kb is None:
        kb = build_knowledge_base(config)
    sim = _DaySim(config, kb, day_index)
    kb.start_day(day_index)
    n = sim.n
    close_ts = sim.boundary(n)

    parties = sim.draw_parties()
    served = sim.kiosk_schedule(parties)
    waits = np.array([w for (_, _, w) in served], dtype=float)

    # bucket served parties by the slot their booking completes in
    by_slot: list[list] = [[] for _ in range(n)]
    rejected = 0
    arrivals_total = sum(size for _, size in parties)
    opening_ts = sim.boundary(0)
    kiosk_overflow = 0
    rejections_by_slot = np.zeros(n, dtype=np.int64)
    for end, size, _ in served:
        if end >= close_ts:
            kiosk_overflow += size  # service finished after closing
            rejected += size
            continue
        slot = int((end - opening_ts) // sim.slot_seconds)
        by_slot[slot].append((end, size))

    pending: list[list] = [[] for _ in range(n)]  # tickets awaiting their slot
    exits_due: list[list] = [[] for _ in range(n)]  # (tag, size) exiting in slot

    availability = np.zeros(n, dtype=np.int64)
    sales = np.zeros(n, dtype=np.int64)
    entries = np.zeros(n, dtype=np.int64)
    exits = np.zeros(n, dtype=np.int64)
    occupancy = np.zeros(n, dtype=np.int64)
    issued = shows = noshows = 0
    gap_person_sum = 0.0
    all_events: list[Event] = []
    tag_counter = 0
    lead = config.policy.lead_slots if config.policy.release == "spread_over_day" else n

    inside = 0
    for i in range(n):
        slot_start = sim.boundary(i)
        slot_end = sim.boundary(i + 1)
        snapshot = mapek.tick(kb, i)
        availability[i] = snapshot[i]
        live = snapshot.copy()
        events: list[tuple[float, int, Event]] = []

        def emit(ev: Event):
            events.append((ev.ts, sim.next_seq(), ev))

        def admit(visit_slot: int, gap: int, size: int, ts: float):
            nonlocal shows, noshows, tag_counter, inside
            nonlocal issued
            if sim.rng.random() < sim.true_noshow(gap, visit_slot):
                noshows += size
                emit(Event(ts, "noshow", visit_slot, size, gap_slots=gap))
                return
            shows += size
            tag_counter += 1
            tag = f"d{day_index}v{tag_counter:06d}"
            emit(Event(ts, "show", visit_slot, size, gap_slots=gap))
            emit(Event(ts + 0.25, "entry", visit_slot, size, anon_tag=tag))
            entries[visit_slot] += size
            inside += size
            row = sim.dwell_row(visit_slot)
            dwell = int(sim.rng.choice(len(row), p=row)) + 1
            exit_slot = min(visit_slot + dwell - 1, n - 1)
            exits_due[exit_slot].append((tag, size))

        # 1) resolve earlier bookings whose visit slot starts now
        for k, (gap, size) in enumerate(pending[i]):
            admit(i, gap, size, slot_start + 0.5 + 1e-3 * k)

        # 2) bookings completed at the kiosks during this slot
        for end, size in by_slot[i]:
            chosen = -1
            for s in range(i, min(i + lead + 1, n)):
                if live[s] >= size:
                    chosen = s
                    break
            if chosen < 0:
                rejected += size
                rejections_by_slot[i] += size
                continue
            live[chosen] -= size
            gap = chosen - i
            issued += size
            gap_person_sum += gap * size
            sales[chosen] += size
            emit(Event(end, "booking", chosen, size, gap_slots=gap))
            if chosen == i:
                admit(i, 0, size, min(end + 1.0, slot_end - 2.0))
            else:
                pending[chosen].append((gap, size))

        # 3) exits scheduled for this slot
        for k, (tag, size) in enumerate(exits_due[i]):
            exits[i] += size
            emit(Event(slot_end - 1.0 + 5e-5 * k, "exit", i, size, anon_tag=tag))
        occupancy[i] = inside
        inside -= sum(size for _, size in exits_due[i])

        # 4) people-counter reading for the slot just ending
        emit(Event(slot_end - 0.25, "count_update", i, int(occupancy[i])))

        events.sort(key=lambda e: (e[0], e[1]))
        for _, _, ev in events:
            mapek.monitor(kb, ev)
        all_events.extend(ev for _, _, ev in events)

    predicted = predict_exits(entries.astype(float), kb.duration_matrix)[:n]
    return SimResult(
        day_index=day_index,
        seed=config.seed,
        availability=availability,
        sales=sales,
        entries=entries,
        exits=exits,
        occupancy=occupancy,
        predicted_exits=predicted,
        issued=issued,
        shows=shows,
        noshows=noshows,
        rejections=rejected,
        arrivals=arrivals_total,
        rejections_by_slot=rejections_by_slot,
        kiosk_overflow=kiosk_overflow,
        kiosk_waits=waits,
        gap_person_sum=gap_person_sum,
        model_version_end=kb.version,
        events=all_events,
        tick_trace=list(kb.tick_trace),
    )


def run_days(
    config: ScenarioConfig,
    num_days: int,
    overrides: list[dict] | None = None,
) -> list[SimResult]:
    """Consecutive days with a carried-over knowledge base.

    ``overrides[d]`` patches scenario fields for day ``d`` (policy switches,
    demand changes); models learned by the loop persist across days.
    """
    if num_days < 1:
        raise ConfigError("must be >= 1", field="num_days")
    from dataclasses import replace

    kb = build_knowledge_base(config)
    results = []
    for day in range(num_days):
        day_cfg = config
        if overrides and day < len(overrides) and overrides[day]:
            day_cfg = replace(config, **overrides[day])
        results.append(run_day(day_cfg, kb=kb, day_index=day))
    return results


def generate_records(
    config: ScenarioConfig, seed: int, n: int
) -> tuple[list[VisitRecord], list[TicketRecord]]:
    """Draw visit and ticket corpora straight from the ground truth.

    No control loop involved; this feeds the model-recovery tests.
    """
    if n < 1:
        raise ConfigError("must be >= 1", field="n")
    rng = np.random.default_rng([seed, 424242])
    truth = config.ground_truth_matrix()
    noshow = config.ground_truth_noshow()
    profile = np.asarray(config.arrival_rate, dtype=float)
    profile = profile / profile.sum()
    num = config.grid.num_slots
    lo, hi = config.group_size_range

    slots = rng.choice(num, size=n, p=profile)
    sizes = np.where(
        rng.random(n) < config.group_fraction, rng.integers(lo, hi + 1, n), 1
    )
    # gap buckets sampled uniformly so every bucket gets comparable mass
    edges = (0,) + tuple(config.noshow_bucket_edges)
    gap_hi = max(edges[-1] + 8, num - 1)
    bucket_ranges = [
        (edges[b], (edges[b + 1] - 1) if b + 1 < len(edges) else gap_hi)
        for b in range(len(edges))
    ]
    visits = []
    tickets = []
    for k in range(n):
        s = int(slots[k])
        row = truth.probs[s]
        dwell = int(rng.choice(config.d_max, p=row)) + 1
        size = int(sizes[k])
        visits.append(VisitRecord(entry_slot=s, duration_slots=dwell, group_size=size))
        b_lo, b_hi = bucket_ranges[int(rng.integers(0, len(bucket_ranges)))]
        gap = int(rng.integers(b_lo, b_hi + 1))
        gap = min(gap, num - 1)
        visit = int(rng.integers(gap, num))
        showed = rng.random() >= predict_noshow(noshow, gap, visit)
        tickets.append(
            TicketRecord(
                booking_slot=visit - gap,
                visit_slot=visit,
                group_size=size,
                showed=bool(showed),
            )
        )
    return visits, tickets


def qoe_summary(result: SimResult) -> QoESummary:
    """Visitor-experience metrics; NaN marks undefined means on empty days."""
    waits = result.kiosk_waits
    served_any = waits.size > 0
    issued = result.issued
    return QoESummary(
        mean_wait=float(waits.mean()) if served_any else float("nan"),
        max_wait=float(waits.max()) if served_any else 0.0,
        p95_wait=float(np.percentile(waits, 95)) if served_any else 0.0,
        rejection_fraction=(
            result.rejections / result.arrivals if result.arrivals else 0.0
        ),
        mean_gap_slots=(result.gap_person_sum / issued) if issued else float("nan"),
        noshow_rate=(result.noshows / issued) if issued else float("nan"),
    )
