"""No-show probability as a function of booking-to-visit gap; overbooking.

The model is deliberately plain: piecewise-constant no-show rates over gap
buckets (gap = visit slot minus booking slot), fitted as empirical ratios,
plus an optional additive per-slot-class offset. Overbooking divides the
attendance target by a safety-margined planning show rate.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyInputError, ParseError

#: Default gap-bucket boundaries in slots: 0-4, 5-12, 13-24, 25+.
DEFAULT_BUCKET_EDGES = (5, 13, 25)

DEFAULT_SAFETY_MARGIN = 0.05


@dataclass(frozen=True)
class TicketRecord:
    """One issued ticket: when booked, when valid, for how many, shown or not."""

    booking_slot: int
    visit_slot: int
    group_size: int = 1
    showed: bool = True

    def __post_init__(self):
        if self.visit_slot < self.booking_slot:
            raise ConfigError("visit_slot must be >= booking_slot", field="visit_slot")
        if self.group_size < 1:
            raise ConfigError("must be >= 1", field="group_size")

    @property
    def gap_slots(self) -> int:
        return self.visit_slot - self.booking_slot


@dataclass(frozen=True)
class NoShowModel:
    """Gap-bucketed no-show rates.

    ``bucket_edges`` are the strictly increasing inner boundaries; bucket
    ``i`` covers gaps in ``[edge[i-1], edge[i])`` with the first bucket
    starting at 0 and the last unbounded. ``class_offsets`` maps slot-class
    labels to additive adjustments; predictions clamp into [0, 1].
    """

    bucket_edges: tuple[int, ...] = DEFAULT_BUCKET_EDGES
    rates: tuple[float, ...] = (0.0,) * (len(DEFAULT_BUCKET_EDGES) + 1)
    counts: tuple[int, ...] = (0,) * (len(DEFAULT_BUCKET_EDGES) + 1)
    class_offsets: dict = field(default_factory=dict)
    slot_class_labels: tuple[str, ...] = ()  # label per slot, when offsets used

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.bucket_edges, self.bucket_edges[1:])):
            raise ConfigError("must be strictly increasing", field="bucket_edges")
        if len(self.rates) != len(self.bucket_edges) + 1:
            raise ConfigError("one rate per bucket required", field="rates")
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise ConfigError("rates must lie in [0, 1]", field="rates")

    def bucket_of(self, gap: int) -> int:
        if gap < 0:
            raise ConfigError("gap must be >= 0", field="gap")
        for i, edge in enumerate(self.bucket_edges):
            if gap < edge:
                return i
        return len(self.bucket_edges)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("# museq noshow-model v1\n")
        buf.write("bucket_lo,bucket_hi,rate,count\n")
        los = (0,) + self.bucket_edges
        his = self.bucket_edges + (-1,)  # -1 marks the unbounded bucket
        for lo, hi, rate, count in zip(los, his, self.rates, self.counts):
            buf.write(f"{lo},{hi},{rate!r},{count}\n")
        for label, off in sorted(self.class_offsets.items()):
            buf.write(f"offset,{label},{off!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "NoShowModel":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# museq noshow-model v1"):
            raise ParseError("not a museq noshow-model v1 file", line=1)
        edges, rates, counts, offsets = [], [], [], {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#") or line.startswith("bucket_lo"):
                continue
            cells = line.split(",")
            try:
                if cells[0] == "offset":
                    offsets[cells[1]] = float(cells[2])
                    continue
                lo, hi = int(cells[0]), int(cells[1])
                if hi != -1:
                    edges.append(hi)
                rates.append(float(cells[2]))
                counts.append(int(cells[3]))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad noshow-model row: {exc}", line=lineno) from exc
        if not rates:
            raise ParseError("noshow-model file has no buckets")
        return cls(tuple(edges), tuple(rates), tuple(counts), offsets)


def fit_noshow(
    tickets: list[TicketRecord],
    bucket_edges: tuple[int, ...] = DEFAULT_BUCKET_EDGES,
) -> NoShowModel:
    """Per-bucket empirical no-show ratios, person-weighted.

    A group ticket contributes its whole party to both numerator and
    denominator (groups show or no-show together). Empty buckets inherit
    the global rate.
    """
    if not tickets:
        raise EmptyInputError("cannot fit a no-show model from zero tickets")
    nb = len(bucket_edges) + 1
    issued = np.zeros(nb)
    missed = np.zeros(nb)
    probe = NoShowModel(bucket_edges=tuple(bucket_edges),
                        rates=(0.0,) * nb, counts=(0,) * nb)
    for t in tickets:
        b = probe.bucket_of(t.gap_slots)
        issued[b] += t.group_size
        if not t.showed:
            missed[b] += t.group_size
    global_rate = float(missed.sum() / issued.sum())
    rates = [
        float(missed[b] / issued[b]) if issued[b] > 0 else global_rate
        for b in range(nb)
    ]
    return NoShowModel(
        bucket_edges=tuple(bucket_edges),
        rates=tuple(rates),
        counts=tuple(int(c) for c in issued),
    )


def predict_noshow(model: NoShowModel, gap: int, visit_slot: int) -> float:
    """Bucket rate plus the visit slot's class offset, clamped into [0, 1]."""
    rate = model.rates[model.bucket_of(gap)]
    if model.class_offsets and model.slot_class_labels:
        if 0 <= visit_slot < len(model.slot_class_labels):
            label = model.slot_class_labels[visit_slot]
            rate += model.class_offsets.get(label, 0.0)
    return min(1.0, max(0.0, rate))


def daily_noshow_rate(tickets: list[TicketRecord]) -> float:
    """Per-person no-show fraction: no-show persons over issued persons."""
    if not tickets:
        raise EmptyInputError("no tickets")
    issued = sum(t.group_size for t in tickets)
    missed = sum(t.group_size for t in tickets if not t.showed)
    return missed / issued


def daily_rate_from_counts(issued: int, no_show: int) -> float:
    """Daily no-show fraction from aggregate counts (fixture-style input)."""
    if issued <= 0:
        raise EmptyInputError("issued count must be positive")
    return no_show / issued


def overbooking_limit(
    target_attendance: float,
    show_rate_estimate: float,
    safety_margin: float = DEFAULT_SAFETY_MARGIN,
) -> int:
    """Issuable persons: floor(target / clamped planning show rate).

    The margin is added to the estimated show rate so planning assumes more
    ticket holders arrive than expected (the conservative worst case); the
    clamp keeps the planning rate at most 1.
    """
    if show_rate_estimate <= 0.0:
        raise ConfigError("must be positive", field="show_rate_estimate")
    if show_rate_estimate > 1.0:
        raise ConfigError("must be <= 1", field="show_rate_estimate")
    if safety_margin < 0.0:
        raise ConfigError("must be nonnegative", field="safety_margin")
    if target_attendance < 0:
        raise ConfigError("must be nonnegative", field="target_attendance")
    planning_rate = min(1.0, show_rate_estimate + safety_margin)
    return int(math.floor(target_attendance / planning_rate + 1e-12))
