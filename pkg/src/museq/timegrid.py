"""Discretized operating-day time model: slot grid, slot classes, day context.

Everything here is immutable after construction and safe to share across
threads. A slot is a fixed-length entry window; slot ``s`` covers wall
minutes ``[opening + s*length, opening + (s+1)*length)``.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

from .errors import ConfigError, UnpartitionedSlotError

#: Canonical slot-class labels, in order of the operating day.
CLASS_LABELS = ("early_morning", "late_morning", "afternoon", "evening")

#: Default class boundaries as wall minutes from midnight. Only the 16:00
#: boundary matters for the duration statistics; the others are defaults.
DEFAULT_CLASS_BOUNDARY_MINUTES = (10 * 60 + 30, 13 * 60, 16 * 60)


@dataclass(frozen=True)
class SlotGrid:
    """An operating day cut into fixed-length entry slots."""

    slot_length_minutes: int = 15
    num_slots: int = 44
    opening_minute: int = 8 * 60

    def __post_init__(self):
        if self.slot_length_minutes <= 0:
            raise ConfigError("must be positive", field="slot_length_minutes")
        if self.num_slots <= 0:
            raise ConfigError("must be positive", field="num_slots")
        if self.opening_minute < 0:
            raise ConfigError("must be nonnegative", field="opening_minute")

    @property
    def closing_minute(self) -> int:
        return self.opening_minute + self.num_slots * self.slot_length_minutes

    def slot_start_minute(self, slot: int) -> int:
        """Wall minute at which ``slot`` begins."""
        return self.opening_minute + slot * self.slot_length_minutes

    def slot_start_second(self, slot: int) -> float:
        """Seconds since midnight at which ``slot`` begins."""
        return self.slot_start_minute(slot) * 60.0

    def slot_of(self, wall_minute: float) -> int | None:
        """Slot index containing ``wall_minute``, or None when out of hours.

        Being outside operating hours is a value, not an error.
        """
        if wall_minute < self.opening_minute or wall_minute >= self.closing_minute:
            return None
        return int((wall_minute - self.opening_minute) // self.slot_length_minutes)

    def slot_of_second(self, second: float) -> int | None:
        return self.slot_of(second / 60.0)


@dataclass(frozen=True)
class SlotClass:
    """A labeled, half-open range of slot indices ``[start_slot, end_slot)``."""

    label: str
    start_slot: int
    end_slot: int

    def __post_init__(self):
        if self.label not in CLASS_LABELS:
            raise ConfigError(f"unknown label {self.label!r}", field="label")
        if not 0 <= self.start_slot < self.end_slot:
            raise ConfigError("empty or negative slot range", field="slot_range")

    def __contains__(self, slot: int) -> bool:
        return self.start_slot <= slot < self.end_slot


def default_classes(grid: SlotGrid) -> tuple[SlotClass, ...]:
    """Default partition: open-10:30, 10:30-13:00, 13:00-16:00, 16:00-close.

    Boundaries falling outside the grid collapse the affected classes; only
    nonempty classes are returned, so short grids still partition cleanly.
    """
    cuts = [0]
    for minute in DEFAULT_CLASS_BOUNDARY_MINUTES:
        offset = minute - grid.opening_minute
        slot = max(0, -(-offset // grid.slot_length_minutes))  # ceil division
        cuts.append(min(int(slot), grid.num_slots))
    cuts.append(grid.num_slots)
    classes = []
    for label, lo, hi in zip(CLASS_LABELS, cuts[:-1], cuts[1:]):
        if hi > lo:
            classes.append(SlotClass(label, lo, hi))
    return tuple(classes)


def validate_partition(classes: tuple[SlotClass, ...], num_slots: int) -> None:
    """Raise ConfigError unless the classes partition ``[0, num_slots)``."""
    covered = sorted(classes, key=lambda c: c.start_slot)
    cursor = 0
    for cls in covered:
        if cls.start_slot != cursor:
            raise ConfigError(
                f"classes leave a gap or overlap at slot {cursor}", field="classes"
            )
        cursor = cls.end_slot
    if cursor != num_slots:
        raise ConfigError(
            f"classes cover [0, {cursor}) but the grid has {num_slots} slots",
            field="classes",
        )


def class_of(classes: tuple[SlotClass, ...], slot: int) -> SlotClass:
    """The unique class whose range contains ``slot``."""
    for cls in classes:
        if slot in cls:
            return cls
    raise UnpartitionedSlotError(f"slot {slot} is not covered by any slot class")


def class_index_map(classes: tuple[SlotClass, ...], num_slots: int) -> list[int]:
    """Per-slot index into ``classes``; raises if any slot is uncovered."""
    out = []
    for s in range(num_slots):
        for i, cls in enumerate(classes):
            if s in cls:
                out.append(i)
                break
        else:
            raise UnpartitionedSlotError(f"slot {s} is not covered by any slot class")
    return out


@dataclass(frozen=True)
class DayContext:
    """Day-level temporal and social context for a simulated day."""

    date: datetime.date = datetime.date(2019, 3, 5)
    free_day: bool = False
    demand_multiplier: float = 1.0
    special_events: tuple[tuple[str, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.demand_multiplier < 0:
            raise ConfigError("must be nonnegative", field="demand_multiplier")
