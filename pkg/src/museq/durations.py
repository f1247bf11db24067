"""Visit-duration distributions, survival probabilities, and flow prediction.

The central object is the duration matrix: one probability row per entry
slot over durations ``1..d_max`` (in slots). Its tail sums form the survival
matrix ``Q[s][t]`` = probability that a visitor entering slot ``s`` is still
inside during slot ``t``, which converts admissions into expected occupancy.

Convention used throughout: a visitor entering slot ``s`` with duration ``d``
occupies slots ``s .. s+d-1`` inclusive and exits during slot ``s+d-1``.
Predicted series are therefore padded to ``num_slots + d_max - 1`` entries.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyClassError, EmptyInputError, ParseError
from .timegrid import SlotClass, SlotGrid, class_index_map, default_classes

_ROW_SUM_TOL = 1e-9

DEFAULT_D_MAX = 16  # 4 hours on a 15-minute grid
DEFAULT_MIN_ROW_SAMPLES = 30


@dataclass(frozen=True)
class VisitRecord:
    """One completed visit: entry slot, dwell in slots, party size.

    Carries no personal identity fields by construction.
    """

    entry_slot: int
    duration_slots: int
    group_size: int = 1

    def __post_init__(self):
        if self.duration_slots < 1:
            raise ConfigError("must be >= 1", field="duration_slots")
        if self.entry_slot < 0:
            raise ConfigError("must be >= 0", field="entry_slot")
        if self.group_size < 1:
            raise ConfigError("must be >= 1", field="group_size")


class DurationMatrix:
    """Per-entry-slot duration distributions.

    ``probs[s, d-1]`` is the probability of duration ``d`` slots for a
    visitor entering slot ``s``; every row sums to one. ``counts[s]`` is the
    number of persons observed entering slot ``s`` before any pooling.
    """

    __slots__ = ("probs", "counts", "d_max", "num_slots")

    def __init__(self, probs: np.ndarray, counts: np.ndarray):
        probs = np.asarray(probs, dtype=float)
        counts = np.asarray(counts, dtype=np.int64)
        if probs.ndim != 2 or probs.shape[1] < 1:
            raise ConfigError("needs shape (num_slots, d_max)", field="probs")
        if counts.shape != (probs.shape[0],):
            raise ConfigError("one count per row required", field="counts")
        if np.any(probs < 0):
            raise ConfigError("negative probability", field="probs")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
            raise ConfigError("rows must sum to 1", field="probs")
        probs = probs.copy()
        probs.setflags(write=False)
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "d_max", probs.shape[1])
        object.__setattr__(self, "num_slots", probs.shape[0])

    def __setattr__(self, name, value):  # immutable after construction
        raise AttributeError("DurationMatrix is immutable")

    def row_mean_slots(self) -> np.ndarray:
        """Expected duration in slots, one value per entry slot."""
        d = np.arange(1, self.d_max + 1, dtype=float)
        return self.probs @ d

    def to_text(self) -> str:
        """Versioned plain-text dump: one row per entry slot."""
        buf = io.StringIO()
        buf.write("# museq duration-matrix v1\n")
        buf.write(f"# num_slots={self.num_slots} d_max={self.d_max}\n")
        header = ",".join(["slot", "n"] + [f"p{d}" for d in range(1, self.d_max + 1)])
        buf.write(header + "\n")
        for s in range(self.num_slots):
            cells = [str(s), str(int(self.counts[s]))]
            cells += [repr(float(v)) for v in self.probs[s]]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "DurationMatrix":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# museq duration-matrix v1"):
            raise ParseError("not a museq duration-matrix v1 file", line=1)
        rows, counts = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#") or line.startswith("slot,"):
                continue
            cells = line.split(",")
            try:
                counts.append(int(cells[1]))
                rows.append([float(c) for c in cells[2:]])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad duration-matrix row: {exc}", line=lineno) from exc
        if not rows:
            raise ParseError("duration-matrix file has no rows")
        return cls(np.array(rows), np.array(counts))


class SurvivalMatrix:
    """Still-inside probabilities ``Q[s][t]`` on the padded horizon.

    ``q`` has shape ``(num_slots, num_slots + d_max - 1)``; ``Q[s][t]`` is
    zero for ``t < s``, one at ``t == s``, nonincreasing in ``t``, and zero
    from ``t >= s + d_max``.
    """

    __slots__ = ("q", "d_max", "num_slots", "horizon")

    def __init__(self, q: np.ndarray, d_max: int):
        q = np.asarray(q, dtype=float)
        num_slots = q.shape[0]
        horizon = num_slots + d_max - 1
        if q.shape != (num_slots, horizon):
            raise ConfigError("survival shape must be (num_slots, num_slots + d_max - 1)",
                              field="q")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d_max", d_max)
        object.__setattr__(self, "num_slots", num_slots)
        object.__setattr__(self, "horizon", horizon)

    def __setattr__(self, name, value):
        raise AttributeError("SurvivalMatrix is immutable")


def survival(matrix: DurationMatrix) -> SurvivalMatrix:
    """Tail-sum the duration rows into still-inside probabilities.

    ``Q[s][s+k]`` is the probability that the duration is at least ``k+1``
    slots, i.e. one minus the cumulative mass through ``k``.
    """
    n, d_max = matrix.num_slots, matrix.d_max
    q = np.zeros((n, n + d_max - 1))
    # tail[k] = P(d >= k+1); tail[0] = 1 exactly by row stochasticity
    cum = np.cumsum(matrix.probs, axis=1)
    tails = np.concatenate([np.ones((n, 1)), 1.0 - cum[:, :-1]], axis=1)
    tails = np.clip(tails, 0.0, 1.0)
    tails[:, 0] = 1.0
    for s in range(n):
        q[s, s:s + d_max] = tails[s]
    return SurvivalMatrix(q, d_max)


def predict_occupancy(entries_per_slot: np.ndarray, q: SurvivalMatrix) -> np.ndarray:
    """Expected persons inside per slot on the padded horizon.

    ``occupancy[t] = sum_{s <= t} entries[s] * Q[s][t]``.
    """
    entries = np.asarray(entries_per_slot, dtype=float)
    if entries.shape != (q.num_slots,):
        raise ConfigError(
            f"entries must have length {q.num_slots}", field="entries_per_slot"
        )
    return entries @ q.q


def predict_exits(entries_per_slot: np.ndarray, matrix: DurationMatrix) -> np.ndarray:
    """Expected exits per slot on the padded horizon.

    A visitor entering ``s`` with duration ``d`` exits during ``s + d - 1``,
    so ``exits[t] = sum_s entries[s] * P[s][t - s + 1]``.
    """
    entries = np.asarray(entries_per_slot, dtype=float)
    n, d_max = matrix.num_slots, matrix.d_max
    if entries.shape != (n,):
        raise ConfigError(f"entries must have length {n}", field="entries_per_slot")
    exits = np.zeros(n + d_max - 1)
    for s in range(n):
        if entries[s] != 0.0:
            exits[s:s + d_max] += entries[s] * matrix.probs[s]
    return exits


def fit_duration_matrix(
    records: list[VisitRecord],
    grid: SlotGrid,
    d_max: int = DEFAULT_D_MAX,
    min_row_samples: int = DEFAULT_MIN_ROW_SAMPLES,
    classes: tuple[SlotClass, ...] | None = None,
) -> DurationMatrix:
    """Empirical per-slot duration histograms with sparse-row pooling.

    Rows are person-weighted histograms. A row with fewer than
    ``min_row_samples`` persons borrows its slot class's pooled histogram;
    a class with no samples at all falls back to the global histogram.
    Durations are clipped to ``d_max`` before counting.
    """
    if not records:
        raise EmptyInputError("cannot fit a duration matrix from zero records")
    if classes is None:
        classes = default_classes(grid)
    n = grid.num_slots
    cls_of_slot = class_index_map(classes, n)

    hist = np.zeros((n, d_max))
    for rec in records:
        if not 0 <= rec.entry_slot < n:
            raise ConfigError(
                f"entry slot {rec.entry_slot} outside grid", field="entry_slot"
            )
        d = min(rec.duration_slots, d_max)
        hist[rec.entry_slot, d - 1] += rec.group_size

    counts = hist.sum(axis=1)
    class_hist = np.zeros((len(classes), d_max))
    for s in range(n):
        class_hist[cls_of_slot[s]] += hist[s]
    class_counts = class_hist.sum(axis=1)
    global_hist = hist.sum(axis=0)
    global_total = global_hist.sum()

    probs = np.zeros((n, d_max))
    for s in range(n):
        if counts[s] >= min_row_samples:
            probs[s] = hist[s] / counts[s]
        elif class_counts[cls_of_slot[s]] > 0:
            ci = cls_of_slot[s]
            probs[s] = class_hist[ci] / class_counts[ci]
        else:
            probs[s] = global_hist / global_total
    return DurationMatrix(probs, counts.astype(np.int64))


def mean_duration(
    matrix: DurationMatrix, slot_class: SlotClass, grid: SlotGrid
) -> float:
    """Sample-weighted mean visit duration in minutes over a class's rows."""
    slots = range(slot_class.start_slot, min(slot_class.end_slot, matrix.num_slots))
    weights = matrix.counts[list(slots)].astype(float)
    if weights.sum() <= 0:
        raise EmptyClassError(f"no samples in class {slot_class.label!r}")
    means = matrix.row_mean_slots()[list(slots)]
    mean_slots = float(np.average(means, weights=weights))
    return mean_slots * grid.slot_length_minutes
