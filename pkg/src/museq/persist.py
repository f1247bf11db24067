"""File formats: event logs, model dumps, allocation problems and plans.

Event logs are line-delimited JSON with a stable field order so byte-level
determinism checks are meaningful. Model dumps carry full-precision floats
(they round-trip); report CSVs elsewhere use fixed precision instead.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .allocator import AllocationPlan, AllocationProblem
from .durations import DurationMatrix, SurvivalMatrix
from .errors import ParseError
from .mapek import Event
from .noshow import NoShowModel
from .timegrid import SlotGrid

_EVENT_FIELDS = ("ts", "kind", "slot", "group_size", "gap_slots", "anon_tag")


def event_to_line(event: Event) -> str:
    doc = {
        "ts": event.ts,
        "kind": event.kind,
        "slot": event.slot,
        "group_size": event.group_size,
        "gap_slots": event.gap_slots,
        "anon_tag": event.anon_tag,
    }
    return json.dumps(doc, separators=(",", ":"))


def write_events(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(event_to_line(ev) + "\n")


def load_events(path) -> list[Event]:
    """Parse and validate an event log; timestamps must be nondecreasing."""
    events: list[Event] = []
    last_ts = float("-inf")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            unknown = set(doc) - set(_EVENT_FIELDS)
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", line=lineno)
            try:
                event = Event(
                    ts=float(doc["ts"]),
                    kind=str(doc["kind"]),
                    slot=int(doc["slot"]),
                    group_size=int(doc.get("group_size", 1)),
                    gap_slots=(
                        None if doc.get("gap_slots") is None else int(doc["gap_slots"])
                    ),
                    anon_tag=(
                        None if doc.get("anon_tag") is None else str(doc["anon_tag"])
                    ),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad event record: {exc}", line=lineno) from exc
            except Exception as exc:  # invariant violations from Event itself
                raise ParseError(f"bad event record: {exc}", line=lineno) from exc
            if event.ts < last_ts:
                raise ParseError(
                    f"timestamp {event.ts} out of order (previous {last_ts})",
                    line=lineno,
                )
            last_ts = event.ts
            events.append(event)
    return events


def write_duration_matrix(matrix: DurationMatrix, path) -> None:
    Path(path).write_text(matrix.to_text(), encoding="utf-8")


def load_duration_matrix(path) -> DurationMatrix:
    return DurationMatrix.from_text(Path(path).read_text(encoding="utf-8"))


def write_noshow_model(model: NoShowModel, path) -> None:
    Path(path).write_text(model.to_text(), encoding="utf-8")


def load_noshow_model(path) -> NoShowModel:
    return NoShowModel.from_text(Path(path).read_text(encoding="utf-8"))


# -- allocation problems and plans --------------------------------------------


def problem_to_text(problem: AllocationProblem) -> str:
    """Plain-text dump of an allocation instance.

    The survival matrix is stored as each entry slot's nonzero band (the
    ``d_max`` values starting at the diagonal).
    """
    n = problem.grid.num_slots
    lines = ["# museq allocation-problem v1"]
    lines.append(
        f"grid: {problem.grid.slot_length_minutes} {n} {problem.grid.opening_minute}"
    )
    lines.append(f"d_max: {problem.survival.d_max}")
    lines.append(f"occupancy_cap: {problem.occupancy_cap!r}")
    lines.append(f"entry_cap: {problem.entry_cap!r}")
    lines.append(f"issue_limit: {problem.issue_limit}")
    lines.append(f"constrain_from: {problem.constrain_from}")
    header = "slot,show_rate,committed,limit,weight,committed_shows"
    lines.append(header)
    lims = problem.issue_limits
    w = problem.demand_weight
    cs = problem.committed_shows
    for s in range(n):
        lines.append(
            ",".join(
                [
                    str(s),
                    repr(float(problem.show_rate[s])),
                    repr(float(problem.committed[s])),
                    "-" if lims is None else repr(float(lims[s])),
                    "-" if w is None else repr(float(w[s])),
                    "-" if cs is None else repr(float(cs[s])),
                ]
            )
        )
    lines.append("survival_band:")
    for s in range(n):
        band = problem.survival.q[s, s:s + problem.survival.d_max]
        lines.append(",".join(repr(float(v)) for v in band))
    if problem.base_load is not None:
        lines.append("base_load:")
        lines.append(",".join(repr(float(v)) for v in problem.base_load))
    return "\n".join(lines) + "\n"


def problem_from_text(text: str) -> AllocationProblem:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# museq allocation-problem v1"):
        raise ParseError("not a museq allocation-problem v1 file", line=1)
    meta = {}
    idx = 1
    while idx < len(lines) and ":" in lines[idx] and not lines[idx].startswith("slot,"):
        key, _, value = lines[idx].partition(":")
        meta[key.strip()] = value.strip()
        idx += 1
    try:
        length, n, opening = (int(v) for v in meta["grid"].split())
        d_max = int(meta["d_max"])
        grid = SlotGrid(length, n, opening)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad problem header: {exc}", line=idx) from exc
    if idx >= len(lines) or not lines[idx].startswith("slot,"):
        raise ParseError("missing per-slot table", line=idx + 1)
    idx += 1
    show = np.ones(n)
    committed = np.zeros(n)
    lims = np.full(n, np.nan)
    weights = np.full(n, np.nan)
    shows = np.full(n, np.nan)
    for s in range(n):
        lineno = idx + 1
        try:
            cells = lines[idx].split(",")
            show[s] = float(cells[1])
            committed[s] = float(cells[2])
            lims[s] = np.nan if cells[3] == "-" else float(cells[3])
            weights[s] = np.nan if cells[4] == "-" else float(cells[4])
            shows[s] = np.nan if cells[5] == "-" else float(cells[5])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad slot row: {exc}", line=lineno) from exc
        idx += 1
    if idx >= len(lines) or lines[idx] != "survival_band:":
        raise ParseError("missing survival_band section", line=idx + 1)
    idx += 1
    q = np.zeros((n, n + d_max - 1))
    for s in range(n):
        lineno = idx + 1
        try:
            band = [float(v) for v in lines[idx].split(",")]
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad survival band: {exc}", line=lineno) from exc
        if len(band) != d_max:
            raise ParseError(f"band needs {d_max} values", line=lineno)
        q[s, s:s + d_max] = band
        idx += 1
    base = None
    if idx < len(lines) and lines[idx] == "base_load:":
        idx += 1
        base = np.array([float(v) for v in lines[idx].split(",")])
        idx += 1
    return AllocationProblem(
        grid=grid,
        survival=SurvivalMatrix(q, d_max),
        occupancy_cap=float(meta["occupancy_cap"]),
        entry_cap=float(meta["entry_cap"]),
        show_rate=show,
        committed=committed,
        issue_limit=int(meta["issue_limit"]),
        issue_limits=None if np.isnan(lims).all() else np.nan_to_num(lims),
        base_load=base,
        demand_weight=None if np.isnan(weights).all() else np.nan_to_num(weights),
        constrain_from=int(meta.get("constrain_from", 0)),
        committed_shows=None if np.isnan(shows).all() else np.nan_to_num(shows),
    )


def plan_to_text(plan: AllocationPlan) -> str:
    lines = ["# museq allocation-plan v1"]
    lines.append(f"objective: {plan.objective!r}")
    lines.append(f"feasible: {str(plan.feasible).lower()}")
    lines.append("x: " + ",".join(str(int(v)) for v in plan.x))
    lines.append(
        "predicted_occupancy: "
        + ",".join(f"{v:.3f}" for v in plan.predicted_occupancy)
    )
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> AllocationPlan:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# museq allocation-plan v1"):
        raise ParseError("not a museq allocation-plan v1 file", line=1)
    meta = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    try:
        return AllocationPlan(
            x=np.array([int(v) for v in meta["x"].split(",")]),
            objective=float(meta["objective"]),
            predicted_occupancy=np.array(
                [float(v) for v in meta["predicted_occupancy"].split(",")]
            ),
            feasible=meta["feasible"] == "true",
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad plan file: {exc}") from exc


def write_problem(problem: AllocationProblem, path) -> None:
    Path(path).write_text(problem_to_text(problem), encoding="utf-8")


def load_problem(path) -> AllocationProblem:
    return problem_from_text(Path(path).read_text(encoding="utf-8"))


def write_plan(plan: AllocationPlan, path) -> None:
    Path(path).write_text(plan_to_text(plan), encoding="utf-8")


def load_plan(path) -> AllocationPlan:
    return plan_from_text(Path(path).read_text(encoding="utf-8"))
