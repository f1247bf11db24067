"""Report bundle emission and summary-table generation.

A bundle is one directory per run: a manifest that pins the inputs, the
per-slot CSV series, a daily summary, the event log, the final models, and
the scenario that produced it. Numeric formats are fixed precision
(occupancy three decimals, rates four) so byte-level determinism checks
mean something. A bundle interrupted mid-write leaves a FAILED marker.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import persist
from .durations import predict_exits
from .errors import ParseError
from .mapek import KnowledgeBase
from .scenario import ScenarioConfig, scenario_to_dict, save_scenario
from .simulator import SimResult, qoe_summary

ARTIFACT_VERSION = "museq/0.1.0"


def scenario_digest(cfg: ScenarioConfig) -> str:
    blob = json.dumps(scenario_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_bundle(
    outdir,
    cfg: ScenarioConfig,
    results: list[SimResult],
    kb: KnowledgeBase,
) -> Path:
    """Write a complete ReportBundle; never leaves a silent partial."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _write_bundle_inner(out, cfg, results, kb)
    except Exception:
        (out / "FAILED").write_text("bundle emission failed\n", encoding="utf-8")
        raise
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    return out


def _write_bundle_inner(out: Path, cfg, results, kb) -> None:
    manifest = {
        "format": "museq-bundle/1",
        "artifact_version": ARTIFACT_VERSION,
        "config_sha256": scenario_digest(cfg),
        "seed": cfg.seed,
        "days": len(results),
        "final_model_version": kb.version,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    save_scenario(cfg, out / "scenario.yaml")

    with open(out / "slots.csv", "w", encoding="utf-8") as fh:
        fh.write("day,slot,availability,sales,entries,exits,occupancy\n")
        for res in results:
            for s in range(cfg.grid.num_slots):
                fh.write(
                    f"{res.day_index},{s},{res.availability[s]},{res.sales[s]},"
                    f"{res.entries[s]},{res.exits[s]},{res.occupancy[s]:.3f}\n"
                )

    with open(out / "daily_summary.csv", "w", encoding="utf-8") as fh:
        fh.write(
            "day,arrivals,issued,shows,noshows,noshow_rate,rejections,"
            "rejection_fraction,mean_wait_s,max_wait_s,p95_wait_s,"
            "mean_gap_slots,model_version\n"
        )
        for res in results:
            q = qoe_summary(res)
            fh.write(
                f"{res.day_index},{res.arrivals},{res.issued},{res.shows},"
                f"{res.noshows},{_rate(q.noshow_rate)},{res.rejections},"
                f"{_rate(q.rejection_fraction)},{_sec(q.mean_wait)},"
                f"{_sec(q.max_wait)},{_sec(q.p95_wait)},"
                f"{_rate(q.mean_gap_slots)},{res.model_version_end}\n"
            )

    events = [ev for res in results for ev in res.events]
    persist.write_events(events, out / "events.jsonl")

    models = out / "models"
    models.mkdir(exist_ok=True)
    persist.write_duration_matrix(kb.duration_matrix, models / "duration_matrix.txt")
    persist.write_noshow_model(kb.noshow_model, models / "noshow_model.txt")


def _rate(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.4f}"


def _sec(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.3f}"


# -- summary tables over existing bundles -------------------------------------


def _read_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path.name} is empty")
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def emit_report(bundle_dir, outdir) -> Path:
    """Condense a bundle into the four summary tables reports rely on:
    daily visitor series, dwell histogram, predicted-vs-realized exits,
    and no-shows by visit slot."""
    bundle = Path(bundle_dir)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    if not (bundle / "manifest.json").exists():
        raise ParseError(f"{bundle} is not a report bundle (no manifest.json)")

    daily = _read_csv(bundle / "daily_summary.csv")
    with open(out / "daily_visitors.csv", "w", encoding="utf-8") as fh:
        fh.write("day,issued,shows,noshows,noshow_rate\n")
        for row in daily:
            fh.write(
                f"{row['day']},{row['issued']},{row['shows']},"
                f"{row['noshows']},{row['noshow_rate']}\n"
            )

    events = persist.load_events(bundle / "events.jsonl")

    # dwell histogram from entry/exit pairs
    opened: dict[str, int] = {}
    counts: dict[int, int] = {}
    for ev in events:
        if ev.kind == "entry":
            opened[ev.anon_tag] = ev.slot
        elif ev.kind == "exit" and ev.anon_tag in opened:
            d = ev.slot - opened.pop(ev.anon_tag) + 1
            counts[d] = counts.get(d, 0) + ev.group_size
    matrix = persist.load_duration_matrix(bundle / "models" / "duration_matrix.txt")
    grid_minutes = _grid_minutes(bundle)
    with open(out / "duration_histogram.csv", "w", encoding="utf-8") as fh:
        fh.write("duration_slots,duration_minutes,persons\n")
        for d in range(1, max(matrix.d_max, max(counts, default=1)) + 1):
            fh.write(f"{d},{d * grid_minutes},{counts.get(d, 0)}\n")

    # predicted vs realized exits, averaged across the bundle's days
    slots_rows = _read_csv(bundle / "slots.csv")
    days = sorted({int(r["day"]) for r in slots_rows})
    num_slots = 1 + max(int(r["slot"]) for r in slots_rows)
    entries = np.zeros((len(days), num_slots))
    exits = np.zeros((len(days), num_slots))
    for r in slots_rows:
        entries[days.index(int(r["day"])), int(r["slot"])] = float(r["entries"])
        exits[days.index(int(r["day"])), int(r["slot"])] = float(r["exits"])
    predicted = np.zeros(num_slots)
    for k in range(len(days)):
        predicted += predict_exits(entries[k], matrix)[:num_slots]
    predicted /= len(days)
    realized = exits.mean(axis=0)
    with open(out / "exits_comparison.csv", "w", encoding="utf-8") as fh:
        fh.write("slot,predicted_exits,realized_exits\n")
        for s in range(num_slots):
            fh.write(f"{s},{predicted[s]:.3f},{realized[s]:.3f}\n")

    # no-show counts by visit slot
    issued = np.zeros(num_slots, dtype=np.int64)
    missed = np.zeros(num_slots, dtype=np.int64)
    for ev in events:
        if ev.kind == "booking":
            issued[ev.slot] += ev.group_size
        elif ev.kind == "noshow":
            missed[ev.slot] += ev.group_size
    with open(out / "noshow_by_slot.csv", "w", encoding="utf-8") as fh:
        fh.write("slot,issued,noshows,noshow_rate\n")
        for s in range(num_slots):
            rate = missed[s] / issued[s] if issued[s] else 0.0
            fh.write(f"{s},{issued[s]},{missed[s]},{rate:.4f}\n")
    return out


def _grid_minutes(bundle: Path) -> int:
    import yaml

    with open(bundle / "scenario.yaml", "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return int(doc["grid"]["slot_length_minutes"])
