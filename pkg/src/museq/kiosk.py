"""Ticket-kiosk queueing: worst-case waits and fleet sizing.

The fleet is modeled as ``k`` parallel FIFO servers with a fixed service
time per booking. "Waiting time" means time until service starts. The
worst case for sizing is a simultaneous batch of the peak-slot arrivals;
spreading arrivals can only shorten waits.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class KioskFleet:
    """A bank of identical booking kiosks."""

    num_kiosks: int
    service_time: float  # seconds per booking

    def __post_init__(self):
        if self.num_kiosks < 1:
            raise ConfigError("must be >= 1", field="num_kiosks")
        if self.service_time <= 0:
            raise ConfigError("must be positive", field="service_time")


def worst_case_wait(arrivals: int, fleet: KioskFleet) -> float:
    """Wait until service start of the last person in a simultaneous batch.

    With FIFO order and fixed service time the last of ``A`` arrivals waits
    ``floor((A - 1) / k)`` full service rounds.
    """
    if arrivals < 1:
        raise ConfigError("must be >= 1", field="arrivals")
    return ((arrivals - 1) // fleet.num_kiosks) * fleet.service_time


def min_kiosks(peak_arrivals: int, service_time: float, max_wait: float) -> int:
    """Smallest fleet keeping the worst-case wait at or below ``max_wait``.

    ``k = peak_arrivals`` always suffices (zero wait), so the scan is finite.
    """
    if peak_arrivals < 1:
        raise ConfigError("must be >= 1", field="peak_arrivals")
    if service_time <= 0:
        raise ConfigError("must be positive", field="service_time")
    if max_wait < 0:
        raise ConfigError("must be nonnegative", field="max_wait")
    for k in range(1, peak_arrivals + 1):
        fleet = KioskFleet(k, service_time)
        if worst_case_wait(peak_arrivals, fleet) <= max_wait:
            return k
    return peak_arrivals


def simulate_kiosk_queue(
    arrival_times: list[float], fleet: KioskFleet
) -> tuple[list[float], dict]:
    """Event-driven FIFO multi-server simulation with fixed service time.

    Returns per-person waits (same order as arrivals) and a summary dict.
    Arrival times must be sorted nondecreasing.
    """
    waits: list[float] = []
    servers = [0.0] * fleet.num_kiosks  # next-free times
    heapq.heapify(servers)
    last = None
    for t in arrival_times:
        if last is not None and t < last:
            raise ConfigError("must be sorted nondecreasing", field="arrival_times")
        last = t
        free_at = heapq.heappop(servers)
        start = max(t, free_at)
        waits.append(start - t)
        heapq.heappush(servers, start + fleet.service_time)
    if waits:
        summary = {
            "max": max(waits),
            "mean": sum(waits) / len(waits),
        }
    else:
        summary = {"max": 0.0, "mean": 0.0}
    return waits, summary
