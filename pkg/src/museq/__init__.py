"""Adaptive museum queue management: occupancy-constrained ticket-slot
allocation, no-show-aware overbooking, kiosk fleet sizing, and a MAPE-K
adaptation loop, validated against a built-in discrete-event visitor
simulator."""

from .allocator import (
    AllocationPlan,
    AllocationProblem,
    brute_force_allocation,
    replan,
    solve_allocation,
    verify_plan,
)
from .durations import (
    DurationMatrix,
    SurvivalMatrix,
    VisitRecord,
    fit_duration_matrix,
    mean_duration,
    predict_exits,
    predict_occupancy,
    survival,
)
from .kiosk import KioskFleet, min_kiosks, simulate_kiosk_queue, worst_case_wait
from .mapek import (
    DriftConfig,
    Event,
    KnowledgeBase,
    analyze,
    execute,
    monitor,
    plan,
    replay_log,
    tick,
)
from .noshow import (
    NoShowModel,
    TicketRecord,
    daily_noshow_rate,
    fit_noshow,
    overbooking_limit,
    predict_noshow,
)
from .scenario import (
    DayContext,
    DriftInjection,
    PolicyConfig,
    ScenarioConfig,
    SlotClass,
    SlotGrid,
    compact_drift_scenario,
    default_scenario,
    deterministic_safety_scenario,
    five_day_policy_schedule,
    load_scenario,
    save_scenario,
    stochastic_noshow_safety_scenario,
)
from .simulator import (
    QoESummary,
    SimResult,
    build_knowledge_base,
    generate_records,
    qoe_summary,
    run_day,
    run_days,
)
from .timegrid import class_of, default_classes

__version__ = "0.1.0"
