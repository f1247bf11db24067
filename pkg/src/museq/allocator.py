"""Occupancy-capped ticket allocation: exact integer optimization.

The program solved here: maximize the (optionally demand-weighted) number of
issuable tickets per entry slot, subject to (a) expected occupancy at every
slot of the padded horizon staying at or below the occupancy cap, where
occupancy is admissions convolved with the survival matrix and scaled by the
planning show rate, and (b) expected entries per slot staying at or below
the entry cap. Among plans with the optimal objective the solver returns
the lexicographically greatest one reading slot 0 upward.

Overbooking is realized here implicitly: tickets ``x`` are divided down by
the planning show rate inside every constraint, so a slot expecting
no-shows can carry more paper tickets than bodies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._simplex import INFEASIBLE, OPTIMAL, BoundedSimplex
from .durations import SurvivalMatrix, predict_occupancy
from .errors import ConfigError, InstanceTooLargeError, ShapeMismatchError, SolverError
from .timegrid import SlotGrid

_TOL = 1e-6
_BRUTE_MAX_SLOTS = 6
_BRUTE_MAX_ISSUE = 8


@dataclass(frozen=True)
class AllocationProblem:
    """The admission-maximization instance for one planning horizon."""

    grid: SlotGrid
    survival: SurvivalMatrix
    occupancy_cap: float
    entry_cap: float
    show_rate: np.ndarray  # planning show probability per slot, in (0, 1]
    committed: np.ndarray  # persons already issued per slot, fixed
    issue_limit: int  # per-slot upper bound on newly issuable persons
    issue_limits: np.ndarray | None = None  # per-slot override (e.g. frozen past)
    base_load: np.ndarray | None = None  # occupancy from already-entered visitors
    demand_weight: np.ndarray | None = None  # objective weights, default 1
    constrain_from: int = 0  # occupancy rows before this slot are history
    committed_shows: np.ndarray | None = None  # expected bodies from committed

    def __post_init__(self):
        n = self.grid.num_slots
        show = np.asarray(self.show_rate, dtype=float)
        committed = np.asarray(self.committed, dtype=float)
        object.__setattr__(self, "show_rate", show)
        object.__setattr__(self, "committed", committed)
        if self.survival.num_slots != n:
            raise ShapeMismatchError("survival matrix does not match the grid")
        if show.shape != (n,):
            raise ShapeMismatchError("show_rate must have one entry per slot")
        if committed.shape != (n,):
            raise ShapeMismatchError("committed must have one entry per slot")
        if self.occupancy_cap < 0:
            raise ConfigError("must be nonnegative", field="occupancy_cap")
        if self.entry_cap < 0:
            raise ConfigError("must be nonnegative", field="entry_cap")
        if self.issue_limit < 0:
            raise ConfigError("must be nonnegative", field="issue_limit")
        if np.any(show <= 0) or np.any(show > 1):
            raise ConfigError("must lie in (0, 1]", field="show_rate")
        if np.any(committed < 0):
            raise ConfigError("must be nonnegative", field="committed")
        if self.issue_limits is not None:
            lims = np.asarray(self.issue_limits, dtype=float)
            if lims.shape != (n,):
                raise ShapeMismatchError("issue_limits must have one entry per slot")
            if np.any(lims < 0):
                raise ConfigError("must be nonnegative", field="issue_limits")
            object.__setattr__(self, "issue_limits", lims)
        if self.base_load is not None:
            load = np.asarray(self.base_load, dtype=float)
            if load.shape != (self.survival.horizon,):
                raise ShapeMismatchError("base_load must cover the padded horizon")
            object.__setattr__(self, "base_load", load)
        if self.demand_weight is not None:
            w = np.asarray(self.demand_weight, dtype=float)
            if w.shape != (n,):
                raise ShapeMismatchError("demand_weight must have one entry per slot")
            object.__setattr__(self, "demand_weight", w)
        if not 0 <= self.constrain_from <= self.survival.horizon:
            raise ConfigError("outside the padded horizon", field="constrain_from")
        if self.committed_shows is not None:
            shows = np.asarray(self.committed_shows, dtype=float)
            if shows.shape != (n,):
                raise ShapeMismatchError("committed_shows must have one entry per slot")
            if np.any(shows < 0):
                raise ConfigError("must be nonnegative", field="committed_shows")
            object.__setattr__(self, "committed_shows", shows)

    # -- derived pieces shared by solver, brute force and verifier ---------

    def occupancy_columns(self) -> np.ndarray:
        """Per-ticket expected occupancy contribution: p[s] * Q[s, :]."""
        return self.survival.q * self.show_rate[:, None]

    def committed_entries(self) -> np.ndarray:
        """Expected bodies from already-issued tickets.

        Defaults to the planning rate applied to committed counts; a replan
        passes the booking-time expectations instead so old tickets are not
        repriced at today's gap.
        """
        if self.committed_shows is not None:
            return self.committed_shows
        return self.show_rate * self.committed

    def fixed_load(self) -> np.ndarray:
        """Occupancy already spoken for: base load plus committed tickets."""
        load = self.committed_entries() @ self.survival.q
        if self.base_load is not None:
            load = load + self.base_load
        return load

    def issue_bounds(self) -> np.ndarray:
        """Per-slot upper bounds from the issue limit and the entry cap."""
        lims = (
            np.full(self.grid.num_slots, float(self.issue_limit))
            if self.issue_limits is None
            else self.issue_limits.copy()
        )
        entry_room = (self.entry_cap - self.committed_entries()) / self.show_rate
        return np.minimum(lims, np.floor(entry_room + _TOL))

    def weights(self) -> np.ndarray:
        if self.demand_weight is None:
            return np.ones(self.grid.num_slots)
        return self.demand_weight


@dataclass(frozen=True)
class AllocationPlan:
    """Solved per-slot availability, with the occupancy profile it implies."""

    x: np.ndarray  # issuable persons per slot, nonnegative integers
    objective: float
    predicted_occupancy: np.ndarray  # padded horizon, includes fixed load
    feasible: bool

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        x.setflags(write=False)
        occ = np.asarray(self.predicted_occupancy, dtype=float)
        occ.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "predicted_occupancy", occ)


def _degraded_plan(problem: AllocationProblem) -> AllocationPlan:
    """Zero plan returned when the committed load alone breaks a cap."""
    return AllocationPlan(
        x=np.zeros(problem.grid.num_slots, dtype=np.int64),
        objective=0.0,
        predicted_occupancy=problem.fixed_load(),
        feasible=False,
    )


def solve_allocation(problem: AllocationProblem) -> AllocationPlan:
    """Exact optimum of the admission program, earliest-slot-greatest ties.

    Deterministic. Committed load that already violates a cap yields a
    zero plan flagged infeasible rather than an exception.
    """
    n = problem.grid.num_slots
    ub = problem.issue_bounds()
    if np.any(ub < 0):
        return _degraded_plan(problem)
    cols = problem.occupancy_columns()  # (n, horizon)
    # committed oversell degrades the plan; load from visitors already
    # inside may transiently exceed the cap (reality outran the model), in
    # which case those rows simply admit nobody new until they drain
    committed_load = problem.committed_entries() @ problem.survival.q
    if np.any(
        (problem.occupancy_cap - committed_load)[problem.constrain_from:] < -_TOL
    ):
        return _degraded_plan(problem)
    rhs = problem.occupancy_cap - problem.fixed_load()
    rhs = np.maximum(rhs, 0.0)

    # keep only future occupancy rows that could bind at the issue bounds
    peak = cols.T @ ub
    keep = peak > rhs + _TOL
    keep[: problem.constrain_from] = False
    A = cols.T[keep].copy()
    b = rhs[keep].copy()

    # integer-preserving tightening: a row whose nonzero coefficients are
    # all equal is sum(x) * p <= b, and sum(x) is integer, so the rhs may
    # be divided through and floored without losing any integer plan
    for r in range(A.shape[0]):
        nz = A[r] > _TOL
        if not nz.any():
            continue
        vals = A[r][nz]
        lead = vals[0]
        if np.all(np.abs(vals - lead) <= 1e-12 * lead):
            A[r][nz] = 1.0
            b[r] = np.floor(b[r] / lead + 1e-9)

    w = problem.weights()
    x = _ExactSearch(A, b, ub.astype(np.int64), w).run()

    entries = problem.show_rate * x + problem.committed_entries()
    occupancy = entries @ problem.survival.q
    if problem.base_load is not None:
        occupancy = occupancy + problem.base_load
    return AllocationPlan(
        x=x, objective=float(w @ x), predicted_occupancy=occupancy, feasible=True
    )


class _ExactSearch:
    """Branch-and-bound over the rational relaxation plus lex extraction.

    Phase 1 establishes the optimal objective value; phase 2 walks slots
    left to right fixing each variable at the largest value from which the
    remaining slots can still integer-complete the optimum. A greedy
    completion check ends the walk early: once plain greedy attains the
    required remainder it is itself the lexicographically greatest tail.
    """

    MAX_LP_SOLVES = 60_000

    def __init__(self, A: np.ndarray, b: np.ndarray, ub: np.ndarray, w: np.ndarray):
        self.A = A
        self.b = b
        self.ub = ub
        self.w = w
        self.n = ub.shape[0]
        self.m = A.shape[0]
        self.unit = bool(np.all(w == 1.0))
        self._solves = 0

    # -- plain greedy: fill slots in order to their residual caps ----------

    def greedy_tail(self, start: int, b_res: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n - start, dtype=np.int64)
        res = b_res.copy()
        for k, s in enumerate(range(start, self.n)):
            col = self.A[:, s]
            cap = float(self.ub[s])
            mask = col > _TOL
            if mask.any():
                cap = min(cap, float(np.min(res[mask] / col[mask])))
            v = int(np.floor(cap + _TOL))
            if v > 0:
                out[k] = v
                res -= col * v
        return out

    def _lp(self) -> BoundedSimplex:
        lp = BoundedSimplex(self.A, self.b, np.zeros(self.n), self.ub.astype(float))
        return lp

    def _solve(self, lp: BoundedSimplex) -> int:
        self._solves += 1
        if self._solves > self.MAX_LP_SOLVES:
            raise SolverError("allocation search budget exhausted")
        return lp.solve()

    def run(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=np.int64)
        greedy = self.greedy_tail(0, self.b)
        if self.m == 0:
            return self.ub.copy()  # box constraints only; lex-max is the box
        lp = self._lp()
        lp.set_objective(self.w)
        if self._solve(lp) != OPTIMAL:
            raise SolverError("root relaxation infeasible for a checked problem")
        bound = lp.objective()
        greedy_val = float(self.w @ greedy)
        if self.unit and greedy_val >= np.floor(bound + _TOL):
            return greedy  # greedy is optimal, hence also the lex-greatest optimum
        best = self._bnb_value(lp, greedy_val)
        if self.unit and greedy_val >= best:
            return greedy
        return self._lex_extract(best)

    # -- phase 1: optimal value ---------------------------------------------

    def _bnb_value(self, root_lp: BoundedSimplex, incumbent: float) -> float:
        stack = [root_lp.save_state()]
        lp = root_lp
        best = incumbent
        while stack:
            state = stack.pop()
            lp.restore_state(state)
            if self._solve(lp) != OPTIMAL:
                continue
            bound = lp.objective()
            if self.unit:
                if np.floor(bound + _TOL) <= best:
                    continue
            elif bound <= best + 1e-9:
                continue
            x = lp.x()
            frac = np.abs(x - np.round(x))
            j = int(np.argmax(frac))
            if frac[j] <= 1e-7:
                best = max(best, float(self.w @ np.round(x)))
                continue
            # rounding repair: floor is feasible because coefficients are >= 0
            floor_x = np.floor(x + 1e-9).astype(np.int64)
            res = self.b - self.A @ floor_x
            repair = floor_x + 0
            for s in range(self.n):
                col = self.A[:, s]
                room = float(self.ub[s] - repair[s])
                mask = col > _TOL
                if mask.any():
                    room = min(room, float(np.min(res[mask] / col[mask])))
                add = int(np.floor(room + _TOL))
                if add > 0:
                    repair[s] += add
                    res -= col * add
            best = max(best, float(self.w @ repair))
            lo_state = lp.save_state()
            lp.set_var_bounds(j, float(np.ceil(x[j])), float(self.ub[j]))
            stack.append(lp.save_state())
            lp.restore_state(lo_state)
            lp.set_var_bounds(j, 0.0, float(np.floor(x[j])))
            stack.append(lp.save_state())
        return best

    # -- phase 2: lexicographically greatest optimum -------------------------

    def _lex_extract(self, vstar: float) -> np.ndarray:
        lp = self._lp()
        # keep every visited prefix on the optimal face: w @ x >= vstar
        lp.add_row(-self.w, -(vstar - 1e-6))
        out = np.zeros(self.n, dtype=np.int64)
        got = self._descend(lp, 0, self.b.copy(), vstar, out)
        if not got:
            raise SolverError("lex extraction failed to reproduce the optimum")
        return out

    def _descend(
        self,
        lp: BoundedSimplex,
        level: int,
        b_res: np.ndarray,
        needed: float,
        out: np.ndarray,
    ) -> bool:
        if level == self.n:
            return abs(needed) <= 1e-6
        obj = np.zeros(self.n)
        obj[level] = 1.0
        lp.set_objective(obj)
        if self._solve(lp) != OPTIMAL:
            return False
        v = int(np.floor(lp.x()[level] + 1e-7))
        col = self.A[:, level]
        while v >= 0:
            state = lp.save_state()
            lp.set_var_bounds(level, float(v), float(v))
            tail_res = b_res - col * v
            tail = self.greedy_tail(level + 1, tail_res)
            tail_need = needed - self.w[level] * v
            if float(self.w[level + 1:] @ tail) >= tail_need - 1e-6:
                out[level] = v
                out[level + 1:] = tail
                return True
            if self._solve(lp) == OPTIMAL:
                out[level] = v
                if self._descend(lp, level + 1, tail_res, tail_need, out):
                    return True
            lp.restore_state(state)
            v -= 1
        return False


def brute_force_allocation(problem: AllocationProblem) -> AllocationPlan:
    """Exhaustive oracle: every integer plan, same objective and tie-break.

    Guarded to tiny instances; raises InstanceTooLargeError beyond the guard.
    """
    n = problem.grid.num_slots
    if n > _BRUTE_MAX_SLOTS or problem.issue_limit > _BRUTE_MAX_ISSUE:
        raise InstanceTooLargeError(
            f"brute force is guarded to <= {_BRUTE_MAX_SLOTS} slots "
            f"and issue_limit <= {_BRUTE_MAX_ISSUE}"
        )
    ub = problem.issue_bounds()
    if np.any(ub < 0):
        return _degraded_plan(problem)
    cols = problem.occupancy_columns()
    committed_load = problem.committed_entries() @ problem.survival.q
    if np.any(
        (problem.occupancy_cap - committed_load)[problem.constrain_from:] < -_TOL
    ):
        return _degraded_plan(problem)
    rhs = np.maximum(problem.occupancy_cap - problem.fixed_load(), 0.0)

    # descending per-axis ranges make C-order enumeration lex-descending,
    # so the first argmax below is the lexicographically greatest optimum
    axes = [np.arange(min(int(u), problem.issue_limit), -1, -1) for u in ub]
    grids = np.meshgrid(*axes, indexing="ij")
    plans = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    load = plans @ cols[:, problem.constrain_from:]
    feasible = np.all(load <= rhs[None, problem.constrain_from:] + _TOL, axis=1)
    w = problem.weights()
    values = plans @ w
    values[~feasible] = -np.inf
    idx = int(np.argmax(values))
    x = plans[idx]
    entries = problem.show_rate * x + problem.committed_entries()
    occupancy = entries @ problem.survival.q
    if problem.base_load is not None:
        occupancy = occupancy + problem.base_load
    return AllocationPlan(
        x=x, objective=float(w @ x), predicted_occupancy=occupancy, feasible=True
    )


def verify_plan(
    problem: AllocationProblem, plan: AllocationPlan
) -> tuple[np.ndarray, bool]:
    """Recompute the occupancy profile from scratch and re-check every cap.

    Uses the duration module's occupancy predictor rather than the solver's
    internal accumulation, so the check is an independent path.
    """
    n = problem.grid.num_slots
    x = np.asarray(plan.x, dtype=float)
    if x.shape != (n,):
        raise ShapeMismatchError("plan does not match the problem's grid")
    entries = problem.show_rate * x + problem.committed_entries()
    occupancy = predict_occupancy(entries, problem.survival)
    if problem.base_load is not None:
        occupancy = occupancy + problem.base_load
    # rows the fixed load already saturates admit no new contribution;
    # elsewhere the cap itself must hold
    allowed = np.maximum(problem.occupancy_cap, problem.fixed_load())
    span = slice(problem.constrain_from, None)
    ok = bool(
        np.all(occupancy[span] <= allowed[span] + _TOL)
        and np.all(entries <= problem.entry_cap + _TOL)
        and np.all(plan.x >= 0)
        and np.all(plan.x <= problem.issue_bounds() + _TOL)
    )
    return occupancy, ok


def replan(current_slot: int, state) -> AllocationPlan:
    """Re-solve the remaining horizon with sold tickets fixed as commitments.

    ``state`` is the knowledge base: realized entries for slots already
    begun contribute their survival-weighted load; future slots carry their
    sold tickets as committed persons. Slots at or before ``current_slot``
    are frozen (no new issuance).
    """
    grid = state.grid
    n = grid.num_slots
    q = state.survival
    first_future = max(current_slot + 1, 0)
    show = state.planning_show_rate(first_future)
    committed = np.zeros(n)
    committed[first_future:] = state.sold[first_future:]
    # tickets already sold keep the show expectation they were priced at
    # when booked; only new issuance is priced at today's gap
    committed_shows = np.zeros(n)
    committed_shows[first_future:] = state.committed_shows[first_future:]
    # the issue limit caps each slot's total release, committed included
    limits = np.zeros(n)
    limits[first_future:] = np.maximum(
        state.issue_limits[first_future:] - state.sold[first_future:], 0.0
    )
    entered = np.zeros(n)
    entered[:first_future] = state.entered[:first_future]
    base_load = entered @ q.q
    problem = AllocationProblem(
        grid=grid,
        survival=q,
        occupancy_cap=state.occupancy_cap,
        entry_cap=state.entry_cap,
        show_rate=show,
        committed=committed,
        issue_limit=state.issue_limit,
        issue_limits=limits,
        base_load=base_load,
        constrain_from=first_future,
        committed_shows=committed_shows,
    )
    return solve_allocation(problem)
