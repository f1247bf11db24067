"""Dense bounded-variable simplex for small packing LPs.

Solves ``maximize c @ x  subject to  A @ x <= b,  lo <= x <= hi`` for the
instance sizes the allocator produces (tens of variables and rows). The
point of rolling our own instead of calling an external solver is warm
restarts: the allocation search fixes one variable bound at a time and
re-solves, which the dual simplex repairs in a handful of pivots.

Cold restarts begin from the slack basis; when the all-lower-bound point is
infeasible a zero-objective dual pass restores feasibility first. Slack
variables never have finite upper bounds.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2

OPTIMAL, INFEASIBLE = 0, 1

_FEAS_TOL = 1e-7
_DJ_TOL = 1e-9
_PIV_TOL = 1e-10


class BoundedSimplex:
    """Mutable LP workspace supporting bound changes and objective swaps."""

    def __init__(self, A: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2:
            raise ValueError("A must be 2-D")
        self.m, self.n = A.shape
        self.N = self.n + self.m
        self.G = np.hstack([A, np.eye(self.m)]) if self.m else A.reshape(0, self.n)
        if self.m:
            self.G = np.ascontiguousarray(self.G)
        self.b = b.copy()
        self.lo = np.concatenate([np.asarray(lo, dtype=float), np.zeros(self.m)])
        self.hi = np.concatenate([np.asarray(hi, dtype=float), np.full(self.m, np.inf)])
        self.c = np.zeros(self.N)
        self.vstat = np.full(self.N, AT_LOWER, dtype=np.int8)
        self.basis = np.arange(self.n, self.N)
        self.vstat[self.basis] = BASIC
        self.Binv = np.eye(self.m)
        self.xB = np.zeros(self.m)
        self._pivots_since_refactor = 0
        self._stale_xB = True
        self.feas_tol = _FEAS_TOL * max(1.0, float(np.max(np.abs(b))) if self.m else 1.0)

    # -- state management -------------------------------------------------

    def save_state(self):
        return (
            self.basis.copy(),
            self.vstat.copy(),
            self.Binv.copy(),
            self.lo.copy(),
            self.hi.copy(),
        )

    def restore_state(self, state):
        self.basis, self.vstat, self.Binv, self.lo, self.hi = (
            state[0].copy(),
            state[1].copy(),
            state[2].copy(),
            state[3].copy(),
            state[4].copy(),
        )
        self._stale_xB = True

    def set_objective(self, c: np.ndarray):
        self.c[: self.n] = c
        self.c[self.n:] = 0.0

    def set_var_bounds(self, j: int, lo: float, hi: float):
        """Tighten or relax a structural variable's bounds.

        Keeps the variable's nonbasic position consistent; the next solve
        repairs primal feasibility via the dual simplex.
        """
        self.lo[j] = lo
        self.hi[j] = hi
        if self.vstat[j] == AT_UPPER and not np.isfinite(hi):
            self.vstat[j] = AT_LOWER
        self._stale_xB = True

    def add_row(self, a: np.ndarray, rhs: float):
        """Append one constraint ``a @ x <= rhs``; the new slack enters the basis."""
        a_full = np.zeros(self.N + 1)
        a_full[: self.n] = a
        a_full[-1] = 1.0
        G = np.zeros((self.m + 1, self.N + 1))
        G[: self.m, : self.N] = self.G
        G[self.m] = a_full
        self.G = np.ascontiguousarray(G)
        self.b = np.append(self.b, rhs)
        self.lo = np.insert(self.lo, self.N, 0.0)
        self.hi = np.insert(self.hi, self.N, np.inf)
        self.c = np.insert(self.c, self.N, 0.0)
        self.vstat = np.insert(self.vstat, self.N, BASIC)
        # block inverse: new basic row depends on the old basis columns
        a_B = G[self.m, self.basis]
        Binv = np.zeros((self.m + 1, self.m + 1))
        Binv[: self.m, : self.m] = self.Binv
        Binv[self.m, : self.m] = -a_B @ self.Binv
        Binv[self.m, self.m] = 1.0
        self.Binv = Binv
        self.basis = np.append(self.basis, self.N)
        self.m += 1
        self.N += 1
        self.xB = np.zeros(self.m)
        self._stale_xB = True
        self.feas_tol = _FEAS_TOL * max(1.0, float(np.max(np.abs(self.b))))

    # -- internals ---------------------------------------------------------

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.where(self.vstat == AT_UPPER, self.hi, self.lo)
        vals[self.vstat == BASIC] = 0.0
        return vals

    def _recompute_xB(self):
        vals = self._nonbasic_values()
        load = self.G @ vals if self.N else np.zeros(self.m)
        self.xB = self.Binv @ (self.b - load)
        self._stale_xB = False

    def _refactor(self):
        B = self.G[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis") from exc
        self._pivots_since_refactor = 0
        self._recompute_xB()

    def _pivot(self, r: int, e: int, w: np.ndarray):
        """Replace basis row ``r`` with variable ``e``; ``w = Binv @ G[:, e]``."""
        piv = w[r]
        if abs(piv) < _PIV_TOL:
            raise SolverError("pivot element too small")
        self.Binv[r] /= piv
        for i in range(self.m):
            if i != r and w[i] != 0.0:
                self.Binv[i] -= w[i] * self.Binv[r]
        self.basis[r] = e
        self.vstat[e] = BASIC
        self._pivots_since_refactor += 1
        if self._pivots_since_refactor >= 64:
            self._refactor()

    def x(self) -> np.ndarray:
        vals = self._nonbasic_values()
        vals[self.basis] = self.xB
        return vals[: self.n]

    def objective(self) -> float:
        vals = self._nonbasic_values()
        vals[self.basis] = self.xB
        return float(self.c @ vals)

    # -- primal simplex ----------------------------------------------------

    def _primal(self, bland: bool = False) -> int:
        max_iter = 400 + 60 * self.N
        degenerate_run = 0
        for _ in range(max_iter):
            y = self.c[self.basis] @ self.Binv
            d = self.c - (y @ self.G if self.m else 0.0)
            span = self.hi - self.lo
            cand = np.zeros(self.N, dtype=bool)
            nb_low = self.vstat == AT_LOWER
            nb_up = self.vstat == AT_UPPER
            cand |= nb_low & (d > _DJ_TOL) & (span > 0)
            cand |= nb_up & (d < -_DJ_TOL)
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return OPTIMAL
            if bland or degenerate_run > 2 * self.N:
                e = int(idx[0])
            else:
                e = int(idx[np.argmax(np.abs(d[idx]))])
            sign = 1.0 if self.vstat[e] == AT_LOWER else -1.0
            w = self.Binv @ self.G[:, e] if self.m else np.zeros(0)
            # basic variables move by -sign * w * theta
            delta = -sign * w
            blo = self.lo[self.basis]
            bhi = self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim_lo = np.where(delta < -_PIV_TOL, (self.xB - blo) / -delta, np.inf)
                lim_hi = np.where(delta > _PIV_TOL, (bhi - self.xB) / delta, np.inf)
            limits = np.minimum(lim_lo, lim_hi)
            theta_flip = span[e] if np.isfinite(span[e]) else np.inf
            r = int(np.argmin(limits)) if self.m else -1
            theta_basic = limits[r] if self.m else np.inf
            theta = min(theta_flip, theta_basic)
            if not np.isfinite(theta):
                raise SolverError("LP relaxation unbounded")
            theta = max(theta, 0.0)
            degenerate_run = degenerate_run + 1 if theta <= self.feas_tol else 0
            if theta_flip <= theta_basic:
                # entering variable swings to its opposite bound
                self.xB += delta * theta
                self.vstat[e] = AT_UPPER if sign > 0 else AT_LOWER
                continue
            leaving = self.basis[r]
            self.xB += delta * theta
            hit_lower = lim_lo[r] <= lim_hi[r]
            self.vstat[leaving] = AT_LOWER if hit_lower else AT_UPPER
            entry_val = (self.lo[e] if sign > 0 else self.hi[e]) + sign * theta
            self._pivot(r, e, w)
            self.xB[r] = entry_val
        raise SolverError("primal simplex iteration limit")

    # -- dual simplex --------------------------------------------------------

    def _dual(self) -> int:
        if self.m == 0:
            return self._primal()
        max_iter = 400 + 60 * self.N
        stall = 0
        prev_total = np.inf
        for _ in range(max_iter):
            blo = self.lo[self.basis]
            bhi = self.hi[self.basis]
            viol_lo = blo - self.xB
            viol_hi = self.xB - bhi
            viol = np.maximum(np.maximum(viol_lo, viol_hi), 0.0)
            total = float(viol.sum())
            if total <= self.feas_tol:
                return self._primal()
            stall = stall + 1 if total >= prev_total - 1e-12 else 0
            prev_total = total
            bland = stall > 2 * self.N
            if bland:
                r = int(np.flatnonzero(viol > self.feas_tol)[0])
            else:
                r = int(np.argmax(viol))
            below = viol_lo[r] >= viol_hi[r]
            target = blo[r] if below else bhi[r]
            alpha = self.Binv[r] @ self.G
            y = self.c[self.basis] @ self.Binv
            d = self.c - y @ self.G
            span = self.hi - self.lo
            if below:
                cand_lo = (self.vstat == AT_LOWER) & (alpha < -_PIV_TOL) & (span > 0)
                cand_up = (self.vstat == AT_UPPER) & (alpha > _PIV_TOL)
            else:
                cand_lo = (self.vstat == AT_LOWER) & (alpha > _PIV_TOL) & (span > 0)
                cand_up = (self.vstat == AT_UPPER) & (alpha < -_PIV_TOL)
            cand = cand_lo | cand_up
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return INFEASIBLE
            if bland:
                e = int(idx[0])
            else:
                ratios = np.abs(d[idx]) / np.abs(alpha[idx])
                e = int(idx[np.argmin(ratios)])
            # delta solves xB[r] - alpha_e * delta = target
            delta = (self.xB[r] - target) / alpha[e]
            w = self.Binv @ self.G[:, e]
            if np.isfinite(span[e]) and abs(delta) > span[e] + self.feas_tol:
                # entering variable flips to its opposite bound instead
                flip = span[e] if delta > 0 else -span[e]
                self.xB -= flip * w
                self.vstat[e] = AT_UPPER if self.vstat[e] == AT_LOWER else AT_LOWER
                continue
            base = self.hi[e] if self.vstat[e] == AT_UPPER else self.lo[e]
            self.xB -= delta * w
            self.vstat[self.basis[r]] = AT_LOWER if below else AT_UPPER
            self._pivot(r, e, w)
            self.xB[r] = base + delta
        raise SolverError("dual simplex iteration limit")

    # -- phase 1: minimize total infeasibility -------------------------------

    def _phase1(self) -> int:
        """Drive all basic variables inside their bounds from any basis.

        Classic composite-objective phase 1 for the bounded simplex: the
        slope of the total infeasibility with respect to each nonbasic
        movement is computed from the violation signs; Bland's rule kicks
        in after stalls so termination is guaranteed.
        """
        max_iter = 400 + 60 * self.N
        stall = 0
        prev_total = np.inf
        for _ in range(max_iter):
            blo = self.lo[self.basis]
            bhi = self.hi[self.basis]
            below = self.xB < blo - self.feas_tol
            above = self.xB > bhi + self.feas_tol
            total = float((blo - self.xB)[below].sum() + (self.xB - bhi)[above].sum())
            if not below.any() and not above.any():
                return OPTIMAL
            stall = stall + 1 if total >= prev_total - 1e-12 else 0
            prev_total = total
            bland = stall > 2 * self.N
            y = (below.astype(float) - above.astype(float)) @ self.Binv
            slope = y @ self.G  # dF/d(val_j)
            span = self.hi - self.lo
            good_lo = (self.vstat == AT_LOWER) & (slope < -_DJ_TOL) & (span > 0)
            good_up = (self.vstat == AT_UPPER) & (slope > _DJ_TOL)
            idx = np.flatnonzero(good_lo | good_up)
            if idx.size == 0:
                return INFEASIBLE
            if bland:
                e = int(idx[0])
            else:
                e = int(idx[np.argmax(np.abs(slope[idx]))])
            sign = 1.0 if self.vstat[e] == AT_LOWER else -1.0
            w = self.Binv @ self.G[:, e]
            delta = -sign * w  # basic motion per unit of theta
            with np.errstate(divide="ignore", invalid="ignore"):
                # feasible basics must stay inside their bounds
                ok = ~(below | above)
                lim_lo = np.where(ok & (delta < -_PIV_TOL), (self.xB - blo) / -delta, np.inf)
                lim_hi = np.where(ok & (delta > _PIV_TOL), (bhi - self.xB) / delta, np.inf)
                # infeasible basics stop upon reaching their violated bound
                reach_lo = np.where(below & (delta > _PIV_TOL), (blo - self.xB) / delta, np.inf)
                reach_hi = np.where(above & (delta < -_PIV_TOL), (self.xB - bhi) / -delta, np.inf)
            limits = np.minimum(np.minimum(lim_lo, lim_hi), np.minimum(reach_lo, reach_hi))
            theta_flip = span[e] if np.isfinite(span[e]) else np.inf
            r = int(np.argmin(limits))
            theta = min(limits[r], theta_flip)
            if not np.isfinite(theta):
                return INFEASIBLE
            theta = max(theta, 0.0)
            if theta_flip <= limits[r]:
                self.xB += delta * theta
                self.vstat[e] = AT_UPPER if sign > 0 else AT_LOWER
                continue
            leaving = self.basis[r]
            self.xB += delta * theta
            went_low = min(lim_lo[r], reach_lo[r]) <= min(lim_hi[r], reach_hi[r])
            self.vstat[leaving] = AT_LOWER if went_low else AT_UPPER
            entry_val = (self.lo[e] if sign > 0 else self.hi[e]) + sign * theta
            self._pivot(r, e, w)
            self.xB[r] = entry_val
        raise SolverError("phase-1 iteration limit")

    # -- public solve --------------------------------------------------------

    def _cold_start(self) -> int:
        """Restart from the slack basis, restoring feasibility first."""
        self.basis = np.arange(self.n, self.N)
        self.vstat = np.full(self.N, AT_LOWER, dtype=np.int8)
        self.vstat[self.basis] = BASIC
        self.Binv = np.eye(self.m)
        self._pivots_since_refactor = 0
        self._recompute_xB()
        if self.m and np.any(self.xB < self.lo[self.basis] - self.feas_tol):
            if self._phase1() == INFEASIBLE:
                return INFEASIBLE
        return self._primal()

    def solve(self) -> int:
        """Re-optimize from the current basis; returns OPTIMAL or INFEASIBLE."""
        try:
            self._recompute_xB()
            status = self._dual()
        except SolverError:
            status = None
        if status == OPTIMAL and self._verify():
            return OPTIMAL
        if status == INFEASIBLE:
            return INFEASIBLE
        status = self._cold_start()
        if status == INFEASIBLE:
            return INFEASIBLE
        if not self._verify():
            self._refactor()
            status = self._primal(bland=True)
            if not self._verify():
                raise SolverError("simplex failed verification after restart")
        return status

    def _verify(self) -> bool:
        vals = self._nonbasic_values()
        vals[self.basis] = self.xB
        tol = 10 * self.feas_tol
        if np.any(vals < self.lo - tol) or np.any(vals > self.hi + tol):
            return False
        if self.m:
            resid = self.G @ vals - self.b
            if np.any(resid > tol):
                return False
        return True
