"""Dense bounded-variable revised simplex with dual extraction.

Two-phase primal simplex over min c.x, A x = b (slacks already appended by
the caller), lb <= x <= ub. Pivot selection is Dantzig with lowest-index tie
breaking and a permanent switch to Bland's rule after a run of degenerate
pivots, so a given problem always takes the same path. The basis inverse is
kept explicitly and refactorized periodically.

Returned duals follow dF/db: y = c_B B^-1, and reduced costs z = c - A'y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "SimplexError", "IterationLimit", "solve_simplex"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-9
_RC_TOL = 1e-9
_DEGENERATE_STREAK = 80
_REFACTOR_EVERY = 64

AT_LOWER, AT_UPPER, BASIC, FREE_NB = 0, 1, 2, 3


class SimplexError(RuntimeError):
    pass


class IterationLimit(SimplexError):
    pass


@dataclass
class SimplexResult:
    """At infeasible status, y holds the phase-1 duals (a Farkas certificate:
    y.b > 0 with y.A within the variable-bound cone)."""

    status: str
    x: np.ndarray
    y: np.ndarray  # row duals, dF/db orientation
    z: np.ndarray  # reduced costs
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, a: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray):
        self.a = a
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.n = a.shape
        self.status = np.full(self.n, AT_LOWER, dtype=np.int8)
        self.x = np.zeros(self.n)
        for j in range(self.n):
            if np.isfinite(lb[j]):
                self.x[j] = lb[j]
                self.status[j] = AT_LOWER
            elif np.isfinite(ub[j]):
                self.x[j] = ub[j]
                self.status[j] = AT_UPPER
            else:
                self.x[j] = 0.0
                self.status[j] = FREE_NB
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.binv = np.eye(self.m)
        self.pivots_since_refactor = 0

    def refactor(self):
        self.binv = np.linalg.inv(self.a[:, self.basis])
        self.pivots_since_refactor = 0

    def set_basic_values(self):
        rhs = self.b - self.a @ self.x + self.a[:, self.basis] @ self.x[self.basis]
        self.x[self.basis] = self.binv @ rhs

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.binv

    def reduced_costs(self, c: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = c - y @ self.a
        z[self.basis] = 0.0
        return z


def _choose_entering(z: np.ndarray, status: np.ndarray, bland: bool) -> int | None:
    viol = np.zeros_like(z)
    lower = status == AT_LOWER
    upper = status == AT_UPPER
    free = status == FREE_NB
    viol[lower] = np.minimum(z[lower], 0.0)
    viol[upper] = -np.maximum(z[upper], 0.0)
    viol[free] = -np.abs(z[free])
    candidates = np.flatnonzero(viol < -_RC_TOL)
    if candidates.size == 0:
        return None
    if bland:
        return int(candidates[0])
    return int(candidates[np.argmin(viol[candidates])])


def _iterate(tab: _Tableau, c: np.ndarray, max_iterations: int, phase: int,
             bland: bool = False) -> tuple[str, int]:
    """Run simplex to optimality for the given costs; returns (status, iters)."""
    it = 0
    degenerate_streak = 0
    while True:
        y = tab.duals(c)
        z = tab.reduced_costs(c, y)
        q = _choose_entering(z, tab.status, bland)
        if q is None:
            return OPTIMAL, it
        it += 1
        if it > max_iterations:
            raise IterationLimit(f"simplex exceeded {max_iterations} iterations (phase {phase})")

        if tab.status[q] == AT_LOWER or (tab.status[q] == FREE_NB and z[q] < 0):
            sigma = 1.0
        else:
            sigma = -1.0
        u = tab.binv @ tab.a[:, q]  # basic-direction response
        step_base = -sigma * u  # d x_B / d delta

        limit = np.inf
        leave_pos = -1
        leave_to = None
        # own opposite bound (bound flip)
        span = tab.ub[q] - tab.lb[q]
        if np.isfinite(span):
            limit = span
        xb = tab.x[tab.basis]
        lbb = tab.lb[tab.basis]
        ubb = tab.ub[tab.basis]
        dec = step_base < -_PIVOT_TOL
        inc = step_base > _PIVOT_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.full(tab.m, np.inf)
            ratios[dec] = (lbb[dec] - xb[dec]) / step_base[dec]
            ratios[inc] = (ubb[inc] - xb[inc]) / step_base[inc]
        ratios[~np.isfinite(ratios)] = np.inf
        ratios = np.maximum(ratios, 0.0)
        rmin = ratios.min() if tab.m else np.inf
        if rmin < limit - 1e-12:
            # leaving variable: smallest ratio, then largest |pivot|, then index
            tied = np.flatnonzero(ratios <= rmin + 1e-9)
            piv = np.abs(step_base[tied])
            best = tied[piv >= piv.max() - 1e-12]
            leave_pos = int(best[0])
            limit = float(ratios[leave_pos])
            leave_to = AT_LOWER if step_base[leave_pos] < 0 else AT_UPPER
        elif np.isinf(limit):
            return UNBOUNDED, it

        if limit <= 1e-12:
            degenerate_streak += 1
            if degenerate_streak >= _DEGENERATE_STREAK:
                bland = True
        else:
            degenerate_streak = 0

        delta = sigma * limit
        tab.x[q] += delta
        tab.x[tab.basis] += step_base * limit

        if leave_pos < 0:
            # bound flip: q stays nonbasic at its other bound
            tab.status[q] = AT_UPPER if tab.status[q] == AT_LOWER else AT_LOWER
            continue

        p = tab.basis[leave_pos]
        tab.status[p] = leave_to
        tab.x[p] = tab.lb[p] if leave_to == AT_LOWER else tab.ub[p]
        tab.basis[leave_pos] = q
        tab.status[q] = BASIC

        # rank-one update of the basis inverse
        upiv = u[leave_pos]
        if abs(upiv) < _PIVOT_TOL:
            tab.refactor()
        else:
            eta = tab.binv[leave_pos] / upiv
            tab.binv -= np.outer(u, eta)
            tab.binv[leave_pos] = eta
            tab.pivots_since_refactor += 1
            if tab.pivots_since_refactor >= _REFACTOR_EVERY:
                tab.refactor()
        tab.set_basic_values()


def solve_simplex(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    max_iterations: int = 50000,
    feas_tol: float = 1e-7,
    bland: bool = False,
) -> SimplexResult:
    """Solve min c.x s.t. a x = b, lb <= x <= ub."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    tab = _Tableau(
        np.hstack([a, np.zeros((m, m))]),
        b,
        np.concatenate([lb, np.zeros(m)]),
        np.concatenate([ub, np.full(m, np.inf)]),
    )
    # artificial columns signed to the initial residual
    resid = b - a @ tab.x[:n]
    for i in range(m):
        tab.a[i, n + i] = 1.0 if resid[i] >= 0 else -1.0
        tab.x[n + i] = abs(resid[i])
        tab.status[n + i] = BASIC
        tab.basis[i] = n + i
    tab.binv = np.diag(np.sign(np.diag(tab.a[:, n:])))
    tab.set_basic_values()

    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    status, it1 = _iterate(tab, c1, max_iterations, phase=1, bland=bland)
    phase1_obj = float(c1 @ tab.x)
    if status != OPTIMAL or phase1_obj > feas_tol:
        return SimplexResult(INFEASIBLE, tab.x[:n].copy(), tab.duals(c1),
                             np.zeros(n), phase1_obj, it1)

    # pin artificials at zero; drive basic ones out where possible
    tab.lb[n:] = 0.0
    tab.ub[n:] = 0.0
    for i in range(m):
        j = tab.basis[i]
        if j >= n:
            row = tab.binv[i] @ tab.a[:, :n]
            pivots = np.flatnonzero(np.abs(row) > 1e-8)
            replaced = False
            for q in pivots:
                if tab.status[q] != BASIC:
                    tab.basis[i] = q
                    tab.status[q] = BASIC
                    tab.status[j] = AT_LOWER
                    tab.x[j] = 0.0
                    tab.refactor()
                    tab.set_basic_values()
                    replaced = True
                    break
            if not replaced:
                tab.x[j] = 0.0  # redundant row; artificial stays basic at zero

    c2 = np.concatenate([c, np.zeros(m)])
    status, it2 = _iterate(tab, c2, max_iterations, phase=2, bland=bland)
    y = tab.duals(c2)
    z = tab.reduced_costs(c2, y)[:n]
    x = tab.x[:n].copy()
    return SimplexResult(status, x, y, z, float(c @ x), it1 + it2)
