"""Backends, dual bookkeeping and the KKT audit for dispatch LPs.

The bundled reference backend is the dense revised simplex from
:mod:`resmarket.simplex`; the optional "highs" backend goes through
scipy.optimize.linprog and is intended for larger studies. Either way, row
duals are exposed with the sign convention that makes every inequality
multiplier nonnegative, which is what the pricing formulas expect.

Golden-table runs pin the reference backend and additionally canonicalize
the primal among cost-optimal points (maximal renewable reserve
procurement, then minimal re-dispatch); duals always come from the primary
solve, and any optimal primal paired with any optimal dual still satisfies
complementary slackness, which the KKT audit re-checks from raw matrices.
``canonicalize_duals`` additionally re-derives degenerate re-dispatch row
multipliers minimally so reported reserve prices equal the one-sided
envelope derivatives of the optimal cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lpbuild import (
    DG_DN,
    DG_UP,
    DW_DN,
    DW_UP,
    ConstraintMap,
    LpProblem,
    R_DN_W,
    R_UP_W,
    RowKey,
    VariableMap,
)
from . import simplex

__all__ = [
    "SolverOptions",
    "DispatchSolution",
    "KktReport",
    "SolverFailure",
    "solve",
    "verify_kkt",
]


class SolverFailure(RuntimeError):
    pass


@dataclass
class SolverOptions:
    backend: str = "reference"  # "reference" | "highs"
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iterations: int = 200000
    pivot_rule: str = "dantzig"  # "dantzig" | "bland" (reference backend)
    canonicalize_res_reserve: bool = False


@dataclass
class DispatchSolution:
    status: str
    objective: float
    x: np.ndarray
    y_eq: np.ndarray  # dF/db orientation
    y_ub: np.ndarray
    z: np.ndarray  # structural reduced costs
    vm: VariableMap
    cm: ConstraintMap
    problem: LpProblem
    iterations: int = 0
    x_raw: np.ndarray | None = None  # primal of the primary solve, pre tie-break

    # -- keyed access --------------------------------------------------------
    def value(self, kind, entity, t, k=None) -> float:
        return float(self.x[self.vm.index(kind, entity, t, k)])

    def row_dual(self, family, entity, t, k=None, direction=None) -> float:
        """Multiplier of a named row, nonnegative for inequality families."""
        side, idx = self.cm.locate(RowKey(family, entity, t, k, direction))
        if side == "eq":
            return float(self.y_eq[idx])
        return float(-self.y_ub[idx])

    def has_row(self, family, entity, t, k=None, direction=None) -> bool:
        return RowKey(family, entity, t, k, direction) in self.cm

    def reduced_cost(self, kind, entity, t, k=None) -> float:
        """Lower-bound multiplier of a variable (its reduced cost at optimum)."""
        return float(self.z[self.vm.index(kind, entity, t, k)])

    def flow_dual_signed(self, line_count: int, t: int, k=None) -> np.ndarray:
        """Per-line mu_fwd - mu_rev, the term entering price formulas."""
        return self._flow_duals(line_count, t, k)[0]

    def flow_dual_total(self, line_count: int, t: int, k=None) -> np.ndarray:
        """Per-line mu_fwd + mu_rev, the term entering congestion rent."""
        return self._flow_duals(line_count, t, k)[1]

    def _flow_duals(self, line_count: int, t: int, k) -> tuple[np.ndarray, np.ndarray]:
        cache = getattr(self, "_flow_cache", None)
        if cache is None:
            cache = self._flow_cache = {}
        got = cache.get((t, k))
        if got is not None and got[0].shape == (line_count,):
            return got
        family = "flow" if k is None else "flow_k"
        signed = np.zeros(line_count)
        total = np.zeros(line_count)
        for line in range(line_count):
            ent = f"line{line}"
            if self.has_row(family, ent, t, k, "fwd"):
                mu = self.row_dual(family, ent, t, k, "fwd")
                signed[line] += mu
                total[line] += mu
            if self.has_row(family, ent, t, k, "rev"):
                mu = self.row_dual(family, ent, t, k, "rev")
                signed[line] -= mu
                total[line] += mu
        cache[(t, k)] = (signed, total)
        return signed, total

    def invalidate_caches(self) -> None:
        self._flow_cache = {}


def _to_simplex_form(problem: LpProblem):
    m_eq, m_ub = problem.a_eq.shape[0], problem.a_ub.shape[0]
    n = problem.n_cols
    top = sp.hstack([problem.a_eq, sp.csr_matrix((m_eq, m_ub))]) if m_eq else None
    bottom = sp.hstack([problem.a_ub, sp.eye(m_ub, format="csr")]) if m_ub else None
    blocks = [blk for blk in (top, bottom) if blk is not None]
    a = sp.vstack(blocks).toarray() if blocks else np.zeros((0, n))
    b = np.concatenate([problem.b_eq, problem.b_ub])
    lb = np.concatenate([problem.lb, np.zeros(m_ub)])
    ub = np.concatenate([problem.ub, np.full(m_ub, np.inf)])
    return a, b, lb, ub, m_eq, m_ub


def _solve_reference(problem: LpProblem, opts: SolverOptions):
    a, b, lb, ub, m_eq, m_ub = _to_simplex_form(problem)
    n = problem.n_cols
    c = np.concatenate([problem.c, np.zeros(m_ub)])
    try:
        res = simplex.solve_simplex(
            a, b, c, lb, ub,
            max_iterations=opts.max_iterations,
            feas_tol=max(opts.tol_feas, 1e-9),
            bland=opts.pivot_rule == "bland",
        )
    except simplex.SimplexError as exc:
        raise SolverFailure(str(exc)) from exc
    y = res.y
    return res.status, res.x[:n], y[:m_eq], y[m_eq:], res.z[:n], res.objective, res.iterations


def _solve_highs(problem: LpProblem, opts: SolverOptions):
    from scipy.optimize import linprog

    bounds = np.column_stack([problem.lb, problem.ub])
    res = linprog(
        problem.c,
        A_ub=problem.a_ub if problem.a_ub.shape[0] else None,
        b_ub=problem.b_ub if problem.a_ub.shape[0] else None,
        A_eq=problem.a_eq if problem.a_eq.shape[0] else None,
        b_eq=problem.b_eq if problem.a_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return "infeasible", np.zeros(problem.n_cols), np.zeros(0), np.zeros(0), np.zeros(0), np.inf, 0
    if res.status == 3:
        return "unbounded", np.zeros(problem.n_cols), np.zeros(0), np.zeros(0), np.zeros(0), -np.inf, 0
    if res.status != 0:
        raise SolverFailure(f"HiGHS failed with status {res.status}: {res.message}")
    y_eq = res.eqlin.marginals if problem.a_eq.shape[0] else np.zeros(0)
    y_ub = res.ineqlin.marginals if problem.a_ub.shape[0] else np.zeros(0)
    z = res.lower.marginals + res.upper.marginals
    iters = int(getattr(res, "nit", 0))
    return "optimal", res.x, np.asarray(y_eq), np.asarray(y_ub), np.asarray(z), float(res.fun), iters


def solve(
    problem: LpProblem,
    vm: VariableMap,
    cm: ConstraintMap,
    opts: SolverOptions | None = None,
) -> DispatchSolution:
    """Solve the LP to optimality and route duals back to named multipliers."""
    opts = opts or SolverOptions()
    backend = {"reference": _solve_reference, "highs": _solve_highs}.get(opts.backend)
    if backend is None:
        raise ValueError(f"unknown backend {opts.backend!r}")
    status, x, y_eq, y_ub, z, obj, iters = backend(problem, opts)
    if status != "optimal":
        return DispatchSolution(status, obj, x, y_eq, y_ub, z, vm, cm, problem, iters)
    x_raw = x.copy()

    if opts.canonicalize_res_reserve:
        # Lexicographic zero-cost tie-break among optimal dispatches: first
        # maximize renewable reserve procurement (upward weighted by the
        # unit's available output), then take the minimal-re-dispatch point.
        # Duals stay those of the primary solve; any optimal primal with any
        # optimal dual is a complementary pair.
        n = problem.n_cols
        eps = 1e-12 * max(1.0, abs(obj))
        c2 = np.zeros(n)
        c2[vm.indices(R_UP_W)] = -1.0
        for i, rkey in enumerate(cm.ub_keys):
            # weight upward reserve by availability (res_cap_up row rhs)
            if rkey.family == "res_cap_up":
                c2[vm.index(R_UP_W, rkey.entity, rkey.t)] = -max(problem.b_ub[i], 0.0)
        c2[vm.indices(R_DN_W)] = -1.0
        if np.any(c2):
            cost_row = sp.csr_matrix(problem.c.reshape(1, -1))
            a_ub2 = sp.vstack([problem.a_ub, cost_row]).tocsr()
            b_ub2 = np.append(problem.b_ub, obj + eps)
            tie = LpProblem(c2, problem.a_eq, problem.b_eq, a_ub2, b_ub2,
                            problem.lb, problem.ub)
            status2, x2, *_rest2, obj2, _it2 = backend(tie, opts)
            if status2 == "optimal":
                c3 = np.zeros(n)
                for kind in (DG_UP, DG_DN, DW_UP, DW_DN):
                    c3[vm.indices(kind)] = 1.0
                tie_row = sp.csr_matrix(c2.reshape(1, -1))
                a_ub3 = sp.vstack([a_ub2, tie_row]).tocsr()
                b_ub3 = np.append(b_ub2, obj2 + eps)
                tie3 = LpProblem(c3, problem.a_eq, problem.b_eq, a_ub3, b_ub3,
                                 problem.lb, problem.ub)
                status3, x3, *_rest3 = backend(tie3, opts)
                x = x3 if status3 == "optimal" else x2
                obj = problem.objective(x)

    return DispatchSolution("optimal", obj, x, y_eq, y_ub, z, vm, cm, problem, iters, x_raw=x_raw)


def canonicalize_duals(sol: DispatchSolution, inst) -> None:
    """Re-derive re-dispatch cap/floor duals minimally from stationarity.

    On degenerate rows (zero re-dispatch span) the solver may split duals
    between the row and the adjacent variable bounds arbitrarily; the
    resulting reserve-price sums then differ from the one-sided envelope
    derivative of the optimal cost, which is the minimal dual combination.
    This pass rewrites the eight re-dispatch multipliers as their minimal
    stationarity-consistent values given the balance/flow/RPS duals, gating
    tightness on the primal of the primary solve, and then recomputes every
    reduced cost so the full KKT system stays exact. In-place.
    """
    if sol.status != "optimal":
        return
    problem, vm, cm = sol.problem, sol.vm, sol.cm
    x_gate = sol.x_raw if sol.x_raw is not None else sol.x
    slack = problem.b_ub - problem.a_ub @ x_gate if problem.a_ub.shape[0] else np.zeros(0)
    tight = slack <= 1e-6

    nl = inst.network.line_count
    nodal: dict[tuple[int, str, int], float] = {}
    nu_k: dict[tuple[str, str], float] = {}
    for s in inst.scenarios:
        for t in range(inst.periods):
            lam = sol.row_dual("balance_k", "system", t, s.uid)
            mu = sol.flow_dual_signed(nl, t, s.uid)
            for b in range(inst.network.bus_count):
                nodal[(b, s.uid, t)] = lam - float(inst.network.shift_factors[:, b] @ mu)
        for r in inst.regions:
            nu_k[(r.uid, s.uid)] = sol.row_dual("rps_k", r.uid, 0, s.uid)

    eps = {s.uid: s.probability for s in inst.scenarios}
    new_ub = sol.y_ub.copy()

    def set_dual(i: int, value: float) -> None:
        new_ub[i] = -value

    # caps first; the floor duals are then derived from the rewritten caps so
    # re-dispatch variable stationarity stays exact
    for i, key in enumerate(cm.ub_keys):
        fam = key.family
        if fam == "redisp_up_cap":
            u = inst.thermal(key.entity)
            pi_k = nodal[(u.bus, key.k, key.t)]
            set_dual(i, max(0.0, pi_k - eps[key.k] * u.up_redispatch_bid) if tight[i] else 0.0)
        elif fam == "redisp_dn_cap":
            u = inst.thermal(key.entity)
            d = eps[key.k] * u.dn_redispatch_bid - nodal[(u.bus, key.k, key.t)]
            set_dual(i, max(0.0, d) if tight[i] else 0.0)
        elif fam == "res_redisp_up_cap":
            u = inst.renewable(key.entity)
            pi_w = nodal[(u.bus, key.k, key.t)] + nu_k[(u.region, key.k)]
            set_dual(i, max(0.0, pi_w) if tight[i] else 0.0)
        elif fam == "res_redisp_dn_cap":
            u = inst.renewable(key.entity)
            pi_w = nodal[(u.bus, key.k, key.t)] + nu_k[(u.region, key.k)]
            set_dual(i, max(0.0, -pi_w) if tight[i] else 0.0)
    for i, key in enumerate(cm.ub_keys):
        if key.family == "redisp_dn_floor":
            u = inst.thermal(key.entity)
            d = eps[key.k] * u.dn_redispatch_bid - nodal[(u.bus, key.k, key.t)]
            _, cap_idx = cm.locate(RowKey("redisp_dn_cap", key.entity, key.t, key.k))
            set_dual(i, -new_ub[cap_idx] - d)
        elif key.family == "res_redisp_dn_floor":
            u = inst.renewable(key.entity)
            pi_w = nodal[(u.bus, key.k, key.t)] + nu_k[(u.region, key.k)]
            _, cap_idx = cm.locate(RowKey("res_redisp_dn_cap", key.entity, key.t, key.k))
            set_dual(i, -new_ub[cap_idx] + pi_w)

    sol.y_ub = new_ub
    z = problem.c.copy()
    if problem.a_eq.shape[0]:
        z -= problem.a_eq.T @ sol.y_eq
    if problem.a_ub.shape[0]:
        z -= problem.a_ub.T @ sol.y_ub
    sol.z = z
    sol.invalidate_caches()


# ---------------------------------------------------------------------------
# KKT audit
# ---------------------------------------------------------------------------


@dataclass
class KktReport:
    primal_residual: float
    dual_residual: float
    stationarity: float
    comp_slack: float
    gap: float
    stationarity_by_kind: dict[str, float] = field(default_factory=dict)
    comp_slack_by_family: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float = 1e-6) -> bool:
        return max(self.primal_residual, self.dual_residual, self.stationarity,
                   self.comp_slack, abs(self.gap)) <= tol

    @property
    def worst(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.stationarity,
                   self.comp_slack, abs(self.gap))


def verify_kkt(problem: LpProblem, sol: DispatchSolution, tol: float = 1e-6) -> KktReport:
    """Recompute stationarity, feasibility, complementary slackness and gap.

    Works from the raw matrices only, never from solver internals, so it is
    a genuine cross-check of whichever backend produced the solution.
    """
    x, y_eq, y_ub = sol.x, sol.y_eq, sol.y_ub
    lb, ub = problem.lb, problem.ub

    r_eq = problem.a_eq @ x - problem.b_eq if problem.a_eq.shape[0] else np.zeros(0)
    slack = problem.b_ub - problem.a_ub @ x if problem.a_ub.shape[0] else np.zeros(0)
    primal = max(
        float(np.max(np.abs(r_eq), initial=0.0)),
        float(np.max(-slack, initial=0.0)),
        float(np.max(lb - x, initial=0.0)),
        float(np.max(x - ub, initial=0.0)),
    )

    # inequality duals must be <= 0 in dF/db orientation
    dual = float(np.max(y_ub, initial=0.0))

    z = problem.c.copy()
    if problem.a_eq.shape[0]:
        z -= problem.a_eq.T @ y_eq
    if problem.a_ub.shape[0]:
        z -= problem.a_ub.T @ y_ub

    at_lower = np.isfinite(lb) & (x <= lb + 1e-7)
    at_upper = np.isfinite(ub) & (x >= ub - 1e-7)
    fixed = at_lower & at_upper
    interior = ~(at_lower | at_upper)
    stat = 0.0
    by_kind: dict[str, float] = {}
    viol = np.zeros_like(z)
    viol[interior] = np.abs(z[interior])
    lo_only = at_lower & ~fixed
    up_only = at_upper & ~fixed
    viol[lo_only] = np.maximum(-z[lo_only], 0.0)
    viol[up_only] = np.maximum(z[up_only], 0.0)
    for j, key in enumerate(sol.vm.keys):
        kind = key.kind
        by_kind[kind] = max(by_kind.get(kind, 0.0), float(viol[j]))
    stat = float(np.max(viol, initial=0.0))

    cs = 0.0
    by_family: dict[str, float] = {}
    if problem.a_ub.shape[0]:
        cs_rows = np.abs(y_ub * slack)
        for i, key in enumerate(sol.cm.ub_keys):
            by_family[key.family] = max(by_family.get(key.family, 0.0), float(cs_rows[i]))
        cs = float(np.max(cs_rows, initial=0.0))
    bound_cs = np.zeros_like(z)
    fin_lo = np.isfinite(lb) & ~fixed
    fin_up = np.isfinite(ub) & ~fixed
    bound_cs[fin_lo] = np.abs(np.maximum(z[fin_lo], 0.0) * (x[fin_lo] - lb[fin_lo]))
    bound_cs[fin_up] = np.maximum(bound_cs[fin_up], np.abs(np.minimum(z[fin_up], 0.0) * (ub[fin_up] - x[fin_up])))
    cs = max(cs, float(np.max(bound_cs, initial=0.0)))
    by_family["bounds"] = float(np.max(bound_cs, initial=0.0))

    dual_obj = 0.0
    if problem.a_eq.shape[0]:
        dual_obj += float(problem.b_eq @ y_eq)
    if problem.a_ub.shape[0]:
        dual_obj += float(problem.b_ub @ y_ub)
    lb0 = np.where(np.isfinite(lb), lb, 0.0)
    ub0 = np.where(np.isfinite(ub), ub, 0.0)
    both = np.isfinite(lb) & np.isfinite(ub)
    contrib = np.where(
        both,
        np.where(z >= 0, z * lb0, z * ub0),
        np.where(np.isfinite(lb), np.maximum(z, 0.0) * lb0, np.minimum(z, 0.0) * ub0),
    )
    dual_obj += float(np.sum(contrib))
    gap = float(problem.c @ x - dual_obj)
    scale = max(1.0, abs(float(problem.c @ x)))

    return KktReport(
        primal_residual=primal,
        dual_residual=dual,
        stationarity=stat,
        comp_slack=cs,
        gap=gap / scale,
        stationarity_by_kind=by_kind,
        comp_slack_by_family=by_family,
    )
