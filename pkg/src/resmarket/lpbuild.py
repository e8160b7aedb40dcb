"""Assembly of the scenario-based energy-reserve dispatch LP.

The model minimizes expected procurement plus re-dispatch cost subject to
base-case balance/flow limits, renewable and thermal capacity and reserve
limits, ramping-coupled reserve deliverability, regional RPS targets, and
per-scenario balance/flow/re-dispatch/RPS constraints. Every inequality is
stored as a <= row so all row duals are nonnegative after sign flipping;
lower bounds that carry named multipliers are negated into <= rows.

Regional RPS credit can be traded between partner regions through directed
nonnegative trade variables; scenario RPS rows carry their own trade
variables so that credit is re-allocated per realization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .instance import MarketInstance, Scenario

__all__ = [
    "VarKey",
    "RowKey",
    "VariableMap",
    "ConstraintMap",
    "LpProblem",
    "BuildConfig",
    "build_lp",
    "objective_value",
    "dump_lp",
    "MULTIPLIER_BY_FAMILY",
]

# variable kinds
G, W = "g", "w"
R_UP_G, R_DN_G = "r_up_g", "r_dn_g"
R_UP_W, R_DN_W = "r_up_w", "r_dn_w"
DG_UP, DG_DN = "dg_up", "dg_dn"
DW_UP, DW_DN = "dw_up", "dw_dn"
TRADE = "trade"

# constraint families -> multiplier names (one family per named multiplier)
MULTIPLIER_BY_FAMILY = {
    "balance": "lambda",
    "flow": "mu",
    "res_cap_up": "iota_bar_U",
    "res_cap_dn": "iota_bar_D",
    "gen_min": "imath_lower",
    "gen_max": "imath_upper",
    "gen_res_up_cap": "ell_bar_U",
    "gen_res_dn_cap": "ell_bar_D",
    "ramp_up": "gamma_U",
    "ramp_dn": "gamma_D",
    "rps_base": "nu_0",
    "balance_k": "lambda_k",
    "flow_k": "mu_k",
    "redisp_up_cap": "eta_bar",
    "redisp_dn_floor": "beta_lower",
    "redisp_dn_cap": "beta_bar",
    "res_redisp_up_cap": "tau_bar",
    "res_redisp_dn_floor": "zeta_lower",
    "res_redisp_dn_cap": "zeta_bar",
    "rps_k": "nu_k",
}


@dataclass(frozen=True)
class VarKey:
    kind: str
    entity: str  # unit/load id, or "m->n" for trades
    t: int
    k: str | None = None  # scenario id, None = base


@dataclass(frozen=True)
class RowKey:
    family: str
    entity: str  # unit id, line index as "line{idx}", or region id
    t: int
    k: str | None = None
    direction: str | None = None  # flow rows: "fwd" / "rev"

    @property
    def multiplier(self) -> str:
        return MULTIPLIER_BY_FAMILY[self.family]


class VariableMap:
    """Bijection between variable keys and column indices."""

    def __init__(self, keys: list[VarKey]):
        self.keys = keys
        self._index = {key: i for i, key in enumerate(keys)}
        if len(self._index) != len(keys):
            raise ValueError("duplicate variable keys")

    def __len__(self) -> int:
        return len(self.keys)

    def index(self, kind, entity, t, k=None) -> int:
        return self._index[VarKey(kind, entity, t, k)]

    def get(self, kind, entity, t, k=None) -> int | None:
        return self._index.get(VarKey(kind, entity, t, k))

    def key(self, idx: int) -> VarKey:
        return self.keys[idx]

    def indices(self, kind: str) -> list[int]:
        return [i for i, key in enumerate(self.keys) if key.kind == kind]


class ConstraintMap:
    """Bijection between row keys and (eq|ub, row index) positions."""

    def __init__(self):
        self.eq_keys: list[RowKey] = []
        self.ub_keys: list[RowKey] = []
        self._where: dict[RowKey, tuple[str, int]] = {}

    def add(self, side: str, key: RowKey) -> int:
        keys = self.eq_keys if side == "eq" else self.ub_keys
        idx = len(keys)
        keys.append(key)
        if key in self._where:
            raise ValueError(f"duplicate row key {key}")
        self._where[key] = (side, idx)
        return idx

    def locate(self, key: RowKey) -> tuple[str, int]:
        return self._where[key]

    def __contains__(self, key: RowKey) -> bool:
        return key in self._where

    def rows(self, family: str) -> list[RowKey]:
        if family == "balance":
            return [k for k in self.eq_keys if k.family == "balance"]
        if family == "balance_k":
            return [k for k in self.eq_keys if k.family == "balance_k"]
        return [k for k in self.ub_keys if k.family == family]


@dataclass
class LpProblem:
    """min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub."""

    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n_cols(self) -> int:
        return self.c.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


@dataclass
class BuildConfig:
    two_sided_flows: bool = True
    res_reserve: bool = True  # False fixes renewable reserve variables at zero
    prune_slack_flow_rows: bool = False  # drop flow rows that can never bind


class _Coo:
    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, r, c, v):
        r = np.atleast_1d(np.asarray(r, dtype=np.int64))
        c = np.atleast_1d(np.asarray(c, dtype=np.int64))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if not (r.size == c.size == v.size):
            raise ValueError("COO triplet size mismatch")
        keep = np.abs(v) > 1e-14
        self.rows.append(r[keep])
        self.cols.append(c[keep])
        self.vals.append(v[keep])

    def matrix(self, shape) -> sp.csr_matrix:
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=shape)


def _trade_pairs(inst: MarketInstance) -> list[tuple[str, str]]:
    pairs = []
    for r in inst.regions:
        for p in r.partners:
            pairs.append((r.uid, p))
    return pairs


def _layout(inst: MarketInstance, cfg: BuildConfig) -> VariableMap:
    T = inst.periods
    pairs = _trade_pairs(inst)
    keys: list[VarKey] = []
    for kind, ids in ((G, inst.thermal_ids), (R_UP_G, inst.thermal_ids),
                      (R_DN_G, inst.thermal_ids), (W, inst.renewable_ids),
                      (R_UP_W, inst.renewable_ids), (R_DN_W, inst.renewable_ids)):
        keys += [VarKey(kind, uid, t) for uid in ids for t in range(T)]
    keys += [VarKey(TRADE, f"{m}->{n}", t) for m, n in pairs for t in range(T)]
    for s in inst.scenarios:
        for kind, ids in ((DG_UP, inst.thermal_ids), (DG_DN, inst.thermal_ids),
                          (DW_UP, inst.renewable_ids), (DW_DN, inst.renewable_ids)):
            keys += [VarKey(kind, uid, t, s.uid) for uid in ids for t in range(T)]
        keys += [VarKey(TRADE, f"{m}->{n}", t, s.uid) for m, n in pairs for t in range(T)]
    return VariableMap(keys)


def _scenario_dev(s: Scenario, attr: str, uid: str, T: int) -> np.ndarray:
    dev = getattr(s, attr).get(uid)
    if dev is None:
        raise ValueError(
            f"scenario {s.uid!r} lacks a {attr} entry for entity {uid!r}")
    if dev.shape != (T,):
        raise ValueError(
            f"scenario {s.uid!r} {attr} entry for {uid!r} has shape {dev.shape}, expected ({T},)")
    return dev


def _flow_bound(inst: MarketInstance) -> np.ndarray:
    """Conservative per-line bound on |flow| over all scenarios and periods."""
    s = inst.network.shift_factors
    bound = np.zeros(inst.network.line_count)
    for u in inst.thermal_units:
        bound += np.abs(s[:, u.bus]) * u.g_max
    for u in inst.renewable_units:
        worst = float(np.max(u.available, initial=0.0))
        for sc in inst.scenarios:
            pos = sc.res_deviation_pos.get(u.uid)
            if pos is not None:
                worst = max(worst, float(np.max(u.available + pos)))
        bound += np.abs(s[:, u.bus]) * worst
    for ld in inst.loads:
        worst = float(np.max(ld.demand, initial=0.0))
        for sc in inst.scenarios:
            dev = sc.load_deviation.get(ld.uid)
            if dev is not None:
                worst = max(worst, float(np.max(np.abs(ld.demand + dev))))
        bound += np.abs(s[:, ld.bus]) * worst
    return bound


def build_lp(
    inst: MarketInstance, cfg: BuildConfig | None = None
) -> tuple[LpProblem, VariableMap, ConstraintMap]:
    """Assemble the dispatch LP with full bidirectional index maps."""
    cfg = cfg or BuildConfig()
    T = inst.periods
    net = inst.network
    S = net.shift_factors
    caps = net.capacities
    nl = net.line_count
    vm = _layout(inst, cfg)
    cm = ConstraintMap()
    n = len(vm)

    gens = inst.thermal_units
    rens = inst.renewable_units
    loads = inst.loads
    pairs = _trade_pairs(inst)

    # column index helpers (vectorized over units for the flow blocks)
    def cols(kind, ids, t, k=None):
        return np.array([vm.index(kind, uid, t, k) for uid in ids], dtype=np.int64)

    g_cols = {t: cols(G, inst.thermal_ids, t) for t in range(T)}
    w_cols = {t: cols(W, inst.renewable_ids, t) for t in range(T)}
    s_g = S[:, [u.bus for u in gens]] if gens else np.zeros((nl, 0))
    s_w = S[:, [u.bus for u in rens]] if rens else np.zeros((nl, 0))
    s_d = S[:, [u.bus for u in loads]] if loads else np.zeros((nl, 0))

    if cfg.prune_slack_flow_rows:
        bindable = _flow_bound(inst) > caps - 1e-9
    else:
        bindable = np.ones(nl, dtype=bool)
    live_lines = np.flatnonzero(bindable)

    # objective -------------------------------------------------------------
    c = np.zeros(n)
    for u in gens:
        for t in range(T):
            c[vm.index(G, u.uid, t)] = u.energy_bid
            c[vm.index(R_UP_G, u.uid, t)] = u.up_reserve_bid
            c[vm.index(R_DN_G, u.uid, t)] = u.dn_reserve_bid
    for s in inst.scenarios:
        for u in gens:
            for t in range(T):
                c[vm.index(DG_UP, u.uid, t, s.uid)] = s.probability * u.up_redispatch_bid
                c[vm.index(DG_DN, u.uid, t, s.uid)] = -s.probability * u.dn_redispatch_bid

    # bounds ----------------------------------------------------------------
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for kind in (G, W, DG_DN, DW_DN):
        idx = vm.indices(kind)
        lb[idx] = -np.inf
    if not cfg.res_reserve:
        for kind in (R_UP_W, R_DN_W):
            ub[vm.indices(kind)] = 0.0

    eq = _Coo()
    ub_coo = _Coo()
    b_eq: list[float] = []
    b_ub: list[float] = []

    def eq_row(key: RowKey, rhs: float) -> int:
        idx = cm.add("eq", key)
        b_eq.append(rhs)
        return idx

    def ub_row(key: RowKey, rhs: float) -> int:
        idx = cm.add("ub", key)
        b_ub.append(rhs)
        return idx

    def add_flow_rows(k: str | None, t: int, sc: Scenario | None):
        """Directional line-limit rows; forward always, reverse when two-sided."""
        load_term = s_d @ np.array([
            ld.demand[t] + (0.0 if sc is None else _scenario_dev(sc, "load_deviation", ld.uid, T)[t])
            for ld in loads
        ]) if loads else np.zeros(nl)
        directions = ("fwd", "rev") if cfg.two_sided_flows else ("fwd",)
        family = "flow" if sc is None else "flow_k"
        for direction in directions:
            sign = 1.0 if direction == "fwd" else -1.0
            for line in live_lines:
                key = RowKey(family, f"line{line}", t, None if sc is None else sc.uid, direction)
                row = ub_row(key, caps[line] + sign * load_term[line])
                rid = row
                if gens:
                    ub_coo.add(np.full(len(gens), rid), g_cols[t], sign * s_g[line])
                if rens:
                    ub_coo.add(np.full(len(rens), rid), w_cols[t], sign * s_w[line])
                if sc is not None:
                    if gens:
                        up = cols(DG_UP, inst.thermal_ids, t, sc.uid)
                        dn = cols(DG_DN, inst.thermal_ids, t, sc.uid)
                        ub_coo.add(np.full(len(gens), rid), up, sign * s_g[line])
                        ub_coo.add(np.full(len(gens), rid), dn, -sign * s_g[line])
                    if rens:
                        up = cols(DW_UP, inst.renewable_ids, t, sc.uid)
                        dn = cols(DW_DN, inst.renewable_ids, t, sc.uid)
                        ub_coo.add(np.full(len(rens), rid), up, sign * s_w[line])
                        ub_coo.add(np.full(len(rens), rid), dn, -sign * s_w[line])

    # base balance and flows (one balance row per period) --------------------
    for t in range(T):
        rid = eq_row(RowKey("balance", "system", t), inst.total_demand(t))
        if gens:
            eq.add(np.full(len(gens), rid), g_cols[t], np.ones(len(gens)))
        if rens:
            eq.add(np.full(len(rens), rid), w_cols[t], np.ones(len(rens)))
    for t in range(T):
        add_flow_rows(None, t, None)

    # renewable output plus reserve capability caps --------------------------
    for u in rens:
        for t in range(T):
            rid = ub_row(RowKey("res_cap_up", u.uid, t), float(u.available[t]))
            ub_coo.add([rid, rid], [vm.index(R_UP_W, u.uid, t), vm.index(W, u.uid, t)], [1.0, 1.0])
            rid = ub_row(RowKey("res_cap_dn", u.uid, t), 0.0)
            ub_coo.add([rid, rid], [vm.index(R_DN_W, u.uid, t), vm.index(W, u.uid, t)], [1.0, -1.0])

    # thermal capacity and reserve caps ---------------------------------------
    for u in gens:
        for t in range(T):
            rid = ub_row(RowKey("gen_min", u.uid, t), -u.g_min)
            ub_coo.add([rid, rid], [vm.index(R_DN_G, u.uid, t), vm.index(G, u.uid, t)], [1.0, -1.0])
            rid = ub_row(RowKey("gen_max", u.uid, t), u.g_max)
            ub_coo.add([rid, rid], [vm.index(G, u.uid, t), vm.index(R_UP_G, u.uid, t)], [1.0, 1.0])
            rid = ub_row(RowKey("gen_res_up_cap", u.uid, t), u.r_up_max)
            ub_coo.add([rid], [vm.index(R_UP_G, u.uid, t)], [1.0])
            rid = ub_row(RowKey("gen_res_dn_cap", u.uid, t), u.r_dn_max)
            ub_coo.add([rid], [vm.index(R_DN_G, u.uid, t)], [1.0])

    # ramping-coupled reserve deliverability, adjacent periods only -----------
    for u in gens:
        for t in range(T - 1):
            if np.isfinite(u.ramp_up):
                rid = ub_row(RowKey("ramp_up", u.uid, t), u.ramp_up)
                ub_coo.add(
                    [rid, rid, rid],
                    [vm.index(G, u.uid, t + 1), vm.index(G, u.uid, t), vm.index(R_UP_G, u.uid, t)],
                    [1.0, -1.0, 1.0],
                )
            if np.isfinite(u.ramp_dn):
                rid = ub_row(RowKey("ramp_dn", u.uid, t), u.ramp_dn)
                ub_coo.add(
                    [rid, rid, rid],
                    [vm.index(G, u.uid, t), vm.index(G, u.uid, t + 1), vm.index(R_DN_G, u.uid, t)],
                    [1.0, -1.0, 1.0],
                )

    # base RPS: alpha * horizon demand <= regional credit --------------------
    for region in inst.regions:
        members_w = [u.uid for u in rens if u.region == region.uid]
        demand = sum(float(np.sum(ld.demand)) for ld in loads if ld.region == region.uid)
        rid = ub_row(RowKey("rps_base", region.uid, 0), -region.rps_fraction * demand)
        for t in range(T):
            for uid in members_w:
                ub_coo.add([rid], [vm.index(W, uid, t)], [-1.0])
            for m, nn in pairs:
                if nn == region.uid:  # imports add credit
                    ub_coo.add([rid], [vm.index(TRADE, f"{m}->{nn}", t)], [-1.0])
                if m == region.uid:  # exports remove credit
                    ub_coo.add([rid], [vm.index(TRADE, f"{m}->{nn}", t)], [1.0])

    # scenario blocks: balance, flows, re-dispatch caps, RPS -----------------
    for sc in inst.scenarios:
        flags = {u.uid: (u.uid in sc.outages) for u in gens}
        for t in range(T):
            rid = eq_row(RowKey("balance_k", "system", t, sc.uid), inst.total_demand(t, sc))
            if gens:
                eq.add(np.full(len(gens), rid), g_cols[t], np.ones(len(gens)))
                eq.add(np.full(len(gens), rid), cols(DG_UP, inst.thermal_ids, t, sc.uid), np.ones(len(gens)))
                eq.add(np.full(len(gens), rid), cols(DG_DN, inst.thermal_ids, t, sc.uid), -np.ones(len(gens)))
            if rens:
                eq.add(np.full(len(rens), rid), w_cols[t], np.ones(len(rens)))
                eq.add(np.full(len(rens), rid), cols(DW_UP, inst.renewable_ids, t, sc.uid), np.ones(len(rens)))
                eq.add(np.full(len(rens), rid), cols(DW_DN, inst.renewable_ids, t, sc.uid), -np.ones(len(rens)))
        for t in range(T):
            add_flow_rows(sc.uid, t, sc)

        # thermal re-dispatch caps gated by the outage matrix
        for u in gens:
            live = 0.0 if flags[u.uid] else 1.0
            for t in range(T):
                rid = ub_row(RowKey("redisp_up_cap", u.uid, t, sc.uid), 0.0)
                ub_coo.add([rid], [vm.index(DG_UP, u.uid, t, sc.uid)], [1.0])
                if live:
                    ub_coo.add([rid], [vm.index(R_UP_G, u.uid, t)], [-live])
                rid = ub_row(RowKey("redisp_dn_floor", u.uid, t, sc.uid), 0.0)
                ub_coo.add([rid], [vm.index(DG_DN, u.uid, t, sc.uid)], [-1.0])
                if flags[u.uid]:
                    ub_coo.add([rid], [vm.index(G, u.uid, t)], [1.0])
                rid = ub_row(RowKey("redisp_dn_cap", u.uid, t, sc.uid), 0.0)
                ub_coo.add([rid], [vm.index(DG_DN, u.uid, t, sc.uid)], [1.0])
                if flags[u.uid]:
                    ub_coo.add([rid], [vm.index(G, u.uid, t)], [-1.0])
                else:
                    ub_coo.add([rid], [vm.index(R_DN_G, u.uid, t)], [-1.0])

        # renewable re-dispatch caps around the deviation floor
        for u in rens:
            pos = _scenario_dev(sc, "res_deviation_pos", u.uid, T)
            neg = _scenario_dev(sc, "res_deviation_neg", u.uid, T)
            for t in range(T):
                rid = ub_row(RowKey("res_redisp_up_cap", u.uid, t, sc.uid), float(pos[t]))
                ub_coo.add([rid, rid],
                           [vm.index(DW_UP, u.uid, t, sc.uid), vm.index(R_UP_W, u.uid, t)],
                           [1.0, -1.0])
                rid = ub_row(RowKey("res_redisp_dn_floor", u.uid, t, sc.uid), -float(neg[t]))
                ub_coo.add([rid], [vm.index(DW_DN, u.uid, t, sc.uid)], [-1.0])
                rid = ub_row(RowKey("res_redisp_dn_cap", u.uid, t, sc.uid), float(neg[t]))
                ub_coo.add([rid, rid],
                           [vm.index(DW_DN, u.uid, t, sc.uid), vm.index(R_DN_W, u.uid, t)],
                           [1.0, -1.0])

        # scenario RPS: alpha_k * deviated demand <= re-traded credit
        for region in inst.regions:
            alpha = sc.rps_fractions[region.uid]
            demand = sum(
                float(np.sum(ld.demand + _scenario_dev(sc, "load_deviation", ld.uid, T)))
                for ld in loads if ld.region == region.uid
            )
            rid = ub_row(RowKey("rps_k", region.uid, 0, sc.uid), -alpha * demand)
            for t in range(T):
                for u in rens:
                    if u.region != region.uid:
                        continue
                    ub_coo.add(
                        [rid, rid, rid],
                        [vm.index(W, u.uid, t),
                         vm.index(DW_UP, u.uid, t, sc.uid),
                         vm.index(DW_DN, u.uid, t, sc.uid)],
                        [-1.0, -1.0, 1.0],
                    )
                for m, nn in pairs:
                    if nn == region.uid:
                        ub_coo.add([rid], [vm.index(TRADE, f"{m}->{nn}", t, sc.uid)], [-1.0])
                    if m == region.uid:
                        ub_coo.add([rid], [vm.index(TRADE, f"{m}->{nn}", t, sc.uid)], [1.0])

    problem = LpProblem(
        c=c,
        a_eq=eq.matrix((len(b_eq), n)),
        b_eq=np.array(b_eq, dtype=float),
        a_ub=ub_coo.matrix((len(b_ub), n)),
        b_ub=np.array(b_ub, dtype=float),
        lb=lb,
        ub=ub,
    )
    return problem, vm, cm


def objective_value(inst: MarketInstance, primal: np.ndarray, vm: VariableMap) -> float:
    """Expected total cost of a primal point, recomputed from instance data.

    Kept independent of the assembled objective vector so it can serve as an
    oracle for the envelope checks.
    """
    if primal.shape != (len(vm),):
        raise ValueError(f"primal has shape {primal.shape}, expected ({len(vm)},)")
    total = 0.0
    for u in inst.thermal_units:
        for t in range(inst.periods):
            total += u.energy_bid * primal[vm.index(G, u.uid, t)]
            total += u.up_reserve_bid * primal[vm.index(R_UP_G, u.uid, t)]
            total += u.dn_reserve_bid * primal[vm.index(R_DN_G, u.uid, t)]
    for s in inst.scenarios:
        for u in inst.thermal_units:
            for t in range(inst.periods):
                total += s.probability * (
                    u.up_redispatch_bid * primal[vm.index(DG_UP, u.uid, t, s.uid)]
                    - u.dn_redispatch_bid * primal[vm.index(DG_DN, u.uid, t, s.uid)]
                )
    return total


def dump_lp(problem: LpProblem, vm: VariableMap, cm: ConstraintMap, path) -> None:
    """Write the LP as row/col/value triplets plus bounds for external checks."""
    def key_str(key) -> str:
        k = key.k or "base"
        tail = f" {key.direction}" if getattr(key, "direction", None) else ""
        return f"{key.family if isinstance(key, RowKey) else key.kind} {key.entity} t{key.t} {k}{tail}"

    with open(path, "w") as fh:
        fh.write(f"columns {len(vm)}\n")
        for j, key in enumerate(vm.keys):
            fh.write(f"col {j} {key_str(key)} obj {problem.c[j]:.17g} "
                     f"lb {problem.lb[j]:.17g} ub {problem.ub[j]:.17g}\n")
        for side, mat, rhs, keys in (
            ("eq", problem.a_eq, problem.b_eq, cm.eq_keys),
            ("ub", problem.a_ub, problem.b_ub, cm.ub_keys),
        ):
            fh.write(f"rows {side} {len(keys)}\n")
            coo = mat.tocoo()
            by_row: dict[int, list[tuple[int, float]]] = {}
            for r, cc, v in zip(coo.row, coo.col, coo.data):
                by_row.setdefault(int(r), []).append((int(cc), float(v)))
            for i, key in enumerate(keys):
                fh.write(f"row {side} {i} {key_str(key)} rhs {rhs[i]:.17g} :")
                for cc, v in sorted(by_row.get(i, [])):
                    fh.write(f" {cc}:{v:.17g}")
                fh.write("\n")
