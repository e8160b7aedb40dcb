"""Command-line entry point: clear, verify, compare-ab, sweep.

Exit codes: 0 ok, 2 invalid instance, 3 infeasible, 4 solver failure,
5 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .engine import (
    InfeasibleMarket,
    InstanceInvalid,
    KktRejected,
    clear_market,
    compare_res_reserve,
)
from .instance import build_two_bus_fixture, load_instance
from .lpbuild import BuildConfig, G, R_DN_G, R_DN_W, R_UP_G, R_UP_W, W, dump_lp
from .pricing import write_price_csv
from .properties import finite_difference_oracle, run_all
from .scenarios import build_ieee118_style_instance
from .settlement import write_settlement_csv
from .solve import SolverFailure, SolverOptions

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_PROPERTY = 5


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="resmarket",
        description="Scenario-based energy-reserve market clearing with "
                    "renewable reserve and regional RPS targets.",
    )
    p.add_argument("--instance", help="instance file (JSON); omit to use a built-in system")
    p.add_argument("--mode", choices=["clear", "verify", "sweep", "compare-ab"],
                   default="clear")
    p.add_argument("--backend", choices=["reference", "highs"], default="reference")
    p.add_argument("--pivot-rule", choices=["dantzig", "bland"], default="dantzig",
                   help="pivot selection of the reference backend")
    p.add_argument("--tol", type=float, default=1e-6, help="verification tolerance")
    p.add_argument("--fuzz", type=int, default=0, metavar="N",
                   help="verify mode: also run the property suite on N seeded random instances")
    p.add_argument("--seed", type=int, default=7, help="seed for built-in synthetic systems")
    p.add_argument("--res-reserve", choices=["on", "off"], default="on",
                   help="allow renewables to sell reserve")
    p.add_argument("--out", default=None,
                   help="output directory (default $RESMARKET_OUT or ./out)")
    p.add_argument("--format", choices=["csv", "table", "json"], default="table")
    p.add_argument("--fd-oracle", action="store_true",
                   help="also run the finite-difference envelope checks in verify mode")
    p.add_argument("--penetration", type=float, default=0.5,
                   help="renewable penetration of the synthetic system")
    p.add_argument("--deviation-level", type=float, default=0.05,
                   help="renewable deviation level of the synthetic system")
    p.add_argument("--congested", action="store_true",
                   help="tight tie-line limits in the synthetic system")
    p.add_argument("--one-sided-flows", action="store_true",
                   help="emit line limits in the forward direction only")
    p.add_argument("--dump-lp", action="store_true", help="write the assembled LP as text")
    p.add_argument("--system", choices=["two-bus", "ieee118"], default="two-bus",
                   help="built-in system used when no instance file is given")
    return p


class UnreadableInstance(RuntimeError):
    pass


def _load(args):
    if args.instance:
        try:
            return load_instance(args.instance)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UnreadableInstance(f"cannot read instance {args.instance}: {exc}") from exc
    if args.mode == "sweep" or args.system == "ieee118":
        return build_ieee118_style_instance(
            seed=args.seed, penetration=args.penetration,
            deviation_level=args.deviation_level, congested=args.congested)
    return build_two_bus_fixture()


def _options(args) -> SolverOptions:
    return SolverOptions(backend=args.backend, pivot_rule=args.pivot_rule,
                         canonicalize_res_reserve=True)


def _config(args) -> BuildConfig:
    return BuildConfig(
        two_sided_flows=not args.one_sided_flows,
        res_reserve=args.res_reserve == "on",
        prune_slack_flow_rows=args.backend == "highs",
    )


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("RESMARKET_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _round3(x: float) -> str:
    return f"{x:.3f}"


def _print_clear_tables(result) -> None:
    inst = result.instance
    print(f"objective  {result.objective:.2f} $")
    header = f"{'unit':8s} {'t':>3s} {'q':>10s} {'r_up':>10s} {'r_dn':>10s} {'pi':>8s} {'pi_up':>8s} {'pi_dn':>8s}"
    print(header)
    rows = [(u.uid, result.prices.thermal, (G, R_UP_G, R_DN_G)) for u in inst.thermal_units]
    rows += [(u.uid, result.prices.renewable, (W, R_UP_W, R_DN_W)) for u in inst.renewable_units]
    for uid, book, kinds in rows:
        for t in range(inst.periods):
            p = book[(uid, t)]
            q, r_up, r_dn = (result.solution.value(kind, uid, t) for kind in kinds)
            print(f"{uid:8s} {t:3d} {q:10.3f} {r_up:10.3f} {r_dn:10.3f} "
                  f"{_round3(p.energy):>8s} {_round3(p.up_reserve):>8s} {_round3(p.dn_reserve):>8s}")
    print(f"{'entity':8s} {'expected payment':>18s}")
    for uid, st in result.statement.entities.items():
        print(f"{uid:8s} {st.expected_total:18.3f}")
    print(f"merchandise surplus {result.statement.merchandise_surplus:.3f}  "
          f"congestion rent {result.statement.congestion_rent:.3f}")


def cmd_clear(args) -> int:
    inst = _load(args)
    out = _out_dir(args)
    try:
        result = clear_market(inst, _options(args), _config(args), kkt_tol=args.tol)
    except InstanceInvalid as exc:
        print(f"invalid instance:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleMarket as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, KktRejected) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_price_csv(result.prices, inst, out / "prices.csv")
    write_settlement_csv(result.statement, inst, out / "settlement.csv")
    summary = {
        "objective": result.objective,
        "status": result.solution.status,
        "kkt_worst": result.kkt.worst,
        "merchandise_surplus": result.statement.merchandise_surplus,
        "congestion_rent": result.statement.congestion_rent,
    }
    (out / "solution.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.dump_lp:
        dump_lp(result.problem, result.vm, result.cm, out / "problem.lp.txt")
    if args.format == "table":
        _print_clear_tables(result)
    elif args.format == "json":
        print(json.dumps(summary, indent=2))
    else:
        print(f"objective {result.objective!r}; artifacts in {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = _load(args)
    out = _out_dir(args)
    try:
        result = clear_market(inst, _options(args), _config(args), kkt_tol=args.tol)
    except InstanceInvalid as exc:
        print(f"invalid instance:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleMarket as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, KktRejected) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    reports = run_all(result, tol=args.tol)
    if args.fd_oracle:
        fd_fail = []
        for kind, units in (("load", inst.loads), ("thermal", inst.thermal_units),
                            ("renewable", inst.renewable_units)):
            for u in units:
                lo, hi = finite_difference_oracle(result, kind, u.uid, opts=_options(args))
                book = getattr(result.prices, kind)
                analytic = book[(u.uid, 0)].energy
                if not (lo - 1e-4 <= analytic <= hi + 1e-4):
                    fd_fail.append(f"{u.uid}: analytic {analytic} outside [{lo}, {hi}]")
        from .properties import PropertyReport
        reports.append(PropertyReport(
            name="envelope_oracle", passed=not fd_fail,
            worst=float(len(fd_fail)), witness="; ".join(fd_fail[:3])))
    if args.fuzz:
        from .engine import InfeasibleMarket
        from .properties import PropertyReport, random_instance

        opts = SolverOptions(backend=args.backend, pivot_rule=args.pivot_rule)
        cleared_count = 0
        seed = args.seed
        worst = 0.0
        witness = ""
        while cleared_count < args.fuzz:
            inst_f = random_instance(seed)
            seed += 1
            try:
                res_f = clear_market(inst_f, opts, kkt_tol=args.tol)
            except InfeasibleMarket:
                continue
            cleared_count += 1
            for r in run_all(res_f, tol=args.tol):
                if r.worst > worst:
                    worst, witness = r.worst, f"seed {seed-1}: {r.name}"
        reports.append(PropertyReport(
            name=f"fuzz_{args.fuzz}_instances", passed=worst <= args.tol,
            worst=worst, witness=witness))
    doc = [{"name": r.name, "passed": r.passed, "worst": r.worst,
            "witness": r.witness, "vacuous": r.vacuous} for r in reports]
    (out / "properties.json").write_text(json.dumps(doc, indent=2) + "\n")
    for r in reports:
        print(r)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_PROPERTY


def cmd_compare_ab(args) -> int:
    inst = _load(args)
    out = _out_dir(args)
    try:
        cmp = compare_res_reserve(inst, _options(args), _config(args))
    except InstanceInvalid as exc:
        print(f"invalid instance:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleMarket as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, KktRejected) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rows = [["case", "res_reserve", "objective", "thermal_payment", "res_payment",
             "load_payment", "congestion_rent"]]
    for label, res in (("A", cmp.case_a), ("B", cmp.case_b)):
        st = res.statement
        thermal = sum(e.expected_total for e in st.entities.values() if e.kind == "thermal")
        renew = sum(e.expected_total for e in st.entities.values() if e.kind == "renewable")
        rows.append([label, "on" if label == "A" else "off"] + [repr(float(v)) for v in (
            res.objective, thermal, renew, st.total_load_payment(), st.congestion_rent)])
    with open(out / "compare_ab.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    print(f"cost A {cmp.cost_a:.2f}  cost B {cmp.cost_b:.2f}"
          + ("  (B used the schedule-pinned fallback)" if cmp.b_infeasible_strict else ""))
    if cmp.cost_a > cmp.cost_b + args.tol:
        print("renewable reserve increased cost; inspect the instance", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    levels = sorted({0.05, 0.10, 0.15, args.deviation_level})
    rows = [["deviation_level", "objective", "thermal_profit", "res_profit", "min_res_profit"]]
    for lvl in levels:
        inst = build_ieee118_style_instance(
            seed=args.seed, penetration=args.penetration,
            deviation_level=lvl, congested=args.congested)
        try:
            res = clear_market(inst, _options(args), _config(args), kkt_tol=args.tol)
        except (InstanceInvalid, InfeasibleMarket, SolverFailure, KktRejected) as exc:
            print(f"level {lvl}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        any_k = inst.scenarios[0].uid if inst.scenarios else ""
        profits = {uid: st.realized_profit(any_k) for uid, st in res.statement.entities.items()
                   if st.kind != "load"}
        thermal = sum(v for uid, v in profits.items() if res.statement.of(uid).kind == "thermal")
        renew = sum(v for uid, v in profits.items() if res.statement.of(uid).kind == "renewable")
        worst = min((v for uid, v in profits.items()
                     if res.statement.of(uid).kind == "renewable"), default=0.0)
        rows.append([lvl] + [repr(float(v)) for v in (res.objective, thermal, renew, worst)])
        print(f"deviation {lvl:.2f}: objective {res.objective:.2f} "
              f"thermal profit {thermal:.2f} renewable profit {renew:.2f}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    np.random.seed(args.seed)  # anything stochastic downstream stays reproducible
    handler = {
        "clear": cmd_clear,
        "verify": cmd_verify,
        "compare-ab": cmd_compare_ab,
        "sweep": cmd_sweep,
    }[args.mode]
    try:
        return handler(args)
    except UnreadableInstance as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
