"""Command-line entry point: solve, plan, sweep, validate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .costmodel import Coordination
from .demand import Lattice, aggregates
from .experiments import (CHAIN, DESIGN_CLASSES, MODES, SWEEP_AXES, ScenarioConfig, load_config,
                          run_scenario, run_sweep, write_reports)
from .netgen import evaluate_discrete, generate_plan, reoptimized_plan, relative_errors
from .params import InvalidParameterError
from .solver import optimize_vehicle_size, solve_design


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "design_class", None):
        changes["design_class"] = args.design_class
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "starts", None) is not None:
        changes["starts"] = args.starts
    if getattr(args, "K", None) is not None:
        changes["K"] = args.K
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def cmd_solve(args) -> int:
    cfg = _config(args).replace(sweep_axis="none", sweep_values=[])
    report = run_scenario(cfg)
    out = Path(args.out)
    write_reports([report], out)
    p = cfg.params
    lat = Lattice(p.L, p.W, p.n, p.m)
    for run in report.runs:
        (out / f"{cfg.name}_{run.label}_design.csv").write_text(run.design.to_csv(lat.x, lat.y))
        print(f"{run.label:24s} K={run.K:3d} GC={run.GC:10.2f} AC={run.costs.AC:9.2f} "
              f"UC={run.costs.UC:9.2f} converged={run.converged}")
    for k, v in report.savings.items():
        print(f"saving {k}: {100 * v:.2f}%")
    for f in report.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_plan(args) -> int:
    cfg = _config(args)
    p = cfg.params
    field_ = cfg.field()
    agg = aggregates(field_, p.n, p.m)
    mode = Coordination(cfg.mode)
    if cfg.K is None:
        rep = optimize_vehicle_size(p, agg, mode).report
    else:
        rep = solve_design(p, agg, cfg.K, mode)
    if args.fine_tune:
        plan, rep = reoptimized_plan(rep.design, agg.lattice, p, agg)
    else:
        plan = generate_plan(rep.design, agg.lattice, active=agg.lam > 0)
    discrete = evaluate_discrete(plan, field_, p, mode=mode, nx=args.nx, ny=args.ny)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.name}_plan.json").write_text(plan.to_json() + "\n")
    (out / f"{cfg.name}_plan.csv").write_text(plan.to_csv())
    (out / f"{cfg.name}_plot.json").write_text(json.dumps(plan.plot_data(), indent=2) + "\n")
    errs = relative_errors(discrete, rep.costs)
    comparison = {"K": int(rep.design.K), "converged": rep.converged, "continuous": rep.costs.to_dict(),
                  "discrete": discrete.to_dict(), "relative_error": {k: float(v) for k, v in errs.items()},
                  "lines": len(plan.lines), "stops": plan.n_stops, "flags": plan.flags}
    (out / f"{cfg.name}_comparison.json").write_text(json.dumps(comparison, indent=2) + "\n")
    print(f"lines={len(plan.lines)} stops={plan.n_stops} K={rep.design.K}")
    for k, v in errs.items():
        print(f"{k:4s} continuous={getattr(rep.costs, k):10.2f} discrete={getattr(discrete, k):10.2f} "
              f"error={100 * v:+.2f}%")
    return 0 if rep.converged else 1


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.axis:
        cfg = cfg.replace(sweep_axis=args.axis, sweep_values=[float(v) for v in args.values])
    reports = run_sweep(cfg)
    write_reports(reports, args.out)
    ok = True
    for rep in reports:
        sav = " ".join(f"{k}={100 * v:.2f}%" for k, v in rep.savings.items())
        gcs = " ".join(f"{r.label}:{r.GC:.2f}" for r in rep.runs)
        print(f"{rep.axis}={rep.value} {gcs} {sav}")
        for f in rep.failures:
            print(f"FAILED {rep.axis}={rep.value}: {f}", file=sys.stderr)
        ok = ok and rep.ok
    return 0 if ok else 1


def validate_reference(cfg: ScenarioConfig) -> list[tuple[str, bool, str]]:
    """Compare a fixed-K solve and its discrete plan with the config's reference block."""
    ref = cfg.reference
    if not ref:
        raise InvalidParameterError(["validate needs a 'reference' block in the config"])
    if cfg.K is None:
        raise InvalidParameterError(["validate needs a fixed K in the config"])
    p = cfg.params
    field_ = cfg.field()
    t0 = time.perf_counter()
    agg = aggregates(field_, p.n, p.m)
    rep = solve_design(p, agg, cfg.K, Coordination(cfg.mode))
    elapsed = time.perf_counter() - t0
    checks = [("converged", rep.converged, rep.message or "ok")]
    gc_tol = float(ref.get("gc_rtol", 0.02))
    comp_tol = float(ref.get("component_rtol", 0.03))
    if "GC" in ref:
        err = rep.GC / ref["GC"] - 1
        checks.append(("GC", abs(err) <= gc_tol, f"{rep.GC:.2f} vs {ref['GC']} ({100 * err:+.2f}%)"))
    for name, target in (ref.get("components") or {}).items():
        val = getattr(rep.costs, name)
        err = val / target - 1
        checks.append((name, abs(err) <= comp_tol, f"{val:.2f} vs {target} ({100 * err:+.2f}%)"))
    if "discrete_rtol" in ref:
        plan = generate_plan(rep.design, agg.lattice, active=agg.lam > 0)
        disc = evaluate_discrete(plan, field_, p, mode=cfg.mode)
        err = disc.GC / rep.GC - 1
        checks.append(("discrete GC", abs(err) <= float(ref["discrete_rtol"]),
                       f"{disc.GC:.2f} vs {rep.GC:.2f} ({100 * err:+.2f}%)"))
    if "time_limit" in ref:
        checks.append(("runtime", elapsed <= float(ref["time_limit"]), f"{elapsed:.3f} s"))
    return checks


def cmd_validate(args) -> int:
    cfg = _config(args)
    checks = validate_reference(cfg)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feederca", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, *, out=True):
        sp.add_argument("--config", help="YAML or JSON scenario file")
        if out:
            sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--mode", choices=MODES, help="schedule coordination")
        sp.add_argument("--seed", type=int, help="seed for multi-start initial designs")
        sp.add_argument("--starts", type=int, help="number of starts (with --seed)")
        sp.add_argument("-K", type=int, help="fix the vehicle size instead of searching")

    sp = sub.add_parser("solve", help="solve one scenario")
    common(sp)
    sp.add_argument("--design-class", choices=DESIGN_CLASSES + (CHAIN,))
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("plan", help="solve, place lines and stops, evaluate the discrete plan")
    common(sp)
    sp.add_argument("--fine-tune", action="store_true",
                    help="remove the fractional line residual and re-solve before placement")
    sp.add_argument("--nx", type=int, default=200)
    sp.add_argument("--ny", type=int, default=300)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("sweep", help="run a parameter sweep")
    common(sp)
    sp.add_argument("--design-class", choices=DESIGN_CLASSES + (CHAIN,))
    sp.add_argument("--axis", choices=SWEEP_AXES)
    sp.add_argument("--values", nargs="*", default=[])
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="check a solve against the config's reference values")
    common(sp, out=False)
    sp.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidParameterError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
