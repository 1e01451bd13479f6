"""Command line entry point ``curveflow``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import interp
from .diagnostics import classify_limit
from .energies import adapted_energy
from .io import dumps, load_curve, write_json
from .scenarios import (
    ConfigError,
    list_scenarios,
    load_config,
    run_scenario,
    scenario_config,
    scenario_ok,
)

log = logging.getLogger("curveflow")


def _summary(report: dict) -> dict:
    keep = ("name", "status", "T_hat", "steps", "rejections", "t_final", "runtime_s")
    out = {k: report[k] for k in keep if k in report}
    out["diagnostics"] = sorted(report.get("diagnostics", {}))
    return out


def _run(cfg, out, plots):
    res = run_scenario(cfg, out_dir=out, plots=plots)
    return res.report, str(res.run_dir) if res.run_dir else None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report, run_dir = _run(cfg, args.out, not args.no_plots)
    print(dumps(dict(_summary(report), run_dir=run_dir), indent=2))
    return 0 if scenario_ok(report) else 1


def cmd_energy(args) -> int:
    curve = load_curve(args.curve)
    rep = adapted_energy(curve, sigma=args.sigma, lam=args.lam)
    print(rep.to_json())
    return 0


def cmd_classify(args) -> int:
    curve = load_curve(args.curve)
    print(dumps(classify_limit(curve).to_dict(), indent=2))
    return 0


def cmd_verify_interp(args) -> int:
    d = {}
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise ConfigError(f"config not found: {p}")
        d = json.loads(p.read_text())
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = interp.BatchConfig.from_dict(d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.double:
        stab, rows = interp.doubling_check(cfg, threads=args.threads)
        write_json(stab.to_dict(), out / "stability.json")
        rows = [r for r in rows if r["trial"] < cfg.trials]
    else:
        rows = interp.run_batch(cfg, threads=args.threads)
    summary = interp.summarize(rows)
    interp.write_batch_csv(rows, out / "batch.csv")
    interp.write_summary({"config": cfg.to_dict(), "groups": summary,
                          "lemmas": interp.lemma_summary(rows)}, out / "summary.json")
    if not args.no_plots:
        from .plotting import plot_interp_summary

        plot_interp_summary(summary, out / "ratios.png")
    finite = all(g["finite"] for g in summary.values())
    print(dumps({"trials": cfg.trials, "rows": len(rows), "finite": finite,
                 "lemmas": interp.lemma_summary(rows), "out": str(out)}, indent=2))
    if args.double and not stab.stable:
        return 1
    return 0 if finite else 1


def _scenario_job(args):
    name, out, plots, seed = args
    cfg = scenario_config(name)
    if seed is not None:
        cfg.seed = seed
    return _run(cfg, out, plots)


def cmd_scenarios(args) -> int:
    if args.action == "list":
        for name in list_scenarios():
            print(f"{name:28s} {scenario_config(name).description}")
        return 0
    if not args.name:
        raise ConfigError("scenarios run needs a scenario name or 'all'")
    names = list_scenarios() if args.name == ["all"] else args.name
    for n in names:
        scenario_config(n)
    jobs = [(n, args.out, not args.no_plots, args.seed) for n in names]
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            results = list(ex.map(_scenario_job, jobs))
    else:
        results = [_scenario_job(j) for j in jobs]
    ok = True
    for report, run_dir in results:
        print(dumps(dict(_summary(report), run_dir=run_dir)))
        ok &= scenario_ok(report)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the random seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out", default="run", help="output directory (default: run)")
    common.add_argument("--no-plots", action="store_true", help="skip matplotlib figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="curveflow", description="Geometric flows of open and closed curves.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario config")
    s.add_argument("--config", required=True, help="scenario JSON file")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("energy", parents=[common], help="energies of a curve file")
    s.add_argument("curve", help="curve CSV file")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--lam", type=float, default=1.0)
    s.set_defaults(func=cmd_energy)

    s = sub.add_parser("classify", parents=[common], help="classify a curve as line or borderline elastica")
    s.add_argument("curve", help="curve CSV file")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("verify-interp", parents=[common], help="randomized interpolation inequality batch")
    s.add_argument("--config", default=None, help="batch JSON file (BatchConfig fields)")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--double", action="store_true",
                   help="also run the doubled batch and check stability of the maxima")
    s.set_defaults(func=cmd_verify_interp)

    s = sub.add_parser("scenarios", parents=[common], help="list or run shipped scenarios")
    s.add_argument("action", choices=("list", "run"))
    s.add_argument("name", nargs="*", help="scenario names, or 'all'")
    s.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
