"""Command-line front end.

Exit codes: 0 all requested checks pass, 1 a check fails (or no positive
MASP exists), 2 configuration error, 3 simulation blow-up or Zeno abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional

import yaml

from . import analysis
from .hybridsim import (SimulationError, ZenoSuspicion, read_events_csv, read_trace_csv,
                        simulate, write_events_csv, write_trace_csv)
from .kfun import KfunError, NoPositiveMasp, REGISTRY, lookup, masp
from .svgplot import write_svg
from .systems import SCENARIOS, ConfigurationError, PreconditionError, Scenario, build_scenario
from .triggers import PeriodicLaw, SupNormLaw, WeightedLaw

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3

_CONFIG_KEYS = {"scenario", "params", "sim", "trigger", "checks", "emit"}
_SIM_KEYS = ("T_end", "h", "stop_epsilon", "t0", "max_events")


class ConfigError(Exception):
    pass


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def load_config(target: str) -> dict:
    """A registry id becomes ``{"scenario": id}``; a file path is read as YAML."""
    p = Path(target)
    if p.suffix in (".yaml", ".yml") or p.is_file():
        try:
            cfg = yaml.safe_load(p.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {target!r}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a mapping")
        unknown = set(cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "scenario" not in cfg:
            raise ConfigError("config file lacks a 'scenario' entry")
        return cfg
    return {"scenario": target}


def apply_trigger(sc: Scenario, block: Optional[dict]) -> Scenario:
    """Swap the sampling law according to a config ``trigger`` block."""
    if not block:
        return sc
    block = dict(block)
    kind = block.pop("type", None)
    shadow = block.pop("shadow", None)
    shadow_law = None
    if shadow is not None:
        shadow_law = SupNormLaw(lookup(shadow.get("gamma", "two_square")),
                                 lookup(shadow.get("U", "half_square")))
    if kind == "periodic":
        law = PeriodicLaw(float(block.pop("T")))
    elif kind == "masp":
        g = lookup(block.pop("gamma", "square_plus_quartic"))
        u = lookup(block.pop("U", "half_square"))
        law = PeriodicLaw(masp(u, g, float(block.pop("R0", 1.0))).period_T)
        shadow_law = shadow_law or SupNormLaw(g, u)
    elif kind == "theorem1":
        law = SupNormLaw(lookup(block.pop("gamma")), lookup(block.pop("U", "half_square")))
    elif kind == "weighted":
        if not isinstance(sc.trigger, WeightedLaw):
            raise ConfigError(f"scenario {sc.name!r} has no weighted law to rescale")
        law = replace(sc.trigger, a=float(block.pop("a", sc.trigger.a)),
                      b=float(block.pop("b", sc.trigger.b)))
    else:
        raise ConfigError(f"unknown trigger type {kind!r}")
    if block:
        raise ConfigError(f"unknown trigger key(s): {', '.join(sorted(block))}")
    return sc.with_trigger(law, shadow_law)


def resolve(cfg: dict, overrides: dict, sim_flags: dict, checks: Optional[list]):
    """Build the scenario and the fully resolved config; raise ``ConfigError``."""
    params = dict(cfg.get("params") or {})
    params.update(overrides)
    sim = dict(cfg.get("sim") or {})
    sim.update({k: v for k, v in sim_flags.items() if v is not None})
    try:
        sc = build_scenario(cfg["scenario"], params, sim)
        sc = apply_trigger(sc, cfg.get("trigger"))
    except (ConfigurationError, PreconditionError, KfunError, KeyError, TypeError,
            ValueError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from None
    if checks is None:
        checks = cfg.get("checks")
    if checks is None:
        checks = analysis.default_checks(sc)
    checks = list(checks)
    try:
        analysis.validate_checks(sc, checks)
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None
    resolved = {
        "scenario": cfg["scenario"],
        "params": {k: v for k, v in sc.params.items() if k in SCENARIOS[cfg["scenario"]][1]},
        "sim": {**asdict(sc.sim), "w0": list(sc.sim.w0)},
        "trigger": sc.trigger.describe(),
        "trigger_block": cfg.get("trigger"),
        "shadow": sc.shadow.describe() if sc.shadow is not None else None,
        "checks": checks,
        "emit": {"csv": True, "report": True, "svg": True, **(cfg.get("emit") or {})},
    }
    return sc, resolved


def _state_labels(sc: Scenario) -> list:
    nx, nz, ne = sc.plant.n_x, sc.plant.n_z, sc.controller.estimator_dim
    return ([f"x{i}" if nx > 1 else "x" for i in range(nx)]
            + [f"z{i}" if nz > 1 else "z" for i in range(nz)]
            + [f"theta_hat{i}" if ne > 1 else "theta_hat" for i in range(ne)])


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(analysis.jsonable(obj), indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def execute(sc: Scenario, resolved: dict, out: Path) -> tuple[int, dict]:
    """Simulate, analyze and write artifacts. Returns ``(exit_code, report_dict)``."""
    out.mkdir(parents=True, exist_ok=True)
    emit = resolved["emit"]
    try:
        res = simulate(sc)
    except SimulationError as exc:
        part = exc.partial
        if part is not None and emit.get("csv", True):
            write_trace_csv(part.trace, out / "trace.csv")
            write_events_csv(part.events, out / "events.csv")
        sim_info = {"termination": "aborted", "error": str(exc)}
        if isinstance(exc, ZenoSuspicion):
            sim_info["min_interval"] = exc.min_interval
        rep = {"config": resolved, "simulation": sim_info, "analysis": None}
        _write_json(out / "report.json", rep)
        return EXIT_SIM, rep
    if emit.get("csv", True):
        write_trace_csv(res.trace, out / "trace.csv")
        write_events_csv(res.events, out / "events.csv")
    report = analysis.analyze_result(sc, res, resolved["checks"])
    rep = {"config": resolved,
           "simulation": {"termination": res.termination, **res.diagnostics},
           "analysis": report.to_dict()}
    if emit.get("report", True):
        _write_json(out / "report.json", rep)
    if emit.get("svg", True):
        write_svg(res.trace, res.events, out / "plot.svg", _state_labels(sc), sc.name)
    return (EXIT_OK if report.passed else EXIT_CHECK), rep


def _sim_flags(args) -> dict:
    return {"T_end": getattr(args, "T_end", None), "h": getattr(args, "h", None)}


def _checks_arg(text: Optional[str]):
    if text is None:
        return None
    return [c.strip() for c in text.split(",") if c.strip()]


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    if args.replay:
        return cmd_replay(args)
    try:
        cfg = load_config(args.target)
        sc, resolved = resolve(cfg, parse_overrides(args.set), _sim_flags(args),
                               _checks_arg(args.checks))
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    if args.no_svg:
        resolved["emit"]["svg"] = False
    code, rep = execute(sc, resolved, Path(args.out or "out"))
    _summary(rep, code)
    return code


def _summary(rep: dict, code: int) -> None:
    sim = rep["simulation"]
    print(f"{rep['config']['scenario']}: {sim['termination']}"
          + (f", {sim.get('n_events')} events" if "n_events" in sim else ""))
    if rep.get("analysis"):
        for c in rep["analysis"]["checks"]:
            print(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}  worst={c['worst_margin']}")
    elif "error" in sim:
        print(f"  {sim['error']}", file=sys.stderr)
    print(f"exit {code}")


def cmd_replay(args) -> int:
    """Re-run analysis on a stored trace/events pair."""
    src = Path(args.replay if getattr(args, "replay", None) else args.directory)
    target = getattr(args, "target", None) or getattr(args, "scenario", None)
    try:
        if target is None:
            stored = json.loads((src / "report.json").read_text())["config"]
            cfg = {"scenario": stored["scenario"], "params": stored.get("params"),
                   "sim": {k: v for k, v in (stored.get("sim") or {}).items() if k in _SIM_KEYS},
                   "trigger": stored.get("trigger_block"), "checks": stored.get("checks")}
        else:
            cfg = load_config(target)
        sc, resolved = resolve(cfg, parse_overrides(args.set), _sim_flags(args),
                               _checks_arg(args.checks))
        trace = read_trace_csv(src / "trace.csv")
        events = read_events_csv(src / "events.csv")
    except (ConfigError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        return _fail(f"cannot replay {src}: {exc}", EXIT_CONFIG)
    if trace.w.shape[1] != sc.n_w:
        return _fail(f"trace has {trace.w.shape[1]} state columns, scenario expects {sc.n_w}",
                     EXIT_CONFIG)
    report = analysis.analyze(sc, trace, events, "replay", resolved["checks"])
    rep = {"config": resolved, "simulation": {"termination": "replay", "source": str(src)},
           "analysis": report.to_dict()}
    out = Path(args.out) if getattr(args, "out", None) else src
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "replay-report.json", rep)
    code = EXIT_OK if report.passed else EXIT_CHECK
    _summary(rep, code)
    return code


def cmd_masp(args) -> int:
    try:
        U, g = lookup(args.U), lookup(args.gamma)
    except KeyError as exc:
        return _fail(str(exc).strip("'\""), EXIT_CONFIG)
    try:
        res = masp(U, g, args.R0, args.grid)
    except NoPositiveMasp as exc:
        return _fail(str(exc), EXIT_CHECK)
    except KfunError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    print(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _sweep_one(job):
    cfg, overrides, flags, checks, out = job
    try:
        sc, resolved = resolve(cfg, overrides, flags, checks)
    except ConfigError as exc:
        return EXIT_CONFIG, None, str(exc)
    resolved["emit"]["svg"] = False
    code, rep = execute(sc, resolved, Path(out))
    nx = sc.plant.n_x
    return code, rep, nx


_SWEEP_COLUMNS = ["value", "exit_code", "n_events", "min_interval", "tail_interval",
                  "final_x_norm", "ultimate_bound"]


def cmd_sweep(args) -> int:
    values = [_parse_value(v.strip()) for v in (args.values or "").split(",") if v.strip()]
    if not values:
        return _fail("empty values list", EXIT_CONFIG)
    try:
        cfg = load_config(args.target)
        base = parse_overrides(args.set)
        resolve(cfg, {**base, args.param: values[0]}, _sim_flags(args), _checks_arg(args.checks))
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, {**base, args.param: v}, _sim_flags(args), _checks_arg(args.checks),
             str(out / f"{args.param}={v}")) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    rows = []
    for v, (code, rep, _) in zip(values, results):
        row = {"value": v, "exit_code": code}
        if rep and rep.get("analysis"):
            st = rep["analysis"]["stats"]
            row.update(n_events=st["interevent"]["count"], min_interval=st["interevent"]["min"],
                       tail_interval=st["interevent"]["tail_mean"],
                       final_x_norm=st["convergence"]["x_final_norm"],
                       ultimate_bound=st["convergence"]["ultimate_bound"])
        rows.append(row)
    tmp = out / "summary.csv.tmp"
    with open(tmp, "w", newline="") as fh:
        wr = csv.DictWriter(fh, _SWEEP_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: _cell(r.get(k)) for k in _SWEEP_COLUMNS})
    tmp.replace(out / "summary.csv")
    for r in rows:
        print(", ".join(f"{k}={_cell(r.get(k))}" for k in _SWEEP_COLUMNS))
    return max(code for code, _, _ in results)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v if math.isfinite(v) else ""
    return v


def cmd_list(args) -> int:
    for name, (_, defaults) in SCENARIOS.items():
        print(f"{name}: " + ", ".join(f"{k}={v}" for k, v in defaults.items()))
    print("comparison functions: " + ", ".join(sorted(REGISTRY)))
    return EXIT_OK


def _add_common(p):
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="parameter override")
    p.add_argument("--T-end", dest="T_end", type=float, help="final time")
    p.add_argument("--h", type=float, help="integrator step")
    p.add_argument("--checks", help="comma-separated check names")
    p.add_argument("--out", help="output directory (default: out, or DIR when replaying)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="etclab", description="Event-triggered control laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and check its certificates")
    p.add_argument("target", help="scenario id or YAML config path")
    _add_common(p)
    p.add_argument("--no-svg", action="store_true", help="skip plot.svg")
    p.add_argument("--replay", metavar="DIR", help="analyze a stored trace instead of simulating")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-run analysis on trace.csv/events.csv in a directory")
    p.add_argument("directory")
    p.add_argument("--scenario", help="scenario id or config (default: from report.json)")
    _add_common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("masp", help="maximum allowable sampling period")
    p.add_argument("--U", default="half_square")
    p.add_argument("--gamma", default="two_square")
    p.add_argument("--R0", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=4096)
    p.set_defaults(func=cmd_masp)

    p = sub.add_parser("sweep", help="one run per parameter value, with a summary CSV")
    p.add_argument("target")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("list-scenarios", help="registered scenarios and defaults")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
