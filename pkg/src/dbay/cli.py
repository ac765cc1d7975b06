"""Command-line interface: ``dbay {solve,sweep,verify,replay}``.

Options can also come from a JSON file passed with ``--config``; explicit
flags override it. ``DBAY_OUTPUT_DIR`` overrides the default output
directory. Exit status is 0 on success, 2 on configuration errors and 1 when
a solver or check fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .exceptions import DBayError, InvalidInstance

OUTPUT_ENV = "DBAY_OUTPUT_DIR"

DEFAULTS = {
    "seed": 0,
    "seeds": 30,
    "sensors": 6,
    "targets": 12,
    "range": 1.0,
    "view_angle": 36.0,
    "wrap": True,
    "budget": 10,
    "budgets": "3..20",
    "grid_ks": "2..120",
    "reference_k": 720,
    "xi": 0.0,
    "sampler": "ei",
    "jobs": 1,
    "out": "results",
    "problem": None,
    "trace": None,
    "traces": False,
}


class ConfigError(ValueError):
    pass


def parse_int_list(text) -> list:
    """``"3..20"``, ``"3,5,8"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbay", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with option values (flags win)")
    sub = p.add_subparsers(dest="command", required=True)

    def generator_flags(sp):
        sp.add_argument("--sensors", type=int, default=None)
        sp.add_argument("--targets", type=int, default=None)
        sp.add_argument("--range", type=float, default=None, help="sensor range")
        sp.add_argument("--view-angle", type=float, default=None, help="angle of view in degrees")
        sp.add_argument("--no-wrap", dest="wrap", action="store_const", const=False, default=None,
                        help="do not wrap angle differences at +-180 degrees")
        sp.add_argument("--xi", type=float, default=None, help="exploration offset")
        sp.add_argument("--reference-k", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")

    s = sub.add_parser("solve", help="solve one instance")
    generator_flags(s)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--problem", default=None, help="JSON problem file instead of the generator")
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--sampler", default=None, help="'ei' or 'grid'")
    s.add_argument("--trace", default=None, help="write the message trace to this file")

    w = sub.add_parser("sweep", help="seeds x budgets experiment with CSV output")
    generator_flags(w)
    w.add_argument("--seeds", default=None, help="count N (seeds 0..N-1) or a list like 0,3,5..9")
    w.add_argument("--budgets", default=None, help="e.g. 3..20")
    w.add_argument("--grid-ks", default=None, help="grid sizes for the efficiency curve, e.g. 2..120")
    w.add_argument("--jobs", type=int, default=None)
    w.add_argument("--traces", action="store_const", const=True, default=None, help="write one trace per run")

    sub.add_parser("verify", help="run oracle cross-checks")

    r = sub.add_parser("replay", help="re-run the configuration in a trace file and compare")
    r.add_argument("trace_file")
    return p


def resolve(args, command) -> dict:
    """Merge defaults, config file, environment and flags (in rising priority)."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    if os.environ.get(OUTPUT_ENV):
        cfg["out"] = os.environ[OUTPUT_ENV]
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if command in ("solve",) and int(cfg["budget"]) < 3:
        raise ConfigError("budget must be at least 3")
    return cfg


def _problem(cfg, seed):
    from .benchmark import generate_problem

    return generate_problem(seed, int(cfg["sensors"]), int(cfg["targets"]), float(cfg["range"]),
                            float(cfg["view_angle"]), bool(cfg["wrap"]))


def cmd_solve(cfg) -> int:
    from .benchmark import grid_utility, relative_utility
    from .problem_io import load_problem
    from .runtime import Trace, run_to_completion

    if cfg["problem"]:
        instance = load_problem(cfg["problem"])
        seed = cfg["seed"]
    else:
        seed = int(cfg["seed"])
        instance = _problem(cfg, seed).instance
    budget = int(cfg["budget"])
    header = {"command": "solve", **{k: cfg[k] for k in sorted(cfg) if k not in ("trace", "out")}}
    sink = open(cfg["trace"], "w") if cfg["trace"] else None
    try:
        trace = Trace(sink=sink, header=header)
        res = run_to_completion(instance, budgets=budget, seed=seed, sampler=cfg["sampler"], xi=float(cfg["xi"]), trace=trace)
        digest = trace.digest
    finally:
        if sink is not None:
            sink.close()
    line = {
        "seed": seed,
        "budget": budget,
        "assignment": {str(k): v for k, v in res.assignment.items()},
        "utility": res.utility,
        "samples": res.metrics.total_samples,
        "messages": res.metrics.total_messages,
        "trace_sha256": digest,
    }
    if cfg["reference_k"] and not cfg["problem"]:
        ref = grid_utility(instance, int(cfg["reference_k"]))
        line["reference"] = ref
        line["relative"] = relative_utility(res.utility, ref)
    print(json.dumps(line, sort_keys=True))
    return 0


def cmd_sweep(cfg) -> int:
    from .benchmark import ExperimentConfig, run_experiment, sample_efficiency, summarize, write_csv
    from .runtime import Trace

    seeds = cfg["seeds"]
    seeds = list(range(int(seeds))) if isinstance(seeds, int) or str(seeds).isdigit() else parse_int_list(seeds)
    budgets = parse_int_list(cfg["budgets"])
    grid_ks = parse_int_list(cfg["grid_ks"])
    try:
        config = ExperimentConfig(
            seeds=tuple(seeds), budgets=tuple(budgets), n_sensors=int(cfg["sensors"]), n_targets=int(cfg["targets"]),
            sensor_range=float(cfg["range"]), view_angle=float(cfg["view_angle"]), reference_k=int(cfg["reference_k"]),
            wrap=bool(cfg["wrap"]), xi=float(cfg["xi"]), grid_ks=tuple(grid_ks),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    factory = None
    sinks = []
    if cfg["traces"]:
        (out / "traces").mkdir(exist_ok=True)

        def factory(seed, budget):
            fh = open(out / "traces" / f"seed{seed}_budget{budget}.ndjson", "w")
            sinks.append(fh)
            header = {"command": "solve", **{k: cfg[k] for k in sorted(cfg) if k not in ("trace", "out", "seeds", "budgets", "grid_ks", "jobs", "traces")},
                      "seed": seed, "budget": budget}
            return Trace(sink=fh, header=header)

    start = time.perf_counter()
    try:
        records, curve = run_experiment(config, jobs=int(cfg["jobs"]), trace_factory=factory)
    finally:
        for fh in sinks:
            if not fh.closed:
                fh.close()
    write_csv(records, out / "results.csv")
    means = summarize(records)
    with open(out / "fig5a.dat", "w") as fh:
        fh.write("# budget dbay_relative grid_relative\n")
        for b in budgets:
            fh.write(f"{b} {means['dbay'][b]!r} {means['grid'][b]!r}\n")
    eff = sample_efficiency(means["dbay"], curve)
    with open(out / "fig5b.dat", "w") as fh:
        fh.write("# budget grid_k_to_match\n")
        for b in budgets:
            fh.write(f"{b} {eff[b]}\n")
    with open(out / "grid_curve.dat", "w") as fh:
        fh.write("# k grid_relative\n")
        for k, v in sorted(curve.items()):
            fh.write(f"{k} {v!r}\n")
    print(f"{len(records)} records for {len(seeds)} seeds in {time.perf_counter() - start:.1f}s -> {out}", file=sys.stderr)
    return 0


def cmd_verify(cfg) -> int:
    from .checks import run_all

    ok = True
    for res in run_all():
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


def cmd_replay(trace_file) -> int:
    from .runtime import read_trace

    try:
        header, digest, count = read_trace(trace_file)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read trace {trace_file}: {exc}") from exc
    if not header:
        raise ConfigError("trace file has no header line")
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in header.items() if k in DEFAULTS})
    cfg["trace"] = None
    # rerun silently and compare digests
    from .problem_io import load_problem
    from .runtime import run_to_completion

    if cfg["problem"]:
        instance = load_problem(cfg["problem"])
    else:
        instance = _problem(cfg, int(cfg["seed"])).instance
    res = run_to_completion(instance, budgets=int(cfg["budget"]), seed=cfg["seed"], sampler=cfg["sampler"], xi=float(cfg["xi"]))
    same = res.trace.digest == digest and res.trace.count == count
    print(json.dumps({"records": count, "file_sha256": digest, "replay_sha256": res.trace.digest, "identical": same}))
    return 0 if same else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "replay":
            return cmd_replay(args.trace_file)
        cfg = resolve(args, args.command)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_verify(cfg)
    except (ConfigError, FileNotFoundError, InvalidInstance) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DBayError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
