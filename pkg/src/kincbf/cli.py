"""Command-line front end.

    kincbf run <file> [--set key=value]... [--out dir]
    kincbf sweep <file> [--param name --values v1,v2,...] [--out dir]
    kincbf verify models|filters|bounds|all [--inject-fault psi_sign]

Exit codes: 0 success, 2 safety violation (or failed verification),
1 error.  ``KINCBF_OUTPUT_DIR`` overrides the output directory named in a
scenario file; ``--out`` overrides both.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from . import __version__, config
from .errors import ConfigError, KincbfError
from .filters import KNOWN_FAULTS, inject_fault
from .sim import ComparisonTable, available_backends, comparison_row, run

OUTPUT_ENV = "KINCBF_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _output_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env) / cfg.scenario.name
    if cfg.output:
        return Path(cfg.output)
    return Path("kincbf_runs") / cfg.scenario.name


def _overrides(args) -> list:
    out = [config.parse_override(s) for s in args.set or []]
    for key in ("seed", "dt", "horizon"):
        value = getattr(args, key)
        if value is not None:
            out.append((key, value))
    return out


def _write_run(outdir: Path, sc, trace, met):
    outdir.mkdir(parents=True, exist_ok=True)
    trace.write_csv(outdir / "trace.csv")
    _atomic_write(outdir / "metrics.txt", met.to_text())
    _atomic_write(outdir / "metrics.json", met.to_json())
    _atomic_write(outdir / "scenario.yaml", config.dumps(config.Config(sc)))


def _status(met) -> int:
    if met.error is not None:
        return EXIT_ERROR
    return EXIT_VIOLATION if met.violation_steps > 0 else EXIT_OK


def cmd_run(args) -> int:
    cfg = config.load(args.file, _overrides(args))
    trace, met = run(cfg.scenario, backend=args.backend)
    outdir = _output_dir(args, cfg)
    _write_run(outdir, cfg.scenario, trace, met)
    sys.stdout.write(f"scenario={cfg.scenario.name}\nscenario_hash={cfg.scenario.hash()}\n")
    sys.stdout.write(met.to_text())
    sys.stdout.write(f"output={outdir}\n")
    if met.error is not None:
        print(f"error: run aborted at step {trace.error_step}: {met.error}", file=sys.stderr)
    elif met.violation_steps:
        print(f"safety violation: {met.violation_steps} steps below -tol", file=sys.stderr)
    return _status(met)


def _parse_values(text: str) -> list:
    items = [v.strip() for v in text.split(",")] if text is not None else []
    items = [v for v in items if v]
    if not items:
        raise ConfigError("empty value list", key="--values")
    return [yaml.safe_load(v) for v in items]


def _run_one(item):
    sc, backend = item
    return run(sc, backend=backend)


def cmd_sweep(args) -> int:
    path = Path(args.file)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    overrides = _overrides(args)
    cfg = config.loads(text, overrides, source=str(path))
    if args.param is not None or args.values is not None:
        if args.param is None:
            raise ConfigError("--values needs --param")
        param, values = args.param, _parse_values(args.values)
    elif cfg.sweep is not None:
        param, values = cfg.sweep.param, cfg.sweep.values
    else:
        raise ConfigError("no sweep given: pass --param/--values or add a sweep block")
    scenarios = config.sweep_scenarios(text, param, values, overrides)
    labels = [f"{param}={v}" for v in values]

    items = [(sc, args.backend) for sc in scenarios]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, items))
    else:
        results = [_run_one(it) for it in items]

    outdir = _output_dir(args, cfg)
    for sc, label, (trace, met) in zip(scenarios, labels, results):
        _write_run(outdir / label.replace("/", "_"), sc, trace, met)
    table = ComparisonTable([comparison_row(sc, lab, met)
                             for sc, lab, (_, met) in zip(scenarios, labels, results)])
    outdir.mkdir(parents=True, exist_ok=True)
    _atomic_write(outdir / "comparison.csv", table.to_csv())
    sys.stdout.write(table.to_text())
    sys.stdout.write(f"output={outdir}\n")
    codes = [_status(met) for _, met in results]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_VIOLATION if EXIT_VIOLATION in codes else EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.suite not in SUITES + ("all",):
        print(f"error: unknown suite '{args.suite}', choose from {', '.join(SUITES + ('all',))}",
              file=sys.stderr)
        return EXIT_ERROR
    ctx = inject_fault(args.inject_fault) if args.inject_fault else contextlib.nullcontext()
    with ctx:
        checks = run_suite(args.suite, seed=args.seed or 0, scale=args.scale)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_VIOLATION
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (overrides the file)")
    common.add_argument("--dt", type=float, help="integration step in s")
    common.add_argument("--horizon", type=float, help="simulated time in s")

    sim_opts = argparse.ArgumentParser(add_help=False, parents=[common])
    sim_opts.add_argument("--set", action="append", metavar="KEY=VALUE",
                          help="override a dotted config key, e.g. filter.alpha_e=5")
    sim_opts.add_argument("--out", help="output directory")
    sim_opts.add_argument("--backend", choices=available_backends(), default=None)

    p = argparse.ArgumentParser(prog="kincbf", description="Kinematic and energy-based CBF safety filters.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[sim_opts], help="simulate one scenario")
    r.add_argument("file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[sim_opts], help="simulate a scenario over a parameter list")
    s.add_argument("file")
    s.add_argument("--param", help="dotted key to vary, e.g. filter.alpha.gamma")
    s.add_argument("--values", help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run self-checks")
    v.add_argument("suite", help="models, filters, bounds or all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--scale", type=float, default=1.0, help="fraction of the default sample counts")
    v.add_argument("--inject-fault", choices=KNOWN_FAULTS, help="corrupt the filters on purpose")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KincbfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
