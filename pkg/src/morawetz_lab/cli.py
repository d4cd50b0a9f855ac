"""Command-line entry point: ``morawetz-lab <command> ...``.

Every command exits 0 when all of its checks pass, 1 when some check fails and
2 on a configuration or usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SWEEP_AXES, load_config, shipped_scenarios
from .errors import LabError
from .harness import converge, report, run_scenario, sweep
from .multipliers import lemma_min_scan

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _resolve(path: str) -> Path:
    """A config path, or the stem of a shipped scenario."""
    p = Path(path)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if path in shipped:
        return shipped[path]
    raise LabError(f"{path}: no such file or shipped scenario (shipped: {', '.join(shipped)})")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _verdict(ok: bool) -> int:
    print("PASS" if ok else "FAIL")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_run(args) -> int:
    cfg = load_config(_resolve(args.config))
    out = Path(args.output) if args.output else Path(cfg.run.output_dir)
    rep = run_scenario(cfg, out)
    if rep.error:
        print(f"scenario {cfg.id}: {rep.error}", file=sys.stderr)
    for c in rep.checks.values():
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name:20s} value={c.value:.6g} margin={c.margin:.3g}")
    print(f"outputs in {out}")
    return _verdict(rep.passed)


def cmd_sweep(args) -> int:
    cfg = load_config(_resolve(args.config))
    axis = args.axis or (cfg.sweep.axis if cfg.sweep else None)
    values = args.values or (list(cfg.sweep.values) if cfg.sweep else None)
    if axis is None or not values:
        raise LabError("sweep needs --axis and --values, or a [sweep] section in the config")
    out = Path(args.output) if args.output else Path(cfg.run.output_dir) / f"sweep_{axis}"
    res = sweep(cfg, axis, values, out, workers=args.workers)
    for p in res.points:
        status = p.error or ("PASS" if p.report.passed else "FAIL")
        print(f"{axis}={p.value:g}: {status}")
    for name, (c, ratio) in res.stability.items():
        print(f"  {name}: max={c:.6g} max consecutive ratio={ratio:.4f}")
    for name, ok in res.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"outputs in {out}")
    return _verdict(res.passed)


def cmd_converge(args) -> int:
    cfg = load_config(_resolve(args.config))
    out = Path(args.output) if args.output else Path(cfg.run.output_dir) / "converge"
    res = converge(cfg, args.spacings, output_dir=out)
    for r in res.rows:
        order = "" if r.observed_order is None else f" order={r.observed_order:.3f}"
        print(f"{r.diagnostic:24s} h={r.spacing:<8g} error={r.error:.4g}{order}")
    for name, ok in res.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name} min order={res.min_orders[name]}")
    print(f"outputs in {out}")
    return _verdict(res.passed)


def cmd_lemma_scan(args) -> int:
    value, s = lemma_min_scan(args.M, args.smax, args.n)
    print(f"min = {value:.10g} at s = {s:.10g}")
    return _verdict(value >= 0)


def cmd_report(args) -> int:
    ok, text = report(args.directory)
    print(text)
    return _verdict(ok)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="morawetz-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve one scenario and run its checks")
    p.add_argument("config", help="scenario TOML file or shipped scenario name")
    p.add_argument("-o", "--output", help="output directory (default: [run].output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario across values of one parameter")
    p.add_argument("config")
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", type=_floats, help="comma-separated values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("converge", help="refinement study of residuals and solution")
    p.add_argument("config")
    p.add_argument("--spacings", type=_floats, help="comma-separated halving spacings")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("lemma-scan", help="minimum of the lemma polynomial over [0, smax]")
    p.add_argument("--M", type=float, default=700.0)
    p.add_argument("--smax", type=float, default=10.0)
    p.add_argument("--n", type=int, default=1_000_000)
    p.set_defaults(func=cmd_lemma_scan)

    p = sub.add_parser("report", help="summarize the reports under a directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
