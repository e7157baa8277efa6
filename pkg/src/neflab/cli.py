"""Command line entry point: ``neflab {solve,envelope,verify,sweep} --config FILE``."""

import argparse
import json
import sys

from .errors import ConfigError, FieldFormatError, MissingArtifacts, NonConvergence
from .experiment import ExperimentConfig, run_envelope, run_solve, run_sweep, run_verify

VERBS = {
    "solve": run_solve,
    "envelope": run_envelope,
    "verify": run_verify,
    "sweep": run_sweep,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="neflab", description="Degenerate Monge-Ampere / sigma_k lab on flat tori.")
    ap.add_argument("verb", choices=sorted(VERBS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (overrides output_dir in the config)")
    ap.add_argument("--grid-override", type=int, help="replace the grid size N")
    ap.add_argument("--tol-override", type=float, help="replace the Newton tolerance")
    ap.add_argument("--quiet", action="store_true", help="print only the verdict line")
    return ap


def _summary(report):
    lines = [f"{report.kind}: {'ok' if report.ok else 'FAILED'}"]
    for name, s in sorted(report.suites.items()):
        mark = "pass" if s.get("ok") else "FAIL"
        lines.append(f"  {mark} {name:22s} margin={s.get('margin')} t={s.get('t')}")
    if report.sweep:
        sw = report.sweep
        lines.append(f"  c_t exponent {sw['fitted_exponent']:.4f} (expected {sw['expected_exponent']})")
        if "deficit_spread" in sw:
            lines.append(f"  deficit spread {sw['deficit_spread']:.3f}, raw growth {sw['raw_growth']:.3f}")
    return "\n".join(lines)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_json(args.config)
        if args.out:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "output_dir": args.out})
        cfg = cfg.with_overrides(grid=args.grid_override, tol=args.tol_override)
        report = VERBS[args.verb](cfg)
    except (ConfigError, MissingArtifacts, FieldFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.advice:
            print(f"hint: {exc.advice}", file=sys.stderr)
        return 3
    if args.quiet:
        print(f"{report.kind}: {'ok' if report.ok else 'FAILED'}")
    else:
        print(_summary(report))
        if not cfg.output_dir:
            print(json.dumps({"suites": report.to_dict()["suites"]}, indent=2))
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
