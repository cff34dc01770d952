"""Command line front end.

Exit codes: 0 on success, 1 when a scenario file fails to parse or
validate, 2 on runtime failures.
"""

import argparse
import csv
import os
import sys

from .errors import CrdwError, ParseError, ValidationError
from .plant import simulate
from .runner import (load_scenario, reproduce_figures, resolve_threshold,
                     resolved_config, run_experiment)


def _out_dir(explicit):
    if explicit is not None:
        return explicit
    return os.environ.get("CRDW_OUT_DIR", ".")


def _fmt(x):
    return repr(float(x))


def _cmd_validate(args):
    sc = load_scenario(args.scenario)
    if args.dump:
        sys.stdout.write(resolved_config(sc))
    else:
        print(f"{sc.name}: ok ({sc.statistic}, {sc.n_steps} steps)")
    return 0


def _cmd_simulate(args):
    sc = load_scenario(args.scenario)
    records = simulate(sc.model, sc.attack, sc.schedule, sc.n_steps, sc.seed)
    p, m, q = sc.model.dims
    path = args.out or os.path.join(_out_dir(None), f"{sc.name}_trajectory.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"]
                   + [f"y_{i}" for i in range(m)]
                   + [f"u_{i}" for i in range(q)]
                   + [f"residual_{i}" for i in range(m)])
        for r in records:
            w.writerow([r.step] + [_fmt(v) for v in r.y]
                       + [_fmt(v) for v in r.u]
                       + [_fmt(v) for v in r.residual])
    print(path)
    return 0


def _cmd_detect(args):
    sc = load_scenario(args.scenario)
    path = args.out or os.path.join(_out_dir(None), f"{sc.name}_trace.csv")
    rows = run_experiment(sc, out_csv=path)
    rejected = sum(r.decision for r in rows)
    print(path)
    print(f"{rejected}/{len(rows)} windows rejected")
    return 0


def _cmd_calibrate(args):
    sc = load_scenario(args.scenario)
    print(_fmt(resolve_threshold(sc)))
    return 0


def _cmd_reproduce_figures(args):
    outdir = _out_dir(args.outdir)
    written = reproduce_figures(outdir, seed=args.seed,
                                scenario_dir=args.scenario_dir)
    for path in written:
        print(path)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="crdw",
        description="Watermark-based attack detection for linear plants "
                    "with polytopic measurement noise.")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="load a scenario and run all checks")
    v.add_argument("scenario")
    v.add_argument("--dump", action="store_true",
                   help="print the resolved configuration instead of a summary")
    v.set_defaults(fn=_cmd_validate)

    s = sub.add_parser("simulate", help="write a closed-loop trajectory CSV")
    s.add_argument("scenario")
    s.add_argument("--out", help="output file (default <name>_trajectory.csv)")
    s.set_defaults(fn=_cmd_simulate)

    d = sub.add_parser("detect", help="run the detector and write its trace CSV")
    d.add_argument("scenario")
    d.add_argument("--out", help="output file (default <name>_trace.csv)")
    d.set_defaults(fn=_cmd_detect)

    c = sub.add_parser("calibrate",
                       help="print the calibrated detection threshold")
    c.add_argument("scenario")
    c.set_defaults(fn=_cmd_calibrate)

    r = sub.add_parser("reproduce-figures",
                       help="run the benchmark scenario pairs and write CSVs")
    r.add_argument("--outdir", help="output directory (default CRDW_OUT_DIR or .)")
    r.add_argument("--seed", type=int, help="override the scenario seeds")
    r.add_argument("--scenario-dir",
                   help="load scenario files from here instead of the bundled set")
    r.set_defaults(fn=_cmd_reproduce_figures)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CrdwError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
