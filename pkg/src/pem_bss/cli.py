"""Command-line front end.

Subcommands:
    run <spec>                      execute a spec, emit results/summary CSVs
    sweep <spec> --axis A --values  cartesian sweep along rho, snr_in_db, or m
    diagnose <spec>                 per-seed Taylor-surrogate diagnostics CSVs
    presets                         print the per-domain hyperparameter presets
    dump-data <spec> --out FILE     write generated data to a PEMB container

Exit codes: 0 success, 1 spec validation error, 2 runtime error.  The
PEM_THREADS environment variable caps the worker-pool size (default serial;
results are identical either way).
"""

import argparse
import dataclasses
import sys

from . import experiments, pem
from .errors import PemError, SpecError


def _values_arg(raw):
    values = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if item.lower() in ("null", "none"):
            values.append(None)
        else:
            values.append(float(item) if ("." in item or "e" in item.lower()) else int(item))
    return values


def _print_presets(out=None):
    out = out if out is not None else sys.stdout
    for name in pem.preset_names():
        cfg = pem.get_preset(name, 5, 10)
        out.write(f"[{name}]\n")
        out.write(f"  domain={cfg.domain.value} variant={cfg.variant}\n")
        out.write(
            f"  lambda={cfg.lam} epsilon={cfg.epsilon} gamma_pred={cfg.gamma_pred}"
            + (f" gamma_lateral={cfg.gamma_lateral}" if cfg.gamma_lateral is not None else "")
            + (f" eta_lambda={cfg.eta_lambda}" if cfg.eta_lambda is not None else "")
            + "\n"
        )
        ws, ys = cfg.w_schedule, cfg.y_schedule
        out.write(
            f"  w_schedule: rule={ws.rule} base={ws.base} divider={ws.divider} floor={ws.floor}\n"
        )
        out.write(
            f"  y_schedule: rule={ys.rule} base={ys.base} divider={ys.divider} floor={ys.floor}\n"
        )
        out.write(f"  tau_max={cfg.tau_max} inner_tol={cfg.inner_tol}\n")
        init = cfg.init
        if init != pem.InitSpec():
            fields = ", ".join(
                f"{f.name}={getattr(init, f.name)}"
                for f in dataclasses.fields(init)
                if getattr(init, f.name) != getattr(pem.InitSpec(), f.name)
            )
            out.write(f"  init: {fields}\n")
        out.write("\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="pem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("spec", help="path to a YAML experiment spec")
    p_run.add_argument("--out-dir", default=".", help="directory for CSV output")

    p_sweep = sub.add_parser("sweep", help="sweep one axis of a spec")
    p_sweep.add_argument("spec")
    p_sweep.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated values ('null' = noiseless for snr)"
    )
    p_sweep.add_argument("--out-dir", default=".")

    p_diag = sub.add_parser("diagnose", help="emit Taylor-surrogate diagnostics traces")
    p_diag.add_argument("spec")
    p_diag.add_argument("--out-dir", default=".")

    sub.add_parser("presets", help="print the per-domain hyperparameter presets")

    p_dump = sub.add_parser("dump-data", help="dump generated data to a binary container")
    p_dump.add_argument("spec")
    p_dump.add_argument("--out", required=True, help="output file (per-seed suffix if many seeds)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            _print_presets()
            return 0
        spec = experiments.load_spec(args.spec)
        if args.command == "run":
            paths = experiments.run_experiment(spec, out_dir=args.out_dir)
        elif args.command == "sweep":
            paths = experiments.run_sweep(spec, args.axis, _values_arg(args.values), out_dir=args.out_dir)
        elif args.command == "diagnose":
            paths = experiments.run_diagnose(spec, out_dir=args.out_dir)
        else:  # dump-data
            paths = experiments.dump_data(spec, args.out)
        for path in paths:
            print(path)
        return 0
    except SpecError as err:
        print(f"spec error: {err}", file=sys.stderr)
        return 1
    except (PemError, OSError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
