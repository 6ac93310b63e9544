"""Command-line front end: ``python -m wrongevent <command> [options]``.

Exit status: 0 success, 1 invalid input or config, 2 runtime failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .betamix import BetaComponent, BetaMixture, difficulty, fit_bmm, posterior
from .config import load_config, resolve_config
from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    ParameterError,
    ParseError,
    SchemaError,
    WrongEventError,
)
from .experiment import render_report, run_ablate, run_compare, run_experiment, write_datasets

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3
VALIDATION_ERRORS = (ConfigError, DomainError, ParameterError, ParseError, SchemaError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (defaults apply to missing keys)")
    common.add_argument("--out", type=Path, help="output directory (overrides output.run_dir)")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="wrongevent", description="Wrong-event noise modeling and two-stage robust training.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="write train.csv and test.csv")
    t = sub.add_parser("train", parents=[common], help="two-stage training into a run directory")
    t.add_argument("--stage1-only", action="store_true", help="stop after the cross-entropy warm-up")
    f = sub.add_parser("fit", parents=[common], help="fit a two-component beta mixture to a column of values")
    f.add_argument("values", type=Path, help="CSV whose first column holds values in (0, 1)")
    f.add_argument("--init", help="initial mixture as a1,b1,a2,b2[,m1] (default 1,2,2,1,0.5)")
    sub.add_parser("compare", parents=[common], help="metric AUC table over probe epochs")
    sub.add_parser("ablate", parents=[common], help="loss-term and fixed-eps ablation table")
    r = sub.add_parser("report", parents=[common], help="summarize a finished run directory")
    r.add_argument("run_dir", nargs="?", type=Path)
    return p


def _config(args):
    if args.config is not None:
        return load_config(args.config, args.seed)
    return resolve_config(None, args.seed)


def _out(args, cfg):
    return args.out if args.out is not None else Path(cfg["output"]["run_dir"])


def read_values(path):
    """First column of a CSV as floats; a non-numeric first row is taken as a header."""
    vals = []
    with Path(path).open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
    x = np.array(vals, dtype=np.float64)
    bad = np.flatnonzero(~((x > 0) & (x < 1)))
    if bad.size:
        raise DomainError(f"{path}: value at row {int(bad[0])} is {float(x[bad[0]])!r}, outside (0, 1)")
    return x


def _parse_init(text):
    if text is None:
        return BetaMixture.default()
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise ParameterError(f"--init: expected numbers, got {text!r}") from None
    if len(parts) not in (4, 5):
        raise ParameterError("--init takes a1,b1,a2,b2 or a1,b1,a2,b2,m1")
    m1 = parts[4] if len(parts) == 5 else 0.5
    return BetaMixture((BetaComponent(parts[0], parts[1]), BetaComponent(parts[2], parts[3])), (m1, 1.0 - m1))


def _fmt_mix(mix):
    (c1, c2), (m1, m2) = mix.comps, mix.weights
    return (f"Beta({c1.alpha:g},{c1.beta:g})/Beta({c2.alpha:g},{c2.beta:g}) "
            f"weights {m1:.4g}/{m2:.4g}")


def cmd_fit(args, stdout):
    x = read_values(args.values)
    init = _parse_init(args.init)
    print(f"init: {_fmt_mix(init)}", file=stdout)
    mix = fit_bmm(x, init)
    print(f"fit:  {_fmt_mix(mix)}  means {mix.means[0]:.4f}/{mix.means[1]:.4f}", file=stdout)
    tau1, tau2 = posterior(mix, x)
    eps = difficulty(mix, x)
    rows = [(i, x[i], tau1[i], eps[i], tau2[i]) for i in range(len(x))]
    print("idx,value,tau1,eps,tau2", file=stdout)
    for r in rows:
        print(f"{r[0]},{r[1]:.6g},{r[2]:.6f},{r[3]:.6f},{r[4]:.6f}", file=stdout)
    if args.out is not None:
        from .experiment import prepare_dir

        out = prepare_dir(args.out, args.force)
        with (out / "fit.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["idx", "value", "tau1", "eps", "tau2"])
            for r in rows:
                w.writerow([r[0]] + [format(float(v), ".17g") for v in r[1:]])
    return EXIT_OK


def dispatch(args, stdout):
    if args.command == "fit":
        return cmd_fit(args, stdout)
    if args.command == "report":
        cfg = None if (args.run_dir or args.out) else _config(args)
        run_dir = args.run_dir or _out(args, cfg)
        stdout.write(render_report(run_dir))
        return EXIT_OK
    cfg = _config(args)
    out = _out(args, cfg)
    if args.command == "gen":
        paths = write_datasets(cfg, out, args.force)
        print("wrote " + ", ".join(str(p) for p in paths), file=stdout)
    elif args.command == "train":
        res = run_experiment(cfg, out, args.force, stage1_only=args.stage1_only)
        print(f"base epoch {res.summary['base_epoch']}, final test accuracy "
              f"{res.summary['final_test_acc']:.4f}; artifacts in {res.out_dir}", file=stdout)
    elif args.command == "compare":
        table, _ = run_compare(cfg, out, args.force)
        print(f"wrote {out / 'compare.csv'} ({len(table)} probe epochs)", file=stdout)
    elif args.command == "ablate":
        rows, _ = run_ablate(cfg, out, args.force)
        for r in rows:
            acc = "-" if r["test_acc"] is None else f"{r['test_acc']:.4f}"
            print(f"{r['name']:<16} {acc}  {r['status']}", file=stdout)
    return EXIT_OK


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args, stdout)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (WrongEventError, EvaluationError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
