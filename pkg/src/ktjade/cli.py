"""Command-line interface.

Subcommands: ``fit``, ``simulate``, ``bench``, ``md``, ``scree`` and
``generate``. Exit codes are 0 on success, 1 for usage errors and 2 when the
computation itself fails.
"""

import argparse
import contextlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import io
from .estimators import ModePlan, fit
from .jointdiag import JointDiagConfig, JointDiagWarning
from .metrics import md_index, relative_md, scree
from .simulation import (
    SCENARIOS,
    SETTING_ESTIMATORS,
    TIMING_ESTIMATORS,
    ExperimentSpec,
    _seed,
    mix,
    mixing_matrices,
    parse_layout,
    run_experiment,
    run_timing,
    sample_latent,
    setting_layout,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _config(args):
    try:
        return JointDiagConfig(tolerance=args.tol, max_sweeps=args.max_sweeps)
    except ValueError as err:
        raise UsageError(str(err))


def _add_jd_flags(p):
    p.add_argument("--tol", type=float, default=1e-6,
                   help="joint diagonalization stopping tolerance on |sin theta|")
    p.add_argument("--max-sweeps", type=int, default=100)


def _add_input(p):
    p.add_argument("input", help="TBSS1 sample file, or CSV together with --dims")
    p.add_argument("--dims", type=_int_list, default=None,
                   help="tensor dimensions of each CSV row, e.g. 2,3")


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with io.atomic_writer(path) as fh:
            fh.write(text)


def _plan(args, order):
    if args.method == "ktjade":
        ks = args.k
        if len(ks) != order:
            raise UsageError(f"--k gives {len(ks)} values for a tensor of order {order}")
        return ModePlan.k_tjade(ks)
    if args.k is None:
        return ModePlan.uniform(args.method, order)
    if len(args.k) != order:
        raise UsageError(f"--k gives {len(args.k)} values for a tensor of order {order}")
    methods = tuple("skip" if k == 0 else args.method for k in args.k)
    return ModePlan(methods, (0,) * order)


def cmd_fit(args):
    config = _config(args)
    if args.method == "ktjade" and args.k is None:
        raise UsageError("--method ktjade needs --k")
    x = io.load_sample(args.input, args.dims)
    plan = _plan(args, x.ndim - 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", JointDiagWarning)
        t0 = time.perf_counter()
        result = fit(x, plan, config)
        elapsed = time.perf_counter() - t0
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    for m, diag in enumerate(result.diagnostics):
        parts = [f"mode {m}", f"method {diag['method']}"]
        if diag.get("k"):
            parts.append(f"k {diag['k']}")
        if "sweeps" in diag:
            parts.append(f"sweeps {diag['sweeps']}")
            parts.append(f"converged {diag['converged']}")
        for stage in ("fobi", "cumulants", "jointdiag"):
            if f"time_{stage}" in diag:
                parts.append(f"{stage} {diag[f'time_{stage}']:.3f}s")
        if diag.get("weak_kurtosis_separation"):
            parts.append("weak kurtosis separation")
        print("  ".join(parts), file=sys.stderr)
    print(f"total {elapsed:.3f}s", file=sys.stderr)

    if args.latent:
        io.write_sample(args.latent, result.latent)
    try:
        io.write_result(args.output, result, latent_file=args.latent)
    except BaseException:
        if args.latent:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(args.latent)
        raise
    if args.top:
        idx = result.top_component()
        print("top component " + ",".join(str(int(i)) for i in idx))
    return EXIT_OK


def _layout_from(args):
    if args.layout is not None:
        with open(args.layout) as fh:
            return parse_layout(fh.read())
    if args.setting is None:
        raise UsageError("give --setting or --layout")
    return setting_layout(args.setting)


def cmd_simulate(args):
    config = _config(args)
    layout = _layout_from(args)
    for s in args.scenarios:
        if s not in SCENARIOS:
            raise UsageError(f"unknown scenario {s!r}; choose from {', '.join(SCENARIOS)}")
    estimators = args.estimators or SETTING_ESTIMATORS.get(args.setting, ["TFOBI", "TJADE"])
    try:
        spec = ExperimentSpec(
            layout=layout,
            sample_sizes=args.n,
            replicates=args.reps,
            estimators=estimators,
            scenarios=args.scenarios,
            seed=args.seed,
            config=config,
            workers=args.threads,
        )
    except ValueError as err:
        raise UsageError(str(err))
    result = run_experiment(spec)
    columns = ["estimator", "scenario", "n", "replicates", "failures",
               "mean_tmd", "sd_tmd", "mean_md", "median_md"]
    if args.timings:
        columns.append("mean_seconds")
    for key, errs in sorted(result.errors.items()):
        print(f"{key[0]} {key[1]} n={key[2]}: {len(errs)} failures, first: {errs[0][1]}",
              file=sys.stderr)
    _emit(io.format_table(result.table, columns), args.output)
    return EXIT_OK


def cmd_bench(args):
    config = _config(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", JointDiagWarning)
        rows = run_timing(args.widths, n=args.n, estimators=args.estimators,
                          iterations=args.iterations, seed=args.seed, config=config)
    capped = sum(issubclass(w.category, JointDiagWarning) for w in caught)
    if capped:
        print(f"{capped} joint diagonalizations stopped at {config.max_sweeps} sweeps",
              file=sys.stderr)
    _emit(io.format_table(rows), args.output)
    return EXIT_OK


def cmd_md(args):
    if args.gain is not None:
        if args.files:
            raise UsageError("--gain takes no unmixing files")
        g = np.loadtxt(args.gain, delimiter=",", ndmin=2)
        _emit(io.format_table([{"md": md_index(g)}]), args.output)
        return EXIT_OK
    if len(args.files) != 2:
        raise UsageError("md needs two unmixing files, or --gain")
    a = io.read_unmixing(args.files[0])
    b = io.read_unmixing(args.files[1])
    if [g.shape for g in a] != [g.shape for g in b]:
        raise UsageError("the two unmixing files describe different tensor shapes")
    rows = [{"mode": m, "md": relative_md(ga, gb)} for m, (ga, gb) in enumerate(zip(a, b))]
    _emit(io.format_table(rows), args.output)
    return EXIT_OK


def cmd_scree(args):
    config = _config(args)
    x = io.load_sample(args.input, args.dims)
    order = x.ndim - 1
    modes = args.mode if args.mode is not None else list(range(order))
    for m in modes:
        if not 0 <= m < order:
            raise UsageError(f"mode {m} out of range for a tensor of order {order}")
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", JointDiagWarning)
        for m in modes:
            curve = scree(x, m, config)
            rows += [{"mode": m, "k": k, "m_star": float(v)}
                     for k, v in zip(curve.ks, curve.values)]
    _emit(io.format_table(rows, ["mode", "k", "m_star"]), args.output)
    return EXIT_OK


def cmd_generate(args):
    layout = _layout_from(args)
    latent = sample_latent(layout, args.n, _seed(args.seed, 0))
    rng = np.random.Generator(np.random.PCG64(_seed(args.seed, 1)))
    omegas = mixing_matrices(args.scenario, layout.shape, rng)
    x = mix(latent, omegas)
    if args.mixing:
        with io.atomic_writer(args.mixing) as fh:
            json.dump({"mixing": [o.tolist() for o in omegas]}, fh)
            fh.write("\n")
    io.write_sample(args.output, x)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="ktjade", description="Blind source separation for tensor-valued samples.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate per-mode unmixing matrices")
    _add_input(p)
    p.add_argument("--method", choices=["ktjade", "tjade", "tfobi"], default="ktjade")
    p.add_argument("--k", type=_int_list, default=None,
                   help="per-mode band widths, e.g. 1,2,0; 0 leaves a mode unmixed")
    p.add_argument("-o", "--output", required=True, help="unmixing document (JSON)")
    p.add_argument("--latent", default=None, help="also write the latent sample (TBSS1)")
    p.add_argument("--top", action="store_true",
                   help="print the index of the component with the largest |kurtosis|")
    _add_jd_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo study of the transformed MD index")
    p.add_argument("--setting", type=int, choices=[1, 2, 3], default=None)
    p.add_argument("--layout", default=None, help="layout file: dims line, then distributions")
    p.add_argument("--n", type=_int_list, required=True, help="sample sizes, e.g. 1000,4000")
    p.add_argument("--reps", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenarios", type=_str_list, default=["identity"])
    p.add_argument("--estimators", type=_str_list, default=None)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--timings", action="store_true",
                   help="add mean wall time per fit (output no longer reproducible)")
    p.add_argument("-o", "--output", default=None)
    _add_jd_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="timing grid on 3 x q chi-square samples")
    p.add_argument("--widths", type=_int_list, default=[5, 10, 15, 20, 25, 30, 35, 40, 45, 50])
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--iterations", type=_positive_int, default=5)
    p.add_argument("--estimators", type=_str_list, default=list(TIMING_ESTIMATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    _add_jd_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("md", help="MD index between two fits, or of a gain matrix")
    p.add_argument("files", nargs="*", help="two unmixing documents written by fit")
    p.add_argument("--gain", default=None, help="CSV file holding a square gain matrix")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_md)

    p = sub.add_parser("scree", help="sequential MD curve for choosing k")
    _add_input(p)
    p.add_argument("--mode", type=_int_list, default=None, help="modes to scan (default all)")
    p.add_argument("-o", "--output", default=None)
    _add_jd_flags(p)
    p.set_defaults(func=cmd_scree)

    p = sub.add_parser("generate", help="draw a mixed sample from a setting or layout")
    p.add_argument("--setting", type=int, choices=[1, 2, 3], default=None)
    p.add_argument("--layout", default=None)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=list(SCENARIOS), default="identity")
    p.add_argument("--mixing", default=None, help="write the mixing matrices (JSON)")
    p.add_argument("-o", "--output", required=True, help="sample file (TBSS1)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"ktjade {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as err:
        print(f"ktjade {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
