"""Command line front end.

Subcommands: design, fit, predict, cv, eval, benchmark.  Every output table
is deterministic for a given invocation; wall-clock timestamps go to a
sidecar ``.log`` file, never into the data files.  Exit codes: 0 success,
2 usage, 3 malformed or insufficient data, 4 numerical failure.
"""

import argparse
import os
import sys
import time
from datetime import datetime

import numpy as np

from . import archive, dataio, plots
from .benchmark import PROBLEMS, run_benchmark
from .crossval import CVRequest, fast_cv, loo_rmse
from .design import METHODS, DesignRequest, nest
from .errors import (
    DataFormatError,
    DegeneratePosteriorError,
    DesignError,
    IllConditionedError,
    InsufficientDataError,
    InvalidHyperparameterError,
    MetricError,
    NestingError,
    OptimizationError,
    ShapeError,
    SingularSystemError,
)
from .metrics import EvalSet, maxae, q2, rimse, rmse
from .model import MODES, fit, predict_batch

DATA_ERRORS = (
    DataFormatError, ShapeError, NestingError, DesignError, MetricError,
    InsufficientDataError, InvalidHyperparameterError,
)
NUMERICAL_ERRORS = (
    IllConditionedError, SingularSystemError, DegeneratePosteriorError,
    OptimizationError,
)


def _parse_int_list(text, flag):
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise DataFormatError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise DataFormatError(f"{flag} must not be empty")
    return values


def _parse_bounds(text):
    """Parse ``lo:hi,lo:hi,...`` into a (d, 2) array."""
    rows = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise DataFormatError(f"--bounds expects lo:hi pairs, got {part!r}")
        try:
            rows.append([float(pieces[0]), float(pieces[1])])
        except ValueError:
            raise DataFormatError(f"--bounds has non-numeric value in {part!r}") from None
    return np.asarray(rows)


def _figure_path(out):
    return os.path.splitext(out)[0] + ".png"


class _Log:
    """Sidecar log; the only place timestamps are allowed."""

    def __init__(self, out):
        self.path = out + ".log"
        self.lines = []
        self.t0 = time.perf_counter()

    def event(self, message):
        self.lines.append(f"{datetime.now().isoformat(timespec='milliseconds')} {message}")

    def close(self):
        self.event(f"done in {time.perf_counter() - self.t0:.3f}s")
        dataio.atomic_write_text(self.path, "\n".join(self.lines) + "\n")


def _cmd_design(args):
    sizes = _parse_int_list(args.sizes, "--sizes")
    req = DesignRequest(sizes=tuple(reversed(sizes)), bounds=_parse_bounds(args.bounds),
                        method=args.method, seed=args.seed)
    designs = nest(req)
    os.makedirs(args.out, exist_ok=True)
    for t, D in enumerate(designs, start=1):
        header = [f"x{j + 1}" for j in range(D.shape[1])]
        dataio.write_table(os.path.join(args.out, f"level_{t}.csv"), header, D)
    print(f"wrote {len(designs)} design files to {args.out}")
    if args.plot:
        fig = os.path.join(args.out, "design.png")
        plots.save_design_figure(designs, fig)
        print(f"wrote {fig}")
    return 0


def _cmd_fit(args):
    cfg = dataio.RunConfig.from_json(args.config)
    log = _Log(args.out)
    log.event(f"fit started: config={args.config} levels={len(cfg.levels)}")
    levels = cfg.load_levels()
    model = fit(
        levels,
        priors=list(cfg.prior),
        kernels=cfg.kernel_specs(),
        objective=cfg.objective,
        bounds=cfg.bounds,
        restarts=cfg.restarts,
        seed=cfg.seed,
        nugget=cfg.nugget,
        family=cfg.family,
    )
    for t, (_, fl) in enumerate(model.levels, start=1):
        log.event(f"level {t}: theta={fl.kernel.theta.tolist()} "
                  f"applied_nugget={fl.applied_nugget:g} sigma2_eml={fl.sigma2_eml:g}")
    provenance = {
        "seed": cfg.seed, "objective": cfg.objective, "restarts": cfg.restarts,
        "nugget": cfg.nugget, "family": cfg.family, "mode": cfg.mode,
        "level_files": list(cfg.levels),
    }
    archive.save_model(model, args.out, provenance=provenance)
    log.event(f"archive written: {args.out}")
    log.close()
    print(f"fitted {model.nlevels} levels; wrote {args.out} and {log.path}")
    return 0


def _cmd_predict(args):
    model = archive.load_model(args.model)
    X = dataio.read_points_csv(args.points)
    pred = predict_batch(model, X, mode=args.mode)
    d = X.shape[1]
    header = [f"x{j + 1}" for j in range(d)]
    cols = [X]
    if args.all_levels:
        for t in range(model.nlevels):
            header += [f"mean_{t + 1}", f"variance_{t + 1}"]
            cols += [pred.mean[t][:, None], pred.variance[t][:, None]]
    else:
        header += ["mean", "variance"]
        cols += [pred.top_mean[:, None], pred.top_variance[:, None]]
    dataio.write_table(args.out, header, np.hstack(cols))
    print(f"wrote {X.shape[0]} predictions to {args.out}")
    if args.plot:
        fig = _figure_path(args.out)
        plots.save_prediction_figure(X, pred.top_mean, pred.top_variance, fig)
        print(f"wrote {fig}")
    return 0


def _cmd_cv(args):
    model = archive.load_model(args.model)
    n_top = model.data[-1].n
    common = dict(
        t_min=None if args.remove_depth == "top" else
        (1 if args.remove_depth == "all" else int(args.remove_depth)),
        reestimate_trend=not args.no_reestimate_trend,
        reestimate_variance=not args.no_reestimate_variance,
        mode=args.mode,
        rho_from_fold=not args.rho_from_full_fit,
    )
    if args.folds == "loo":
        req = CVRequest.loo(n_top, **common)
    else:
        try:
            k = int(args.folds)
        except ValueError:
            raise DataFormatError(f"--folds expects 'loo' or an integer, got {args.folds!r}") from None
        req = CVRequest.kfold(n_top, k, seed=args.seed, **common)
    report = fast_cv(model, req)
    rows = []
    for i, fold in enumerate(report.folds):
        for j, idx in enumerate(fold):
            rows.append([float(idx), float(i), report.errors[i][j],
                         report.variances[i][j], report.sigma2s[i]])
    rows.sort(key=lambda r: r[0])
    dataio.write_table(args.out, ["index", "fold", "error", "variance", "sigma2_fold"], rows)
    print(f"cv rmse: {dataio.format_float(loo_rmse(report))} "
          f"({len(report.folds)} folds, {sum(len(f) for f in report.folds)} points)")
    print(f"wrote {args.out}")
    if args.plot:
        flat = sorted(
            ((idx, e, v) for fold, errs, vars_ in zip(report.folds, report.errors, report.variances)
             for idx, e, v in zip(fold, errs, vars_)),
            key=lambda r: r[0])
        fig = _figure_path(args.out)
        plots.save_cv_figure([r[1] for r in flat], [r[2] for r in flat], fig)
        print(f"wrote {fig}")
    return 0


def _cmd_eval(args):
    pred_header, pred = dataio.read_table(args.pred)
    if "mean" not in pred_header:
        raise DataFormatError(f"{args.pred}: no 'mean' column; use a predict output file")
    mean = pred[:, pred_header.index("mean")]
    var_col = pred_header.index("variance") if "variance" in pred_header else None
    variance = pred[:, var_col] if var_col is not None else np.zeros(mean.size)
    truth_header, truth_tab = dataio.read_table(args.truth)
    if truth_tab.shape[0] != mean.size:
        raise DataFormatError(
            f"{args.truth}: {truth_tab.shape[0]} rows but {args.pred} has {mean.size}")
    truth = truth_tab[:, -1]
    ev = EvalSet(truth=truth, pred_mean=mean, pred_var=variance)
    rows = [["rmse", rmse(ev)], ["maxae", maxae(ev)], ["q2", q2(ev)], ["rimse", rimse(ev)]]
    dataio.write_table(args.out, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name}: {dataio.format_float(value)}")
    print(f"wrote {args.out}")
    if args.plot:
        fig = _figure_path(args.out)
        plots.save_eval_figure(truth, mean, fig)
        print(f"wrote {fig}")
    return 0


def _cmd_benchmark(args):
    log = _Log(args.out)
    n2_values = _parse_int_list(args.n2, "--n2")
    log.event(f"benchmark started: problem={args.problem} n1={args.n1} "
              f"n2={list(n2_values)} repeats={args.repeats} seed={args.seed}")
    result = run_benchmark(
        problem=args.problem, n1=args.n1, n2_values=n2_values,
        repeats=args.repeats, seed=args.seed, n_test=args.n_test,
        restarts=args.restarts,
    )
    header, rows = result.summary()
    dataio.write_table(args.out, header, rows)
    log.event(f"summary written: {args.out}")
    log.close()
    wins = result.win_fractions()
    for j, n2 in enumerate(result.n2_values):
        print(f"n2={n2}: cokriging mean rmse {rows[j][1]:.4g}, "
              f"kriging mean rmse {rows[j][4]:.4g}, win fraction {wins[j]:.2f}")
    print(f"wrote {args.out} and {log.path}")
    if args.plot:
        co = (np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
              np.array([r[3] for r in rows]))
        kr = (np.array([r[4] for r in rows]), np.array([r[5] for r in rows]),
              np.array([r[6] for r in rows]))
        fig = _figure_path(args.out)
        plots.save_benchmark_figure(result.n2_values, co, kr, fig)
        print(f"wrote {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfcokrig",
        description="Recursive multi-fidelity co-kriging: designs, fits, "
                    "predictions, cross-validation and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="generate nested space-filling designs")
    p.add_argument("--sizes", required=True,
                   help="per-level point counts, coarsest level first, e.g. 25,10,5")
    p.add_argument("--bounds", required=True,
                   help="per-dimension lo:hi pairs, e.g. 0:1,0:1")
    p.add_argument("--method", default="maximin_lhs", choices=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true", help="also render design.png")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("fit", help="fit a model from a JSON configuration")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--out", required=True, help="model archive path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict at query points from an archive")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True, help="CSV of query points")
    p.add_argument("--mode", default="simple", choices=MODES)
    p.add_argument("--all-levels", action="store_true",
                   help="write every level's mean and variance")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("cv", help="fast cross-validation of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--folds", default="loo", help="'loo' or a fold count")
    p.add_argument("--remove-depth", default="top",
                   help="'top' (default), 'all', or the lowest level to deplete")
    p.add_argument("--mode", default="simple", choices=MODES)
    p.add_argument("--no-reestimate-trend", action="store_true")
    p.add_argument("--no-reestimate-variance", action="store_true")
    p.add_argument("--rho-from-full-fit", action="store_true",
                   help="use full-data adjustment coefficients in the recursion")
    p.add_argument("--seed", type=int, default=0, help="fold shuffling seed")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("eval", help="score predictions against truth")
    p.add_argument("--pred", required=True, help="predict output CSV")
    p.add_argument("--truth", required=True, help="CSV whose last column is the truth")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("benchmark", help="paired co-kriging versus kriging study")
    p.add_argument("--problem", default="forrester", choices=sorted(PROBLEMS))
    p.add_argument("--n1", type=int, default=25)
    p.add_argument("--n2", default="5,10,15,20,25",
                   help="comma-separated fine-level budgets")
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NUMERICAL_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
