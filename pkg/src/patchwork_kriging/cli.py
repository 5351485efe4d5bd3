"""Command-line interface: ``patchwork-kriging {simulate,fit,predict,evaluate,sweep}``.

Exit status is 0 on success, 2 for bad input, configuration or I/O, and 3
for numerical failures (indefinite matrices, sampling or optimization
failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError
from .kernels import KernelSpec
from .likelihood import optimize_hyperparams
from .metrics import MetricReport, evaluate_predictions
from .model import PatchworkModel, fit
from .partition import build_tree, place_pseudo_points
from .reference import exact_gp_predict
from .simulate import (
    Dataset,
    SimSpec,
    benchmark_prediction_targets,
    read_dataset_csv,
    sample_gp_dataset,
    write_dataset_csv,
)

log = logging.getLogger("patchwork_kriging")

DEFAULT_B = 7
MAX_POINTS_PER_REGION = 600
#: Training-set size up to which the exact-GP benchmark is computed.
BENCHMARK_MAX_N = 20000

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def default_regions(n: int) -> int:
    """Smallest power of two ``K`` with ``n / K <= 600``."""
    K = 1
    while n / K > MAX_POINTS_PER_REGION:
        K *= 2
    return K


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kernel_args(p):
    p.add_argument("--kernel", choices=["se", "exp"], default="se", help="covariance family")
    p.add_argument("--tau", type=float, default=10.0, help="signal variance")
    p.add_argument("--rho", type=float, default=1.0, help="length-scale")
    p.add_argument("--noise", type=float, default=1.0, help="noise variance")


def _fit_args(p):
    p.add_argument("--k", type=int, default=None, help="number of regions (default: N/K <= 600)")
    p.add_argument("--b", type=int, default=DEFAULT_B, help="pseudo inputs per split")
    _kernel_args(p)
    p.add_argument("--optimize", action="store_true", help="maximize the likelihood first")
    p.add_argument("--budget", type=int, default=200, help="likelihood evaluations for --optimize")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchwork-kriging", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic GP dataset")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--d", type=int, default=2, help="input dimension")
    p.add_argument("--lower", type=float, default=0.0)
    p.add_argument("--upper", type=float, default=10.0)
    _kernel_args(p)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("fit", help="fit a model and save the bundle")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="model bundle path")
    _fit_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trace", default=None, help="write the optimizer trace CSV here")

    p = sub.add_parser("predict", help="predict at the inputs of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV whose feature columns are the test inputs")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("evaluate", help="score a model on test data")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None, help="fitted bundle; omit to fit on a --split of --data")
    p.add_argument("--split", type=float, default=None, help="training fraction when fitting here")
    p.add_argument("--out", required=True, help="report JSON (a .csv row is written alongside)")
    _fit_args(p)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("sweep", help="simulate-fit-evaluate over a parameter grid")
    p.add_argument("--out", required=True, help="aggregated CSV")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--k", type=_int_list, default=[16, 32], help="comma-separated K values")
    p.add_argument("--b", type=_int_list, default=[0, 5], help="comma-separated B values")
    p.add_argument("--rho", type=_float_list, default=[1.0], help="comma-separated length-scales")
    p.add_argument("--d", type=_int_list, default=[2], help="comma-separated dimensions")
    p.add_argument("--kernel", choices=["se", "exp"], default="se")
    p.add_argument("--tau", type=float, default=10.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    return parser


# ---------------------------------------------------------------------------
# commands


def _kernel_from(args, rho=None) -> KernelSpec:
    return KernelSpec(args.kernel, args.tau, args.rho if rho is None else rho, args.noise)


def cmd_simulate(args) -> int:
    spec = SimSpec(args.n, args.d, _kernel_from(args), args.seed, args.lower, args.upper)
    X, y, f = sample_gp_dataset(spec)
    write_dataset_csv(args.out, X, y, f, spec=spec)
    log.info("wrote %d rows to %s", spec.n, args.out)
    return EXIT_OK


def _fit_model(X, y, args, seed, trace_path=None):
    """Fit per the command-line options; returns the model and a log dict."""
    K = args.k if args.k is not None else default_regions(X.shape[0])
    if K < 1 or args.b < 0:
        raise ConfigurationError("need K >= 1 and B >= 0")
    spec = _kernel_from(args)
    info = {"K": K, "B": args.b, "seed": seed, "n_train": int(X.shape[0])}
    timings = {}
    if args.optimize:
        t0 = time.perf_counter()
        tree = build_tree(X, K)
        bset = place_pseudo_points(tree, args.b, seed)
        res = optimize_hyperparams(spec, tree, bset, X, y, budget=args.budget, seed=seed, n_jobs=args.jobs)
        spec = res.hyperparams.specs[0]
        timings["optimize"] = time.perf_counter() - t0
        info.update(nl=res.state.value, n_evals=res.n_evals)
        if trace_path:
            with open(trace_path, "w", newline="", encoding="utf-8") as fh:
                res.write_trace(fh)
    model = fit(X, y, K, args.b, spec, seed, n_jobs=args.jobs)
    timings.update(model.timings)
    info.update(
        hyperparams=model.hyperparams.to_list(),
        n_regions=model.n_regions,
        n_delta=model.n_delta,
        schur_bandwidth=model.factorization.schur.bandwidth,
        delta_rel=model.delta_rel,
        timings=timings,
    )
    return model, info


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args) -> int:
    data = read_dataset_csv(args.data)
    model, info = _fit_model(data.X, data.y, args, args.seed, trace_path=args.trace)
    model.save(args.out)
    info["features"] = data.features
    _write_json(f"{args.out}.log.json", info)
    for phase, secs in info["timings"].items():
        log.info("%-13s %.3f s", phase, secs)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = PatchworkModel.load(args.model)
    data = read_dataset_csv(args.data, require_y=False)
    _check_dim(model, data)
    t0 = time.perf_counter()
    pred = model.predict(data.X)
    log.info("prediction    %.3f s", time.perf_counter() - t0)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.features, "mean", "var", "region"])
        for x, m, v, r in zip(data.X, pred.mean, pred.var, pred.region):
            w.writerow([*(repr(float(c)) for c in x), repr(float(m)), repr(float(v)), int(r)])
    return EXIT_OK


def _check_dim(model, data: Dataset):
    if data.X.shape[1] != model.tree.dim:
        raise InputError(
            f"model expects {model.tree.dim} input columns, data has {data.X.shape[1]}"
        )


def split_indices(n: int, fraction: float, seed: int):
    """Deterministic random train/test split of ``range(n)``."""
    if not 0.0 < fraction < 1.0:
        raise InputError(f"--split must be in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise InputError(f"split {fraction} of {n} rows leaves an empty side")
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _sidecar_spec(path):
    side = f"{path}.json"
    if os.path.exists(side):
        with open(side, encoding="utf-8") as fh:
            return SimSpec.from_dict(json.load(fh))
    return None


def benchmark_report(model, X_test, y_test, truth_kernel, box, seed):
    """Test-set scores plus interior/boundary scores against the exact GP.

    ``X_test``/``y_test`` may be ``None`` (benchmark suites only) and
    ``truth_kernel`` may be ``None`` (test-set scores only).  ``seed`` drives
    the benchmark target locations.  Returns the report and the seconds
    spent in model prediction.
    """
    report_args = {}
    elapsed = 0.0
    if X_test is not None:
        t0 = time.perf_counter()
        pred = model.predict(X_test)
        elapsed += time.perf_counter() - t0
        # test responses are noisy, so score them against the variance of y, not of f
        noise = np.array([model.hyperparams[k].noise_var for k in pred.region])
        report_args.update(truth=y_test, means=pred.mean, variances=pred.var + noise)
    if truth_kernel is not None and model.X.shape[0] <= BENCHMARK_MAX_N:
        lower, upper = box
        spec = SimSpec(1, model.tree.dim, truth_kernel, seed, lower, upper)
        tg = benchmark_prediction_targets(spec, model.tree, model.bset, seed=seed)
        t0 = time.perf_counter()
        pi = model.predict(tg.interior)
        if tg.boundary.shape[0]:
            pk = model.predict(tg.boundary, regions=tg.pairs[:, 0])
            pl = model.predict(tg.boundary, regions=tg.pairs[:, 1])
        elapsed += time.perf_counter() - t0
        bm, bv = exact_gp_predict(truth_kernel, model.X, model.y, tg.interior, max_n=BENCHMARK_MAX_N)
        report_args["interior"] = (bm, bv, pi.mean, pi.var)
        if tg.boundary.shape[0]:
            bbm, bbv = exact_gp_predict(truth_kernel, model.X, model.y, tg.boundary, max_n=BENCHMARK_MAX_N)
            report_args["boundary"] = (bbm, bbv, (pk.mean, pk.var), (pl.mean, pl.var))
    return evaluate_predictions(**report_args), elapsed


def cmd_evaluate(args) -> int:
    data = read_dataset_csv(args.data)
    sim = _sidecar_spec(args.data)
    info = {}
    if args.model:
        model = PatchworkModel.load(args.model)
        _check_dim(model, data)
        X_test, y_test = data.X, data.y
    else:
        if args.split is None or args.seed is None:
            raise InputError("without --model, evaluate needs --split and --seed")
        tr, te = split_indices(data.X.shape[0], args.split, args.seed)
        model, info = _fit_model(data.X[tr], data.y[tr], args, args.seed)
        X_test, y_test = data.X[te], data.y[te]
    truth_kernel = None
    if data.f_true is not None:
        truth_kernel = sim.kernel if sim is not None else model.hyperparams.specs[0]
        if not model.hyperparams.shared and sim is None:
            truth_kernel = None
    box = (sim.lower, sim.upper) if sim is not None else (data.X.min(axis=0), data.X.max(axis=0))
    seed = args.seed if args.seed is not None else 0
    report, t_pred = benchmark_report(model, X_test, y_test, truth_kernel, box, seed)
    out = report.to_dict()
    out["timings"] = dict(info.get("timings", {}), prediction=t_pred)
    _write_json(args.out, out)
    root, _ = os.path.splitext(args.out)
    with open(f"{root}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricReport.field_names())
        w.writerow(report.csv_row())
    log.info("MSE %.6g  NLPD %.6g", report.mse, report.nlpd if report.nlpd is not None else float("nan"))
    return EXIT_OK


SWEEP_TIMINGS = ("partition", "assembly", "factorization", "prediction")


def sweep_seed(base: int, d: int, rho_index: int, replicate: int) -> int:
    """Dataset seed shared by every (K, B) cell of one (d, rho, replicate)."""
    return int(np.random.SeedSequence([base, d, rho_index, replicate]).generate_state(1)[0])


def run_cell(cell: dict) -> dict:
    """Simulate, fit and score one sweep cell; failures go to ``errors``."""
    row = {k: cell[k] for k in ("K", "B", "rho", "d", "replicate", "seed")}
    row["errors"] = ""
    try:
        kernel = KernelSpec(cell["kernel"], cell["tau"], cell["rho"], cell["noise"])
        sim = SimSpec(cell["n"], cell["d"], kernel, cell["seed"])
        X, y, _ = sample_gp_dataset(sim)
        model = fit(X, y, cell["K"], cell["B"], kernel, cell["seed"])
        report, predict_secs = benchmark_report(
            model, None, None, kernel, (sim.lower, sim.upper), cell["seed"] + 1
        )
        row.update(report.to_dict())
        row.update({k: model.timings.get(k) for k in SWEEP_TIMINGS[:3]}, prediction=predict_secs)
        row["n_delta"] = model.n_delta
    except (InputError, ConfigurationError, NumericalError, np.linalg.LinAlgError, MemoryError) as exc:
        row["errors"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_cells(args) -> list:
    cells = []
    for d in args.d:
        for ri, rho in enumerate(args.rho):
            for rep in range(args.replicates):
                seed = sweep_seed(args.seed, d, ri, rep)
                for K in args.k:
                    for B in args.b:
                        cells.append(dict(
                            K=K, B=B, rho=rho, d=d, replicate=rep, seed=seed, n=args.n,
                            kernel=args.kernel, tau=args.tau, noise=args.noise,
                        ))
    return cells


def cmd_sweep(args) -> int:
    if not (args.k and args.b and args.rho and args.d) or args.replicates < 1:
        raise InputError("every grid list must be nonempty and --replicates >= 1")
    cells = sweep_cells(args)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    columns = ["K", "B", "rho", "d", "replicate", "seed", *MetricReport.field_names(),
               "n_delta", *SWEEP_TIMINGS, "errors"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, restval="", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    failed = sum(1 for r in rows if r["errors"])
    log.info("sweep wrote %d rows (%d failed) to %s", len(rows), failed, args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (InputError, ConfigurationError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
