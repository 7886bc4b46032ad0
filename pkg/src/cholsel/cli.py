"""Experiment drivers and the command-line interface.

Four experiments mirror the library's downstream uses: ``chol`` (factor
accuracy and cost), ``gp`` (regression through the joint factor), ``cg``
(preconditioned conjugate gradient), and ``recover`` (planted-factor
recovery).  Every (method, sweep value, seed) cell runs independently; cell
results are averaged over seeds and written as one CSV per (experiment,
metric, method) with rows ``sweep_value,metric``.

All randomness flows through ``numpy.random.default_rng`` seeded per cell,
so reruns with the same flags produce byte-identical metric CSVs (wall-clock
CSVs are exempt: timings are not reproducible in principle).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .factorization import factorize, save_factor
from .gp import posterior_dense, prediction_first_ordering, regress_global
from .kernels import KernelSpec, assemble_covariance, spd_cholesky
from .metrics import coverage as coverage_metric
from .metrics import kl_factor, rmse
from .pcg import pcg_solve
from .recovery import RECOVERY_METHODS, RecoveryConfig, recovery_accuracy
from .validation import check_points, drop_duplicates

log = logging.getLogger(__name__)

EXPERIMENTS = ("chol", "gp", "cg", "recover")
GEOMETRIES = ("grid_perturbed", "uniform_cube", "csv_file")
DEFAULT_METHODS = ("rho_ball", "knn", "select")


@dataclass
class ExperimentConfig:
    """One experiment's full parameterization."""

    experiment: str
    out_dir: str
    geometry: str = "grid_perturbed"
    n: int = 1024
    dim: int = 2
    m_pred: int | None = None
    nu: float = 1.5
    length_scale: float = 1.0
    variance: float = 1.0
    nugget: float = 0.0
    methods: tuple = DEFAULT_METHODS
    sweep_param: str = "n"
    sweep: tuple = (256.0, 1024.0)
    seeds: tuple = (0,)
    rho: float = 2.0
    rho_s: float = 2.0
    lam: float = 1.5
    k: int | None = None
    p: int = 1
    delta: float = 1e-2
    realizations: int = 100
    tol: float = 1e-12
    max_iter: int | None = None
    s: int = 32
    diag_value: float = 10.0
    points_csv: str | None = None
    csv_columns: tuple | None = None
    target_column: int | None = None
    demean: bool = False
    parallel: int = 1
    save_factors: bool = False
    max_dense: int = 4096

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed is required")
        sweep = tuple(float(v) for v in self.sweep)
        if len(sweep) == 0:
            raise ValueError("at least one sweep value is required")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError("sweep values must be strictly increasing")
        self.sweep = sweep
        if self.geometry == "csv_file" and not self.points_csv:
            raise ValueError("csv_file geometry requires --points-csv")


def ingest_points(path, columns=None):
    """Parse a CSV point cloud: header row, comma-separated reals.

    ``columns`` selects a subset of feature columns (all by default).
    Exact duplicate rows are dropped, preserving first occurrences; returns
    ``(points, duplicates_removed)``.  Malformed rows report their line
    number.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} fields, "
                                 f"got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    if columns is not None:
        columns = list(columns)
        if any(c < 0 or c >= data.shape[1] for c in columns):
            raise ValueError(f"{path}: column selection {columns} out of "
                             f"range for width {data.shape[1]}")
        data = data[:, columns]
    points, removed = drop_duplicates(data)
    if removed:
        log.info("%s: %d duplicate point(s) removed", path, removed)
    return points, removed


def perturbed_grid_points(n, dim, delta, rng):
    """Regular grid in the unit square jittered by uniform noise in +-delta."""
    if dim != 2:
        raise ValueError("the perturbed grid geometry is two-dimensional")
    nx = int(np.sqrt(n))
    while nx > 1 and n % nx:
        nx -= 1
    ny = n // nx
    if nx * ny != n:
        raise ValueError(f"cannot factor {n} into a grid")
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    grid = np.stack([a.ravel() for a in np.meshgrid(xs, ys)], axis=1)
    return grid + rng.uniform(-delta, delta, size=grid.shape)


def make_points(config, n, rng):
    if config.geometry == "grid_perturbed":
        return perturbed_grid_points(n, config.dim, config.delta, rng)
    if config.geometry == "uniform_cube":
        return rng.uniform(size=(n, config.dim))
    points, _ = ingest_points(config.points_csv, config.csv_columns)
    if n > points.shape[0]:
        raise ValueError(f"requested {n} points but the file holds "
                         f"{points.shape[0]}")
    return points[:n]


def _spec(config):
    return KernelSpec(nu=config.nu, length_scale=config.length_scale,
                      variance=config.variance, nugget=config.nugget)


def _cell_params(config, value):
    """Resolve the swept parameter into concrete cell settings."""
    n, rho, s, noise = config.n, config.rho, config.s, 0.0
    if config.sweep_param == "n":
        n = int(round(value))
    elif config.sweep_param == "rho":
        rho = float(value)
    elif config.sweep_param == "s":
        s = int(round(value))
    elif config.sweep_param == "sigma2":
        noise = float(value)
    else:
        raise ValueError(f"unknown sweep parameter {config.sweep_param!r}")
    return n, rho, s, noise


def _format(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "nan"
    return f"{v:.17g}"


def write_series(out_dir, experiment, metric, method, rows):
    """One CSV per (experiment, metric, method): ``sweep_value,metric``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{experiment}_{metric}_{method}.csv"
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep_value", "metric"])
        for value, metric_value in rows:
            writer.writerow([_format(value), _format(metric_value)])
    return path


def _mean_or_nan(values):
    values = [v for v in values if v is not None and np.isfinite(v)]
    if not values:
        return float("nan")
    return float(np.mean(values))


def _run_cells(config, cell):
    """Run every (sweep value, seed, method) cell and average over seeds.

    Returns ``{metric: {method: [(sweep value, mean)]}}``.  Failed cells log
    the cause and contribute ``nan``.
    """
    results = {}
    jobs = [(value, seed) for value in config.sweep for seed in config.seeds]

    def run_one(job):
        value, seed = job
        try:
            return job, cell(value, seed)
        except Exception:
            log.exception("cell failed: sweep=%s seed=%s", value, seed)
            return job, {}

    if config.parallel > 1:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            outcomes = dict(pool.map(run_one, jobs))
    else:
        outcomes = dict(run_one(j) for j in jobs)

    series = sorted({(metric, method)
                     for out in outcomes.values()
                     for metric, by_method in out.items()
                     for method in by_method})
    for metric, method in series:
        for value in config.sweep:
            mean = _mean_or_nan([
                outcomes.get((value, seed), {}).get(metric, {}).get(method)
                for seed in config.seeds])
            results.setdefault(metric, {}).setdefault(method, []).append(
                (value, mean))
    return results


def _write_results(config, results):
    written = []
    for metric, by_method in sorted(results.items()):
        for method, rows in sorted(by_method.items()):
            written.append(write_series(config.out_dir, config.experiment,
                                        metric, method, rows))
    return written


def run_chol_experiment(config):
    """Factor accuracy (divergence), cost, and density per method."""
    spec = _spec(config)

    def cell(value, seed):
        n, rho, _, _ = _cell_params(config, value)
        rng = np.random.default_rng(seed)
        points = make_points(config, n, rng)
        out = {"kl": {}, "time": {}, "nnz": {}}
        for method in config.methods:
            t0 = time.perf_counter()
            res = factorize(spec, points, method, rho=rho, rho_s=config.rho_s,
                            k=config.k, lam=config.lam, p=config.p,
                            n_jobs=config.parallel)
            elapsed = time.perf_counter() - t0
            out["kl"][method] = kl_factor(spec, points, res.factor,
                                          max_dense=config.max_dense)
            out["time"][method] = elapsed
            out["nnz"][method] = float(res.factor.nnz)
            if config.save_factors:
                stem = f"chol_factor_{method}_{value:g}_{seed}"
                save_factor(res.factor, Path(config.out_dir) / f"{stem}.txt")
        return out

    return _write_results(config, _run_cells(config, cell))


def run_gp_experiment(config):
    """Regression accuracy of the joint-factor posterior against dense."""
    spec = _spec(config)

    def cell(value, seed):
        n, rho, _, _ = _cell_params(config, value)
        rng = np.random.default_rng(seed)
        m = config.m_pred or max(1, n // 10)
        total = make_points(config, n + m, rng)
        split = rng.permutation(n + m)
        train, pred = total[split[:n]], total[split[n:]]

        if config.target_column is not None:
            raw, _ = ingest_points(config.points_csv)
            y_all = raw[split[: n + m], config.target_column]
            if config.demean:
                y_all = y_all - y_all.mean()
            y_train = y_all[:n][:, None]
            y_pred_true = y_all[n:][:, None]
        else:
            joint = np.vstack([train, pred])
            chol = spd_cholesky(assemble_covariance(spec, joint),
                                "joint covariance")
            draws = chol @ rng.standard_normal((n + m, config.realizations))
            y_train, y_pred_true = draws[:n], draws[n:]

        dense = posterior_dense(spec, train, y_train, pred)
        out = {"rmse": {}, "coverage": {}, "time": {}, "nnz": {}}
        for method in config.methods:
            t0 = time.perf_counter()
            res = regress_global(spec, train, y_train, pred, method, rho=rho,
                                 rho_s=config.rho_s, k=config.k,
                                 lam=config.lam, p=config.p,
                                 n_jobs=config.parallel)
            out["time"][method] = time.perf_counter() - t0
            out["rmse"][method] = rmse(res.mean, dense.mean)
            var = np.broadcast_to(res.var[:, None], y_pred_true.shape)
            mean = np.broadcast_to(res.mean, y_pred_true.shape)
            out["coverage"][method] = coverage_metric(mean, var, y_pred_true,
                                                      0.9)
            out["nnz"][method] = float(res.diagnostics["nnz"])
        return out

    return _write_results(config, _run_cells(config, cell))


def run_cg_experiment(config):
    """Iterations and wall time of (preconditioned) conjugate gradient."""
    spec = _spec(config)

    def cell(value, seed):
        n, rho, _, _ = _cell_params(config, value)
        rng = np.random.default_rng(seed)
        points = make_points(config, n, rng)
        theta = assemble_covariance(spec, points)
        x = rng.standard_normal(n)
        y = theta @ x
        out = {"iterations": {}, "time": {}, "nnz": {}}
        for method in config.methods:
            t0 = time.perf_counter()
            if method == "none":
                factor = None
                nnz = 0.0
            else:
                res = factorize(spec, points, method, rho=rho,
                                rho_s=config.rho_s, k=config.k,
                                lam=config.lam, p=config.p,
                                n_jobs=config.parallel)
                factor = res.factor
                nnz = float(res.factor.nnz)
            report = pcg_solve(theta, y, precond=factor, tol=config.tol,
                               max_iter=config.max_iter)
            out["time"][method] = time.perf_counter() - t0
            out["iterations"][method] = (float(report.iterations)
                                         if report.converged else float("nan"))
            out["nnz"][method] = nnz
        return out

    return _write_results(config, _run_cells(config, cell))


def run_recover_experiment(config):
    """Planted-pattern recovery accuracy per method."""

    def cell(value, seed):
        n, _, s, noise = _cell_params(config, value)
        out = {"iou": {}, "time": {}, "aborted": {}}
        for method in config.methods:
            if method not in RECOVERY_METHODS:
                raise ValueError(f"recover methods must be in "
                                 f"{RECOVERY_METHODS}, got {method!r}")
            cfg = RecoveryConfig(n=n, s=s, diag_value=config.diag_value,
                                 noise=noise, method=method)
            _, _, report, aborted = recovery_accuracy(cfg, seed=seed)
            out["iou"][method] = report.iou
            out["time"][method] = report.wall_time
            out["aborted"][method] = float(aborted)
        return out

    return _write_results(config, _run_cells(config, cell))


def run_experiment(config):
    """Dispatch on the experiment name; returns the written CSV paths."""
    runner = {
        "chol": run_chol_experiment,
        "gp": run_gp_experiment,
        "cg": run_cg_experiment,
        "recover": run_recover_experiment,
    }[config.experiment]
    return runner(config)


_EXPERIMENT_DEFAULTS = {
    "chol": dict(geometry="grid_perturbed", sweep_param="n",
                 sweep=(256.0, 1024.0), p=1, nu=2.5,
                 methods=("rho_ball", "knn", "select")),
    "gp": dict(geometry="uniform_cube", dim=3, sweep_param="rho",
               sweep=(2.0, 3.0), p=2, nu=1.5,
               methods=("rho_ball", "knn", "select")),
    "cg": dict(geometry="uniform_cube", dim=3, sweep_param="rho",
               sweep=(2.0, 4.0), p=2, nu=0.5, n=4096,
               methods=("rho_ball", "knn", "select")),
    "recover": dict(sweep_param="sigma2", sweep=(0.0, 0.01, 0.1, 0.2),
                    n=256, methods=RECOVERY_METHODS),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cholsel",
        description="sparse inverse Cholesky factorization experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--m-pred", type=int, default=None)
        p.add_argument("--nu", type=float, default=None)
        p.add_argument("--lengthscale", type=float, default=None)
        p.add_argument("--nugget", type=float, default=0.0)
        p.add_argument("--rho", type=float, default=2.0)
        p.add_argument("--rho-s", type=float, default=2.0)
        p.add_argument("--lambda", dest="lam", type=float, default=1.5)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--p-order", type=int, default=None)
        p.add_argument("--method", action="append", default=None,
                       help="repeatable; defaults depend on the experiment")
        p.add_argument("--sweep", type=float, nargs="+", default=None)
        p.add_argument("--sweep-param", default=None,
                       choices=("n", "rho", "s", "sigma2"))
        p.add_argument("--seeds", type=int, nargs="+", default=[0])
        p.add_argument("--points-csv", default=None)
        p.add_argument("--csv-columns", type=int, nargs="+", default=None)
        p.add_argument("--target-column", type=int, default=None)
        p.add_argument("--demean", action="store_true")
        p.add_argument("--geometry", default=None, choices=GEOMETRIES)
        p.add_argument("--delta", type=float, default=1e-2)
        p.add_argument("--realizations", type=int, default=100)
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--s", type=int, default=32)
        p.add_argument("--diag-value", type=float, default=10.0)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--parallel", type=int, default=1)
        p.add_argument("--save-factors", action="store_true")
        p.add_argument("--max-dense", type=int, default=4096)
    return parser


def config_from_args(args):
    defaults = _EXPERIMENT_DEFAULTS[args.experiment]
    pick = lambda flag, key: flag if flag is not None else defaults.get(key)
    return ExperimentConfig(
        experiment=args.experiment,
        out_dir=args.out_dir,
        geometry=(args.geometry if args.geometry is not None
                  else ("csv_file" if args.points_csv
                        else defaults.get("geometry", "grid_perturbed"))),
        n=pick(args.n, "n") or 1024,
        dim=pick(args.dim, "dim") or 2,
        m_pred=args.m_pred,
        nu=pick(args.nu, "nu") or 1.5,
        length_scale=args.lengthscale if args.lengthscale is not None else 1.0,
        nugget=args.nugget,
        methods=tuple(args.method) if args.method else defaults["methods"],
        sweep_param=pick(args.sweep_param, "sweep_param"),
        sweep=tuple(args.sweep) if args.sweep else defaults["sweep"],
        seeds=tuple(args.seeds),
        rho=args.rho,
        rho_s=args.rho_s,
        lam=args.lam,
        k=args.k,
        p=pick(args.p_order, "p") or 1,
        delta=args.delta,
        realizations=args.realizations,
        tol=args.tol,
        max_iter=args.max_iter,
        s=args.s,
        diag_value=args.diag_value,
        points_csv=args.points_csv,
        csv_columns=tuple(args.csv_columns) if args.csv_columns else None,
        target_column=args.target_column,
        demean=args.demean,
        parallel=args.parallel,
        save_factors=args.save_factors,
        max_dense=args.max_dense,
    )


def main(argv=None):
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    written = run_experiment(config)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
