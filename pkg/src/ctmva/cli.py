"""Command-line front end.

Every subcommand reads long-format CSV (``series,t,value``) or a coefficient
file written by ``ctmva smooth``, and writes CSV tables plus a
``summary.json`` into ``--out``.  Exit codes: 0 ok, 1 usage, 2 data error,
3 numeric error; failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import Interval, Partition, make_basis
from .ctstats import center, ct_summary, detrend_common, pairwise_table, trend_r2
from .errors import CTMVAError, DomainError, PartitionError
from .io import (
    IngestReport,
    load_fdataset,
    parse_long_csv,
    save_fdataset,
    write_json,
    write_matrix,
    write_table,
)
from .kmeans import ct_kmeans, mean_silhouette_by_k, partition_segments, silhouette
from .mgp import MGPSpec, SimConfig, run_correlation_experiment
from .smoothing import AUTO, smooth_dataset
from .spectral import ct_cca, ct_lda, ct_pca, scatter_decomposition

log = logging.getLogger("ctmva")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _lambda(text: str):
    if text.lower() == AUTO:
        return AUTO
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be a number or 'auto', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("lambda must be nonnegative")
    return value


def _data_args(p: argparse.ArgumentParser, suffix: str = "", required: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument(f"--input{suffix}", help="long-format CSV with columns series,t,value")
    src.add_argument(f"--fdata{suffix}", help="coefficient file written by 'ctmva smooth'")


def _basis_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--basis", choices=["bspline", "fourier"], default="bspline")
    p.add_argument("--K", type=int, default=20, help="basis dimension (default 20)")
    p.add_argument("--order", type=int, default=4, help="B-spline order (default 4 = cubic)")
    p.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"),
                   help="basis interval (default: range of the observation times)")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=AUTO,
                   help="smoothing parameter or 'auto' for GCV (default auto)")
    p.add_argument("--lambda-policy", choices=["per_series", "shared"], default="per_series")


def _group_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--group", nargs=3, action="append", metavar=("LO", "HI", "LABEL"),
                   help="partition segment; repeat to cover the interval")
    p.add_argument("--partition", help="CSV with columns lo,hi,label")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctmva", description="Continuous-time multivariate analysis")
    parser.add_argument("--version", action="version", version=f"ctmva {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $CTMVA_THREADS or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("smooth", help="smooth series onto a basis; write coefficients and fitted curves")
    _data_args(p)
    _basis_args(p)
    p.add_argument("--grid-size", type=int, default=201)
    p.add_argument("--out", required=True)

    p = sub.add_parser("describe", help="CT mean, covariance and correlation")
    _data_args(p)
    _basis_args(p)
    p.add_argument("--center", action="store_true", help="subtract each curve's time average first")
    p.add_argument("--detrend", action="store_true", help="subtract the cross-sectional mean curve first")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pca", help="CT principal component analysis")
    _data_args(p)
    _basis_args(p)
    p.add_argument("--grid-size", type=int, default=201)
    p.add_argument("--out", required=True)

    p = sub.add_parser("lda", help="CT Fisher discriminants for a partition of the interval")
    _data_args(p)
    _basis_args(p)
    _group_args(p)
    p.add_argument("--grid-size", type=int, default=201)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cca", help="CT canonical correlation between two sets of series")
    _data_args(p)
    _data_args(p, "-y")
    _basis_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("kmeans", help="CT k-means clustering of time")
    _data_args(p)
    _basis_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("silhouette", help="CT silhouette profile of a clustering")
    _data_args(p)
    _basis_args(p)
    _group_args(p)
    p.add_argument("--k", type=int, help="cluster with CT k-means first")
    p.add_argument("--kmax", type=int, help="also tabulate mean silhouette for k = 2..KMAX")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=6000)
    p.add_argument("--out", required=True)

    p = sub.add_parser("paircor", help="CT correlation for every pair of series on their overlap")
    p.add_argument("--input", required=True)
    p.add_argument("--min-obs", type=int, default=8)
    p.add_argument("--min-overlap", type=float, default=0.0)
    p.add_argument("--K", type=int, default=None, help="fixed basis size (default: sized per pair)")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=AUTO)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="ordinary vs CT correlation on simulated Gaussian processes")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--ell", type=float, nargs="+", default=[0.02, 0.1, 0.3])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--K", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


# --- helpers -----------------------------------------------------------------


def _load(args, suffix: str = "", interval=None):
    """Return ``(FDataset, ingest info)`` from ``--input`` or ``--fdata``."""
    attr = suffix.replace("-", "_")
    fpath = getattr(args, f"fdata{attr}")
    if fpath:
        return load_fdataset(fpath), {"source": str(fpath)}
    ipath = getattr(args, f"input{attr}")
    report = IngestReport()
    series = parse_long_csv(ipath, report)
    if interval is None:
        interval = _interval_for(args, series)
    basis = make_basis(args.basis, interval, args.K, args.order)
    data = smooth_dataset(series, basis, args.lambda_policy, args.lam)
    return data, {"source": str(ipath), "ingest": report.as_dict()}


def _interval_for(args, series_lists):
    if getattr(args, "interval", None):
        return Interval(*args.interval)
    lo = min(float(s.t[0]) for s in series_lists)
    hi = max(float(s.t[-1]) for s in series_lists)
    return Interval(lo, hi)


def _partition(args, interval) -> Partition:
    triples = []
    if args.partition:
        import csv

        with open(args.partition, newline="") as fh:
            for row in csv.DictReader(fh):
                triples.append((float(row["lo"]), float(row["hi"]), row["label"]))
    for lo, hi, label in args.group or []:
        try:
            triples.append((float(lo), float(hi), label))
        except ValueError:
            raise PartitionError(f"bad group bounds {lo!r}, {hi!r}") from None
    if not triples:
        raise UsageError("a partition is required: use --group LO HI LABEL or --partition FILE")
    return Partition.from_triples(triples, interval)


def _grid(data, n: int) -> np.ndarray:
    lo, hi = data.basis.interval
    return np.linspace(lo, hi, n)


def _write_curves(path, data, grid) -> None:
    values = data(grid)
    write_table(path, ["t", *data.names], ([t, *row] for t, row in zip(grid, values)))


def _config_echo(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("verbose", "out")}
    d["threads"] = _threads(args)
    return d


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CTMVA_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _summary(args, out: Path, **payload) -> None:
    write_json(out / "summary.json", {"command": args.command, "version": __version__,
                                      "config": _config_echo(args), **payload})


# --- commands ----------------------------------------------------------------


def cmd_smooth(args, out: Path) -> None:
    report = IngestReport()
    series = parse_long_csv(args.input, report)
    basis = make_basis(args.basis, _interval_for(args, series), args.K, args.order)
    data, fits = smooth_dataset(series, basis, args.lambda_policy, args.lam, return_fits=True)
    save_fdataset(out / "fdata.json", data)
    write_matrix(out / "coefficients.csv", data.C, [str(k + 1) for k in range(basis.K)], data.names, "k")
    write_table(out / "fits.csv", ["series", "n", "lambda", "gcv", "dof", "resid_var"],
                ([s.name, s.n, f.lam, f.gcv, f.dof, f.resid_var] for s, f in zip(series, fits)))
    _write_curves(out / "fitted.csv", data, _grid(data, args.grid_size))
    _summary(args, out, basis=basis.to_dict(), ingest=report.as_dict(),
             series=list(data.names))


def cmd_describe(args, out: Path) -> None:
    data, info = _load(args)
    r2 = trend_r2(data) if data.p >= 2 else None
    if r2 is not None:
        print(f"trend_r2 {r2!r}")
    if args.center:
        data = center(data)
    if args.detrend:
        data = detrend_common(data)
    s = ct_summary(data)
    write_table(out / "mean.csv", ["series", "mean"], zip(data.names, s.mean))
    write_matrix(out / "cov.csv", s.cov, data.names, data.names)
    write_matrix(out / "cor.csv", s.cor, data.names, data.names)
    _summary(args, out, input=info, trend_r2=r2, centered=args.center, detrended=args.detrend)


def cmd_pca(args, out: Path) -> None:
    data, info = _load(args)
    res = ct_pca(data)
    pcs = res.scores.names
    write_table(out / "eigenvalues.csv", ["component", "eigenvalue", "var_explained"],
                zip(pcs, res.eigenvalues, res.var_explained))
    write_matrix(out / "loadings.csv", res.loadings, data.names, pcs, "series")
    _write_curves(out / "scores.csv", res.scores, _grid(data, args.grid_size))
    _summary(args, out, input=info, eigenvalues=res.eigenvalues, var_explained=res.var_explained)


def cmd_lda(args, out: Path) -> None:
    data, info = _load(args)
    groups = _partition(args, data.basis.interval)
    res = ct_lda(data, groups)
    sc = scatter_decomposition(data, groups)
    lds = res.scores.names
    write_table(out / "eigenvalues.csv", ["discriminant", "eigenvalue"], zip(lds, res.eigenvalues))
    write_matrix(out / "discriminants.csv", res.discriminants, data.names, lds, "series")
    write_matrix(out / "group_means.csv", res.group_means, res.labels, lds, "group")
    for name, M in (("T", sc.T), ("W", sc.W), ("B", sc.B)):
        write_matrix(out / f"scatter_{name}.csv", M, data.names, data.names)
    _write_curves(out / "scores.csv", res.scores, _grid(data, args.grid_size))
    _summary(args, out, input=info, eigenvalues=res.eigenvalues, groups=list(groups.labels))


def cmd_cca(args, out: Path) -> None:
    interval = None
    if args.fdata is None or args.fdata_y is None:
        series = []
        for path in (args.input, args.input_y):
            if path:
                series.extend(parse_long_csv(path))
        interval = _interval_for(args, series) if series else None
    x, info_x = _load(args, "", interval)
    y, info_y = _load(args, "-y", interval)
    res = ct_cca(x, y)
    cvs = res.canonical_functions_x.names
    write_table(out / "correlations.csv", ["pair", "correlation"], zip(cvs, res.correlations))
    write_matrix(out / "a_vectors.csv", res.a_vectors, x.names, cvs, "series")
    write_matrix(out / "b_vectors.csv", res.b_vectors, y.names, cvs, "series")
    _summary(args, out, input_x=info_x, input_y=info_y, correlations=res.correlations)


def cmd_kmeans(args, out: Path) -> None:
    data, info = _load(args)
    res = ct_kmeans(data, args.k, restarts=args.restarts, max_iter=args.max_iter, tol=args.tol,
                    seed=args.seed, threads=_threads(args))
    write_table(out / "segments.csv", ["lo", "hi", "cluster"],
                ((a, b, i + 1) for a, b, i in partition_segments(res.partition)))
    write_table(out / "breakpoints.csv", ["t", "from_cluster", "to_cluster"],
                ((t, i + 1, j + 1) for t, i, j in res.breakpoints))
    write_matrix(out / "centers.csv", res.centers, [str(i + 1) for i in range(args.k)], data.names, "cluster")
    write_table(out / "restarts.csv", ["restart", "objective", "iterations", "converged", "transitions", "error"],
                ([r["restart"], r.get("objective"), r.get("iterations"), r.get("converged"),
                  r.get("transitions"), r.get("error")] for r in res.runs))
    _summary(args, out, input=info, objective=res.objective, iterations=res.iterations,
             converged=res.converged, transitions=len(res.breakpoints), history=res.history)


def cmd_silhouette(args, out: Path) -> None:
    data, info = _load(args)
    threads = _threads(args)
    if args.k is not None:
        part = ct_kmeans(data, args.k, restarts=args.restarts, seed=args.seed, threads=threads).partition
    else:
        part = _partition(args, data.basis.interval)
    prof = silhouette(data, part, args.grid_size)
    labels = [part.labels[i] for i in prof.labels]
    write_table(out / "silhouette.csv", ["t", "cluster", "s"], zip(prof.grid, labels, prof.s_values))
    by_k = None
    if args.kmax:
        by_k = mean_silhouette_by_k(data, range(2, args.kmax + 1), args.grid_size,
                                    restarts=args.restarts, seed=args.seed, threads=threads)
        write_table(out / "mean_by_k.csv", ["k", "mean_s"], sorted(by_k.items()))
    print(f"mean_s {prof.mean_s!r}")
    _summary(args, out, input=info, mean_s=prof.mean_s, mean_by_k=by_k)


def _overlap(r):
    lo, hi = r.overlap
    return (lo, hi) if hi > lo else (None, None)


def cmd_paircor(args, out: Path) -> None:
    report = IngestReport()
    series = parse_long_csv(args.input, report)
    rows = pairwise_table(series, threads=_threads(args), basis_policy=args.K,
                          min_obs=args.min_obs, min_overlap=args.min_overlap, lam=args.lam)
    write_table(out / "paircor.csv",
                ["series_u", "series_v", "status", "r", "overlap_lo", "overlap_hi", "n_u", "n_v"],
                ([u, v, r.status, r.r, *_overlap(r), r.n_u, r.n_v] for u, v, r in rows))
    counts: dict[str, int] = {}
    for _, _, r in rows:
        counts[r.status] = counts.get(r.status, 0) + 1
    _summary(args, out, ingest=report.as_dict(), pairs=len(rows), status_counts=counts)


def cmd_simulate(args, out: Path) -> None:
    summaries = {}
    for ell in args.ell:
        cfg = SimConfig(MGPSpec.bivariate(args.rho, ell), n=args.n, sigma=args.sigma,
                        n_reps=args.reps, K=args.K, seed=args.seed)
        records, summ = run_correlation_experiment(cfg, threads=_threads(args))
        write_table(out / f"records_ell{ell!r}.csv", ["replicate", "r_star", "r_hat", "r_hat_star"],
                    ([i, r.r_star, r.r_hat, r.r_hat_star] for i, r in enumerate(records)))
        summaries[repr(ell)] = {
            "median_abs_err_ordinary": summ.median_abs_err_ordinary,
            "median_abs_err_ct": summ.median_abs_err_ct,
            "rmse_ordinary": summ.rmse_ordinary,
            "rmse_ct": summ.rmse_ct,
            "rmse_ratio": summ.rmse_ratio,
            "mean_ratio_ordinary": summ.mean_ratio_ordinary,
        }
    _summary(args, out, by_ell=summaries)


COMMANDS = {
    "smooth": cmd_smooth,
    "describe": cmd_describe,
    "pca": cmd_pca,
    "lda": cmd_lda,
    "cca": cmd_cca,
    "kmeans": cmd_kmeans,
    "silhouette": cmd_silhouette,
    "paircor": cmd_paircor,
    "simulate": cmd_simulate,
}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="ctmva: %(levelname)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", exc)
    except CTMVAError as exc:
        return _fail(exc.exit_code, type(exc).__name__, exc)
    except OSError as exc:
        return _fail(EXIT_DATA, type(exc).__name__, exc)
    except (ValueError, KeyError) as exc:
        return _fail(EXIT_DATA, type(exc).__name__, exc)
    except ArithmeticError as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
