"""Command-line front end: ``selclust <command> [options]``.

Exit status: 0 on success (also when ``oracle`` finds mismatches; they are
counted in its report), 1 when a computation fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

import numpy as np

from . import io as sio
from .errors import InvalidInput, SelClustError
from .inference import GaussianModel, balanced_contrast, cluster_contrast, \
    pvalue_from_constraints, selective_pvalue_1d
from .multidim import (LINKAGES, METHODS, aggregate_columns, build_block_constraints,
                       build_kappa, columnwise_paths, vec)
from .path import (brute_force_solve, compute_path, compute_path_naive, lambda_max,
                   solution_at)
from .simstats import (ExperimentConfig, calibrate_lambda, run_experiment_1d,
                       run_experiment_multidim)


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, *names):
    if "input" in names:
        p.add_argument("--input", required=True, help="data file (CSV or one value per line)")
    p.add_argument("--output", default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    if "lambda" in names:
        p.add_argument("--lambda", dest="lam", type=float, required=True)
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selclust",
                                 description="Convex clustering paths and selective tests.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", help="exact regularization path (JSON)")
    _common(p, "input")

    p = sub.add_parser("fit", help="fitted values and clusters at one lambda (CSV)")
    _common(p, "input", "lambda")

    p = sub.add_parser("test1d", help="selective test of a two-cluster contrast")
    _common(p, "input", "lambda")
    p.add_argument("--k1", type=int, default=None,
                   help="first cluster (0-based, decreasing order); default: balanced split")
    p.add_argument("--k2", type=int, default=None)
    p.add_argument("--cov", default=None, help="n x n covariance CSV (default: identity)")

    p = sub.add_parser("testnd", help="selective test after aggregating column clusterings")
    _common(p, "input", "lambda")
    p.add_argument("--j0", type=int, default=0, help="tested column (0-based)")
    p.add_argument("--k1", type=int, default=0)
    p.add_argument("--k2", type=int, default=1)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--agg", choices=METHODS, default="euclidean")
    p.add_argument("--linkage", choices=LINKAGES, default="complete")
    p.add_argument("--sigma", default=None, help="n x n row covariance CSV (default: identity)")
    p.add_argument("--delta", default=None, help="p x p column covariance CSV (default: identity)")
    p.add_argument("--labels-output", default=None, help="write the aggregated labels CSV here")

    p = sub.add_parser("calibrate", help="null-calibrated lambda")
    _common(p, "seed")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--identity", action="store_true", help="identity covariance (default)")
    p.add_argument("--cov", default=None, help="n x n covariance CSV")
    p.add_argument("--B", type=int, default=10000)

    p = sub.add_parser("simulate", help="Monte Carlo study, tidy CSV of p-values")
    _common(p, "seed")
    p.set_defaults(seed=None)
    p.add_argument("--config", default=None, help="key=value or JSON file; flags override it")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="default: calibrated under the null")
    for name, typ in (("n", int), ("p", int), ("nu", float), ("rho", float),
                      ("replicates", int), ("threads", int), ("K", int), ("j0", int),
                      ("k1", int), ("k2", int), ("K0", int)):
        p.add_argument(f"--{name}", type=typ, default=None)
    p.add_argument("--contrast", choices=("balanced", "pair", "all_pairs"), default=None)
    p.add_argument("--agg", choices=METHODS, default=None)
    p.add_argument("--linkage", choices=LINKAGES, default=None)

    p = sub.add_parser("oracle", help="compare the path with brute-force enumeration")
    _common(p, "seed")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--n", type=int, default=8, help="largest instance size (at most 20)")

    p = sub.add_parser("bench", help="timing of the heap and naive path engines")
    _common(p, "seed")
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--naive-max", type=int, default=10000,
                   help="skip the naive engine above this size")
    p.add_argument("--repeats", type=int, default=3)
    return ap


# -- commands ----------------------------------------------------------------

def _cmd_path(a) -> str:
    x = sio.read_vector(a.input)
    path = compute_path(x)
    if a.format == "csv":
        return sio.format_csv(("step", "lambda", "n_clusters"),
                              [(r, float(b), int(k)) for r, (b, k)
                               in enumerate(zip(path.breakpoints, path.n_clusters))])
    return sio.dumps_json(sio.path_to_dict(path))


def _cmd_fit(a) -> str:
    x = sio.read_vector(a.input)
    sol = solution_at(compute_path(x), a.lam)
    rows = sio.solution_rows(x, sol)
    if a.format == "json":
        return sio.dumps_json({"lambda": a.lam,
                               "centers": [float(c) for c in sol.centers],
                               "rows": [dict(zip(("index", "x", "B_hat", "cluster_id"), r))
                                        for r in rows]})
    return sio.format_csv(("index", "x", "B_hat", "cluster_id"), rows)


def _cmd_test1d(a) -> str:
    x = sio.read_vector(a.input)
    if (a.k1 is None) != (a.k2 is None):
        raise UsageError("give both --k1 and --k2, or neither")
    builder = balanced_contrast if a.k1 is None else cluster_contrast(a.k1, a.k2)
    cov = None if a.cov is None else sio.read_matrix(a.cov)
    res = selective_pvalue_1d(x, a.lam, cov, builder)
    return sio.dumps_json(_result_dict(res))


def _result_dict(res) -> dict:
    d = res.to_dict()
    return {k: sio._num(v) if isinstance(v, float) else v for k, v in d.items()}


def _cmd_testnd(a) -> str:
    Y = sio.read_matrix(a.input)
    n, p = Y.shape
    Sigma = np.eye(n) if a.sigma is None else sio.read_matrix(a.sigma)
    Delta = np.eye(p) if a.delta is None else sio.read_matrix(a.delta)
    model = GaussianModel.kronecker(Sigma, Delta)
    cc = columnwise_paths(Y, a.lam)
    agg = aggregate_columns(cc, a.K, a.agg, a.linkage)
    kappa = build_kappa(agg, a.j0, a.k1, a.k2, n, p)
    res = pvalue_from_constraints(vec(Y), a.lam, model, build_block_constraints(cc), kappa,
                                  cc.clusterings)
    if a.labels_output:
        sio.write_text(sio.format_csv(("row_index", "label"), sio.aggregated_rows(agg)),
                       a.labels_output)
    d = _result_dict(res)
    d["aggregated"] = {"labels": agg.labels.tolist(), "K": agg.K, "method": agg.method,
                       "degraded": agg.degraded}
    d["j0"], d["k1"], d["k2"] = a.j0, a.k1, a.k2
    return sio.dumps_json(d)


def _cmd_calibrate(a) -> str:
    if a.cov is not None:
        Sigma = sio.read_matrix(a.cov)
        n = Sigma.shape[0] if a.n is None else a.n
    else:
        if a.n is None:
            raise UsageError("--n is required without --cov")
        Sigma, n = None, a.n
    lam = calibrate_lambda(n, Sigma, a.B, a.seed)
    if a.format == "json":
        return sio.dumps_json({"lambda": lam, "n": n, "B": a.B, "seed": a.seed})
    return f"{lam!r}\n"


def _cmd_simulate(a) -> str:
    d = sio.read_config(a.config) if a.config else {}
    for key in ("n", "p", "nu", "rho", "replicates", "threads", "K", "j0", "k1", "k2", "K0",
                "contrast", "agg", "linkage", "seed"):
        v = getattr(a, key)
        if v is not None:
            d[key] = v
    if a.lam is not None:
        d["lam"] = a.lam
    cfg = ExperimentConfig.from_mapping(d)
    res = run_experiment_1d(cfg) if cfg.p == 1 else run_experiment_multidim(cfg)
    if a.format == "json":
        return sio.dumps_json({"seed": cfg.seed, "lambda": res.lam, "accepted": res.accepted,
                               "rejected": res.rejected, "degenerate": res.degenerate,
                               "records": res.records})
    head = (f"# seed={cfg.seed} lambda={res.lam!r} accepted={res.accepted} "
            f"rejected={res.rejected} degenerate={res.degenerate}\n")
    fields = ("seed", "nu", "rho", "j", "pair", "pvalue", "method", "kappa_beta")
    return head + sio.format_csv(fields, [[r[f] for f in fields] for r in res.records])


def _cmd_oracle(a) -> str:
    if not 2 <= a.n <= 20:
        raise UsageError("--n must lie in [2, 20]")
    rng = np.random.default_rng(a.seed)
    failures = 0
    for _ in range(a.replicates):
        n = int(rng.integers(2, a.n + 1))
        x = np.round(rng.normal(size=n) * 3, int(rng.integers(0, 3)))
        path = compute_path(x)
        lmax = lambda_max(x)
        lam = float(rng.uniform(0, 1.2 * lmax + 1e-3))
        sol = solution_at(path, lam)
        bf = brute_force_solve(x, lam)
        if not (abs(sol.objective(x) - bf.objective(x)) <= 1e-9 * (1 + abs(bf.objective(x)))
                and sol.clustering.same_partition(bf.clustering)):
            failures += 1
    if a.format == "json":
        return sio.dumps_json({"checked": a.replicates, "failures": failures, "seed": a.seed})
    status = "PASS" if failures == 0 else "FAIL"
    return f"{status} checked={a.replicates} failures={failures} seed={a.seed}\n"


def loglog_slope(sizes, times) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def _cmd_bench(a) -> str:
    rng = np.random.default_rng(a.seed)
    rows = []
    heap_t = []
    for n in a.sizes:
        x = rng.normal(size=n)
        for engine, fn in (("heap", compute_path), ("naive", compute_path_naive)):
            if engine == "naive" and n > a.naive_max:
                continue
            best = np.inf
            for _ in range(a.repeats):
                t0 = time.perf_counter()
                fn(x)
                best = min(best, time.perf_counter() - t0)
            rows.append((engine, n, best))
            if engine == "heap":
                heap_t.append(best)
    out = sio.format_csv(("engine", "n", "seconds"), rows)
    if len(a.sizes) >= 2:
        out += f"# heap_loglog_slope={loglog_slope(a.sizes, heap_t):.3f}\n"
    return out


COMMANDS = {"path": _cmd_path, "fit": _cmd_fit, "test1d": _cmd_test1d, "testnd": _cmd_testnd,
            "calibrate": _cmd_calibrate, "simulate": _cmd_simulate, "oracle": _cmd_oracle,
            "bench": _cmd_bench}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = COMMANDS[a.command](a)
        sio.write_text(text, a.output)
    except (UsageError, InvalidInput, FileNotFoundError, IsADirectoryError) as exc:
        print(f"selclust {a.command}: {exc}", file=sys.stderr)
        return 2
    except SelClustError as exc:
        print(f"selclust {a.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
