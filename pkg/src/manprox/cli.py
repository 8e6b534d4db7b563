"""Benchmark command line: run / compare / check / gen-data.

Configuration layering: explicit flags override a TOML config file, which
overrides the built-in defaults (the benchmark-protocol values).  Seeds
may run concurrently up to MANPROX_THREADS; one collector writes all
output files after the seeds finish, so identical invocations produce
identical bytes except for the wall-time fields.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio
from .diagnostics import (
    check_assumption_rank,
    check_second_order,
    check_stationarity,
    estimate_rate,
)
from .exceptions import ManproxError, PreconditionError
from .manifolds import ManifoldPoint, Sphere, Stiefel
from .problems import (
    SparsePCAProblem,
    gen_handcrafted,
    gen_random,
    gen_synthetic,
    normalize_columns,
)
from .prox import solve_tangent_prox
from .solvers import ALGORITHMS, ConvergenceTrace, SolverConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

#: Built-in defaults: solver parameters follow the benchmark protocol;
#: per-problem data defaults are filled in later.
DEFAULTS = {
    "problem": "random",
    "algo": "rpn-g",
    "m": None,
    "n": None,
    "r": 1,
    "mu": None,
    "t": None,
    "rho": 0.5,
    "epsilon": 1e-4,
    "tol": 1e-12,
    "max_iter": 3000,
    "seeds": "1",
    "out": "results",
    "raw_data": False,
}

PROBLEM_DATA_DEFAULTS = {
    "random": {"m": 50, "n": 500, "mu": 0.8},
    "synthetic": {"m": 400, "n": 4000, "mu": 1.2},
    "handcrafted": {"m": 3, "n": 6, "mu": 0.8},
}


@dataclass
class RunSpec:
    """One benchmark invocation: problem family, algorithm, solver
    parameters, seed list and output directory."""

    problem: str
    algos: list[str]
    m: int
    n: int
    r: int
    mu: float
    t: float | None
    rho: float
    epsilon: float
    tol: float
    max_iter: int
    seeds: list[int]
    out: Path
    raw_data: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise PreconditionError("need at least one seed")
        if self.problem not in PROBLEM_DATA_DEFAULTS:
            raise PreconditionError(f"unknown problem {self.problem!r}")
        for algo in self.algos:
            if algo not in ALGORITHMS:
                raise PreconditionError(f"unknown algorithm {algo!r}")
            if algo == "rpn-n" and self.r != 1:
                raise PreconditionError("rpn-n is restricted to r = 1")
        if self.problem == "handcrafted" and self.r != 1:
            raise PreconditionError("the handcrafted instance lives on Sphere(6)")


def build_problem(spec: RunSpec, seed: int):
    """Problem instance and start point for one seed."""
    if spec.problem == "random":
        A = gen_random(spec.m, spec.n, seed)
        if not spec.raw_data:
            A = normalize_columns(A)
        problem = SparsePCAProblem(A, mu=spec.mu, r=spec.r)
        x0 = problem.random_point(np.random.default_rng([seed, 1]))
    elif spec.problem == "synthetic":
        A = gen_synthetic(spec.m, spec.n, seed)
        if not spec.raw_data:
            A = normalize_columns(A)
        problem = SparsePCAProblem(A, mu=spec.mu, r=spec.r)
        x0 = problem.random_point(np.random.default_rng([seed, 1]))
    else:
        A, x0 = gen_handcrafted(seed)
        problem = SparsePCAProblem(A, mu=spec.mu, r=1)
    return problem, x0


def _config_for(spec: RunSpec, problem) -> SolverConfig:
    return SolverConfig(
        t=spec.t if spec.t is not None else problem.default_t,
        mu=spec.mu,
        rho=spec.rho,
        epsilon=spec.epsilon,
        tol_final=spec.tol,
        max_iter=spec.max_iter,
    )


def _run_one(spec: RunSpec, algo: str, seed: int):
    problem, x0 = build_problem(spec, seed)
    cfg = _config_for(spec, problem)
    trace = ALGORITHMS[algo](x0, cfg, problem)
    return trace


def _max_workers(n_seeds: int) -> int:
    env = os.environ.get("MANPROX_THREADS", "1")
    try:
        cap = max(1, int(env))
    except ValueError:
        cap = 1
    return min(cap, n_seeds)


def _run_seeds(spec: RunSpec, algo: str):
    """All seeds of one algorithm; results collected in seed order."""
    results: dict[int, ConvergenceTrace | Exception] = {}
    workers = _max_workers(len(spec.seeds))
    if workers == 1:
        for seed in spec.seeds:
            try:
                results[seed] = _run_one(spec, algo, seed)
            except ManproxError as exc:
                results[seed] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(_run_one, spec, algo, seed) for seed in spec.seeds}
            for seed, fut in futures.items():
                try:
                    results[seed] = fut.result()
                except ManproxError as exc:
                    results[seed] = exc
    return results


def write_trace_jsonl(trace: ConvergenceTrace, path: Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for rec in trace.records:
            fh.write(json.dumps(rec.to_json_dict(), separators=(",", ":")) + "\n")


SUMMARY_COLUMNS = ["algo", "n", "r", "mu", "iter", "iter_v", "iter_u", "f", "sparsity", "v_norm"]


def summary_row(spec: RunSpec, algo: str, traces: list[ConvergenceTrace]) -> dict:
    """Seed-averaged benchmark-table row."""
    def mean(get):
        return float(np.mean([get(t.summary) for t in traces]))

    return {
        "algo": algo,
        "n": spec.n,
        "r": spec.r,
        "mu": spec.mu,
        "iter": mean(lambda s: s.iter),
        "iter_v": mean(lambda s: s.iter_v),
        "iter_u": mean(lambda s: s.iter_u),
        "f": mean(lambda s: s.f_final),
        "sparsity": mean(lambda s: s.sparsity),
        "v_norm": mean(lambda s: s.v_final),
    }


def _write_summary_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _diagnostics_block(spec: RunSpec, algo: str, results) -> dict:
    per_seed = []
    for seed in spec.seeds:
        res = results[seed]
        if isinstance(res, Exception):
            per_seed.append({"seed": seed, "error": f"{type(res).__name__}: {res}"})
            continue
        rate = estimate_rate(res)
        per_seed.append(
            {
                "seed": seed,
                "iter": res.summary.iter,
                "iter_u": res.summary.iter_u,
                "f": res.summary.f_final,
                "sparsity": res.summary.sparsity,
                "v_final": res.summary.v_final,
                "rate": {
                    "slope": None if np.isnan(rate.slope) else rate.slope,
                    "tail_len": rate.tail_len,
                    "classification": rate.classification,
                },
            }
        )
    return {"problem": spec.problem, "algo": algo, "n": spec.n, "r": spec.r,
            "mu": spec.mu, "per_seed": per_seed}


def cmd_run(spec: RunSpec) -> int:
    from .plots import render_run_figure

    spec.out.mkdir(parents=True, exist_ok=True)
    algo = spec.algos[0]
    results = _run_seeds(spec, algo)
    traces = {s: r for s, r in results.items() if isinstance(r, ConvergenceTrace)}
    for seed in spec.seeds:
        res = results[seed]
        if isinstance(res, Exception):
            print(f"seed {seed}: {type(res).__name__}: {res}", file=sys.stderr)
            continue
        write_trace_jsonl(res, spec.out / f"trace_{algo}_{spec.problem}_s{seed}.jsonl")
    if traces:
        _write_summary_csv(
            spec.out / "summary.csv", [summary_row(spec, algo, [traces[s] for s in sorted(traces)])]
        )
        render_run_figure(
            traces,
            f"{algo} on {spec.problem} (n={spec.n}, r={spec.r}, mu={spec.mu})",
            spec.out / f"run_{algo}_{spec.problem}.png",
        )
    print(json.dumps(_diagnostics_block(spec, algo, results), separators=(",", ":"), sort_keys=True))
    return 0 if traces else 1


COMPARE_COLUMNS = ["algo", "k", "v_norm", "cpu_seconds", "phase"]


def cmd_compare(spec: RunSpec) -> int:
    """Run several algorithms on the same problems and emit the merged
    long-format trace data plus the comparison figures."""
    from .plots import render_compare_figures

    spec.out.mkdir(parents=True, exist_ok=True)
    rows = []
    first_seed_traces: dict[str, ConvergenceTrace] = {}
    any_ok, all_failed = False, True
    for algo in spec.algos:
        results = _run_seeds(spec, algo)
        for seed in spec.seeds:
            res = results[seed]
            if isinstance(res, Exception):
                print(f"{algo} seed {seed}: {type(res).__name__}: {res}", file=sys.stderr)
                continue
            all_failed = False
            any_ok = True
            if algo not in first_seed_traces:
                first_seed_traces[algo] = res
            cpu = np.cumsum([r.wall_ns for r in res.records]) / 1e9
            for rec, c in zip(res.records, cpu):
                rows.append(
                    {
                        "algo": algo,
                        "k": rec.k,
                        "v_norm": rec.v_norm,
                        "cpu_seconds": float(c),
                        "phase": rec.phase,
                    }
                )
    with open(spec.out / "compare.csv", "w", encoding="ascii", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    if first_seed_traces:
        render_compare_figures(
            first_seed_traces,
            f"{spec.problem} (n={spec.n}, r={spec.r}, mu={spec.mu})",
            spec.out / "compare_iter.png",
            spec.out / "compare_cpu.png",
        )
    return 0 if any_ok else 1


def cmd_check(spec: RunSpec, point_path: Path, seed: int) -> int:
    problem, _ = build_problem(spec, seed)
    try:
        coords = matio.load_matrix(point_path).reshape(-1, order="F")
    except (OSError, matio.MatrixFormatError) as exc:
        print(f"cannot read point file: {exc}", file=sys.stderr)
        return 1
    man = problem.manifold
    try:
        x = ManifoldPoint(coords, man)
    except ManproxError as exc:
        print(f"point is not feasible: {exc}", file=sys.stderr)
        return 1
    t = spec.t if spec.t is not None else problem.default_t
    prox = solve_tangent_prox(x, problem.egrad(x.coords), t, spec.mu)
    stationarity = prox.v_norm
    rank_ok, sigma_min = check_assumption_rank(x, prox.mask)
    second_order = None
    if stationarity <= 1e-8:
        psd, min_eig = check_second_order(x, problem, prox)
        second_order = {"psd": bool(psd), "min_eig": min_eig if np.isfinite(min_eig) else None}
    report = {
        "stationarity": stationarity,
        "stationary": stationarity <= 1e-8,
        "rank": {"ok": bool(rank_ok), "sigma_min": sigma_min},
        "second_order": second_order,
        "mask": [int(v) for v in prox.mask],
    }
    print(json.dumps(report, separators=(",", ":"), sort_keys=True))
    return 0


def cmd_gen_data(spec: RunSpec, seed: int, out: Path, x0_out: Path | None) -> int:
    if spec.problem == "random":
        A = gen_random(spec.m, spec.n, seed)
    elif spec.problem == "synthetic":
        A = gen_synthetic(spec.m, spec.n, seed)
    else:
        A, x0 = gen_handcrafted(seed)
        if x0_out is not None:
            matio.save_matrix(x0_out, x0.coords.reshape(-1, 1))
    matio.save_matrix(out, A)
    return 0


# ---------------------------------------------------------------------------
# argument handling


def _parse_seeds(text: str) -> list[int]:
    if "," in text:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    count = int(text)
    if count <= 0:
        raise PreconditionError("seed count must be positive")
    return list(range(count))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manprox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="TOML file with defaults")
        p.add_argument("--problem", choices=sorted(PROBLEM_DATA_DEFAULTS))
        p.add_argument("--algo", help="algorithm, or comma list for compare")
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--r", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--t", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--seeds")
        p.add_argument("--out", type=Path)
        p.add_argument("--raw-data", dest="raw_data", action="store_true", default=None,
                       help="skip the column normalization of the data matrix")

    p_run = sub.add_parser("run", help="run one algorithm over seeds")
    add_common(p_run)
    p_cmp = sub.add_parser("compare", help="run several algorithms and merge traces")
    add_common(p_cmp)
    p_chk = sub.add_parser("check", help="stationarity / rank / second-order checks at a point")
    add_common(p_chk)
    p_chk.add_argument("--point", type=Path, required=True)
    p_chk.add_argument("--seed", type=int, default=0)
    p_gen = sub.add_parser("gen-data", help="write a data matrix to file")
    add_common(p_gen)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--x0-out", dest="x0_out", type=Path)
    return parser


def _merge_config(args) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            file_cfg = tomllib.load(fh)
        for key, val in file_cfg.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise PreconditionError(f"unknown config key {key!r}")
            merged[key] = val
    for key in merged:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    data_defaults = PROBLEM_DATA_DEFAULTS[merged["problem"]]
    for key, val in data_defaults.items():
        if merged[key] is None:
            merged[key] = val
    return merged


def spec_from_args(args) -> RunSpec:
    merged = _merge_config(args)
    algos = [tok.strip() for tok in str(merged["algo"]).split(",") if tok.strip()]
    return RunSpec(
        problem=merged["problem"],
        algos=algos,
        m=int(merged["m"]),
        n=int(merged["n"]),
        r=int(merged["r"]),
        mu=float(merged["mu"]),
        t=None if merged["t"] is None else float(merged["t"]),
        rho=float(merged["rho"]),
        epsilon=float(merged["epsilon"]),
        tol=float(merged["tol"]),
        max_iter=int(merged["max_iter"]),
        seeds=_parse_seeds(str(merged["seeds"])),
        out=Path(merged["out"]),
        raw_data=bool(merged["raw_data"]),
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        if args.command == "run":
            if len(spec.algos) != 1:
                raise PreconditionError("run takes exactly one algorithm")
            return cmd_run(spec)
        if args.command == "compare":
            return cmd_compare(spec)
        if args.command == "check":
            return cmd_check(spec, args.point, args.seed)
        if args.command == "gen-data":
            if spec.out == Path(DEFAULTS["out"]):
                raise PreconditionError("gen-data needs an explicit --out file")
            return cmd_gen_data(spec, args.seed, spec.out, args.x0_out)
        raise PreconditionError(f"unknown command {args.command}")
    except ManproxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
