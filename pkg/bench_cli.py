"""
Bench CLI Module
Command-line entry point: compute, schur, oracle, bench cse, emit-plot
"""
import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from cse_model import CSEParams, cse_generate
from czset import ConstrainedZonotope
from errors import InputValidationError, MPIError, UnboundedSetError
from metrics_tracker import MetricsTracker
from mpi import (
    MPIResult,
    mpi_compute,
    mpi_oracle_forward,
    mpi_singular_h,
    mpi_standard_h,
    schur_split,
    singular_split,
)
from polyset import HPolyhedron, closed_loop_constraints_h, vertices_lowdim
from problem_file import ProblemFile, build_report, build_set, load_problem
from settings import MPIOptions, log_level
from synthesis import DareSpec, dare_gain

logger = logging.getLogger(__name__)

SWEEP_FIELDS = ["l", "branch", "k_bar", "q_bar", "wall_ms"]
OPTION_FLAGS = ["eps_zero", "tol_nil", "tol_feas", "k_max", "p_offset", "lp_backend"]


def _closed_loop_h(problem: ProblemFile, system) -> HPolyhedron:
    X, U = build_set(problem.X), build_set(problem.U)
    X_h = X if isinstance(X, HPolyhedron) else X.to_hpoly()
    U_h = U if isinstance(U, HPolyhedron) else U.to_hpoly()
    return closed_loop_constraints_h(X_h, U_h, system.effective_gain)


def run_problem(
    problem: ProblemFile,
    base: Optional[MPIOptions] = None,
    include_set: bool = True,
    tracker: Optional[MetricsTracker] = None,
    **overrides
) -> Tuple[MPIResult, Dict]:
    """
    Solve one problem file with the configured backend

    Args:
        problem: Validated problem document
        base: Options before the file's own opts are applied
        include_set: Embed the set parameters in the report
        tracker: Optional run log
        **overrides: Option values taking precedence over the file

    Returns:
        (result, report) with the report dictionary in schema 1
    """
    opts = problem.options(base, **overrides)
    system = problem.system()
    result = mpi_compute(system.A, system.B, system.K, build_set(problem.X), build_set(problem.U),
                         problem.backend, opts)
    if tracker is not None:
        tracker.log_result(problem.name or "problem", result, system.n)
    return result, build_report(problem, system, result, opts, include_set)


def run_schur(problem: ProblemFile, base: Optional[MPIOptions] = None, **overrides) -> Dict:
    """Ordered Schur split of the problem's closed loop"""
    opts = problem.options(base, **overrides)
    A_cl = problem.system().closed_loop()
    split = schur_split(A_cl, opts.eps_zero, opts.tol_nil)
    out = split.to_dict()
    out['horizon'] = split.horizon(opts.p_offset)
    out['S11_eigenvalues'] = [[float(z.real), float(z.imag)] for z in np.linalg.eigvals(split.S11)]
    return out


def run_oracle(
    problem: ProblemFile,
    base: Optional[MPIOptions] = None,
    k_max: Optional[int] = None,
    **overrides
) -> MPIResult:
    opts = problem.options(base, **overrides)
    system = problem.system()
    return mpi_oracle_forward(system.closed_loop(), _closed_loop_h(problem, system), k_max, opts)


# ---------------------------------------------------------------------------
# CSE sweep
# ---------------------------------------------------------------------------

def _sweep_rows(l: int, settings: Dict) -> List[Dict]:
    """Algorithm branch and forward oracle for one chain length"""
    opts = MPIOptions(**settings['opts'])
    system = cse_generate(CSEParams.build(l=l, **settings['cse']))
    K, _ = dare_gain(system.A, system.B, DareSpec.scalar(system.n, system.m, settings['q'], settings['r']))
    # sweep gains are used as u = K x regardless of the configured sign
    opts = opts.merged(sign=1)
    A_cl = system.A + system.B @ K
    Xbar = closed_loop_constraints_h(HPolyhedron.box(np.ones(system.n)), HPolyhedron.box(np.ones(system.m)), K)

    rows = []
    split = singular_split(A_cl, opts)
    if split is not None:
        algo = mpi_singular_h(A_cl, Xbar, opts, split)
    else:
        algo = mpi_standard_h(A_cl, Xbar, opts)
    oracle = mpi_oracle_forward(A_cl, Xbar, opts=opts)
    for res in (algo, oracle):
        rows.append({
            'l': l,
            'branch': res.branch,
            'k_bar': res.k_bar,
            'q_bar': res.row_count,
            'wall_ms': round(res.wall_time * 1000.0, 3)
        })
    logger.info("cse l=%d: %s k_bar=%d q_bar=%d, oracle k_bar=%d q_bar=%d",
                l, algo.branch, algo.k_bar, algo.row_count, oracle.k_bar, oracle.row_count)
    return rows


def run_cse_sweep(
    l_values: Iterable[int],
    opts: Optional[MPIOptions] = None,
    q: float = 1.0,
    r: float = 1.0,
    workers: int = 1,
    tracker: Optional[MetricsTracker] = None,
    **cse
) -> List[Dict]:
    """
    CSE benchmark over chain lengths with Riccati gains (Q = qI, R = rI)

    Args:
        l_values: Chain lengths
        opts: Numerical options
        q, r: Riccati weights
        workers: Processes; rows are returned in l order either way
        tracker: Optional run log
        **cse: Extra CSEParams fields (mu, delta, k, Ts, kc_variant)

    Returns:
        Two rows per l: the algorithm branch, then the oracle
    """
    opts = opts or MPIOptions()
    settings = {'opts': opts.model_dump(), 'q': q, 'r': r, 'cse': cse}
    l_values = list(l_values)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_sweep_rows, l_values, [settings] * len(l_values)))
    else:
        chunks = [_sweep_rows(l, settings) for l in l_values]

    rows = [row for chunk in chunks for row in chunk]
    if tracker is not None:
        for row in rows:
            tracker.log_run(f"cse-l={row['l']}", row['branch'], "hpoly", 2 * row['l'],
                            row['k_bar'], row['q_bar'], row['wall_ms'])
    return rows


def write_sweep_csv(rows: List[Dict], out):
    writer = csv.DictWriter(out, fieldnames=SWEEP_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

def plot_rows(
    S: Union[HPolyhedron, ConstrainedZonotope],
    opts: Optional[MPIOptions] = None,
    samples: int = 64
) -> List[Dict]:
    """
    Vertices for half-space sets in dimension <= 3, otherwise support
    samples i,j,angle,support in every coordinate plane
    """
    opts = opts or MPIOptions()
    if isinstance(S, HPolyhedron) and S.dim <= 3:
        V = vertices_lowdim(S, method=opts.lp_backend)
        return [{f"x{i + 1}": float(v[i]) for i in range(S.dim)} for v in V]

    rows = []
    angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    for i in range(S.dim):
        for j in range(i + 1, S.dim):
            for angle in angles:
                d = np.zeros(S.dim)
                d[i], d[j] = np.cos(angle), np.sin(angle)
                h = S.support(d, opts.tol_feas, opts.lp_backend)
                if not np.isfinite(h):
                    raise UnboundedSetError("plot data needs a bounded set", {'plane': [i, j]})
                rows.append({'i': i, 'j': j, 'angle': round(float(angle), 12), 'support': h})
    return rows


def emit_plot_data(
    S: Union[HPolyhedron, ConstrainedZonotope],
    path: Union[str, Path],
    opts: Optional[MPIOptions] = None,
    samples: int = 64
) -> int:
    """Write plot rows to a CSV file; returns the number of rows"""
    rows = plot_rows(S, opts, samples)
    if not rows:
        raise InputValidationError("set has no plot data")
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    logger.info("wrote %d plot rows to %s", len(rows), path)
    return len(rows)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _add_option_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--eps-zero", type=float, help="Relative zero-eigenvalue threshold")
    parser.add_argument("--tol-nil", type=float, help="Relative nilpotency tolerance")
    parser.add_argument("--tol-feas", type=float, help="LP feasibility tolerance")
    parser.add_argument("--k-max", type=int, help="Iteration cap")
    parser.add_argument("--p-offset", type=int, help="Extra lift steps")
    parser.add_argument("--lp-backend", choices=["simplex", "highs"], help="LP solver")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpi-bench",
        description="Maximal positively invariant sets for closed-loop linear systems"
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: MPI_LOG_LEVEL or WARNING)")
    parser.add_argument("--metrics-file", default=os.getenv("MPI_METRICS_FILE"), help="Append run metrics to this JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="Compute the MPI set of a problem file")
    p.add_argument("problem", help="Problem JSON file")
    p.add_argument("--out", help="Report JSON file (default: stdout)")
    p.add_argument("--no-set", action="store_true", help="Omit set parameters from the report")
    p.add_argument("--backend", choices=["hpoly", "czono"], help="Override the file's backend")
    _add_option_flags(p)

    p = sub.add_parser("schur", help="Ordered Schur split of the closed loop")
    p.add_argument("problem")
    p.add_argument("--out")
    _add_option_flags(p)

    p = sub.add_parser("oracle", help="Forward-power reference MPI set")
    p.add_argument("problem")
    p.add_argument("--out")
    p.add_argument("--no-set", action="store_true")
    _add_option_flags(p)

    bench = sub.add_parser("bench", help="Benchmark sweeps")
    bench_sub = bench.add_subparsers(dest="suite", required=True)
    p = bench_sub.add_parser("cse", help="Coupled spring experiment sweep")
    p.add_argument("--l-min", type=int, default=2)
    p.add_argument("--l-max", type=int, default=10)
    p.add_argument("--q", type=float, default=1.0, help="State weight q (Q = qI)")
    p.add_argument("--r", type=float, default=1.0, help="Input weight r (R = rI)")
    p.add_argument("--mu", type=float, default=4.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--stiffness", type=float, default=1.0)
    p.add_argument("--ts", type=float, default=1.0)
    p.add_argument("--kc-variant", choices=["benchmark", "standard"], default="benchmark")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV file (default: stdout)")
    _add_option_flags(p)

    p = sub.add_parser("emit-plot", help="Vertices or support samples of the MPI set")
    p.add_argument("problem")
    p.add_argument("--out", required=True, help="CSV file")
    p.add_argument("--reduced", action="store_true", help="Emit the reduced set of the singular branch")
    p.add_argument("--samples", type=int, default=64, help="Directions per coordinate plane")
    _add_option_flags(p)
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    return {name: getattr(args, name) for name in OPTION_FLAGS if getattr(args, name, None) is not None}


def _emit_json(payload: Dict, out: Optional[str]):
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _dispatch(args: argparse.Namespace, tracker: Optional[MetricsTracker]) -> int:
    overrides = _overrides(args)
    base = MPIOptions.from_env()

    if args.command == "bench":
        opts = base.merged(**overrides)
        rows = run_cse_sweep(
            range(args.l_min, args.l_max + 1), opts, args.q, args.r, args.workers, tracker,
            mu=args.mu, delta=args.delta, k=args.stiffness, Ts=args.ts, kc_variant=args.kc_variant
        )
        if args.out:
            with open(args.out, 'w', newline='') as f:
                write_sweep_csv(rows, f)
        else:
            write_sweep_csv(rows, sys.stdout)
        return 0

    problem = load_problem(args.problem)
    if args.command == "compute":
        if args.backend:
            problem = problem.model_copy(update={'backend': args.backend})
        _, report = run_problem(problem, base, not args.no_set, tracker, **overrides)
        _emit_json(report, args.out)
    elif args.command == "schur":
        _emit_json(run_schur(problem, base, **overrides), args.out)
    elif args.command == "oracle":
        result = run_oracle(problem, base, **overrides)
        if tracker is not None:
            tracker.log_result(problem.name or "problem", result, problem.n)
        _emit_json(result.to_dict(not args.no_set), args.out)
    elif args.command == "emit-plot":
        result, _ = run_problem(problem, base, False, tracker, **overrides)
        target = result.set
        if args.reduced:
            if result.reduced is None:
                raise InputValidationError("no reduced set: the closed loop took the standard branch or exited early")
            target = result.reduced.set
        opts = problem.options(base, **overrides)
        emit_plot_data(target, args.out, opts, args.samples)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or log_level()).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    tracker = MetricsTracker(args.metrics_file) if args.metrics_file else None
    try:
        return _dispatch(args, tracker)
    except MPIError as e:
        logger.error("%s: %s", type(e).__name__, e.message)
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return InputValidationError.exit_code
    finally:
        if tracker is not None:
            tracker.save()


if __name__ == "__main__":
    sys.exit(main())
