"""Command-line front end: estimation, simulation, sweeps, scans, verification.

Exit codes: 0 success, 1 usage or input error, 2 solver non-convergence,
3 invariant violation found by ``verify``.  Randomized commands require an
explicit --seed so every run is reproducible.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import classical, montecarlo, serialization, verification
from .estimators import SolverConfig, SolverDiagnostics, hmle, linear_inversion, mle
from .likelihood import MeasurementRecord, hedged_log_likelihood, log_likelihood
from .montecarlo import ExperimentConfig
from .states import from_bloch

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_VERIFY_FAILED = 3


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be at least 1")
    return value


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list") from exc


def _positive_float_list(text: str) -> tuple[float, ...]:
    values = _float_list(text)
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"{text!r} must be positive numbers")
    return values


def _positive_int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list") from exc
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"{text!r} must be positive integers")
    return values


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(part for part in text.split(",") if part)


def _fmt(value: float) -> str:
    return repr(float(value))


def _diag_path(out: Path) -> Path:
    return out.with_name(out.stem + ".diag.json")


def _load_record(path: str) -> MeasurementRecord:
    return serialization.record_from_dict(serialization.load_json(path))


def cmd_estimate(args) -> int:
    record = _load_record(args.record)
    config = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    converged = True
    if args.method == "linear":
        result = linear_inversion(record)
        estimate_matrix = result.matrix
        diagnostics = {
            "iterations": 0,
            "converged": True,
            "final_objective": result.residual,
            "min_eigenvalue": result.min_eigenvalue,
        }
    else:
        if args.method == "mle":
            estimate, diag = mle(record, config)
        else:
            estimate, diag = hmle(record, args.beta, config)
        estimate_matrix = estimate.matrix
        diagnostics = serialization.diagnostics_to_dict(diag)
        converged = diag.converged

    ll = log_likelihood(estimate_matrix, record)
    min_eig = float(np.min(np.linalg.eigvalsh(estimate_matrix)))
    hll = (
        hedged_log_likelihood(estimate_matrix, record, args.beta)
        if min_eig > 0
        else float("-inf")
    )
    print(f"log_likelihood = {_fmt(ll)}")
    print(f"hedged_log_likelihood(beta={_fmt(args.beta)}) = {_fmt(hll)}")
    print(f"min_eigenvalue = {_fmt(min_eig)}")

    if args.out:
        out = Path(args.out)
        serialization.dump_json(serialization.density_matrix_to_dict(estimate_matrix), out)
        serialization.dump_json(diagnostics, _diag_path(out))
        print(f"estimate written to {out}, diagnostics to {_diag_path(out)}")
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def cmd_simulate(args) -> int:
    if (args.state is None) == (args.bloch is None):
        return _usage_error("simulate needs exactly one of --state/--bloch")
    if args.state is not None:
        rho = serialization.density_matrix_from_dict(serialization.load_json(args.state))
    else:
        if len(args.bloch) != 3:
            return _usage_error("--bloch needs three components")
        rho = from_bloch(args.bloch)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    record = montecarlo.simulate_pauli_data(rho, args.shots_per_basis, rng)
    serialization.dump_json(serialization.record_to_dict(record), args.out)
    print(f"record with N = {record.n_total} written to {args.out}")
    return EXIT_OK


def _usage_error(message: str) -> int:
    print(f"hedge: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def cmd_sweep(args) -> int:
    config = ExperimentConfig(
        n_states=args.n_states,
        n_datasets=args.n_datasets,
        shots_per_basis=args.shots_per_basis,
        betas=args.betas,
        estimators=args.estimators,
        metrics=args.metrics,
        master_seed=args.seed,
    )
    report = montecarlo.run_sweep(config, n_jobs=args.jobs)
    out = Path(args.out)
    montecarlo.write_sweep_csv(report, out)
    sidecar = Path(str(out) + ".meta.json")
    montecarlo.write_sidecar(config, sidecar)
    print(f"{len(report.rows)} rows written to {out}; config sidecar {sidecar}")
    print(f"regime boundary sqrt(3/N) = {_fmt(report.boundary)}")
    if report.ratio_failures:
        print(f"{len(report.ratio_failures)} likelihood-ratio failures", file=sys.stderr)
    if report.solver_failures:
        print(f"{len(report.solver_failures)} solver failures", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_scan_beta(args) -> int:
    rng = np.random.Generator(np.random.PCG64(args.seed))
    rows = montecarlo.pure_state_beta_scan(
        args.shots,
        args.betas,
        rng,
        n_states=args.n_states,
        n_datasets=args.n_datasets,
        n_jobs=args.jobs,
    )
    montecarlo.write_scan_csv(rows, args.out)
    sidecar = Path(str(args.out) + ".meta.json")
    serialization.dump_json(
        {
            "shots_grid": list(args.shots),
            "beta_grid": list(args.betas),
            "n_states": args.n_states,
            "n_datasets": args.n_datasets,
            "master_seed": args.seed,
        },
        sidecar,
    )
    print(f"{len(rows)} rows written to {args.out}; config sidecar {sidecar}")
    for shots in args.shots:
        best = montecarlo.scan_argmin(rows, shots)
        print(f"N = {shots}: argmin beta = {_fmt(best)} (1/(2 sqrt N) = {_fmt(0.5 / np.sqrt(shots))})")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verification.run_all(n_trials=args.trials, seed=args.seed, beta=args.beta)
    all_passed = True
    for result in results:
        print(result.summary())
        all_passed = all_passed and result.passed
    return EXIT_OK if all_passed else EXIT_VERIFY_FAILED


def cmd_classical(args) -> int:
    if args.classical_command == "mle":
        _print_vector(classical.classical_mle(args.counts))
    elif args.classical_command == "lidstone":
        _print_vector(classical.lidstone_estimate(args.counts, args.beta))
    elif args.classical_command == "loglik":
        if args.beta is None:
            value = classical.classical_log_likelihood(args.p, args.counts)
        else:
            value = classical.classical_hedged_log_likelihood(args.p, args.counts, args.beta)
        print(_fmt(value))
    elif args.classical_command == "kl":
        print(_fmt(classical.kl_divergence(args.p, args.q)))
    elif args.classical_command == "entropy":
        print(_fmt(classical.shannon_entropy(args.p)))
    elif args.classical_command == "cost":
        expected = classical.excess_predictive_cost(args.true, args.est)
        print(f"expected nats/symbol = {_fmt(expected)}")
        if args.simulate:
            rng = np.random.Generator(np.random.PCG64(args.seed))
            realized = classical.simulate_predictive_cost(args.true, args.est, args.simulate, rng)
            print(f"realized over {args.simulate} draws = {_fmt(realized)}")
    return EXIT_OK


def _print_vector(values) -> None:
    print(",".join(_fmt(v) for v in values))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> CliParser:
    parser = CliParser(prog="hedge", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    est = commands.add_parser("estimate", help="estimate a state from a record file")
    est.add_argument("record", help="MeasurementRecord JSON file")
    est.add_argument("--method", choices=("mle", "hmle", "linear"), required=True)
    est.add_argument("--beta", type=_positive_float, default=0.5)
    est.add_argument("--tol", type=_positive_float, default=1e-10)
    est.add_argument("--max-iter", type=_positive_int, default=20000)
    est.add_argument("--out", help="estimate JSON path (diagnostics beside it)")
    est.set_defaults(func=cmd_estimate)

    sim = commands.add_parser("simulate", help="simulate Pauli measurements of a qubit")
    sim.add_argument("--state", help="DensityMatrix JSON file")
    sim.add_argument("--bloch", type=_float_list, help="bx,by,bz")
    sim.add_argument("--shots-per-basis", type=_positive_int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    sweep = commands.add_parser("sweep", help="Monte Carlo accuracy sweep")
    sweep.add_argument("--n-states", type=_positive_int, default=100)
    sweep.add_argument("--n-datasets", type=_positive_int, default=200)
    sweep.add_argument("--shots-per-basis", type=_positive_int, default=100)
    sweep.add_argument("--betas", type=_positive_float_list, default=(0.01, 0.1, 0.5))
    sweep.add_argument(
        "--estimators", type=_name_list, default=("linear_inversion", "mle", "hmle")
    )
    sweep.add_argument("--metrics", type=_name_list, default=montecarlo.METRIC_ORDER)
    sweep.add_argument("--seed", type=int, required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--jobs", type=_positive_int, default=None)
    sweep.set_defaults(func=cmd_sweep)

    scan = commands.add_parser("scan-beta", help="pure-state optimal-beta scan")
    scan.add_argument("--shots", type=_positive_int_list, required=True, help="N grid, e.g. 100,400")
    scan.add_argument("--betas", type=_positive_float_list, required=True)
    scan.add_argument("--n-states", type=_positive_int, default=50)
    scan.add_argument("--n-datasets", type=_positive_int, default=200)
    scan.add_argument("--seed", type=int, required=True)
    scan.add_argument("--out", required=True)
    scan.add_argument("--jobs", type=_positive_int, default=None)
    scan.set_defaults(func=cmd_scan_beta)

    verify = commands.add_parser("verify", help="run the invariant battery")
    verify.add_argument("--trials", type=_positive_int, default=1000)
    verify.add_argument("--seed", type=int, required=True)
    verify.add_argument("--beta", type=_positive_float, default=0.5)
    verify.set_defaults(func=cmd_verify)

    cls = commands.add_parser("classical", help="classical add-beta baselines")
    classical_commands = cls.add_subparsers(dest="classical_command", required=True)

    c_mle = classical_commands.add_parser("mle", help="empirical frequencies")
    c_mle.add_argument("--counts", type=_int_list, required=True)
    c_mle.set_defaults(func=cmd_classical)

    c_lid = classical_commands.add_parser("lidstone", help="add-beta estimate")
    c_lid.add_argument("--counts", type=_int_list, required=True)
    c_lid.add_argument("--beta", type=_positive_float, required=True)
    c_lid.set_defaults(func=cmd_classical)

    c_ll = classical_commands.add_parser("loglik", help="(hedged) log-likelihood")
    c_ll.add_argument("--p", type=_float_list, required=True)
    c_ll.add_argument("--counts", type=_int_list, required=True)
    c_ll.add_argument("--beta", type=_positive_float, default=None)
    c_ll.set_defaults(func=cmd_classical)

    c_kl = classical_commands.add_parser("kl", help="relative entropy D(p||q)")
    c_kl.add_argument("--p", type=_float_list, required=True)
    c_kl.add_argument("--q", type=_float_list, required=True)
    c_kl.set_defaults(func=cmd_classical)

    c_ent = classical_commands.add_parser("entropy", help="Shannon entropy (nats)")
    c_ent.add_argument("--p", type=_float_list, required=True)
    c_ent.set_defaults(func=cmd_classical)

    c_cost = classical_commands.add_parser("cost", help="excess predictive cost")
    c_cost.add_argument("--true", type=_float_list, required=True)
    c_cost.add_argument("--est", type=_float_list, required=True)
    c_cost.add_argument("--simulate", type=_positive_int, default=None,
                        help="also draw this many symbols and report the realized cost")
    c_cost.add_argument("--seed", type=int, default=None)
    c_cost.set_defaults(func=cmd_classical)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "classical_command", None) == "cost" and args.simulate and args.seed is None:
        parser.error("--simulate requires --seed")
    try:
        return args.func(args)
    except serialization.SchemaError as exc:
        print(f"hedge: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"hedge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
