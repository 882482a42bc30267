"""Monte Carlo accuracy harness for single-qubit estimation.

Random true states are drawn from the Hilbert-Schmidt (flat) measure on the
Bloch ball, measured N times along each Pauli axis, estimated, and scored
against the truth.  Error organizes by the radial coordinate
r^2 = (1 + Tr rho^2)/2 with regimes separated near 1 - r^2 = sqrt(3/N).

Every trial is seeded independently through a keyed 64-bit mix of
(master_seed, state_id, dataset_id), so results are reproducible regardless
of execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .estimators import (
    SolverConfig,
    hmle,
    linear_inversion,
    mle,
    verify_likelihood_ratio,
)
from .likelihood import MeasurementRecord, pool_measurements
from .states import DensityMatrix, from_bloch, pauli_povm, to_bloch

ESTIMATOR_ORDER = ("linear_inversion", "mle", "hmle")
METRIC_ORDER = ("kl", "infidelity", "trace", "hs")
CSV_HEADER = (
    "state_id,bloch_x,bloch_y,bloch_z,r_sq,N,estimator,beta,metric,"
    "mean_error,n_finite,n_infinite"
)
RATIO_MAX_SLACK = 1e-6  # ratio > 1 + slack marks an MLE solver failure

_MASK64 = (1 << 64) - 1
_STREAM_STATE = 0x51A7E
_STREAM_DATA = 0xDA7A


def _splitmix64(value: int) -> int:
    value = (value + 0x9E3779B97F4A7C15) & _MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & _MASK64
    return value ^ (value >> 31)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Keyed 64-bit mix: fold each key into the running hash with splitmix64."""
    state = int(master_seed) & _MASK64
    for key in keys:
        state = _splitmix64(state ^ (int(key) & _MASK64))
    return state


def _rng(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *keys)))


def regime_boundary(shots_per_basis: int) -> float:
    """The 1 - r^2 value sqrt(3/N) separating the accuracy regimes."""
    return math.sqrt(3.0 / shots_per_basis)


# ---------------------------------------------------------------------------
# sampling


def sample_hs_state(rng: np.random.Generator) -> DensityMatrix:
    """Qubit from the Hilbert-Schmidt measure: Bloch vector uniform in the ball."""
    direction = _sphere_direction(rng)
    radius = rng.uniform() ** (1.0 / 3.0)
    return from_bloch(radius * direction)


def sample_pure_state(rng: np.random.Generator) -> DensityMatrix:
    """Haar-random pure qubit: Bloch vector uniform on the unit sphere."""
    return from_bloch(_sphere_direction(rng))


def _sphere_direction(rng: np.random.Generator) -> np.ndarray:
    while True:
        vec = rng.normal(size=3)
        norm = np.linalg.norm(vec)
        if norm > 1e-12:
            return vec / norm


def random_density_matrix(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Hilbert-Schmidt random state of any dimension (normalized Ginibre)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via phase-fixed QR of a Ginibre matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def simulate_pauli_data(
    rho: DensityMatrix, shots_per_basis: int, rng: np.random.Generator
) -> MeasurementRecord:
    """Measure ``shots_per_basis`` times along each Pauli axis and pool.

    The +1 outcome of axis a is binomial with success probability
    (1 + b_a)/2; the three two-outcome POVMs are pooled with weights 1/3.
    """
    if shots_per_basis < 1:
        raise ValueError("need at least one shot per basis")
    bloch = to_bloch(rho)
    runs = []
    for axis, component in zip("xyz", bloch):
        p_plus = min(max((1.0 + component) / 2.0, 0.0), 1.0)
        n_plus = int(rng.binomial(shots_per_basis, p_plus))
        runs.append((pauli_povm(axis), (n_plus, shots_per_basis - n_plus)))
    return pool_measurements(runs)


# ---------------------------------------------------------------------------
# sweep configuration and results


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: states x datasets x estimators x betas, all from one seed."""

    n_states: int
    n_datasets: int
    shots_per_basis: int
    betas: tuple[float, ...] = (0.5,)
    estimators: tuple[str, ...] = ("mle", "hmle")
    metrics: tuple[str, ...] = METRIC_ORDER
    master_seed: int = 0

    def __post_init__(self):
        if min(self.n_states, self.n_datasets, self.shots_per_basis) < 1:
            raise ValueError("state, dataset and shot counts must be at least 1")
        betas = tuple(sorted(float(b) for b in self.betas))
        if betas and betas[0] <= 0:
            raise ValueError("beta grid entries must be positive")
        unknown = set(self.estimators) - set(ESTIMATOR_ORDER)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        unknown = set(self.metrics) - set(METRIC_ORDER)
        if unknown:
            raise ValueError(f"unknown metrics: {sorted(unknown)}")
        if "hmle" in self.estimators and not betas:
            raise ValueError("hmle requires a non-empty beta grid")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(
            self, "estimators", tuple(e for e in ESTIMATOR_ORDER if e in self.estimators)
        )
        object.__setattr__(
            self, "metrics", tuple(m for m in METRIC_ORDER if m in self.metrics)
        )
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_datasets": self.n_datasets,
            "shots_per_basis": self.shots_per_basis,
            "betas": list(self.betas),
            "estimators": list(self.estimators),
            "metrics": list(self.metrics),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(
            n_states=int(data["n_states"]),
            n_datasets=int(data["n_datasets"]),
            shots_per_basis=int(data["shots_per_basis"]),
            betas=tuple(data["betas"]),
            estimators=tuple(data["estimators"]),
            metrics=tuple(data["metrics"]),
            master_seed=int(data["master_seed"]),
        )


@dataclass(frozen=True)
class StateInfo:
    state_id: int
    bloch: tuple[float, float, float]
    r_sq: float


@dataclass(frozen=True)
class TrialResult:
    state_id: int
    dataset_id: int
    estimator: str
    beta: float | None
    errors: dict[str, float]


@dataclass(frozen=True)
class TrialCheck:
    """Per-trial invariant data: ratio bound and eigenvalue structure."""

    state_id: int
    dataset_id: int
    beta: float
    ratio: float
    bound: float
    holds: bool
    mle_is_max: bool
    linv_min_eig: float
    mle_min_eig: float
    hmle_min_eig: float


@dataclass(frozen=True)
class ReportRow:
    state_id: int
    bloch: tuple[float, float, float]
    r_sq: float
    shots_per_basis: int
    estimator: str
    beta: float | None
    metric: str
    mean_error: float
    n_finite: int
    n_infinite: int


@dataclass(frozen=True)
class SweepReport:
    """Aggregated sweep output: the plot-ready table plus raw trials."""

    config: ExperimentConfig
    states: tuple[StateInfo, ...]
    rows: tuple[ReportRow, ...]
    trials: tuple[TrialResult, ...]
    checks: tuple[TrialCheck, ...]
    boundary: float
    ratio_failures: tuple[TrialCheck, ...]
    solver_failures: tuple[tuple[int, int, str, float | None], ...]

    def select_rows(self, estimator=None, beta=None, metric=None):
        out = []
        for row in self.rows:
            if estimator is not None and row.estimator != estimator:
                continue
            if beta is not None and (row.beta is None or row.beta != beta):
                continue
            if metric is not None and row.metric != metric:
                continue
            out.append(row)
        return out


def _score(rho_true: DensityMatrix, estimate_matrix, wanted: tuple[str, ...]) -> dict:
    errors = {}
    for name in wanted:
        if name == "kl":
            errors[name] = metrics.quantum_relative_entropy(rho_true, estimate_matrix)
        elif name == "infidelity":
            errors[name] = metrics.infidelity(rho_true, estimate_matrix)
        elif name == "trace":
            errors[name] = metrics.trace_distance(rho_true, estimate_matrix)
        elif name == "hs":
            errors[name] = metrics.hs_distance(rho_true, estimate_matrix)
    return errors


def _sweep_state_worker(args) -> tuple[StateInfo, list, list, list]:
    config, state_id = args
    rho_true = sample_hs_state(_rng(config.master_seed, _STREAM_STATE, state_id))
    bloch = to_bloch(rho_true)
    info = StateInfo(
        state_id=state_id,
        bloch=(bloch.x, bloch.y, bloch.z),
        r_sq=metrics.radial_coordinate(rho_true).r_sq,
    )
    solver_config = SolverConfig()
    trials: list[TrialResult] = []
    checks: list[TrialCheck] = []
    failures: list[tuple[int, int, str, float | None]] = []

    for dataset_id in range(config.n_datasets):
        rng = _rng(config.master_seed, _STREAM_DATA, state_id, dataset_id)
        record = simulate_pauli_data(rho_true, config.shots_per_basis, rng)

        linv = linear_inversion(record)
        mle_est, mle_diag = mle(record, solver_config)
        if not mle_diag.converged:
            failures.append((state_id, dataset_id, "mle", None))

        if "linear_inversion" in config.estimators:
            trials.append(
                TrialResult(state_id, dataset_id, "linear_inversion", None,
                            _score(rho_true, linv.matrix, config.metrics))
            )
        if "mle" in config.estimators:
            trials.append(
                TrialResult(state_id, dataset_id, "mle", None,
                            _score(rho_true, mle_est, config.metrics))
            )
        for beta in config.betas if "hmle" in config.estimators else ():
            hmle_est, hmle_diag = hmle(record, beta, solver_config)
            if not hmle_diag.converged:
                failures.append((state_id, dataset_id, "hmle", beta))
            trials.append(
                TrialResult(state_id, dataset_id, "hmle", beta,
                            _score(rho_true, hmle_est, config.metrics))
            )
            ratio = verify_likelihood_ratio(record, beta, mle_est, hmle_est)
            checks.append(
                TrialCheck(
                    state_id=state_id,
                    dataset_id=dataset_id,
                    beta=beta,
                    ratio=ratio.ratio,
                    bound=ratio.bound,
                    holds=ratio.holds,
                    mle_is_max=ratio.ratio <= 1 + RATIO_MAX_SLACK,
                    linv_min_eig=linv.min_eigenvalue,
                    mle_min_eig=mle_diag.min_eigenvalue,
                    hmle_min_eig=hmle_diag.min_eigenvalue,
                )
            )
    return info, trials, checks, failures


def _mean_with_infinities(values: list[float]) -> tuple[float, int, int]:
    finite = [v for v in values if math.isfinite(v)]
    n_infinite = len(values) - len(finite)
    if n_infinite > 0:
        return float("inf"), len(finite), n_infinite
    return float(np.mean(finite)), len(finite), 0


def run_sweep(config: ExperimentConfig, n_jobs: int | None = None) -> SweepReport:
    """Run the full sweep; deterministic for a fixed master seed.

    Trials are independent, run by a parallel map over states, and reduced in
    state order, so the report does not depend on the worker count.  Solver
    failures are recorded per trial and never abort the sweep.
    """
    tasks = [(config, state_id) for state_id in range(config.n_states)]
    if n_jobs is None:
        n_jobs = os.cpu_count() or 1
    if n_jobs > 1 and config.n_states > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_sweep_state_worker, tasks))
    else:
        outcomes = [_sweep_state_worker(task) for task in tasks]

    states: list[StateInfo] = []
    trials: list[TrialResult] = []
    checks: list[TrialCheck] = []
    failures: list = []
    rows: list[ReportRow] = []
    for info, state_trials, state_checks, state_failures in outcomes:
        states.append(info)
        trials.extend(state_trials)
        checks.extend(state_checks)
        failures.extend(state_failures)
        by_key: dict[tuple, list[float]] = {}
        for trial in state_trials:
            for metric_name, value in trial.errors.items():
                by_key.setdefault((trial.estimator, trial.beta, metric_name), []).append(value)
        for estimator in config.estimators:
            beta_values: tuple[float | None, ...] = (
                config.betas if estimator == "hmle" else (None,)
            )
            for beta in beta_values:
                for metric_name in config.metrics:
                    values = by_key.get((estimator, beta, metric_name))
                    if not values:
                        continue
                    mean, n_finite, n_infinite = _mean_with_infinities(values)
                    rows.append(
                        ReportRow(
                            state_id=info.state_id,
                            bloch=info.bloch,
                            r_sq=info.r_sq,
                            shots_per_basis=config.shots_per_basis,
                            estimator=estimator,
                            beta=beta,
                            metric=metric_name,
                            mean_error=mean,
                            n_finite=n_finite,
                            n_infinite=n_infinite,
                        )
                    )

    return SweepReport(
        config=config,
        states=tuple(states),
        rows=tuple(rows),
        trials=tuple(trials),
        checks=tuple(checks),
        boundary=regime_boundary(config.shots_per_basis),
        ratio_failures=tuple(c for c in checks if not (c.holds and c.mle_is_max)),
        solver_failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class BinnedCurve:
    """Per-bin mean error versus 1 - r^2 for one (estimator, beta, metric)."""

    estimator: str
    beta: float | None
    metric: str
    edges: tuple[float, ...]
    means: tuple[float, ...]
    state_counts: tuple[int, ...]
    n_infinite: tuple[int, ...]
    boundary: float


def bin_by_radius(report: SweepReport, n_bins: int = 8) -> list[BinnedCurve]:
    """Bin per-state mean errors by 1 - r^2 of the true state.

    Edges are log-spaced between 1e-4 and 0.25 (the physical maximum for a
    qubit); states purer than the lowest edge fall into the first bin.  Bin
    means average the finite per-state means; infinite ones are counted in
    ``n_infinite``.  The sqrt(3/N) regime boundary is carried alongside.
    """
    if not report.rows:
        raise ValueError("cannot bin an empty report")
    edges = np.geomspace(1e-4, 0.25, n_bins + 1)

    def bin_index(r_sq: float) -> int:
        # Purer states than the lowest edge land in bin 0; 1 - r^2 = 0.25
        # (maximally mixed) lands in the last bin.
        idx = int(np.searchsorted(edges, 1.0 - r_sq, side="right")) - 1
        return min(max(idx, 0), n_bins - 1)

    curves = []
    for estimator in report.config.estimators:
        beta_values = report.config.betas if estimator == "hmle" else (None,)
        for beta in beta_values:
            for metric_name in report.config.metrics:
                rows = report.select_rows(estimator=estimator, beta=beta, metric=metric_name)
                binned: list[list[float]] = [[] for _ in range(n_bins)]
                for row in rows:
                    binned[bin_index(row.r_sq)].append(row.mean_error)
                means, counts, infinities = [], [], []
                for values in binned:
                    finite = [v for v in values if math.isfinite(v)]
                    counts.append(len(values))
                    infinities.append(len(values) - len(finite))
                    means.append(float(np.mean(finite)) if finite else float("nan"))
                curves.append(
                    BinnedCurve(
                        estimator=estimator,
                        beta=beta,
                        metric=metric_name,
                        edges=tuple(float(e) for e in edges),
                        means=tuple(means),
                        state_counts=tuple(counts),
                        n_infinite=tuple(infinities),
                        boundary=report.boundary,
                    )
                )
    return curves


# ---------------------------------------------------------------------------
# pure-state beta scan


@dataclass(frozen=True)
class ScanRow:
    shots_per_basis: int
    beta: float
    mean_kl: float


def _scan_state_worker(args) -> list[tuple[int, float, float]]:
    shots, bloch, counts_per_dataset, betas = args
    rho_true = from_bloch(bloch)
    solver_config = SolverConfig()
    sums = {beta: 0.0 for beta in betas}
    n = 0
    for axis_counts in counts_per_dataset:
        record = pool_measurements(
            [(pauli_povm(a), (k, shots - k)) for a, k in zip("xyz", axis_counts)]
        )
        for beta in betas:
            estimate, _ = hmle(record, beta, solver_config)
            sums[beta] += metrics.quantum_relative_entropy(rho_true, estimate)
        n += 1
    return [(shots, beta, sums[beta] / n) for beta in betas]


def pure_state_beta_scan(
    shots_grid,
    beta_grid,
    rng: np.random.Generator,
    n_states: int = 50,
    n_datasets: int = 200,
    n_jobs: int | None = None,
) -> list[ScanRow]:
    """Mean relative-entropy error over pure states for each (N, beta).

    The beta grid must span [1/(8 sqrt(N)), 4/sqrt(N)] for every N in the
    shots grid.  Data are drawn sequentially from ``rng`` (states first, then
    all binomial counts), so results are deterministic; solving is a parallel
    map reduced in fixed order.
    """
    shots_grid = [int(n) for n in shots_grid]
    betas = tuple(sorted(float(b) for b in beta_grid))
    if not betas or betas[0] <= 0:
        raise ValueError("beta grid must be positive and non-empty")
    for shots in shots_grid:
        if shots < 1:
            raise ValueError("every shot count must be at least 1")
        if len(betas) > 1 and (
            betas[0] > 1 / (8 * math.sqrt(shots)) or betas[-1] < 4 / math.sqrt(shots)
        ):
            raise ValueError(
                f"beta grid must span [1/(8 sqrt(N)), 4/sqrt(N)] for N={shots}"
            )
    if n_states < 1 or n_datasets < 1:
        raise ValueError("need at least one state and one dataset")

    blochs = [tuple(float(c) for c in _sphere_direction(rng)) for _ in range(n_states)]
    tasks = []
    for shots in shots_grid:
        for bloch in blochs:
            p_plus = [(1.0 + c) / 2.0 for c in bloch]
            counts = [
                tuple(int(rng.binomial(shots, min(max(p, 0.0), 1.0))) for p in p_plus)
                for _ in range(n_datasets)
            ]
            tasks.append((shots, bloch, counts, betas))

    if n_jobs is None:
        n_jobs = os.cpu_count() or 1
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_scan_state_worker, tasks))
    else:
        chunks = [_scan_state_worker(task) for task in tasks]

    sums: dict[tuple[int, float], float] = {}
    counts: dict[tuple[int, float], int] = {}
    for chunk in chunks:
        for shots, beta, mean_kl in chunk:
            key = (shots, beta)
            sums[key] = sums.get(key, 0.0) + mean_kl
            counts[key] = counts.get(key, 0) + 1
    return [
        ScanRow(shots_per_basis=shots, beta=beta, mean_kl=sums[(shots, beta)] / counts[(shots, beta)])
        for shots in shots_grid
        for beta in betas
    ]


def scan_argmin(rows: list[ScanRow], shots_per_basis: int) -> float:
    """Beta with the smallest mean error for one shot count."""
    subset = [r for r in rows if r.shots_per_basis == shots_per_basis]
    if not subset:
        raise ValueError(f"no scan rows for N={shots_per_basis}")
    return min(subset, key=lambda r: r.mean_kl).beta


# ---------------------------------------------------------------------------
# serialization of reports


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_csv_text(report: SweepReport) -> str:
    """The sweep table as CSV text (UTF-8, shortest round-trip floats)."""
    out = io.StringIO()
    out.write(CSV_HEADER + "\r\n")
    writer = csv.writer(out)
    for row in report.rows:
        writer.writerow(
            [
                row.state_id,
                _format_value(row.bloch[0]),
                _format_value(row.bloch[1]),
                _format_value(row.bloch[2]),
                _format_value(row.r_sq),
                row.shots_per_basis,
                row.estimator,
                _format_value(row.beta),
                row.metric,
                _format_value(row.mean_error),
                row.n_finite,
                row.n_infinite,
            ]
        )
    return out.getvalue()


def write_sweep_csv(report: SweepReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(sweep_csv_text(report))


def read_sweep_csv(path) -> list[ReportRow]:
    """Parse a sweep CSV back into report rows (round-trips exactly)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if ",".join(header) != CSV_HEADER:
            raise ValueError("unexpected sweep CSV header")
        for rec in reader:
            rows.append(
                ReportRow(
                    state_id=int(rec[0]),
                    bloch=(float(rec[1]), float(rec[2]), float(rec[3])),
                    r_sq=float(rec[4]),
                    shots_per_basis=int(rec[5]),
                    estimator=rec[6],
                    beta=float(rec[7]) if rec[7] else None,
                    metric=rec[8],
                    mean_error=float(rec[9]),
                    n_finite=int(rec[10]),
                    n_infinite=int(rec[11]),
                )
            )
    return rows


def sidecar_text(config: ExperimentConfig) -> str:
    return json.dumps(
        {"config": config.to_dict(), "master_seed": config.master_seed}, indent=2
    ) + "\n"


def write_sidecar(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(sidecar_text(config))


def read_sidecar(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    return ExperimentConfig.from_dict(data["config"])


def scan_csv_text(rows: list[ScanRow]) -> str:
    out = io.StringIO()
    out.write("N,beta,mean_kl\r\n")
    writer = csv.writer(out)
    for row in rows:
        writer.writerow([row.shots_per_basis, _format_value(row.beta), _format_value(row.mean_kl)])
    return out.getvalue()


def write_scan_csv(rows: list[ScanRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(scan_csv_text(rows))


def read_scan_csv(path) -> list[ScanRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["N", "beta", "mean_kl"]:
            raise ValueError("unexpected scan CSV header")
        for rec in reader:
            rows.append(ScanRow(int(rec[0]), float(rec[1]), float(rec[2])))
    return rows
