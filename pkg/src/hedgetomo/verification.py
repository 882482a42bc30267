"""Packaged invariant checks, replayable by seed.

Each check runs a battery of seeded random trials and reports the seeds of
any offending trials so a failure can be replayed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .estimators import (
    SolverConfig,
    hmle,
    linear_inversion,
    mle,
    projective_hmle_closed_form,
    verify_likelihood_ratio,
)
from .likelihood import (
    MeasurementRecord,
    hedging_gradient,
    hedging_term,
    likelihood_gradient,
    log_likelihood,
    pool_measurements,
)
from .montecarlo import (
    derive_seed,
    random_density_matrix,
    random_unitary,
    sample_hs_state,
    simulate_pauli_data,
)
from .states import DensityMatrix, basis_povm, matrix, pauli_povm

RATIO_BOUND_SLACK = 1e-9
RATIO_MAX_SLACK = 1e-6
CLOSED_FORM_TOL = 1e-8
GRADIENT_RTOL = 1e-5
FD_STEP = 1e-6
METRIC_IDENTITY_TOL = 1e-12
RANK_DEFICIENT_LINV = -1e-6
RANK_DEFICIENT_MLE = 1e-6

_STRICT = SolverConfig(tol=1e-13, grad_tol=1e-9, max_iter=200000)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    n_trials: int
    failures: tuple[str, ...]

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} {self.name} ({self.n_trials} trials)"
        if self.failures:
            line += f"; failures: {', '.join(self.failures[:5])}"
            if len(self.failures) > 5:
                line += f" and {len(self.failures) - 5} more"
        return line


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def check_likelihood_ratio_bound(
    n_trials: int, seed: int, beta: float = 0.5, shots_per_basis: int = 10
) -> CheckResult:
    """L(rho_H)/L(rho_MLE) >= e^{-d beta} and <= 1 on random qubit data.

    Also asserts the rank-deficiency implication (negative linear inversion
    forces a boundary MLE) and strict positivity of every hedged estimate.
    """
    failures = []
    for index in range(n_trials):
        trial_seed = derive_seed(seed, 0xB0, index)
        rng = _generator(trial_seed)
        rho_true = sample_hs_state(rng)
        record = simulate_pauli_data(rho_true, shots_per_basis, rng)
        linv = linear_inversion(record)
        mle_est, mle_diag = mle(record)
        hmle_est, hmle_diag = hmle(record, beta)
        check = verify_likelihood_ratio(record, beta, mle_est, hmle_est)
        if not check.holds:
            failures.append(f"seed={trial_seed} ratio={check.ratio:.6g} below bound")
        if not check.ratio <= 1 + RATIO_MAX_SLACK:
            failures.append(f"seed={trial_seed} ratio={check.ratio:.6g} above 1")
        if linv.min_eigenvalue < RANK_DEFICIENT_LINV and not (
            mle_diag.min_eigenvalue <= RANK_DEFICIENT_MLE
        ):
            failures.append(
                f"seed={trial_seed} interior MLE despite negative inversion "
                f"(min eig {mle_diag.min_eigenvalue:.3g})"
            )
        if not hmle_diag.min_eigenvalue > 0:
            failures.append(f"seed={trial_seed} hedged estimate not strictly positive")
    return CheckResult(
        name="likelihood-ratio bound, rank deficiency, hedged positivity",
        passed=not failures,
        n_trials=n_trials,
        failures=tuple(failures),
    )


def check_closed_form_agreement(n_trials: int, seed: int) -> CheckResult:
    """Iterative hedged MLE equals the add-beta closed form on single bases."""
    failures = []
    betas = (0.1, 0.5, 1.0)
    for index in range(n_trials):
        trial_seed = derive_seed(seed, 0xCF, index)
        rng = _generator(trial_seed)
        dim = int(rng.integers(2, 5))
        basis = random_unitary(dim, rng)
        counts = rng.integers(0, 30, size=dim)
        if counts.sum() == 0:
            counts[0] = 1
        record = MeasurementRecord.from_single_povm(basis_povm(basis), counts)
        for beta in betas:
            estimate, _ = hmle(record, beta, _STRICT)
            closed = projective_hmle_closed_form(counts, basis, beta)
            err = metrics.hs_distance(estimate, closed)
            if err > CLOSED_FORM_TOL:
                failures.append(f"seed={trial_seed} beta={beta} hs={err:.3g}")
    return CheckResult(
        name="closed-form agreement on single-basis records",
        passed=not failures,
        n_trials=n_trials * len(betas),
        failures=tuple(failures),
    )


def _random_interior_state(dim: int, rng: np.random.Generator) -> DensityMatrix:
    raw = random_density_matrix(dim, rng).matrix
    mixed = 0.5 * raw + 0.5 * np.eye(dim) / dim
    return DensityMatrix(mixed)


def _random_record(dim: int, rng: np.random.Generator) -> MeasurementRecord:
    if dim == 2:
        return simulate_pauli_data(sample_hs_state(rng), 20, rng)
    runs = []
    for _ in range(2):
        povm = basis_povm(random_unitary(dim, rng))
        counts = rng.integers(1, 20, size=dim)
        runs.append((povm, tuple(int(c) for c in counts)))
    return pool_measurements(runs)


def _traceless_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (z + z.conj().T) / 2
    h -= np.trace(h).real * np.eye(dim) / dim
    return h / np.linalg.norm(h)


def check_gradients(
    n_states: int = 20, n_directions: int = 20, seed: int = 0
) -> CheckResult:
    """Analytic gradients match central finite differences (step 1e-6)."""
    failures = []
    total = 0
    for index in range(n_states):
        trial_seed = derive_seed(seed, 0x9D, index)
        rng = _generator(trial_seed)
        dim = 2 if index % 2 == 0 else 3
        rho = _random_interior_state(dim, rng)
        record = _random_record(dim, rng)
        beta = float(rng.uniform(0.1, 1.0))
        grad_l = likelihood_gradient(rho, record)
        grad_h = hedging_gradient(rho, beta)
        for _ in range(n_directions):
            total += 2
            delta = _traceless_direction(dim, rng)
            analytic = float(np.real(np.trace(grad_l @ delta)))
            plus = log_likelihood(matrix(rho) + FD_STEP * delta, record)
            minus = log_likelihood(matrix(rho) - FD_STEP * delta, record)
            numeric = (plus - minus) / (2 * FD_STEP)
            if abs(analytic - numeric) > GRADIENT_RTOL * max(1.0, abs(numeric)):
                failures.append(f"seed={trial_seed} likelihood grad err")
            analytic = float(np.real(np.trace(grad_h @ delta)))
            plus = hedging_term(matrix(rho) + FD_STEP * delta, beta)
            minus = hedging_term(matrix(rho) - FD_STEP * delta, beta)
            numeric = (plus - minus) / (2 * FD_STEP)
            if abs(analytic - numeric) > GRADIENT_RTOL * max(1.0, abs(numeric)):
                failures.append(f"seed={trial_seed} hedging grad err")
    return CheckResult(
        name="gradient vs central finite differences",
        passed=not failures,
        n_trials=total,
        failures=tuple(failures),
    )


def check_qubit_metric_identity(n_trials: int, seed: int) -> CheckResult:
    """Trace distance equals sqrt(2) x Hilbert-Schmidt distance for qubits."""
    failures = []
    for index in range(n_trials):
        trial_seed = derive_seed(seed, 0x2D, index)
        rng = _generator(trial_seed)
        rho = sample_hs_state(rng)
        sigma = sample_hs_state(rng)
        td = metrics.trace_distance(rho, sigma)
        hs = metrics.hs_distance(rho, sigma)
        if abs(td - math.sqrt(2) * hs) > METRIC_IDENTITY_TOL:
            failures.append(f"seed={trial_seed} |td - sqrt2*hs|={abs(td - math.sqrt(2)*hs):.3g}")
    return CheckResult(
        name="qubit norm equivalence (trace = sqrt2 * Hilbert-Schmidt)",
        passed=not failures,
        n_trials=n_trials,
        failures=tuple(failures),
    )


def run_all(
    n_trials: int = 1000, seed: int = 0, beta: float = 0.5
) -> list[CheckResult]:
    """The full verification battery used by the command-line ``verify``."""
    return [
        check_likelihood_ratio_bound(n_trials, seed, beta=beta),
        check_closed_form_agreement(max(n_trials // 10, 10), seed),
        check_gradients(seed=seed),
        check_qubit_metric_identity(n_trials, seed),
    ]
