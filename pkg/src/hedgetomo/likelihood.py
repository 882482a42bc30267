"""Measurement records, quantum log-likelihoods and their matrix gradients.

A record pools every sub-measurement into one weighted POVM: the likelihood
depends only on observed events, so runs measured with different POVMs can be
treated as a single measurement with effects weighted by w_j = N_j / N.  The
weights shift the log-likelihood by a rho-independent constant and never move
the argmax, so the value reported here omits them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .states import Effect, Povm, matrix

DEFAULT_BETA = 0.5
PROBABILITY_FLOOR = 1e-15
POOLED_COMPLETENESS_ATOL = 1e-10


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError("hedging strength beta must be positive")
    return beta


class RecordItem(NamedTuple):
    effect: Effect
    count: int
    weight: float


@dataclass(frozen=True)
class MeasurementRecord:
    """Pooled effects with observed counts: the sufficient statistic.

    Invariant: sum_i weight_i * effect_i = identity within 1e-10 (each
    sub-POVM sums to the identity and the weights sum to 1).  N = 0 records
    are constructible; estimation entry points that need data enforce N >= 1
    themselves.
    """

    dim: int
    items: tuple[RecordItem, ...]

    def __post_init__(self):
        items = []
        for effect, count, weight in self.items:
            if not isinstance(effect, Effect):
                effect = Effect(effect)
            if effect.dim != self.dim:
                raise ValueError("effect dimension does not match record dimension")
            count = int(count)
            if count < 0:
                raise ValueError("counts must be non-negative")
            weight = float(weight)
            if not 0 < weight <= 1:
                raise ValueError("weights must lie in (0, 1]")
            items.append(RecordItem(effect, count, weight))
        if not items:
            raise ValueError("a measurement record needs at least one effect")
        pooled = sum(it.weight * it.effect.matrix for it in items)
        if np.max(np.abs(pooled - np.eye(self.dim))) > POOLED_COMPLETENESS_ATOL:
            raise ValueError(
                "weighted effects do not sum to the identity within 1e-10"
            )
        object.__setattr__(self, "items", tuple(items))

    @property
    def n_total(self) -> int:
        return int(sum(it.count for it in self.items))

    @cached_property
    def effect_stack(self) -> np.ndarray:
        stack = np.stack([it.effect.matrix for it in self.items])
        stack.setflags(write=False)
        return stack

    @cached_property
    def counts(self) -> np.ndarray:
        arr = np.array([it.count for it in self.items], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def weights(self) -> np.ndarray:
        arr = np.array([it.weight for it in self.items], dtype=float)
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_single_povm(cls, povm: Povm, counts: Sequence[int]) -> "MeasurementRecord":
        """Record of one run: weights are all 1 and effects are the POVM itself."""
        if len(counts) != len(povm):
            raise ValueError("counts length does not match the POVM")
        return cls(
            dim=povm.dim,
            items=tuple(RecordItem(e, int(n), 1.0) for e, n in zip(povm, counts)),
        )

    def outcome_probabilities(self, rho) -> np.ndarray:
        """Tr[rho E_i] for every pooled effect (weights not applied)."""
        return np.real(np.einsum("kij,ji->k", self.effect_stack, matrix(rho)))


def pool_measurements(runs: Sequence[tuple[Povm, Sequence[int]]]) -> MeasurementRecord:
    """Pool sub-measurements into one record with weights w_j = N_j / N."""
    if not runs:
        raise ValueError("cannot pool an empty list of runs")
    dim = runs[0][0].dim
    run_totals = []
    for povm, counts in runs:
        if povm.dim != dim:
            raise ValueError("all POVMs must share one dimension")
        if len(counts) != len(povm):
            raise ValueError("counts length does not match its POVM")
        run_totals.append(int(sum(int(n) for n in counts)))
    grand_total = sum(run_totals)
    if grand_total == 0:
        raise ValueError("cannot pool runs with zero total counts")
    items = []
    for (povm, counts), n_run in zip(runs, run_totals):
        if n_run == 0:
            continue  # zero-sample run: weight 0, carries no data
        weight = n_run / grand_total
        for effect, n in zip(povm, counts):
            items.append(RecordItem(effect, int(n), weight))
    return MeasurementRecord(dim=dim, items=tuple(items))


def _check_dims(rho_m: np.ndarray, record: MeasurementRecord) -> None:
    if rho_m.shape[0] != record.dim:
        raise ValueError(
            f"dimension mismatch: state is {rho_m.shape[0]}, record is {record.dim}"
        )


def log_likelihood(rho, record: MeasurementRecord) -> float:
    """sum_i n_i ln Tr[rho E_i]; -inf when an observed event has probability <= 1e-15."""
    rho_m = matrix(rho)
    _check_dims(rho_m, record)
    probs = record.outcome_probabilities(rho_m)
    counts = record.counts
    observed = counts > 0
    if np.any(probs[observed] <= PROBABILITY_FLOOR):
        return float("-inf")
    return float(np.sum(counts[observed] * np.log(probs[observed])))


def hedging_term(rho, beta: float) -> float:
    """beta * ln det(rho); -inf for rank-deficient states."""
    beta = check_beta(beta)
    vals = np.linalg.eigvalsh(matrix(rho))
    if float(vals.min()) <= 0:
        return float("-inf")
    return float(beta * np.sum(np.log(vals)))


def hedged_log_likelihood(rho, record: MeasurementRecord, beta: float = DEFAULT_BETA) -> float:
    """log_likelihood + beta ln det(rho): the objective HMLE maximizes."""
    rho_m = matrix(rho)
    _check_dims(rho_m, record)
    ll = log_likelihood(rho_m, record)
    if ll == float("-inf"):
        return ll
    return ll + hedging_term(rho_m, beta)


def likelihood_gradient(rho, record: MeasurementRecord) -> np.ndarray:
    """R(rho) = sum_i n_i E_i / Tr[rho E_i], the matrix gradient of log_likelihood.

    Satisfies Tr[R(rho) rho] = N.  Raises when an observed event has
    probability below 1e-15 (boundary state).
    """
    rho_m = matrix(rho)
    _check_dims(rho_m, record)
    probs = record.outcome_probabilities(rho_m)
    counts = record.counts
    observed = counts > 0
    if np.any(probs[observed] <= PROBABILITY_FLOOR):
        raise ValueError("gradient undefined: observed event with zero probability")
    grad = np.einsum(
        "k,kij->ij", counts[observed] / probs[observed], record.effect_stack[observed]
    )
    return (grad + grad.conj().T) / 2


def hedging_gradient(rho, beta: float) -> np.ndarray:
    """Gradient beta * rho^{-1} of the log hedging function.

    Requires a strictly positive state (min eigenvalue > 1e-12).
    """
    beta = check_beta(beta)
    rho_m = matrix(rho)
    vals, vecs = np.linalg.eigh(rho_m)
    if float(vals.min()) <= 1e-12:
        raise ValueError("hedging gradient undefined for (near-)singular states")
    inv = (vecs / vals) @ vecs.conj().T
    return beta * (inv + inv.conj().T) / 2
