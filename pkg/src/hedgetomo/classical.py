"""Classical probability estimation: MLE, the add-beta rule, and predictive cost.

The hedged likelihood here is prod_k p_k^(n_k + beta), i.e. beta dummy
observations of every letter; its maximizer is the add-beta (Lidstone)
estimate (n_k + beta)/(N + K beta).
"""

from __future__ import annotations

import numpy as np

PROB_SUM_ATOL = 1e-12


def _as_counts(counts) -> np.ndarray:
    arr = np.asarray(counts)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("counts must be a vector with at least two categories")
    if np.any(arr < 0) or not np.allclose(arr, np.round(arr)):
        raise ValueError("counts must be non-negative integers")
    return arr.astype(np.int64)


def _as_probs(p, name: str = "p") -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"{name} must be a vector with at least two categories")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(float(arr.sum()) - 1.0) > PROB_SUM_ATOL:
        raise ValueError(f"{name} must sum to 1 within {PROB_SUM_ATOL}")
    return arr


def _matched(p, q) -> tuple[np.ndarray, np.ndarray]:
    pa, qa = _as_probs(p, "p"), _as_probs(q, "q")
    if pa.size != qa.size:
        raise ValueError(f"length mismatch: {pa.size} vs {qa.size}")
    return pa, qa


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if beta <= 0:
        raise ValueError("beta must be positive")
    return beta


def classical_mle(counts) -> np.ndarray:
    """Empirical frequencies n_k / N.  Requires N >= 1."""
    arr = _as_counts(counts)
    total = int(arr.sum())
    if total == 0:
        raise ValueError("classical MLE needs at least one observation")
    return arr / total


def lidstone_estimate(counts, beta: float) -> np.ndarray:
    """Add-beta rule (n_k + beta)/(N + K beta); strictly positive for beta > 0.

    N = 0 is allowed and returns the uniform vector.
    """
    arr = _as_counts(counts)
    beta = _check_beta(beta)
    return (arr + beta) / (arr.sum() + arr.size * beta)


def classical_log_likelihood(p, counts) -> float:
    """sum_k n_k ln p_k; -inf only when some p_k = 0 has n_k > 0."""
    probs = _as_probs(p)
    arr = _as_counts(counts)
    if probs.size != arr.size:
        raise ValueError(f"length mismatch: {probs.size} vs {arr.size}")
    observed = arr > 0
    if np.any(probs[observed] <= 0):
        return float("-inf")
    return float(np.sum(arr[observed] * np.log(probs[observed])))


def classical_hedged_log_likelihood(p, counts, beta: float) -> float:
    """sum_k (n_k + beta) ln p_k; -inf whenever any p_k = 0."""
    probs = _as_probs(p)
    arr = _as_counts(counts)
    if probs.size != arr.size:
        raise ValueError(f"length mismatch: {probs.size} vs {arr.size}")
    beta = _check_beta(beta)
    if np.any(probs <= 0):
        return float("-inf")
    return float(np.sum((arr + beta) * np.log(probs)))


def kl_divergence(p, q) -> float:
    """Relative entropy D(p||q) in nats; +inf iff some p_k > 0 has q_k = 0."""
    pa, qa = _matched(p, q)
    mass = pa > 0
    if np.any(qa[mass] <= 0):
        return float("inf")
    return float(np.sum(pa[mass] * np.log(pa[mass] / qa[mass])))


def shannon_entropy(p) -> float:
    """H(p) = -sum_k p_k ln p_k in nats, with 0 ln 0 = 0."""
    pa = _as_probs(p)
    mass = pa > 0
    return float(-np.sum(pa[mass] * np.log(pa[mass])))


def excess_predictive_cost(p_true, p_hat) -> float:
    """Per-symbol excess code length / log-wealth deficit of using p_hat.

    Equal to D(p_true || p_hat): the gambler's growth rate and the
    compressor's rate both pay exactly this much on top of H(p_true).
    """
    return kl_divergence(p_true, p_hat)


def simulate_predictive_cost(p_true, p_hat, n_symbols: int, rng: np.random.Generator) -> float:
    """Realized mean excess code length over ``n_symbols`` i.i.d. draws.

    Log-domain accounting: each drawn symbol k costs -ln p_hat[k] against an
    ideal -ln p_true[k].  Converges to ``excess_predictive_cost`` as the
    number of draws grows; returns +inf if a symbol with p_hat = 0 is drawn.
    """
    pa, qa = _matched(p_true, p_hat)
    if n_symbols < 1:
        raise ValueError("need at least one draw")
    draws = rng.choice(pa.size, size=n_symbols, p=pa / pa.sum())
    drawn_hat = qa[draws]
    if np.any(drawn_hat <= 0):
        return float("inf")
    return float(np.mean(np.log(pa[draws]) - np.log(drawn_hat)))
