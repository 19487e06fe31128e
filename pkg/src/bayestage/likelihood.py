"""Dirichlet-multinomial marginal likelihood of a stage, in log space.

Each stage gets a symmetric Dirichlet prior with total mass ``a`` split evenly
over the levels of the next variable.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln


def _check_mass(a: float) -> None:
    if not a > 0:
        raise ValueError(f"Dirichlet mass must be positive, got {a}")


def log_marginal_stage(counts, a: float = 1.0) -> float:
    """log m(N_S) for the aggregated count vector of one stage."""
    _check_mass(a)
    n = np.asarray(counts, dtype=np.float64)
    alpha = a / n.shape[-1]
    return float(
        gammaln(a) - gammaln(a + n.sum()) + np.sum(gammaln(alpha + n)) - n.shape[-1] * gammaln(alpha)
    )


def log_marginal_rows(counts, a: float = 1.0) -> np.ndarray:
    """Vectorised ``log_marginal_stage`` over the rows of a 2-d count array."""
    _check_mass(a)
    n = np.asarray(counts, dtype=np.float64)
    k = n.shape[-1]
    alpha = a / k
    return gammaln(a) - gammaln(a + n.sum(axis=-1)) + np.sum(gammaln(alpha + n), axis=-1) - k * gammaln(alpha)


def log_marginal_partition(counts, labels, a: float = 1.0) -> float:
    """Sum of stage log marginals for a labeling of the rows of ``counts``."""
    counts = np.asarray(counts)
    labels = np.asarray(labels)
    agg = np.zeros((labels.max() + 1, counts.shape[1]), dtype=np.int64)
    np.add.at(agg, labels, counts)
    return float(np.sum(log_marginal_rows(agg, a)))


def log_ratio_add_context(counts) -> float:
    """Closed-form ratio ``log[prod N^x! / |N|!]`` for adding one context to a stage.

    This is the a-free factorial form. It is *not* equal to the exact
    difference ``log m(N_S + N_x) - log m(N_S)`` in general (the factorial
    identities it rests on need ``a / K == 1`` and ``a == 1`` at once); the
    sampler therefore uses :func:`log_add_context_exact`.
    """
    n = np.asarray(counts, dtype=np.float64)
    return float(np.sum(gammaln(n + 1)) - gammaln(n.sum() + 1))


def log_merge_ratio(counts_k, counts_l) -> float:
    """Closed-form a-free merge ratio of two stages (factorial form).

    Same caveat as :func:`log_ratio_add_context`: exact only under factorial
    identities that no positive ``a`` satisfies; see :func:`log_merge_exact`.
    """
    nk = np.asarray(counts_k, dtype=np.float64)
    nl = np.asarray(counts_l, dtype=np.float64)
    nu = nk + nl
    return float(
        gammaln(nk.sum() + 1)
        + gammaln(nl.sum() + 1)
        - gammaln(nu.sum() + 1)
        + np.sum(gammaln(nu + 1) - gammaln(nk + 1) - gammaln(nl + 1))
    )


def log_add_context_exact(stage_counts, context_counts, a: float = 1.0) -> float:
    """``log m(N_S + N_x) - log m(N_S)``."""
    s = np.asarray(stage_counts)
    x = np.asarray(context_counts)
    return log_marginal_stage(s + x, a) - log_marginal_stage(s, a)


def log_merge_exact(counts_k, counts_l, a: float = 1.0) -> float:
    """``log m(N_k + N_l) - log m(N_k) - log m(N_l)``."""
    nk = np.asarray(counts_k)
    nl = np.asarray(counts_l)
    return log_marginal_stage(nk + nl, a) - log_marginal_stage(nk, a) - log_marginal_stage(nl, a)
