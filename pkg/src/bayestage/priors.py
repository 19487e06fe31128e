"""Partition priors: DP cohesion, tree-distance penalty and covariate (PPMx) penalty.

Within-block penalty sums run over ordered pairs ``k != l``, so every
unordered pair contributes twice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .partition import Partition, bell_number, set_partitions
from .tree import Dataset, EventTree, context_ranks, encode_rows

MAX_ENUMERATION = 12


@dataclass(frozen=True)
class NIG:
    """Normal-Inverse-Gamma hyperparameters ``(m0, kappa0, alpha0, beta0)``."""

    m0: float = 0.0
    kappa0: float = 1.0
    alpha0: float = 1.0
    beta0: float = 1.0

    def __post_init__(self):
        if not (self.kappa0 > 0 and self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError(f"NIG hyperparameters must be positive: {self}")


@dataclass(frozen=True)
class PriorSpec:
    kappa: float = 1.0
    xi: float = 0.25
    lambdas: Tuple[float, ...] = ()
    a: float = 1.0
    nig: NIG = field(default_factory=NIG)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.xi >= 0:
            raise ValueError(f"xi must be nonnegative, got {self.xi}")
        if any(not lam >= 0 for lam in self.lambdas):
            raise ValueError(f"covariate weights must be nonnegative, got {self.lambdas}")
        if not self.a > 0:
            raise ValueError(f"Dirichlet mass must be positive, got {self.a}")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))


def hamming_fraction(ctx1: Sequence[int], ctx2: Sequence[int]) -> Fraction:
    """Normalized tree-based Hamming distance as an exact fraction.

    The denominator is the number of components of the contexts.
    """
    if len(ctx1) != len(ctx2):
        raise ValueError("contexts of different depths")
    i = len(ctx1)
    if i == 0:
        raise ValueError("the root context has no distance")
    agree = sum(1 for x, y in zip(ctx1, ctx2) if x == y)
    if agree == i:
        raise ValueError(f"identical contexts {tuple(ctx1)}")
    return 1 - Fraction(agree, i)


def hamming_distance(ctx1: Sequence[int], ctx2: Sequence[int]) -> float:
    return float(hamming_fraction(ctx1, ctx2))


def distance_matrix(tree: EventTree, depth: int) -> np.ndarray:
    """Pairwise Hamming distances among all contexts at ``depth`` (zero diagonal)."""
    n = tree.n_contexts(depth)
    if depth == 0:
        return np.zeros((1, 1))
    codes = np.array(tree.contexts(depth), dtype=np.int64).reshape(n, depth)
    agree = (codes[:, None, :] == codes[None, :, :]).sum(axis=2)
    return 1.0 - agree / depth


def penalty_matrix(spec: PriorSpec, d: Optional[np.ndarray], delta: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Combined pairwise penalty ``xi*d + sum_z lambda_z*delta_z``."""
    if d is None:
        if not delta:
            raise ValueError("need a distance matrix or covariate dissimilarities")
        w = np.zeros_like(np.asarray(delta[0], dtype=np.float64))
    else:
        w = spec.xi * np.asarray(d, dtype=np.float64)
    if delta:
        if len(delta) != len(spec.lambdas):
            raise ValueError(f"{len(delta)} covariate matrices but {len(spec.lambdas)} weights")
        for lam, dz in zip(spec.lambdas, delta):
            w = w + lam * np.asarray(dz, dtype=np.float64)
    w = w.copy()
    np.fill_diagonal(w, 0.0)
    return w


def log_cohesion(block: Sequence[int], spec: PriorSpec, w: np.ndarray) -> float:
    """Log cohesion of one block: ``log kappa + log Gamma(#S) - sum_{k != l in S} w_kl``."""
    idx = np.asarray(block, dtype=np.int64)
    pen = float(w[np.ix_(idx, idx)].sum())
    return math.log(spec.kappa) + math.lgamma(len(idx)) - pen


def log_eppf(partition: Partition, spec: PriorSpec, d: Optional[np.ndarray], delta: Optional[Sequence[np.ndarray]] = None) -> float:
    """Unnormalized log prior of ``partition``."""
    w = penalty_matrix(spec, d, delta)
    if w.shape[0] != partition.n:
        raise ValueError("partition and distance matrix disagree on the number of contexts")
    return sum(log_cohesion(b, spec, w) for b in partition.blocks())


def enumerate_log_weights(n: int, fn) -> Tuple[List[Partition], np.ndarray]:
    if n > MAX_ENUMERATION:
        raise ValueError(f"{n} contexts: Bell({n}) = {bell_number(n)} partitions is too many to enumerate")
    parts = [Partition(lab) for lab in set_partitions(n)]
    return parts, np.array([fn(p) for p in parts])


def normalize_prior_by_enumeration(spec: PriorSpec, d: np.ndarray, delta=None) -> Dict[Partition, float]:
    """Exact prior probabilities of every partition of a small context set."""
    n = np.asarray(d).shape[0]
    w = penalty_matrix(spec, d, delta)
    parts, lw = enumerate_log_weights(n, lambda p: sum(log_cohesion(b, spec, w) for b in p.blocks()))
    prob = np.exp(lw - logsumexp(lw))
    return dict(zip(parts, prob.tolist()))


def nig_log_marginal(values, nig: NIG = NIG()) -> float:
    """Log marginal likelihood of real values under a Normal-Inverse-Gamma model."""
    z = np.asarray(values, dtype=np.float64).ravel()
    return _nig_from_stats(z.size, float(z.sum()), float(np.sum(z * z)), nig) if z.size else 0.0


def _nig_from_stats(n, s1, s2, nig: NIG):
    """Vectorised NIG log marginal from counts, sums and sums of squares."""
    n = np.asarray(n, dtype=np.float64)
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    safe = np.where(n > 0, n, 1.0)
    mean = s1 / safe
    ss = np.maximum(s2 - safe * mean * mean, 0.0)
    an = nig.alpha0 + n / 2.0
    kn = nig.kappa0 + n
    bn = nig.beta0 + 0.5 * ss + nig.kappa0 * n * (mean - nig.m0) ** 2 / (2.0 * kn)
    out = (
        nig.alpha0 * np.log(nig.beta0)
        + 0.5 * np.log(nig.kappa0)
        - gammaln(nig.alpha0)
        - n / 2.0 * np.log(2 * np.pi)
        + gammaln(an)
        - 0.5 * np.log(kn)
        - an * np.log(bn)
    )
    out = np.where(n > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def standardize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sd = x.std()
    if not sd > 0:
        raise ValueError("covariate column is constant")
    return (x - x.mean()) / sd


def covariate_dissimilarity_matrix(values, ranks, n_contexts: int, nig: NIG = NIG()) -> np.ndarray:
    """``delta[k, l] = -(log p(z_k u z_l) - log p(z_k) - log p(z_l))`` over contexts.

    ``values`` are (already standardized) covariate values, ``ranks`` the
    context rank of each row.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    z = np.asarray(values, dtype=np.float64)
    cnt = np.bincount(ranks, minlength=n_contexts).astype(np.float64)
    s1 = np.bincount(ranks, weights=z, minlength=n_contexts)
    s2 = np.bincount(ranks, weights=z * z, minlength=n_contexts)
    single = _nig_from_stats(cnt, s1, s2, nig)
    joint = _nig_from_stats(cnt[:, None] + cnt[None, :], s1[:, None] + s1[None, :], s2[:, None] + s2[None, :], nig)
    delta = -(joint - single[:, None] - single[None, :])
    np.fill_diagonal(delta, 0.0)
    return delta


def covariate_dissimilarity(
    tree: EventTree,
    dataset: Dataset,
    covariates: Sequence[str],
    nig: NIG = NIG(),
    depths: Optional[Sequence[int]] = None,
) -> Dict[int, List[np.ndarray]]:
    """Per modeled depth, one dissimilarity matrix per covariate (standardized internally)."""
    codes = encode_rows(tree, dataset)
    cols = []
    for name in covariates:
        if name not in dataset.real:
            raise ValueError(f"unknown covariate {name!r}")
        try:
            cols.append(standardize(dataset.real[name]))
        except ValueError:
            raise ValueError(f"covariate {name!r} is constant") from None
    out = {}
    for depth in (tree.modeled if depths is None else depths):
        ranks = context_ranks(tree, codes, depth)
        out[depth] = [covariate_dissimilarity_matrix(z, ranks, tree.n_contexts(depth), nig) for z in cols]
    return out
