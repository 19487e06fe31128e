"""Causal effects from sampled stagings.

For a binary treatment ``T`` at depth ``t`` and a binary outcome ``Y`` at depth
``t + 1``, the covariate profiles ``Z`` are the contexts at depth ``t``. Each
sampled staging gives stage probabilities by conjugate updating, and the
average effect is obtained by standardization over the empirical ``P(z)``.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from .partition import Partition
from .tree import ContextTable, EventTree

EFFECTS_SCHEMA = "bayestage.effects/1"


class PositivityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CausalQuery:
    """Treatment and outcome depths plus which level counts as "treated" / "event"."""

    treatment: int
    outcome: int
    treated_level: int = 1
    outcome_level: int = 1

    @classmethod
    def from_names(cls, tree: EventTree, treatment: str, outcome: str, treated_level=None, outcome_level=None):
        t, y = tree.index(treatment), tree.index(outcome)
        tl = 1 if treated_level is None else tree.variables[t].levels.index(str(treated_level))
        yl = 1 if outcome_level is None else tree.variables[y].levels.index(str(outcome_level))
        q = cls(t, y, tl, yl)
        q.validate(tree)
        return q

    @property
    def control_level(self) -> int:
        return 1 - self.treated_level

    def validate(self, tree: EventTree) -> None:
        t, y = self.treatment, self.outcome
        if not 0 <= t <= tree.p or not 0 <= y <= tree.p:
            raise ValueError("treatment/outcome depth outside the tree")
        if y <= t:
            raise ValueError("the outcome must come after the treatment in the ordering")
        if y != t + 1:
            raise ValueError(
                f"variables between {tree.names[t]!r} and {tree.names[y]!r} would be mediators; "
                "the outcome must directly follow the treatment"
            )
        for d, role in ((t, "treatment"), (y, "outcome")):
            if tree.cardinalities[d] != 2:
                raise ValueError(f"{role} {tree.names[d]!r} must be binary")
        if y not in tree.modeled:
            raise ValueError(f"outcome {tree.names[y]!r} is not a modeled depth")
        if self.treated_level not in (0, 1) or self.outcome_level not in (0, 1):
            raise ValueError("level indices must be 0 or 1")

    def outcome_contexts(self, n_profiles: int, t: int) -> np.ndarray:
        """Outcome-depth context rank of ``(z, t)`` for every profile ``z``."""
        return np.arange(n_profiles) * 2 + t


@dataclass
class StageProbabilities:
    """Per depth: context labels and one probability row per stage."""

    labels: Dict[int, np.ndarray]
    stages: Dict[int, np.ndarray]

    def context_theta(self, depth: int) -> np.ndarray:
        return self.stages[depth][self.labels[depth]]


def stage_counts(counts: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.max() + 1, counts.shape[1]), dtype=np.float64)
    np.add.at(out, labels, counts)
    return out


def recover_theta(
    partitions: Mapping[int, Partition],
    tables: Mapping[int, ContextTable],
    a: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> StageProbabilities:
    """Posterior-mean stage probabilities ``(N_S + a/K) / (|N_S| + a)``.

    With ``rng`` given, each stage row is drawn from its Dirichlet posterior
    instead of set to the mean.
    """
    labels, stages = {}, {}
    for depth, part in partitions.items():
        counts = np.asarray(tables[depth].counts)
        K = counts.shape[1]
        ns = stage_counts(counts, part.labels) + a / K
        if rng is None:
            theta = ns / ns.sum(axis=1, keepdims=True)
        else:
            theta = np.array([rng.dirichlet(row) for row in ns])
        labels[depth] = np.asarray(part.labels, dtype=np.int64)
        stages[depth] = theta
    return StageProbabilities(labels, stages)


def intervene(theta: StageProbabilities, query: CausalQuery, t0: int) -> StageProbabilities:
    """``do(T = t0)``: the treatment factor becomes a point mass at ``t0`` in every context."""
    t = query.treatment
    labels = dict(theta.labels)
    stages = dict(theta.stages)
    n = len(labels[t]) if t in labels else None
    if n is None:
        raise ValueError("treatment depth has no stage probabilities")
    point = np.zeros((1, 2))
    point[0, t0] = 1.0
    labels[t] = np.zeros(n, dtype=np.int64)
    stages[t] = point
    return StageProbabilities(labels, stages)


def interventional_joint(theta: StageProbabilities, query: CausalQuery, pz: np.ndarray, t0: int) -> np.ndarray:
    """``P(Z = z, T = t, Y = y | do(T = t0))`` as an array of shape ``(#profiles, 2, 2)``."""
    do = intervene(theta, query, t0)
    pt = do.context_theta(query.treatment)
    py = do.context_theta(query.outcome).reshape(len(pz), 2, 2)
    return np.asarray(pz)[:, None, None] * pt[:, :, None] * py


def cate_vector(theta: StageProbabilities, query: CausalQuery):
    """CATE for every profile, plus a flag marking structural zeros (shared outcome stage)."""
    y = query.outcome
    lab = theta.labels[y]
    nz = len(lab) // 2
    c1 = query.outcome_contexts(nz, query.treated_level)
    c0 = query.outcome_contexts(nz, query.control_level)
    st = theta.stages[y][:, query.outcome_level]
    zero = lab[c1] == lab[c0]
    cate = np.where(zero, 0.0, st[lab[c1]] - st[lab[c0]])
    return cate, zero


def cate_draw(theta: StageProbabilities, query: CausalQuery, z: int) -> float:
    cate, _ = cate_vector(theta, query)
    return float(cate[z])


def _ate(cate: np.ndarray, pz: np.ndarray) -> float:
    return float(np.dot(cate, pz))


def ate_draw(theta: StageProbabilities, query: CausalQuery, pz: np.ndarray) -> float:
    """Standardized effect ``sum_z [E(Y|T=1,z) - E(Y|T=0,z)] P(z)``."""
    pz = np.asarray(pz, dtype=np.float64)
    if abs(pz.sum() - 1.0) > 1e-9:
        raise ValueError("covariate marginal must sum to 1")
    cate, _ = cate_vector(theta, query)
    return _ate(cate, pz)


def covariate_marginal(treatment_table: ContextTable) -> np.ndarray:
    """Empirical profile frequencies, read off the treatment-depth count table."""
    n = np.asarray(treatment_table.counts).sum(axis=1).astype(np.float64)
    total = n.sum()
    if total <= 0:
        raise ValueError("zero sample size")
    return n / total


def positivity_gaps(tree: EventTree, outcome_table: ContextTable, query: CausalQuery, pz: np.ndarray) -> List[str]:
    """Labels of observed profiles where one treatment arm has no data."""
    n = np.asarray(outcome_table.counts).sum(axis=1)
    gaps = []
    for rank, ctx in enumerate(tree.contexts(query.outcome)):
        if n[rank] == 0 and pz[rank // 2] > 0:
            gaps.append(tree.context_label(query.outcome, ctx))
    return gaps


def summarize(draws: np.ndarray, zero: np.ndarray, level: float = 0.95) -> dict:
    """Mean, sd, equal-tailed interval and sign probabilities of a draw vector.

    The null event counts structural zeros plus any draw that is exactly 0.0,
    so the three sign probabilities always sum to one.
    """
    draws = np.asarray(draws, dtype=np.float64)
    null = np.asarray(zero, dtype=bool) | (draws == 0.0)
    lo, hi = np.quantile(draws, [(1 - level) / 2, (1 + level) / 2])
    return {
        "mean": float(draws.mean()),
        "sd": float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
        "ci_low": float(lo),
        "ci_high": float(hi),
        "p_pos": float(np.mean(~null & (draws > 0))),
        "p_zero": float(np.mean(null)),
        "p_neg": float(np.mean(~null & (draws < 0))),
    }


@dataclass
class EffectPosterior:
    ate: np.ndarray
    cate: np.ndarray
    ate_zero: np.ndarray
    cate_zero: np.ndarray
    pz: np.ndarray
    profiles: List[str]
    treatment: str = "T"
    outcome: str = "Y"
    warnings: List[str] = field(default_factory=list)
    levels: Dict[str, str] = field(default_factory=dict)

    def summary(self, level: float = 0.95) -> dict:
        rows = []
        for k, label in enumerate(self.profiles):
            row = {"profile": label, "p_z": float(self.pz[k])}
            row.update(summarize(self.cate[:, k], self.cate_zero[:, k], level))
            rows.append(row)
        return {
            "schema": EFFECTS_SCHEMA,
            "treatment": self.treatment,
            "outcome": self.outcome,
            "levels": dict(self.levels),
            "draws": int(self.ate.size),
            "level": level,
            "ate": summarize(self.ate, self.ate_zero, level),
            "cate": rows,
            "positivity_warnings": list(self.warnings),
        }

    def draws_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "ate", *(f"cate[{p}]" for p in self.profiles)])
        for r in range(self.ate.size):
            w.writerow([r + 1, repr(float(self.ate[r])), *(repr(float(v)) for v in self.cate[r])])
        return buf.getvalue()


def effect_posterior(
    samples,
    tables: Mapping[int, ContextTable],
    query: CausalQuery,
    tree: EventTree,
    a: float = 1.0,
    pz: Optional[np.ndarray] = None,
    theta_mode: str = "mean",
    seed: int = 0,
) -> EffectPosterior:
    """One ATE and one CATE vector per retained staging of the outcome depth."""
    query.validate(tree)
    if theta_mode not in ("mean", "draw"):
        raise ValueError(f"unknown theta mode {theta_mode!r}")
    y, t = query.outcome, query.treatment
    S = np.asarray(samples.samples[y])
    if S.shape[0] == 0:
        raise ValueError("no samples")
    if pz is None:
        if t not in tables:
            raise ValueError("treatment depth has no count table; pass the covariate marginal")
        pz = covariate_marginal(tables[t])
    pz = np.asarray(pz, dtype=np.float64)
    gaps = positivity_gaps(tree, tables[y], query, pz)
    for g in gaps:
        warnings.warn(f"no observations in context {g}", PositivityWarning, stacklevel=2)
    rng = np.random.default_rng(seed) if theta_mode == "draw" else None
    R, nz = S.shape[0], len(pz)
    ate = np.empty(R)
    cate = np.empty((R, nz))
    czero = np.empty((R, nz), dtype=bool)
    for r in range(R):
        th = recover_theta({y: Partition(S[r], y)}, tables, a, rng)
        cate[r], czero[r] = cate_vector(th, query)
        ate[r] = _ate(cate[r], pz)
    azero = np.all(czero | (pz == 0)[None, :], axis=1)
    profiles = [tree.context_label(t, ctx) for ctx in tree.contexts(t)]
    tv, yv = tree.variables[t], tree.variables[y]
    levels = {
        "treated": tv.levels[query.treated_level],
        "control": tv.levels[query.control_level],
        "event": yv.levels[query.outcome_level],
    }
    return EffectPosterior(ate, cate, azero, czero, pz, profiles, tv.name, yv.name, gaps, levels)
