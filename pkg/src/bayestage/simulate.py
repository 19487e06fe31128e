"""Synthetic staged trees, datasets and ground-truth causal effects."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .causal import CausalQuery
from .partition import Partition
from .tree import Dataset, EventTree, Variable

GENERATING_SCHEMA = "bayestage.generating_tree/1"
SCHEMES = ("exp", "unif")


@dataclass
class GeneratingTree:
    """Event tree with a fixed staging and stage probabilities at every depth."""

    tree: EventTree
    partitions: Dict[int, Partition]
    theta: Dict[int, np.ndarray]

    def __post_init__(self):
        for depth in range(self.tree.p + 1):
            if depth not in self.partitions or depth not in self.theta:
                raise ValueError(f"depth {depth} lacks a staging or stage probabilities")
            part = self.partitions[depth]
            th = np.asarray(self.theta[depth], dtype=np.float64)
            if part.n != self.tree.n_contexts(depth):
                raise ValueError(f"depth {depth}: {part.n} labels for {self.tree.n_contexts(depth)} contexts")
            if th.shape != (part.n_blocks, self.tree.cardinalities[depth]):
                raise ValueError(f"depth {depth}: theta has shape {th.shape}, expected {(part.n_blocks, self.tree.cardinalities[depth])}")
            if np.any(th < 0) or not np.allclose(th.sum(axis=1), 1.0, atol=1e-12):
                raise ValueError(f"depth {depth}: theta rows must lie on the simplex")
            self.theta[depth] = th

    def context_theta(self, depth: int) -> np.ndarray:
        return self.theta[depth][np.asarray(self.partitions[depth].labels)]

    def joint(self) -> np.ndarray:
        """Full joint distribution as an array with one axis per variable."""
        out = np.ones(())
        for depth in range(self.tree.p + 1):
            cond = self.context_theta(depth).reshape(self.tree.cardinalities[: depth + 1])
            out = out[..., None] * cond
        return out

    def to_json(self) -> dict:
        return {
            "schema": GENERATING_SCHEMA,
            "tree": self.tree.to_dict(),
            "depths": [
                {
                    "variable": self.tree.names[d],
                    "stages": self.partitions[d].one_based(),
                    "theta": self.theta[d].tolist(),
                }
                for d in range(self.tree.p + 1)
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "GeneratingTree":
        if obj.get("schema") != GENERATING_SCHEMA:
            raise ValueError(f"not a generating tree description (schema {obj.get('schema')!r})")
        tree = EventTree.from_dict(obj["tree"])
        parts, theta = {}, {}
        for d, entry in enumerate(obj["depths"]):
            parts[d] = Partition([g - 1 for g in entry["stages"]], d)
            theta[d] = np.array(entry["theta"], dtype=np.float64)
        return cls(tree, parts, theta)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "GeneratingTree":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def consistency_tree() -> GeneratingTree:
    """The checked-in six-variable binary tree used by the consistency experiment."""
    text = resources.files("bayestage").joinpath("data/consistency_tree.json").read_text()
    return GeneratingTree.from_json(json.loads(text))


def _simplex_rows(rng, m, k, scheme):
    if scheme == "exp":
        x = rng.exponential(size=(m, k))
    elif scheme == "unif":
        x = rng.random((m, k))
    else:
        raise ValueError(f"unknown probability scheme {scheme!r}; choose from {SCHEMES}")
    return x / x.sum(axis=1, keepdims=True)


def random_staged_tree(
    cardinalities: Sequence[int],
    q: float = 0.0,
    scheme: str = "exp",
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
    modeled: Optional[Sequence[int]] = None,
) -> GeneratingTree:
    """Random parent sets, the staging they imply, then random stage merges.

    Each earlier variable enters the parent set with probability 1/2, so the
    parent set is uniform over subsets. While a uniform draw falls below
    ``q`` two random stages are merged.
    """
    if not 0 <= q <= 1:
        raise ValueError("merge probability must lie in [0, 1]")
    cards = tuple(int(k) for k in cardinalities)
    if any(k < 2 for k in cards):
        raise ValueError("every variable needs at least two levels")
    names = list(names) if names is not None else [f"X{i}" for i in range(len(cards))]
    rng = np.random.default_rng(seed)
    p = len(cards) - 1
    tree = EventTree(
        tuple(Variable(nm, tuple(str(x) for x in range(k))) for nm, k in zip(names, cards)),
        tuple(modeled) if modeled is not None else tuple(range(p + 1)),
    )
    parts, theta = {}, {}
    for depth in range(p + 1):
        parents = [j for j in range(depth) if rng.random() < 0.5]
        ctx = np.array(tree.contexts(depth), dtype=np.int64).reshape(tree.n_contexts(depth), depth)
        keys = [tuple(row[parents]) for row in ctx]
        blocks = {}
        labels = [blocks.setdefault(k, len(blocks)) for k in keys]
        labels = np.array(labels)
        while labels.max() > 0 and rng.random() < q:
            m = labels.max() + 1
            i, j = rng.choice(m, size=2, replace=False)
            labels[labels == max(i, j)] = min(i, j)
            labels = np.array(Partition(labels).labels)
        part = Partition(labels, depth)
        parts[depth] = part
        theta[depth] = _simplex_rows(rng, part.n_blocks, cards[depth], scheme)
    return GeneratingTree(tree, parts, theta)


def sample_codes(gt: GeneratingTree, n: int, seed: int = 0) -> np.ndarray:
    """Ancestral sampling; returns an ``(n, p + 1)`` array of level indices."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    cards = gt.tree.cardinalities
    codes = np.zeros((n, len(cards)), dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    for depth, k in enumerate(cards):
        cum = np.cumsum(gt.context_theta(depth)[rank], axis=1)
        u = rng.random(n)[:, None]
        x = np.minimum((u >= cum).sum(axis=1), k - 1)
        codes[:, depth] = x
        rank = rank * k + x
    return codes


def sample_dataset(gt: GeneratingTree, n: int, seed: int = 0) -> Dataset:
    codes = sample_codes(gt, n, seed)
    cols = {}
    for j, v in enumerate(gt.tree.variables):
        lv = np.array(v.levels, dtype=object)
        cols[v.name] = lv[codes[:, j]].tolist()
    return Dataset(cols, {})


def exact_effects(gt: GeneratingTree, query: CausalQuery) -> dict:
    """True ATE and per-profile CATEs from the generating probabilities."""
    query.validate(gt.tree)
    t, y = query.treatment, query.outcome
    joint = gt.joint()
    pz = joint.sum(axis=tuple(range(t, joint.ndim))).ravel()
    py = gt.context_theta(y)[:, query.outcome_level]
    nz = pz.size
    treated = py[query.outcome_contexts(nz, query.treated_level)]
    control = py[query.outcome_contexts(nz, query.control_level)]
    lab = np.asarray(gt.partitions[y].labels)
    shared = lab[query.outcome_contexts(nz, query.treated_level)] == lab[query.outcome_contexts(nz, query.control_level)]
    cate = np.where(shared, 0.0, treated - control)
    return {
        "ate": float(np.dot(cate, pz)),
        "cate": cate,
        "pz": pz,
        "profiles": [gt.tree.context_label(t, c) for c in gt.tree.contexts(t)],
    }


def effects_json(gt: GeneratingTree, query: CausalQuery) -> dict:
    eff = exact_effects(gt, query)
    return {
        "schema": "bayestage.truth/1",
        "treatment": gt.tree.names[query.treatment],
        "outcome": gt.tree.names[query.outcome],
        "ate": eff["ate"],
        "cate": [
            {"profile": p, "p_z": float(w), "cate": float(c)}
            for p, w, c in zip(eff["profiles"], eff["pz"], eff["cate"])
        ],
    }


def covariate_generator(
    gt: GeneratingTree,
    codes: np.ndarray,
    target_depth: int,
    stage_means: Sequence[float],
    sd: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Real covariate per row, Gaussian around the mean of the row's true stage at ``target_depth``."""
    part = gt.partitions[target_depth]
    means = np.asarray(stage_means, dtype=np.float64)
    if means.size != part.n_blocks:
        raise ValueError(f"{means.size} means for {part.n_blocks} stages")
    if sd < 0:
        raise ValueError("sd must be nonnegative")
    codes = np.asarray(codes, dtype=np.int64)
    rank = np.zeros(codes.shape[0], dtype=np.int64)
    for j in range(target_depth):
        rank = rank * gt.tree.cardinalities[j] + codes[:, j]
    stage = np.asarray(part.labels)[rank]
    rng = np.random.default_rng(seed)
    return means[stage] + sd * rng.standard_normal(codes.shape[0])

