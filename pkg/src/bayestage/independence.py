"""Independence statements read off a staging by label invariance."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .partition import Partition
from .tree import EventTree


@dataclass(frozen=True, order=True)
class Statement:
    """``X_target ⫫ X_vars | X_given (= given_values)``.

    ``given_values`` is None for a symmetric statement that holds for every
    value of the conditioning variables.
    """

    target: int
    vars: Tuple[int, ...]
    given: Tuple[int, ...]
    given_values: Optional[Tuple[int, ...]] = None

    @property
    def context_specific(self) -> bool:
        return self.given_values is not None

    def render(self, tree: Optional[EventTree] = None) -> str:
        def name(j):
            return tree.variables[j].name if tree is not None else f"X{j}"

        lhs = f"{name(self.target)} _||_ {', '.join(name(j) for j in self.vars)}"
        if not self.given:
            return lhs
        if self.given_values is None:
            return f"{lhs} | {', '.join(name(j) for j in self.given)}"
        cond = []
        for j, x in zip(self.given, self.given_values):
            lv = tree.variables[j].levels[x] if tree is not None else str(x)
            cond.append(f"{name(j)}={lv}")
        return f"{lhs} | {', '.join(cond)}"

    def __str__(self):
        return self.render()


def _label_array(tree: EventTree, depth: int, partition: Partition) -> np.ndarray:
    shape = tree.cardinalities[:depth]
    return np.asarray(partition.labels, dtype=np.int64).reshape(shape)


def _constant_over(arr: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    """Boolean array over the remaining axes: True where labels do not vary."""
    lo = arr.min(axis=axes)
    hi = arr.max(axis=axes)
    return lo == hi


def depth_statements(tree: EventTree, depth: int, partition: Partition) -> List[Statement]:
    if depth == 0:
        return []
    arr = _label_array(tree, depth, partition)
    coords = tuple(range(depth))
    out: List[Statement] = []

    irrelevant = [j for j in coords if bool(np.all(_constant_over(arr, (j,))))]
    for j in irrelevant:
        rest = tuple(k for k in coords if k != j)
        out.append(Statement(depth, (j,), rest))
    if len(irrelevant) >= 2:
        rest = tuple(k for k in coords if k not in irrelevant)
        out.append(Statement(depth, tuple(irrelevant), rest))

    # context-specific statements for every subset of varying coordinates
    found: List[Statement] = []
    for size in range(depth, 0, -1):
        for subset in itertools.combinations(coords, size):
            if set(subset) <= set(irrelevant):
                continue
            given = tuple(k for k in coords if k not in subset)
            if not given:
                continue
            const = _constant_over(arr, subset)
            for idx in zip(*np.nonzero(const)):
                values = tuple(int(x) for x in idx)
                st = Statement(depth, subset, given, values)
                if not any(_implies(big, st) for big in found):
                    found.append(st)
    found = [st for st in found if not _implied_by_symmetric(st, irrelevant)]
    return sorted(out) + sorted(found)


def _implies(big: Statement, small: Statement) -> bool:
    if not set(small.vars) <= set(big.vars):
        return False
    gb = dict(zip(big.given, big.given_values))
    gs = dict(zip(small.given, small.given_values))
    return all(gs.get(k) == v for k, v in gb.items())


def _implied_by_symmetric(st: Statement, irrelevant: Sequence[int]) -> bool:
    return set(st.vars) <= set(irrelevant)


def structural_independence_report(tree: EventTree, partitions: Dict[int, Partition]) -> List[Statement]:
    """Every symmetric and context-specific statement implied by the stagings.

    Symmetric statements ``X_i ⫫ X_j | rest`` hold when the stage label at
    depth ``i`` never changes with ``x_j``. Context-specific statements hold
    when the label is constant over a slice where the conditioning variables
    are fixed; only maximal ones are reported.
    """
    out: List[Statement] = []
    for depth in sorted(partitions):
        out.extend(depth_statements(tree, depth, partitions[depth]))
    return out
