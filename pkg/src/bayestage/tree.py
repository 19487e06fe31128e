"""Event trees, context indexing and count tables.

Contexts at depth ``i`` are the value assignments ``(x_0, ..., x_{i-1})`` of the
first ``i`` variables. They are indexed by a mixed-radix rank whose most
significant digit is ``x_0``, so rank order equals lexicographic order.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class TreeError(ValueError):
    """Raised for invalid tree declarations or data that does not fit the tree."""


@dataclass(frozen=True)
class Variable:
    name: str
    levels: Tuple[str, ...]

    @property
    def cardinality(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class EventTree:
    """Fixed frame of an ordered set of categorical variables.

    ``modeled`` is the set of depths whose stages are learned; it is always a
    contiguous suffix ``{c, ..., p}`` of the ordering.
    """

    variables: Tuple[Variable, ...]
    modeled: Tuple[int, ...]

    def __post_init__(self):
        if not self.variables:
            raise TreeError("an event tree needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise TreeError(f"duplicate variable names in {names}")
        for v in self.variables:
            if len(v.levels) < 2:
                raise TreeError(f"variable {v.name!r} has fewer than 2 levels")
            if len(set(v.levels)) != len(v.levels):
                raise TreeError(f"variable {v.name!r} has repeated levels")
        p = len(self.variables) - 1
        mod = tuple(sorted(self.modeled))
        if not mod or mod != tuple(range(mod[0], p + 1)):
            raise TreeError(f"modeled depths {self.modeled} are not a nonempty suffix of 0..{p}")
        object.__setattr__(self, "modeled", mod)

    @property
    def p(self) -> int:
        return len(self.variables) - 1

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TreeError(f"unknown variable {name!r}") from None

    def n_contexts(self, depth: int) -> int:
        return int(np.prod(self.cardinalities[:depth], dtype=np.int64))

    def contexts(self, depth: int) -> List[Tuple[int, ...]]:
        """All contexts at ``depth`` in rank order."""
        return list(itertools.product(*(range(k) for k in self.cardinalities[:depth])))

    def encode(self, values: Sequence[int]) -> int:
        return encode_context(values, self.cardinalities[: len(values)])

    def decode(self, rank: int, depth: int) -> Tuple[int, ...]:
        return decode_context(rank, self.cardinalities[:depth])

    def context_label(self, depth: int, values: Sequence[int]) -> str:
        parts = [f"{self.variables[j].name}={self.variables[j].levels[x]}" for j, x in enumerate(values)]
        return ", ".join(parts) if parts else "(root)"

    def to_dict(self) -> dict:
        return {
            "variables": [{"name": v.name, "levels": list(v.levels)} for v in self.variables],
            "modeled": [self.variables[i].name for i in self.modeled],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EventTree":
        variables = tuple(Variable(v["name"], tuple(str(x) for x in v["levels"])) for v in d["variables"])
        names = [v.name for v in variables]
        modeled = tuple(names.index(m) for m in d["modeled"])
        return cls(variables, modeled)


def encode_context(values: Sequence[int], cardinalities: Sequence[int]) -> int:
    """Mixed-radix rank of ``values`` (most significant digit first)."""
    if len(values) != len(cardinalities):
        raise TreeError("context length does not match the number of radices")
    rank = 0
    for x, k in zip(values, cardinalities):
        if not 0 <= x < k:
            raise TreeError(f"digit {x} out of range for cardinality {k}")
        rank = rank * k + int(x)
    return rank


def decode_context(rank: int, cardinalities: Sequence[int]) -> Tuple[int, ...]:
    total = int(np.prod(cardinalities, dtype=np.int64)) if len(cardinalities) else 1
    if not 0 <= rank < total:
        raise TreeError(f"rank {rank} out of range for {total} contexts")
    out = []
    for k in reversed(cardinalities):
        rank, x = divmod(rank, k)
        out.append(x)
    return tuple(reversed(out))


@dataclass
class Dataset:
    """Categorical rows kept as strings, plus optional real-valued columns."""

    columns: Dict[str, List[str]]
    real: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        if self.columns:
            return len(next(iter(self.columns.values())))
        if self.real:
            return len(next(iter(self.real.values())))
        return 0

    @classmethod
    def from_rows(cls, header: Sequence[str], rows: Iterable[Sequence]) -> "Dataset":
        cols: Dict[str, List[str]] = {h: [] for h in header}
        for r in rows:
            for h, x in zip(header, r):
                cols[h].append(str(x))
        return cls(cols)


def read_csv(path, real_columns: Sequence[str] = ()) -> Dataset:
    """Read a UTF-8 CSV with a header row; ``real_columns`` are parsed as floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TreeError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise TreeError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
    data: Dict[str, List[str]] = {h: [r[j].strip() for r in rows] for j, h in enumerate(header)}
    real = {}
    for name in real_columns:
        if name not in data:
            raise TreeError(f"unknown covariate column {name!r}")
        try:
            real[name] = np.array([float(x) for x in data.pop(name)])
        except ValueError as exc:
            raise TreeError(f"covariate column {name!r} is not numeric: {exc}") from None
    return Dataset(data, real)


def write_csv(path, dataset: Dataset) -> None:
    header = list(dataset.columns) + list(dataset.real)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = [dataset.columns[h] for h in dataset.columns] + [
            [repr(float(x)) for x in dataset.real[h]] for h in dataset.real
        ]
        for row in zip(*cols):
            w.writerow(row)


def build_event_tree(
    dataset: Dataset,
    ordering: Sequence[str],
    modeled: Iterable[str],
    levels: Optional[Mapping[str, Sequence[str]]] = None,
) -> EventTree:
    """Build the event tree for ``ordering``.

    Levels come from ``levels`` when declared for a variable, otherwise from
    first appearance in the data.
    """
    levels = dict(levels or {})
    variables = []
    for name in ordering:
        if name not in dataset.columns:
            raise TreeError(f"unknown column {name!r}")
        col = dataset.columns[name]
        if any(x == "" for x in col):
            raise TreeError(f"column {name!r} has missing values")
        if name in levels:
            lv = tuple(str(x) for x in levels[name])
        else:
            lv = tuple(dict.fromkeys(col))
        if len(lv) < 2:
            raise TreeError(f"variable {name!r} has a single level {lv}")
        variables.append(Variable(name, lv))
    names = list(ordering)
    modeled = list(modeled)
    for m in modeled:
        if m not in names:
            raise TreeError(f"modeled variable {m!r} not in the ordering")
    return EventTree(tuple(variables), tuple(names.index(m) for m in modeled))


def encode_rows(tree: EventTree, dataset: Dataset) -> np.ndarray:
    """Integer matrix (n, p+1) of level indices; rejects undeclared levels."""
    n = dataset.n_rows
    out = np.empty((n, tree.p + 1), dtype=np.int64)
    for j, v in enumerate(tree.variables):
        lookup = {lv: k for k, lv in enumerate(v.levels)}
        col = dataset.columns.get(v.name)
        if col is None:
            raise TreeError(f"dataset lacks column {v.name!r}")
        try:
            out[:, j] = [lookup[x] for x in col]
        except KeyError as exc:
            raise TreeError(f"column {v.name!r} has undeclared level {exc.args[0]!r}") from None
    return out


@dataclass(frozen=True)
class ContextTable:
    """Counts ``N[x_[i-1], x_i]`` at one depth: rows are contexts in rank order."""

    depth: int
    counts: np.ndarray
    n_total: int

    @property
    def n_contexts(self) -> int:
        return self.counts.shape[0]

    @property
    def n_levels(self) -> int:
        return self.counts.shape[1]


def context_ranks(tree: EventTree, codes: np.ndarray, depth: int) -> np.ndarray:
    """Rank of each row's depth-``depth`` context."""
    rank = np.zeros(codes.shape[0], dtype=np.int64)
    for j in range(depth):
        rank = rank * tree.cardinalities[j] + codes[:, j]
    return rank


def count_table(tree: EventTree, codes: np.ndarray, depth: int) -> ContextTable:
    k = tree.cardinalities[depth]
    flat = context_ranks(tree, codes, depth) * k + codes[:, depth]
    counts = np.bincount(flat, minlength=tree.n_contexts(depth) * k).reshape(-1, k)
    return ContextTable(depth, counts.astype(np.int64), int(codes.shape[0]))


def count_contexts(tree: EventTree, dataset, depths: Optional[Iterable[int]] = None) -> Dict[int, ContextTable]:
    """Count tables keyed by depth (the modeled depths unless ``depths`` is given).

    ``dataset`` is a :class:`Dataset` or an already encoded integer matrix.
    """
    codes = dataset if isinstance(dataset, np.ndarray) else encode_rows(tree, dataset)
    if codes.size and (codes.min() < 0 or np.any(codes >= np.array(tree.cardinalities))):
        raise TreeError("encoded rows contain out-of-range levels")
    depths = tree.modeled if depths is None else tuple(depths)
    return {i: count_table(tree, codes, i) for i in depths}
