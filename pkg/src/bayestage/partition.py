"""Stage partitions over the contexts of one depth.

Labels are stored 0-based and canonical: block 0 holds the lowest-rank
context, block 1 the lowest-rank context not in block 0, and so on. Exported
formats use 1-based labels.
"""
from __future__ import annotations

from typing import Iterator, List, Sequence, Tuple

import numpy as np


def canonicalize(labels: Sequence[int]) -> Tuple[int, ...]:
    """Relabel blocks by order of first appearance."""
    mapping: dict = {}
    return tuple(mapping.setdefault(g, len(mapping)) for g in labels)


class Partition:
    """Immutable canonical labeling of ``n`` contexts at one depth."""

    __slots__ = ("depth", "labels", "_hash")

    def __init__(self, labels: Sequence[int], depth: int = -1):
        self.labels = canonicalize(int(x) for x in labels)
        self.depth = depth
        self._hash = hash(self.labels)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: int, depth: int = -1) -> "Partition":
        labels = [-1] * n
        for b, members in enumerate(blocks):
            for m in members:
                labels[m] = b
        if min(labels, default=0) < 0:
            raise ValueError("blocks do not cover every context")
        return cls(labels, depth)

    @classmethod
    def singletons(cls, n: int, depth: int = -1) -> "Partition":
        return cls(range(n), depth)

    @classmethod
    def one_block(cls, n: int, depth: int = -1) -> "Partition":
        return cls([0] * n, depth)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_blocks(self) -> int:
        return max(self.labels) + 1 if self.labels else 0

    def blocks(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.n_blocks)]
        for k, g in enumerate(self.labels):
            out[g].append(k)
        return out

    def sizes(self) -> List[int]:
        return [len(b) for b in self.blocks()]

    def one_based(self) -> List[int]:
        return [g + 1 for g in self.labels]

    def together(self, k: int, l: int) -> bool:
        return self.labels[k] == self.labels[l]

    def __eq__(self, other):
        return isinstance(other, Partition) and self.labels == other.labels

    def __lt__(self, other):
        return self.labels < other.labels

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return f"Partition({list(self.one_based())})"

    def __str__(self):
        return "{" + "}, {".join(",".join(map(str, b)) for b in self.blocks()) + "}"


def set_partitions(n: int) -> Iterator[Tuple[int, ...]]:
    """All canonical label vectors of length ``n`` (restricted growth strings)."""
    if n == 0:
        yield ()
        return
    labels = [0] * n
    maxes = [0] * n

    def rec(k):
        if k == n:
            yield tuple(labels)
            return
        top = maxes[k - 1] + 1
        for g in range(top + 1):
            labels[k] = g
            maxes[k] = max(maxes[k - 1], g)
            yield from rec(k + 1)

    yield from rec(1)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def rand_index(p1: Partition, p2: Partition) -> float:
    """Fraction of context pairs on which the two partitions agree."""
    a = np.asarray(p1.labels)
    b = np.asarray(p2.labels)
    if a.shape != b.shape:
        raise ValueError("partitions over different context sets")
    n = a.size
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, 1)
    sa = (a[:, None] == a[None, :])[iu]
    sb = (b[:, None] == b[None, :])[iu]
    return float(np.mean(sa == sb))
