"""Posterior summaries of sampled partitions.

Point estimates minimize the Monte Carlo average of a partition loss (VI or
Binder) with a greedy sequential-allocation search in the style of SALSO.
Credible balls collect the sampled partitions within the smallest loss radius
around the estimate that covers the requested share of draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .partition import Partition

LOSSES = ("VI", "Binder")
_TIE = 1e-12
# expected losses closer than this count as tied (float noise is ~1e-16)
_TIE_LOSS = 1e-10


def _labels(samples, depth=None) -> np.ndarray:
    if hasattr(samples, "samples"):
        return np.asarray(samples.samples[depth])
    if isinstance(samples, (list, tuple)) and samples and isinstance(samples[0], Partition):
        return np.array([p.labels for p in samples], dtype=np.int64)
    return np.asarray(samples, dtype=np.int64)


def coclustering(samples, depth: Optional[int] = None) -> np.ndarray:
    """Posterior probability that two contexts sit in different stages."""
    S = _labels(samples, depth)
    if S.shape[0] == 0:
        raise ValueError("no samples")
    same = np.zeros((S.shape[1], S.shape[1]))
    for row in S:
        same += row[:, None] == row[None, :]
    return 1.0 - same / S.shape[0]


def _contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("partitions over different context sets")
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    return table


def _entropy(p) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def vi_distance(p1: Union[Partition, Sequence[int]], p2: Union[Partition, Sequence[int]]) -> float:
    """Variation of information in nats."""
    a = p1.labels if isinstance(p1, Partition) else p1
    b = p2.labels if isinstance(p2, Partition) else p2
    t = _contingency(a, b)
    n = t.sum()
    if n == 0:
        return 0.0
    pj = t / n
    h1 = _entropy(pj.sum(axis=1))
    h2 = _entropy(pj.sum(axis=0))
    return max(0.0, 2 * _entropy(pj.ravel()) - h1 - h2)


def binder_distance(p1, p2) -> float:
    """Share of context pairs clustered together in one partition and apart in the other."""
    a = np.asarray(p1.labels if isinstance(p1, Partition) else p1)
    b = np.asarray(p2.labels if isinstance(p2, Partition) else p2)
    if a.shape != b.shape:
        raise ValueError("partitions over different context sets")
    n = a.size
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, 1)
    sa = (a[:, None] == a[None, :])[iu]
    sb = (b[:, None] == b[None, :])[iu]
    return float(np.mean(sa != sb))


def distance(loss: str):
    if loss == "VI":
        return vi_distance
    if loss == "Binder":
        return binder_distance
    raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")


class ExpectedLoss:
    """Monte Carlo expected loss, additive over the blocks of the candidate."""

    def __init__(self, samples: np.ndarray, loss: str = "VI"):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")
        S = np.asarray(samples, dtype=np.int64)
        if S.ndim != 2 or S.shape[0] == 0:
            raise ValueError("need a nonempty (R, n) label matrix")
        self.loss = loss
        self.R, self.n = S.shape
        self._cache: Dict[Tuple[int, ...], float] = {}
        # repeated draws collapse into weights
        S, cnt = np.unique(S, axis=0, return_counts=True)
        self._w = cnt / self.R
        if loss == "VI":
            # together[i, j, r]
            self._together = (S.T[:, None, :] == S.T[None, :, :]).astype(np.float64)
            own = self._together.sum(axis=1)  # |R_r(i)|
            self.const = float(np.log(own).sum(axis=0) @ self._w / self.n)
        else:
            p = np.zeros((self.n, self.n))
            for row, w in zip(S, self._w):
                p += w * (row[:, None] == row[None, :])
            self._p = p
            self._pairs = self.n * (self.n - 1) / 2
            iu = np.triu_indices(self.n, 1)
            self.const = float(p[iu].sum() / self._pairs) if self._pairs else 0.0

    def block(self, members) -> float:
        key = tuple(sorted(members))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        idx = np.asarray(key, dtype=np.int64)
        if self.loss == "VI":
            inter = self._together[np.ix_(idx, idx)].sum(axis=1)  # (|b|, R)
            val = (len(idx) * math.log(len(idx)) - 2.0 * float(np.log(inter).sum(axis=0) @ self._w)) / self.n
        else:
            if self._pairs == 0:
                val = 0.0
            else:
                sub = self._p[np.ix_(idx, idx)]
                val = float((1.0 - 2.0 * sub)[np.triu_indices(len(idx), 1)].sum() / self._pairs)
        self._cache[key] = float(val)
        return float(val)

    def of_blocks(self, blocks) -> float:
        return self.const + sum(self.block(b) for b in blocks)

    def __call__(self, partition) -> float:
        p = partition if isinstance(partition, Partition) else Partition(partition)
        return self.of_blocks(p.blocks())


def _allocate(x, blocks, el: ExpectedLoss) -> int:
    """Index of the best block for ``x`` (``len(blocks)`` means a new block)."""
    best = len(blocks)
    best_delta = el.block([x])
    for k, b in enumerate(blocks):
        delta = el.block(b + [x]) - el.block(b)
        if delta < best_delta - _TIE:
            best, best_delta = k, delta
    return best


def _place(x, blocks, k):
    if k == len(blocks):
        blocks.append([x])
    else:
        blocks[k].append(x)


def _local_search(el: ExpectedLoss, blocks, rng: np.random.Generator, max_sweeps: int = 100) -> List[List[int]]:
    """Reallocation sweeps, zealous block dissolution and pairwise merges until no move improves."""
    n = el.n
    blocks = [list(b) for b in blocks]
    for _ in range(max_sweeps):
        changed = False
        for x in rng.permutation(n):
            x = int(x)
            k0 = next(k for k, b in enumerate(blocks) if x in b)
            before = sorted(blocks[k0])
            blocks[k0].remove(x)
            if not blocks[k0]:
                del blocks[k0]
            k = _allocate(x, blocks, el)
            _place(x, blocks, k)
            if sorted(blocks[k if k < len(blocks) else -1]) != before:
                changed = True
        # zealous step: dissolve one block at a time and reallocate its members
        current = el.of_blocks(blocks)
        for k in rng.permutation(len(blocks)):
            if k >= len(blocks):
                continue
            trial = [list(b) for i, b in enumerate(blocks) if i != k]
            for x in rng.permutation(blocks[k]):
                _place(int(x), trial, _allocate(int(x), trial, el))
            val = el.of_blocks(trial)
            if val < current - _TIE:
                blocks, current, changed = trial, val, True
        # pairwise merges reach coarse optima that single moves cannot
        while len(blocks) > 1:
            gain, pair = 0.0, None
            for i in range(len(blocks)):
                for j in range(i + 1, len(blocks)):
                    g = el.block(blocks[i] + blocks[j]) - el.block(blocks[i]) - el.block(blocks[j])
                    if g < gain - _TIE:
                        gain, pair = g, (i, j)
            if pair is None:
                break
            i, j = pair
            blocks[i] = blocks[i] + blocks[j]
            del blocks[j]
            changed = True
        if not changed:
            break
    return blocks


def _sequential(el: ExpectedLoss, rng: np.random.Generator) -> List[List[int]]:
    blocks: List[List[int]] = []
    for x in rng.permutation(el.n):
        _place(int(x), blocks, _allocate(int(x), blocks, el))
    return blocks


def point_estimate(
    samples,
    depth: Optional[int] = None,
    loss: str = "VI",
    restarts: int = 16,
    seed: int = 0,
    refine_samples: int = 16,
) -> Partition:
    """Partition minimizing the Monte Carlo expected loss over the samples.

    Local search starts from ``restarts`` randomized sequential allocations,
    from the one-block and all-singleton partitions and from the
    ``refine_samples`` best sampled partitions. Every distinct sampled
    partition is also a candidate as is. Ties go to the lexicographically
    smallest canonical labeling.
    """
    S = _labels(samples, depth)
    el = ExpectedLoss(S, loss)
    n = el.n
    rng = np.random.default_rng(seed)
    sampled = sorted((el(Partition(row)), Partition(row).labels) for row in np.unique(S, axis=0))
    candidates = {lab for _, lab in sampled}
    starts = [_sequential(el, rng) for _ in range(max(1, restarts))]
    starts += [[list(range(n))], [[x] for x in range(n)]]
    starts += [Partition(lab).blocks() for _, lab in sampled[:refine_samples]]
    for b in starts:
        candidates.add(Partition.from_blocks(_local_search(el, b, rng), n).labels)
    scored = sorted((el(Partition(lab)), lab) for lab in candidates)
    best = scored[0][0]
    tied = [lab for val, lab in scored if val <= best + _TIE_LOSS]
    labels = min(_plateau(el, tied, best))
    return Partition(labels, -1 if depth is None else depth)


def _plateau(el: ExpectedLoss, start, best: float, limit: int = 2000):
    """Labelings reachable from ``start`` by single-context moves without changing the loss."""
    seen = set(start)
    queue = list(start)
    while queue and len(seen) < limit:
        lab = queue.pop()
        m = max(lab) + 1
        for x in range(len(lab)):
            for g in range(m + 1):
                if g == lab[x]:
                    continue
                nb = Partition(lab[:x] + (g,) + lab[x + 1 :]).labels
                if nb in seen:
                    continue
                if el(Partition(nb)) <= best + _TIE_LOSS:
                    seen.add(nb)
                    queue.append(nb)
    return seen


@dataclass
class CredibleBall:
    center: Partition
    radius: float
    level: float
    loss: str
    coverage: float
    vertical_upper: List[Partition] = field(default_factory=list)
    vertical_lower: List[Partition] = field(default_factory=list)
    horizontal: List[Partition] = field(default_factory=list)

    def to_json(self) -> dict:
        def rows(ps):
            return [p.one_based() for p in ps]

        return {
            "center": self.center.one_based(),
            "radius": self.radius,
            "level": self.level,
            "loss": self.loss,
            "coverage": self.coverage,
            "vertical_upper": rows(self.vertical_upper),
            "vertical_lower": rows(self.vertical_lower),
            "horizontal": rows(self.horizontal),
        }


def credible_ball(samples, depth: Optional[int], center: Partition, loss: str = "VI", level: float = 0.95) -> CredibleBall:
    """Smallest ball around ``center`` holding at least ``level`` of the draws.

    Vertical upper bound: in-ball partitions with the fewest blocks; vertical
    lower bound: those with the most blocks; horizontal bound: those farthest
    from the center.
    """
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    S = _labels(samples, depth)
    dist = distance(loss)
    uniq, inverse = np.unique(S, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    parts = [Partition(r, center.depth) for r in uniq]
    d_uniq = np.array([dist(center, p) for p in parts])
    d = d_uniq[inverse]
    R = d.size
    k = max(1, math.ceil(level * R - 1e-9))
    radius = float(np.sort(d)[k - 1])
    inside = [(p, dv) for p, dv in zip(parts, d_uniq) if dv <= radius + _TIE]
    coverage = float(np.mean(d <= radius + _TIE))
    nb = [p.n_blocks for p, _ in inside]
    far = max(dv for _, dv in inside)
    return CredibleBall(
        center=center,
        radius=radius,
        level=level,
        loss=loss,
        coverage=coverage,
        vertical_upper=sorted(p for p, _ in inside if p.n_blocks == min(nb)),
        vertical_lower=sorted(p for p, _ in inside if p.n_blocks == max(nb)),
        horizontal=sorted(p for p, dv in inside if dv >= far - _TIE),
    )


# exports

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
)


def dissimilarity_csv(matrix: np.ndarray, labels: Sequence[str]) -> str:
    """Square CSV table (header row and first column carry the context labels)."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["context", *labels])
    for lab, row in zip(labels, np.asarray(matrix)):
        w.writerow([lab, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()


def stage_color(stage: int) -> str:
    return PALETTE[stage % len(PALETTE)]


def staged_tree_dot(tree, partitions: Dict[int, Partition], name: str = "staged_tree") -> str:
    """Graphviz description of the staged tree; nodes in one stage share a fill color.

    Every node carries a ``stage="depth:label"`` attribute (1-based label) so the
    coloring can be checked without rendering. Unmodeled depths are drawn white.
    """
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  node [shape=circle, style=filled, label=""];']
    cards = tree.cardinalities
    for depth in range(tree.p + 2):
        part = partitions.get(depth)
        for rank, ctx in enumerate(tree.contexts(depth)):
            node = "n" + "_".join(map(str, ctx)) if ctx else "root"
            if depth > tree.p:
                lines.append(f'  {node} [shape=point, fillcolor="black"];')
            elif part is not None:
                g = part.labels[rank]
                lines.append(f'  {node} [fillcolor="{stage_color(g)}", stage="{depth}:{g + 1}"];')
            else:
                lines.append(f'  {node} [fillcolor="white", stage="{depth}:{rank + 1}"];')
            if depth < tree.p + 1:
                var = tree.variables[depth]
                for x in range(cards[depth]):
                    child = "n" + "_".join(map(str, ctx + (x,)))
                    lines.append(f'  {node} -> {child} [label="{var.name}={var.levels[x]}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
