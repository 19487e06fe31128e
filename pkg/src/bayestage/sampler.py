"""Collapsed MCMC over stage partitions, one independent chain per modeled depth.

An iteration is one Polya-urn Gibbs sweep followed by one split-merge
Metropolis-Hastings step. The stage probabilities are integrated out, so the
chain targets ``p(partition | data)`` proportional to the partition prior times
the product of stage Dirichlet-multinomial marginals.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _pycore, kernels
from .likelihood import log_marginal_partition
from .partition import Partition, set_partitions
from .priors import MAX_ENUMERATION, PriorSpec, distance_matrix, log_eppf, penalty_matrix
from .tree import ContextTable, EventTree

SAMPLES_SCHEMA = "bayestage.samples/1"
_CHUNK_UNIFORMS = 1 << 20


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 10000
    burn_in: int = 1000
    thin: int = 5
    seed: int = 0
    init: str = "singletons"

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thinning must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.init not in ("singletons", "one_block"):
            raise ValueError(f"unknown initial partition policy {self.init!r}")
        if self.retained < 1:
            raise ValueError("configuration retains no samples")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keep_mask(self) -> np.ndarray:
        t = np.arange(1, self.iterations + 1)
        return (t > self.burn_in) & ((t - self.burn_in) % self.thin == 0)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class DepthModel:
    """Everything a chain at one depth needs: counts and the pairwise penalty."""

    depth: int
    counts: np.ndarray
    penalty: np.ndarray
    kappa: float
    a: float

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def build(cls, tree: EventTree, table: ContextTable, spec: PriorSpec, delta: Optional[Sequence[np.ndarray]] = None) -> "DepthModel":
        d = distance_matrix(tree, table.depth)
        return cls(table.depth, np.ascontiguousarray(table.counts, dtype=np.int64), penalty_matrix(spec, d, delta), spec.kappa, spec.a)

    @classmethod
    def from_arrays(cls, counts, spec: PriorSpec, d=None, delta=None, depth: int = -1) -> "DepthModel":
        counts = np.ascontiguousarray(counts, dtype=np.int64)
        if d is None:
            d = np.zeros((counts.shape[0],) * 2)
        return cls(depth, counts, penalty_matrix(spec, d, delta), spec.kappa, spec.a)

    def _prior(self):
        return PriorSpec(kappa=self.kappa, xi=1.0, a=self.a)

    def log_prior(self, partition: Partition) -> float:
        return log_eppf(partition, self._prior(), self.penalty)

    def log_likelihood(self, partition: Partition) -> float:
        return log_marginal_partition(self.counts, partition.labels, self.a)

    def log_posterior(self, partition: Partition) -> float:
        """Unnormalized log posterior evaluated directly (no incremental ratios)."""
        return self.log_prior(partition) + self.log_likelihood(partition)

    def exact_posterior(self) -> Dict[Partition, float]:
        """Posterior over every partition by enumeration (small depths only)."""
        if self.n > MAX_ENUMERATION:
            raise ValueError(f"{self.n} contexts is too many to enumerate")
        parts = [Partition(lab, self.depth) for lab in set_partitions(self.n)]
        lp = np.array([self.log_posterior(p) for p in parts])
        prob = np.exp(lp - logsumexp(lp))
        return dict(zip(parts, prob.tolist()))

    # single-move API, mostly for tests and inspection

    def full_conditional_weights(self, ctx: int, state: Partition):
        """Log weights for reallocating ``ctx``: one per remaining block, then a new block.

        Returns ``(blocks, log_weights)`` where ``blocks`` lists the members of
        each remaining block (``ctx`` excluded) in label order.
        """
        labels, lw = _pycore.conditional_log_weights(
            ctx, list(state.labels), self.counts.tolist(), self.penalty.tolist(), math.log(self.kappa), self.a
        )
        m = len(lw) - 1
        blocks = [[y for y, g in enumerate(labels) if g == k] for k in range(m)]
        return blocks, np.array(lw)

    def gibbs_sweep(self, state: Partition, rng, backend=None) -> Partition:
        u = np.asarray(rng.random(self.n), dtype=np.float64)
        return self._step(state, u, gibbs=True, split=False, backend=backend)

    def split_merge_step(self, state: Partition, rng, backend=None) -> Partition:
        u = np.asarray(rng.random(self.n + 3), dtype=np.float64)
        return self._step(state, u, gibbs=False, split=True, backend=backend)

    def _step(self, state, u, gibbs, split, backend):
        n = self.n
        row = np.zeros((1, _pycore.uniforms_per_iteration(n)))
        if gibbs:
            row[0, :n] = u
        else:
            row[0, n:] = u
        labels = np.array(state.labels, dtype=np.int64)
        out = np.zeros((1, n), dtype=np.int64)
        kernels.run(labels, self.counts, self.penalty, math.log(self.kappa), self.a, row, np.ones(1, np.uint8), out, gibbs, split, backend)
        return Partition(labels, state.depth)


def depth_seed(seed: int, depth: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(depth) & (2**64 - 1)])


def run_depth(model: DepthModel, config: ChainConfig, gibbs=True, split=True, backend=None):
    """Run one depth's chain; returns ``(samples (R, n) int array, acceptance rate)``."""
    n = model.n
    rng = np.random.default_rng(depth_seed(config.seed, model.depth))
    width = _pycore.uniforms_per_iteration(n)
    labels = np.arange(n, dtype=np.int64) if config.init == "singletons" else np.zeros(n, dtype=np.int64)
    keep = config.keep_mask()
    out = np.zeros((config.retained, n), dtype=np.int64)
    chunk = max(1, _CHUNK_UNIFORMS // width)
    accepted = 0
    r = 0
    log_kappa = math.log(model.kappa)
    for start in range(0, config.iterations, chunk):
        stop = min(start + chunk, config.iterations)
        U = rng.random((stop - start, width))
        k = keep[start:stop]
        view = out[r : r + int(k.sum())]
        accepted += kernels.run(labels, model.counts, model.penalty, log_kappa, model.a, U, k, view, gibbs, split, backend)
        r += int(k.sum())
    return out, accepted / config.iterations


def _run_depth_job(args):
    model, config, backend = args
    return run_depth(model, config, backend=backend)


@dataclass
class PosteriorSampleSet:
    """Retained canonical labelings (0-based) per modeled depth."""

    samples: Dict[int, np.ndarray]
    seed: int = 0
    config_hash: str = ""
    acceptance: Dict[int, float] = field(default_factory=dict)

    @property
    def depths(self) -> List[int]:
        return sorted(self.samples)

    @property
    def n_samples(self) -> int:
        return next(iter(self.samples.values())).shape[0]

    def partitions(self, depth: int) -> List[Partition]:
        return [Partition(row, depth) for row in self.samples[depth]]

    def frequencies(self, depth: int) -> Dict[Partition, float]:
        rows, cnt = np.unique(self.samples[depth], axis=0, return_counts=True)
        total = cnt.sum()
        return {Partition(r, depth): c / total for r, c in zip(rows, cnt)}

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {SAMPLES_SCHEMA}\n# seed={self.seed} config_hash={self.config_hash}\n")
        for depth in self.depths:
            s = self.samples[depth]
            buf.write(f"depth {depth} contexts {s.shape[1]} samples {s.shape[0]}\n")
            for row in s:
                buf.write(" ".join(str(int(g) + 1) for g in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "PosteriorSampleSet":
        lines = text.splitlines()
        seed, chash = 0, ""
        samples: Dict[int, np.ndarray] = {}
        i = 0
        while i < len(lines):
            line = lines[i].strip()
            i += 1
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("seed="):
                        seed = int(tok[5:])
                    elif tok.startswith("config_hash="):
                        chash = tok[12:]
                continue
            parts = line.split()
            if parts[0] != "depth":
                raise ValueError(f"malformed sample file near line {i}: {line!r}")
            depth, n_ctx, r = int(parts[1]), int(parts[3]), int(parts[5])
            rows = [list(map(int, lines[i + k].split())) for k in range(r)]
            i += r
            arr = np.array(rows, dtype=np.int64).reshape(r, n_ctx) - 1
            samples[depth] = arr
        return cls(samples, seed, chash)

    def to_json(self) -> dict:
        return {
            "schema": SAMPLES_SCHEMA,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "acceptance": {str(k): v for k, v in sorted(self.acceptance.items())},
            "depths": {str(d): (self.samples[d] + 1).tolist() for d in self.depths},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PosteriorSampleSet":
        samples = {int(d): np.array(v, dtype=np.int64) - 1 for d, v in obj["depths"].items()}
        acc = {int(d): float(v) for d, v in obj.get("acceptance", {}).items()}
        return cls(samples, int(obj.get("seed", 0)), obj.get("config_hash", ""), acc)


def run_chain(
    tree: EventTree,
    tables: Mapping[int, ContextTable],
    spec: PriorSpec,
    config: ChainConfig,
    delta: Optional[Mapping[int, Sequence[np.ndarray]]] = None,
    workers: int = 1,
    backend: Optional[str] = None,
) -> PosteriorSampleSet:
    """Sample every modeled depth independently, starting from ``config.init``.

    Each depth gets its own seed derived from ``config.seed`` and the depth,
    so output does not depend on ``workers``.
    """
    models = [DepthModel.build(tree, tables[i], spec, (delta or {}).get(i)) for i in sorted(tables)]
    jobs = [(m, config, backend) for m in models]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_run_depth_job, jobs))
    else:
        results = [_run_depth_job(j) for j in jobs]
    samples = {m.depth: r[0] for m, r in zip(models, results)}
    acceptance = {m.depth: r[1] for m, r in zip(models, results)}
    return PosteriorSampleSet(samples, config.seed, config.digest(), acceptance)
