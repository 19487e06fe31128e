import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from bayestage.likelihood import log_marginal_partition
from bayestage.partition import Partition, canonicalize
from bayestage.summaries import ExpectedLoss, binder_distance, credible_ball, point_estimate, vi_distance
from bayestage.tree import EventTree, Variable, count_contexts, decode_context, encode_context

cards_st = st.lists(st.integers(2, 4), min_size=1, max_size=4)
labels_st = st.lists(st.integers(0, 4), min_size=1, max_size=7)


@given(cards_st, st.data())
def test_encode_decode(cards, data):
    total = int(np.prod(cards))
    r = data.draw(st.integers(0, total - 1))
    assert encode_context(decode_context(r, cards), cards) == r


@given(labels_st)
def test_canonicalize_idempotent(labels):
    once = canonicalize(labels)
    assert canonicalize(once) == once
    assert once[0] == 0
    assert max(once) + 1 == len(set(labels))


@given(st.integers(2, 6).flatmap(lambda n: st.tuples(*[st.lists(st.integers(0, 3), min_size=n, max_size=n)] * 3)))
def test_metrics(triple):
    a, b, c = (Partition(x) for x in triple)
    for dist in (vi_distance, binder_distance):
        assert dist(a, b) == dist(b, a) or abs(dist(a, b) - dist(b, a)) < 1e-12
        assert dist(a, a) == 0
        assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-12


@given(st.lists(st.integers(0, 3), min_size=2, max_size=6), st.randoms(use_true_random=False))
def test_marginal_label_invariance(labels, rnd):
    rng = np.random.default_rng(rnd.randint(0, 2**31))
    counts = rng.integers(0, 10, size=(len(labels), 3))
    perm = list(range(max(labels) + 1))
    rnd.shuffle(perm)
    relabeled = [perm[g] for g in labels]
    assert abs(log_marginal_partition(counts, labels) - log_marginal_partition(counts, relabeled)) < 1e-9


@given(st.lists(st.integers(2, 3), min_size=2, max_size=4), st.integers(0, 60), st.integers(0, 10**6))
def test_flow_conservation(cards, n, seed):
    tree = EventTree(tuple(Variable(f"V{i}", tuple(map(str, range(k)))) for i, k in enumerate(cards)), tuple(range(len(cards))))
    rng = np.random.default_rng(seed)
    codes = np.column_stack([rng.integers(0, k, size=n) for k in cards]).astype(np.int64).reshape(n, len(cards))
    t = count_contexts(tree, codes)
    assert t[0].counts.sum() == n
    for d in range(1, len(cards)):
        assert np.array_equal(t[d].counts.sum(axis=1), t[d - 1].counts.ravel())


samples_st = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, n - 1), min_size=n, max_size=n), min_size=1, max_size=25)
)


@settings(max_examples=60, deadline=None)
@given(samples_st, st.sampled_from(["VI", "Binder"]))
def test_point_estimate_beats_samples(rows, loss):
    S = np.array([Partition(r).labels for r in rows])
    el = ExpectedLoss(S, loss)
    pe = point_estimate(S, loss=loss, restarts=4)
    assert el(pe) <= min(el(Partition(r)) for r in S) + 1e-12


@settings(max_examples=60, deadline=None)
@given(samples_st, st.floats(0.05, 1.0))
def test_ball_coverage_minimal(rows, level):
    S = np.array([Partition(r).labels for r in rows])
    center = Partition(S[0])
    ball = credible_ball(S, None, center, "VI", level)
    d = np.array([vi_distance(center, r) for r in S])
    assert ball.coverage >= level - 1e-9
    assert np.mean(d < ball.radius - 1e-12) < level
