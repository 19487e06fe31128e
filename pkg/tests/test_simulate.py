import numpy as np
import pytest

from bayestage.causal import CausalQuery
from bayestage.partition import Partition, rand_index
from bayestage.priors import PriorSpec
from bayestage.sampler import ChainConfig, run_chain
from bayestage.simulate import (
    GeneratingTree,
    consistency_tree,
    covariate_generator,
    effects_json,
    exact_effects,
    random_staged_tree,
    sample_codes,
    sample_dataset,
)
from bayestage.summaries import point_estimate
from bayestage.tree import EventTree, Variable, count_contexts
from oracles import brute_effects


class TestRandomTree:
    def test_no_merges_follows_parents(self):
        for seed in range(20):
            gt = random_staged_tree([2, 3, 2, 2], q=0.0, seed=seed)
            for depth in range(1, 4):
                lab = np.array(gt.partitions[depth].labels).reshape(gt.tree.cardinalities[:depth])
                # the staging is a function of some coordinate subset: find the minimal one
                used = [j for j in range(depth) if not np.all(lab.min(axis=j) == lab.max(axis=j))]
                ctxs = gt.tree.contexts(depth)
                keys = {tuple(c[j] for j in used) for c in ctxs}
                assert gt.partitions[depth].n_blocks == len(keys)

    def test_always_merge(self):
        gt = random_staged_tree([2, 2, 3, 2], q=1.0, seed=1)
        assert all(p.n_blocks == 1 for p in gt.partitions.values())

    def test_exp_rows_uniform_on_simplex(self):
        rows = np.vstack([random_staged_tree([2, 3], seed=s).theta[1] for s in range(3000)])
        assert np.allclose(rows.mean(axis=0), 1 / 3, atol=0.01)
        # Dirichlet(1,1,1) marginal variance is 1/18
        assert rows[:, 0].var() == pytest.approx(1 / 18, abs=0.005)

    def test_unif_scheme_and_errors(self):
        gt = random_staged_tree([2, 2], scheme="unif", seed=0)
        assert np.allclose(gt.theta[1].sum(axis=1), 1)
        with pytest.raises(ValueError):
            random_staged_tree([2, 2], scheme="gamma")
        with pytest.raises(ValueError):
            random_staged_tree([2, 2], q=1.5)
        with pytest.raises(ValueError):
            random_staged_tree([2, 1])

    def test_validation(self):
        gt = random_staged_tree([2, 2], seed=0)
        with pytest.raises(ValueError):
            GeneratingTree(gt.tree, gt.partitions, {0: gt.theta[0], 1: gt.theta[1] * 2})
        with pytest.raises(ValueError):
            GeneratingTree(gt.tree, {0: gt.partitions[0]}, gt.theta)

    def test_json_round_trip(self, tmp_path):
        gt = random_staged_tree([2, 3, 2], q=0.4, seed=5, modeled=[1, 2])
        (tmp_path / "g.json").write_text(gt.dumps())
        back = GeneratingTree.load(tmp_path / "g.json")
        assert back.tree == gt.tree
        assert all(back.partitions[d] == gt.partitions[d] for d in gt.partitions)
        assert all(np.array_equal(back.theta[d], gt.theta[d]) for d in gt.theta)
        assert gt.to_json()["depths"][2]["stages"][0] == 1


class TestSampling:
    def test_point_masses(self):
        tree = EventTree(tuple(Variable(f"X{i}", ("0", "1")) for i in range(3)), (0, 1, 2))
        parts = {0: Partition([0]), 1: Partition([0, 0]), 2: Partition([0, 0, 0, 0])}
        theta = {0: np.array([[0.0, 1.0]]), 1: np.array([[1.0, 0.0]]), 2: np.array([[0.0, 1.0]])}
        codes = sample_codes(GeneratingTree(tree, parts, theta), 50, seed=0)
        assert np.all(codes == [1, 0, 1])

    def test_same_seed(self):
        gt = random_staged_tree([2, 3, 2], seed=0)
        assert sample_dataset(gt, 100, seed=4).columns == sample_dataset(gt, 100, seed=4).columns
        assert sample_dataset(gt, 100, seed=4).columns != sample_dataset(gt, 100, seed=5).columns

    def test_frequencies_match_joint(self):
        gt = random_staged_tree([2, 3, 2], seed=3)
        codes = sample_codes(gt, 200000, seed=1)
        freq = np.zeros(gt.tree.cardinalities)
        np.add.at(freq, tuple(codes.T), 1)
        assert np.abs(freq / len(codes) - gt.joint()).max() < 0.005
        assert gt.joint().sum() == pytest.approx(1.0)

    def test_n_positive(self):
        with pytest.raises(ValueError):
            sample_codes(random_staged_tree([2, 2]), 0)


class TestEffects:
    def test_independent_outcome(self):
        gt = random_staged_tree([2, 2, 2], seed=0)
        gt.partitions[2] = Partition([0, 0, 1, 1], 2)
        gt.theta[2] = np.array([[0.2, 0.8], [0.6, 0.4]])
        assert exact_effects(gt, CausalQuery(1, 2))["ate"] == 0.0

    def test_hand_example(self):
        tree = EventTree(tuple(Variable(n, ("0", "1")) for n in "ZTY"), (1, 2))
        parts = {0: Partition([0]), 1: Partition([0, 1]), 2: Partition([0, 1, 2, 2])}
        theta = {
            0: np.array([[0.25, 0.75]]),
            1: np.array([[0.5, 0.5], [0.9, 0.1]]),
            2: np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4]]),
        }
        gt = GeneratingTree(tree, parts, theta)
        eff = exact_effects(gt, CausalQuery(1, 2))
        # z=0: 0.7 - 0.2 = 0.5; z=1 shares a stage: 0
        assert eff["cate"].tolist() == [pytest.approx(0.5), 0.0]
        assert eff["ate"] == pytest.approx(0.25 * 0.5)
        assert np.allclose(eff["pz"], [0.25, 0.75], atol=1e-15)
        j = effects_json(gt, CausalQuery(1, 2))
        assert j["cate"][0]["profile"] == "Z=0" and j["treatment"] == "T"

    def test_brute_force(self):
        for seed in range(20):
            gt = random_staged_tree([2, 2, 2, 2], q=0.5, seed=seed)
            ate, cate, pz = brute_effects(gt, 2, 3)
            eff = exact_effects(gt, CausalQuery(2, 3))
            assert abs(eff["ate"] - ate) < 1e-12
            assert np.abs(eff["cate"] - cate).max() < 1e-12

    def test_consistency_tree(self):
        gt = consistency_tree()
        assert gt.tree.names == [f"X{i}" for i in range(6)]
        assert gt.tree.modeled == (3, 4, 5)
        eff = exact_effects(gt, CausalQuery(4, 5))
        assert eff["ate"] == pytest.approx(brute_effects(gt, 4, 5)[0], abs=1e-12)
        assert eff["ate"] < 0


class TestCovariates:
    def _setup(self, n=3000):
        gt = random_staged_tree([2, 2, 2], seed=2)
        gt.partitions[2] = Partition([0, 1, 1, 0], 2)
        gt.theta[2] = np.array([[0.5, 0.5], [0.3, 0.7]])
        return gt, sample_codes(gt, n, seed=0)

    def test_zero_sd_identifies_stage(self):
        gt, codes = self._setup()
        z = covariate_generator(gt, codes, 2, [-1.0, 2.0], sd=0.0)
        stage = np.array(gt.partitions[2].labels)[codes[:, 0] * 2 + codes[:, 1]]
        assert np.array_equal(z, np.where(stage == 0, -1.0, 2.0))

    def test_stage_means_clt(self):
        gt, codes = self._setup()
        sd = 1.5
        z = covariate_generator(gt, codes, 2, [-1.0, 2.0], sd=sd, seed=9)
        stage = np.array(gt.partitions[2].labels)[codes[:, 0] * 2 + codes[:, 1]]
        for g, mu in enumerate([-1.0, 2.0]):
            sel = z[stage == g]
            assert abs(sel.mean() - mu) < 3 * sd / np.sqrt(sel.size)

    def test_errors(self):
        gt, codes = self._setup(10)
        with pytest.raises(ValueError):
            covariate_generator(gt, codes, 2, [0.0])
        with pytest.raises(ValueError):
            covariate_generator(gt, codes, 2, [0.0, 1.0], sd=-1)


@pytest.mark.slow
def test_pipeline_recovers_staging():
    scores = []
    for seed in range(3):
        gt = random_staged_tree([2, 2, 2, 2], q=0.3, seed=seed)
        codes = sample_codes(gt, 10000, seed=seed)
        tables = count_contexts(gt.tree, codes)
        post = run_chain(gt.tree, tables, PriorSpec(), ChainConfig(2000, 500, 3, seed=seed))
        for d in gt.tree.modeled:
            if gt.tree.n_contexts(d) > 1:
                scores.append(rand_index(point_estimate(post, d), gt.partitions[d]))
    assert np.mean(scores) >= 0.9
