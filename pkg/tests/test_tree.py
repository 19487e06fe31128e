import numpy as np
import pytest

from bayestage.independence import Statement, structural_independence_report
from bayestage.partition import Partition, bell_number, canonicalize, rand_index, set_partitions
from bayestage.tree import (
    Dataset,
    EventTree,
    TreeError,
    Variable,
    build_event_tree,
    count_contexts,
    decode_context,
    encode_context,
    encode_rows,
    read_csv,
    write_csv,
)
from oracles import recount


def binary_tree(p, modeled=None):
    vs = tuple(Variable(f"X{i}", ("0", "1")) for i in range(p))
    return EventTree(vs, tuple(modeled) if modeled is not None else tuple(range(p)))


def dataset_from_codes(tree, codes):
    return Dataset({v.name: [v.levels[x] for x in codes[:, j]] for j, v in enumerate(tree.variables)})


class TestBuild:
    def test_four_binary_last_two_modeled(self):
        rows = [(a, b, c, d) for a in "01" for b in "01" for c in "01" for d in "01"]
        ds = Dataset.from_rows(["A", "B", "C", "D"], rows)
        tree = build_event_tree(ds, ["A", "B", "C", "D"], ["C", "D"])
        assert tree.modeled == (2, 3)
        assert tree.n_contexts(2) == 4
        assert tree.n_contexts(3) == 8

    def test_single_variable_root(self):
        ds = Dataset.from_rows(["A"], [("x",), ("y",)])
        tree = build_event_tree(ds, ["A"], ["A"])
        assert tree.modeled == (0,)
        assert tree.contexts(0) == [()]
        tables = count_contexts(tree, ds)
        assert tables[0].counts.tolist() == [[1, 1]]

    def test_context_counts_mixed(self):
        tree = EventTree(
            (Variable("A", ("0", "1")), Variable("B", ("0", "1", "2")), Variable("C", ("0", "1"))), (0, 1, 2)
        )
        assert [tree.n_contexts(i) for i in range(3)] == [1, 2, 6]

    def test_level_order_first_appearance(self):
        ds = Dataset.from_rows(["A", "B"], [("y", "1"), ("x", "0")])
        tree = build_event_tree(ds, ["A", "B"], ["B"])
        assert tree.variables[0].levels == ("y", "x")
        tree = build_event_tree(ds, ["A", "B"], ["B"], levels={"B": ["0", "1"]})
        assert tree.variables[1].levels == ("0", "1")

    def test_missing_values_rejected(self):
        ds = Dataset.from_rows(["A", "B"], [("0", ""), ("1", "1"), ("0", "0")])
        with pytest.raises(TreeError):
            build_event_tree(ds, ["A", "B"], ["B"])

    def test_modeled_must_be_suffix(self):
        with pytest.raises(TreeError):
            binary_tree(3, modeled=(0, 2))

    def test_unknown_column_and_single_level(self):
        ds = Dataset.from_rows(["A", "B"], [("0", "1"), ("0", "0")])
        with pytest.raises(TreeError):
            build_event_tree(ds, ["A", "Z"], ["A"])
        with pytest.raises(TreeError):
            build_event_tree(ds, ["A", "B"], ["B"])

    def test_undeclared_level_rejected(self):
        ds = Dataset.from_rows(["A", "B"], [("0", "1"), ("1", "2")])
        tree = build_event_tree(ds, ["A", "B"], ["B"], levels={"B": ["0", "1"]})
        with pytest.raises(TreeError):
            encode_rows(tree, ds)

    def test_dict_round_trip(self):
        tree = binary_tree(3, modeled=(1, 2))
        assert EventTree.from_dict(tree.to_dict()) == tree


class TestCounts:
    def test_row_scan_example(self):
        ds = Dataset.from_rows(["A", "B"], [("0", "1"), ("0", "1"), ("0", "0")])
        tree = build_event_tree(ds, ["A", "B"], ["B"], levels={"A": ["0", "1"], "B": ["0", "1"]})
        t = count_contexts(tree, ds)[1]
        assert t.counts.tolist() == [[1, 2], [0, 0]]

    def test_empty_dataset(self):
        tree = binary_tree(3)
        ds = Dataset({f"X{i}": [] for i in range(3)})
        tables = count_contexts(tree, ds)
        assert all(t.counts.sum() == 0 for t in tables.values())
        assert tables[2].counts.shape == (4, 2)

    def test_one_row_per_cell(self):
        tree = EventTree(
            (Variable("A", ("0", "1")), Variable("B", ("0", "1", "2")), Variable("C", ("0", "1"))), (0, 1, 2)
        )
        codes = np.array(list(np.ndindex(2, 3, 2)))
        tables = count_contexts(tree, codes)
        assert np.all(tables[2].counts == 1)
        assert tables[1].counts.tolist() == [[2, 2, 2], [2, 2, 2]]
        assert tables[0].counts.tolist() == [[6, 6]]

    def test_matches_recount_and_flow(self, rng):
        cards = (2, 3, 2, 2)
        tree = EventTree(tuple(Variable(f"V{i}", tuple(map(str, range(k)))) for i, k in enumerate(cards)), (0, 1, 2, 3))
        for _ in range(10):
            codes = np.column_stack([rng.integers(0, k, size=200) for k in cards])
            tables = count_contexts(tree, codes)
            for d in range(4):
                assert np.array_equal(tables[d].counts, recount(codes, cards, d))
            for d in range(1, 4):
                parent = tables[d - 1].counts.ravel()
                assert np.array_equal(tables[d].counts.sum(axis=1), parent)

    def test_rebuild_determinism(self, rng):
        tree = binary_tree(4)
        codes = rng.integers(0, 2, size=(300, 4))
        ds = dataset_from_codes(tree, codes)
        a = count_contexts(tree, ds)
        b = count_contexts(tree, ds)
        for d in a:
            assert a[d].counts.tobytes() == b[d].counts.tobytes()

    def test_csv_round_trip(self, tmp_path, rng):
        tree = binary_tree(3)
        codes = rng.integers(0, 2, size=(20, 3))
        ds = dataset_from_codes(tree, codes)
        ds.real["Z"] = rng.standard_normal(20)
        write_csv(tmp_path / "d.csv", ds)
        back = read_csv(tmp_path / "d.csv", ["Z"])
        assert back.columns == ds.columns
        assert np.array_equal(back.real["Z"], ds.real["Z"])

    def test_csv_ragged_row(self, tmp_path):
        (tmp_path / "d.csv").write_text("A,B\n0,1\n1\n")
        with pytest.raises(TreeError):
            read_csv(tmp_path / "d.csv")


class TestEncoding:
    def test_binary_rank(self):
        assert encode_context((1, 0, 1), (2, 2, 2)) == 5

    def test_rank_zero(self):
        assert decode_context(0, (3, 2, 4)) == (0, 0, 0)
        assert decode_context(0, ()) == ()

    def test_mixed_radix(self):
        assert encode_context((1, 2), (2, 3)) == 5
        assert decode_context(5, (2, 3)) == (1, 2)

    def test_round_trip_and_order(self):
        cards = (3, 2, 4)
        tree = EventTree(tuple(Variable(f"V{i}", tuple(map(str, range(k)))) for i, k in enumerate(cards)), (2,))
        ctxs = tree.contexts(3)
        assert ctxs == sorted(ctxs)
        for r, c in enumerate(ctxs):
            assert tree.encode(c) == r
            assert tree.decode(r, 3) == c

    def test_out_of_range(self):
        with pytest.raises(TreeError):
            encode_context((2,), (2,))
        with pytest.raises(TreeError):
            decode_context(6, (2, 3))


class TestIndependence:
    def test_context_specific_example(self):
        tree = binary_tree(3)
        # depth 2 contexts (0,0),(0,1),(1,0),(1,1); the last two share a stage
        st = structural_independence_report(tree, {2: Partition([0, 1, 2, 2], 2)})
        assert Statement(2, (1,), (0,), (1,)) in st
        assert "X2 _||_ X1 | X0=1" in [s.render(tree) for s in st]
        assert not any(s.target == 2 and s.vars == (1,) and s.given_values == (0,) for s in st)

    def test_one_block_full_independence(self):
        tree = binary_tree(4)
        st = structural_independence_report(tree, {3: Partition.one_block(8, 3)})
        assert Statement(3, (0, 1, 2), ()) in st

    def test_singletons_empty(self):
        tree = binary_tree(4)
        assert structural_independence_report(tree, {d: Partition.singletons(2**d, d) for d in range(4)}) == []

    def test_symmetric_statement_by_construction(self, rng):
        tree = binary_tree(4)
        for _ in range(30):
            j = int(rng.integers(0, 3))
            keep = [k for k in range(3) if k != j]
            # labels depend only on the coordinates other than j
            base = rng.integers(0, 3, size=(2, 2))
            labels = [int(base[c[keep[0]], c[keep[1]]]) for c in tree.contexts(3)]
            st = structural_independence_report(tree, {3: Partition(labels, 3)})
            assert Statement(3, (j,), tuple(keep)) in st


class TestPartition:
    def test_canonical(self):
        assert canonicalize([2, 2, 0, 1]) == (0, 0, 1, 2)
        assert canonicalize(canonicalize([3, 1, 3])) == canonicalize([3, 1, 3])

    def test_bell(self):
        assert [bell_number(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]
        assert sum(1 for _ in set_partitions(5)) == 52

    def test_from_blocks(self):
        p = Partition.from_blocks([[1, 3], [0, 2]], 4)
        assert p.labels == (0, 1, 0, 1)
        assert p.one_based() == [1, 2, 1, 2]
        with pytest.raises(ValueError):
            Partition.from_blocks([[0]], 2)

    def test_rand_index(self):
        assert rand_index(Partition([0, 0, 1, 1]), Partition([0, 0, 1, 1])) == 1.0
        assert rand_index(Partition([0, 0, 0, 0]), Partition([0, 1, 2, 3])) == 0.0
