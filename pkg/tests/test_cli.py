import json
import re

import numpy as np
import pytest

from bayestage import cli
from bayestage.causal import CausalQuery, effect_posterior
from bayestage.config import NumericError, RunConfig, ValidationError
from bayestage.sampler import PosteriorSampleSet
from bayestage.simulate import GeneratingTree, exact_effects
from bayestage.tree import ContextTable, EventTree, Variable

FAST = ["--iterations", "600", "--burn-in", "100", "--thin", "2"]


def simulate(tmp_path, *extra):
    out = tmp_path / "sim"
    code = cli.main(["simulate", "--cards", "2,2,2,2,2", "--q", "0", "--tree-seed", "3", "--modeled", "2", "--n", "300", "--seeds", "1",
                     "--out", str(out), *extra])
    assert code == 0
    return out


def fit(sim, out, *extra):
    return cli.main(["fit", "--config", str(sim / "config.json"), "--out", str(out), *FAST, *extra])


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig(data="d.csv", ordering=["A", "B"], covariates=["Z"], lambdas=[0.5], levels={"A": ["0", "1"]}, seed=4)
        assert RunConfig.from_json(json.loads(cfg.dumps())) == cfg

    def test_unknown_key_and_schema(self):
        with pytest.raises(ValidationError):
            RunConfig.from_json({"data": "x", "iters": 5})
        with pytest.raises(ValidationError):
            RunConfig.from_json({"schema": "other/2"})

    def test_defaults_filled(self):
        cfg = RunConfig(data="d.csv", ordering=["A", "B", "C"], covariates=["Z"]).validate()
        assert cfg.modeled == ["B", "C"] and cfg.lambdas == [1.0]

    @pytest.mark.parametrize(
        "kw",
        [
            dict(data=""),
            dict(ordering=["A", "A"]),
            dict(modeled=["Q"]),
            dict(treatment="A"),
            dict(treatment="Q", outcome="B"),
            dict(loss="L1"),
            dict(level=0),
            dict(kappa=-1),
            dict(iterations=10, burn_in=20),
            dict(covariates=["Z"], lambdas=[1.0, 2.0]),
        ],
    )
    def test_invalid(self, kw):
        args = dict(data="d.csv", ordering=["A", "B"])
        args.update(kw)
        with pytest.raises(ValidationError):
            RunConfig(**args).validate()

    def test_digest_ignores_plumbing(self):
        a = RunConfig(data="d", ordering=["A"], out="x", workers=1)
        b = RunConfig(data="d", ordering=["A"], out="y", workers=4)
        assert a.digest() == b.digest()
        assert a.digest() != RunConfig(data="d", ordering=["A"], seed=1).digest()


class TestSimulate:
    def test_files_and_truth(self, tmp_path):
        sim = simulate(tmp_path)
        assert {p.name for p in sim.iterdir()} == {"data.csv", "generating_tree.json", "config.json", "truth.json", "manifest.json"}
        gt = GeneratingTree.load(sim / "generating_tree.json")
        truth = json.loads((sim / "truth.json").read_text())
        assert truth["ate"] == exact_effects(gt, CausalQuery(3, 4))["ate"]
        assert (sim / "data.csv").read_text().count("\n") == 301
        man = json.loads((sim / "manifest.json").read_text())
        assert set(man["files"]) == {"data.csv", "generating_tree.json", "config.json", "truth.json"}

    def test_fixed_seed_identical(self, tmp_path):
        a = simulate(tmp_path / "a")
        b = simulate(tmp_path / "b")
        for name in ("data.csv", "generating_tree.json", "truth.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_sweep_directories(self, tmp_path):
        out = tmp_path / "sweep"
        assert cli.main(["simulate", "--cards", "2,2,2", "--n", "50,100", "--seeds", "0-1", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["n100_seed0", "n100_seed1", "n50_seed0", "n50_seed1"]

    def test_tree_file_and_covariate(self, tmp_path):
        sim = simulate(tmp_path)
        gt = GeneratingTree.load(sim / "generating_tree.json")
        means = ",".join(str(float(g)) for g in range(gt.partitions[3].n_blocks))
        out = tmp_path / "cov"
        code = cli.main(["simulate", "--tree", str(sim / "generating_tree.json"), "--n", "200", "--out", str(out),
                         "--covariate-depth", "3", f"--covariate-means={means}", "--covariate-sd", "0.5"])
        assert code == 0
        assert (out / "data.csv").read_text().splitlines()[0].endswith(",Z")
        wrong = means + ",9.0"
        assert cli.main(["simulate", "--tree", str(sim / "generating_tree.json"), "--out", str(out),
                         "--covariate-depth", "3", f"--covariate-means={wrong}"]) == 2

    def test_bad_inputs(self, tmp_path):
        assert cli.main(["simulate", "--out", str(tmp_path / "x")]) == 2
        assert cli.main(["simulate", "--tree", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 3


class TestFit:
    def test_outputs_and_determinism(self, tmp_path):
        sim = simulate(tmp_path)
        assert fit(sim, tmp_path / "r1") == 0
        assert fit(sim, tmp_path / "r2", "--workers", "2") == 0
        r1, r2 = tmp_path / "r1", tmp_path / "r2"
        names = {p.name for p in r1.iterdir()}
        assert {"samples.txt", "samples.json", "point_estimate.json", "credible_ball.json", "staged_tree.dot",
                "effects.json", "manifest.json", "config.json"} <= names
        assert {f"dissimilarity_X{i}.csv" for i in (3, 4)} <= names
        for name in names - {"manifest.json", "config.json"}:
            assert (r1 / name).read_bytes() == (r2 / name).read_bytes(), name
        m1 = json.loads((r1 / "manifest.json").read_text())
        m2 = json.loads((r2 / "manifest.json").read_text())
        assert m1["config_hash"] == m2["config_hash"]
        m1["files"].pop("config.json")
        m2["files"].pop("config.json")
        assert m1["files"] == m2["files"]

    def test_artifact_contents(self, tmp_path):
        sim = simulate(tmp_path)
        out = tmp_path / "r"
        assert fit(sim, out, "--write-draws") == 0
        samples = PosteriorSampleSet.from_text((out / "samples.txt").read_text())
        assert samples.n_samples == 250
        point = json.loads((out / "point_estimate.json").read_text())
        assert point["schema"] == "bayestage.point_estimate/1"
        assert sorted(point["depths"]) == ["X3", "X4"]
        eff = json.loads((out / "effects.json").read_text())
        assert eff["draws"] == 250
        assert eff["levels"] == {"treated": "1", "control": "0", "event": "1"}
        a = eff["ate"]
        assert a["p_pos"] + a["p_zero"] + a["p_neg"] == pytest.approx(1.0)
        draws = (out / "effects_draws.csv").read_text().splitlines()
        assert len(draws) == 251
        assert np.mean([float(r.split(",")[1]) for r in draws[1:]]) == pytest.approx(a["mean"], abs=1e-12)

    def test_flags_override_config(self, tmp_path):
        sim = simulate(tmp_path)
        out = tmp_path / "r"
        assert fit(sim, out, "--seed", "9", "--loss", "Binder") == 0
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["seed"] == 9 and cfg["loss"] == "Binder" and cfg["iterations"] == 600

    def test_dot_parse_back(self, tmp_path):
        sim = simulate(tmp_path)
        out = tmp_path / "r"
        assert fit(sim, out) == 0
        dot = (out / "staged_tree.dot").read_text()
        point = json.loads((out / "point_estimate.json").read_text())
        nodes = dict(re.findall(r'^\s+(\w+) \[fillcolor="([^"]+)", stage="\d+:\d+"', dot, re.M))
        stage_attr = dict(re.findall(r'^\s+(\w+) \[[^\]]*stage="(\d+:\d+)"', dot, re.M))
        for name, entry in point["depths"].items():
            ctxs = [tuple(int(kv.split("=")[1]) for kv in c.split(", ")) for c in entry["contexts"]]
            ids = ["n" + "_".join(map(str, c)) for c in ctxs]
            assert [int(stage_attr[i].split(":")[1]) for i in ids] == entry["stages"]
            color_of = {}
            for i, g in zip(ids, entry["stages"]):
                color_of.setdefault(g, set()).add(nodes[i])
            assert all(len(c) == 1 for c in color_of.values())
            assert len({next(iter(c)) for c in color_of.values()}) == entry["n_stages"]

    def test_exit_codes(self, tmp_path, capsys):
        sim = simulate(tmp_path)
        assert fit(sim, tmp_path / "r", "--treatment", "nope") == 2
        assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--ordering", "A,B", "--out", str(tmp_path / "r")]) == 3
        assert cli.main(["report", str(tmp_path / "nothing")]) == 3
        assert fit(sim, tmp_path / "r", "--treatment", "X2", "--outcome", "X4") == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["fit", "--config", str(bad)]) == 2
        assert "invalid input" in capsys.readouterr().err

    def test_numeric_exit(self, tmp_path, monkeypatch):
        sim = simulate(tmp_path)

        def boom(cfg):
            raise NumericError("nan in weights")

        monkeypatch.setattr(cli, "cmd_fit", boom)
        assert fit(sim, tmp_path / "r") == 4

    def test_covariate_fit(self, tmp_path):
        sim = tmp_path / "cov"
        code = cli.main(["simulate", "--cards", "2,2,2,2", "--tree-seed", "1", "--q", "0.5", "--n", "200",
                         "--out", str(sim), "--covariate-depth", "3",
                         "--covariate-means", ",".join(["0"] * self._blocks(tmp_path))])
        assert code == 0
        assert fit(sim, tmp_path / "r") == 0
        cfg = json.loads((tmp_path / "r" / "config.json").read_text())
        assert cfg["covariates"] == ["Z"] and cfg["lambdas"] == [1.0]

    @staticmethod
    def _blocks(tmp_path):
        from bayestage.simulate import random_staged_tree

        return random_staged_tree([2, 2, 2, 2], q=0.5, seed=1).partitions[3].n_blocks


class TestReport:
    def test_tables(self, tmp_path, capsys):
        sim = simulate(tmp_path)
        out = tmp_path / "r"
        assert fit(sim, out) == 0
        capsys.readouterr()
        assert cli.main(["report", str(out)]) == 0
        text = capsys.readouterr().out
        eff = json.loads((out / "effects.json").read_text())
        assert "Structural independences" in text
        header = next(l for l in text.splitlines() if l.startswith("profile"))
        assert header.split() == ["profile", "p_z", *cli.EFFECT_COLUMNS]
        assert f"{eff['ate']['mean']:.4f}" in text
        for row in eff["cate"]:
            assert row["profile"] in text

    def test_structural_zero_rows(self, tmp_path):
        tree = EventTree(tuple(Variable(n, ("0", "1")) for n in "ZTY"), (1, 2))
        tables = {1: ContextTable(1, np.array([[10, 10], [5, 5]]), 30),
                  2: ContextTable(2, np.array([[3, 7], [4, 6], [1, 4], [2, 3]]), 30)}
        post = PosteriorSampleSet({1: np.zeros((20, 2), int), 2: np.tile([0, 0, 1, 1], (20, 1))})
        ep = effect_posterior(post, tables, CausalQuery(1, 2), tree)
        (tmp_path / "effects.json").write_text(json.dumps(ep.summary()))
        (tmp_path / "point_estimate.json").write_text(json.dumps({
            "loss": "VI", "independence": [],
            "depths": {"Y": {"n_stages": 2, "stages": [1, 1, 2, 2], "contexts": ["a", "b", "c", "d"], "expected_loss": 0.0}},
        }))
        text = cli.cmd_report(tmp_path)
        rows = [l.split() for l in text.splitlines() if l.startswith("Z=")]
        assert len(rows) == 2
        assert all(r[cli.EFFECT_COLUMNS.index("p_zero") + 2] == "1.0000" for r in rows)


def test_console_script_version(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
    assert "bayestage" in capsys.readouterr().out
