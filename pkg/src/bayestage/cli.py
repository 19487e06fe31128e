"""Command-line interface: ``bayestage fit | simulate | report``.

Exit codes: 0 success, 2 invalid configuration or data, 3 I/O failure,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .causal import CausalQuery, PositivityWarning, covariate_marginal, effect_posterior
from .config import NumericError, RunConfig, ValidationError
from .independence import structural_independence_report
from .partition import Partition
from .priors import covariate_dissimilarity
from .sampler import run_chain
from .simulate import GeneratingTree, covariate_generator, effects_json, random_staged_tree, sample_codes
from .summaries import (
    ExpectedLoss,
    coclustering,
    credible_ball,
    dissimilarity_csv,
    point_estimate,
    staged_tree_dot,
)
from .tree import Dataset, TreeError, build_event_tree, count_contexts, read_csv, write_csv

log = logging.getLogger("bayestage")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST_SCHEMA = "bayestage.manifest/1"
POINT_SCHEMA = "bayestage.point_estimate/1"
BALL_SCHEMA = "bayestage.credible_ball/1"


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, files: Sequence[str], seed: int, config_hash: str, command: str) -> None:
    _dump(
        out / "manifest.json",
        {
            "schema": MANIFEST_SCHEMA,
            "command": command,
            "version": __version__,
            "seed": seed,
            "config_hash": config_hash,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "files": {f: _sha(out / f) for f in sorted(files)},
        },
    )


# fit


def cmd_fit(cfg: RunConfig) -> Dict[str, Path]:
    """Fit, summarize and write every artifact into ``cfg.out``; returns name -> path."""
    cfg.validate()
    dataset = read_csv(cfg.data, cfg.covariates)
    tree = build_event_tree(dataset, cfg.ordering, cfg.modeled, cfg.levels or None)
    tables = count_contexts(tree, dataset)
    spec = cfg.prior_spec()
    delta = None
    if cfg.covariates:
        delta = covariate_dissimilarity(tree, dataset, cfg.covariates, spec.nig)
        if not all(np.all(np.isfinite(m)) for ms in delta.values() for m in ms):
            raise NumericError("covariate dissimilarities are not finite")
    query = None
    if cfg.treatment is not None:
        query = CausalQuery.from_names(tree, cfg.treatment, cfg.outcome, cfg.treated_level, cfg.outcome_level)
        tv, yv = tree.variables[query.treatment], tree.variables[query.outcome]
        log.info("treated: %s=%s, event: %s=%s", tv.name, tv.levels[query.treated_level], yv.name, yv.levels[query.outcome_level])

    log.info("sampling %d depths, %d iterations each", len(tables), cfg.iterations)
    samples = run_chain(tree, tables, spec, cfg.chain_config(), delta, cfg.workers, cfg.backend)
    samples.config_hash = cfg.digest()

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}

    def put(name, text):
        (out / name).write_text(text)
        written[name] = out / name

    put("config.json", cfg.dumps())
    put("samples.txt", samples.to_text())
    put("samples.json", json.dumps(samples.to_json(), sort_keys=True) + "\n")

    estimates: Dict[int, Partition] = {}
    point = {"schema": POINT_SCHEMA, "loss": cfg.loss, "tree": tree.to_dict(), "depths": {}}
    balls = {"schema": BALL_SCHEMA, "depths": {}}
    for depth in samples.depths:
        ctx_labels = [tree.context_label(depth, c) for c in tree.contexts(depth)]
        put(f"dissimilarity_{tree.names[depth]}.csv", dissimilarity_csv(coclustering(samples, depth), ctx_labels))
        pe = point_estimate(samples, depth, cfg.loss, cfg.restarts, cfg.seed)
        estimates[depth] = pe
        el = ExpectedLoss(samples.samples[depth], cfg.loss)
        point["depths"][tree.names[depth]] = {
            "depth": depth,
            "contexts": ctx_labels,
            "stages": pe.one_based(),
            "n_stages": pe.n_blocks,
            "expected_loss": el(pe),
            "acceptance_rate": samples.acceptance.get(depth),
        }
        balls["depths"][tree.names[depth]] = credible_ball(samples, depth, pe, cfg.loss, cfg.level).to_json()
    point["independence"] = [s.render(tree) for s in structural_independence_report(tree, estimates)]
    put("point_estimate.json", json.dumps(point, indent=2, sort_keys=True) + "\n")
    put("credible_ball.json", json.dumps(balls, indent=2, sort_keys=True) + "\n")
    put("staged_tree.dot", staged_tree_dot(tree, estimates))

    if query is not None:
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always", PositivityWarning)
            pz = covariate_marginal(count_contexts(tree, dataset, [query.treatment])[query.treatment])
            ep = effect_posterior(samples, tables, query, tree, cfg.a, pz, cfg.theta_mode, cfg.seed)
        for g in ep.warnings:
            log.warning("positivity: no observations in context %s", g)
        if not (np.all(np.isfinite(ep.ate)) and np.all(np.isfinite(ep.cate))):
            raise NumericError("non-finite effect draws")
        put("effects.json", json.dumps(ep.summary(cfg.level), indent=2, sort_keys=True) + "\n")
        if cfg.write_draws:
            put("effects_draws.csv", ep.draws_csv())

    _write_manifest(out, list(written), cfg.seed, cfg.digest(), "fit")
    written["manifest.json"] = out / "manifest.json"
    return written


# simulate


def _int_list(text: str) -> List[int]:
    """``"500,1000"`` or ``"0-24"`` (inclusive range) or a mix."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValidationError(f"empty integer list {text!r}")
    return out


def cmd_simulate(args) -> List[Path]:
    """Write ``data.csv``, ``generating_tree.json`` and ``truth.json`` per (n, seed)."""
    if args.tree:
        gt = GeneratingTree.load(args.tree)
    elif args.cards:
        cards = _int_list(args.cards)
        modeled = None
        if args.modeled is not None:
            modeled = tuple(range(len(cards) - args.modeled, len(cards)))
        gt = random_staged_tree(cards, args.q, args.scheme, args.tree_seed, modeled=modeled)
    else:
        raise ValidationError("give --tree or --cards")
    tree = gt.tree
    treatment = args.treatment or tree.names[-2]
    outcome = args.outcome or tree.names[-1]
    query = None
    if args.treatment or args.outcome:
        query = CausalQuery.from_names(tree, treatment, outcome)
    elif tree.p >= 1 and tree.cardinalities[-2:] == (2, 2):
        query = CausalQuery.from_names(tree, treatment, outcome)
    sizes = _int_list(args.n)
    seeds = _int_list(args.seeds)
    if min(sizes) < 1:
        raise ValidationError("sample sizes must be positive")
    means = [float(x) for x in args.covariate_means.split(",")] if args.covariate_means else None
    if means is not None and args.covariate_depth is None:
        raise ValidationError("--covariate-means needs --covariate-depth")

    base = Path(args.out)
    dirs = []
    for n in sizes:
        for seed in seeds:
            d = base if len(sizes) * len(seeds) == 1 else base / f"n{n}_seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            codes = sample_codes(gt, n, seed)
            cols = {v.name: [v.levels[x] for x in codes[:, j]] for j, v in enumerate(tree.variables)}
            real = {}
            if means is not None:
                real["Z"] = covariate_generator(
                    gt, codes, args.covariate_depth, means, args.covariate_sd, np.random.SeedSequence([seed, 1])
                )
            write_csv(d / "data.csv", Dataset(cols, real))
            (d / "generating_tree.json").write_text(gt.dumps())
            sidecar = RunConfig(
                data="data.csv",
                ordering=tree.names,
                modeled=[tree.names[i] for i in tree.modeled],
                treatment=treatment if query is not None else None,
                outcome=outcome if query is not None else None,
                covariates=["Z"] if means is not None else [],
                levels={v.name: list(v.levels) for v in tree.variables},
                seed=seed,
            )
            (d / "config.json").write_text(sidecar.dumps())
            files = ["data.csv", "generating_tree.json", "config.json"]
            if query is not None:
                _dump(d / "truth.json", effects_json(gt, query))
                files.append("truth.json")
            digest = hashlib.sha256(gt.dumps().encode()).hexdigest()[:16]
            _write_manifest(d, files, seed, digest, "simulate")
            dirs.append(d)
    return dirs


# report


def _table(header, rows) -> List[str]:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]

    def fmt(cells):
        return "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))

    return [fmt(header), *(fmt(r) for r in rows)]


EFFECT_COLUMNS = ("mean", "sd", "ci_low", "ci_high", "p_pos", "p_zero", "p_neg")


def cmd_report(directory) -> str:
    d = Path(directory)
    point_path = d / "point_estimate.json"
    if not point_path.exists():
        raise FileNotFoundError(f"{point_path} not found; run `bayestage fit` first")
    point = json.loads(point_path.read_text())
    lines = [f"Point estimate ({point['loss']} loss)"]
    for name, entry in point["depths"].items():
        lines.append(f"  {name}: {entry['n_stages']} stages over {len(entry['stages'])} contexts, "
                     f"expected loss {entry['expected_loss']:.4f}")
        for ctx, g in zip(entry["contexts"], entry["stages"]):
            lines.append(f"    [{g}] {ctx}")
    lines.append("")
    lines.append("Structural independences")
    stmts = point.get("independence", []) or ["(none)"]
    lines.extend(f"  {s}" for s in stmts)

    eff_path = d / "effects.json"
    if eff_path.exists():
        eff = json.loads(eff_path.read_text())
        lines.append("")
        lines.append(f"Effect of {eff['treatment']} on {eff['outcome']} ({eff['draws']} draws, level {eff['level']})")
        lines.extend(_table(("", *EFFECT_COLUMNS), [("ATE", *(f"{eff['ate'][c]:.4f}" for c in EFFECT_COLUMNS))]))
        lines.append("")
        lines.append("CATE by profile")
        rows = [(r["profile"], f"{r['p_z']:.4f}", *(f"{r[c]:.4f}" for c in EFFECT_COLUMNS)) for r in eff["cate"]]
        lines.extend(_table(("profile", "p_z", *EFFECT_COLUMNS), rows))
        for g in eff.get("positivity_warnings", []):
            lines.append(f"warning: no observations in context {g}")
    return "\n".join(lines) + "\n"


# argument parsing


def _csv_names(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _fit_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.config and cfg.data and not Path(cfg.data).is_absolute():
        # relative data paths in a config file are relative to that file
        cfg.data = str(Path(args.config).parent / cfg.data)
    overrides = {
        "data": args.data,
        "ordering": _csv_names(args.ordering) if args.ordering else None,
        "modeled": _csv_names(args.modeled) if args.modeled else None,
        "treatment": args.treatment,
        "outcome": args.outcome,
        "treated_level": args.treated_level,
        "outcome_level": args.outcome_level,
        "covariates": _csv_names(args.covariates) if args.covariates else None,
        "lambdas": [float(x) for x in _csv_names(args.lambdas)] if args.lambdas else None,
        "kappa": args.kappa,
        "xi": args.xi,
        "a": args.a,
        "iterations": args.iterations,
        "burn_in": args.burn_in,
        "thin": args.thin,
        "seed": args.seed,
        "init": args.init,
        "loss": args.loss,
        "level": args.level,
        "restarts": args.restarts,
        "theta_mode": args.theta_mode,
        "out": args.out,
        "workers": args.workers,
        "backend": args.backend,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.write_draws:
        cfg.write_draws = True
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayestage", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="learn stagings and effects from a CSV")
    f.add_argument("--config", help="JSON run configuration; flags below override it")
    f.add_argument("--data")
    f.add_argument("--ordering", help="comma-separated column order")
    f.add_argument("--modeled", help="comma-separated variables whose stages are learned")
    f.add_argument("--treatment")
    f.add_argument("--outcome")
    f.add_argument("--treated-level")
    f.add_argument("--outcome-level")
    f.add_argument("--covariates", help="comma-separated real-valued columns")
    f.add_argument("--lambdas", help="comma-separated covariate weights")
    f.add_argument("--kappa", type=float)
    f.add_argument("--xi", type=float)
    f.add_argument("--a", type=float)
    f.add_argument("--iterations", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--init", choices=("singletons", "one_block"))
    f.add_argument("--loss", choices=("VI", "Binder"))
    f.add_argument("--level", type=float)
    f.add_argument("--restarts", type=int)
    f.add_argument("--theta-mode", choices=("mean", "draw"))
    f.add_argument("--write-draws", action="store_true")
    f.add_argument("--out")
    f.add_argument("--workers", type=int, help="max processes for depth chains")
    f.add_argument("--backend", choices=sorted(kernels.BACKENDS))

    s = sub.add_parser("simulate", help="sample datasets from a generating tree")
    s.add_argument("--tree", help="generating tree description (JSON)")
    s.add_argument("--cards", help="comma-separated cardinalities for a random tree")
    s.add_argument("--q", type=float, default=0.0, help="stage merge probability")
    s.add_argument("--scheme", choices=("exp", "unif"), default="exp")
    s.add_argument("--tree-seed", type=int, default=0)
    s.add_argument("--modeled", type=int, help="number of trailing variables marked as modeled")
    s.add_argument("--n", default="1000", help="sample sizes, e.g. 500,1000,5000")
    s.add_argument("--seeds", default="0", help="seeds, e.g. 0-24")
    s.add_argument("--treatment")
    s.add_argument("--outcome")
    s.add_argument("--covariate-depth", type=int)
    s.add_argument("--covariate-means")
    s.add_argument("--covariate-sd", type=float, default=1.0)
    s.add_argument("--out", required=True)

    r = sub.add_parser("report", help="print a summary of fitted artifacts")
    r.add_argument("directory")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        with np.errstate(invalid="raise", divide="ignore"):
            if args.command == "fit":
                written = cmd_fit(_fit_config(args))
                print(f"wrote {len(written)} files to {written['manifest.json'].parent}")
            elif args.command == "simulate":
                dirs = cmd_simulate(args)
                print(f"wrote {len(dirs)} replicate(s) under {args.out}")
            else:
                sys.stdout.write(cmd_report(args.directory))
    except (NumericError, FloatingPointError, ArithmeticError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, TreeError, ValueError, KeyError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
