"""Command line entry point: ``scengan {synth,train,generate,eval}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_dataset, load_manifest, read_scenarios, write_dataset, write_scenarios
from .evaluation import (classifier_accuracy, classifier_for, correlation_distance,
                         generator_stats, mode_purity, pearson_matrix)
from .sghmc import NumericalError
from .synth import FAMILIES, default_group_corrs, make_family
from .trainer import TrainingConfig, build_nets, generate, init_run, train

log = logging.getLogger("scengan")

EXIT_USAGE = 2
EXIT_NUMERIC = 3

RUN_KEYS = {"dataset", "training", "nets", "output_dir", "workers"}
NET_DEFAULTS = {"gen_hidden": [64, 128], "disc_hidden": [128, 64], "slope": 0.2}


class UsageError(Exception):
    pass


# -- run configuration -------------------------------------------------------

def load_run_config(path, seed=None, out=None) -> dict:
    """Read a run config and materialise every default.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(raw) - RUN_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if "dataset" not in raw or "manifest" not in raw["dataset"]:
        raise UsageError("config needs dataset.manifest")
    if set(raw["dataset"]) - {"manifest"}:
        raise UsageError(f"unknown dataset keys: {sorted(set(raw['dataset']) - {'manifest'})}")
    nets = dict(NET_DEFAULTS)
    extra_nets = set(raw.get("nets", {})) - set(NET_DEFAULTS)
    if extra_nets:
        raise UsageError(f"unknown nets keys: {sorted(extra_nets)}")
    nets.update(raw.get("nets", {}))
    training = dict(raw.get("training", {}))
    if seed is not None:
        training["seed"] = seed
    try:
        tc = TrainingConfig.from_dict(training)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from None
    base = path.parent
    manifest = Path(raw["dataset"]["manifest"])
    if out is not None:
        out_dir = Path(out)
    else:
        out_dir = Path(raw.get("output_dir", "run"))
        out_dir = out_dir if out_dir.is_absolute() else (base / out_dir).resolve()
    return {
        "dataset": {"manifest": str(manifest if manifest.is_absolute() else (base / manifest).resolve())},
        "training": tc.to_dict(),
        "nets": {"gen_hidden": list(nets["gen_hidden"]), "disc_hidden": list(nets["disc_hidden"]),
                 "slope": float(nets["slope"])},
        "output_dir": str(out_dir),
        "workers": int(raw.get("workers", 1)),
    }


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"unknown family {args.family!r}")
    if args.samples < 2 or args.timesteps < 8 or args.capacity <= 0:
        raise UsageError("need samples >= 2, timesteps >= 8 and capacity > 0")
    n_sites = args.sites if args.family == "spatiotemporal" else 1
    rng = np.random.default_rng(args.seed)
    batch = make_family(args.family, args.samples, rng, args.timesteps, n_sites=max(n_sites, 1))
    batch.site_ids = tuple(f"site{k + 1}" for k in range(batch.n_sites))
    extra = {}
    if args.family == "spatiotemporal":
        a, b = default_group_corrs(n_sites)
        extra["group_corrs"] = {"group1": a.tolist(), "group2": b.tolist()}
    out = Path(args.out)
    write_dataset(batch, out, capacity_mw=args.capacity, extra_manifest=extra)
    counts = {str(k): int(v) for k, v in zip(*np.unique(batch.labels, return_counts=True))}
    print(f"wrote {batch.n_samples} samples ({counts}) to {out}")
    return 0


def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train needs --config")
    run = load_run_config(args.config, seed=args.seed, out=args.out)
    cfg = TrainingConfig.from_dict(run["training"])
    data = load_dataset(run["dataset"]["manifest"])
    out = Path(run["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")

    nets = build_nets(cfg, data.n_sites * data.timesteps, tuple(run["nets"]["gen_hidden"]),
                      tuple(run["nets"]["disc_hidden"]), run["nets"]["slope"])
    meta = {"site_ids": list(data.site_ids), "capacity_mw": list(data.capacity_mw)}
    ckpt = out / "checkpoint.json"
    ensemble, state = init_run(cfg, data, nets)
    save_checkpoint(ensemble, state, cfg, ckpt, meta)
    log_path = out / "train_log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", *(f"L_G[{j}]" for j in range(cfg.j_particles)), "L_D", "V"])

        def on_event(event, ensemble, state):
            if event != "eval":
                return
            r = state.loss_history[-1]
            row = [state.epoch, *(repr(v) for v in r.l_g_particles), repr(r.l_d), repr(r.value_v)]
            writer.writerow(row)
            fh.flush()
            print(", ".join(str(v) for v in row))
            save_checkpoint(ensemble, state, cfg, ckpt, meta)

        try:
            ensemble, state = train(cfg, data, resume=(ensemble, state), callback=on_event,
                                    workers=run["workers"])
        except NumericalError as exc:
            print(f"numerical failure: {exc}; last good checkpoint kept at {ckpt}", file=sys.stderr)
            return EXIT_NUMERIC
    save_checkpoint(ensemble, state, cfg, ckpt, meta)
    print(f"finished at epoch {state.epoch} (running N = {state.running_n}); checkpoint {ckpt}")
    return 0


def cmd_generate(args) -> int:
    if not args.checkpoint:
        raise UsageError("generate needs --checkpoint")
    ensemble, _, cfg, meta = load_checkpoint(args.checkpoint)
    J = len(ensemble.generators)
    if args.generator == "all":
        indices = list(range(J))
    else:
        try:
            indices = [int(args.generator)]
        except ValueError:
            raise UsageError(f"bad generator index {args.generator!r}") from None
        if not 0 <= indices[0] < J:
            raise UsageError(f"generator index {indices[0]} out of range 0..{J - 1}")
    if args.count < 1:
        raise UsageError("count must be >= 1")
    seed = args.seed if args.seed is not None else cfg.seed
    site_ids = tuple(meta.get("site_ids") or ())
    batches = {}
    for j in indices:
        b = generate(ensemble, j, args.count, np.random.default_rng([seed, j]))
        if site_ids:
            b.site_ids = site_ids
        batches[j] = b
    capacity = None
    if args.mw:
        capacity = meta.get("capacity_mw")
        if not capacity:
            raise UsageError("checkpoint carries no site capacities for --mw")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scenarios(out / "scenarios.csv", batches, capacity)
    print(f"wrote {args.count} scenarios x {len(indices)} generator(s) to {out / 'scenarios.csv'}")
    return 0


def _load_groups(path) -> dict:
    """Scenario CSV -> {generator: batch}; dataset manifest -> {label: batch}."""
    path = Path(path)
    if path.suffix == ".json":
        batch = load_dataset(path)
        if batch.labels is None:
            return {"all": batch}
        return {str(lab): batch.subset(batch.labels == lab) for lab in sorted(set(batch.labels))}
    return read_scenarios(path)


def _matrix_json(c: np.ndarray):
    return [[None if math.isnan(v) else float(v) for v in row] for row in c]


def cmd_eval(args) -> int:
    if not args.scenarios or not args.reference:
        raise UsageError("eval needs --scenarios and --reference")
    manifest = load_manifest(args.reference)
    reference = load_dataset(args.reference)
    groups = {}
    for p in args.scenarios:
        for name, b in _load_groups(p).items():
            groups[name if len(args.scenarios) == 1 else f"{Path(p).stem}:{name}"] = b
    for name, b in groups.items():
        if (b.n_sites, b.timesteps) != (reference.n_sites, reference.timesteps):
            raise UsageError(f"{name}: shape {(b.n_sites, b.timesteps)} does not match reference "
                             f"{(reference.n_sites, reference.timesteps)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"mode": args.mode, "reference": str(args.reference), "n_scenarios": {k: b.n_samples for k, b in groups.items()}}

    if args.mode == "purity":
        group_corrs = manifest.get("group_corrs")
        clf = classifier_for(reference.family, reference.timesteps,
                             {k: np.array(v) for k, v in group_corrs.items()} if group_corrs else None)
        acc = classifier_accuracy(reference, clf) if reference.labels is not None else None
        report["classifier_accuracy"] = acc
        report["purity"] = {}
        rows = []
        for name, b in groups.items():
            r = mode_purity(b, clf)
            report["purity"][name] = {"counts": r.counts, "dominant_mode": r.dominant_mode,
                                      "purity": float(r.purity)}
            rows.append((name, r.dominant_mode, float(r.purity), r.counts))
        with open(out / "Fig3_profiles.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "scenario", *(f"t{k}" for k in range(reference.timesteps))])
            for name, b in groups.items():
                for s in range(min(10, b.n_samples)):
                    w.writerow([name, s, *(format(v, ".9g") for v in b.samples[s, 0])])
        plotting.plot_profiles(groups, out / "Fig3_profiles.png")
        if acc is not None:
            print(f"classifier accuracy on reference: {acc:.4f}")
        print(f"{'group':>12} {'dominant':>10} {'purity':>8}  counts")
        for name, dom, pur, counts in rows:
            print(f"{name:>12} {dom:>10} {pur:>8.4f}  {counts}")

    elif args.mode == "corr":
        if reference.n_sites < 2:
            raise UsageError("corr mode needs multi-site data")
        ref_groups = ({str(l): reference.subset(reference.labels == l) for l in sorted(set(reference.labels))}
                      if reference.labels is not None else {"reference": reference})
        ref_mats = {f"ref:{k}": pearson_matrix(b) for k, b in ref_groups.items()}
        gen_mats = {k: pearson_matrix(b) for k, b in groups.items()}
        dist = {g: {r: correlation_distance(gm, rm) for r, rm in ref_mats.items()} for g, gm in gen_mats.items()}
        report["correlation"] = {k: _matrix_json(v) for k, v in {**ref_mats, **gen_mats}.items()}
        report["distance"] = dist
        with open(out / "Fig4_corr.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["matrix", "site_i", "site_j", "rho"])
            for name, c in {**ref_mats, **gen_mats}.items():
                for i in range(c.shape[0]):
                    for j in range(c.shape[1]):
                        w.writerow([name, i, j, "nan" if math.isnan(c[i, j]) else repr(float(c[i, j]))])
        plotting.plot_correlations({**ref_mats, **gen_mats}, out / "Fig4_corr.png")
        refs = list(ref_mats)
        print(f"{'group':>12} " + " ".join(f"{r:>14}" for r in refs))
        for g in gen_mats:
            print(f"{g:>12} " + " ".join(f"{dist[g][r]:>14.6f}" for r in refs))

    elif args.mode == "stats":
        stats = {k: generator_stats(b) for k, b in groups.items()}
        report["stats"] = {}
        with open(out / "Fig5_stats.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "quantity", "q1", "median", "q3", "whisker_lo", "whisker_hi"])
            for name, s in stats.items():
                report["stats"][name] = {}
                for q, box in (("mean", s.mean_box), ("variance", s.variance_box)):
                    vals = [box.q1, box.median, box.q3, box.whisker_lo, box.whisker_hi]
                    w.writerow([name, q, *(repr(v) for v in vals)])
                    report["stats"][name][q] = dict(zip(("q1", "median", "q3", "whisker_lo", "whisker_hi"), vals))
        plotting.plot_stats(stats, out / "Fig5_stats.png")
        print(f"{'group':>12} {'mean q1':>9} {'median':>9} {'q3':>9} {'var median':>11}")
        for name, s in stats.items():
            b = s.mean_box
            print(f"{name:>12} {b.q1:>9.4f} {b.median:>9.4f} {b.q3:>9.4f} {s.variance_box.median:>11.5f}")
    else:
        raise UsageError(f"unknown eval mode {args.mode!r}")

    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


# -- argument parsing --------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed (overrides config)")
    p.add_argument("--config", default=d, help="run configuration (JSON)")
    p.add_argument("--out", default=d, help="output directory (default: config output_dir or ./out)")
    p.add_argument("--mw", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="write generated scenarios in MW")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scengan", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic multimodal dataset")
    _global_flags(p, suppress=True)
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--timesteps", type=int, default=24)
    p.add_argument("--sites", type=int, default=4, help="sites (spatiotemporal family only)")
    p.add_argument("--capacity", type=float, default=16.0, help="site capacity in MW")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a generator ensemble")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample scenarios from a checkpoint")
    _global_flags(p, suppress=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--generator", default="all", help="particle index or 'all'")
    p.add_argument("--count", type=int, default=100)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generated scenarios against a dataset")
    _global_flags(p, suppress=True)
    p.add_argument("--mode", required=True, choices=("purity", "corr", "stats"))
    p.add_argument("--scenarios", nargs="+", required=True,
                   help="scenario CSV(s) or a dataset manifest")
    p.add_argument("--reference", required=True, help="reference dataset manifest")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth" and args.seed is None:
        args.seed = 0
    if args.command != "train" and args.out is None:
        args.out = "out"
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, IndexError) as exc:
        print(f"scengan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"scengan {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
