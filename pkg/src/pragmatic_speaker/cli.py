"""Command line entry point: ``prs <command> [--config FILE] [overrides]``.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (DEFAULT_RATIOS, ExperimentConfig, export, gain_report, lambda_sweep,
                      make_dataset, run_experiment, train_repeats, write_outputs,
                      ExperimentResult)
from .pragmatic import DisparityPolicy
from .scenes import ConfigError, DatasetParseError, load_dataset, save_dataset
from .speaker import candidates_for
from .taxonomy import TaxonomyError, load_taxonomy

log = logging.getLogger("pragmatic_speaker")

# flag -> ExperimentConfig field
OVERRIDES = {
    "seed": "seed", "pairs": "n_pairs", "hard_fraction": "hard_fraction", "mode": "mode",
    "disparity": "disparity", "lambda_l": "lambda_l", "lambda_d": "lambda_d",
    "epochs": "epochs", "batch": "batch_size", "lr": "lr_0", "lr_scale": "lr_scale",
    "patience": "patience", "decay": "decay", "repeats": "n_repeats",
}


def _common(p):
    p.add_argument("--config", type=Path, help="flat YAML file of experiment settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--hard-fraction", type=float)
    p.add_argument("--mode", choices=["word", "sentence"])
    p.add_argument("--disparity", choices=["hypernym", "limited-visual", "limited_visual"])
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--lambda-d", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-scale", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--decay", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--dataset", type=Path, help="load pairs from this file instead of generating")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="prs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("gen-data", "generate and save a scene-pair dataset"),
        ("train", "train the disparity policy n_repeats times"),
        ("eval", "evaluate S0/S1/S1d/S1nd and write accuracy.csv"),
        ("shift", "write the word-distribution shift report"),
        ("sweep", "lambda_l:lambda_d sweep, writes sweep.csv"),
        ("report", "full run: accuracy, shift, checkpoints"),
        ("candidates", "dump literal-speaker candidates for a dataset's test split as JSON"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("eval", "shift"):
            p.add_argument("--policies", type=Path,
                           help="directory holding policy_<r>.json; trained afresh if omitted")
        if name == "sweep":
            p.add_argument("--ratios", default=",".join(f"{a}:{b}" for a, b in DEFAULT_RATIOS),
                           help="comma-separated lambda_l:lambda_d ratios")
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = {field: getattr(args, flag) for flag, field in OVERRIDES.items()}
    if args.config is not None:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def parse_ratios(text):
    out = []
    for part in text.split(","):
        try:
            a, b = part.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"bad ratio {part!r}; expected e.g. 1:2") from None
    return out


def _load_policies(directory, n):
    return [DisparityPolicy.load(Path(directory) / f"policy_{r}.json") for r in range(n)]


def run(args):
    cfg = config_from_args(args)
    tax = load_taxonomy()
    dataset = load_dataset(args.dataset) if args.dataset else None
    out = args.out

    if args.command == "gen-data":
        ds = dataset or make_dataset(cfg, tax)
        out.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, out / "dataset.jsonl")
        print(f"wrote {len(ds.train)}/{len(ds.val)}/{len(ds.test)} pairs to {out / 'dataset.jsonl'}")
    elif args.command == "train":
        ds = dataset or make_dataset(cfg, tax)
        trained = train_repeats(cfg, ds, tax)
        result = ExperimentResult(None, None, [p for p, _ in trained], [h for _, h in trained], ds)
        write_outputs(result, out, outputs=("train",))
        for r, (_, h) in enumerate(trained):
            print(f"repeat {r}: best val accuracy {max([h.initial_val_accuracy] + h.val_accuracy):.4f} "
                  f"at epoch {h.best_epoch}")
    elif args.command in ("eval", "shift", "report"):
        policies = None
        if getattr(args, "policies", None) is not None:
            policies = _load_policies(args.policies, cfg.n_repeats)
        outputs = {"eval": ("accuracy",), "shift": ("shift",),
                   "report": ("accuracy", "shift", "train")}[args.command]
        result = run_experiment(cfg, out, dataset=dataset, policies=policies, tax=tax,
                                outputs=outputs)
        if args.command in ("eval", "report"):
            for row in result.accuracy.rows():
                print(f"{row['speaker']:5s} {row['slice']:9s} {row['mean']:.4f} +- {row['std']:.4f}")
        if args.command in ("shift", "report"):
            for sp in ("S1", "S1d"):
                aggs = ", ".join(f"{k}={result.shift.mean(sp, k):.3f}" for k in result.shift.aggregates)
                print(f"{sp:5s} {aggs}")
    elif args.command == "sweep":
        report = lambda_sweep(cfg, parse_ratios(args.ratios), out, dataset=dataset, tax=tax)
        for row in report.rows():
            print(f"{row['lambda_l']:g}:{row['lambda_d']:g}  {row['mean']:.4f} +- {row['std']:.4f}")
    elif args.command == "candidates":
        ds = dataset or make_dataset(cfg, tax)
        dump = [{"pair": p.id, "target": p.target_scene.tokens(),
                 "candidates": [u.surface for u in candidates_for(p.target_scene, tax, cfg.mode)]}
                for p in ds.test]
        out.mkdir(parents=True, exist_ok=True)
        (out / "candidates.json").write_text(json.dumps(dump, indent=2) + "\n")
        print(f"wrote {len(dump)} candidate lists to {out / 'candidates.json'}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ConfigError, DatasetParseError, TaxonomyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
