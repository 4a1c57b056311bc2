"""Command line driver for the staged explanation pipeline.

Commands: train, factorize, surrogate, explain, evaluate.  Exit codes:
0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import DatasetError
from .mlp import TrainingDiverged
from .pipeline import (ArtifactError, PipelineConfig, explain_features, explain_sample,
                       load_artifact, run_factorize, run_surrogate, run_train,
                       save_artifact)
from .view import layout_to_json, render_svg, render_text


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeview",
        description="Explain a fully connected classifier with a decision-tree "
                    "surrogate over activation-space factors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--artifact", required=True, help="pipeline artifact JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    add_common(sub.add_parser("train", help="train the network, extract activations"))
    add_common(sub.add_parser("factorize", help="partition neurons, fit factor predictors"))
    add_common(sub.add_parser("surrogate", help="fit the surrogate tree and evaluate"))
    add_common(sub.add_parser("evaluate", help="print the evaluation report"))

    exp = sub.add_parser("explain", help="render TreeView explanations")
    add_common(exp)
    exp.add_argument("--sample", action="append", default=[],
                     help="dataset sample id to explain (repeatable)")
    exp.add_argument("--features", default=None,
                     help="comma-separated raw feature values to explain")
    exp.add_argument("--label", default=None,
                     help="true class name for --features explanations")
    exp.add_argument("--output", required=True,
                     help="output file (single explanation) or directory")
    exp.add_argument("--format", choices=("svg", "text", "json"), default="svg")
    return parser


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _render(layout, fmt: str, cfg: PipelineConfig) -> str:
    if fmt == "svg":
        return render_svg(layout, cfg.render_config())
    if fmt == "text":
        return render_text(layout)
    return json.dumps(layout_to_json(layout), sort_keys=True, indent=2) + "\n"


_EXTENSIONS = {"svg": ".svg", "text": ".txt", "json": ".json"}


def _cmd_explain(args, cfg: PipelineConfig) -> int:
    artifact = load_artifact(args.artifact)
    layouts = []
    for sid in args.sample:
        layouts.append((f"sample_{sid}", explain_sample(artifact, cfg, sid)))
    if args.features is not None:
        values = [float(v) for v in args.features.split(",")]
        label = None
        if args.label is not None:
            class_names = artifact["schema"]["class_names"]
            if args.label not in class_names:
                raise DatasetError(f"unknown class name {args.label!r}")
            label = class_names.index(args.label)
        layouts.append(("features", explain_features(artifact, cfg, values, label)))
    if not layouts:
        raise DatasetError("nothing to explain: pass --sample and/or --features")

    ext = _EXTENSIONS[args.format]
    out = Path(args.output)
    if len(layouts) == 1 and not out.is_dir():
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_render(layouts[0][1], args.format, cfg), encoding="utf-8")
        print(f"wrote {out}")
    else:
        out.mkdir(parents=True, exist_ok=True)
        for name, layout in layouts:
            target = out / f"{name}{ext}"
            target.write_text(_render(layout, args.format, cfg), encoding="utf-8")
            print(f"wrote {target}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "train":
            artifact = run_train(cfg)
            for epoch, (loss, acc) in enumerate(
                zip(artifact["train_report"]["losses"],
                    artifact["train_report"]["accuracies"]), start=1
            ):
                print(f"epoch {epoch}/{cfg.train.epochs} loss={loss:.4f} acc={acc:.4f}")
            print(f"train accuracy {artifact['train_accuracy']:.4f}")
            print(f"test accuracy {artifact['test_accuracy']:.4f}")
            save_artifact(artifact, args.artifact)
            print(f"artifact written to {args.artifact}")
        elif args.command == "factorize":
            artifact = run_factorize(load_artifact(args.artifact), cfg)
            k = artifact["factorization"]["num_factors"]
            print(f"K = {k}")
            for i in range(k):
                size = len(artifact["factorization"]["factors"][i])
                oob = artifact["predictors"][i]["oob_accuracy"]
                agree = artifact["diagnostics"]["centroid_agreement"][i]
                print(f"factor {i}: {size} neurons, oob_accuracy={oob:.4f}, "
                      f"centroid_agreement={agree:.4f}")
            save_artifact(artifact, args.artifact)
            print(f"artifact written to {args.artifact}")
        elif args.command == "surrogate":
            artifact = run_surrogate(load_artifact(args.artifact), cfg)
            ev = artifact["evaluation"]
            print(f"network accuracy {ev['network_accuracy']:.4f}")
            print(f"surrogate accuracy {ev['surrogate_accuracy']:.4f}")
            print(f"fidelity {ev['fidelity']:.4f}")
            save_artifact(artifact, args.artifact)
            print(f"artifact written to {args.artifact}")
        elif args.command == "evaluate":
            artifact = load_artifact(args.artifact)
            if "evaluation" not in artifact:
                raise ArtifactError("artifact has no evaluation; run the surrogate stage")
            print(json.dumps(artifact["evaluation"], sort_keys=True, indent=2))
        elif args.command == "explain":
            return _cmd_explain(args, cfg)
        return 0
    except (DatasetError, ArtifactError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
