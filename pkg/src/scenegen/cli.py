"""Command line entry points: train, eval, serve, generate, archetypes."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch


def _cmd_train(args):
    from .data import load_dataset, synth_dataset, synth_vocabulary
    from .scene_graph import ClassVocabulary
    from .training import TrainConfig, Trainer, save_checkpoint

    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.iterations:
        config.iterations = args.iterations
    if args.data:
        dataset = load_dataset(args.data)
        vocab = ClassVocabulary.from_file(Path(args.data) / "classes.txt")
    else:
        dataset = synth_dataset(config.seed, args.synthetic_scenes)
        vocab = synth_vocabulary()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config.to_file(out / "config.txt")
    trainer = Trainer(config, vocab, dataset)
    trainer.train(out_dir=out, log_stream=sys.stdout if args.stream else None)
    save_checkpoint(out / "checkpoint.pt", trainer)
    print(f"trained {trainer.step_count} steps -> {out / 'checkpoint.pt'}")


def _cmd_archetypes(args):
    from .archetypes import build_archetypes, embed_dataset_by_class, save_library
    from .data import load_dataset, synth_dataset, synth_vocabulary
    from .scene_graph import ClassVocabulary
    from .training import load_generator

    if args.data:
        dataset = load_dataset(args.data)
        vocab = ClassVocabulary.from_file(Path(args.data) / "classes.txt")
    else:
        dataset = synth_dataset(args.seed, args.synthetic_scenes)
        vocab = synth_vocabulary()
    nets, _ = load_generator(args.checkpoint, vocab)
    features = embed_dataset_by_class(dataset, nets.appearance_net)
    library = build_archetypes(features, k=args.k, seed=args.seed,
                               class_names=vocab.names)
    save_library(library, args.out)
    print(f"archetype library -> {args.out}")


def _cmd_eval(args):
    from .data import load_dataset
    from .metrics import (
        FeatureStats,
        SmallCropClassifier,
        diversity,
        fid,
        inception_score,
        iou,
        pooled_image_features,
        recall_at,
    )

    wanted = {m.strip() for m in args.metrics.split(",") if m.strip()}
    real = load_dataset(args.real)
    fake = load_dataset(args.fake)
    real_images = torch.from_numpy(np.stack([s.image for s in real]))
    fake_images = torch.from_numpy(np.stack([s.image for s in fake]))
    report = {}
    if "fid" in wanted:
        stats_r = FeatureStats.from_features(pooled_image_features(real_images))
        stats_f = FeatureStats.from_features(pooled_image_features(fake_images))
        report["fid"] = {"value": fid(stats_r, stats_f)}
    if "is" in wanted:
        classifier = SmallCropClassifier(num_classes=max(
            int(s.class_ids.max()) for s in real) + 1)
        crops = torch.from_numpy(np.concatenate([s.crops for s in real]))
        labels = torch.from_numpy(np.concatenate([s.class_ids for s in real]))
        classifier.fit(crops, labels, epochs=args.classifier_epochs)
        fake_crops = torch.from_numpy(np.concatenate([s.crops for s in fake]))
        mean, std = inception_score(classifier.predict_probs(fake_crops))
        report["is"] = {"mean": mean, "std": std}
    if "div" in wanted:
        pairs = [(fake_images[i], fake_images[j])
                 for i, j in zip(range(0, len(fake_images) - 1, 2),
                                 range(1, len(fake_images), 2))]
        mean, std = diversity(pairs)
        report["div"] = {"mean": mean, "std": std}
    if "iou" in wanted:
        ious = []
        for r, f in zip(real, fake):
            for k in range(min(r.num_objects, f.num_objects)):
                ious.append(iou(r.boxes[k], f.boxes[k]))
        report["iou"] = {
            "mean": float(np.mean(ious)) if ious else 0.0,
            "recall@0.5": recall_at(ious, 0.5),
            "recall@0.3": recall_at(ious, 0.3),
        }
    Path(args.out).write_text(json.dumps(report, indent=2))
    print(json.dumps(report, indent=2))


def _cmd_serve(args):
    import uvicorn

    from .generate import ScenePipeline
    from .service import create_app, default_data_dir

    pipeline = ScenePipeline.load(args.checkpoint, args.archetypes)
    data_dir = Path(args.data_dir) if args.data_dir else default_data_dir()
    app = create_app(pipeline, data_dir)
    uvicorn.run(app, host=args.host, port=args.port)


def _cmd_generate(args):
    from .generate import ScenePipeline
    from .scene_graph import parse_scene_graph

    pipeline = ScenePipeline.load(args.checkpoint, args.archetypes)
    graph = parse_scene_graph(Path(args.graph).read_text(), pipeline.vocab)
    result = pipeline.generate(graph, seed=args.seed, resolution=args.resolution)
    Path(args.out).write_bytes(result.png_bytes())
    if args.boxes_out:
        Path(args.boxes_out).write_text(json.dumps({
            "seed": result.seed,
            "boxes": [[float(v) for v in b] for b in result.boxes],
        }, indent=2))
    print(f"seed {result.seed} -> {args.out} ({result.elapsed_ms:.1f} ms)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenegen")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the full model")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--data", help="dataset directory (images/, masks/, index/)")
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=0)
    p.add_argument("--synthetic-scenes", type=int, default=50)
    p.add_argument("--stream", action="store_true", help="NDJSON metrics to stdout")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("archetypes", help="build the appearance archetype library")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synthetic-scenes", type=int, default=50)
    p.set_defaults(func=_cmd_archetypes)

    p = sub.add_parser("eval", help="compute metrics over dataset directories")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--metrics", default="is,fid,div,iou")
    p.add_argument("--out", required=True)
    p.add_argument("--classifier-epochs", type=int, default=20)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archetypes", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", help="session/import store (or $SCENEGEN_DATA_DIR)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("generate", help="offline single-shot generation")
    p.add_argument("--graph", required=True, help="scene-graph JSON file")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archetypes", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--boxes-out")
    p.set_defaults(func=_cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
