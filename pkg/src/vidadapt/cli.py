"""Command-line pipeline: synth, infer, adapt-batch, adapt-online, combine, eval.

An experiment directory (as produced by `synth`) holds frames/ with
frame_%06d.png, labels_gt/ with ground-truth label maps, catalog.txt,
weak_labels.txt, scene.json, and model.vapm with the pretrained reference
parameters. Adaptation commands write labels/ and baseline/ label maps
plus report.json into their output directory. Flags override config-file
values, which override the built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .batch import run_batch
from .combine import CombineConfig, select_models
from .config import PipelineConfig, make_config
from .errors import ConfigurationError, VidadaptError
from .evalio import (
    evaluate_video,
    frame_filename,
    load_catalog,
    load_ground_truth,
    load_label_map,
    load_video_frames,
    list_frame_files,
    refine_morphological,
    save_catalog,
    save_image,
    save_label_map,
    save_label_sequence,
    write_json,
)
from .flow import read_flo
from .labels import ClassCatalog
from .model import ModelParameters, ReferenceSegmenter, argmax_labels, load_params, save_params
from .online import run_online
from .protocol import ExternalSegmenter, ProtocolClient
from .selection import WeakLabelSet
from .synth import default_scene, generate_video, load_scene, pretrain_reference_model, save_scene


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--t-o", type=float, dest="t_o", help="object confidence threshold")
    parser.add_argument("--t-b", type=float, dest="t_b", help="background probability threshold")
    parser.add_argument("--tau-b", type=int, dest="tau_b", help="window/update period in frames")
    parser.add_argument("--tau-l", type=int, dest="tau_l", help="long-term memory capacity")
    parser.add_argument("--tau-s", type=int, dest="tau_s", help="short-term memory capacity")
    parser.add_argument("--epsilon", type=float, help="batch-to-batch transition bonus")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--weight-decay", type=float, dest="weight_decay")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--pixel-subsample", type=int, dest="pixel_subsample")
    parser.add_argument("--weak-labels", dest="weak_labels", help="comma-separated class names")
    parser.add_argument("--unsupervised", action="store_true", default=None)
    parser.add_argument("--flows", dest="flow_source", help="`builtin` or a directory of flow_%%06d.flo files")
    parser.add_argument("--morph-radius", type=int, dest="morph_radius")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--flush-tail", action="store_true", default=None, dest="flush_tail")
    parser.add_argument("--shuffle", action="store_true", default=None)
    parser.add_argument("--model-source", dest="model_source", choices=["reference", "external"])
    parser.add_argument("--external-dir", dest="external_dir")
    parser.add_argument("--external-timeout", type=float, dest="external_timeout")


_CONFIG_KEYS = (
    "t_o",
    "t_b",
    "tau_b",
    "tau_l",
    "tau_s",
    "epsilon",
    "learning_rate",
    "momentum",
    "weight_decay",
    "iterations",
    "pixel_subsample",
    "unsupervised",
    "flow_source",
    "morph_radius",
    "seed",
    "flush_tail",
    "shuffle",
    "model_source",
    "external_dir",
    "external_timeout",
)


def _config_from_args(args) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    weak = getattr(args, "weak_labels", None)
    if weak is not None:
        overrides["weak_labels"] = tuple(p.strip() for p in weak.split(",") if p.strip())
    return make_config(getattr(args, "config", None), **overrides)


def _load_model(args, input_dir: str) -> ModelParameters:
    path = getattr(args, "params", None) or os.path.join(input_dir, "model.vapm")
    if not os.path.exists(path):
        raise ConfigurationError(
            "no model parameters at %s; pass --params or run `vidadapt synth`" % path
        )
    return load_params(path)


def _make_segmenter(config: PipelineConfig, args, input_dir: str, num_classes: int):
    if config.model_source == "external":
        client = ProtocolClient(
            config.external_dir,
            num_classes=num_classes,
            timeout=config.external_timeout,
            poll_interval=config.poll_interval,
            preprocessing={
                "resize_long_side": config.resize_long_side,
                "pad_to": list(config.pad_to),
                "pad_mode": "reflect",
            },
        )
        return ExternalSegmenter(client)
    params = _load_model(args, input_dir)
    if params.num_classes != num_classes:
        raise ConfigurationError(
            "model has %d classes but catalog has %d" % (params.num_classes, num_classes)
        )
    return ReferenceSegmenter(params)


def _weak_label_set(config: PipelineConfig, catalog: ClassCatalog, input_dir: str) -> WeakLabelSet:
    if config.unsupervised:
        return WeakLabelSet(unsupervised=True)
    names = config.weak_labels
    if not names:
        path = os.path.join(input_dir, "weak_labels.txt")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                names = tuple(line.strip() for line in fh if line.strip())
    if not names:
        raise ConfigurationError(
            "no weak labels: pass --weak-labels, provide weak_labels.txt, "
            "or use --unsupervised"
        )
    return WeakLabelSet(frozenset(catalog.index_of(n) for n in names))


def _postprocess(labels: list[np.ndarray], radius: int) -> list[np.ndarray]:
    if radius <= 0:
        return labels
    return [refine_morphological(lbl, radius) for lbl in labels]


def _load_catalog_for(args, input_dir: str) -> ClassCatalog:
    path = getattr(args, "catalog", None) or os.path.join(input_dir, "catalog.txt")
    if not os.path.exists(path):
        raise ConfigurationError("no class catalog at %s" % path)
    return load_catalog(path)


def _cmd_synth(args) -> int:
    spec = load_scene(args.spec) if args.spec else default_scene()
    if args.frames:
        spec.frame_count = args.frames
    seed = args.seed if args.seed is not None else 0
    spec.validate()
    frames, gts = generate_video(spec, seed)

    out = args.out
    os.makedirs(os.path.join(out, "frames"), exist_ok=True)
    os.makedirs(os.path.join(out, "labels_gt"), exist_ok=True)
    for i, frame in enumerate(frames, start=1):
        save_image(os.path.join(out, "frames", frame_filename(i)), frame)
    for i, gt in sorted(gts.items()):
        save_label_map(os.path.join(out, "labels_gt", frame_filename(i)), gt)
    catalog = spec.catalog
    save_catalog(os.path.join(out, "catalog.txt"), catalog)
    present = sorted({o.class_id for o in spec.objects})
    with open(os.path.join(out, "weak_labels.txt"), "w", encoding="utf-8") as fh:
        fh.write("".join(catalog.names[c] + "\n" for c in present))
    save_scene(os.path.join(out, "scene.json"), spec)
    params = pretrain_reference_model(spec, seed=seed)
    save_params(params, os.path.join(out, "model.vapm"))
    print("synthesized %d frames into %s" % (len(frames), out))
    return 0


def _cmd_infer(args) -> int:
    config = _config_from_args(args)
    catalog = _load_catalog_for(args, args.input)
    _, frames = load_video_frames(os.path.join(args.input, "frames"))
    segmenter = _make_segmenter(config, args, args.input, catalog.num_classes)
    labels = [argmax_labels(v) for v in segmenter.predict_sequence(frames)]
    labels = _postprocess(labels, config.morph_radius)
    save_label_sequence(os.path.join(args.out, "labels"), labels)
    print("wrote %d label maps to %s" % (len(labels), os.path.join(args.out, "labels")))
    return 0


def _cmd_adapt_batch(args) -> int:
    config = _config_from_args(args)
    catalog = _load_catalog_for(args, args.input)
    _, frames = load_video_frames(os.path.join(args.input, "frames"))
    weak = _weak_label_set(config, catalog, args.input)
    segmenter = _make_segmenter(config, args, args.input, catalog.num_classes)
    result = run_batch(
        frames,
        segmenter,
        weak,
        config.thresholds(),
        config.train_config(),
        window_length=config.tau_b,
        flush_tail=config.flush_tail,
    )
    save_label_sequence(
        os.path.join(args.out, "labels"), _postprocess(result.labels, config.morph_radius)
    )
    save_label_sequence(
        os.path.join(args.out, "baseline"),
        _postprocess(result.baseline_labels, config.morph_radius),
    )
    write_json(os.path.join(args.out, "report.json"), result.report)
    print(
        "batch adaptation: %d dataset entries, labels in %s"
        % (len(result.dataset), os.path.join(args.out, "labels"))
    )
    return 0


def _cmd_adapt_online(args) -> int:
    config = _config_from_args(args)
    catalog = _load_catalog_for(args, args.input)
    _, frames = load_video_frames(os.path.join(args.input, "frames"))
    weak = _weak_label_set(config, catalog, args.input)
    segmenter = _make_segmenter(config, args, args.input, catalog.num_classes)
    result = run_online(
        frames,
        segmenter,
        weak,
        config.thresholds(),
        config.train_config(),
        long_capacity=config.tau_l,
        short_capacity=config.tau_s,
        update_period=config.tau_b,
    )
    save_label_sequence(
        os.path.join(args.out, "labels"), _postprocess(result.labels, config.morph_radius)
    )
    write_json(os.path.join(args.out, "report.json"), result.report)
    print(
        "online adaptation: %d updates, labels in %s"
        % (len(result.report["updates"]), os.path.join(args.out, "labels"))
    )
    return 0


def _labels_dir(path: str) -> str:
    candidate = os.path.join(path, "labels")
    return candidate if os.path.isdir(candidate) else path


def _load_label_sequence(path: str) -> list[np.ndarray]:
    files = list_frame_files(_labels_dir(path))
    if not files:
        raise ConfigurationError("no label maps found under %s" % path)
    indices = sorted(files)
    if indices[0] != 1 or indices[-1] != len(indices):
        raise ConfigurationError("label maps under %s must be numbered 1..N" % path)
    return [load_label_map(files[i]) for i in indices]


def _cmd_combine(args) -> int:
    config = _config_from_args(args)
    batch_seq = _load_label_sequence(args.batch)
    online_seq = _load_label_sequence(args.online)
    if len(batch_seq) != len(online_seq):
        raise ConfigurationError(
            "batch (%d) and online (%d) label counts differ"
            % (len(batch_seq), len(online_seq))
        )
    flows = None
    frames = None
    if config.flow_source != "builtin":
        flow_dir = config.flow_source
        flows = []
        for f in range(1, len(batch_seq)):
            path = os.path.join(flow_dir, "flow_%06d.flo" % f)
            if not os.path.exists(path):
                raise ConfigurationError("missing flow file %s for pair (%d, %d)" % (path, f, f + 1))
            flows.append(read_flo(path))
    else:
        if not args.input:
            raise ConfigurationError(
                "builtin flow estimation needs --input pointing at the frames; "
                "or pass --flows <dir> with flow_%06d.flo files"
            )
        _, frames = load_video_frames(os.path.join(args.input, "frames"))
        if len(frames) != len(batch_seq):
            raise ConfigurationError(
                "frame count %d does not match label count %d" % (len(frames), len(batch_seq))
            )
    selection, fused = select_models(
        batch_seq,
        online_seq,
        frames,
        CombineConfig(epsilon=config.epsilon, flow_source=config.flow_source),
        flows=flows,
    )
    fused = _postprocess(fused, config.morph_radius)
    save_label_sequence(os.path.join(args.out, "labels"), fused)
    write_json(
        os.path.join(args.out, "report.json"),
        {"choices": selection.names(), "objective": selection.objective},
    )
    counts = {name: selection.names().count(name) for name in ("batch", "online")}
    print("combined: %(batch)d batch / %(online)d online frames" % counts)
    return 0


def _cmd_eval(args) -> int:
    catalog = load_catalog(args.catalog)
    gt = load_ground_truth(args.gt)
    pred_files = list_frame_files(_labels_dir(args.pred))
    preds = {i: load_label_map(p) for i, p in pred_files.items()}
    report = evaluate_video(preds, gt, catalog)
    payload = report.to_dict()
    if args.out:
        write_json(args.out, payload)
    print(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidadapt",
        description="Self-adapting video semantic segmentation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic experiment directory")
    p.add_argument("--out", required=True, help="experiment directory to create")
    p.add_argument("--spec", help="scene spec JSON; default: built-in two-class scene")
    p.add_argument("--frames", type=int, help="override the spec's frame count")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("infer", help="predict label maps with the frozen model")
    p.add_argument("--input", required=True, help="experiment directory with frames/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="model parameters file (default: INPUT/model.vapm)")
    p.add_argument("--catalog", help="class catalog file (default: INPUT/catalog.txt)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("adapt-batch", help="whole-video adaptation pass")
    p.add_argument("--input", required=True, help="experiment directory with frames/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="model parameters file (default: INPUT/model.vapm)")
    p.add_argument("--catalog", help="class catalog file (default: INPUT/catalog.txt)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_adapt_batch)

    p = sub.add_parser("adapt-online", help="streaming adaptation pass")
    p.add_argument("--input", required=True, help="experiment directory with frames/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="model parameters file (default: INPUT/model.vapm)")
    p.add_argument("--catalog", help="class catalog file (default: INPUT/catalog.txt)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_adapt_online)

    p = sub.add_parser("combine", help="fuse batch and online label sequences")
    p.add_argument("--input", help="experiment dir with frames/ (for builtin flow)")
    p.add_argument("--batch", required=True, help="directory with the batch label maps")
    p.add_argument("--online", required=True, help="directory with the online label maps")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_combine)

    p = sub.add_parser("eval", help="per-class IoU against ground truth")
    p.add_argument("--pred", required=True, help="directory with predicted label maps")
    p.add_argument("--gt", required=True, help="directory with ground-truth label maps")
    p.add_argument("--catalog", required=True, help="class catalog file")
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VidadaptError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
