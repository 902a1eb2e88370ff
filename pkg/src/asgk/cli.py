"""``asgk`` command-line tool.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, pipeline, vision
from . import tensor as T
from .data import DataError, SynthSpec, load_dataset, read_pgm, save_dataset, synth_dataset, tokenize
from .metrics import evaluate_corpus
from .pipeline import ConfigError, TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("asgk")


class AlignmentError(DataError):
    pass


# -- helpers ------------------------------------------------------------------

def mask_rle(mask):
    """Row-major run lengths of a boolean mask, starting with a (possibly empty) run of False."""
    flat = np.asarray(mask, dtype=bool).ravel()
    counts, current, run = [], False, 0
    for v in flat:
        if v == current:
            run += 1
        else:
            counts.append(run)
            current, run = v, 1
    counts.append(run)
    return {"size": list(np.shape(mask)), "counts": counts}


def rle_decode(rle):
    flat, value = [], False
    for c in rle["counts"]:
        flat.extend([value] * c)
        value = not value
    return np.array(flat, dtype=bool).reshape(rle["size"])


def box_iou(a, b):
    """IoU of two inclusive (y0, x0, y1, x1) pixel boxes."""
    ih = min(a[2], b[2]) - max(a[0], b[0]) + 1
    iw = min(a[3], b[3]) - max(a[1], b[1]) + 1
    if ih <= 0 or iw <= 0:
        return 0.0
    inter = ih * iw
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)


def read_texts(path):
    """id -> text from a TSV (``id<TAB>text``) or JSONL (``id`` plus ``report`` or ``text``) file.

    JSONL records carrying a ``tags`` index list also yield labels.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    texts, tags = {}, {}
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            try:
                rec = json.loads(line)
                key, text = str(rec["id"]), rec.get("report", rec.get("text"))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{n}: {exc}") from exc
            if text is None:
                raise DataError(f"{path}:{n}: record has no report text")
            if "tags" in rec:
                tags[key] = list(rec["tags"])
        else:
            if "\t" not in line:
                raise DataError(f"{path}:{n}: expected id<TAB>text")
            key, text = line.split("\t", 1)
        if key in texts:
            raise DataError(f"{path}:{n}: duplicate id {key!r}")
        texts[key] = text
    return texts, tags


def check_alignment(candidates, references):
    only_c = sorted(set(candidates) - set(references))
    only_r = sorted(set(references) - set(candidates))
    if only_c or only_r:
        raise AlignmentError(f"id mismatch: candidates without reference {only_c}, "
                             f"references without candidate {only_r}")


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def effective_config(args, **phase_overrides):
    """TrainConfig from --config, then CLI flags on top."""
    overrides = {"seed": args.seed}
    for flag, key in (("no_internal", "use_internal"), ("no_external", "use_external"),
                      ("no_focal", "use_focal")):
        if getattr(args, flag, False):
            overrides[key] = False
    if getattr(args, "freeze_heatmap", False):
        overrides["freeze_heatmap"] = True
    if getattr(args, "tau", None) is not None:
        overrides["tau"] = args.tau
    overrides.update(phase_overrides)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return TrainConfig.from_file(args.config, **overrides)
    return TrainConfig.from_dict(overrides)


def _load_data(path):
    if path is None:
        raise ConfigError("--data is required")
    return load_dataset(path)


# -- subcommands ----------------------------------------------------------------

def cmd_synth(args):
    try:
        spec = SynthSpec(n_samples=args.n, n_tags=args.n_tags, seed=args.seed or 0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = save_dataset(synth_dataset(spec), args.out, spec)
    print(json.dumps(manifest["counts"]))


def cmd_pretrain(args):
    cfg = effective_config(args, pretrain_epochs=args.epochs)
    ds = _load_data(args.data)
    _write_json(Path(args.out) / "pretrain_config.json", cfg.to_dict())
    print(pipeline.pretrain(cfg, ds, args.out, resume=args.resume))


def cmd_train_backbone(args):
    cfg = effective_config(args, backbone_epochs=args.epochs)
    ds = _load_data(args.data)
    _write_json(Path(args.out) / "backbone_config.json", cfg.to_dict())
    print(pipeline.train_backbone(cfg, ds, args.out, resume=args.resume))


def cmd_train(args):
    cfg = effective_config(args, joint_epochs=args.epochs)
    ds = _load_data(args.data)
    out = Path(args.out)
    pre = args.pretrain or (out / "pretrain.ckpt" if (out / "pretrain.ckpt").exists() else None)
    bb = args.backbone or (out / "backbone.ckpt" if (out / "backbone.ckpt").exists() else None)
    if bb is None:
        raise ConfigError("train needs a backbone checkpoint (--backbone)")
    _write_json(out / "train_config.json", cfg.to_dict())
    print(pipeline.train(cfg, ds, out, pretrain_ckpt=pre if cfg.use_external else None,
                         backbone_ckpt=bb, resume=args.resume))


def cmd_generate(args):
    ds = _load_data(args.data)
    ids = [i for i in args.ids.split(",") if i] if args.ids else None
    try:
        rows, scores, tag_names = pipeline.generate_reports(args.checkpoint, ds, args.split, ids)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reports.tsv", "w", encoding="utf-8", newline="\n") as f:
        for key, text in rows:
            f.write(f"{key}\t{text}\n")
    by_id = ds.by_id()
    with open(out / "references.jsonl", "w", encoding="utf-8") as f:
        for key, _ in rows:
            s = by_id[key]
            f.write(json.dumps({"id": key, "report": s.report,
                                "tags": [int(i) for i in np.flatnonzero(s.tags)]}) + "\n")
    _, meta = checkpoint.load(args.checkpoint)
    _write_json(out / "tag_scores.json", {"ids": [r[0] for r in rows], "tag_names": tag_names,
                                          "scores": scores.tolist(), "config": meta["config"]})
    print(out / "reports.tsv")


def cmd_evaluate(args):
    cands, _ = read_texts(args.candidates)
    refs, ref_tags = read_texts(args.references)
    check_alignment(cands, refs)
    ids = sorted(cands)
    scores = labels = tag_names = None
    if args.tag_scores:
        blob = json.loads(Path(args.tag_scores).read_text(encoding="utf-8"))
        row = {k: r for k, r in zip(blob["ids"], blob["scores"])}
        missing = sorted(set(ids) - set(row))
        if missing:
            raise AlignmentError(f"tag scores missing for ids {missing}")
        if not all(i in ref_tags for i in ids):
            raise DataError("tag scores given but references carry no tag labels")
        tag_names = blob["tag_names"]
        scores = np.array([row[i] for i in ids], dtype=np.float64)
        labels = np.zeros_like(scores, dtype=np.int64)
        for r, i in enumerate(ids):
            labels[r, ref_tags[i]] = 1
    report = evaluate_corpus([tokenize(cands[i]) for i in ids], [[tokenize(refs[i])] for i in ids],
                             scores, labels, tag_names)
    if args.config:
        report.meta["config"] = TrainConfig.from_file(args.config).to_dict()
    out = Path(args.out)
    _write_json(out / "eval.json", report.to_dict())
    table = report.table()
    (out / "eval_table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)


def _visual_for(args):
    if args.backbone:
        arrays, meta = checkpoint.load(args.backbone)
        cfg = TrainConfig.from_dict(meta["config"])
        if args.tau is not None:
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "tau": args.tau})
        n_tags = len(meta["tag_names"])
        prefix = "visual/"
    else:
        cfg, arrays, n_tags, prefix = effective_config(args), None, 12, None
    visual = pipeline.build_visual(cfg, n_tags)
    if arrays is not None:
        pipeline._load_into(visual, arrays, prefix, args.backbone)
    return cfg, visual


def cmd_extract_region(args):
    image = read_pgm(args.image)
    cfg, visual = _visual_for(args)
    f_c, _ = visual.global_net(image[None])
    region = vision.extract_region(vision.heatmap(f_c.data[0], channel_axis=0), cfg.region_cfg)
    y0, x0, y1, x1 = vision.region_to_pixels(region, visual.grid_size, image.shape,
                                             visual.global_net.cell_offset)
    result = {"bbox": [y0, x0, y1 - 1, x1 - 1], "grid_bbox": [int(v) for v in region.bbox],
              "mask_rle": mask_rle(region.mask), "fallback": bool(region.fallback),
              "area": int(region.area), "config": cfg.to_dict()}
    _write_json(Path(args.out) / "region.json", result)
    print(json.dumps({k: result[k] for k in ("bbox", "fallback", "area")}))


def cmd_inspect_graph(args):
    model, _, _ = pipeline.load_joint(args.checkpoint)
    image = read_pgm(args.image)[None]
    crops = model.crops(image) if model.cfg.use_internal else None
    with T.no_grad():
        f_in, _ = model.encode(image, crops)
        graph = model.asgk.graph(f_in)
    probs = graph.tag_probs.data[0]
    edges = graph.edges.data[0]
    result = {
        "tags": [{"name": n, "prob": float(p)} for n, p in zip(model.tag_names, probs)
                 if p > args.node_threshold],
        "edges": [[int(i), int(j), float(edges[i, j])] for i, j in zip(*np.nonzero(edges > args.edge_threshold))],
        "config": model.cfg.to_dict(),
    }
    _write_json(Path(args.out) / "graph.json", result)
    print(json.dumps({"tags": result["tags"], "edges": result["edges"]}))


# -- parser ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with TrainConfig keys")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="runs/default", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="asgk", description="Tag-graph report generation on synthetic radiographs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--n", type=int, default=SynthSpec.n_samples)
    p.add_argument("--n-tags", type=int, default=SynthSpec.n_tags)
    p.set_defaults(func=cmd_synth)

    for name, func, epochs_help in (("pretrain", cmd_pretrain, "textbook pretraining epochs"),
                                    ("train-backbone", cmd_train_backbone, "backbone epochs"),
                                    ("train", cmd_train, "joint epochs")):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--data", required=True)
        p.add_argument("--epochs", type=int, default=None, help=epochs_help)
        p.add_argument("--resume", help="resume from a *_last.ckpt checkpoint")
        p.add_argument("--no-focal", action="store_true")
        p.add_argument("--freeze-heatmap", action="store_true")
        p.add_argument("--no-internal", action="store_true")
        p.add_argument("--no-external", action="store_true")
        p.add_argument("--tau", type=float)
        p.set_defaults(func=func)
    sub.choices["train"].add_argument("--pretrain", help="pretraining checkpoint")
    sub.choices["train"].add_argument("--backbone", help="backbone checkpoint")

    p = sub.add_parser("generate", parents=[common])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--ids", help="comma-separated sample ids")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common])
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--tag-scores")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("extract-region", parents=[common])
    p.add_argument("--image", required=True)
    p.add_argument("--backbone", help="backbone or model checkpoint; untrained net when omitted")
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_extract_region)

    p = sub.add_parser("inspect-graph", parents=[common])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--node-threshold", type=float, default=0.5)
    p.add_argument("--edge-threshold", type=float, default=0.3)
    p.set_defaults(func=cmd_inspect_graph)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, checkpoint.CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
