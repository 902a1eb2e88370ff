"""Desk-scale experiment drivers shared by scripts/ and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pipeline
from .data import SynthSpec, synth_dataset
from .pipeline import TrainConfig

ABLATION_ROWS = {
    "baseline": dict(use_internal=False, use_external=False),
    "+EA": dict(use_internal=False, use_external=True),
    "+IA": dict(use_internal=True, use_external=False),
    "+IA+EA": dict(use_internal=True, use_external=True),
}


def run_dir_name(row):
    """Filesystem name for an ablation row: "+IA+EA" -> "ia_ea"."""
    return row.strip("+").replace("+", "_").lower()


@dataclass
class DeskSchedule:
    pretrain_epochs: int = 5
    backbone_epochs: int = 10
    joint_epochs: int = 10

    def apply(self, cfg):
        return replace(cfg, pretrain_epochs=self.pretrain_epochs,
                       backbone_epochs=self.backbone_epochs, joint_epochs=self.joint_epochs)


@dataclass
class PipelineResult:
    seconds: float
    test: object            # EvalReport on the test split
    val: dict = field(default_factory=dict)
    checkpoint: Path | None = None


def run_full(out_dir, seed=0, schedule=None, spec=None, **cfg_overrides):
    """synth -> pretrain -> backbone -> joint -> test evaluation."""
    start = time.perf_counter()
    spec = spec or SynthSpec(seed=seed)
    ds = synth_dataset(spec)
    cfg = (schedule or DeskSchedule()).apply(TrainConfig(seed=seed, **cfg_overrides))
    out = Path(out_dir)
    pre = pipeline.pretrain(cfg, ds, out) if cfg.use_external else None
    bb = pipeline.train_backbone(cfg, ds, out)
    ckpt = pipeline.train(cfg, ds, out, pre, bb)
    model, _, meta = pipeline.load_joint(ckpt)
    report, _, _ = pipeline._evaluate_split(model, ds.split("test"))
    return PipelineResult(time.perf_counter() - start, report, meta["history"][-1].get("val", {}), ckpt)


def run_ablation(out_dir, seeds=(0, 1, 2), schedule=None, rows=None):
    """Validation metrics for every ablation row and seed.

    The backbone phase does not depend on the row flags, so one backbone and one
    pretraining run per seed are shared by all rows.
    """
    rows = rows or ABLATION_ROWS
    schedule = schedule or DeskSchedule()
    results = {name: [] for name in rows}
    for seed in seeds:
        ds = synth_dataset(SynthSpec(seed=seed))
        base = schedule.apply(TrainConfig(seed=seed))
        shared = Path(out_dir) / f"seed{seed}"
        pre = pipeline.pretrain(base, ds, shared / "pretrain")
        bb = pipeline.train_backbone(base, ds, shared / "backbone")
        for name, flags in rows.items():
            cfg = replace(base, **flags)
            ckpt = pipeline.train(cfg, ds, shared / run_dir_name(name), pre, bb)
            _, _, meta = pipeline.load_joint(ckpt)
            results[name].append(meta["history"][-1]["val"])
    return results


def summarize(results):
    """Mean of each validation metric per row."""
    return {name: {k: float(np.mean([r[k] for r in runs])) for k in runs[0]}
            for name, runs in results.items()}


def ablation_ordering(summary):
    """The directional checks: (description, holds) pairs."""
    c = {k: v["cider_d"] for k, v in summary.items()}
    a = {k: v["auc"] for k, v in summary.items()}
    return [
        ("CIDEr-D baseline <= +EA", c["baseline"] <= c["+EA"]),
        ("CIDEr-D baseline <= +IA", c["baseline"] <= c["+IA"]),
        ("CIDEr-D +IA <= +IA+EA", c["+IA"] <= c["+IA+EA"]),
        ("AUC +IA > baseline", a["+IA"] > a["baseline"]),
    ]
