"""Three-phase training (text pretraining, backbone training, joint training),
report generation and evaluation."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from . import tensor as T
from . import vision
from .data import detokenize, tokenize
from .decoder import (Decoder, GenerationConfig, SentenceEncoder, Vocabulary, generate,
                      load_word_vectors, lm_loss, pad_batch, teacher_forcing, to_sequence)
from .graph import FocalConfig, GraphEncoder, cooccurrence_edges, focal_loss, tag_bce_loss
from .metrics import evaluate_corpus, per_tag_auc
from .nn import Module, make_rng
from .optim import Adam, step_decay_lr
from .tensor import Tensor

log = logging.getLogger("asgk")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    # model sizes
    d_model: int = 64
    graph_dim: int = 64
    heads: int = 4
    graph_heads: int = 4
    n_blocks: int = 3
    d_ffn: int = 256
    gru_hidden: int = 128
    max_len: int = 300
    min_freq: int = 3
    backbone_channels: tuple = (8, 16, 32, 64)
    backbone_strides: tuple = (2, 2, 2, 1)
    pixel_mean: float = 0.35
    pixel_std: float = 0.1
    # phase 1: text pretraining
    pretrain_lr: float = 5e-4
    pretrain_epochs: int = 30
    # phase 2: backbone training
    backbone_lr: float = 1e-2
    backbone_lr_decay: float = 0.1
    backbone_lr_every: int = 10
    backbone_lr_floor: float = 1e-5
    backbone_epochs: int = 50
    batch_size: int = 32
    # phase 3: joint training
    visual_lr: float = 1e-5
    joint_lr: float = 5e-4
    joint_epochs: int = 30
    text_batch_size: int = 8
    # losses and regions
    tau: float = 0.7
    fusion_op: str = "add"
    crop_margin: int = 1
    lm_weight: float = 1.0
    tag_weight: float = 1.0
    branch_weight: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    # ablation and structure flags
    use_internal: bool = True
    use_external: bool = True
    use_focal: bool = True
    edge_bias: bool = True
    edge_memory: bool = False
    cooccurrence_prior: bool = False
    freeze_heatmap: bool = False
    prior_bias: bool = True
    graph_from_heads: bool = True
    gen_max_len: int = 60
    embedding_file: str | None = None

    def __post_init__(self):
        self.backbone_channels = tuple(self.backbone_channels)
        self.backbone_strides = tuple(self.backbone_strides)
        for name in ("pretrain_lr", "backbone_lr", "backbone_lr_floor", "visual_lr", "joint_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch_size", "text_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if self.fusion_op not in vision.FUSION_OPS:
            raise ConfigError(f"fusion_op must be one of {sorted(vision.FUSION_OPS)}")
        if self.gen_max_len > self.max_len:
            raise ConfigError("gen_max_len exceeds max_len")

    @classmethod
    def full_scale(cls, **overrides):
        """300-d word embeddings and a 1024-unit sentence GRU."""
        return cls(**{"d_model": 300, "d_ffn": 1200, "gru_hidden": 1024, **overrides})

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path, **overrides):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["backbone_channels"] = list(self.backbone_channels)
        d["backbone_strides"] = list(self.backbone_strides)
        return d

    @property
    def region_cfg(self):
        return vision.RegionConfig(tau=self.tau, fusion_op=self.fusion_op,
                                   crop_margin=self.crop_margin)

    @property
    def focal_cfg(self):
        return FocalConfig(self.focal_alpha, self.focal_gamma)


# -- model bundle -------------------------------------------------------------

class ASGK(Module):
    """Graph encoder, report decoder and the sentence encoder used in pretraining."""

    def __init__(self, cfg, vocab_size, n_tags, d_visual, prior_edges=None):
        rng = make_rng(cfg.seed * 1000 + 7)
        self.graph = GraphEncoder(rng, n_tags, d_visual, cfg.graph_dim, cfg.graph_heads,
                                  edge_bias=cfg.edge_bias, prior_edges=prior_edges)
        self.decoder = Decoder(rng, vocab_size, cfg.d_model, cfg.n_blocks, cfg.heads, cfg.d_ffn,
                               cfg.graph_dim, cfg.max_len, edge_memory=cfg.edge_memory)
        self.sentence = SentenceEncoder(rng, cfg.d_model, cfg.gru_hidden, d_visual)


def build_visual(cfg, n_tags):
    return vision.VisualExtractor(make_rng(cfg.seed * 1000 + 3), n_tags, cfg.backbone_channels,
                                  cfg.backbone_strides, region_cfg=cfg.region_cfg,
                                  pixel_mean=cfg.pixel_mean, pixel_std=cfg.pixel_std)


def _import_embeddings(cfg, vocab, asgk):
    if not cfg.embedding_file:
        return
    try:
        n = load_word_vectors(cfg.embedding_file, vocab, asgk.decoder.W_e.data)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot import embeddings: {exc}") from exc
    log.info("imported %d word vectors from %s", n, cfg.embedding_file)


def build_vocab(ds, cfg):
    texts = [s.report for s in ds.split("train")] + list(ds.textbook)
    return Vocabulary.build([tokenize(t) for t in texts], cfg.min_freq)


def _arrays(module, prefix):
    return {prefix + k: v.data for k, v in module.named_tensors().items()}


def _sub(arrays, prefix):
    return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}


def _load_into(module, arrays, prefix, source):
    """Load ``prefix``-ed arrays; a mismatch with the configured model is a config error."""
    try:
        module.load_arrays(_sub(arrays, prefix))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{source} does not fit the configured model: {exc}") from exc


def _batches(n, size, seed, phase, epoch):
    """Batch index lists; composition depends only on (seed, phase, epoch)."""
    perm = np.random.default_rng([seed, phase, epoch]).permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


class RunLog:
    """Per-epoch JSONL log, mirrored into the checkpoint config for resuming."""

    def __init__(self, path=None, history=None):
        self.path = Path(path) if path else None
        self.history = list(history or [])
        if self.path and not self.history and self.path.exists():
            self.path.unlink()

    def write(self, record):
        self.history.append(record)
        log.info(json.dumps(record))
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")


def _round(x):
    return float(f"{x:.10g}")


# -- phase 1 ------------------------------------------------------------------

def pretrain(cfg, ds, out_dir, resume=None, epochs=None):
    """Sentence autoencoding on the textbook: GRU -> graph encoder -> decoder, LM loss only."""
    if not ds.textbook:
        raise ConfigError("the textbook is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = build_vocab(ds, cfg)
    n_tags = len(ds.tag_names)
    d_visual = cfg.backbone_channels[-1]
    model = ASGK(cfg, len(vocab), n_tags, d_visual)
    _import_embeddings(cfg, vocab, model)
    opt = Adam(model.parameters(), lr=cfg.pretrain_lr)
    initial = {k: v.data.copy() for k, v in model.parameters().items()}
    start, history = 0, []
    if resume:
        arrays, meta = checkpoint.load(resume)
        _load_into(model, arrays, "asgk/", resume)
        opt.load_state_arrays(arrays, "opt/asgk/", meta["opt_steps"]["asgk"])
        initial = {k: v for k, v in _sub(arrays, "init/").items()}
        start, history = meta["epoch"] + 1, meta["history"]
    runlog = RunLog(out / "pretrain_log.jsonl", history)

    toks = [tokenize(s) for s in ds.textbook]
    seqs = [to_sequence(t, vocab, cfg.max_len) for t in toks]
    n_epochs = cfg.pretrain_epochs if epochs is None else epochs
    for epoch in range(start, n_epochs):
        losses = []
        for idx in _batches(len(seqs), cfg.text_batch_size, cfg.seed, 1, epoch):
            batch, lengths = pad_batch([seqs[i] for i in idx])
            content = batch[:, 1:]
            sig = model.sentence(model.decoder.W_e, content, lengths - 2)
            graph = model.graph(sig)
            inputs, targets, mask = teacher_forcing(batch)
            loss = lm_loss(model.decoder(inputs, graph), targets, mask)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        runlog.write({"phase": "pretrain", "epoch": epoch, "losses": {"lm": _round(np.mean(losses))}})
        moved = sorted({k.split(".")[0] for k, v in model.parameters().items()
                        if not np.array_equal(v.data, initial[k])})
        arrays = {**_arrays(model, "asgk/"), **opt.state_arrays("opt/asgk/"),
                  **{"init/" + k: v for k, v in initial.items()}}
        meta = {"phase": "pretrain", "epoch": epoch, "config": cfg.to_dict(), "vocab": vocab.itos,
                "tag_names": ds.tag_names, "history": runlog.history,
                "opt_steps": {"asgk": opt.step_count}, "moved_groups": moved}
        checkpoint.save(out / "pretrain_last.ckpt", arrays, meta)
    if n_epochs > 0 and start < n_epochs:
        log.info("pretraining moved parameter groups: %s", moved)
    final = out / "pretrain.ckpt"
    arrays, meta = checkpoint.load(out / "pretrain_last.ckpt")
    checkpoint.save(final, {k: v for k, v in arrays.items() if k.startswith("asgk/")}, meta)
    return final


# -- phase 2 ------------------------------------------------------------------

def _branch_loss(probs, y, cfg):
    if cfg.use_focal:
        return sum((focal_loss(p, y, cfg.focal_cfg) for p in probs), Tensor(0.0))
    return sum((tag_bce_loss(p, y) for p in probs), Tensor(0.0))


def _stack(samples):
    return np.stack([s.image for s in samples]), np.stack([s.tags for s in samples])


def _visual_eval(visual, images, labels, crops, batch=64):
    out = [[], [], []]
    with T.no_grad():
        for s in range(0, len(images), batch):
            _, f_g = visual.global_net(images[s:s + batch])
            _, f_l = visual.region_net(crops[s:s + batch])
            f_f = vision.fuse(f_g, f_l, visual.region_cfg)
            for lst, p in zip(out, visual.heads(f_g, f_l, f_f)):
                lst.append(p.data)
    aucs = [per_tag_auc(np.concatenate(o), labels)[1] for o in out]
    return {"global": aucs[0], "region": aucs[1], "fusion": aucs[2]}


def prior_logits(labels, floor=0.01):
    """Per-tag log-odds of the training prevalence, clipped away from 0 and 1."""
    p = np.clip(np.asarray(labels, dtype=np.float64).mean(axis=0), floor, 1.0 - floor)
    return np.log(p / (1.0 - p))


def train_backbone(cfg, ds, out_dir, resume=None, epochs=None):
    """Global + region backbones with three tag heads; best validation AUC is kept."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_tags = len(ds.tag_names)
    visual = build_visual(cfg, n_tags)
    train_x, train_y = _stack(ds.split("train"))
    if cfg.prior_bias:
        # rare tags start near their base rate instead of at p = 0.5
        for head in (visual.heads.global_head, visual.heads.region_head, visual.heads.fusion_head):
            head.bias.data = prior_logits(train_y)
    opt = Adam(visual.parameters(), lr=cfg.backbone_lr)
    val_x, val_y = _stack(ds.split("val"))
    frozen_crops = None
    if cfg.freeze_heatmap:
        frozen_crops = build_visual(cfg, n_tags).region_crops(train_x)[0]
    start, history, best = 0, [], -1.0
    kept = bool(resume)
    if resume:
        arrays, meta = checkpoint.load(resume)
        _load_into(visual, arrays, "visual/", resume)
        opt.load_state_arrays(arrays, "opt/visual/", meta["opt_steps"]["visual"])
        start, history, best = meta["epoch"] + 1, meta["history"], meta["best_auc"]
    runlog = RunLog(out / "backbone_log.jsonl", history)
    if start == 0:
        val_crops = visual.region_crops(val_x)[0]
        runlog.write({"phase": "backbone", "epoch": -1, "val_auc": _visual_eval(visual, val_x, val_y, val_crops)})

    n_epochs = cfg.backbone_epochs if epochs is None else epochs
    for epoch in range(start, n_epochs):
        opt.lr = step_decay_lr(epoch, cfg.backbone_lr, cfg.backbone_lr_decay,
                               cfg.backbone_lr_every, cfg.backbone_lr_floor)
        crops = frozen_crops if frozen_crops is not None else visual.region_crops(train_x)[0]
        losses = []
        for idx in _batches(len(train_x), cfg.batch_size, cfg.seed, 2, epoch):
            _, f_g = visual.global_net(train_x[idx])
            _, f_l = visual.region_net(crops[idx])
            f_f = vision.fuse(f_g, f_l, visual.region_cfg)
            loss = _branch_loss(visual.heads(f_g, f_l, f_f), train_y[idx], cfg)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val_crops = visual.region_crops(val_x)[0]
        val = _visual_eval(visual, val_x, val_y, val_crops)
        score = float(np.mean(list(val.values())))
        runlog.write({"phase": "backbone", "epoch": epoch, "lr": opt.lr,
                      "losses": {"branch": _round(np.mean(losses))}, "val_auc": val})
        meta = {"phase": "backbone", "epoch": epoch, "config": cfg.to_dict(),
                "tag_names": ds.tag_names, "history": runlog.history,
                "opt_steps": {"visual": opt.step_count}}
        # an undefined validation AUC (tiny splits) falls back to the latest epoch
        if score > best or not kept:
            best, kept = (score if np.isfinite(score) else best), True
            checkpoint.save(out / "backbone.ckpt", _arrays(visual, "visual/"),
                            {**meta, "best_auc": best, "val_auc": val})
        arrays = {**_arrays(visual, "visual/"), **opt.state_arrays("opt/visual/")}
        checkpoint.save(out / "backbone_last.ckpt", arrays, {**meta, "best_auc": best})
    return out / "backbone.ckpt"


# -- phase 3 ------------------------------------------------------------------

@dataclass
class JointModel:
    cfg: TrainConfig
    vocab: Vocabulary
    tag_names: list
    visual: vision.VisualExtractor
    asgk: ASGK
    heatmap_net: vision.Backbone

    def crops(self, images):
        saved = self.visual.global_net
        self.visual.global_net = self.heatmap_net
        try:
            return self.visual.region_crops(images)[0]
        finally:
            self.visual.global_net = saved

    def encode(self, images, crops=None):
        """Graph input and branch probabilities for a batch of images."""
        _, f_g = self.visual.global_net(images)
        if self.cfg.use_internal:
            _, f_l = self.visual.region_net(crops)
            f_f = vision.fuse(f_g, f_l, self.visual.region_cfg)
            return f_f, list(self.visual.heads(f_g, f_l, f_f))
        return f_g, [T.sigmoid(self.visual.heads.global_head(f_g))]

    def arrays(self):
        return {**_arrays(self.visual, "visual/"), **_arrays(self.asgk, "asgk/"),
                **_arrays(self.heatmap_net, "heatmap/")}

    def predict(self, images, crops=None, batch=64):
        """Tag probabilities and generated token-id sequences."""
        scores, seqs = [], []
        gen = GenerationConfig(max_len=self.cfg.gen_max_len)
        with T.no_grad():
            for s in range(0, len(images), batch):
                f_in, _ = self.encode(images[s:s + batch],
                                      None if crops is None else crops[s:s + batch])
                graph = self.asgk.graph(f_in)
                scores.append(graph.tag_probs.data)
                seqs.extend(generate(self.asgk.decoder, graph, gen))
        return np.concatenate(scores), seqs


def load_joint(path):
    arrays, meta = checkpoint.load(path)
    cfg = TrainConfig.from_dict(meta["config"])
    vocab = Vocabulary(meta["vocab"])
    tag_names = meta["tag_names"]
    visual = build_visual(cfg, len(tag_names))
    asgk = ASGK(cfg, len(vocab), len(tag_names), cfg.backbone_channels[-1])
    heatmap_net = build_visual(cfg, len(tag_names)).global_net
    _load_into(visual, arrays, "visual/", path)
    _load_into(asgk, arrays, "asgk/", path)
    _load_into(heatmap_net, arrays, "heatmap/", path)
    return JointModel(cfg, vocab, tag_names, visual, asgk, heatmap_net), arrays, meta


def _evaluate_split(model, samples):
    images, labels = _stack(samples)
    crops = model.crops(images) if model.cfg.use_internal else None
    scores, seqs = model.predict(images, crops)
    cands = [model.vocab.decode(s) for s in seqs]
    refs = [[tokenize(s.report)] for s in samples]
    report = evaluate_corpus(cands, refs, scores, labels, model.tag_names)
    return report, cands, scores


def train(cfg, ds, out_dir, pretrain_ckpt=None, backbone_ckpt=None, resume=None, epochs=None,
          samples=None, eval_split="val"):
    """Joint training: LM loss + tag BCE + branch losses, all weights from ``cfg``.

    ``samples`` overrides the training split (used for small overfit runs).
    ``epochs`` stops early at a resumable point; the schedule itself is ``cfg.joint_epochs``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_tags = len(ds.tag_names)
    train_samples = samples if samples is not None else ds.split("train")
    visual = build_visual(cfg, n_tags)
    heatmap_net = build_visual(cfg, n_tags).global_net
    if backbone_ckpt:
        b_arrays, _ = checkpoint.load(backbone_ckpt)
        _load_into(visual, b_arrays, "visual/", backbone_ckpt)
        _load_into(heatmap_net, b_arrays, "visual/global_net.", backbone_ckpt)
    prior = cooccurrence_edges([s.tags for s in train_samples]) if cfg.cooccurrence_prior else None
    if cfg.use_external:
        if not pretrain_ckpt:
            raise ConfigError("use_external needs a pretraining checkpoint")
        p_arrays, p_meta = checkpoint.load(pretrain_ckpt)
        vocab = Vocabulary(p_meta["vocab"])
        asgk = ASGK(cfg, len(vocab), n_tags, cfg.backbone_channels[-1], prior)
        _load_into(asgk, p_arrays, "asgk/", pretrain_ckpt)
        if prior is not None:
            asgk.graph.prior_edges.data = prior
    else:
        vocab = build_vocab(ds, cfg)
        asgk = ASGK(cfg, len(vocab), n_tags, cfg.backbone_channels[-1], prior)
        _import_embeddings(cfg, vocab, asgk)
    images, labels = _stack(train_samples)
    if cfg.graph_from_heads:
        # the node scorer starts from the visual tag head that sees the same input features
        head = visual.heads.fusion_head if cfg.use_internal else visual.heads.global_head
        asgk.graph.W_v.data = head.weight.data.T.copy()
    if cfg.prior_bias:
        asgk.graph.readout_b.data = prior_logits(labels)
    model = JointModel(cfg, vocab, ds.tag_names, visual, asgk, heatmap_net)
    opt_v = Adam(visual.parameters(), lr=cfg.visual_lr)
    opt_a = Adam(asgk.parameters(), lr=cfg.joint_lr)

    start, history = 0, []
    if resume:
        arrays, meta = checkpoint.load(resume)
        _load_into(visual, arrays, "visual/", resume)
        _load_into(asgk, arrays, "asgk/", resume)
        _load_into(heatmap_net, arrays, "heatmap/", resume)
        opt_v.load_state_arrays(arrays, "opt/visual/", meta["opt_steps"]["visual"])
        opt_a.load_state_arrays(arrays, "opt/asgk/", meta["opt_steps"]["asgk"])
        start, history = meta["epoch"] + 1, meta["history"]
    runlog = RunLog(out / "train_log.jsonl", history)

    seqs = [to_sequence(tokenize(s.report), vocab, cfg.max_len) for s in train_samples]
    crops = model.crops(images) if cfg.use_internal else None
    n_epochs = cfg.joint_epochs if epochs is None else epochs
    meta = None
    for epoch in range(start, n_epochs):
        parts = {"lm": [], "tag": [], "branch": []}
        for idx in _batches(len(images), cfg.text_batch_size, cfg.seed, 3, epoch):
            f_in, probs = model.encode(images[idx], None if crops is None else crops[idx])
            graph = asgk.graph(f_in)
            batch, _ = pad_batch([seqs[i] for i in idx])
            inputs, targets, mask = teacher_forcing(batch)
            l_lm = lm_loss(asgk.decoder(inputs, graph), targets, mask)
            l_tag = tag_bce_loss(graph.tag_probs, labels[idx])
            l_branch = _branch_loss(probs, labels[idx], cfg)
            loss = l_lm * cfg.lm_weight + l_tag * cfg.tag_weight + l_branch * cfg.branch_weight
            opt_v.zero_grad()
            opt_a.zero_grad()
            loss.backward()
            opt_v.step()
            opt_a.step()
            parts["lm"].append(l_lm.item())
            parts["tag"].append(l_tag.item())
            parts["branch"].append(l_branch.item())
        record = {"phase": "train", "epoch": epoch,
                  "losses": {k: _round(np.mean(v)) for k, v in parts.items()}}
        # validation closes the configured schedule, so a stopped-early run logs no val entry
        if epoch == cfg.joint_epochs - 1 and eval_split and ds.splits.get(eval_split):
            report, _, _ = _evaluate_split(model, ds.split(eval_split))
            record["val"] = {"cider_d": report.cider_d, "bleu4": report.bleu[3],
                             "rouge_l": report.rouge_l, "auc": report.auc_mean}
        runlog.write(record)
        meta = {"phase": "train", "epoch": epoch, "config": cfg.to_dict(), "vocab": vocab.itos,
                "tag_names": ds.tag_names, "history": runlog.history,
                "opt_steps": {"visual": opt_v.step_count, "asgk": opt_a.step_count}}
        arrays = {**model.arrays(), **opt_v.state_arrays("opt/visual/"),
                  **opt_a.state_arrays("opt/asgk/")}
        checkpoint.save(out / "train_last.ckpt", arrays, meta)
    if meta is None and not (out / "train_last.ckpt").exists():
        # no epoch ran: the initialised model is the result
        meta = {"phase": "train", "epoch": start - 1, "config": cfg.to_dict(), "vocab": vocab.itos,
                "tag_names": ds.tag_names, "history": runlog.history,
                "opt_steps": {"visual": opt_v.step_count, "asgk": opt_a.step_count}}
        checkpoint.save(out / "model.ckpt", model.arrays(), meta)
        return out / "model.ckpt"
    arrays, meta = checkpoint.load(out / "train_last.ckpt")
    checkpoint.save(out / "model.ckpt", {k: v for k, v in arrays.items() if not k.startswith("opt/")}, meta)
    return out / "model.ckpt"


def generate_reports(ckpt, ds, split="test", ids=None):
    """(id, report text) pairs plus the [M, N_t] tag-score matrix for a split."""
    model, _, _ = load_joint(ckpt)
    samples = ds.split(split)
    if ids:
        known = {s.id for s in samples}
        missing = [i for i in ids if i not in known]
        if missing:
            raise KeyError(f"ids not in split {split!r}: {missing}")
        samples = [s for s in samples if s.id in set(ids)]
    images, _ = _stack(samples)
    crops = model.crops(images) if model.cfg.use_internal else None
    scores, seqs = model.predict(images, crops)
    rows = [(s.id, detokenize(model.vocab.decode(q))) for s, q in zip(samples, seqs)]
    return rows, scores, model.tag_names
