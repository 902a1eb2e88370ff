"""Synthetic stand-in data: images with planted findings, tag labels, template
reports and a small "textbook" corpus, plus the on-disk dataset layout."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nn import make_rng

NO_FINDING = "no abnormality is seen."

# (tag name, report sentence, textbook descriptions); each is a global image property
NORMAL_TAGS = [
    ("normal heart", "a normal heart size is seen.",
     ["a regular cardiac silhouette", "an unremarkable cardiac outline", "a heart of usual size"]),
    ("clear lungs", "the clear lungs show no infiltrate.",
     ["well aerated parenchyma", "homogeneous lung texture", "no focal consolidation"]),
    ("normal mediastinum", "a normal mediastinum is noted.",
     ["a central trachea", "no mediastinal widening", "sharp mediastinal contours"]),
    ("smooth diaphragm", "the smooth diaphragm is intact.",
     ["sharp costophrenic angles", "a dome shaped contour", "no diaphragmatic elevation"]),
]

# (tag name, report wording, textbook descriptions); each is a localized planted shape
LESIONS = [
    ("nodule", "round dense shadow", ["a focal round opacity", "a solid spherical density"]),
    ("cavity", "ring shaped lucency", ["a thick walled ring", "an air filled lesion"]),
    ("band", "linear opacity", ["a horizontal streak", "a thin elongated density"]),
    ("reticulation", "patchy grid pattern", ["a fine net like texture", "interlacing small lines"]),
    ("pleural line", "vertical thin stripe", ["an upright linear edge", "a narrow vertical density"]),
    ("mass", "large square opacity", ["a bulky solid lesion", "a broad dense block"]),
    ("lucency", "dark round area", ["a focal hypodense spot", "a region of reduced density"]),
    ("calcification", "cross shaped bright focus", ["a very dense speck", "a sharply bright deposit"]),
]


def tag_bank():
    """Every available tag as (name, kind, report sentence, descriptions)."""
    tags = [(name, "normal", sent, desc) for name, sent, desc in NORMAL_TAGS]
    for name, wording, desc in LESIONS:
        tags.append((name, "abnormal", f"there is a {name} with {wording}.", desc + [wording]))
    return tags


@dataclass
class SynthSpec:
    image_size: int = 64
    n_tags: int = 12
    n_samples: int = 286          # 7:1:2 split -> 200 train samples
    abnormal_rate: float = 0.3
    normal_rate: float = 0.75     # chance each normal tag is present
    lesion_contrast: float = 0.45
    lesion_radius: tuple = (4, 6)
    noise: float = 0.02
    stripe_amplitude: float = 0.06
    contrast_margin: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_tags <= len(tag_bank()):
            raise ValueError(f"n_tags must lie in [2, {len(tag_bank())}]")
        if not 0.0 <= self.abnormal_rate <= 1.0:
            raise ValueError("abnormal_rate must lie in [0, 1]")
        if self.n_samples < 10:
            raise ValueError(f"n_samples must be >= 10, got {self.n_samples}")

    @property
    def n_normal(self):
        return max(1, min(len(NORMAL_TAGS), round(self.n_tags / 3)))

    def tags(self):
        bank = tag_bank()
        normal = [t for t in bank if t[1] == "normal"][:self.n_normal]
        abnormal = [t for t in bank if t[1] == "abnormal"][:self.n_tags - self.n_normal]
        return normal + abnormal


@dataclass
class SynthSample:
    id: str
    image: np.ndarray
    tags: np.ndarray
    report: str
    region_truth: tuple | None = None


@dataclass
class Dataset:
    samples: list
    tag_names: list
    textbook: list
    splits: dict = field(default_factory=dict)

    def split(self, name):
        wanted = set(self.splits[name])
        return [s for s in self.samples if s.id in wanted]

    def by_id(self):
        return {s.id: s for s in self.samples}


# -- text -------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_PUNCT = set(".,;:!?")


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens):
    out = ""
    for tok in tokens:
        if tok in _PUNCT or not out:
            out += tok
        else:
            out += " " + tok
    return out


def report_from_tags(tags, tag_defs):
    sents = [tag_defs[i][2] for i in np.flatnonzero(tags)]
    return " ".join(sents) if sents else NO_FINDING


def tags_from_report(report, tag_defs):
    """Recover the binary tag vector by template matching."""
    return np.array([1 if d[2] in report else 0 for d in tag_defs], dtype=np.int64)


# -- images -----------------------------------------------------------------

def _plant(img, shape, cy, cx, r, contrast):
    n = img.shape[0]
    yy, xx = np.mgrid[0:n, 0:n]
    dy, dx = yy - cy, xx - cx
    dist = np.sqrt(dy ** 2 + dx ** 2)
    sign = 1.0
    if shape == "nodule":
        m = dist <= r
    elif shape == "cavity":
        m = (dist <= r) & (dist >= r - 2)
    elif shape == "band":
        m = (np.abs(dy) <= 1) & (np.abs(dx) <= r)
    elif shape == "reticulation":
        box = (np.abs(dy) <= r) & (np.abs(dx) <= r)
        m = box & (((dy // 2) + (dx // 2)) % 2 == 0)
    elif shape == "pleural line":
        m = (np.abs(dx) <= 1) & (np.abs(dy) <= r)
    elif shape == "mass":
        m = (np.abs(dy) <= r - 1) & (np.abs(dx) <= r - 1)
    elif shape == "lucency":
        m = dist <= r
        sign = -1.0
    elif shape == "calcification":
        m = ((np.abs(dy) <= 1) & (np.abs(dx) <= r)) | ((np.abs(dx) <= 1) & (np.abs(dy) <= r))
    else:
        raise ValueError(f"unknown shape {shape!r}")
    img[m] += sign * contrast
    ys, xs = np.nonzero(m)
    return int(ys.min()), int(xs.min()), int(ys.max()), int(xs.max())


def _render(rng, spec, tags, tag_defs):
    n = spec.image_size
    has = {d[0]: bool(t) for d, t in zip(tag_defs, tags)}
    yy, xx = np.mgrid[0:n, 0:n]
    base = (0.45 if has.get("normal heart") else 0.30) + rng.uniform(-0.03, 0.03)
    img = np.full((n, n), base)
    # textures cover the whole image, so they survive spatial pooling
    if has.get("clear lungs"):
        img += spec.stripe_amplitude * ((xx + yy) % 2)
    if has.get("normal mediastinum"):
        img += spec.stripe_amplitude * ((xx // 2) % 2)
    if has.get("smooth diaphragm"):
        img += spec.stripe_amplitude * ((yy // 2) % 2)
    img += rng.normal(0.0, spec.noise, size=(n, n))

    region = None
    lesion_names = {name for name, _, _ in LESIONS}
    for name, on in has.items():
        if on and name in lesion_names:
            r = int(rng.integers(spec.lesion_radius[0], spec.lesion_radius[1] + 1))
            cy, cx = (int(v) for v in rng.integers(r + 2, n - r - 2, size=2))
            region = _plant(img, name, cy, cx, r, spec.lesion_contrast)
    img = np.clip(img, 0.0, 1.0)
    # 8-bit quantisation so the in-memory image equals its PGM file
    return np.round(img * 255.0) / 255.0, region


def synth_dataset(spec):
    """Deterministic samples for ``spec`` plus disjoint 7:1:2 train/val/test splits."""
    rng = make_rng(spec.seed)
    tag_defs = spec.tags()
    normal_idx = [i for i, d in enumerate(tag_defs) if d[1] == "normal"]
    abnormal_idx = [i for i, d in enumerate(tag_defs) if d[1] == "abnormal"]
    samples = []
    width = len(str(spec.n_samples - 1))
    for k in range(spec.n_samples):
        tags = np.zeros(len(tag_defs), dtype=np.int64)
        for i in normal_idx:
            tags[i] = rng.random() < spec.normal_rate
        if abnormal_idx and rng.random() < spec.abnormal_rate:
            tags[abnormal_idx[int(rng.integers(len(abnormal_idx)))]] = 1
        image, region = _render(rng, spec, tags, tag_defs)
        samples.append(SynthSample(f"s{k:0{width}d}", image, tags,
                                   report_from_tags(tags, tag_defs), region))
    order = rng.permutation(spec.n_samples)
    n_train = int(round(0.7 * spec.n_samples))
    n_val = int(round(0.1 * spec.n_samples))
    ids = [samples[i].id for i in order]
    splits = {"train": sorted(ids[:n_train]), "val": sorted(ids[n_train:n_train + n_val]),
              "test": sorted(ids[n_train + n_val:])}
    return Dataset(samples, [d[0] for d in tag_defs], synth_textbook(spec), splits)


_FRAMES = [
    "a {name} usually presents as {desc}.",
    "on imaging a {name} shows {desc}.",
    "radiologists report a {name} when {desc} is visible.",
    "the finding of a {name} means {desc}.",
    "in a {name} one expects {desc}.",
]


def synth_textbook(spec):
    """Sentences describing every tag (its report template included), shuffled by seed."""
    rng = make_rng(spec.seed + 1)
    sentences = []
    for name, _, template, descs in spec.tags():
        sentences.append(template)
        for j, frame in enumerate(_FRAMES):
            sentences.append(frame.format(name=name, desc=descs[j % len(descs)]))
    sentences += [NO_FINDING, "when no abnormality is seen the report is short.",
                  "a report states that no abnormality is seen."]
    order = rng.permutation(len(sentences))
    return [sentences[i] for i in order]


# -- on-disk layout -----------------------------------------------------------

class DataError(Exception):
    pass


def write_pgm(path, image):
    img = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path):
    """Binary 8-bit PGM -> float image in [0, 1]."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(raw, pos)
        if not m:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(m.group(2))
        pos = m.end()
    if fields[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(x) for x in fields[1:])
    except ValueError as exc:
        raise DataError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM is supported")
    pixels = raw[pos + 1:]
    if len(pixels) < w * h:
        raise DataError(f"{path}: expected {w * h} pixel bytes, found {len(pixels)}")
    img = np.frombuffer(pixels[:w * h], dtype=np.uint8).reshape(h, w)
    return np.clip(img / 255.0, 0.0, 1.0)


def save_dataset(ds, out_dir, spec=None):
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    with open(out / "data.jsonl", "w", encoding="utf-8") as f:
        for s in ds.samples:
            rel = f"images/{s.id}.pgm"
            write_pgm(out / rel, s.image)
            rec = {"id": s.id, "image": rel, "tags": [int(i) for i in np.flatnonzero(s.tags)],
                   "report": s.report,
                   "region": list(s.region_truth) if s.region_truth else None}
            f.write(json.dumps(rec) + "\n")
    (out / "textbook.txt").write_text("\n".join(ds.textbook) + "\n", encoding="utf-8")
    (out / "tags.json").write_text(json.dumps({str(i): n for i, n in enumerate(ds.tag_names)},
                                              indent=1), encoding="utf-8")
    (out / "splits.json").write_text(json.dumps(ds.splits), encoding="utf-8")
    manifest = manifest_for(ds, spec)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True),
                                       encoding="utf-8")
    return manifest


def manifest_for(ds, spec=None):
    hist = np.sum([s.tags for s in ds.samples], axis=0)
    return {
        "seed": spec.seed if spec else None,
        "spec": asdict(spec) if spec else None,
        "n_samples": len(ds.samples),
        "counts": {k: len(v) for k, v in ds.splits.items()},
        "tag_histogram": {n: int(c) for n, c in zip(ds.tag_names, hist)},
    }


def load_dataset(data_dir):
    """Read a dataset directory (JSONL records + PGM images)."""
    root = Path(data_dir)
    if not (root / "data.jsonl").exists():
        raise DataError(f"{root}: missing data.jsonl")
    tag_map = json.loads((root / "tags.json").read_text(encoding="utf-8"))
    tag_names = [tag_map[str(i)] for i in range(len(tag_map))]
    samples = []
    with open(root / "data.jsonl", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rel = rec.get("image", rec.get("image_path"))
                tags = np.zeros(len(tag_names), dtype=np.int64)
                tags[list(rec["tags"])] = 1
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise DataError(f"data.jsonl line {line_no}: {exc}") from exc
            region = tuple(rec["region"]) if rec.get("region") else None
            samples.append(SynthSample(rec["id"], read_pgm(root / rel), tags, rec["report"], region))
    textbook = []
    if (root / "textbook.txt").exists():
        textbook = [ln.strip() for ln in (root / "textbook.txt").read_text(encoding="utf-8").splitlines()
                    if ln.strip()]
    if (root / "splits.json").exists():
        splits = json.loads((root / "splits.json").read_text(encoding="utf-8"))
    else:
        ids = [s.id for s in samples]
        splits = {"train": ids, "val": [], "test": []}
    return Dataset(samples, tag_names, textbook, splits)
