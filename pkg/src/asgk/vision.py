"""Visual side: backbone features, saliency heat map, max connected region, fusion."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, Module, xavier, zeros
from .tensor import Tensor


@dataclass
class RegionConfig:
    tau: float = 0.7
    connectivity: int = 4
    fusion_op: str = "add"
    crop_margin: int = 0      # grid cells of context added around the region when cropping

    def __post_init__(self):
        if self.crop_margin < 0:
            raise ValueError("crop_margin must be >= 0")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.connectivity != 4:
            raise ValueError("only 4-connectivity is supported")
        if self.fusion_op not in FUSION_OPS:
            raise ValueError(f"fusion_op must be one of {sorted(FUSION_OPS)}")


@dataclass
class Region:
    mask: np.ndarray          # bool [S, S]
    bbox: tuple               # (row0, col0, row1, col1), inclusive
    area: int
    fallback: bool = False


class Backbone(Module):
    """Strided 3x3 conv stack with ReLU; returns the spatial maps and their mean-pool."""

    def __init__(self, rng, channels=(8, 16, 32, 64), strides=(2, 2, 2, 1), input_size=64,
                 pixel_mean=0.0, pixel_std=1.0, padding_mode="edge"):
        if pixel_std <= 0:
            raise ValueError("pixel_std must be positive")
        if padding_mode not in ("edge", "zeros"):
            raise ValueError(f"unknown padding_mode {padding_mode!r}")
        self._padding_mode = padding_mode
        self._strides = tuple(strides)
        self._input_size = input_size
        self._pixel_mean = float(pixel_mean)
        self._pixel_std = float(pixel_std)
        self.convs = []
        c_in = 1
        for c_out in channels:
            self.convs.append(_Conv(rng, c_in, c_out))
            c_in = c_out
        self._out_channels = c_in

    @property
    def out_channels(self):
        return self._out_channels

    @property
    def grid_size(self):
        s = self._input_size
        for st in self._strides:
            s = (s + 2 - 3) // st + 1
        return s

    @property
    def cell_offset(self):
        """Pixel shift between grid cell ``i`` and the span ``[i*f, (i+1)*f)``.

        Every stage pads by one on each side, so cell ``i`` is centred on pixel
        ``i * f`` rather than on the middle of its nominal span.
        """
        total = int(np.prod(self._strides))
        return 0.5 - total / 2.0

    def __call__(self, images):
        """``images`` [B, H, W] (or [B, 1, H, W]) in [0, 1] -> (f_c [B, C, S, S], f_g [B, C])."""
        x = images if isinstance(images, Tensor) else Tensor(images)
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, *x.shape[1:])
        if x.shape[-2:] != (self._input_size, self._input_size):
            raise T.ShapeError(f"backbone expects {self._input_size}x{self._input_size} input, "
                               f"got {x.shape[-2:]}")
        if self._pixel_mean != 0.0 or self._pixel_std != 1.0:
            x = (x - self._pixel_mean) * (1.0 / self._pixel_std)
        for conv, st in zip(self.convs, self._strides):
            if self._padding_mode == "edge":
                x = T.relu(T.conv2d(edge_pad(x), conv.weight, conv.bias, stride=st, padding=0))
            else:
                x = T.relu(T.conv2d(x, conv.weight, conv.bias, stride=st, padding=1))
        return x, x.mean(axis=(2, 3))


def edge_pad(x, width=1):
    """Replicate the outermost rows/columns of [B, C, H, W]; a constant map stays constant."""
    rows = np.clip(np.arange(-width, x.shape[2] + width), 0, x.shape[2] - 1)
    cols = np.clip(np.arange(-width, x.shape[3] + width), 0, x.shape[3] - 1)
    return x[:, :, rows][:, :, :, cols]


class _Conv(Module):
    def __init__(self, rng, c_in, c_out, k=3):
        self.weight = xavier(rng, c_in * k * k, c_out * k * k, shape=(c_out, c_in, k, k))
        self.bias = zeros(c_out)


def heatmap(f_c, channel_axis=-1):
    """Channel-wise max of |f_c|, min-max normalised to [0, 1].

    A constant map normalises to all zeros.
    """
    f_c = np.asarray(f_c.data if isinstance(f_c, Tensor) else f_c)
    H = np.abs(f_c).max(axis=channel_axis)
    lo, hi = H.min(), H.max()
    if hi - lo <= 0:
        return np.zeros_like(H)
    return (H - lo) / (hi - lo)


def extract_region(H, cfg=None):
    """Largest 4-connected component of ``H > tau``.

    Ties go to the component met first in a row-major scan.  An empty
    threshold mask yields the whole grid with ``fallback=True``.
    """
    cfg = cfg or RegionConfig()
    H = np.asarray(H)
    above = H > cfg.tau
    rows, cols = above.shape
    if not above.any():
        return Region(np.ones_like(above), (0, 0, rows - 1, cols - 1), rows * cols, True)

    seen = np.zeros_like(above)
    best = None
    for r0 in range(rows):
        for c0 in range(cols):
            if not above[r0, c0] or seen[r0, c0]:
                continue
            seen[r0, c0] = True
            comp = []
            queue = deque([(r0, c0)])
            while queue:
                r, c = queue.popleft()
                comp.append((r, c))
                for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rr < rows and 0 <= cc < cols and above[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        queue.append((rr, cc))
            if best is None or len(comp) > len(best):
                best = comp

    mask = np.zeros_like(above)
    rr, cc = zip(*best)
    mask[list(rr), list(cc)] = True
    bbox = (min(rr), min(cc), max(rr), max(cc))
    return Region(mask, bbox, len(best), False)


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize with half-pixel centres and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    r0, r1, wr = axis_weights(in_h, out_h)
    c0, c1, wc = axis_weights(in_w, out_w)
    top = img[r0][:, c0] * (1 - wc) + img[r0][:, c1] * wc
    bot = img[r1][:, c0] * (1 - wc) + img[r1][:, c1] * wc
    return top * (1 - wr)[:, None] + bot * wr[:, None]


def region_to_pixels(region, grid_size, image_shape, offset=0.0, margin=0):
    """Map a heat-map bbox to a half-open pixel box (y0, x0, y1, x1).

    Cell ``i`` spans pixels ``[i * f + offset, (i + 1) * f + offset)`` with ``f`` the
    image-to-grid scale; boxes touching the grid border extend to the image border.
    ``margin`` widens the box by that many cells on every side.
    """
    h, w = image_shape
    r0, c0, r1, c1 = region.bbox
    r0, c0 = max(r0 - margin, 0), max(c0 - margin, 0)
    r1, c1 = min(r1 + margin, grid_size - 1), min(c1 + margin, grid_size - 1)
    fy, fx = h / grid_size, w / grid_size

    def span(lo, hi, f, n):
        a = 0 if lo == 0 else int(np.floor(lo * f + offset))
        b = n if hi == grid_size - 1 else int(np.ceil((hi + 1) * f + offset))
        return max(a, 0), min(max(b, a + 1), n)

    y0, y1 = span(r0, r1, fy, h)
    x0, x1 = span(c0, c1, fx, w)
    return y0, x0, y1, x1


def crop_resize(image, region, grid_size, out_size=None, offset=0.0, margin=0):
    """Crop the region's box (scaled from heat-map to image coordinates) and resize."""
    image = np.asarray(image, dtype=np.float64)
    out_size = out_size or image.shape[0]
    y0, x0, y1, x1 = region_to_pixels(region, grid_size, image.shape, offset, margin)
    return resize_bilinear(image[y0:y1, x0:x1], out_size, out_size)


FUSION_OPS = {
    "add": T.add,
    "mul": T.mul,
    "max": T.maximum,
}


def fuse(f_g, f_l, cfg=None):
    cfg = cfg or RegionConfig()
    if f_g.shape != f_l.shape:
        raise T.ShapeError(f"fusion needs matching dims: {f_g.shape} vs {f_l.shape}")
    return FUSION_OPS[cfg.fusion_op](f_g, f_l)


class BranchHeads(Module):
    """Three untied linear tag classifiers: global, region and fusion."""

    def __init__(self, rng, c_g, n_tags):
        self.global_head = Linear(rng, c_g, n_tags)
        self.region_head = Linear(rng, c_g, n_tags)
        self.fusion_head = Linear(rng, c_g, n_tags)

    def __call__(self, f_g, f_l, f_f):
        return (T.sigmoid(self.global_head(f_g)), T.sigmoid(self.region_head(f_l)),
                T.sigmoid(self.fusion_head(f_f)))


def branch_logits(f_g, f_l, f_f, heads):
    """Sigmoid probabilities of the global, region and fusion branches."""
    return heads(f_g, f_l, f_f)


class VisualExtractor(Module):
    """Global and region backbones (untied) plus the three branch heads."""

    def __init__(self, rng, n_tags, channels=(8, 16, 32, 64), strides=(2, 2, 2, 1),
                 input_size=64, region_cfg=None, pixel_mean=0.0, pixel_std=1.0):
        self._region_cfg = region_cfg or RegionConfig()
        self.global_net = Backbone(rng, channels, strides, input_size, pixel_mean, pixel_std)
        self.region_net = Backbone(rng, channels, strides, input_size, pixel_mean, pixel_std)
        self.heads = BranchHeads(rng, self.global_net.out_channels, n_tags)

    @property
    def region_cfg(self):
        return self._region_cfg

    @property
    def grid_size(self):
        return self.global_net.grid_size

    def region_crops(self, images, batch=64):
        """Crops guided by the current global net's heat maps (no tape)."""
        images = np.asarray(images)
        out, regions = [], []
        with T.no_grad():
            for s in range(0, len(images), batch):
                f_c, _ = self.global_net(images[s:s + batch])
                for img, fc in zip(images[s:s + batch], f_c.data):
                    reg = extract_region(heatmap(fc, channel_axis=0), self._region_cfg)
                    regions.append(reg)
                    out.append(crop_resize(img, reg, self.grid_size, img.shape[0],
                                           self.global_net.cell_offset,
                                           self._region_cfg.crop_margin))
        return np.stack(out), regions
