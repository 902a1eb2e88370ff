"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle recomputes its quantity by a
different route (loops, brute force, scalar math) than the implementation.
"""
import math
from collections import Counter
from itertools import combinations

import numpy as np


def central_difference(f, arrays, h=1e-6):
    """Numerical gradient of scalar ``f(arrays)`` w.r.t. each array in ``arrays``."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f(arrays)
            flat[i] = keep - h
            down = f(arrays)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    """Worst per-tensor relative error: max |a - n| over the larger of max |a| and max |n|.

    The scale is floored at 1e-4, so a tensor whose true gradient vanishes is held
    to an absolute error below 1e-9 at the 1e-5 threshold.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-4)
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst


def conv2d_loops(x, w, b, stride, padding):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    xp = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    xp[:, :, padding:padding + H, padding:padding + W] = x
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[n, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[n, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


def largest_component(binary):
    """Recursive-free flood fill; returns (bbox, area) or None when nothing is set.

    Components are labelled in row-major discovery order, ties keep the first.
    """
    rows, cols = binary.shape
    label = -np.ones(binary.shape, dtype=int)
    comps = []
    for r in range(rows):
        for c in range(cols):
            if binary[r, c] and label[r, c] < 0:
                idx = len(comps)
                cells, stack = [], [(r, c)]
                label[r, c] = idx
                while stack:
                    y, x = stack.pop()
                    cells.append((y, x))
                    for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < rows and 0 <= xx < cols and binary[yy, xx] and label[yy, xx] < 0:
                            label[yy, xx] = idx
                            stack.append((yy, xx))
                comps.append(cells)
    if not comps:
        return None
    best = comps[0]
    for cells in comps[1:]:
        if len(cells) > len(best):
            best = cells
    ys = [p[0] for p in best]
    xs = [p[1] for p in best]
    mask = np.zeros(binary.shape, dtype=bool)
    mask[ys, xs] = True
    return (min(ys), min(xs), max(ys), max(xs)), len(best), mask


def auc_pairs(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly, ties counting one half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def focal_scalar(p, y, alpha, gamma):
    pt = p if y == 1 else 1.0 - p
    return -alpha * (1.0 - pt) ** gamma * math.log(pt)


def bce_scalar(p, y):
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def lcs_brute(a, b):
    """Longest common subsequence by trying subsequences of the shorter list."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for size in range(len(short), 0, -1):
        for idx in combinations(range(len(short)), size):
            sub = [short[i] for i in idx]
            it = iter(long_)
            if all(tok in it for tok in sub):
                return size
    return 0


def bleu_oracle(cands, refs_list, n=4):
    """Corpus BLEU written from the definition with plain dictionaries."""
    num = [0] * n
    den = [0] * n
    c_total = r_total = 0
    for cand, refs in zip(cands, refs_list):
        c_total += len(cand)
        r_total += sorted(refs, key=lambda r: (abs(len(r) - len(cand)), len(r)))[0].__len__()
        for k in range(n):
            grams = Counter(tuple(cand[i:i + k + 1]) for i in range(len(cand) - k))
            clip = {}
            for ref in refs:
                rc = Counter(tuple(ref[i:i + k + 1]) for i in range(len(ref) - k))
                for g, c in rc.items():
                    clip[g] = max(clip.get(g, 0), c)
            num[k] += sum(min(c, clip.get(g, 0)) for g, c in grams.items())
            den[k] += sum(grams.values())
    if min(num) == 0:
        return 0.0
    geo = math.exp(sum(math.log(a / b) for a, b in zip(num, den)) / n)
    bp = 1.0 if c_total > r_total else math.exp(1 - r_total / c_total)
    return bp * geo


def adam_scalar(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta
