"""Report-generation metrics (corpus BLEU, ROUGE-L, CIDEr-D) and per-tag AUC.

Candidates are token lists; references are lists of token lists (one or more
per candidate).
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(candidates, references):
    if len(candidates) == 0:
        raise ValueError("empty corpus")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} reference sets")
    if any(len(refs) == 0 for refs in references):
        raise ValueError("every candidate needs at least one reference")


def _closest_ref_len(c, refs):
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def bleu_n(candidates, references, n=4):
    """Corpus BLEU with uniform weights over 1..n and the brevity penalty."""
    _check_corpus(candidates, references)
    matched = np.zeros(n)
    total = np.zeros(n)
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        c_len += len(cand)
        r_len += _closest_ref_len(len(cand), refs)
        for k in range(1, n + 1):
            cand_counts = ngrams(cand, k)
            max_ref = Counter()
            for ref in refs:
                for g, c in ngrams(ref, k).items():
                    max_ref[g] = max(max_ref[g], c)
            matched[k - 1] += sum(min(c, max_ref[g]) for g, c in cand_counts.items())
            total[k - 1] += sum(cand_counts.values())
    if c_len == 0 or np.any(matched == 0):
        return 0.0
    log_p = np.mean(np.log(matched / total))
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return float(bp * math.exp(log_p))


def sentence_bleu(candidate, refs, n=4):
    """Add-one smoothed sentence BLEU, for per-sample diagnostics."""
    logs = []
    for k in range(1, n + 1):
        cand_counts = ngrams(candidate, k)
        max_ref = Counter()
        for ref in refs:
            for g, c in ngrams(ref, k).items():
                max_ref[g] = max(max_ref[g], c)
        m = sum(min(c, max_ref[g]) for g, c in cand_counts.items())
        t = sum(cand_counts.values())
        logs.append(math.log((m + 1) / (t + 1)))
    c = len(candidate)
    r = _closest_ref_len(c, refs)
    bp = 1.0 if c >= r else math.exp(1.0 - r / max(c, 1))
    return bp * math.exp(sum(logs) / n)


def lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_sentence(candidate, refs, beta=1.2):
    if not candidate or not refs:
        raise ValueError("ROUGE-L needs a non-empty candidate and references")
    best = 0.0
    for ref in refs:
        lcs = lcs_length(candidate, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(candidate), lcs / len(ref)
        best = max(best, (1 + beta ** 2) * p * r / (r + beta ** 2 * p))
    return best


def rouge_l(candidates, references, beta=1.2):
    """Mean over samples of the best LCS F-measure against each sample's references."""
    _check_corpus(candidates, references)
    return float(np.mean([rouge_l_sentence(c, refs, beta) for c, refs in zip(candidates, references)]))


def _cider_vectors(tokens, df, log_n, n):
    vecs, norms = [], []
    for k in range(1, n + 1):
        counts = ngrams(tokens, k)
        vec = {g: tf * (log_n - math.log(max(1.0, df.get(g, 0.0)))) for g, tf in counts.items()}
        vecs.append(vec)
        norms.append(math.sqrt(sum(v * v for v in vec.values())))
    return vecs, norms


def cider_sim(vec_c, vec_r, norm_c, norm_r, len_c, len_r, sigma=6.0):
    """Clipped cosine of one n-gram order with the Gaussian length penalty."""
    val = sum(min(v, vec_r[g]) * vec_r[g] for g, v in vec_c.items() if g in vec_r)
    if norm_c != 0 and norm_r != 0:
        val /= norm_c * norm_r
    else:
        val = 0.0
    return val * math.exp(-((len_c - len_r) ** 2) / (2 * sigma ** 2))


def cider_d(candidates, references, n=4, sigma=6.0, return_scores=False):
    """CIDEr-D (x10 scale) with document frequencies from the reference corpus."""
    _check_corpus(candidates, references)
    df = Counter()
    for refs in references:
        seen = set()
        for ref in refs:
            for k in range(1, n + 1):
                seen.update(ngrams(ref, k))
        df.update(seen)
    distinct = {tuple(tuple(r) for r in refs) for refs in references}
    if len(distinct) < 2:
        warnings.warn("CIDEr-D: all reference sets are identical; document frequencies degenerate")
    log_n = math.log(float(len(references)))
    scores = []
    for cand, refs in zip(candidates, references):
        vc, nc = _cider_vectors(cand, df, log_n, n)
        per_n = np.zeros(n)
        for ref in refs:
            vr, nr = _cider_vectors(ref, df, log_n, n)
            for k in range(n):
                per_n[k] += cider_sim(vc[k], vr[k], nc[k], nr[k], len(cand), len(ref), sigma)
        scores.append(float(np.mean(per_n) / len(refs) * 10.0))
    mean = float(np.mean(scores))
    return (mean, scores) if return_scores else mean


def auc(scores, labels):
    """Mann-Whitney AUC with mid-ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_tag_auc(score_matrix, label_matrix, tag_names=None):
    """AUC per tag column; tags lacking positives or negatives are skipped."""
    S = np.asarray(score_matrix, dtype=np.float64)
    Y = np.asarray(label_matrix)
    names = tag_names or [str(i) for i in range(S.shape[1])]
    values, skipped = {}, []
    for j, name in enumerate(names):
        try:
            values[name] = auc(S[:, j], Y[:, j])
        except UndefinedMetricError:
            skipped.append(name)
    mean = float(np.mean(list(values.values()))) if values else float("nan")
    return values, mean, skipped


@dataclass
class EvalReport:
    bleu: list
    rouge_l: float
    cider_d: float
    auc_per_tag: dict = field(default_factory=dict)
    auc_mean: float = float("nan")
    auc_skipped: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def table(self):
        rows = [("BLEU-1", self.bleu[0]), ("BLEU-2", self.bleu[1]), ("BLEU-3", self.bleu[2]),
                ("BLEU-4", self.bleu[3]), ("ROUGE-L", self.rouge_l), ("CIDEr-D", self.cider_d),
                ("AUC (mean)", self.auc_mean)]
        rows += [(f"AUC {k}", v) for k, v in self.auc_per_tag.items()]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val:8.4f}" for name, val in rows]
        if self.auc_skipped:
            lines.append(f"{'skipped':<{width}}  {', '.join(self.auc_skipped)}")
        return "\n".join(lines)


def evaluate_corpus(candidates, references, scores=None, labels=None, tag_names=None):
    """All metrics at once; ``scores``/``labels`` are [M, N_t] matrices or None."""
    report = EvalReport(
        bleu=[bleu_n(candidates, references, k) for k in range(1, 5)],
        rouge_l=rouge_l(candidates, references),
        cider_d=cider_d(candidates, references),
        counts={"samples": len(candidates)},
    )
    report.meta["cider_d_x100"] = report.cider_d * 100.0
    if scores is not None and labels is not None:
        report.auc_per_tag, report.auc_mean, report.auc_skipped = per_tag_auc(scores, labels, tag_names)
        report.counts["tags"] = int(np.asarray(scores).shape[1])
    return report
