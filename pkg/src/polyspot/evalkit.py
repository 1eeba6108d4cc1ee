"""Retrieval and localization metrics for spotting results."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class GroundTruthSpan:
    line_id: str
    keyword: str
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"span start {self.start} must precede end {self.end}")


@dataclass(frozen=True)
class Detection:
    line_id: str
    keyword: str
    start: float
    end: float
    score: float


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")


def iou(s0, e0, s1, e1):
    inter = max(0.0, min(e0, e1) - max(s0, s1))
    union = max(e0, e1) - min(s0, s1)
    return inter / union if union > 0 else 0.0


def _groups(items):
    out = {}
    for k, it in enumerate(items):
        out.setdefault((it.line_id, it.keyword), []).append(k)
    return out


def match_hypotheses(hyps, truths, cfg=MatchConfig()):
    """Greedy best-IoU one-to-one matching within each (line, keyword).

    Returns ``(tp, fp, fn, pairs)`` with ``pairs`` as (hyp index, truth index).
    """
    tg = _groups(truths)
    pairs = []
    for key, hi in _groups(hyps).items():
        ti = tg.get(key, [])
        cand = []
        for h in hi:
            for t in ti:
                v = iou(hyps[h].start, hyps[h].end, truths[t].start, truths[t].end)
                if v >= cfg.iou_threshold:
                    cand.append((-v, h, t))
        used_h, used_t = set(), set()
        for _, h, t in sorted(cand):
            if h not in used_h and t not in used_t:
                used_h.add(h)
                used_t.add(t)
                pairs.append((h, t))
    tp = len(pairs)
    return tp, len(hyps) - tp, len(truths) - tp, sorted(pairs)


def precision_recall_f(tp, fp, fn):
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def harmonic_mean(p, r):
    return 2 * p * r / (p + r) if p + r else 0.0


def _ranked(hyps):
    return sorted(range(len(hyps)), key=lambda k: (-hyps[k].score, hyps[k].line_id, hyps[k].start))


def relevance(hyps, truths, cfg=MatchConfig()):
    """Per-hypothesis TP flags in rank order; each truth is claimed at most once."""
    tg = _groups(truths)
    claimed = set()
    order = _ranked(hyps)
    flags = []
    for k in order:
        h = hyps[k]
        best, best_t = -1.0, None
        for t in tg.get((h.line_id, h.keyword), []):
            if t in claimed:
                continue
            v = iou(h.start, h.end, truths[t].start, truths[t].end)
            if v >= cfg.iou_threshold and v > best:
                best, best_t = v, t
        if best_t is not None:
            claimed.add(best_t)
        flags.append(best_t is not None)
    return order, np.array(flags, dtype=bool)


def average_precision(hyps, truths, cfg=MatchConfig()):
    """Mean of the precision at each relevant rank, over all ground-truth items."""
    if not truths:
        raise ValueError("no ground truth for this query")
    _, rel = relevance(hyps, truths, cfg)
    if not rel.any():
        return 0.0
    prec = np.cumsum(rel) / np.arange(1, rel.size + 1)
    return float(prec[rel].sum() / len(truths))


def mean_average_precision(hyps, truths, cfg=MatchConfig()):
    """MAP over keywords; keywords without ground truth are excluded and reported."""
    kws = sorted({t.keyword for t in truths} | {h.keyword for h in hyps})
    aps, excluded = {}, []
    for kw in kws:
        th = [h for h in hyps if h.keyword == kw]
        tt = [t for t in truths if t.keyword == kw]
        if not tt:
            excluded.append(kw)
            continue
        aps[kw] = average_precision(th, tt, cfg)
    m = float(np.mean(list(aps.values()))) if aps else 0.0
    return m, aps, excluded


def pr_curve(hyps, truths, cfg=MatchConfig()):
    """(threshold, precision, recall) after accepting every hypothesis scoring >= threshold."""
    order, rel = relevance(hyps, truths, cfg)
    scores = np.array([hyps[k].score for k in order])
    tp = np.cumsum(rel)
    n = np.arange(1, rel.size + 1)
    rows = []
    for i in range(rel.size):
        if i + 1 < rel.size and scores[i + 1] == scores[i]:
            continue
        rows.append((float(scores[i]), tp[i] / n[i], tp[i] / len(truths) if truths else 0.0))
    return rows


def write_pr_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        w.writerows(rows)


def precision_at_recall(rows, recall):
    """Best precision among operating points reaching ``recall``; 0 when unreachable."""
    ok = [p for _, p, r in rows if r >= recall - 1e-12]
    return max(ok) if ok else 0.0


def boundary_error(truth, pred):
    """Start and end offsets relative to the joint extent of both spans, in percent."""
    s0, e0 = truth
    s1, e1 = pred
    if not (s0 < e0 and s1 < e1):
        raise ValueError("spans must be well formed")
    return (abs(s0 - s1) + abs(e0 - e1)) / abs(min(s0, s1) - max(e0, e1)) * 100.0


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f_measure: float
    map: float
    boundary_error: float
    per_keyword_ap: dict = field(default_factory=dict)
    excluded_keywords: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def evaluate(hyps, truths, cfg=MatchConfig()):
    """Counts, rates, MAP and mean boundary error over matched pairs."""
    tp, fp, fn, pairs = match_hypotheses(hyps, truths, cfg)
    p, r, f = precision_recall_f(tp, fp, fn)
    m, aps, excluded = mean_average_precision(hyps, truths, cfg)
    errs = [boundary_error((truths[t].start, truths[t].end), (hyps[h].start, hyps[h].end))
            for h, t in pairs]
    be = float(np.mean(errs)) if errs else math.nan
    return MetricsReport(tp, fp, fn, p, r, f, m, be, aps, excluded)
