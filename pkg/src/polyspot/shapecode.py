"""Zernike shape descriptors, single-linkage clustering and shape codebooks.

A codebook maps character labels to a smaller alphabet of shape codes so
that look-alike characters share one model in the coarse spotting stage.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

GLYPH_SIZE = 41
CENTER = GLYPH_SIZE // 2
CODEBOOK_VERSION = 1


def normalize_glyph(mask, size=GLYPH_SIZE):
    """Crop, scale to fit a ``size`` square around the centroid, and center it.

    The scale is chosen so the glyph's farthest extent from its centroid fits
    in half the square; pixels are sampled nearest-neighbour, then the result
    is shifted so its centroid lands on the center pixel.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or not m.any():
        raise ValueError("empty glyph")
    ys, xs = np.nonzero(m)
    m = m[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h, w = m.shape
    c = size // 2
    ys, xs = np.nonzero(m)
    cy, cx = ys.mean() + 0.5, xs.mean() + 0.5
    reach = max(cy, h - cy, cx, w - cx)
    # shrink by a pixel at a time if the centering shift would clip the glyph
    for margin in range(c):
        out = _sample(m, cy, cx, (size / 2.0 - margin) / reach, size)
        ys, xs = np.nonzero(out)
        dy, dx = c - int(round(ys.mean())), c - int(round(xs.mean()))
        ys2, xs2 = ys + dy, xs + dx
        if ys2.min() >= 0 and xs2.min() >= 0 and ys2.max() < size and xs2.max() < size:
            break
    shifted = np.zeros_like(out)
    shifted[ys2, xs2] = True
    return shifted


def _sample(m, cy, cx, scale, size):
    """Nearest-neighbour resample with destination pixel centers mapped into ``m``."""
    h, w = m.shape
    d = np.arange(size) + 0.5 - size / 2.0
    sy = np.floor(cy + d / scale).astype(np.int64)
    sx = np.floor(cx + d / scale).astype(np.int64)
    vy = (sy >= 0) & (sy < h)
    vx = (sx >= 0) & (sx < w)
    out = np.zeros((size, size), dtype=bool)
    out[np.ix_(vy, vx)] = m[np.ix_(sy[vy], sx[vx])]
    if not out.any():
        out[size // 2, size // 2] = True
    return out


def zernike_indices(n_max):
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    return [(n, m) for n in range(n_max + 1) for m in range(n % 2, n + 1, 2)]


def radial_polynomial(n, m, rho):
    """Zernike radial polynomial R_nm(rho)."""
    m = abs(m)
    if m > n or (n - m) % 2:
        raise ValueError(f"invalid Zernike order ({n}, {m})")
    rho = np.asarray(rho, dtype=np.float64)
    out = np.zeros_like(rho)
    for s in range((n - m) // 2 + 1):
        coef = ((-1) ** s * math.factorial(n - s)
                / (math.factorial(s) * math.factorial((n + m) // 2 - s)
                   * math.factorial((n - m) // 2 - s)))
        out = out + coef * rho ** (n - 2 * s)
    return out


def zernike_moments(glyph, n_max=10):
    """Magnitudes |Z_nm| for all admissible (n, m), origin at the centroid.

    Pixel coordinates are divided by the half-diagonal of the square so the
    whole image lies inside the unit disk.
    """
    idx = zernike_indices(n_max)
    g = np.asarray(glyph, dtype=np.float64)
    H, W = g.shape
    ys, xs = np.nonzero(g)
    if ys.size == 0:
        raise ValueError("empty glyph")
    w = g[ys, xs]
    cy = np.sum(ys * w) / w.sum()
    cx = np.sum(xs * w) / w.sum()
    R = math.hypot(H, W) / 2.0
    y = (cy - ys) / R
    x = (xs - cx) / R
    rho = np.hypot(x, y)
    theta = np.arctan2(y, x)
    out = np.empty(len(idx))
    for k, (n, m) in enumerate(idx):
        z = (n + 1) / math.pi * np.sum(w * radial_polynomial(n, m, rho) * np.exp(-1j * m * theta))
        out[k] = abs(z)
    return out


# ------------------------------------------------------------- clustering


@dataclass
class Dendrogram:
    """Merges ``(i, j, distance, size)``; new clusters are numbered n, n+1, ..."""

    n_leaves: int
    merges: list = field(default_factory=list)

    def heights(self):
        return np.array([d for _, _, d, _ in self.merges])

    def to_text(self):
        lines = [f"# leaves {self.n_leaves}"]
        lines += [f"{i} {j} {d:.17g} {s}" for i, j, d, s in self.merges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [l.split() for l in text.splitlines() if l.strip()]
        n = int(rows[0][2])
        return cls(n, [(int(a), int(b), float(d), int(s)) for a, b, d, s in rows[1:]])


def single_linkage(points, cut_distance=math.inf):
    """Cluster rows of ``points``; merging stops above ``cut_distance``.

    Returns ``(labels, dendrogram)`` where ``labels[i]`` is a dense cluster id
    ordered by each cluster's smallest member index. The dendrogram always
    records the complete merge sequence.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    n = P.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    if cut_distance < 0:
        raise ValueError("cut_distance must be >= 0")
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(D, np.inf)
    active = list(range(n))
    node = list(range(n))
    size = [1] * n
    members = [[i] for i in range(n)]
    dendro = Dendrogram(n)
    assign = None
    for step in range(n - 1):
        sub = D[np.ix_(active, active)]
        k = int(np.argmin(sub))
        a, b = divmod(k, len(active))
        a, b = min(a, b), max(a, b)
        d = float(sub[a, b])
        i, j = active[a], active[b]
        if assign is None and d > cut_distance:
            assign = [list(members[x]) for x in active]
        dendro.merges.append((node[i], node[j], d, size[i] + size[j]))
        # Lance-Williams update for single linkage
        D[i, :] = np.minimum(D[i, :], D[j, :])
        D[:, i] = D[i, :]
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        node[i] = n + step
        size[i] += size[j]
        members[i] += members[j]
        active.remove(j)
    if assign is None:
        assign = [list(members[x]) for x in active]
    return _dense_labels(assign, n), dendro


def _dense_labels(groups, n):
    labels = np.empty(n, dtype=np.int64)
    for k, g in enumerate(sorted(groups, key=min)):
        labels[g] = k
    return labels


def cut_grid(dendrogram):
    """Candidate cut distances: 0, midpoints between distinct merge heights, and above the top."""
    h = np.unique(dendrogram.heights())
    if h.size == 0:
        return np.array([0.0])
    mids = (h[:-1] + h[1:]) / 2.0
    top = h[-1] * 1.5 if h[-1] > 0 else 1.0
    lo = h[0] / 2.0 if h[0] > 0 else 0.0
    return np.concatenate([[lo], mids, [top]])


def gap_cut_index(grid, dendrogram):
    """Grid index of the widest relative gap between consecutive merge heights."""
    h = np.unique(dendrogram.heights())
    if h.size < 2:
        return 0
    hp = np.maximum(h, 1e-12)
    k = int(np.argmax(np.log(hp[1:]) - np.log(hp[:-1])))
    return k + 1


# --------------------------------------------------------------- codebook


@dataclass
class ShapeCodebook:
    cut_distance: float
    mapping: dict
    n_max: int = 10
    script: str = ""

    @property
    def n_codes(self):
        return len(set(self.mapping.values()))

    def code_label(self, label):
        """Model label used for ``label``'s shape code."""
        if label not in self.mapping:
            raise KeyError(f"label {label!r} not in codebook")
        return f"#{self.mapping[label]}"

    def code_labels(self):
        return [f"#{c}" for c in sorted(set(self.mapping.values()))]

    def members(self, code):
        return sorted(l for l, c in self.mapping.items() if c == code)

    def to_json(self):
        return json.dumps({"version": CODEBOOK_VERSION, "cut_distance": self.cut_distance,
                           "n_max": self.n_max, "script": self.script,
                           "mapping": self.mapping}, ensure_ascii=False, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != CODEBOOK_VERSION:
            raise ValueError(f"codebook version {doc.get('version')}, expected {CODEBOOK_VERSION}")
        return cls(float(doc["cut_distance"]), {k: int(v) for k, v in doc["mapping"].items()},
                   int(doc["n_max"]), doc.get("script", ""))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def identity_codebook(labels, script=""):
    """One code per label, numbered in sorted label order."""
    return ShapeCodebook(0.0, {l: k + 1 for k, l in enumerate(sorted(labels))}, script=script)


def prototypes(glyph_sets, n_max=10):
    """Sorted labels and the mean Zernike vector of each label's glyphs."""
    labels = sorted(glyph_sets)
    protos = []
    for lab in labels:
        gs = glyph_sets[lab]
        if len(gs) == 0:
            raise ValueError(f"label {lab!r} has no glyphs")
        protos.append(np.mean([zernike_moments(normalize_glyph(g), n_max) for g in gs], axis=0))
    return labels, np.array(protos)


def codebook_at(labels, protos, cut, n_max=10, script=""):
    assign, _ = single_linkage(protos, cut)
    return ShapeCodebook(float(cut), {l: int(c) + 1 for l, c in zip(labels, assign)}, n_max, script)


@dataclass
class CodebookSelection:
    codebook: ShapeCodebook
    grid: np.ndarray
    x0_index: int
    scores: list
    dendrogram: Dendrogram


LEVELS = {"x-1": -1, "x0": 0, "x+1": 1}


def build_codebook(glyph_sets, cut_level="x0", evaluator=None, n_max=10, script="",
                   search_window=None):
    """Cluster label prototypes and cut the dendrogram.

    ``cut_level`` is ``"x-1"``, ``"x0"``, ``"x+1"`` or a numeric distance.
    X0 maximizes ``evaluator(codebook) -> F-measure`` over the cut grid when an
    evaluator is given; otherwise it sits in the widest relative gap between
    merge heights. ``search_window`` limits the evaluated grid to that many
    cuts either side of the gap cut. X-1 and X+1 are the neighbouring grid cuts.
    """
    labels, protos = prototypes(glyph_sets, n_max)
    _, dendro = single_linkage(protos, math.inf)
    grid = cut_grid(dendro)
    scores = []
    x0 = gap_cut_index(grid, dendro)
    if evaluator is not None:
        lo, hi = 0, len(grid)
        if search_window is not None:
            lo, hi = max(0, x0 - search_window), min(len(grid), x0 + search_window + 1)
        scores = [math.nan] * len(grid)
        for k in range(lo, hi):
            scores[k] = float(evaluator(codebook_at(labels, protos, grid[k], n_max, script)))
        x0 = lo + int(np.argmax(scores[lo:hi]))
    if isinstance(cut_level, str):
        if cut_level not in LEVELS:
            raise ValueError(f"cut level must be one of {sorted(LEVELS)} or a distance")
        k = min(max(x0 + LEVELS[cut_level], 0), len(grid) - 1)
        cut = float(grid[k])
    else:
        cut = float(cut_level)
        if cut < 0:
            raise ValueError("cut distance must be >= 0")
    cb = codebook_at(labels, protos, cut, n_max, script)
    return CodebookSelection(cb, grid, x0, scores, dendro)


def encode_transcription(labels, cb):
    """Replace each label by its code label; the space unit passes through."""
    from .gmmhmm import SPACE

    out = []
    for lab in labels:
        if lab == SPACE:
            out.append(lab)
        elif lab not in cb.mapping:
            raise KeyError(f"label {lab!r} not in codebook")
        else:
            out.append(cb.code_label(lab))
    return out
