"""Seeded procedural corpus of multi-script text lines with ground truth.

Each script gets an alphabet of stroke-built glyph classes. A few classes
are left-right mirror images of another class: Zernike magnitudes cannot
tell such a pair apart, gradient features can. Lines are rendered with
supersampling so the ground-truth mask is the half-coverage set.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from . import imaging
from .manifest import LineRecord, WordSpan, save_manifest
from .shapecode import normalize_glyph, zernike_moments
from .spotting import TranslationProvider, translate

KEYWORDS = ("College", "School", "Father", "Professor", "History", "Water", "Geography",
            "Research", "Morning", "Food")
SCRIPTS = ("English", "Bangla", "Devanagari")
EXTRA_CHARS = {
    "English": "bkmuvwz",
    "Bangla": "চছটডনমরশ",
    "Devanagari": "चछटडमयवश",
}
LOOKALIKE_PAIRS = {
    "English": (("F", "P"), ("t", "l")),
    "Bangla": (("ব", "ক"), ("ল", "ত")),
    "Devanagari": (("प", "ब"), ("स", "भ")),
}
UPPER_MARKS = set("িীেোॉং" + "ि" + "ी" + "े" + "ो")
LOWER_MARKS = set("ুূ্" + "ु" + "ू" + "्")

LINE_H = 72
SS = 4
GEOM = {
    # body top/bottom, glyph width, intra-word gap, stroke width (pixels at 1x)
    "English": dict(top=16, bottom=56, width=30, gap=5, stroke=3.0),
    "Bangla": dict(top=17, bottom=51, width=24, gap=0, stroke=3.0),
    "Devanagari": dict(top=17, bottom=51, width=24, gap=0, stroke=3.0),
}
HEADLINE = (13, 17)
UPPER_BOX = (3, 11)
LOWER_BOX = (55, 66)
WORD_GAP = 24
MARGIN = 20
LATTICE = (0.1, 0.37, 0.63, 0.9)


@dataclass
class GlyphClass:
    strokes: list
    marks: list = field(default_factory=list)

    def mirrored(self):
        def flip(st):
            kind, pts = st
            if kind == "poly":
                return kind, [(1.0 - x, y) for x, y in pts]
            cx, cy, rx, ry, a0, a1 = pts
            return kind, (1.0 - cx, cy, rx, ry, 180.0 - a1, 180.0 - a0)

        return GlyphClass([flip(s) for s in self.strokes],
                          [(zone, flip(s)) for zone, s in self.marks])


@dataclass
class SynthSpec:
    scripts: tuple = SCRIPTS
    keywords: tuple = KEYWORDS
    n_train: int = 80
    n_val: int = 20
    n_test: int = 50
    words_per_line: tuple = (3, 5)
    alphabet_size: int | None = None
    glyphs_per_label: int = 6
    noisy_test: bool = True
    noisy_train_every: int = 3

    def __post_init__(self):
        if min(self.n_train, self.n_test, self.glyphs_per_label) < 1 or self.n_val < 0:
            raise ValueError("sizes must be positive")
        if not self.scripts or not self.keywords:
            raise ValueError("need at least one script and one keyword")


# ------------------------------------------------------------- glyph design


def _random_poly(rng, xs=LATTICE, ys=LATTICE):
    n = int(rng.integers(2, 4))
    pts = []
    while len(pts) < n:
        p = (float(rng.choice(xs)), float(rng.choice(ys)))
        if not pts or p != pts[-1]:
            pts.append(p)
    return "poly", pts


def _random_class(rng, script):
    if script == "English":
        strokes = [_random_poly(rng) for _ in range(int(rng.integers(2, 4)))]
    elif script == "Devanagari":
        strokes = [("poly", [(0.85, 0.0), (0.85, 1.0)])]
        strokes += [_random_poly(rng, xs=(0.1, 0.35, 0.6)) for _ in range(int(rng.integers(1, 3)))]
    else:
        a0 = float(rng.uniform(0, 360))
        strokes = [("arc", (float(rng.uniform(0.4, 0.6)), float(rng.uniform(0.45, 0.6)),
                            float(rng.uniform(0.25, 0.4)), float(rng.uniform(0.3, 0.42)),
                            a0, a0 + float(rng.uniform(180, 300))))]
        strokes.append(_random_poly(rng))
    return GlyphClass(strokes)


def _stroke_points(kind, pts, x0, y0, w, h):
    if kind == "poly":
        return [(x0 + x * w, y0 + y * h) for x, y in pts]
    cx, cy, rx, ry, a0, a1 = pts
    n = max(8, int(abs(a1 - a0) / 10))
    ang = np.radians(np.linspace(a0, a1, n))
    return [(x0 + (cx + rx * math.cos(a)) * w, y0 + (cy + ry * math.sin(a)) * h) for a in ang]


def _draw(draw, kind, pts, box, stroke, rng=None, jitter=0.0):
    x0, y0, w, h = box
    if rng is not None and jitter > 0 and kind == "poly":
        pts = [(x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter)) for x, y in pts]
    xy = [(x * SS, y * SS) for x, y in _stroke_points(kind, pts, x0, y0, w, h)]
    draw.line(xy, fill=255, width=max(1, int(round(stroke * SS))), joint="curve")
    r = stroke * SS / 2.0
    for x, y in (xy[0], xy[-1]):
        draw.ellipse((x - r, y - r, x + r, y + r), fill=255)


def render_glyph_body(gc, script, rng=None, jitter=0.0, pad=4):
    """Binary image of a glyph's body (no headline or marks) at the nominal stroke width."""
    g = GEOM[script]
    w, h = g["width"], g["bottom"] - g["top"]
    W, H = w + 2 * pad, h + 2 * pad
    im = Image.new("L", (W * SS, H * SS), 0)
    d = ImageDraw.Draw(im)
    for kind, pts in gc.strokes:
        _draw(d, kind, pts, (pad, pad, w, h), g["stroke"], rng, jitter)
    cov = np.asarray(im.resize((W, H), Image.BOX), dtype=np.float64) / 255.0
    return cov >= 0.5


def _zernike(gc, script):
    return zernike_moments(normalize_glyph(render_glyph_body(gc, script)))


def design_alphabet(rng, script, labels, min_dist=100.0):
    """Glyph classes for ``labels``; designated look-alike pairs are mirror images.

    Other classes are resampled until their Zernike vectors sit at least
    ``min_dist`` from every accepted class and are not mirror-symmetric.
    """
    pairs = {b: a for a, b in LOOKALIKE_PAIRS.get(script, ()) if a in labels and b in labels}
    classes, vecs = {}, []
    for lab in labels:
        if lab in pairs:
            continue
        for attempt in range(400):
            gc = _random_class(rng, script)
            body = render_glyph_body(gc, script)
            sym = np.logical_and(body, body[:, ::-1]).sum() / max(1, np.logical_or(body, body[:, ::-1]).sum())
            if sym > 0.6:
                continue
            z = _zernike(gc, script)
            if not vecs or min(np.linalg.norm(z - v) for v in vecs) >= min_dist:
                break
        classes[lab] = gc
        vecs.append(z)
    for b, a in pairs.items():
        classes[b] = classes[a].mirrored()
    for lab, gc in classes.items():
        if lab in UPPER_MARKS:
            gc.marks.append(("upper", _random_poly(rng, xs=(0.2, 0.5, 0.8), ys=(0.1, 0.9))))
        if lab in LOWER_MARKS:
            gc.marks.append(("lower", _random_poly(rng, xs=(0.2, 0.5, 0.8), ys=(0.1, 0.9))))
    return classes


# ------------------------------------------------------------- line rendering


def render_line(words, classes, script, rng, jitter=0.03):
    """Render words (lists of labels); returns (coverage, word spans in pixels)."""
    g = GEOM[script]
    widths = []
    for w in words:
        widths.append(len(w) * g["width"] + (len(w) - 1) * g["gap"])
    total = 2 * MARGIN + sum(widths) + WORD_GAP * (len(words) - 1)
    im = Image.new("L", (total * SS, LINE_H * SS), 0)
    d = ImageDraw.Draw(im)
    x = MARGIN
    spans = []
    headline = script in ("Bangla", "Devanagari")
    for word, ww in zip(words, widths):
        start = x
        for lab in word:
            gc = classes[lab]
            gw = g["width"] * rng.uniform(0.92, 1.0)
            stroke = g["stroke"] + rng.uniform(-0.4, 0.4)
            box = (x + (g["width"] - gw) / 2, g["top"], gw, g["bottom"] - g["top"])
            for kind, pts in gc.strokes:
                _draw(d, kind, pts, box, stroke, rng, jitter)
            for zone, (kind, pts) in gc.marks:
                y0, y1 = UPPER_BOX if zone == "upper" else LOWER_BOX
                _draw(d, kind, pts, (x + 4, y0, g["width"] - 8, y1 - y0), stroke, rng, jitter)
            x += g["width"] + g["gap"]
        x -= g["gap"]
        if headline:
            d.rectangle((start * SS, HEADLINE[0] * SS, x * SS - 1, HEADLINE[1] * SS - 1), fill=255)
        spans.append((start, x))
        x += WORD_GAP
    cov = np.asarray(im.resize((total, LINE_H), Image.BOX), dtype=np.float64) / 255.0
    return cov, spans


def colorize(cov, rng):
    """High-contrast flat colors, either polarity."""
    dark = rng.uniform(0.0, 0.25, size=3)
    light = rng.uniform(0.75, 1.0, size=3)
    fg, bg = (dark, light) if rng.random() < 0.7 else (light, dark)
    return bg[None, None, :] + (fg - bg)[None, None, :] * cov[:, :, None]


def add_noise(img, rng, blur=0.7, sigma=0.04, speckle=0.005):
    out = np.stack([gaussian_filter(img[:, :, c], blur) for c in range(3)], axis=2)
    out = out + rng.normal(0.0, sigma, size=out.shape)
    flip = rng.random(out.shape[:2]) < speckle
    out[flip] = rng.random((int(flip.sum()), 1))
    return np.clip(out, 0.0, 1.0)


# ------------------------------------------------------------- corpus


def _alphabet(script, keyword_forms, size):
    need = sorted({c for w in keyword_forms for c in w})
    if size is None:
        size = len(need) + 4
    if len(need) > size:
        raise ValueError(f"keywords need {len(need)} {script} characters but alphabet_size is {size}; "
                         "keyword not expressible in alphabet")
    extra = [c for c in EXTRA_CHARS[script] if c not in need][:size - len(need)]
    return sorted(need + extra)


def confusers(form, script, alphabet):
    """Keyword forms with one look-alike member swapped for its partner."""
    out = []
    for a, b in LOOKALIKE_PAIRS.get(script, ()):
        if a not in alphabet or b not in alphabet:
            continue
        for src, dst in ((a, b), (b, a)):
            if src in form:
                out.append(form.replace(src, dst))
    return out


def _filler_word(rng, alphabet, banned):
    while True:
        w = "".join(rng.choice(alphabet, size=int(rng.integers(3, 7))))
        if w not in banned:
            return w


def _line_words(rng, k, keywords, forms, conf, alphabet, banned, spec):
    n_fill = int(rng.integers(spec.words_per_line[0], spec.words_per_line[1] + 1))
    words = [(_filler_word(rng, alphabet, banned), None) for _ in range(n_fill)]
    first = keywords[k % len(keywords)]
    chosen = [first]
    if rng.random() < 0.3:
        chosen.append(keywords[int(rng.integers(len(keywords)))])
    for kw in chosen:
        words.insert(int(rng.integers(len(words) + 1)), (forms[kw], kw))
    conf_pool = [c for kw in keywords for c in conf[kw]]
    if conf_pool and rng.random() < 0.5:
        c = conf_pool[int(rng.integers(len(conf_pool)))]
        words.insert(int(rng.integers(len(words) + 1)), (c, None))
    return words


@dataclass
class SynthCorpus:
    records: list
    alphabets: dict
    classes: dict
    forms: dict
    manifest_path: str | None = None


def synth_dataset(seed, out_dir, spec=SynthSpec(), provider=None):
    """Write images, masks, glyph samples and ``manifest.jsonl`` under ``out_dir``."""
    provider = provider or TranslationProvider.from_tsv()
    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    records, alphabets, all_classes, all_forms = [], {}, {}, {}
    for script in spec.scripts:
        srng = np.random.default_rng([seed, SCRIPTS.index(script) if script in SCRIPTS else 99])
        forms = {kw: translate(kw, script, provider) for kw in spec.keywords}
        alphabet = _alphabet(script, forms.values(), spec.alphabet_size)
        classes = design_alphabet(srng, script, alphabet)
        conf = {kw: [c for c in confusers(forms[kw], script, alphabet) if c not in forms.values()]
                for kw in spec.keywords}
        banned = set(forms.values()) | {c for v in conf.values() for c in v}
        alphabets[script], all_classes[script], all_forms[script] = alphabet, classes, forms
        _write_glyphs(out_dir, script, classes, srng, spec.glyphs_per_label)
        splits = [("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)]
        for split, n in splits:
            for i in range(n):
                words = _line_words(srng, i, list(spec.keywords), forms, conf, np.array(alphabet),
                                    banned, spec)
                cov, spans = render_line([list(w) for w, _ in words], classes, script, srng)
                img = colorize(cov, srng)
                line_id = f"{script[:3].lower()}-{split}-{i:03d}"
                variants = [(line_id, img, False)]
                if split == "test" and spec.noisy_test:
                    variants.append((line_id + "-n", add_noise(img, srng), True))
                elif split == "train" and spec.noisy_train_every and i % spec.noisy_train_every == 2:
                    variants = [(line_id, add_noise(img, srng), True)]
                for lid, im_, noisy in variants:
                    rel_img = os.path.join("lines", f"{lid}.ppm")
                    rel_mask = os.path.join("masks", f"{lid}.pbm")
                    os.makedirs(os.path.join(out_dir, "lines"), exist_ok=True)
                    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
                    imaging.save_image(im_, os.path.join(out_dir, rel_img))
                    imaging.save_mask(cov >= 0.5, os.path.join(out_dir, rel_mask))
                    ws = [WordSpan(w, float(a), float(b), kw) for (w, kw), (a, b) in zip(words, spans)]
                    records.append(LineRecord(lid, os.path.join(out_dir, rel_img), script,
                                              " ".join(w for w, _ in words), ws, split, noisy,
                                              os.path.join(out_dir, rel_mask)))
    path = os.path.join(out_dir, "manifest.jsonl")
    save_manifest(records, path)
    return SynthCorpus(records, alphabets, all_classes, all_forms, path)


def glyph_dir_name(label):
    return "U+" + "".join(f"{ord(c):04X}" for c in label)


def label_from_dir(name):
    if not name.startswith("U+"):
        return name
    h = name[2:]
    return "".join(chr(int(h[i:i + 4], 16)) for i in range(0, len(h), 4))


def _write_glyphs(out_dir, script, classes, rng, n):
    for lab, gc in classes.items():
        d = os.path.join(out_dir, "glyphs", script, glyph_dir_name(lab))
        os.makedirs(d, exist_ok=True)
        for k in range(n):
            imaging.save_mask(render_glyph_body(gc, script, rng, jitter=0.02),
                              os.path.join(d, f"{k:02d}.pbm"))


def load_glyph_dir(path):
    """``{label: [mask, ...]}`` from one directory per label."""
    out = {}
    for name in sorted(os.listdir(path)):
        sub = os.path.join(path, name)
        if not os.path.isdir(sub):
            continue
        files = sorted(f for f in os.listdir(sub) if f.endswith((".pbm", ".png", ".pgm")))
        out[label_from_dir(name)] = [imaging.load_mask(os.path.join(sub, f)) for f in files]
    if not out:
        raise ValueError(f"no glyph directories under {path}")
    return out
