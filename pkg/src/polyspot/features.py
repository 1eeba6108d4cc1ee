"""Sliding-window PHOG descriptors with delta/acceleration augmentation."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class WindowConfig:
    line_height: int = 64
    window_width: int = 16
    overlap_fraction: float = 0.5
    pyramid_levels: int = 2
    bins: int = 8
    theta_cap: int = 2

    def __post_init__(self):
        if self.window_width % 2 or self.window_width < 2:
            raise ValueError("window_width must be even and positive")
        if not 0.0 < self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must lie in (0, 1)")
        if self.line_height < 1 or self.bins < 1 or self.pyramid_levels < 0 or self.theta_cap < 1:
            raise ValueError("invalid window configuration")

    @property
    def step(self):
        return max(1, int(round(self.window_width * (1.0 - self.overlap_fraction))))

    @property
    def dim(self):
        return self.bins * sum(4 ** n for n in range(self.pyramid_levels + 1))

    def n_frames(self, width):
        return max(1, (width - self.window_width) // self.step + 1)


def normalize_height(img, cfg=WindowConfig()):
    """Scale a gray (bilinear) or boolean (nearest) image to ``cfg.line_height`` rows.

    Returns the scaled image; the width factor is ``line_height / height``.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("empty line")
    h, w = img.shape
    if h == cfg.line_height:
        return img.copy()
    factor = cfg.line_height / h
    new_w = max(1, int(round(w * factor)))
    size = (new_w, cfg.line_height)
    if img.dtype == bool:
        out = Image.fromarray(img.astype(np.uint8) * 255).resize(size, Image.NEAREST)
        return np.asarray(out) > 127
    out = Image.fromarray(img.astype(np.float32), mode="F").resize(size, Image.BILINEAR)
    return np.clip(np.asarray(out, dtype=np.float64), 0.0, 1.0)


def orientation_field(gray):
    """Gradient magnitude and signed orientation in degrees [0, 360), y pointing up."""
    g = np.asarray(gray, dtype=np.float64)
    p = np.pad(g, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[:-2, 1:-1] - p[2:, 1:-1]) / 2.0
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 360.0
    return mag, ang


def _cell_edges(n, parts):
    return [round(i * n / parts) for i in range(parts + 1)]


def phog_window(mag, ang, cfg=WindowConfig()):
    """Concatenated per-cell orientation histograms for one window, L2-normalized."""
    H, W = mag.shape
    b = np.minimum((ang * cfg.bins / 360.0).astype(np.int64), cfg.bins - 1)
    parts = []
    for level in range(cfg.pyramid_levels + 1):
        k = 2 ** level
        ys, xs = _cell_edges(H, k), _cell_edges(W, k)
        for i in range(k):
            for j in range(k):
                cm = mag[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].ravel()
                cb = b[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].ravel()
                parts.append(np.bincount(cb, weights=cm, minlength=cfg.bins))
    v = np.concatenate(parts)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def extract_phog_sequence(img, cfg=WindowConfig()):
    """(T, D) PHOG frames over a height-normalized line image.

    Boolean input is treated as a {0, 1} gray image.
    """
    g = np.asarray(img, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != cfg.line_height:
        raise ValueError(f"image height must equal line_height={cfg.line_height}")
    mag, ang = orientation_field(g)
    W = g.shape[1]
    ww, step = cfg.window_width, cfg.step
    if W < ww:
        mag = np.pad(mag, ((0, 0), (0, ww - W)))
        ang = np.pad(ang, ((0, 0), (0, ww - W)))
    T = cfg.n_frames(W)
    out = np.empty((T, cfg.dim))
    for t in range(T):
        x = t * step
        out[t] = phog_window(mag[:, x:x + ww], ang[:, x:x + ww], cfg)
    return out


def delta(seq, theta_cap=2):
    """Regression deltas over +-theta_cap neighbours with edge frames replicated."""
    if theta_cap < 1:
        raise ValueError("theta_cap must be >= 1")
    c = np.asarray(seq, dtype=np.float64)
    T = c.shape[0]
    idx = np.arange(T)
    num = np.zeros_like(c)
    for th in range(1, theta_cap + 1):
        num += th * (c[np.minimum(idx + th, T - 1)] - c[np.maximum(idx - th, 0)])
    return num / (2.0 * sum(th * th for th in range(1, theta_cap + 1)))


def augment_dynamic(seq, cfg=WindowConfig()):
    """``[static | delta | acceleration]`` per frame."""
    d1 = delta(seq, cfg.theta_cap)
    d2 = delta(d1, cfg.theta_cap)
    return np.hstack([np.asarray(seq, dtype=np.float64), d1, d2])


def frame_span_to_columns(a, b, scale, cfg=WindowConfig()):
    """Map frames ``[a, b)`` to source-image columns ``[x0, x1)``.

    Each frame owns the central ``step`` columns of its window; ``scale`` is
    the width factor applied before extraction.
    """
    pad = (cfg.window_width - cfg.step) / 2.0
    return (a * cfg.step + pad) / scale, (b * cfg.step + pad) / scale


def columns_to_frame_span(x0, x1, scale, cfg=WindowConfig()):
    pad = (cfg.window_width - cfg.step) / 2.0
    a = int(round((x0 * scale - pad) / cfg.step))
    b = int(round((x1 * scale - pad) / cfg.step))
    return max(a, 0), max(b, a + 1)


# -------------------------------------------------------------- flat dumps

DUMP_MAGIC = b"PHOGSEQ\0"
DUMP_VERSION = 1


def dump_sequence(seq, path):
    """Write ``magic | u32 version | u32 T | u32 D | float32 LE data``."""
    seq = np.asarray(seq, dtype="<f4")
    T, D = seq.shape
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<III", DUMP_VERSION, T, D))
        fh.write(seq.tobytes(order="C"))


def load_sequence(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != DUMP_MAGIC:
        raise ValueError(f"{path}: not a feature dump")
    version, T, D = struct.unpack("<III", raw[8:20])
    if version != DUMP_VERSION:
        raise ValueError(f"{path}: dump version {version}, expected {DUMP_VERSION}")
    body = raw[20:]
    if len(body) != 4 * T * D:
        raise ValueError(f"{path}: truncated feature dump")
    return np.frombuffer(body, dtype="<f4").reshape(T, D).astype(np.float64)
