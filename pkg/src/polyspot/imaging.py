"""Sub-band enhancement and Bayesian binarization of color text-line images.

Images are numpy arrays: color ``(H, W, 3)`` and gray ``(H, W)`` with values
in [0, 1]; binary masks are boolean ``(H, W)`` with True for text.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter
from skimage.filters import threshold_otsu

DOMAINS = ("color", "wavelet", "gradient")


@dataclass(frozen=True)
class BinarizeConfig:
    gamma: float = 0.05
    smooth_kernel: int = 3

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.smooth_kernel < 1 or self.smooth_kernel % 2 == 0:
            raise ValueError("smooth_kernel must be odd and >= 1")


@dataclass(frozen=True)
class Priors:
    p_text: float
    p_nontext: float

    def __post_init__(self):
        if not (0.0 < self.p_text < 1.0 and 0.0 < self.p_nontext < 1.0):
            raise ValueError("priors must lie in (0, 1)")
        if abs(self.p_text + self.p_nontext - 1.0) > 1e-12:
            raise ValueError("priors must sum to one")


def as_color(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected an (H, W, 3) color image, got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("color values must lie in [0, 1]")
    return img


def rescale(a):
    """Min-max rescale to [0, 1]; constant input maps to zeros."""
    lo, hi = float(a.min()), float(a.max())
    if hi <= lo:
        return np.zeros_like(a, dtype=np.float64)
    return (a - lo) / (hi - lo)


def haar_details(gray):
    """One-level Haar detail magnitudes (LH, HL, HH) upsampled to full size."""
    H, W = gray.shape
    g = np.pad(gray, ((0, H % 2), (0, W % 2)), mode="edge")
    a, b = g[0::2, 0::2], g[0::2, 1::2]
    c, d = g[1::2, 0::2], g[1::2, 1::2]
    lh = np.abs(a + b - c - d) / 2.0
    hl = np.abs(a - b + c - d) / 2.0
    hh = np.abs(a - b - c + d) / 2.0
    up = lambda s: np.repeat(np.repeat(s, 2, axis=0), 2, axis=1)[:H, :W]
    return up(lh), up(hl), up(hh)


def gradient_bands(gray):
    """Horizontal, vertical and diagonal absolute differences with clamped borders."""
    p = np.pad(gray, 1, mode="edge")
    horiz = np.abs(p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    vert = np.abs(p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    diag = np.abs(p[2:, 2:] - p[1:-1, 1:-1])
    return horiz, vert, diag


def decompose_and_combine(img, domain):
    """Sum the three sub-bands of one domain and rescale to [0, 1]."""
    img = as_color(img)
    if domain == "color":
        total = img.sum(axis=2)
    elif domain == "wavelet":
        total = sum(haar_details(img.mean(axis=2)))
    elif domain == "gradient":
        total = sum(gradient_bands(img.mean(axis=2)))
    else:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    return rescale(total)


def smooth(img, cfg=BinarizeConfig()):
    k = cfg.smooth_kernel
    if k == 1:
        return np.asarray(img, dtype=np.float64).copy()
    out = uniform_filter(np.asarray(img, dtype=np.float64), size=k, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def _check_same(*imgs):
    shape = imgs[0].shape
    if any(i.shape != shape for i in imgs):
        raise ValueError("sub-band images must share dimensions")


def estimate_priors(rgb_s, wav_s, grad_s):
    """Text/non-text priors from an Otsu split of the averaged smooth images."""
    _check_same(rgb_s, wav_s, grad_s)
    avg = (rgb_s + wav_s + grad_s) / 3.0
    if avg.max() <= avg.min():
        return Priors(0.5, 0.5)
    t = threshold_otsu(avg)
    p = float(np.mean(avg > t))
    p = min(max(p, 1e-6), 1.0 - 1e-6)
    return Priors(p, 1.0 - p)


def bayes_posterior(rgb_s, wav_s, grad_s, priors):
    """Per-pixel P(text | f) from averaged sub-band likelihoods."""
    _check_same(rgb_s, wav_s, grad_s)
    lt = (rgb_s + wav_s + grad_s) / 3.0
    ln = ((1.0 - rgb_s) + (1.0 - wav_s) + (1.0 - grad_s)) / 3.0
    num = lt * priors.p_text
    den = num + ln * priors.p_nontext
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return np.clip(out, 0.0, 1.0)


def binarize(posterior, cfg=BinarizeConfig()):
    return np.asarray(posterior) >= cfg.gamma


@dataclass
class BinarizeResult:
    mask: np.ndarray
    posterior: np.ndarray
    priors: Priors
    inverted: bool


def enhance_and_binarize(img, cfg=BinarizeConfig()):
    """Full chain: fuse sub-bands, smooth, estimate priors, threshold the posterior.

    The color-domain image is inverted when its median is bright, so text is
    the high-valued class for either polarity.
    """
    img = as_color(img)
    rgb = decompose_and_combine(img, "color")
    inverted = bool(np.median(rgb) > 0.5)
    if inverted:
        rgb = 1.0 - rgb
    rgb_s = smooth(rgb, cfg)
    wav_s = smooth(decompose_and_combine(img, "wavelet"), cfg)
    grad_s = smooth(decompose_and_combine(img, "gradient"), cfg)
    priors = estimate_priors(rgb_s, wav_s, grad_s)
    post = bayes_posterior(rgb_s, wav_s, grad_s, priors)
    return BinarizeResult(binarize(post, cfg), post, priors, inverted)


def load_image(path):
    """Read any Pillow-supported raster as float color in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def load_mask(path):
    """Read a mask written by :func:`save_mask`; dark pixels are text."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) < 128


def save_mask(mask, path):
    """Write a text mask as a portable bitmap (text pixels black)."""
    Image.fromarray(~np.asarray(mask, dtype=bool)).convert("1").save(path)


def save_image(img, path):
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
