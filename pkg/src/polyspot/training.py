"""Build the spotter's model sets from manifest records."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import features as ft
from . import imaging
from .gmmhmm import SPACE, TrainConfig, init_model_set, train_embedded
from .scriptid import train_script_models
from .shapecode import encode_transcription
from .spotting import region_features, spotting_rows, text_gray

log = logging.getLogger(__name__)

WORD_PAD = 4


@dataclass
class PreparedRecord:
    record: object
    mask: np.ndarray
    region: np.ndarray
    features: np.ndarray
    scale: float
    line_features: np.ndarray = None


def prepare(records, window=ft.WindowConfig(), with_line_features=False):
    """Binarize each record and extract gray features of its spotting rows.

    ``region`` keeps the gray spotting rows so word crops can be cut later.
    """
    out = []
    for rec in records:
        img = imaging.load_image(rec.image_path)
        res = imaging.enhance_and_binarize(img)
        gray = text_gray(img, res.inverted)
        r0, r1 = spotting_rows(res.mask, rec.script)
        region = gray[r0:r1]
        X, scale = region_features(region, window)
        lf = region_features(gray, window)[0] if with_line_features else None
        out.append(PreparedRecord(rec, res.mask, region, X, scale, lf))
    return out


def line_labels(rec):
    """Character labels of a line with Space units at both margins and between words."""
    labels = [SPACE]
    for w in (rec.words or []):
        labels.extend(w.text)
        labels.append(SPACE)
    if len(labels) == 1 and rec.transcription:
        for word in rec.transcription.split():
            labels.extend(word)
            labels.append(SPACE)
    return labels


def desk_config(**kw):
    """Training schedule sized for the synthetic corpus."""
    base = dict(n_states=3, target_mixtures=4, max_iterations=8, tol=1e-4, space_states=1)
    base.update(kw)
    return TrainConfig(**base)


def _model_set(labels, dim, cfg, charset):
    return init_model_set(list(labels) + [SPACE], dim, cfg.n_states, cfg.space_states, charset)


def train_line_models(prepared, alphabet, cfg=None, codebook=None):
    """Line-level embedded training; with a codebook the labels are shape codes.

    Models are ordered by code (or sorted label) with Space last, so an
    identity codebook reproduces the raw-label model set exactly.
    """
    cfg = cfg or desk_config()
    data = []
    for p in prepared:
        labels = line_labels(p.record)
        if codebook is not None:
            labels = encode_transcription(labels, codebook)
        data.append((p.features, labels))
    dim = data[0][0].shape[1]
    if codebook is not None:
        units, charset = codebook.code_labels(), "reduced"
    else:
        units, charset = sorted(alphabet), "full"
    return train_embedded(data, _model_set(units, dim, cfg, charset), cfg)


def word_crops(p, window=ft.WindowConfig()):
    """``(features, labels)`` for every word of a prepared record."""
    out = []
    W = p.region.shape[1]
    for w in p.record.words:
        x0 = max(0, int(np.floor(w.start)) - WORD_PAD)
        x1 = min(W, int(np.ceil(w.end)) + WORD_PAD)
        crop = p.region[:, x0:x1]
        X, _ = region_features(crop, window)
        out.append((X, list(w.text)))
    return out


def train_word_models(prepared, alphabet, cfg=None, window=ft.WindowConfig()):
    """Full character set trained on word images (no Space unit)."""
    cfg = cfg or desk_config()
    data = [c for p in prepared for c in word_crops(p, window)]
    dim = data[0][0].shape[1]
    models = init_model_set(sorted(alphabet), dim, cfg.n_states, None, "full")
    return train_embedded(data, models, cfg)


def train_scripts(prepared, cfg=None):
    cfg = cfg or desk_config(n_states=6, target_mixtures=8)
    per = {}
    for p in prepared:
        per.setdefault(p.record.script, []).append(p.line_features)
    return train_script_models(per, cfg)
