"""Binary model archive: magic, version, JSON header, float64 payload.

Layout::

    8 bytes   magic b"PSMODEL\\0"
    <I        format version
    <Q        header length in bytes
    header    UTF-8 JSON describing every model set, codebook and the window
    payload   little-endian float64 arrays referenced by (offset, shape)

Arrays are stored at full precision, so reloaded models score bit-identically.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from . import features as ft
from .gmmhmm import Gmm, GmmHmm, ModelSet
from .scriptid import ScriptModelSet
from .shapecode import ShapeCodebook
from .spotting import SpotterModels

MAGIC = b"PSMODEL\0"
VERSION = 1
_HEAD = struct.Struct("<IQ")


class ArchiveError(ValueError):
    pass


class _Writer:
    def __init__(self):
        self.chunks, self.offset = [], 0

    def array(self, a):
        a = np.ascontiguousarray(a, dtype="<f8")
        ref = {"o": self.offset, "s": list(a.shape)}
        self.chunks.append(a.tobytes())
        self.offset += a.size
        return ref

    def model(self, m):
        return {"label": m.label, "transitions": self.array(m.transitions),
                "units": [list(u) for u in m.units],
                "states": [{"w": self.array(g.weights), "m": self.array(g.means),
                            "v": self.array(g.variances)} for g in m.states]}

    def model_set(self, ms):
        return {"feature_dim": ms.feature_dim, "charset": ms.charset,
                "models": [self.model(m) for m in ms.models.values()]}


class _Reader:
    def __init__(self, payload):
        self.payload = payload

    def array(self, ref):
        shape = tuple(ref["s"])
        n = int(np.prod(shape)) if shape else 1
        o = ref["o"]
        if o < 0 or o + n > self.payload.size:
            raise ArchiveError("archive truncated: payload reference out of range")
        return self.payload[o:o + n].reshape(shape).copy()

    def model(self, d):
        states = [Gmm(self.array(s["w"]), self.array(s["m"]), self.array(s["v"])) for s in d["states"]]
        return GmmHmm(d["label"], self.array(d["transitions"]), states,
                      [tuple(u) for u in d["units"]])

    def model_set(self, d):
        models = {}
        for md in d["models"]:
            m = self.model(md)
            models[m.label] = m
        return ModelSet(models, d["feature_dim"], d["charset"])


def save_models(models, path):
    """Write a :class:`SpotterModels` bundle to ``path``."""
    w = _Writer()
    sm = models.script_models
    header = {
        "window": asdict(models.window),
        "script_models": None if sm is None else {
            "feature_dim": sm.feature_dim,
            "models": {s: w.model(m) for s, m in sm.models.items()}},
        "reduced": {s: w.model_set(ms) for s, ms in (models.reduced or {}).items()},
        "full": {s: w.model_set(ms) for s, ms in (models.full or {}).items()},
        "codebooks": {s: json.loads(cb.to_json()) for s, cb in (models.codebooks or {}).items()},
    }
    head = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEAD.pack(VERSION, len(head)))
        fh.write(head)
        for c in w.chunks:
            fh.write(c)


def load_models(path):
    """Read an archive written by :func:`save_models`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + _HEAD.size:
        raise ArchiveError(f"{path}: archive truncated")
    if blob[:len(MAGIC)] != MAGIC:
        raise ArchiveError(f"{path}: not a model archive (bad magic)")
    version, n = _HEAD.unpack_from(blob, len(MAGIC))
    if version != VERSION:
        raise ArchiveError(f"{path}: archive version {version}, this build reads version {VERSION}")
    start = len(MAGIC) + _HEAD.size
    if len(blob) < start + n:
        raise ArchiveError(f"{path}: archive truncated in header")
    try:
        header = json.loads(blob[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: corrupt archive header") from exc
    body = blob[start + n:]
    if len(body) % 8:
        raise ArchiveError(f"{path}: archive truncated in payload")
    r = _Reader(np.frombuffer(body, dtype="<f8"))
    sm = None
    if header["script_models"] is not None:
        d = header["script_models"]
        sm = ScriptModelSet({s: r.model(m) for s, m in d["models"].items()}, d["feature_dim"])
    reduced = {s: r.model_set(d) for s, d in header["reduced"].items()}
    full = {s: r.model_set(d) for s, d in header["full"].items()}
    codebooks = {s: ShapeCodebook.from_json(json.dumps(d)) for s, d in header["codebooks"].items()}
    window = ft.WindowConfig(**header["window"])
    dims = {ms.feature_dim for ms in [*reduced.values(), *full.values()]}
    if sm is not None:
        dims.add(sm.feature_dim)
    if len(dims) > 1:
        raise ArchiveError(f"{path}: inconsistent feature dimensions {sorted(dims)}")
    if dims and dims.pop() != 3 * window.dim:
        raise ArchiveError(f"{path}: feature dimension does not match the window config")
    return SpotterModels(sm, reduced, full, codebooks, window)
