"""JSON-lines dataset manifests."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field


@dataclass
class WordSpan:
    text: str
    start: float
    end: float
    keyword: str | None = None


@dataclass
class LineRecord:
    line_id: str
    image_path: str
    script: str | None = None
    transcription: str | None = None
    words: list = field(default_factory=list)
    split: str = "test"
    noisy: bool = False
    mask_path: str | None = None

    def keyword_spans(self):
        return [w for w in self.words if w.keyword]


_REQUIRED = ("line_id", "image_path")
_KNOWN = set(LineRecord.__dataclass_fields__)


def _record(doc, where):
    if not isinstance(doc, dict):
        raise ValueError(f"{where}: record must be a JSON object")
    for k in _REQUIRED:
        if k not in doc:
            raise ValueError(f"{where}: missing required field {k!r}")
    unknown = set(doc) - _KNOWN
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {sorted(unknown)}")
    words = []
    for w in doc.get("words") or []:
        try:
            span = WordSpan(**w)
        except TypeError as exc:
            raise ValueError(f"{where}: bad word span {w!r}") from exc
        if not span.start < span.end:
            raise ValueError(f"{where}: word span start must precede end")
        words.append(span)
    return LineRecord(**{**doc, "words": words})


def load_manifest(path, check_images=True):
    """Parse a manifest; image paths are resolved relative to the manifest."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{n}"
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}: malformed JSON ({exc.msg})") from None
            rec = _record(doc, where)
            for attr in ("image_path", "mask_path"):
                p = getattr(rec, attr)
                if p and not os.path.isabs(p):
                    setattr(rec, attr, os.path.join(base, p))
            if check_images and not os.path.exists(rec.image_path):
                raise ValueError(f"{where}: image not found: {rec.image_path}")
            out.append(rec)
    return out


def record_to_json(rec, base=None):
    d = asdict(rec)
    if base:
        for k in ("image_path", "mask_path"):
            if d[k]:
                d[k] = os.path.relpath(os.path.abspath(d[k]), base)
    return json.dumps(d, ensure_ascii=False, sort_keys=True)


def save_manifest(records, path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json(rec, base) + "\n")
