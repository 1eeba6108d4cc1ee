"""Two-stage keyword spotting over text-line feature sequences.

Stage I decodes each line with a keyword line model built from the shape
coded (reduced) character models and proposes spans; stage II rescores each
span with the full character set and keeps those above a threshold. Both
stages score a span by the per-frame log-likelihood ratio of the keyword
chain against a filler loop on the same frames.
"""
from __future__ import annotations

import json
import logging
import math
import os
import unicodedata
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import features as ft
from . import imaging, zoneseg
from .evalkit import Detection
from .gmmhmm import SPACE, GraphBuilder, decode, segments_from_path
from .scriptid import identify_script
from .shapecode import encode_transcription

log = logging.getLogger(__name__)

STAGE_I, STAGE_II = "I", "II"
REJECTED = -math.inf


@dataclass(frozen=True)
class SpotConfig:
    tau1: float = 0.0
    tau2: float = 0.0
    max_hypotheses_per_line: int = 5

    def __post_init__(self):
        if not (math.isfinite(self.tau1) and math.isfinite(self.tau2)):
            raise ValueError("thresholds must be finite")
        if self.max_hypotheses_per_line < 1:
            raise ValueError("max_hypotheses_per_line must be >= 1")


@dataclass
class SpotHypothesis:
    line_id: str
    a: int
    b: int
    stage1_score: float
    stage2_score: float | None = None
    accepted: bool = False
    script: str = ""
    keyword: str = ""
    x0: float | None = None
    x1: float | None = None

    def to_json(self):
        keys = ("line_id", "script", "keyword", "a", "b", "x0", "x1", "stage1_score",
                "stage2_score", "accepted")
        d = asdict(self)
        return json.dumps({k: d[k] for k in keys}, ensure_ascii=False)

    def detection(self, stage=STAGE_II):
        score = self.stage2_score if stage == STAGE_II else self.stage1_score
        start, end = (self.x0, self.x1) if self.x0 is not None else (self.a, self.b)
        return Detection(self.line_id, self.keyword, start, end, score)


# ------------------------------------------------------------ translation

_BLOCKS = (("Bangla", 0x0980, 0x09FF), ("Devanagari", 0x0900, 0x097F))


def detect_script(word):
    """Script of a word from the Unicode block of its first letter."""
    for ch in word:
        if ch.isspace():
            continue
        cp = ord(ch)
        for name, lo, hi in _BLOCKS:
            if lo <= cp <= hi:
                return name
        if unicodedata.category(ch).startswith("L"):
            return "English"
    return "English"


class TranslationError(LookupError):
    pass


@dataclass
class TranslationProvider:
    """Lexicon lookup with an optional HTTP fallback.

    The HTTP endpoint receives ``?q=<word>&target=<script>`` and must answer
    with JSON ``{"translation": ...}``. Calls use a 5 s timeout and are not
    retried.
    """

    lexicon: dict = field(default_factory=dict)
    endpoint: str | None = None
    timeout: float = 5.0

    @property
    def kind(self):
        return "http" if self.endpoint else "lexicon"

    @classmethod
    def from_tsv(cls, path=None, endpoint=None):
        if path is None:
            text = resources.files("polyspot").joinpath("data/lexicon.tsv").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        lex = {}
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"lexicon line {n}: expected 3 tab-separated columns")
            word, script, tr = (c.strip() for c in cols)
            if word.casefold() == "word" and script.casefold() == "script":
                continue
            lex[(word.casefold(), script)] = tr
        return cls(lex, endpoint or os.environ.get("TRANSLATE_ENDPOINT"))

    def lookup(self, word, script):
        hit = self.lexicon.get((word.casefold(), script))
        if hit is not None:
            return hit
        if not self.endpoint:
            raise TranslationError(f"no translation for {word!r} into {script}")
        url = f"{self.endpoint}?{urllib.parse.urlencode({'q': word, 'target': script})}"
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise TranslationError(f"translation service returned status {exc.code}") from exc
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TranslationError(f"translation service failed: {exc}") from exc
        if "translation" not in doc:
            raise TranslationError("translation service response lacks 'translation'")
        return doc["translation"]


def translate(word, target_script, provider):
    if not word:
        raise ValueError("empty keyword")
    if detect_script(word) == target_script:
        return word
    return provider.lookup(word, target_script)


@dataclass
class KeywordQuery:
    source: str
    translated: dict
    encoded: dict

    @classmethod
    def build(cls, word, scripts, provider, codebooks):
        tr, enc = {}, {}
        for s in scripts:
            tr[s] = translate(word, s, provider)
            enc[s] = encode_transcription(list(tr[s]), codebooks[s])
        return cls(word, tr, enc)


# ------------------------------------------------------------ line models


@dataclass
class LineModel:
    """A compiled decoding graph plus its emission column map."""

    graph: object
    columns: np.ndarray
    keyword_states: np.ndarray

    @property
    def min_length(self):
        return int(np.sum(self.keyword_states))


def _compile(builder, model_set):
    g = builder.compile()
    _, offsets = model_set.bank()
    return LineModel(g, g.columns(offsets), g.roles("keyword"))


def _filler_labels(model_set, stage):
    return [l for l in model_set.labels if stage == STAGE_I or l != SPACE]


def build_line_models(keyword_labels, model_set, stage):
    """Return ``(keyword line model, filler model, keyword chain)``.

    Stage I wraps the keyword in Space units between two filler loops that
    include Space; stage II uses the bare keyword chain and a filler without
    Space.
    """
    if not keyword_labels:
        raise ValueError("empty keyword")
    for lab in keyword_labels:
        if lab not in model_set:
            raise KeyError(f"unknown label {lab!r}")
    if stage not in (STAGE_I, STAGE_II):
        raise ValueError(f"unknown stage {stage!r}")
    fill = _filler_labels(model_set, stage)

    gb = GraphBuilder(model_set)
    gb.node_to_node(gb.loop(gb.START, fill, "filler"), gb.END)
    filler = _compile(gb, model_set)

    gb = GraphBuilder(model_set)
    gb.node_to_node(gb.chain(gb.START, keyword_labels, "keyword"), gb.END)
    chain = _compile(gb, model_set)

    if stage == STAGE_II:
        return chain, filler, chain
    gb = GraphBuilder(model_set)
    n = gb.loop(gb.START, fill, "filler")
    n = gb.chain(n, [SPACE], "space")
    n = gb.chain(n, keyword_labels, "keyword")
    n = gb.chain(n, [SPACE], "space")
    n = gb.loop(n, fill, "filler")
    gb.node_to_node(n, gb.END)
    return _compile(gb, model_set), filler, chain


def _viterbi(log_b_all, lm):
    if log_b_all.shape[0] == 0:
        return REJECTED
    _, s = decode(log_b_all[:, lm.columns], lm.graph)
    return float(s)


def ratio_score(log_b_slice, chain, filler):
    """Per-frame keyword-vs-filler log-likelihood ratio; REJECTED when inadmissible."""
    T = log_b_slice.shape[0]
    if T < chain.min_length:
        return REJECTED
    k = _viterbi(log_b_slice, chain)
    f = _viterbi(log_b_slice, filler)
    if not (math.isfinite(k) and math.isfinite(f)):
        return REJECTED
    return (k - f) / T


def stage1_spot(seq, keyword_labels, model_set, cfg=SpotConfig(), line_id="", models=None,
                log_b_all=None):
    """Propose keyword spans by repeated forced alignment with found spans masked.

    ``log_b_all`` may carry precomputed ``model_set.state_loglik(seq)``.
    """
    X = np.asarray(seq, dtype=np.float64)
    line, filler, chain = models or build_line_models(keyword_labels, model_set, STAGE_I)
    if log_b_all is None:
        log_b_all = model_set.state_loglik(X)
    log_b = log_b_all[:, line.columns].copy()
    hyps = []
    for _ in range(cfg.max_hypotheses_per_line):
        if X.shape[0] < line.min_length:
            break
        path, score = decode(log_b, line.graph)
        if not math.isfinite(score):
            break
        segs = [s for s in segments_from_path(path, line.graph) if s[1] == "keyword"]
        a, b = segs[0][2], segs[-1][3]
        s1 = ratio_score(log_b_all[a:b], chain, filler)
        hyps.append(SpotHypothesis(line_id, a, b, s1))
        log_b[a:b, line.keyword_states] = -np.inf
    hyps = [h for h in hyps if h.stage1_score >= cfg.tau1]
    return sorted(hyps, key=lambda h: (-h.stage1_score, h.line_id, h.a))


def stage2_verify(seq_slice, keyword_labels, model_set, cfg=SpotConfig(), models=None,
                  log_b_slice=None):
    """Rescore a span with the full character set; returns ``(score, accepted)``."""
    _, filler, chain = models or build_line_models(keyword_labels, model_set, STAGE_II)
    X = np.asarray(seq_slice, dtype=np.float64)
    if X.shape[0] < chain.min_length:
        return REJECTED, False
    if log_b_slice is None:
        log_b_slice = model_set.state_loglik(X)
    s = ratio_score(log_b_slice, chain, filler)
    return s, bool(s >= cfg.tau2)


def rank(hyps):
    return sorted(hyps, key=lambda h: (-(h.stage2_score if h.stage2_score is not None
                                         else h.stage1_score), h.line_id, h.a))


# ------------------------------------------------------------ line preparation


@dataclass
class PreparedLine:
    """Features of the spotting region of one line and its geometry."""

    features: np.ndarray
    scale: float
    script: str | None = None
    decision: object = None


def region_features(region, window=ft.WindowConfig()):
    """Height-normalize a gray or binary region and return ``(features, width scale)``."""
    region = np.asarray(region)
    norm = ft.normalize_height(region, window)
    scale = norm.shape[1] / region.shape[1]
    seq = ft.extract_phog_sequence(norm.astype(np.float64), window)
    return ft.augment_dynamic(seq, window), scale


def text_gray(img, inverted):
    """Channel mean with text as the bright class."""
    g = imaging.as_color(img).mean(axis=2)
    return 1.0 - g if inverted else g


def spotting_rows(mask, script):
    """Row range of the middle zone for headline scripts, all rows otherwise."""
    if script in zoneseg.ZONED_SCRIPTS:
        z = zoneseg.segment_zones(mask, script)
        return z.middle_rows
    return 0, mask.shape[0]


def prepare_line(img, script, window=ft.WindowConfig(), binarized=None):
    """Binarize (unless given), locate the spotting rows and extract gray features."""
    res = binarized or imaging.enhance_and_binarize(img)
    r0, r1 = spotting_rows(res.mask, script)
    if not res.mask[r0:r1].any():
        raise ValueError("empty line")
    X, scale = region_features(text_gray(img, res.inverted)[r0:r1], window)
    return PreparedLine(X, scale, script)


# ------------------------------------------------------------ pipeline


@dataclass
class SpotterModels:
    """Everything the pipeline needs for every script."""

    script_models: object
    reduced: dict
    full: dict
    codebooks: dict
    window: ft.WindowConfig = ft.WindowConfig()


@dataclass
class LineError:
    line_id: str
    error: str


@dataclass
class SpotResult:
    hypotheses: list
    stage1: list
    errors: list
    scripts: dict


class Spotter:
    """Caches compiled line models per (script, keyword) across lines."""

    def __init__(self, models, cfg=SpotConfig()):
        self.models = models
        self.cfg = cfg
        self._cache = {}

    def line_models(self, script, labels):
        key = (script, tuple(labels))
        if key not in self._cache:
            coded = encode_transcription(labels, self.models.codebooks[script])
            self._cache[key] = (coded,
                                build_line_models(coded, self.models.reduced[script], STAGE_I),
                                build_line_models(labels, self.models.full[script], STAGE_II))
        return self._cache[key]

    def emissions(self, X, script):
        """Per-state log emissions of both model sets for one line."""
        return (self.models.reduced[script].state_loglik(X),
                self.models.full[script].state_loglik(X))

    def spot_line(self, X, script, labels, line_id="", keyword="", scale=1.0, emissions=None):
        """Stage I then stage II on one prepared line; returns (accepted, all stage-I)."""
        coded, m1, m2 = self.line_models(script, labels)
        lb1, lb2 = emissions or self.emissions(X, script)
        hyps = stage1_spot(X, coded, self.models.reduced[script], self.cfg, line_id, m1, lb1)
        w = self.models.window
        for h in hyps:
            h.script, h.keyword = script, keyword
            h.x0, h.x1 = ft.frame_span_to_columns(h.a, h.b, scale, w)
            h.stage2_score, h.accepted = stage2_verify(X[h.a:h.b], labels, self.models.full[script],
                                                       self.cfg, m2, lb2[h.a:h.b])
        return [h for h in hyps if h.accepted], hyps


def spot_pipeline(lines, keyword, provider, models, cfg=SpotConfig(), load=imaging.load_image,
                  known_script=False):
    """Run the full chain on ``lines`` (records with ``line_id`` and ``image_path``).

    Per-line failures are collected and do not stop the run. With
    ``known_script`` the record's script replaces identification.
    """
    sp = Spotter(models, cfg)
    accepted, stage1, errors, scripts = [], [], [], {}
    labels_for = {}
    for rec in lines:
        try:
            img = load(rec.image_path)
            res = imaging.enhance_and_binarize(img)
            if known_script and rec.script:
                script = rec.script
            else:
                full_X, _ = region_features(text_gray(img, res.inverted), models.window)
                script = identify_script(full_X, models.script_models).script
            scripts[rec.line_id] = script
            if script not in labels_for:
                labels_for[script] = list(translate(keyword, script, provider))
            prep = prepare_line(img, script, models.window, res)
            acc, s1 = sp.spot_line(prep.features, script, labels_for[script], rec.line_id,
                                   keyword, prep.scale)
            accepted.extend(acc)
            stage1.extend(s1)
        except (ValueError, KeyError, LookupError, OSError) as exc:
            log.warning("line %s: %s", rec.line_id, exc)
            errors.append(LineError(rec.line_id, str(exc)))
    return SpotResult(rank(accepted), stage1, errors, scripts)


def write_results(hyps, path):
    with open(path, "w", encoding="utf-8") as fh:
        for h in hyps:
            fh.write(h.to_json() + "\n")


def read_results(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(SpotHypothesis(**d))
    return out
