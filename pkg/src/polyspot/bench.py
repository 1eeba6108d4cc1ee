"""End-to-end benchmark on the seeded synthetic corpus.

Trains every model set from the corpus training split, selects each
script's shape-code cut on the validation split, then spots all keywords in
the test lines (clean and noisy) with the identified script. Reports script
identification accuracy, MAP, stage-I versus stage-II precision at a
matched recall, and boundary error of the shape-coded spotter against a
raw-label single-stage baseline.

Run ``python -m polyspot.bench --out DIR`` for a JSON summary.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import synth, training
from .evalkit import (GroundTruthSpan, evaluate, harmonic_mean, pr_curve,
                      precision_at_recall)
from .features import frame_span_to_columns
from .scriptid import confusion_matrix, identify_script
from .shapecode import build_codebook, encode_transcription
from .spotting import (STAGE_I, SpotConfig, Spotter, SpotterModels, build_line_models,
                       stage1_spot)

log = logging.getLogger(__name__)

COLLECT = SpotConfig(tau1=-1e12, tau2=-1e12)


@dataclass
class BenchConfig:
    seed: int = 2026
    scripts: tuple = synth.SCRIPTS
    n_train: int = 80
    n_val: int = 20
    n_test: int = 50
    search_window: int = 1
    line_cfg: dict = field(default_factory=dict)
    script_cfg: dict = field(default_factory=lambda: dict(n_states=6, target_mixtures=8))


@dataclass
class ScriptOutcome:
    script: str
    n_codes: int
    n_labels: int
    cut_distance: float
    map_clean: float
    map_noisy: float
    map_stage1_clean: float
    map_stage1_noisy: float
    boundary_error_coded: float
    boundary_error_baseline: float


@dataclass
class BenchResult:
    script_accuracy: float
    confusion: list
    map_clean: float
    map_noisy: float
    tau2: float
    stage2_precision: float
    stage2_recall: float
    stage1_precision_at_recall: float
    boundary_error_coded: float
    boundary_error_baseline: float
    runtime_s: float
    per_script: list

    def to_json(self):
        return json.dumps(asdict(self), indent=1, ensure_ascii=False)


def truths_of(prepared, keywords):
    return [GroundTruthSpan(p.record.line_id, w.keyword, w.start, w.end)
            for p in prepared for w in p.record.keyword_spans() if w.keyword in keywords]


def _baseline_spans(X, labels, base, cache, lb, line_id):
    key = tuple(labels)
    if key not in cache:
        cache[key] = build_line_models(labels, base, STAGE_I)
    return stage1_spot(X, labels, base, COLLECT, line_id, cache[key], lb)


def _stage1_f(models, script, prepared, forms):
    """Best F over stage-I thresholds on ``prepared`` lines (all keywords)."""
    red = models.reduced[script]
    coded = {kw: encode_transcription(list(f), models.codebooks[script]) for kw, f in forms.items()}
    lms = {kw: build_line_models(c, red, STAGE_I) for kw, c in coded.items()}
    dets = []
    for p in prepared:
        lb = red.state_loglik(p.features)
        for kw in forms:
            for h in stage1_spot(p.features, coded[kw], red, COLLECT, p.record.line_id, lms[kw], lb):
                h.keyword = kw
                h.x0, h.x1 = _columns(h, p.scale, models.window)
                dets.append(h.detection(STAGE_I))
    truths = truths_of(prepared, set(forms))
    rows = pr_curve(dets, truths)
    return max((harmonic_mean(pr, rc) for _, pr, rc in rows), default=0.0)


def _columns(h, scale, window):
    return frame_span_to_columns(h.a, h.b, scale, window)


def select_codebook(script, glyphs, train, val, alphabet, forms, cfg, window, line_cfg):
    """X0 maximizes validation stage-I F over cuts near the gap heuristic.

    Returns the selection plus the reduced model set trained for the winner.
    """
    trained = {}

    def evaluator(cb):
        key = tuple(sorted(cb.mapping.items()))
        if key not in trained:
            trained[key] = training.train_line_models(train, alphabet, line_cfg, cb)
        models = SpotterModels(None, {script: trained[key]}, {}, {script: cb}, window)
        f = _stage1_f(models, script, val, forms)
        log.info("%s: %d codes -> validation F %.4f", script, cb.n_codes, f)
        return f

    if val:
        sel = build_codebook(glyphs, "x0", evaluator, script=script,
                             search_window=cfg.search_window)
    else:
        sel = build_codebook(glyphs, "x0", script=script)
    cb = sel.codebook
    key = tuple(sorted(cb.mapping.items()))
    reduced = trained.get(key) or training.train_line_models(train, alphabet, line_cfg, cb)
    return sel, reduced


def calibrate_tau(dets, truths):
    """Threshold maximizing F on ``dets``; ``-inf`` accepts everything."""
    best, tau = -1.0, -math.inf
    for t, p, r in pr_curve(dets, truths):
        f = harmonic_mean(p, r)
        if f > best:
            best, tau = f, t
    return tau


def run_benchmark(workdir, cfg=BenchConfig()):
    t0 = time.perf_counter()
    spec = synth.SynthSpec(scripts=cfg.scripts, n_train=cfg.n_train, n_val=cfg.n_val,
                           n_test=cfg.n_test)
    corpus = synth.synth_dataset(cfg.seed, workdir, spec)
    window = SpotterModels(None, {}, {}, {}).window
    line_cfg = training.desk_config(**cfg.line_cfg)
    script_cfg = training.desk_config(**cfg.script_cfg)

    by = {s: {sp: [r for r in corpus.records if r.script == s and r.split == sp]
              for sp in ("train", "val", "test")} for s in cfg.scripts}
    prep = {s: {sp: training.prepare(rs, window, with_line_features=sp != "val")
                for sp, rs in d.items()} for s, d in by.items()}
    log.info("prepared corpus in %.1fs", time.perf_counter() - t0)

    script_models = training.train_scripts([p for s in cfg.scripts for p in prep[s]["train"]],
                                           script_cfg)
    models = SpotterModels(script_models, {}, {}, {}, window)
    baselines, selections = {}, {}
    for s in cfg.scripts:
        alphabet = corpus.alphabets[s]
        glyphs = synth.load_glyph_dir(f"{workdir}/glyphs/{s}")
        sel, reduced = select_codebook(s, glyphs, prep[s]["train"], prep[s]["val"], alphabet,
                                       corpus.forms[s], cfg, window, line_cfg)
        selections[s] = sel
        models.codebooks[s] = sel.codebook
        models.reduced[s] = reduced
        models.full[s] = training.train_word_models(prep[s]["train"], alphabet, line_cfg, window)
        baselines[s] = training.train_line_models(prep[s]["train"], alphabet, line_cfg)
        log.info("%s trained at %.1fs", s, time.perf_counter() - t0)

    # validation pass for tau2
    sp = Spotter(models, COLLECT)
    val_s2, val_truth = [], []
    for s in cfg.scripts:
        for p in prep[s]["val"]:
            em = sp.emissions(p.features, s)
            for kw, form in corpus.forms[s].items():
                _, hyps = sp.spot_line(p.features, s, list(form), p.record.line_id, kw, p.scale, em)
                val_s2 += [h.detection() for h in hyps]
        val_truth += truths_of(prep[s]["val"], set(corpus.forms[s]))
    tau2 = calibrate_tau(val_s2, val_truth) if val_truth else 0.0

    # test pass with identified scripts
    truth_scripts, pred_scripts = [], []
    s1, s2, base, test_truth = [], [], [], []
    noisy_ids = set()
    base_cache = {}
    for s in cfg.scripts:
        for p in prep[s]["test"]:
            lid = p.record.line_id
            if p.record.noisy:
                noisy_ids.add(lid)
            d = identify_script(p.line_features, script_models)
            truth_scripts.append(s)
            pred_scripts.append(d.script)
            use = d.script
            X, scale = p.features, p.scale
            if use != s:
                # the spotting rows depend on the identified script
                q = training.prepare([replace(p.record, script=use)], window)[0]
                X, scale = q.features, q.scale
            em = sp.emissions(X, use)
            lb_base = baselines[use].state_loglik(X)
            for kw, form in corpus.forms[use].items():
                _, hyps = sp.spot_line(X, use, list(form), lid, kw, scale, em)
                s1 += [h.detection(STAGE_I) for h in hyps]
                s2 += [h.detection() for h in hyps]
                for h in _baseline_spans(X, list(form), baselines[use], base_cache.setdefault(use, {}),
                                         lb_base, lid):
                    h.keyword = kw
                    h.x0, h.x1 = _columns(h, scale, window)
                    base.append(h.detection(STAGE_I))
        test_truth += truths_of(prep[s]["test"], set(corpus.forms[s]))

    def split(dets, noisy):
        return [d for d in dets if (d.line_id in noisy_ids) == noisy]

    def tsplit(noisy):
        return [t for t in test_truth if (t.line_id in noisy_ids) == noisy]

    acc2 = [d for d in s2 if d.score >= tau2]
    rep2 = evaluate(acc2, test_truth)
    p1 = precision_at_recall(pr_curve(s1, test_truth), rep2.recall)
    be_coded = evaluate(s1, test_truth).boundary_error
    be_base = evaluate(base, test_truth).boundary_error

    per = []
    for s in cfg.scripts:
        ids = {p.record.line_id for p in prep[s]["test"]}

        def sub(dets):
            return [d for d in dets if d.line_id in ids]

        tr = [t for t in test_truth if t.line_id in ids]
        sel = selections[s]
        per.append(ScriptOutcome(
            s, sel.codebook.n_codes, len(sel.codebook.mapping), sel.codebook.cut_distance,
            evaluate(split(sub(s2), False), [t for t in tr if t.line_id not in noisy_ids]).map,
            evaluate(split(sub(s2), True), [t for t in tr if t.line_id in noisy_ids]).map,
            evaluate(split(sub(s1), False), [t for t in tr if t.line_id not in noisy_ids]).map,
            evaluate(split(sub(s1), True), [t for t in tr if t.line_id in noisy_ids]).map,
            evaluate(sub(s1), tr).boundary_error, evaluate(sub(base), tr).boundary_error))

    cm = confusion_matrix(truth_scripts, pred_scripts, list(cfg.scripts))
    return BenchResult(
        script_accuracy=float(np.trace(cm) / max(1, cm.sum())),
        confusion=cm.tolist(),
        map_clean=evaluate(split(s2, False), tsplit(False)).map,
        map_noisy=evaluate(split(s2, True), tsplit(True)).map,
        tau2=float(tau2),
        stage2_precision=rep2.precision,
        stage2_recall=rep2.recall,
        stage1_precision_at_recall=p1,
        boundary_error_coded=be_coded,
        boundary_error_baseline=be_base,
        runtime_s=time.perf_counter() - t0,
        per_script=[asdict(o) for o in per],
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="working directory for the corpus")
    ap.add_argument("--seed", type=int, default=BenchConfig.seed)
    ap.add_argument("-v", "--verbose", action="store_true")
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)
    print(run_benchmark(a.out, BenchConfig(seed=a.seed)).to_json())


if __name__ == "__main__":
    main()
