"""Command-line front end: ``polyspot <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import archive, imaging, synth, training
from . import features as ft
from .evalkit import GroundTruthSpan, MatchConfig, evaluate, pr_curve, write_pr_csv
from .manifest import load_manifest
from .scriptid import identify_script
from .shapecode import LEVELS, ShapeCodebook, build_codebook
from .spotting import (STAGE_I, STAGE_II, SpotConfig, SpotterModels, TranslationProvider,
                       read_results, region_features, spot_pipeline, text_gray, write_results)

log = logging.getLogger("polyspot")


def _cut(text):
    if text in LEVELS:
        return text
    try:
        d = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cut must be one of {', '.join(LEVELS)} or a distance")
    if not d >= 0:
        raise argparse.ArgumentTypeError("cut distance must be non-negative")
    return d


def _scripts(text):
    out = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in out if s not in synth.SCRIPTS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"scripts must be drawn from {', '.join(synth.SCRIPTS)}")
    return tuple(out)


def cmd_binarize(a):
    img = imaging.load_image(a.input)
    res = imaging.enhance_and_binarize(img, imaging.BinarizeConfig(gamma=a.gamma))
    imaging.save_mask(res.mask, a.output)
    print(f"{a.output}: {int(res.mask.sum())} text pixels, inverted={res.inverted}")


def cmd_synth(a):
    spec = synth.SynthSpec(scripts=a.scripts, n_train=a.train, n_val=a.val, n_test=a.lines,
                           alphabet_size=a.alphabet_size, noisy_test=not a.no_noise)
    corpus = synth.synth_dataset(a.seed, a.out, spec)
    print(f"{corpus.manifest_path}: {len(corpus.records)} lines")


def _open_archive(path):
    if path and os.path.exists(path):
        return archive.load_models(path)
    return SpotterModels(None, {}, {}, {}, ft.WindowConfig())


def cmd_train(a):
    recs = load_manifest(a.manifest)
    if a.split:
        recs = [r for r in recs if r.split == a.split]
    models = _open_archive(a.out)
    window = models.window
    if a.stage == "scriptid":
        wanted = set(a.script or synth.SCRIPTS)
        recs = [r for r in recs if r.script in wanted]
        if not recs:
            raise SystemExit("no training lines for the requested scripts")
        prep = training.prepare(recs, window, with_line_features=True)
        cfg = training.desk_config(n_states=a.states or 6, target_mixtures=a.mixtures or 8,
                                   max_iterations=a.iterations)
        models.script_models = training.train_scripts(prep, cfg)
    else:
        if not a.script or len(a.script) != 1:
            raise SystemExit("--script names exactly one script for reduced/full training")
        script = a.script[0]
        recs = [r for r in recs if r.script == script]
        if not recs:
            raise SystemExit(f"no training lines for {script}")
        alphabet = sorted({c for r in recs for w in r.words for c in w.text})
        prep = training.prepare(recs, window)
        cfg = training.desk_config(n_states=a.states or 3, target_mixtures=a.mixtures or 4,
                                   max_iterations=a.iterations)
        if a.stage == "reduced":
            if a.codebook:
                cb = ShapeCodebook.load(a.codebook)
            elif script in models.codebooks:
                cb = models.codebooks[script]
            else:
                raise SystemExit("reduced training needs --codebook")
            models.codebooks[script] = cb
            models.reduced[script] = training.train_line_models(prep, alphabet, cfg, cb)
        else:
            models.full[script] = training.train_word_models(prep, alphabet, cfg, window)
    archive.save_models(models, a.out)
    print(f"{a.out}: stage {a.stage} trained on {len(recs)} lines")


def cmd_codebook(a):
    glyphs = synth.load_glyph_dir(a.glyph_dir)
    script = a.script or os.path.basename(os.path.normpath(a.glyph_dir))
    sel = build_codebook(glyphs, a.cut, script=script)
    sel.codebook.save(a.out)
    if a.dendrogram:
        with open(a.dendrogram, "w", encoding="utf-8") as fh:
            fh.write(sel.dendrogram.to_text())
    merged = [sel.codebook.members(k) for k in range(1, sel.codebook.n_codes + 1)]
    merged = [m for m in merged if len(m) > 1]
    print(f"{a.out}: {sel.codebook.n_codes} codes for {len(glyphs)} labels at distance "
          f"{sel.codebook.cut_distance:.4g}; merged {merged}")


def cmd_identify(a):
    recs = load_manifest(a.manifest)
    models = archive.load_models(a.models)
    if models.script_models is None:
        raise SystemExit("archive has no script models")
    right = known = 0
    out = open(a.out, "w", encoding="utf-8") if a.out else sys.stdout
    try:
        for r in recs:
            img = imaging.load_image(r.image_path)
            res = imaging.enhance_and_binarize(img)
            X, _ = region_features(text_gray(img, res.inverted), models.window)
            d = identify_script(X, models.script_models)
            out.write(json.dumps({"line_id": r.line_id, "script": d.script, "margin": d.margin,
                                  "truth": r.script}, ensure_ascii=False) + "\n")
            if r.script:
                known += 1
                right += d.script == r.script
    finally:
        if a.out:
            out.close()
    if known:
        print(f"accuracy {right / known:.4f} ({right}/{known})", file=sys.stderr)


def cmd_spot(a):
    recs = load_manifest(a.manifest)
    if a.split:
        recs = [r for r in recs if r.split == a.split]
    models = archive.load_models(a.models)
    provider = TranslationProvider.from_tsv(a.lexicon)
    cfg = SpotConfig(a.tau1, a.tau2, a.max_hypotheses)
    res = spot_pipeline(recs, a.keyword, provider, models, cfg, known_script=a.known_script)
    hyps = sorted(res.stage1, key=lambda h: (not h.accepted, -(h.stage2_score if h.accepted
                                                               else h.stage1_score),
                                             h.line_id, h.a))
    write_results(hyps, a.out)
    for e in res.errors:
        print(f"{e.line_id}: {e.error}", file=sys.stderr)
    print(f"{a.out}: {len(res.hypotheses)} accepted of {len(res.stage1)} stage-I hypotheses "
          f"on {len(recs)} lines")


def cmd_evaluate(a):
    hyps = read_results(a.results)
    recs = load_manifest(a.truth, check_images=False)
    keywords = set(a.keywords.split(",")) if a.keywords else {h.keyword for h in hyps}
    lines = {r.line_id for r in recs}
    truths = [GroundTruthSpan(r.line_id, w.keyword, w.start, w.end)
              for r in recs for w in r.keyword_spans() if w.keyword in keywords]
    if a.stage == STAGE_II:
        dets = [h.detection(STAGE_II) for h in hyps if h.accepted and h.line_id in lines]
    else:
        dets = [h.detection(STAGE_I) for h in hyps if h.line_id in lines
                and math.isfinite(h.stage1_score)]
    cfg = MatchConfig(a.iou)
    rep = evaluate(dets, truths, cfg)
    text = rep.to_json()
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if a.pr_csv:
        write_pr_csv(pr_curve(dets, truths, cfg), a.pr_csv)
    print(f"P={rep.precision:.4f} R={rep.recall:.4f} F={rep.f_measure:.4f} MAP={rep.map:.4f} "
          f"BE={rep.boundary_error:.2f}%", file=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="polyspot", description="Multi-script keyword spotting in text-line images.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("binarize", help="text mask of a color image")
    s.add_argument("input")
    s.add_argument("output", help="mask file (PBM or PNG)")
    s.add_argument("--gamma", type=float, default=imaging.BinarizeConfig.gamma,
                   help="posterior threshold (default %(default)s)")
    s.set_defaults(func=cmd_binarize)

    s = sub.add_parser("synth", help="seeded synthetic corpus")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--scripts", type=_scripts, default=synth.SCRIPTS,
                   help="comma-separated subset of English,Bangla,Devanagari")
    s.add_argument("--lines", type=int, default=50, help="test lines per script")
    s.add_argument("--train", type=int, default=80, help="training lines per script")
    s.add_argument("--val", type=int, default=20, help="validation lines per script")
    s.add_argument("--alphabet-size", type=int, default=None)
    s.add_argument("--no-noise", action="store_true", help="skip the noisy test copies")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one model set into an archive")
    s.add_argument("--manifest", required=True)
    s.add_argument("--script", type=_scripts, default=None)
    s.add_argument("--stage", choices=("reduced", "full", "scriptid"), required=True)
    s.add_argument("--states", type=int, default=None)
    s.add_argument("--mixtures", type=int, default=None, help="target mixtures (power of two)")
    s.add_argument("--iterations", type=int, default=8, help="EM iterations per mixture stage")
    s.add_argument("--codebook", help="codebook JSON for --stage reduced")
    s.add_argument("--split", default="train", help="manifest split to train on ('' for all)")
    s.add_argument("--out", required=True, help="model archive, updated in place when present")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("codebook", help="shape-code a glyph directory")
    s.add_argument("--glyph-dir", required=True, help="one sub-directory of masks per label")
    s.add_argument("--cut", type=_cut, default="x0", help="x-1, x0, x+1 or a distance")
    s.add_argument("--script", default=None)
    s.add_argument("--dendrogram", help="also write the merge list here")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_codebook)

    s = sub.add_parser("identify-script", help="script of every manifest line")
    s.add_argument("--manifest", required=True)
    s.add_argument("--models", required=True)
    s.add_argument("--out", help="JSON lines (default stdout)")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("spot", help="two-stage keyword spotting")
    s.add_argument("--manifest", required=True)
    s.add_argument("--models", required=True)
    s.add_argument("--keyword", required=True)
    s.add_argument("--lexicon", default=None, help="TSV word/script/translation (default: bundled)")
    s.add_argument("--tau1", type=float, default=0.0)
    s.add_argument("--tau2", type=float, default=0.0)
    s.add_argument("--max-hypotheses", type=int, default=5)
    s.add_argument("--known-script", action="store_true",
                   help="trust manifest scripts instead of identifying them")
    s.add_argument("--split", default=None)
    s.add_argument("--out", required=True, help="results JSON lines")
    s.set_defaults(func=cmd_spot)

    s = sub.add_parser("evaluate", help="retrieval and boundary metrics")
    s.add_argument("--results", required=True)
    s.add_argument("--truth", required=True, help="manifest with keyword spans")
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--stage", choices=(STAGE_I, STAGE_II), default=STAGE_II)
    s.add_argument("--keywords", help="comma-separated; default: keywords present in results")
    s.add_argument("--pr-csv", help="also write the precision-recall curve")
    s.add_argument("--out", help="JSON report (default stdout)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, LookupError, OSError) as exc:
        print(f"polyspot {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
