import json

import pytest

from polyspot import archive, cli
from polyspot.spotting import read_results


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    run = lambda *a: cli.main([str(x) for x in a])
    assert run("synth", "--seed", 4, "--scripts", "English,Bangla", "--lines", 2, "--train", 4,
               "--val", 0, "--out", d / "corpus") == 0
    man = d / "corpus" / "manifest.jsonl"
    for s in ("English", "Bangla"):
        assert run("codebook", "--glyph-dir", d / "corpus" / "glyphs" / s, "--out",
                   d / f"{s}.json", "--dendrogram", d / f"{s}.txt") == 0
        assert run("train", "--manifest", man, "--script", s, "--stage", "reduced", "--codebook",
                   d / f"{s}.json", "--mixtures", 1, "--iterations", 2, "--out", d / "m.psm") == 0
        assert run("train", "--manifest", man, "--script", s, "--stage", "full", "--mixtures", 1,
                   "--iterations", 2, "--out", d / "m.psm") == 0
    assert run("train", "--manifest", man, "--stage", "scriptid", "--states", 2, "--mixtures", 1,
               "--iterations", 2, "--out", d / "m.psm") == 0
    return d


def test_archive_has_everything(workdir):
    m = archive.load_models(str(workdir / "m.psm"))
    assert set(m.reduced) == set(m.full) == set(m.codebooks) == {"English", "Bangla"}
    assert m.script_models.scripts == ["Bangla", "English"]


def test_identify_spot_evaluate(workdir, capsys):
    man = workdir / "corpus" / "manifest.jsonl"
    assert cli.main(["identify-script", "--manifest", str(man), "--models", str(workdir / "m.psm"),
                     "--out", str(workdir / "ids.jsonl")]) == 0
    ids = [json.loads(l) for l in open(workdir / "ids.jsonl", encoding="utf-8")]
    assert len(ids) == 16 and {d["script"] for d in ids} <= {"English", "Bangla"}
    res = workdir / "r.jsonl"
    assert cli.main(["spot", "--manifest", str(man), "--split", "test", "--models",
                     str(workdir / "m.psm"), "--keyword", "College", "--tau1=-1e9",
                     "--out", str(res)]) == 0
    hyps = read_results(str(res))
    assert hyps and all(h.keyword == "College" and h.a < h.b for h in hyps)
    assert cli.main(["evaluate", "--results", str(res), "--truth", str(man), "--stage", "I",
                     "--pr-csv", str(workdir / "pr.csv"), "--out", str(workdir / "rep.json")]) == 0
    rep = json.loads((workdir / "rep.json").read_text())
    assert {"precision", "recall", "f_measure", "map", "boundary_error"} <= set(rep)
    assert (workdir / "pr.csv").read_text().startswith("threshold,precision,recall")


def test_binarize(workdir, tmp_path):
    src = next((workdir / "corpus" / "lines").glob("*.ppm"))
    assert cli.main(["binarize", str(src), str(tmp_path / "m.pbm"), "--gamma", "0.3"]) == 0
    assert (tmp_path / "m.pbm").exists()


def test_errors(tmp_path, capsys):
    assert cli.main(["evaluate", "--results", str(tmp_path / "none.jsonl"),
                     "--truth", str(tmp_path / "none.jsonl")]) == 1
    assert "polyspot evaluate" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["codebook", "--glyph-dir", "x", "--cut", "x+7", "--out", "y"])
    with pytest.raises(SystemExit):
        cli.main(["synth", "--seed", "1", "--scripts", "Klingon", "--out", "y"])


def test_help_lists_subcommands():
    text = cli.build_parser().format_help()
    for sub in ("binarize", "synth", "train", "codebook", "identify-script", "spot", "evaluate"):
        assert sub in text
