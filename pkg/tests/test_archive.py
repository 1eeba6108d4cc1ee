import numpy as np
import pytest

from polyspot import archive
from polyspot import features as ft
from polyspot.gmmhmm import SPACE, Gmm, GmmHmm, ModelSet
from polyspot.scriptid import ScriptModelSet, score_script
from polyspot.shapecode import identity_codebook
from polyspot.spotting import SpotterModels

WIN = ft.WindowConfig(pyramid_levels=0, bins=2)
D = 3 * WIN.dim


def rand_model(rng, label, n=3, mix=2):
    A = np.zeros((n, n + 1))
    for i in range(n):
        p = rng.uniform(0.2, 0.9)
        A[i, i], A[i, i + 1] = p, 1 - p
    states = [Gmm(rng.dirichlet(np.ones(mix)), rng.normal(size=(mix, D)),
                  rng.uniform(0.1, 2.0, size=(mix, D))) for _ in range(n)]
    return GmmHmm(label, A, states)


def bundle(seed=0):
    rng = np.random.default_rng(seed)
    red = ModelSet({k: rand_model(rng, k) for k in ("#1", "#2", SPACE)}, D, "reduced")
    full = ModelSet({k: rand_model(rng, k) for k in ("a", "b")}, D, "full")
    sm = ScriptModelSet({"English": rand_model(rng, "English", 4, 4)}, D)
    cb = identity_codebook(["a", "b"], "English")
    return SpotterModels(sm, {"English": red}, {"English": full}, {"English": cb}, WIN)


def test_round_trip_bit_exact(tmp_path):
    m = bundle()
    p = str(tmp_path / "m.psm")
    archive.save_models(m, p)
    r = archive.load_models(p)
    probe = np.random.default_rng(9).normal(size=(12, D))
    for s in ("reduced", "full"):
        a, b = getattr(m, s)["English"], getattr(r, s)["English"]
        assert a.labels == b.labels and a.charset == b.charset
        assert np.array_equal(a.state_loglik(probe), b.state_loglik(probe))
    assert score_script(probe, m.script_models.models["English"]) == \
        score_script(probe, r.script_models.models["English"])
    assert r.codebooks["English"].mapping == m.codebooks["English"].mapping
    assert r.window == WIN
    archive.save_models(r, str(tmp_path / "again.psm"))
    assert open(p, "rb").read() == open(tmp_path / "again.psm", "rb").read()


def test_wrong_magic(tmp_path):
    p = tmp_path / "x.psm"
    p.write_bytes(b"NOTMODEL" + b"\0" * 32)
    with pytest.raises(archive.ArchiveError, match="magic"):
        archive.load_models(str(p))


def test_future_version(tmp_path):
    p = tmp_path / "m.psm"
    archive.save_models(bundle(), str(p))
    blob = bytearray(p.read_bytes())
    blob[8:12] = (archive.VERSION + 1).to_bytes(4, "little")
    p.write_bytes(bytes(blob))
    with pytest.raises(archive.ArchiveError, match=f"version {archive.VERSION + 1}.*version {archive.VERSION}"):
        archive.load_models(str(p))


@pytest.mark.parametrize("cut", [4, 20, 200, -8, -3])
def test_truncated(tmp_path, cut):
    p = tmp_path / "m.psm"
    archive.save_models(bundle(), str(p))
    blob = p.read_bytes()
    p.write_bytes(blob[:cut] if cut > 0 else blob[:cut])
    with pytest.raises(archive.ArchiveError, match="truncated|corrupt"):
        archive.load_models(str(p))


def test_dimension_mismatch(tmp_path):
    m = bundle()
    m.window = ft.WindowConfig()
    p = str(tmp_path / "m.psm")
    archive.save_models(m, p)
    with pytest.raises(archive.ArchiveError, match="dimension"):
        archive.load_models(p)
