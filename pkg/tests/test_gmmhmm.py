import math

import numpy as np
import pytest

from polyspot import kernels
from polyspot.gmmhmm import (
    SPACE, EmissionBank, Gmm, GmmHmm, GraphBuilder, ModelSet, TrainConfig, concat_models,
    gmm_logpdf, init_model_set, left_to_right, log_likelihood, train_embedded, viterbi_align,
)

from conftest import brute_force_paths, random_gmm, random_ltr, sample_hmm


def naive_gmm(x, g):
    total = 0.0
    for w, mu, var in zip(g.weights, g.means, g.variances):
        dens = 1.0
        for xi, mi, vi in zip(x, mu, var):
            dens *= math.exp(-0.5 * (xi - mi) ** 2 / vi) / math.sqrt(2 * math.pi * vi)
        total += w * dens
    return math.log(total)


def test_standard_normal_at_mode():
    g = Gmm.single(np.zeros(1), np.ones(1))
    assert gmm_logpdf([0.0], g) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert gmm_logpdf([0.0], g) == pytest.approx(-0.918939, abs=1e-6)


def test_duplicate_components_collapse():
    one = Gmm.single(np.array([0.3, -1.0]), np.array([0.5, 2.0]))
    two = Gmm(np.array([0.5, 0.5]), np.repeat(one.means, 2, axis=0), np.repeat(one.variances, 2, axis=0))
    x = np.array([0.1, 0.2])
    assert gmm_logpdf(x, two) == pytest.approx(gmm_logpdf(x, one), abs=1e-12)


def test_gmm_logpdf_matches_naive_sum(rng):
    for _ in range(20):
        g = random_gmm(rng, 4, 3)
        x = rng.normal(size=4)
        assert abs(gmm_logpdf(x, g) - naive_gmm(x, g)) < 1e-10


def test_gmm_dimension_mismatch():
    g = Gmm.single(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError, match="dimension"):
        gmm_logpdf(np.zeros(2), g)


def test_bank_matches_direct(rng):
    gmms = [random_gmm(rng, 5, k) for k in (1, 2, 3)]
    X = rng.normal(size=(7, 5))
    got = EmissionBank(gmms).loglik(X)
    want = np.array([[gmm_logpdf(x, g) for g in gmms] for x in X])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


def test_one_state_model_sums_frames(rng):
    g = random_gmm(rng, 3, 2)
    hmm = GmmHmm("a", np.array([[1.0, 0.0]]), [g])
    X = rng.normal(size=(6, 3))
    want = sum(gmm_logpdf(x, g) for x in X)
    assert log_likelihood(X, hmm) == pytest.approx(want, abs=1e-10)
    ali = viterbi_align(X, hmm)
    assert list(ali.states) == [0] * 6
    assert ali.loglik == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_forward_and_viterbi_match_enumeration(backend, monkeypatch):
    monkeypatch.setattr(kernels, "_impl", kernels.using(backend))
    rng = np.random.default_rng(7)
    for case in range(30):
        N = int(rng.integers(1, 5))
        T = int(rng.integers(N, 9))
        hmm = random_ltr(rng, "m", N, 2)
        X = rng.normal(size=(T, 2))
        lsum, lmax, best = brute_force_paths(X, hmm)
        assert abs(log_likelihood(X, hmm) - lsum) < 1e-9
        ali = viterbi_align(X, hmm)
        assert abs(ali.loglik - lmax) < 1e-9
        assert tuple(ali.states) == best
        assert log_likelihood(X, hmm) >= ali.loglik - 1e-12


def test_kernel_backends_agree_on_dense_graphs():
    rng = np.random.default_rng(3)
    py, cy = kernels.using("python"), kernels.using("cython")
    for _ in range(10):
        T, N = 12, 6
        log_b = rng.normal(size=(T, N))
        A = np.log(rng.dirichlet(np.ones(N), size=N))
        A[rng.random((N, N)) < 0.3] = -np.inf
        pi = np.log(rng.dirichlet(np.ones(N)))
        fin = np.where(rng.random(N) < 0.5, 0.0, -np.inf)
        fin[0] = 0.0
        a1, l1 = py.forward(log_b, pi, A, fin)
        a2, l2 = cy.forward(log_b, pi, A, fin)
        assert abs(l1 - l2) < 1e-9
        np.testing.assert_allclose(py.backward(log_b, A, fin), cy.backward(log_b, A, fin), atol=1e-9)
        p1, s1 = py.viterbi(log_b, pi, A, fin)
        p2, s2 = cy.viterbi(log_b, pi, A, fin)
        assert s1 == s2 and list(p1) == list(p2)


def test_forward_backward_consistency(rng):
    hmm = random_ltr(rng, "m", 3, 2)
    X = rng.normal(size=(9, 2))
    log_b = EmissionBank(hmm.states).loglik(X)
    A = np.log(hmm.transitions[:, :3], where=hmm.transitions[:, :3] > 0,
               out=np.full((3, 3), -np.inf))
    pi = np.array([0.0, -np.inf, -np.inf])
    fin = np.array([-np.inf, -np.inf, 0.0])
    alpha, ll = kernels.forward(log_b, pi, A, fin)
    beta = kernels.backward(log_b, A, fin)
    for t in range(9):
        assert np.logaddexp.reduce(alpha[t] + beta[t]) == pytest.approx(ll, abs=1e-9)


def test_deterministic_chain_forced_path(rng):
    n = 4
    A = np.zeros((n, n + 1))
    for i in range(n):
        A[i, i + 1] = 1.0
    hmm = GmmHmm("d", A, [random_gmm(rng, 2, 1) for _ in range(n)])
    ali = viterbi_align(rng.normal(size=(n, 2)), hmm)
    assert list(ali.states) == [0, 1, 2, 3]


def test_viterbi_too_short(rng):
    hmm = random_ltr(rng, "m", 4, 2)
    with pytest.raises(ValueError, match="too short"):
        viterbi_align(rng.normal(size=(3, 2)), hmm)


def test_empty_sequence_rejected(rng):
    hmm = random_ltr(rng, "m", 2, 2)
    with pytest.raises(ValueError):
        log_likelihood(np.zeros((0, 2)), hmm)


def test_concat_single_label_identity(rng):
    ms = ModelSet({"a": random_ltr(rng, "a", 3, 2, exit_prob=0.3)}, 2)
    assert concat_models(["a"], ms) is ms["a"]


def test_concat_structure(rng):
    a = random_ltr(rng, "a", 3, 2, exit_prob=0.3)
    b = random_ltr(rng, "b", 3, 2, exit_prob=0.4)
    comp = concat_models(["a", "b"], ModelSet({"a": a, "b": b}, 2))
    assert comp.n_states == 6
    comp.check()
    A = comp.transitions
    assert A[2, 3] == pytest.approx(0.3)
    assert A[2, 2] == pytest.approx(a.transitions[2, 2])
    nz = np.argwhere(A > 0)
    assert all(j in (i, i + 1) for i, j in nz)
    assert comp.units == [("a", 0, 2), ("b", 3, 5)]


def test_concat_unknown_label(rng):
    ms = ModelSet({"a": random_ltr(rng, "a", 2, 2)}, 2)
    with pytest.raises(KeyError, match="zz"):
        concat_models(["a", "zz"], ms)


def test_concat_order_prefers_generating_order():
    rng = np.random.default_rng(11)
    a = random_ltr(rng, "a", 3, 3, exit_prob=0.5)
    b = random_ltr(rng, "b", 3, 3, exit_prob=0.5)
    b.states = [Gmm(g.weights, g.means + 3.0, g.variances) for g in b.states]
    ms = ModelSet({"a": a, "b": b}, 3)
    ab, ba = concat_models(["a", "b"], ms), concat_models(["b", "a"], ms)
    wins = 0
    for _ in range(20):
        X = sample_hmm(rng, ab)
        if X.shape[0] < 6:
            continue
        wins += log_likelihood(X, ab) > log_likelihood(X, ba)
    assert wins >= 15


def test_alignment_segments_cover_sequence(rng):
    a = random_ltr(rng, "a", 2, 2, exit_prob=0.5)
    b = random_ltr(rng, "b", 2, 2, exit_prob=0.5)
    comp = concat_models(["a", "b", "a"], ModelSet({"a": a, "b": b}, 2))
    ali = viterbi_align(rng.normal(size=(10, 2)), comp)
    assert [s[0] for s in ali.segments] == ["a", "b", "a"]
    assert ali.segments[0][1] == 0 and ali.segments[-1][2] == 10
    for (_, _, e), (_, s, _) in zip(ali.segments, ali.segments[1:]):
        assert e == s


def test_graph_loop_accepts_any_order(rng):
    ms = ModelSet({k: random_ltr(rng, k, 2, 2, exit_prob=0.5) for k in "abc"}, 2)
    gb = GraphBuilder(ms)
    out = gb.loop(gb.START, ["a", "b", "c"], "filler")
    gb.node_to_node(out, gb.END)
    g = gb.compile()
    assert g.n_states == 6
    firsts = [u[2] for u in g.units]
    lasts = [u[3] for u in g.units]
    for l in lasts:
        for f in firsts:
            assert np.isfinite(g.log_trans[l, f])
    assert np.all(np.isfinite(g.log_init[firsts]))
    assert np.all(np.isfinite(g.log_final[lasts]))


def test_graph_rejects_epsilon_cycle(rng):
    ms = ModelSet({"a": random_ltr(rng, "a", 1, 2)}, 2)
    gb = GraphBuilder(ms)
    n1, n2 = gb.node(), gb.node()
    gb.node_to_node(gb.START, n1)
    gb.node_to_node(n1, n2)
    gb.node_to_node(n2, n1)
    with pytest.raises(ValueError, match="cycle"):
        gb.compile()


# ---------------------------------------------------------------- training


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(target_mixtures=12)
    with pytest.raises(ValueError):
        TrainConfig(n_states=0)


def test_single_gaussian_converges_to_sample_mean(rng):
    X = rng.normal(loc=1.5, scale=2.0, size=(300, 3))
    ms = init_model_set(["a"], 3, n_states=1)
    out = train_embedded([(X, ["a"])], ms, TrainConfig(n_states=1, target_mixtures=1, max_iterations=5))
    np.testing.assert_allclose(out["a"].states[0].means[0], X.mean(axis=0), atol=1e-6)


def test_em_monotone_and_invariants():
    rng = np.random.default_rng(5)
    ms = init_model_set(["a", "b", SPACE], 2, n_states=3, space_states=1)
    truth = {"a": 0.0, "b": 4.0, SPACE: -4.0}
    lines = []
    for _ in range(12):
        labs = [SPACE] + list(rng.choice(["a", "b"], size=4)) + [SPACE]
        X = np.concatenate([rng.normal(truth[l], 1.0, size=(int(rng.integers(3, 7)), 2)) for l in labs])
        lines.append((X, labs))
    cfg = TrainConfig(n_states=3, target_mixtures=4, max_iterations=8, tol=1e-12, variance_floor=0.05)
    out = train_embedded(lines, ms, cfg)
    for m in (1, 2, 4):
        lls = out.report.logliks(m)
        assert all(b >= a - 1e-8 for a, b in zip(lls, lls[1:])), (m, lls)
    floor = 0.05 * np.concatenate([X for X, _ in lines]).var(axis=0)
    for lab in ms.labels:
        hmm = out[lab]
        hmm.check()
        for g in hmm.states:
            assert g.n_components == 4
            assert np.all(g.variances >= floor[None, :] - 1e-15)


def test_unobserved_label_warns(rng):
    ms = init_model_set(["a", "z"], 2, n_states=2)
    X = rng.normal(size=(10, 2))
    out = train_embedded([(X, ["a"])], ms, TrainConfig(n_states=2, target_mixtures=1, max_iterations=2))
    assert any("'z'" in w for w in out.report.warnings)


def test_recovers_two_state_means():
    rng = np.random.default_rng(21)
    means = np.array([[-2.0, 0.0], [2.0, 1.0]])
    A = np.array([[0.8, 0.2, 0.0], [0.0, 0.8, 0.2]])
    gen = GmmHmm("g", A, [Gmm.single(m, np.ones(2)) for m in means])
    lines = []
    while len(lines) < 250:
        X = sample_hmm(rng, gen)
        if X.shape[0] >= 2:
            lines.append((X, ["g"]))
    out = train_embedded(lines, init_model_set(["g"], 2, n_states=2),
                         TrainConfig(n_states=2, target_mixtures=1, max_iterations=30, tol=1e-9))
    got = np.array([g.means[0] for g in out["g"].states])
    np.testing.assert_allclose(got, means, atol=0.1)
