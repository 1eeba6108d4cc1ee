"""Left-to-right continuous-density HMMs with diagonal GMM emissions.

Models are stored with an explicit exit column: ``transitions`` has shape
``(N, N + 1)`` and the last column is the probability of leaving the model
from each state (non-zero only for the final state). Every row sums to one.
Scoring a complete sequence requires ending in a final state but does not
charge the exit probability, so a one-state model with self-loop 1 scores
``sum_t log b(o_t)``.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
SPACE = "<sp>"


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def logsumexp(a, axis=None):
    a = np.asarray(a, dtype=np.float64)
    peak = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore", under="ignore", invalid="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis, keepdims=True)) + safe
    out = np.where(np.isfinite(peak), out, peak)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass
class Gmm:
    """Diagonal-covariance Gaussian mixture: weights (M,), means/variances (M, D)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if self.means.shape != self.variances.shape or self.means.shape[0] != self.weights.size:
            raise ValueError("inconsistent GMM parameter shapes")

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    @classmethod
    def single(cls, mean, variance):
        return cls(np.ones(1), np.asarray(mean)[None, :], np.asarray(variance)[None, :])


def gmm_logpdf(x, g):
    """Log density of one feature vector under a GMM (log-sum-exp over components)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != g.dim:
        raise ValueError(f"dimension mismatch: vector has {x.shape}, GMM expects {g.dim}")
    diff = x[None, :] - g.means
    comp = (_log(g.weights)
            - 0.5 * (g.dim * LOG_2PI + np.log(g.variances).sum(axis=1)
                     + (diff * diff / g.variances).sum(axis=1)))
    return logsumexp(comp)


class EmissionBank:
    """Stacked parameters of many GMMs for batched evaluation.

    Components are padded to a common count with zero weight. Log densities
    use the expanded quadratic form so a whole sequence costs two matrix
    products.
    """

    def __init__(self, gmms):
        if not gmms:
            raise ValueError("empty emission bank")
        S = len(gmms)
        D = gmms[0].dim
        M = max(g.n_components for g in gmms)
        w = np.zeros((S, M))
        mu = np.zeros((S, M, D))
        var = np.ones((S, M, D))
        for s, g in enumerate(gmms):
            if g.dim != D:
                raise ValueError("all GMMs in a bank must share the feature dimension")
            k = g.n_components
            w[s, :k] = g.weights
            mu[s, :k] = g.means
            var[s, :k] = g.variances
        prec = 1.0 / var
        self.n_states, self.n_components, self.dim = S, M, D
        self.log_weights = _log(w)
        self.const = -0.5 * (D * LOG_2PI + np.log(var).sum(axis=2) + (mu * mu * prec).sum(axis=2))
        self.lin = (mu * prec).reshape(S * M, D)
        self.quad = (-0.5 * prec).reshape(S * M, D)

    def component_loglik(self, X, rows=None):
        """(T, S', M) log of weight times component density for the selected states."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: features {X.shape}, models expect D={self.dim}")
        M = self.n_components
        if rows is None:
            lin, quad, const, lw = self.lin, self.quad, self.const, self.log_weights
        else:
            rows = np.asarray(rows)
            idx = (rows[:, None] * M + np.arange(M)[None, :]).reshape(-1)
            lin, quad = self.lin[idx], self.quad[idx]
            const, lw = self.const[rows], self.log_weights[rows]
        T = X.shape[0]
        S = const.shape[0]
        q = (X * X) @ quad.T + X @ lin.T
        return q.reshape(T, S, M) + (const + lw)[None, :, :]

    def loglik(self, X, rows=None):
        """(T, S') state log emissions."""
        return logsumexp(self.component_loglik(X, rows), axis=2)


@dataclass
class GmmHmm:
    """A left-to-right model; composites carry one ``units`` entry per sub-model."""

    label: str
    transitions: np.ndarray
    states: list
    units: list = field(default_factory=list)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        n = len(self.states)
        if self.transitions.shape != (n, n + 1):
            raise ValueError(f"transitions must be ({n}, {n + 1}), got {self.transitions.shape}")
        if not self.units:
            self.units = [(self.label, 0, n - 1)]

    @property
    def n_states(self):
        return len(self.states)

    @property
    def dim(self):
        return self.states[0].dim

    @property
    def initial(self):
        pi = np.zeros(self.n_states)
        pi[0] = 1.0
        return pi

    @property
    def exit_prob(self):
        return float(self.transitions[-1, -1])

    def check(self, tol=1e-9):
        A = self.transitions
        n = self.n_states
        if np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1.0) > tol):
            raise ValueError(f"{self.label}: transition rows must be stochastic")
        allowed = np.zeros_like(A, dtype=bool)
        for i in range(n):
            allowed[i, i] = allowed[i, i + 1] = True
        if np.any(A[~allowed] != 0):
            raise ValueError(f"{self.label}: only self-loop and advance arcs are allowed")
        for g in self.states:
            if abs(g.weights.sum() - 1.0) > tol:
                raise ValueError(f"{self.label}: mixture weights must sum to one")


def left_to_right(label, n_states, dim, self_loop=0.6, mean=None, variance=None):
    """Single-Gaussian left-to-right model, every state sharing ``mean``/``variance``."""
    mean = np.zeros(dim) if mean is None else np.asarray(mean, dtype=np.float64)
    variance = np.ones(dim) if variance is None else np.asarray(variance, dtype=np.float64)
    A = np.zeros((n_states, n_states + 1))
    for i in range(n_states):
        A[i, i] = self_loop
        A[i, i + 1] = 1.0 - self_loop
    return GmmHmm(label, A, [Gmm.single(mean.copy(), variance.copy()) for _ in range(n_states)])


class ModelSet:
    """Label-ordered collection of models sharing one feature dimension.

    The set is treated as immutable once built; the stacked emission bank is
    cached on first use.
    """

    def __init__(self, models, feature_dim, charset="full"):
        self.models = dict(models)
        self.feature_dim = int(feature_dim)
        self.charset = charset
        self.report = None
        self._bank = None
        for m in self.models.values():
            if m.dim != self.feature_dim:
                raise ValueError(f"model {m.label!r} has D={m.dim}, set expects {self.feature_dim}")

    def __contains__(self, label):
        return label in self.models

    def __getitem__(self, label):
        try:
            return self.models[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def __len__(self):
        return len(self.models)

    @property
    def labels(self):
        return list(self.models)

    def bank(self):
        """Return ``(EmissionBank, offsets)`` over every state of every model."""
        if self._bank is None:
            gmms, offsets, k = [], {}, 0
            for label, m in self.models.items():
                offsets[label] = k
                gmms.extend(m.states)
                k += m.n_states
            self._bank = (EmissionBank(gmms), offsets)
        return self._bank

    def state_loglik(self, X):
        """(T, S_total) log emissions of every state in the set."""
        bank, _ = self.bank()
        return bank.loglik(X)


def init_model_set(labels, dim, n_states=6, space_states=None, charset="full"):
    """Fresh single-Gaussian models for ``labels``; ``SPACE`` may use its own state count."""
    models = {}
    for lab in labels:
        n = space_states if (lab == SPACE and space_states) else n_states
        models[lab] = left_to_right(lab, n, dim)
    return ModelSet(models, dim, charset)


# --------------------------------------------------------------------------
# decoding graphs


@dataclass
class DecodingGraph:
    """Compiled emitting-state network.

    ``state_label``/``state_index`` name the model state behind each graph
    state; ``units`` lists ``(label, role, first, last)`` per unit instance.
    """

    state_label: list
    state_index: np.ndarray
    log_init: np.ndarray
    log_trans: np.ndarray
    log_final: np.ndarray
    units: list
    unit_of_state: np.ndarray

    @property
    def n_states(self):
        return len(self.state_label)

    def columns(self, offsets):
        return np.array([offsets[l] + i for l, i in zip(self.state_label, self.state_index)],
                        dtype=np.int64)

    def roles(self, role):
        mask = np.zeros(self.n_states, dtype=bool)
        for lab, r, a, b in self.units:
            if r == role:
                mask[a:b + 1] = True
        return mask


class GraphBuilder:
    """Wire unit instances through non-emitting nodes, then compile.

    Node 0 is the start and node 1 the end. Edges out of a unit are taken
    with the unit's exit probability, except into the end node where the
    exit is not charged. Non-emitting nodes must not form cycles.
    """

    START, END = 0, 1

    def __init__(self, models):
        self.models = models
        self._n_nodes = 2
        self._units = []
        self._nu = []
        self._un = []
        self._nn = []

    def node(self):
        self._n_nodes += 1
        return self._n_nodes - 1

    def unit(self, label, role=""):
        if label not in self.models:
            raise KeyError(f"unknown label {label!r}")
        self._units.append((label, role))
        return len(self._units) - 1

    def node_to_unit(self, node, unit, p=1.0):
        self._nu.append((node, unit, math.log(p)))

    def unit_to_node(self, unit, node, p=1.0):
        self._un.append((unit, node, math.log(p)))

    def node_to_node(self, a, b, p=1.0):
        self._nn.append((a, b, math.log(p)))

    def chain(self, node, labels, role=""):
        """Units for ``labels`` in sequence after ``node``; returns the exit node."""
        for lab in labels:
            u = self.unit(lab, role)
            self.node_to_unit(node, u)
            node = self.node()
            self.unit_to_node(u, node)
        return node

    def loop(self, node, labels, role=""):
        """Parallel loop over ``labels`` (zero or more repeats); returns the exit node.

        The loop node branches uniformly over the units and the exit.
        """
        hub = self.node()
        self.node_to_node(node, hub)
        out = self.node()
        p = 1.0 / (len(labels) + 1)
        for lab in labels:
            u = self.unit(lab, role)
            self.node_to_unit(hub, u, p)
            self.unit_to_node(u, hub)
        self.node_to_node(hub, out, p)
        return out

    def _closures(self):
        nn = {}
        for a, b, lp in self._nn:
            nn.setdefault(a, []).append((b, lp))
        nu = {}
        for a, u, lp in self._nu:
            nu.setdefault(a, []).append((u, lp))
        memo, active = {}, set()

        def closure(node):
            if node in memo:
                return memo[node]
            if node in active:
                raise ValueError("cycle through non-emitting nodes")
            active.add(node)
            acc = {}
            if node == self.END:
                acc["end"] = 0.0
            for u, lp in nu.get(node, ()):
                acc[u] = np.logaddexp(acc.get(u, -np.inf), lp)
            for b, lp in nn.get(node, ()):
                for k, v in closure(b).items():
                    acc[k] = np.logaddexp(acc.get(k, -np.inf), lp + v)
            active.discard(node)
            memo[node] = acc
            return acc

        return closure

    def compile(self):
        first, last, labels, idx, uos = [], [], [], [], []
        k = 0
        for ui, (lab, _) in enumerate(self._units):
            m = self.models[lab]
            first.append(k)
            last.append(k + m.n_states - 1)
            labels.extend([lab] * m.n_states)
            idx.extend(range(m.n_states))
            uos.extend([ui] * m.n_states)
            k += m.n_states
        N = k
        A = np.full((N, N), -np.inf)
        for ui, (lab, _) in enumerate(self._units):
            T_ = self.models[lab].transitions
            n = T_.shape[0]
            f = first[ui]
            for i in range(n):
                A[f + i, f + i] = _log(T_[i, i])
                if i + 1 < n:
                    A[f + i, f + i + 1] = _log(T_[i, i + 1])
        closure = self._closures()
        log_init = np.full(N, -np.inf)
        for k_, v in closure(self.START).items():
            if k_ != "end":
                log_init[first[k_]] = np.logaddexp(log_init[first[k_]], v)
        log_final = np.full(N, -np.inf)
        for u, node, lp in self._un:
            ex = _log(self.models[self._units[u][0]].exit_prob)
            for k_, v in closure(node).items():
                if k_ == "end":
                    log_final[last[u]] = np.logaddexp(log_final[last[u]], lp + v)
                else:
                    a, b = last[u], first[k_]
                    A[a, b] = np.logaddexp(A[a, b], ex + lp + v)
        units = [(lab, role, first[i], last[i]) for i, (lab, role) in enumerate(self._units)]
        return DecodingGraph(labels, np.asarray(idx, dtype=np.int64), log_init, A, log_final,
                             units, np.asarray(uos, dtype=np.int64))


def hmm_graph(hmm):
    """Compile a (possibly composite) chain model into a decoding graph."""
    N = hmm.n_states
    A = _log(hmm.transitions[:, :N])
    log_final = np.full(N, -np.inf)
    log_final[N - 1] = 0.0
    labels, idx, uos, units = [], [], [], []
    for ui, (lab, a, b) in enumerate(hmm.units):
        labels.extend([lab] * (b - a + 1))
        idx.extend(range(b - a + 1))
        uos.extend([ui] * (b - a + 1))
        units.append((lab, "", a, b))
    return DecodingGraph(labels, np.asarray(idx, dtype=np.int64), _log(hmm.initial), A, log_final,
                         units, np.asarray(uos, dtype=np.int64))


def _hmm_log_b(seq, hmm):
    X = np.asarray(seq, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty feature sequence")
    return EmissionBank(hmm.states).loglik(X)


def log_likelihood(seq, hmm):
    """Forward log-likelihood of a full sequence, ending in the final state."""
    log_b = _hmm_log_b(seq, hmm)
    g = hmm_graph(hmm)
    _, ll = kernels.forward(log_b, g.log_init, g.log_trans, g.log_final)
    return ll


@dataclass
class Alignment:
    states: np.ndarray
    segments: list
    loglik: float


def segments_from_path(path, graph):
    """Split a state path into ``(label, role, start, end)`` unit segments, end exclusive."""
    segs = []
    if len(path) == 0:
        return segs
    uos = graph.unit_of_state
    start = 0
    for t in range(1, len(path)):
        u_prev, u_cur = uos[path[t - 1]], uos[path[t]]
        _, _, f, l = graph.units[u_cur]
        reentry = u_prev == u_cur and path[t - 1] == l and path[t] == f and f != l
        if u_prev != u_cur or reentry:
            lab, role, _, _ = graph.units[u_prev]
            segs.append((lab, role, start, t))
            start = t
    lab, role, _, _ = graph.units[uos[path[-1]]]
    segs.append((lab, role, start, len(path)))
    return segs


def decode(log_b, graph):
    """Viterbi over a compiled graph; returns ``(path, score)``."""
    return kernels.viterbi(log_b, graph.log_init, graph.log_trans, graph.log_final)


def viterbi_align(seq, composite, unit_map=None):
    """Best state path through a chain model and its per-unit segmentation."""
    log_b = _hmm_log_b(seq, composite)
    if log_b.shape[0] < composite.n_states:
        raise ValueError("sequence too short")
    g = hmm_graph(composite)
    if unit_map is not None:
        g.units = [(lab, "", a, b) for lab, a, b in unit_map]
        uos = np.zeros(composite.n_states, dtype=np.int64)
        for ui, (_, a, b) in enumerate(unit_map):
            uos[a:b + 1] = ui
        g.unit_of_state = uos
    path, score = decode(log_b, g)
    if not np.isfinite(score):
        raise ValueError("sequence too short")
    segs = [(lab, a, b) for lab, _, a, b in segments_from_path(path, g)]
    return Alignment(path, segs, score)


def concat_models(labels, model_set):
    """Chain the named models; each exit feeds the next model's first state."""
    if not labels:
        raise ValueError("empty label sequence")
    parts = []
    for lab in labels:
        if lab not in model_set:
            raise KeyError(f"unknown label {lab!r}")
        parts.append(model_set[lab])
    if len(parts) == 1:
        return parts[0]
    N = sum(p.n_states for p in parts)
    A = np.zeros((N, N + 1))
    states, units = [], []
    k = 0
    for p in parts:
        n = p.n_states
        A[k:k + n, k:k + n + 1] = p.transitions
        states.extend(p.states)
        units.append((p.label, k, k + n - 1))
        k += n
    return GmmHmm(" ".join(labels), A, states, units)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    n_states: int = 6
    target_mixtures: int = 32
    max_iterations: int = 20
    tol: float = 1e-4
    variance_floor: float = 0.01
    space_states: int | None = None
    split_offset: float = 0.2

    def __post_init__(self):
        if min(self.n_states, self.target_mixtures, self.max_iterations) < 1:
            raise ValueError("state, mixture and iteration counts must be positive")
        m = self.target_mixtures
        if m & (m - 1):
            raise ValueError("target_mixtures must be a power of two")
        if self.tol <= 0 or self.variance_floor <= 0:
            raise ValueError("tol and variance_floor must be positive")


@dataclass
class TrainReport:
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    skipped_lines: list = field(default_factory=list)

    def logliks(self, mixtures=None):
        return [ll for m, _, ll in self.history if mixtures is None or m == mixtures]


class _Params:
    """Mutable flat view of a model set used during EM."""

    def __init__(self, model_set):
        self.labels = model_set.labels
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.n_states = [model_set[l].n_states for l in self.labels]
        self.offset = np.concatenate([[0], np.cumsum(self.n_states)]).astype(np.int64)
        S = int(self.offset[-1])
        self.self_p = np.zeros(S)
        self.next_p = np.zeros(S)
        self.gmms = []
        for l in self.labels:
            m = model_set[l]
            n = m.n_states
            for i in range(n):
                self.self_p[len(self.gmms)] = m.transitions[i, i]
                self.next_p[len(self.gmms)] = m.transitions[i, i + 1]
                self.gmms.append(copy.deepcopy(m.states[i]))
        self.is_last = np.zeros(S, dtype=bool)
        self.is_last[self.offset[1:] - 1] = True

    def to_model_set(self, dim, charset):
        models = {}
        for li, lab in enumerate(self.labels):
            a, n = int(self.offset[li]), self.n_states[li]
            A = np.zeros((n, n + 1))
            for i in range(n):
                A[i, i] = self.self_p[a + i]
                A[i, i + 1] = self.next_p[a + i]
            models[lab] = GmmHmm(lab, A, [copy.deepcopy(g) for g in self.gmms[a:a + n]])
        return ModelSet(models, dim, charset)


def _line_states(params, labels):
    ids = []
    for lab in labels:
        if lab not in params.index:
            raise KeyError(f"unknown label {lab!r}")
        li = params.index[lab]
        ids.extend(range(int(params.offset[li]), int(params.offset[li + 1])))
    return np.asarray(ids, dtype=np.int64)


def _chain_arrays(params, g):
    n = g.size
    A = np.full((n, n), -np.inf)
    ar = np.arange(n)
    A[ar, ar] = _log(params.self_p[g])
    A[ar[:-1], ar[1:]] = _log(params.next_p[g[:-1]])
    log_pi = np.full(n, -np.inf)
    log_pi[0] = 0.0
    log_final = np.full(n, -np.inf)
    log_final[-1] = 0.0
    return log_pi, A, log_final


def _em_iteration(params, data, floor):
    """One Baum-Welch pass over all lines; updates ``params`` in place.

    Returns the total log-likelihood under the parameters before the update
    and the list of line indices without an admissible path.
    """
    bank = EmissionBank(params.gmms)
    S, M, D = bank.n_states, bank.n_components, bank.dim
    occ = np.zeros((S, M))
    sx = np.zeros((S, M, D))
    sxx = np.zeros((S, M, D))
    c_self = np.zeros(S)
    c_next = np.zeros(S)
    total = 0.0
    skipped = []
    for li, (X, labels) in enumerate(data):
        g = _line_states(params, labels)
        T = X.shape[0]
        if T < g.size:
            skipped.append(li)
            continue
        uniq, inv = np.unique(g, return_inverse=True)
        comp = bank.component_loglik(X, uniq)
        st = logsumexp(comp, axis=2)
        log_b = st[:, inv]
        log_pi, A, log_final = _chain_arrays(params, g)
        alpha, ll = kernels.forward(log_b, log_pi, A, log_final)
        if not np.isfinite(ll):
            skipped.append(li)
            continue
        beta = kernels.backward(log_b, A, log_final)
        total += ll
        with np.errstate(under="ignore", invalid="ignore"):
            gamma = np.exp(alpha + beta - ll)
            n = g.size
            ar = np.arange(n)
            base = alpha[:-1] - ll
            nxt = log_b[1:] + beta[1:]
            xs = np.exp(base + A[ar, ar][None, :] + nxt).sum(axis=0)
            xn = np.exp(base[:, :-1] + A[ar[:-1], ar[1:]][None, :] + nxt[:, 1:]).sum(axis=0)
        gamma = np.nan_to_num(gamma)
        np.add.at(c_self, g, np.nan_to_num(xs))
        np.add.at(c_next, g[:-1], np.nan_to_num(xn))
        gu = np.zeros((T, uniq.size))
        np.add.at(gu.T, inv, gamma.T)
        with np.errstate(under="ignore"):
            resp = np.exp(comp - st[:, :, None])
        w = gu[:, :, None] * resp
        occ[uniq] += w.sum(axis=0)
        wf = w.reshape(T, -1).T
        sx[uniq] += (wf @ X).reshape(uniq.size, M, D)
        sxx[uniq] += (wf @ (X * X)).reshape(uniq.size, M, D)

    for s in range(S):
        tot = c_self[s] + c_next[s]
        if tot > 0 and not (params.is_last[s] and c_next[s] <= 0):
            params.self_p[s] = c_self[s] / tot
            params.next_p[s] = c_next[s] / tot
        state_occ = occ[s].sum()
        if state_occ <= 0:
            continue
        old = params.gmms[s]
        k = old.n_components
        weights = occ[s, :k] / state_occ
        means = old.means.copy()
        variances = old.variances.copy()
        live = occ[s, :k] > 1e-10
        means[live] = sx[s, :k][live] / occ[s, :k][live, None]
        v = sxx[s, :k][live] / occ[s, :k][live, None] - means[live] ** 2
        variances[live] = np.maximum(v, floor[None, :])
        params.gmms[s] = Gmm(weights, means, variances)
    return total, skipped


def _split(params, offset):
    for s, g in enumerate(params.gmms):
        sd = np.sqrt(g.variances)
        params.gmms[s] = Gmm(np.concatenate([g.weights, g.weights]) / 2.0,
                             np.concatenate([g.means - offset * sd, g.means + offset * sd]),
                             np.concatenate([g.variances, g.variances]))


def train_embedded(lines, model_set, cfg=None, flat_start=True):
    """Embedded Baum-Welch over transcribed sequences.

    Args:
        lines: iterable of ``(features (T, D), labels)``; each line is scored
            with the concatenation of its labels' models.
        model_set: supplies the label inventory and state counts.
        cfg: training schedule. Mixtures double by mean splitting after each
            stage converges, until ``cfg.target_mixtures``.
        flat_start: reset every state to the global mean and variance first.

    Returns:
        A new ModelSet; ``.report`` holds per-iteration log-likelihoods.
    """
    cfg = cfg or TrainConfig()
    data = [(np.asarray(X, dtype=np.float64), list(labels)) for X, labels in lines]
    if not data:
        raise ValueError("no training lines")
    D = model_set.feature_dim
    for X, labels in data:
        if X.ndim != 2 or X.shape[1] != D:
            raise ValueError(f"feature dimension {X.shape} does not match model set D={D}")
        for lab in labels:
            if lab not in model_set:
                raise KeyError(f"unknown label {lab!r}")
    allX = np.concatenate([X for X, _ in data])
    g_mean = allX.mean(axis=0)
    g_var = allX.var(axis=0)
    floor = np.maximum(cfg.variance_floor * g_var, 1e-12)
    params = _Params(model_set)
    if flat_start:
        for s in range(len(params.gmms)):
            params.gmms[s] = Gmm.single(g_mean.copy(), np.maximum(g_var, floor))
            params.self_p[s] = 0.6
            params.next_p[s] = 0.4
    report = TrainReport()
    seen = {lab for _, labels in data for lab in labels}
    for lab in model_set.labels:
        if lab not in seen:
            report.warnings.append(f"label {lab!r} never observed; left at initial parameters")
    mixtures = max(g.n_components for g in params.gmms)
    skipped = []
    while True:
        prev = None
        for it in range(cfg.max_iterations):
            ll, skipped = _em_iteration(params, data, floor)
            report.history.append((mixtures, it, ll))
            log.debug("mixtures=%d iter=%d loglik=%.6f", mixtures, it, ll)
            if prev is not None and abs(ll - prev) <= cfg.tol * abs(prev):
                break
            prev = ll
        if mixtures >= cfg.target_mixtures:
            break
        _split(params, cfg.split_offset)
        mixtures *= 2
    if skipped:
        report.skipped_lines = skipped
        report.warnings.append(f"{len(skipped)} line(s) shorter than their transcription model")
    out = params.to_model_set(D, model_set.charset)
    out.report = report
    return out
