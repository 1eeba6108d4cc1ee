"""Line-level script identification with one left-to-right HMM per script."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gmmhmm import EmissionBank, ModelSet, TrainConfig, decode, hmm_graph, init_model_set, train_embedded

SCRIPTS = ("English", "Bangla", "Devanagari")


@dataclass
class ScriptModelSet:
    models: dict
    feature_dim: int
    reports: dict = None

    def __post_init__(self):
        if not self.models:
            raise ValueError("empty script model set")
        for s, m in self.models.items():
            if m.dim != self.feature_dim:
                raise ValueError(f"script model {s!r} has D={m.dim}, expected {self.feature_dim}")

    @property
    def scripts(self):
        return sorted(self.models)


@dataclass
class ScriptDecision:
    script: str
    logliks: dict
    margin: float


def train_script_models(lines_per_script, cfg=None):
    """Fit one whole-line model per script from ``{script: [features, ...]}``."""
    cfg = cfg or TrainConfig()
    if not lines_per_script:
        raise ValueError("no scripts given")
    models, reports, dim = {}, {}, None
    for script in sorted(lines_per_script):
        seqs = [np.asarray(x, dtype=np.float64) for x in lines_per_script[script]]
        if not seqs:
            raise ValueError(f"script {script!r} has no training lines")
        dim = seqs[0].shape[1]
        init = init_model_set([script], dim, n_states=cfg.n_states)
        trained = train_embedded([(x, [script]) for x in seqs], init, cfg)
        models[script] = trained[script]
        reports[script] = trained.report
    return ScriptModelSet(models, dim, reports)


def score_script(seq, hmm):
    """Viterbi log-likelihood of the whole line; -inf when too short."""
    X = np.asarray(seq, dtype=np.float64)
    if X.shape[0] < hmm.n_states:
        return -math.inf
    _, score = decode(EmissionBank(hmm.states).loglik(X), hmm_graph(hmm))
    return float(score)


def identify_script(seq, sms):
    """Best-scoring script; equal scores resolve to the alphabetically first script."""
    if sms is None or not sms.models:
        raise ValueError("empty script model set")
    ll = {s: score_script(seq, sms.models[s]) for s in sms.scripts}
    ranked = sorted(ll, key=lambda s: (-ll[s], s))
    best = ranked[0]
    margin = ll[best] - ll[ranked[1]] if len(ranked) > 1 else math.inf
    return ScriptDecision(best, ll, margin)


def confusion_matrix(truth, predicted, scripts=SCRIPTS):
    idx = {s: i for i, s in enumerate(scripts)}
    cm = np.zeros((len(scripts), len(scripts)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        cm[idx[t], idx[p]] += 1
    return cm


def as_model_set(sms):
    """View the script models as a ModelSet (for archiving)."""
    return ModelSet({s: sms.models[s] for s in sms.scripts}, sms.feature_dim, "scriptid")
