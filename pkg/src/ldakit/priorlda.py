"""Supervised multi-label topic modeling with label-anchored topics.

Training constrains each document's topic assignments to its observed label
set, which anchors topic indices to labels and makes cross-chain averaging
of the estimates valid. Prediction runs fixed-phi chains under an
asymmetric document prior derived from the training label frequencies, then
cuts each document's ranked label list at a predicted cardinality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, Document
from .errors import LdakitError
from .estimators import (
    average_estimates,
    phi_soft,
    phi_standard,
    theta_naive_mc,
    theta_soft,
)
from .model import Hyperparams, ParamEstimate
from .sampler import ChainSchedule, SamplingMode, run_chain

logger = logging.getLogger(__name__)

TRAIN_ALPHA_TOTAL = 50.0   # symmetric training prior mass
PREDICT_FREQ_MASS = 50.0   # prediction mass spread by label frequency
PREDICT_FLOOR_MASS = 30.0  # prediction mass spread uniformly (the floor)
DEFAULT_BETA = 0.1


@dataclass(frozen=True)
class PriorLdaConfig:
    """Hyperparameter recipe: symmetric 50/K alpha during training, a
    frequency-weighted 50*f_k/sum(f) + 30/K alpha during prediction, and a
    symmetric beta."""

    beta: float = DEFAULT_BETA
    regularizer: float = 1.0  # ridge strength for the cardinality model

    def schedule_single(self, seed: int = 0, total_train_iters: int = 200) -> ChainSchedule:
        """One chain, one retained sample."""
        return ChainSchedule(burn_in=50, lag=5, samples=1, chains=1,
                             total_train_iters=total_train_iters, seed=seed)

    def schedule_averaged(self, seed: int = 0, total_train_iters: int = 200) -> ChainSchedule:
        """Five chains, thirty retained samples each."""
        return ChainSchedule(burn_in=50, lag=5, samples=30, chains=5,
                             total_train_iters=total_train_iters, seed=seed)


def build_priors(
    label_freqs: Optional[np.ndarray], n_labels: int, phase: str
) -> np.ndarray:
    """Alpha vector for the given phase.

    Training keeps alpha symmetric at 50/K. Prediction spreads 50 units of
    mass proportionally to label frequency plus a uniform 30/K floor, so
    every label keeps strictly positive mass even at frequency zero.
    """
    if n_labels < 1:
        raise ValueError("need at least one label")
    if phase == "train":
        return np.full(n_labels, TRAIN_ALPHA_TOTAL / n_labels)
    if phase != "predict":
        raise ValueError(f"unknown phase {phase!r}")
    floor = PREDICT_FLOOR_MASS / n_labels
    if label_freqs is None:
        raise ValueError("prediction phase needs label frequencies")
    f = np.asarray(label_freqs, dtype=np.float64)
    if f.shape != (n_labels,):
        raise ValueError("label frequency vector has wrong length")
    total = f.sum()
    if total <= 0:
        return np.full(n_labels, floor)
    return PREDICT_FREQ_MASS * f / total + floor


@dataclass
class CardinalityPredictor:
    """Linear model mapping normalized term-frequency features to a label
    count, with the training-set mean as fallback for empty documents.
    Predicted counts are clamped to [1, K]."""

    weights: np.ndarray  # intercept first, then one weight per term
    fallback_mean: float
    n_labels: int

    def predict_count(self, doc: Document) -> int:
        if doc.n_tokens == 0:
            raw = self.fallback_mean
        else:
            dim = self.weights.shape[0] - 1
            counts = np.bincount(doc.tokens, minlength=dim)
            if counts.shape[0] > dim:
                raise ValueError(
                    f"document holds token ids beyond the {dim}-term training vocabulary"
                )
            raw = float(self.weights[0] + (counts / doc.n_tokens) @ self.weights[1:])
        count = int(np.ceil(raw))
        return int(np.clip(count, 1, self.n_labels))


def _conjugate_gradient(A: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """CG for symmetric positive-definite A, run to absolute residual tol."""
    x = np.zeros_like(b)
    r = b - A @ x
    p = r.copy()
    rs = float(r @ r)
    for _ in range(10 * b.shape[0]):
        if np.sqrt(rs) <= tol * max(1.0, float(np.linalg.norm(b))):
            break
        Ap = A @ p
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def train_cardinality(corpus: Corpus, regularizer: float = 1.0) -> CardinalityPredictor:
    """Ridge regression of label-set size on normalized term frequencies
    (intercept unpenalized), solved by conjugate gradient."""
    if corpus.label_space is None:
        raise LdakitError("corpus carries no labels")
    labeled = [d for d in corpus.documents if d.labels is not None]
    if not labeled:
        raise LdakitError("no labeled documents to fit the cardinality model")
    V = corpus.n_terms
    X = np.zeros((len(labeled), V + 1))
    X[:, 0] = 1.0
    y = np.zeros(len(labeled))
    for i, doc in enumerate(labeled):
        y[i] = len(doc.labels)
        if doc.n_tokens:
            X[i, 1:] = np.bincount(doc.tokens, minlength=V) / doc.n_tokens
    penalty = np.full(V + 1, regularizer)
    penalty[0] = 0.0
    A = X.T @ X + np.diag(penalty)
    w = _conjugate_gradient(A, X.T @ y)
    return CardinalityPredictor(
        weights=w,
        fallback_mean=float(y.mean()),
        n_labels=corpus.n_labels,
    )


def _labeled_subcorpus(corpus: Corpus) -> Corpus:
    """Drop documents whose label sets are empty; the constrained update has
    no support for them."""
    keep, dropped = [], 0
    for doc in corpus.documents:
        if doc.labels:
            keep.append(doc)
        else:
            dropped += 1
    if dropped:
        logger.warning("excluding %d unlabeled documents from labeled training", dropped)
    if not keep:
        raise LdakitError("no labeled documents to train on")
    return Corpus(
        documents=tuple(keep),
        vocabulary=corpus.vocabulary,
        label_space=corpus.label_space,
        label_frequencies=corpus.label_frequencies,
    )


def train_phi(
    corpus: Corpus,
    config: PriorLdaConfig,
    schedule: ChainSchedule,
) -> dict[str, ParamEstimate]:
    """Label-constrained training; returns both phi estimators averaged over
    all retained samples of all chains (valid here because labels anchor the
    topics)."""
    if corpus.label_space is None:
        raise LdakitError("corpus carries no labels")
    train_corpus = _labeled_subcorpus(corpus)
    K = corpus.n_labels
    hyper = Hyperparams.from_vectors(
        build_priors(None, K, "train"),
        np.full(corpus.n_terms, config.beta),
    )
    mode = SamplingMode.labeled()
    phis_std, phis_soft_ = [], []
    for c in range(schedule.chains):
        for st in run_chain(train_corpus, hyper, mode, schedule, chain_index=c):
            phis_std.append(phi_standard(st.counts, hyper))
            phis_soft_.append(phi_soft(st, train_corpus, hyper, mode=mode))
    n = len(phis_std)
    return {
        "phi_standard": ParamEstimate(
            theta=None, phi=average_estimates(phis_std),
            meta={"phi_kind": "phi_standard", "chains": schedule.chains,
                  "samples_per_chain": n // schedule.chains},
        ),
        "phi_soft": ParamEstimate(
            theta=None, phi=average_estimates(phis_soft_),
            meta={"phi_kind": "phi_soft", "chains": schedule.chains,
                  "samples_per_chain": n // schedule.chains},
        ),
    }


@dataclass
class LabelPrediction:
    ranked: list[int]
    scores: np.ndarray
    hard: set[int]


def predict_labels(
    test_corpus: Corpus,
    phi: np.ndarray,
    label_freqs: np.ndarray,
    config: PriorLdaConfig,
    schedule: ChainSchedule,
    predictor: CardinalityPredictor,
    theta_kind: str = "soft",
    n_workers: int = 1,
) -> list[LabelPrediction]:
    """Fixed-phi prediction under the frequency-derived prior.

    Labels are ranked by the recovered theta row; ties break toward the
    lower label id; the list is cut at the predicted cardinality.
    """
    K = phi.shape[0]
    hyper = Hyperparams.from_vectors(
        build_priors(label_freqs, K, "predict"),
        np.full(test_corpus.n_terms, config.beta),
    )
    mode = SamplingMode.predict(phi)
    states = []
    for c in range(schedule.chains):
        states.extend(run_chain(test_corpus, hyper, mode, schedule, chain_index=c))
    if theta_kind == "soft":
        theta = theta_soft(states, test_corpus, hyper, mode, n_workers=n_workers)
    elif theta_kind == "standard":
        theta = theta_naive_mc(states, hyper)
    else:
        raise ValueError(f"unknown theta_kind {theta_kind!r}")
    out = []
    for d, doc in enumerate(test_corpus.documents):
        row = theta[d]
        # stable sort on negated scores: ties resolve to the lower label id
        ranked = np.argsort(-row, kind="stable")
        count = predictor.predict_count(doc)
        out.append(LabelPrediction(
            ranked=[int(k) for k in ranked],
            scores=row,
            hard={int(k) for k in ranked[:count]},
        ))
    return out


def format_predictions(
    predictions: Sequence[LabelPrediction], label_space: Sequence[str]
) -> str:
    """One "docId label..." line per document (1-based ids, labels in rank
    order)."""
    lines = []
    for i, pred in enumerate(predictions, start=1):
        names = [label_space[k] for k in pred.ranked if k in pred.hard]
        lines.append(" ".join([str(i)] + names))
    return "\n".join(lines) + "\n"


def predictions_report(
    predictions: Sequence[LabelPrediction], label_space: Sequence[str]
) -> dict:
    return {
        "schema_version": 1,
        "documents": [
            {
                "doc_id": i,
                "labels": sorted(label_space[k] for k in pred.hard),
                "scores": {label_space[k]: float(s) for k, s in enumerate(pred.scores)},
            }
            for i, pred in enumerate(predictions, start=1)
        ],
    }
