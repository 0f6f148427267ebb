"""Point-estimate recovery from sampler states.

Two families:

* the standard Rao-Blackwellized estimators, which smooth the hard
  assignment counts with the Dirichlet priors:

      theta[d, k] = (n_dk + alpha_k) / (N_d + sum(alpha))
      phi[k, v]   = (n_kv + beta_v)  / (n_k + sum(beta))

* the soft-count estimators, which replace each token's unit count with its
  full leave-one-out transition-probability vector before smoothing. A
  state's soft counts are an implicit average over every assignment one
  Gibbs update away from it, which makes the resulting estimates markedly
  more stable than the hard-count versions when few samples are available.

Averaging across samples (hard or soft) is only meaningful when topic
indices are anchored: at prediction time with phi held fixed, or in
label-constrained training. Callers are responsible for that guard.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus
from .errors import ConstraintError, NumericError
from .model import CountMatrices, Hyperparams, ParamEstimate, SamplerState, SoftCounts
from .sampler import LABELED, PREDICT, SamplingMode


class EstimatorKind(str, Enum):
    THETA_STANDARD = "theta_standard"
    THETA_SOFT = "theta_soft"
    PHI_STANDARD = "phi_standard"
    PHI_SOFT = "phi_soft"


def theta_standard(counts: CountMatrices, hyper: Hyperparams) -> np.ndarray:
    """(n_dk + alpha) / (N_d + sum(alpha)), row-stochastic by construction.
    Empty documents get the normalized prior."""
    return (counts.n_dk + hyper.alpha) / (counts.n_d + hyper.alpha_sum)[:, None]


def phi_standard(counts: CountMatrices, hyper: Hyperparams) -> np.ndarray:
    """(n_kv + beta) / (n_k + sum(beta)); empty topics get the normalized
    prior row."""
    return (counts.n_kv + hyper.beta) / (counts.n_k + hyper.beta_sum)[:, None]


def _doc_transition_matrix(
    tokens: np.ndarray,
    zd: np.ndarray,
    n_dk_row: np.ndarray,
    n_kv: np.ndarray,
    n_k: np.ndarray,
    hyper: Hyperparams,
    mode: SamplingMode,
    allowed: Optional[np.ndarray],
) -> np.ndarray:
    """All leave-one-out conditionals of one document as an (N_d, K) matrix.

    The decrements are applied arithmetically per row instead of mutating
    the shared counts, which keeps the computation read-only and lets it
    run over documents in parallel.
    """
    n = tokens.shape[0]
    rows = np.arange(n)
    doc_factor = np.repeat((n_dk_row + hyper.alpha)[None, :], n, axis=0)
    doc_factor[rows, zd] -= 1.0
    if mode.variant == PREDICT:
        p = mode.fixed_phi[:, tokens].T * doc_factor
    else:
        word = n_kv[:, tokens].T + hyper.beta[tokens][:, None]
        word[rows, zd] -= 1.0
        denom = np.repeat((n_k + hyper.beta_sum)[None, :], n, axis=0)
        denom[rows, zd] -= 1.0
        p = word / denom * doc_factor
        if mode.variant == LABELED:
            mask = np.zeros(hyper.n_topics, dtype=bool)
            mask[allowed] = True
            p[:, ~mask] = 0.0
    totals = p.sum(axis=1, keepdims=True)
    if n and (not np.isfinite(totals).all() or (totals <= 0.0).any()):
        raise NumericError("zero or invalid transition mass in soft-count pass")
    return p / totals if n else p.reshape(0, hyper.n_topics)


def soft_counts(
    state: SamplerState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    n_workers: int = 1,
) -> SoftCounts:
    """Accumulate every token's normalized leave-one-out conditional into
    per-(document, topic) and per-(topic, word) soft counts.

    The state is read-only here: each token's decrement is computed locally,
    never written back. With ``n_workers > 1`` documents are processed in
    parallel blocks whose partial word-topic sums are merged in fixed block
    order, so results are reproducible for a fixed worker count.
    """
    D, K, V = corpus.n_docs, hyper.n_topics, corpus.n_terms
    counts = state.counts
    allowed_all: Optional[list] = None
    if mode.variant == LABELED:
        allowed_all = [
            np.array(sorted(doc.labels), dtype=np.int64) if doc.labels else None
            for doc in corpus.documents
        ]
        for d, a in enumerate(allowed_all):
            if a is None and corpus.documents[d].n_tokens:
                raise ConstraintError(f"document {d} has no labels in labeled mode")

    def run_block(doc_ids):
        m_dk_part = np.zeros((len(doc_ids), K))
        m_kv_part = np.zeros((K, V))
        m_vk_view = m_kv_part.T
        for i, d in enumerate(doc_ids):
            doc = corpus.documents[d]
            p = _doc_transition_matrix(
                doc.tokens, state.z[d], counts.n_dk[d],
                counts.n_kv, counts.n_k, hyper, mode,
                allowed_all[d] if allowed_all is not None else None,
            )
            m_dk_part[i] = p.sum(axis=0)
            np.add.at(m_vk_view, doc.tokens, p)
        return m_dk_part, m_kv_part

    soft = SoftCounts.zeros(D, K, V)
    if n_workers <= 1 or D <= 1:
        m_dk_part, m_kv_part = run_block(range(D))
        soft.m_dk[:] = m_dk_part
        soft.m_kv[:] = m_kv_part
    else:
        blocks = np.array_split(np.arange(D), min(n_workers, D))
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            results = list(pool.map(run_block, blocks))
        for ids, (m_dk_part, m_kv_part) in zip(blocks, results):
            soft.m_dk[ids] = m_dk_part
            soft.m_kv += m_kv_part
    soft.m_k[:] = soft.m_kv.sum(axis=1)
    return soft


def theta_soft(
    states: Sequence[SamplerState],
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    train_phi: str = "standard",
    n_workers: int = 1,
) -> np.ndarray:
    """Soft-count document-topic estimate, averaged over states:

        theta[d, k] = (mean_i m_dk^(i) + alpha_k) / (N_d + sum(alpha))

    For prediction-phase states the conditionals use the shared fixed phi.
    For training-phase states a phi estimate is recovered from each
    snapshot's own counts (``train_phi`` selects ``"standard"`` or
    ``"soft"``) and plugged into the prediction-form conditional; soft
    counts are always accumulated from the snapshot's hard counts.
    """
    if not states:
        raise ValueError("need at least one state")
    if train_phi not in ("standard", "soft"):
        raise ValueError("train_phi must be 'standard' or 'soft'")
    D, K = corpus.n_docs, hyper.n_topics
    acc = np.zeros((D, K))
    for st in states:
        if mode.variant == PREDICT:
            st_mode = mode
        else:
            phi = (phi_soft(st, corpus, hyper, mode=mode, n_workers=n_workers)
                   if train_phi == "soft" else phi_standard(st.counts, hyper))
            st_mode = SamplingMode.predict(phi)
        acc += soft_counts(st, corpus, hyper, st_mode, n_workers=n_workers).m_dk
    acc /= len(states)
    theta = (acc + hyper.alpha) / (corpus.doc_lengths() + hyper.alpha_sum)[:, None]
    return theta / theta.sum(axis=1, keepdims=True)


def phi_soft(
    state: SamplerState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: Optional[SamplingMode] = None,
    n_workers: int = 1,
) -> np.ndarray:
    """Soft-count topic-word estimate from a single training snapshot:
    beta-smoothed soft counts with explicit row renormalization.

    Cross-snapshot averaging is deliberately not performed here; without
    anchored topics, independent training samples may permute topic
    indices. Topics with zero soft mass (unreachable under label
    constraints) fall back to the normalized prior row.
    """
    mode = mode or SamplingMode.train()
    if mode.variant == PREDICT:
        raise ValueError("phi_soft recovers phi from training states, not fixed-phi runs")
    soft = soft_counts(state, corpus, hyper, mode, n_workers=n_workers)
    phi = soft.m_kv + hyper.beta
    return phi / phi.sum(axis=1, keepdims=True)


def theta_naive_mc(states: Sequence[SamplerState], hyper: Hyperparams) -> np.ndarray:
    """Plain Monte Carlo estimate: the standard hard-count estimator averaged
    over states. Converges to the same limit as :func:`theta_soft` but needs
    many more samples for the same accuracy. States must share anchored
    topics (fixed-phi prediction runs, or label-constrained training)."""
    if not states:
        raise ValueError("need at least one state")
    acc = theta_standard(states[0].counts, hyper)
    for st in states[1:]:
        acc = acc + theta_standard(st.counts, hyper)
    return acc / len(states)


def average_estimates(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of same-shape row-stochastic matrices.

    Only valid when topic indices agree across inputs (fixed-phi prediction
    or label-anchored training); the caller asserts that.
    """
    if not len(matrices):
        raise ValueError("need at least one matrix")
    first = np.asarray(matrices[0], dtype=np.float64)
    acc = first.copy()
    for m in matrices[1:]:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != first.shape:
            raise ValueError(f"shape mismatch: {m.shape} vs {first.shape}")
        acc += m
    return acc / len(matrices)


def recover_estimate(
    states: Sequence[SamplerState],
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    theta_kind: EstimatorKind = EstimatorKind.THETA_STANDARD,
    phi_kind: EstimatorKind = EstimatorKind.PHI_STANDARD,
    n_workers: int = 1,
) -> ParamEstimate:
    """Bundle a (theta, phi) pair recovered from the given snapshots with
    provenance metadata."""
    if theta_kind == EstimatorKind.THETA_SOFT:
        theta = theta_soft(states, corpus, hyper, mode, n_workers=n_workers)
    else:
        theta = theta_naive_mc(states, hyper)
    if phi_kind == EstimatorKind.PHI_SOFT:
        phis = [phi_soft(st, corpus, hyper,
                         mode=mode if mode.variant != PREDICT else None,
                         n_workers=n_workers)
                for st in states]
    else:
        phis = [phi_standard(st.counts, hyper) for st in states]
    anchored = mode.variant in (PREDICT, LABELED)
    phi = average_estimates(phis) if anchored else phis[-1]
    return ParamEstimate(
        theta=theta,
        phi=phi,
        meta={
            "theta_kind": theta_kind.value,
            "phi_kind": phi_kind.value,
            "samples_per_chain": len(states),
            "chains": 1,
        },
    )
