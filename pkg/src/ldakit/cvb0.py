"""Zero-order collapsed variational inference (CVB0).

Each token carries a dense probability vector gamma over topics; a sweep
recomputes every gamma in place from the leave-one-out soft counts,

    gamma[k] ~ (m_kv + beta_v) / (m_k + sum(beta)) * (m_dk + alpha_k)

(prediction mode replaces the word factor with a fixed phi). The update is
deterministic: identical initialization yields bitwise-identical state after
any number of sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus
from .errors import ConstraintError, NumericError
from .model import (
    Hyperparams,
    ParamEstimate,
    SoftCounts,
    register_checkpoint_kind,
)
from .sampler import LABELED, PREDICT, SamplingMode

RECOMPUTE_EVERY = 50  # sweeps between exact soft-count rebuilds (drift bound)


@dataclass
class VariationalState:
    """Per-token variational distributions plus their running soft-count
    sums."""

    gamma: list[np.ndarray]
    soft: SoftCounts
    iteration: int = 0

    def copy(self) -> "VariationalState":
        return VariationalState(
            gamma=[g.copy() for g in self.gamma],
            soft=self.soft.copy(),
            iteration=self.iteration,
        )


def recompute_soft_counts(state: VariationalState, corpus: Corpus) -> None:
    """Exact rebuild of the soft counts from gamma, resetting incremental
    floating-point drift."""
    K = state.soft.m_dk.shape[1]
    V = state.soft.m_kv.shape[1]
    m_dk = np.zeros_like(state.soft.m_dk)
    m_kv = np.zeros((K, V))
    m_vk = m_kv.T
    for d, doc in enumerate(corpus.documents):
        g = state.gamma[d]
        if g.shape[0]:
            m_dk[d] = g.sum(axis=0)
            np.add.at(m_vk, doc.tokens, g)
    state.soft.m_dk[:] = m_dk
    state.soft.m_kv[:] = m_kv
    state.soft.m_k[:] = m_kv.sum(axis=1)


def init_variational(
    corpus: Corpus,
    n_topics: int,
    seed: Optional[int] = None,
    gamma: Optional[Sequence[np.ndarray]] = None,
) -> VariationalState:
    """Random flat-Dirichlet gamma rows (seeded), or explicitly provided
    gamma."""
    if gamma is not None:
        gamma = [np.asarray(g, dtype=np.float64).copy() for g in gamma]
        for d, (g, doc) in enumerate(zip(gamma, corpus.documents)):
            if g.shape != (doc.n_tokens, n_topics):
                raise ValueError(f"gamma[{d}] has shape {g.shape}")
            if not np.allclose(g.sum(axis=1), 1.0, atol=1e-9, rtol=0):
                raise ValueError(f"gamma[{d}] rows must sum to 1")
    else:
        rng = np.random.default_rng(seed)
        gamma = [
            rng.dirichlet(np.ones(n_topics), size=doc.n_tokens)
            if doc.n_tokens else np.zeros((0, n_topics))
            for doc in corpus.documents
        ]
    state = VariationalState(
        gamma=gamma,
        soft=SoftCounts.zeros(corpus.n_docs, n_topics, corpus.n_terms),
    )
    recompute_soft_counts(state, corpus)
    return state


def cvb0_sweep(
    state: VariationalState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    doc_order: Optional[np.ndarray] = None,
) -> VariationalState:
    """One deterministic pass over all tokens in fixed order: remove the
    token's gamma from the soft counts, recompute it from the leave-one-out
    update, normalize, add it back."""
    soft = state.soft
    m_dk, m_kv, m_k = soft.m_dk, soft.m_kv, soft.m_k
    alpha, beta, beta_sum = hyper.alpha, hyper.beta, hyper.beta_sum
    variant = mode.variant
    phi_t = np.ascontiguousarray(mode.fixed_phi.T) if variant == PREDICT else None

    order = doc_order if doc_order is not None else range(corpus.n_docs)
    for d in order:
        doc = corpus.documents[d]
        tokens = doc.tokens
        g_doc = state.gamma[d]
        md = m_dk[d]
        mask = None
        if variant == LABELED:
            if not doc.labels:
                raise ConstraintError(f"document {d} has no labels in labeled mode")
            mask = np.zeros(hyper.n_topics, dtype=bool)
            mask[list(doc.labels)] = True
        for j in range(tokens.shape[0]):
            v = tokens[j]
            g = g_doc[j]
            md -= g
            m_kv[:, v] -= g
            m_k -= g
            if variant == PREDICT:
                p = phi_t[v] * (md + alpha)
            else:
                p = (m_kv[:, v] + beta[v]) / (m_k + beta_sum) * (md + alpha)
                if mask is not None:
                    p = np.where(mask, p, 0.0)
            total = p.sum()
            if not np.isfinite(total) or total <= 0.0:
                raise NumericError(f"zero or invalid variational mass at token ({d}, {j})")
            g_new = p / total
            g_doc[j] = g_new
            md += g_new
            m_kv[:, v] += g_new
            m_k += g_new
    state.iteration += 1
    return state


def cvb0_run(
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    iters: int,
    seed: Optional[int] = None,
    gamma_init: Optional[Sequence[np.ndarray]] = None,
    shuffle_docs: bool = False,
) -> VariationalState:
    """Initialize and sweep ``iters`` times. ``shuffle_docs`` visits the
    documents in a seed-keyed random order (fixed across sweeps); the
    default is corpus order. Soft counts are rebuilt exactly every
    ``RECOMPUTE_EVERY`` sweeps to bound incremental drift."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    state = init_variational(corpus, hyper.n_topics, seed=seed, gamma=gamma_init)
    order = None
    if shuffle_docs:
        order = np.random.default_rng(seed).permutation(corpus.n_docs)
    for it in range(iters):
        cvb0_sweep(state, corpus, hyper, mode, doc_order=order)
        if (it + 1) % RECOMPUTE_EVERY == 0:
            recompute_soft_counts(state, corpus)
    return state


def cvb0_estimates(state: VariationalState, hyper: Hyperparams) -> ParamEstimate:
    """Standard smoothed estimators applied to the variational soft counts."""
    soft = state.soft
    n_d = soft.m_dk.sum(axis=1)
    theta = (soft.m_dk + hyper.alpha) / (n_d + hyper.alpha_sum)[:, None]
    phi = (soft.m_kv + hyper.beta) / (soft.m_k + hyper.beta_sum)[:, None]
    theta = theta / theta.sum(axis=1, keepdims=True)
    phi = phi / phi.sum(axis=1, keepdims=True)
    return ParamEstimate(theta=theta, phi=phi, meta={"estimator": "cvb0"})


def export_gamma_csv(state: VariationalState, path) -> None:
    """One row per token: document id, position, then the K gamma values.
    Mind the size: this writes K numbers for every token in the corpus."""
    with open(path, "w", encoding="utf-8") as fh:
        for d, g in enumerate(state.gamma):
            for j in range(g.shape[0]):
                values = ",".join(f"{x:.17g}" for x in g[j])
                fh.write(f"{d},{j},{values}\n")


def _pack_variational(state: VariationalState):
    flat = (np.concatenate(state.gamma, axis=0)
            if state.gamma else np.zeros((0, 0)))
    offsets = np.cumsum([0] + [g.shape[0] for g in state.gamma]).astype(np.int64)
    arrays = [
        ("flat_gamma", flat.astype(np.float64)),
        ("offsets", offsets),
        ("m_dk", state.soft.m_dk),
        ("m_kv", state.soft.m_kv),
        ("m_k", state.soft.m_k),
    ]
    return arrays, {"iteration": int(state.iteration)}


def _unpack_variational(arrays, extra) -> VariationalState:
    offsets = arrays["offsets"]
    flat = arrays["flat_gamma"]
    gamma = [flat[offsets[i]:offsets[i + 1]].copy() for i in range(len(offsets) - 1)]
    soft = SoftCounts(arrays["m_dk"], arrays["m_kv"], arrays["m_k"])
    return VariationalState(gamma=gamma, soft=soft, iteration=extra["iteration"])


register_checkpoint_kind(
    "variational_state", VariationalState, _pack_variational, _unpack_variational
)
