"""Collapsed Gibbs sampling for topic models.

Three modes share one sweep loop:

* ``train``     -- fully collapsed update; phi is marginalized out and the
                   word factor is (n_kv + beta_v) / (n_k + sum(beta)).
* ``predict``   -- phi is fixed to a trained estimate; the word factor is
                   phi[k, v].
* ``labeled``   -- the train update restricted to each document's observed
                   label set (topics outside it get probability zero).

In every case the document factor is (n_dk + alpha_k); the per-document
denominator N_d + sum(alpha) is constant across topics and cancels under
normalization. Counts follow the leave-one-out convention: the token being
resampled is removed from all tallies before its conditional is computed.

``sweep_sparse`` draws from the identical conditional via the three-bucket
decomposition of the unnormalized mass (smoothing, document, and word
buckets), so per-token work scales with the nonzero entries of n_dk[d] and
n_kv[:, v] instead of K.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import Corpus
from .errors import ConstraintError, NumericError
from .model import Hyperparams, SamplerState, rebuild_counts

TRAIN = "train"
PREDICT = "predict"
LABELED = "labeled"


@dataclass(frozen=True)
class ChainSchedule:
    """Burn-in/lag/sample bookkeeping for one or more Markov chains.

    Defaults follow the usual evaluation preset: 50 burn-in sweeps, a lag of
    5 sweeps between retained samples, and 200 sweeps for training-phase
    runs that keep a single final state.
    """

    burn_in: int = 50
    lag: int = 5
    samples: int = 1
    chains: int = 1
    total_train_iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0 or self.lag < 1 or self.samples < 1 or self.chains < 1:
            raise ValueError("invalid schedule: need burn_in>=0, lag>=1, samples>=1, chains>=1")
        if self.total_train_iters < 1:
            raise ValueError("total_train_iters must be >= 1")


@dataclass(frozen=True)
class SamplingMode:
    """Which conditional the sweep uses; ``fixed_phi`` is required iff
    ``variant == "predict"``."""

    variant: str
    fixed_phi: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in (TRAIN, PREDICT, LABELED):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == PREDICT:
            if self.fixed_phi is None:
                raise ValueError("predict mode requires fixed_phi")
            phi = np.asarray(self.fixed_phi, dtype=np.float64)
            if not np.allclose(phi.sum(axis=1), 1.0, atol=1e-9, rtol=0):
                raise ValueError("fixed_phi rows must sum to 1 within 1e-9")
            object.__setattr__(self, "fixed_phi", phi)
        elif self.fixed_phi is not None:
            raise ValueError(f"{self.variant} mode must not carry fixed_phi")

    @classmethod
    def train(cls) -> "SamplingMode":
        return cls(variant=TRAIN)

    @classmethod
    def predict(cls, phi: np.ndarray) -> "SamplingMode":
        return cls(variant=PREDICT, fixed_phi=phi)

    @classmethod
    def labeled(cls) -> "SamplingMode":
        return cls(variant=LABELED)


def mix_chain_seed(base_seed: int, chain_index: int) -> int:
    """Derive a chain seed from (base seed, chain index) with a splitmix64
    finalizer, so chains are reproducible and decorrelated by construction."""
    x = (base_seed + (chain_index + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def _allowed_topics(corpus: Corpus, n_topics: int) -> list[np.ndarray]:
    allowed = []
    for d, doc in enumerate(corpus.documents):
        if not doc.labels:
            raise ConstraintError(f"document {d} has no labels; labeled mode needs a nonempty label set")
        ids = np.array(sorted(doc.labels), dtype=np.int64)
        if ids[-1] >= n_topics:
            raise ConstraintError(f"document {d}: label id {ids[-1]} >= K={n_topics}")
        allowed.append(ids)
    return allowed


def init_state(
    corpus: Corpus, n_topics: int, mode: SamplingMode, seed: int
) -> SamplerState:
    """Uniform random topic per token (uniform over the document's label set
    in labeled mode); counts tallied from the assignments."""
    rng = np.random.default_rng(seed)
    allowed = _allowed_topics(corpus, n_topics) if mode.variant == LABELED else None
    z = []
    for d, doc in enumerate(corpus.documents):
        n = doc.n_tokens
        if allowed is not None:
            z.append(allowed[d][rng.integers(0, allowed[d].shape[0], size=n)])
        else:
            z.append(rng.integers(0, n_topics, size=n, dtype=np.int64))
    counts = rebuild_counts(z, corpus, n_topics)
    return SamplerState(z=z, counts=counts, rng_seed=seed, iteration=0)


def gibbs_transition(
    state: SamplerState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    d: int,
    j: int,
) -> np.ndarray:
    """Normalized full conditional for token (d, j).

    Precondition: the token's current assignment has already been removed
    from the counts (leave-one-out convention).
    """
    v = int(corpus.documents[d].tokens[j])
    counts = state.counts
    doc_factor = counts.n_dk[d] + hyper.alpha
    if mode.variant == PREDICT:
        p = mode.fixed_phi[:, v] * doc_factor
    else:
        p = (counts.n_kv[:, v] + hyper.beta[v]) / (counts.n_k + hyper.beta_sum) * doc_factor
        if mode.variant == LABELED:
            labels = corpus.documents[d].labels
            if not labels:
                raise ConstraintError(f"document {d} has an empty label set")
            mask = np.zeros(hyper.n_topics, dtype=bool)
            mask[list(labels)] = True
            p = np.where(mask, p, 0.0)
    total = p.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericError(f"zero or invalid transition mass at token ({d}, {j})")
    return p / total


def sweep(
    state: SamplerState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    rng: np.random.Generator,
) -> SamplerState:
    """Resample every token once, in document order then position order,
    updating counts incrementally. Consumes exactly one uniform draw per
    token, so trajectories are reproducible given the generator state."""
    counts = state.counts
    n_dk, n_kv, n_k = counts.n_dk, counts.n_kv, counts.n_k
    alpha, beta, beta_sum = hyper.alpha, hyper.beta, hyper.beta_sum
    variant = mode.variant
    phi_t = None
    if variant == PREDICT:
        phi_t = np.ascontiguousarray(mode.fixed_phi.T)
    allowed = _allowed_topics(corpus, hyper.n_topics) if variant == LABELED else None

    us = rng.random(corpus.n_tokens)
    t = 0
    for d, doc in enumerate(corpus.documents):
        tokens = doc.tokens
        zd = state.z[d]
        nd = n_dk[d]
        topics = allowed[d] if allowed is not None else None
        for j in range(tokens.shape[0]):
            v = tokens[j]
            old = zd[j]
            nd[old] -= 1
            n_kv[old, v] -= 1
            n_k[old] -= 1
            if variant == PREDICT:
                p = phi_t[v] * (nd + alpha)
            elif variant == TRAIN:
                p = (n_kv[:, v] + beta[v]) / (n_k + beta_sum) * (nd + alpha)
            else:
                p = (n_kv[topics, v] + beta[v]) / (n_k[topics] + beta_sum) \
                    * (nd[topics] + alpha[topics])
            cum = np.cumsum(p)
            total = cum[-1]
            if not np.isfinite(total) or total <= 0.0:
                raise NumericError(f"zero or invalid transition mass at token ({d}, {j})")
            idx = int(np.searchsorted(cum, us[t] * total, side="right"))
            new = int(topics[idx]) if topics is not None else idx
            zd[j] = new
            nd[new] += 1
            n_kv[new, v] += 1
            n_k[new] += 1
            t += 1
    counts.n_d[:] = n_dk.sum(axis=1)
    state.iteration += 1
    return state


def run_chain(
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    schedule: ChainSchedule,
    chain_index: int = 0,
    sparse: bool = False,
) -> list[SamplerState]:
    """Run one chain and return the retained snapshots.

    Snapshots are taken after sweeps burn_in + lag, burn_in + 2*lag, ...
    until ``samples`` snapshots are collected. Exception: a train-phase run
    with ``samples == 1`` keeps exactly the final state after
    ``total_train_iters`` sweeps (the single-point-estimate convention).
    """
    seed = mix_chain_seed(schedule.seed, chain_index)
    state = init_state(corpus, hyper.n_topics, mode, seed)
    # separate stream for the sweeps so initialization draws and sweep
    # uniforms never share generator state
    rng = np.random.default_rng(mix_chain_seed(seed, 0))
    do_sweep = sweep_sparse if sparse else sweep

    if mode.variant in (TRAIN, LABELED) and schedule.samples == 1:
        for _ in range(schedule.total_train_iters):
            do_sweep(state, corpus, hyper, mode, rng)
        return [state.snapshot()]

    snapshots = []
    for _ in range(schedule.burn_in):
        do_sweep(state, corpus, hyper, mode, rng)
    while len(snapshots) < schedule.samples:
        for _ in range(schedule.lag):
            do_sweep(state, corpus, hyper, mode, rng)
        snapshots.append(state.snapshot())
    return snapshots


# --------------------------------------------------------------------------
# Sparsity-aware training sweep.
#
# With the token removed, the unnormalized mass splits exactly as
#
#   mass_k = [alpha_k*beta_v + n_dk*beta_v + n_kv*(alpha_k + n_dk)] / (n_k + B)
#
# (B = sum(beta)), i.e. a smoothing-only bucket over all K topics, a
# document bucket over nonzeros of n_dk[d], and a word bucket over nonzeros
# of n_kv[:, v]. The smoothing total and the document total are maintained
# incrementally; the word bucket is assembled from a per-word nonzero-topic
# map, so drawing a topic touches O(nnz) entries in the common case.
# --------------------------------------------------------------------------


def sparse_token_distribution(
    state: SamplerState, corpus: Corpus, hyper: Hyperparams, d: int, j: int
) -> np.ndarray:
    """Dense conditional reassembled from the bucket decomposition; agrees
    with :func:`gibbs_transition` (train mode) to floating-point identity.
    Same precondition: token (d, j) already decremented."""
    v = int(corpus.documents[d].tokens[j])
    counts = state.counts
    denom = counts.n_k + hyper.beta_sum
    beta_v = hyper.beta[v]
    smooth = hyper.alpha * beta_v / denom
    docb = counts.n_dk[d] * beta_v / denom
    wordb = counts.n_kv[:, v] * (hyper.alpha + counts.n_dk[d]) / denom
    p = smooth + docb + wordb
    total = p.sum()
    if total <= 0.0:
        raise NumericError(f"zero transition mass at token ({d}, {j})")
    return p / total


def sweep_sparse(
    state: SamplerState,
    corpus: Corpus,
    hyper: Hyperparams,
    mode: SamplingMode,
    rng: np.random.Generator,
) -> SamplerState:
    """Training sweep drawing from the same per-token conditional as
    :func:`sweep` via the bucket decomposition. Statistically
    indistinguishable from the dense sweep; one uniform draw per token."""
    if mode.variant != TRAIN:
        raise ValueError("sweep_sparse supports train mode only")
    counts = state.counts
    n_dk, n_kv, n_k = counts.n_dk, counts.n_kv, counts.n_k
    alpha, beta, beta_sum = hyper.alpha, hyper.beta, hyper.beta_sum
    K = hyper.n_topics

    denom = n_k + beta_sum
    # per-word nonzero topic map: word_nz[v] = {topic: count}
    word_nz: list[dict[int, int]] = [dict() for _ in range(corpus.n_terms)]
    ks, vs = np.nonzero(n_kv)
    for k, v in zip(ks.tolist(), vs.tolist()):
        word_nz[v][k] = int(n_kv[k, v])

    # smoothing total s_alpha = sum_k alpha_k / (n_k + B), kept incrementally
    s_alpha = float((alpha / denom).sum())

    us = rng.random(corpus.n_tokens)
    t = 0
    for d, doc in enumerate(corpus.documents):
        tokens = doc.tokens
        zd = state.z[d]
        nd = n_dk[d]
        doc_nz = {int(k): int(c) for k, c in enumerate(nd) if c > 0}
        # document total r_d = sum_{k in doc_nz} n_dk / (n_k + B)
        r_d = float(sum(c / denom[k] for k, c in doc_nz.items()))
        for j in range(tokens.shape[0]):
            v = int(tokens[j])
            old = int(zd[j])
            # -------- decrement, with O(1) updates of the running totals
            s_alpha -= alpha[old] / denom[old]
            r_d -= doc_nz[old] / denom[old]
            nd[old] -= 1
            n_kv[old, v] -= 1
            n_k[old] -= 1
            denom[old] -= 1.0
            if doc_nz[old] == 1:
                del doc_nz[old]
            else:
                doc_nz[old] -= 1
            wv = word_nz[v]
            if wv[old] == 1:
                del wv[old]
            else:
                wv[old] -= 1
            s_alpha += alpha[old] / denom[old]
            if old in doc_nz:
                r_d += doc_nz[old] / denom[old]

            beta_v = beta[v]
            s_mass = beta_v * s_alpha
            r_mass = beta_v * r_d
            q_entries = [(k, c * (alpha[k] + nd[k]) / denom[k]) for k, c in wv.items()]
            q_mass = sum(m for _, m in q_entries)

            u = us[t] * (s_mass + r_mass + q_mass)
            new = -1
            if u < q_mass:
                acc = 0.0
                for k, m in q_entries:
                    acc += m
                    if u < acc:
                        new = k
                        break
                if new < 0:
                    new = q_entries[-1][0]
            elif u < q_mass + r_mass:
                u2 = (u - q_mass) / beta_v
                acc = 0.0
                for k, c in doc_nz.items():
                    acc += c / denom[k]
                    if u2 < acc:
                        new = k
                        break
                if new < 0:
                    new = next(reversed(doc_nz))
            else:
                u3 = (u - q_mass - r_mass) / beta_v
                acc = 0.0
                for k in range(K):
                    acc += alpha[k] / denom[k]
                    if u3 < acc:
                        new = k
                        break
                if new < 0:
                    new = K - 1

            # -------- increment, mirroring the decrement bookkeeping
            s_alpha -= alpha[new] / denom[new]
            if new in doc_nz:
                r_d -= doc_nz[new] / denom[new]
            zd[j] = new
            nd[new] += 1
            n_kv[new, v] += 1
            n_k[new] += 1
            denom[new] += 1.0
            doc_nz[new] = doc_nz.get(new, 0) + 1
            wv[new] = wv.get(new, 0) + 1
            s_alpha += alpha[new] / denom[new]
            r_d += doc_nz[new] / denom[new]
            t += 1
        # running totals accumulate rounding drift; refresh per document
        s_alpha = float((alpha / denom).sum())
    counts.n_d[:] = n_dk.sum(axis=1)
    state.iteration += 1
    return state
