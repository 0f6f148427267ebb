"""Brute-force exact computation on tiny instances.

Everything here enumerates complete topic-assignment vectors, so it only
runs on instances with K^N below a hard cap. It exists to give the samplers
and estimators an independent ground truth: exact per-document posteriors
under a fixed phi, the exact collapsed posterior of a whole (tiny) training
corpus, the fully marginalized document-topic estimator that the Monte
Carlo estimators approximate, and exact verification of the soft-count phi
estimator's denominator approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .corpus import Corpus, Document
from .errors import EnumerationCapError, NumericError
from .estimators import soft_counts
from .model import Hyperparams, SamplerState
from .sampler import SamplingMode

ENUMERATION_CAP = 2 ** 22  # fail loudly rather than silently subsample


def _check_cap(n_topics: int, n_tokens: int) -> int:
    size = n_topics ** n_tokens if n_tokens else 1
    if size > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"K^N = {n_topics}^{n_tokens} exceeds the enumeration cap {ENUMERATION_CAP}"
        )
    return size


def _all_assignments(n_topics: int, n_tokens: int) -> np.ndarray:
    if n_tokens == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*([np.arange(n_topics)] * n_tokens), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _topic_counts(assignments: np.ndarray, n_topics: int) -> np.ndarray:
    return np.stack(
        [(assignments == k).sum(axis=1) for k in range(n_topics)], axis=1
    ).astype(np.float64)


def _log_dirichlet_multinomial(counts: np.ndarray, conc: np.ndarray) -> np.ndarray:
    """log DM(counts; conc) for each row of integer counts."""
    total = counts.sum(axis=1)
    return (
        gammaln(conc.sum())
        - gammaln(total + conc.sum())
        + (gammaln(counts + conc) - gammaln(conc)).sum(axis=1)
    )


@dataclass(frozen=True)
class EnumerablePosterior:
    """Exact posterior over all topic-assignment vectors of one document,
    conditional on a fixed phi. Carries the inputs so downstream estimators
    can recompute transition probabilities."""

    tokens: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray
    assignments: np.ndarray  # (M, N)
    log_weights: np.ndarray  # (M,)
    probs: np.ndarray        # (M,), sums to 1

    @property
    def n_topics(self) -> int:
        return self.phi.shape[0]

    def site_marginals(self) -> np.ndarray:
        """(N, K) matrix of exact per-token assignment marginals."""
        n, k = self.assignments.shape[1], self.n_topics
        out = np.zeros((n, k))
        for j in range(n):
            for t in range(k):
                out[j, t] = self.probs[self.assignments[:, j] == t].sum()
        return out


def exact_posterior(doc: Document, phi: np.ndarray, alpha: np.ndarray) -> EnumerablePosterior:
    """Enumerate p(z_d | w_d, phi, alpha) exactly.

    Each assignment's weight is the product of its word likelihoods under
    phi and the Dirichlet-multinomial probability of its topic counts under
    alpha, computed in log space with a single max-shift normalization.
    """
    phi = np.asarray(phi, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    tokens = doc.tokens
    K = phi.shape[0]
    _check_cap(K, tokens.shape[0])
    assignments = _all_assignments(K, tokens.shape[0])
    with np.errstate(divide="ignore"):
        log_phi = np.log(phi)
    word_ll = (
        log_phi[assignments, np.broadcast_to(tokens, assignments.shape)].sum(axis=1)
        if tokens.shape[0] else np.zeros(1)
    )
    counts = _topic_counts(assignments, K)
    log_w = word_ll + _log_dirichlet_multinomial(counts, alpha)
    if not np.isfinite(log_w.max()):
        raise NumericError("all enumerated assignments have zero probability")
    shifted = np.exp(log_w - log_w.max())
    probs = shifted / shifted.sum()
    return EnumerablePosterior(
        tokens=tokens, phi=phi, alpha=alpha,
        assignments=assignments, log_weights=log_w, probs=probs,
    )


def theta_marginal(posterior: EnumerablePosterior, alpha: np.ndarray) -> np.ndarray:
    """The exact marginalized document-topic estimate: the hard-count
    estimator averaged over the full posterior,

        sum_z p(z | w, phi, alpha) * (n_k(z) + alpha_k) / (N + sum(alpha)).

    This is the quantity both Monte Carlo estimators converge to.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    counts = _topic_counts(posterior.assignments, posterior.n_topics)
    n = posterior.tokens.shape[0]
    per_assignment = (counts + alpha) / (n + alpha.sum())
    return posterior.probs @ per_assignment


def _site_conditional(
    tokens: np.ndarray, z: np.ndarray, j: int, phi: np.ndarray, alpha: np.ndarray
) -> np.ndarray:
    """Leave-one-out conditional of site j given the rest of z (fixed phi)."""
    K = phi.shape[0]
    counts = np.bincount(np.delete(z, j), minlength=K)
    p = phi[:, tokens[j]] * (counts + alpha)
    total = p.sum()
    if total <= 0:
        raise NumericError("zero conditional mass in oracle resampling")
    return p / total


def theta_finite_resampling(
    posterior: EnumerablePosterior,
    alpha: np.ndarray,
    n_samples: int,
    n_inner: Optional[int],
    seed: int = 0,
) -> np.ndarray:
    """Finite-resampling estimator: draw ``n_samples`` assignments from the
    exact posterior; for each, refresh every site ``n_inner`` times from its
    one-site conditional (each refresh restarts from the drawn assignment)
    and average the resulting indicators.

    ``n_inner=None`` takes the analytic limit, averaging the conditional
    probabilities themselves -- the closed form the soft-count estimator
    uses. Variance shrinks as ``n_inner`` grows at fixed ``n_samples``.
    """
    rng = np.random.default_rng(seed)
    alpha = np.asarray(alpha, dtype=np.float64)
    K = posterior.n_topics
    tokens = posterior.tokens
    n = tokens.shape[0]
    if n == 0:
        return alpha / alpha.sum()
    # draw sample multiplicities in one shot; assignments are exchangeable
    multiplicity = rng.multinomial(n_samples, posterior.probs)
    acc = np.zeros(K)
    for m_idx in np.nonzero(multiplicity)[0]:
        reps = int(multiplicity[m_idx])
        z = posterior.assignments[m_idx]
        for j in range(n):
            cond = _site_conditional(tokens, z, j, posterior.phi, alpha)
            if n_inner is None:
                acc += reps * cond
            else:
                acc += rng.multinomial(reps * n_inner, cond) / n_inner
    theta = (acc / n_samples + alpha) / (n + alpha.sum())
    return theta / theta.sum()


# --------------------------------------------------------------------------
# Exact collapsed posterior of a whole tiny corpus (no fixed phi): the
# ground truth for train-mode sweeps, where phi is marginalized out.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapsedEnumeration:
    corpus: Corpus
    hyper: Hyperparams
    assignments: np.ndarray  # (M, N_total), sites in document-then-position order
    probs: np.ndarray

    def site_marginals(self) -> np.ndarray:
        n, K = self.assignments.shape[1], self.hyper.n_topics
        out = np.zeros((n, K))
        for j in range(n):
            for t in range(K):
                out[j, t] = self.probs[self.assignments[:, j] == t].sum()
        return out


def exact_collapsed_posterior(corpus: Corpus, hyper: Hyperparams) -> CollapsedEnumeration:
    """Enumerate p(z | w, alpha, beta) with both parameter sets integrated
    out: a product of per-document Dirichlet-multinomials over topic counts
    and per-topic Dirichlet-multinomials over word counts."""
    K = hyper.n_topics
    n_total = corpus.n_tokens
    _check_cap(K, n_total)
    assignments = _all_assignments(K, n_total)
    M = assignments.shape[0]
    lengths = corpus.doc_lengths()
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    log_w = np.zeros(M)
    for d in range(corpus.n_docs):
        zd = assignments[:, offsets[d]:offsets[d + 1]]
        log_w += _log_dirichlet_multinomial(_topic_counts(zd, K), hyper.alpha)
    all_tokens = np.concatenate(
        [doc.tokens for doc in corpus.documents]
    ) if n_total else np.zeros(0, dtype=np.int64)
    V = corpus.n_terms
    for k in range(K):
        counts_kv = np.zeros((M, V))
        for v in range(V):
            counts_kv[:, v] = ((assignments == k) & (all_tokens == v)).sum(axis=1)
        log_w += _log_dirichlet_multinomial(counts_kv, hyper.beta)
    shifted = np.exp(log_w - log_w.max())
    return CollapsedEnumeration(
        corpus=corpus, hyper=hyper,
        assignments=assignments, probs=shifted / shifted.sum(),
    )


# --------------------------------------------------------------------------
# Exact verification of the soft-count phi estimator's fixed-denominator
# approximation over the set of assignments one Gibbs update away from a
# state.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DenominatorBound:
    lower: float
    middle: float
    upper: float


def phi_soft_bound_check(
    state: SamplerState, corpus: Corpus, hyper: Hyperparams, k: int, v: int
) -> DenominatorBound:
    """Exact expectation of the smoothed (k, v) ratio over single-site Gibbs
    perturbations of ``state`` (``middle``), bracketed by the two
    fixed-denominator expectations scaled by (n_k + B) / (n_k + B -+ 1).

    The adjacent-sample distribution picks a site uniformly and redraws it
    from its collapsed conditional with all other sites held fixed. Requires
    n_k > 0.
    """
    counts = state.counts
    n_k_i = int(counts.n_k[k])
    if n_k_i <= 0:
        raise ValueError(f"topic {k} has zero hard count; bound undefined")
    beta_sum = hyper.beta_sum
    beta_v = float(hyper.beta[v])
    n_sites = corpus.n_tokens
    if n_sites == 0:
        raise ValueError("empty corpus")

    middle = 0.0
    fixed = 0.0
    site_w = 1.0 / n_sites
    for d, doc in enumerate(corpus.documents):
        tokens = doc.tokens
        zd = state.z[d]
        for j in range(tokens.shape[0]):
            w = int(tokens[j])
            old = int(zd[j])
            # leave-one-out conditional at this site (collapsed form)
            word_col = counts.n_kv[:, w].astype(np.float64).copy()
            word_col[old] -= 1.0
            nk = counts.n_k.astype(np.float64).copy()
            nk[old] -= 1.0
            nd = counts.n_dk[d].astype(np.float64).copy()
            nd[old] -= 1.0
            cond = (word_col + hyper.beta[w]) / (nk + beta_sum) * (nd + hyper.alpha)
            cond /= cond.sum()
            for t in range(hyper.n_topics):
                nkv_after = counts.n_kv[k, v] \
                    - (1 if (old == k and w == v) else 0) \
                    + (1 if (t == k and w == v) else 0)
                nk_after = n_k_i - (1 if old == k else 0) + (1 if t == k else 0)
                weight = site_w * cond[t]
                middle += weight * (nkv_after + beta_v) / (nk_after + beta_sum)
                fixed += weight * (nkv_after + beta_v) / (n_k_i + beta_sum)
    ratio = n_k_i + beta_sum
    return DenominatorBound(
        lower=float(ratio / (ratio + 1.0) * fixed),
        middle=float(middle),
        upper=float(ratio / (ratio - 1.0) * fixed),
    )


def phi_soft_bound_grid(
    state: SamplerState, corpus: Corpus, hyper: Hyperparams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (topic, word) bound checks in one pass over sites.

    Returns (lower, middle, upper) matrices of shape (K, V); rows whose hard
    topic count is zero are NaN (the bound is undefined there). Agrees with
    :func:`phi_soft_bound_check` entrywise.

    The site loop factors the expectation as base + corrections: a perturbed
    assignment changes at most two topic rows of the smoothed ratio matrix,
    and at most two cells of its fixed-denominator counterpart.
    """
    counts = state.counts
    K, V = hyper.n_topics, corpus.n_terms
    beta_sum = hyper.beta_sum
    n_k = counts.n_k.astype(np.float64)
    base = (counts.n_kv + hyper.beta) / (n_k + beta_sum)[:, None]
    n_sites = corpus.n_tokens
    if n_sites == 0:
        raise ValueError("empty corpus")
    site_w = 1.0 / n_sites

    middle = base.copy()
    fixed = base.copy()
    for d, doc in enumerate(corpus.documents):
        tokens = doc.tokens
        zd = state.z[d]
        for j in range(tokens.shape[0]):
            w = int(tokens[j])
            old = int(zd[j])
            word_col = counts.n_kv[:, w].astype(np.float64)
            word_col[old] -= 1.0
            nk_dec = n_k.copy()
            nk_dec[old] -= 1.0
            nd = counts.n_dk[d].astype(np.float64)
            nd[old] -= 1.0
            cond = (word_col + hyper.beta[w]) / (nk_dec + beta_sum) * (nd + hyper.alpha)
            cond /= cond.sum()
            for t in range(K):
                weight = site_w * cond[t]
                if weight == 0.0:
                    continue
                if t != old:
                    # rows old and t see changed denominators and one changed cell
                    row_old = (counts.n_kv[old] + hyper.beta).astype(np.float64)
                    row_old[w] -= 1.0
                    row_t = (counts.n_kv[t] + hyper.beta).astype(np.float64)
                    row_t[w] += 1.0
                    middle[old] += weight * (row_old / (n_k[old] - 1.0 + beta_sum) - base[old])
                    middle[t] += weight * (row_t / (n_k[t] + 1.0 + beta_sum) - base[t])
                    fixed[old, w] -= weight / (n_k[old] + beta_sum)
                    fixed[t, w] += weight / (n_k[t] + beta_sum)
            # t == old leaves every count unchanged: no correction
    ratio = n_k + beta_sum
    with np.errstate(invalid="ignore", divide="ignore"):
        lower = (ratio / (ratio + 1.0))[:, None] * fixed
        upper = (ratio / (ratio - 1.0))[:, None] * fixed
    empty = counts.n_k <= 0
    for mat in (lower, middle, upper):
        mat[empty] = np.nan
    return lower, middle, upper


def hard_soft_divergence(
    state: SamplerState, corpus: Corpus, hyper: Hyperparams, mode: SamplingMode
) -> float:
    """Mean absolute difference per document between hard document-topic
    counts and their soft counterparts."""
    soft = soft_counts(state, corpus, hyper, mode)
    return float(np.abs(state.counts.n_dk - soft.m_dk).sum() / corpus.n_docs)
