"""Quantitative evaluation: held-out perplexity, training log-likelihood
traces, multi-label F1 metrics, and word-association ranking."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .corpus import Corpus, split_heldout
from .cvb0 import cvb0_estimates, cvb0_sweep, init_variational
from .errors import NumericError
from .estimators import (
    phi_soft,
    phi_standard,
    theta_naive_mc,
    theta_soft,
    theta_standard,
)
from .model import Hyperparams, SamplerState
from .sampler import ChainSchedule, SamplingMode, init_state, mix_chain_seed, run_chain, sweep


@dataclass
class PerplexityReport:
    log_likelihood: float
    token_count: int
    perplexity: float
    protocol: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "log_likelihood": self.log_likelihood,
            "token_count": self.token_count,
            "perplexity": self.perplexity,
            "protocol": self.protocol,
        }


@dataclass
class F1Report:
    micro_f: float
    macro_f: float
    example_f: float
    per_label: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "micro_f": self.micro_f,
            "macro_f": self.macro_f,
            "example_f": self.example_f,
            "per_label": self.per_label,
        }


def log_likelihood(
    docs: Sequence[np.ndarray], theta: np.ndarray, phi: np.ndarray
) -> float:
    """sum_d sum_i log sum_k phi[k, w_i] * theta[d, k], stabilized in log
    space. A token whose mixture probability is exactly zero signals a
    vocabulary mismatch and raises."""
    with np.errstate(divide="ignore"):
        log_theta = np.log(theta)
        log_phi = np.log(phi)
    total = 0.0
    for d, tokens in enumerate(docs):
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.shape[0] == 0:
            continue
        site_ll = logsumexp(log_theta[d][:, None] + log_phi[:, tokens], axis=0)
        if not np.isfinite(site_ll).all():
            raise NumericError(f"zero mixture probability for a token of document {d}")
        total += float(site_ll.sum())
    return total


def _prediction_schedule(schedule: ChainSchedule, s_averaged: int) -> ChainSchedule:
    """Single-sample prediction runs the chain for the training iteration
    budget and keeps the final state; averaged prediction uses the burn-in /
    lag protocol."""
    if s_averaged == 1:
        return ChainSchedule(
            burn_in=schedule.total_train_iters - 1, lag=1, samples=1,
            chains=schedule.chains, total_train_iters=schedule.total_train_iters,
            seed=schedule.seed,
        )
    return ChainSchedule(
        burn_in=schedule.burn_in, lag=schedule.lag, samples=s_averaged,
        chains=schedule.chains, total_train_iters=schedule.total_train_iters,
        seed=schedule.seed,
    )


def _prediction_states(
    observed: Corpus, phi: np.ndarray, hyper: Hyperparams, schedule: ChainSchedule
) -> list[SamplerState]:
    mode = SamplingMode.predict(phi)
    states: list[SamplerState] = []
    for c in range(schedule.chains):
        states.extend(run_chain(observed, hyper, mode, schedule, chain_index=c))
    return states


def heldout_perplexity(
    test_corpus: Corpus,
    phi: np.ndarray,
    hyper: Hyperparams,
    schedule: ChainSchedule,
    theta_kind: str = "standard",
    s_averaged: int = 1,
    fraction: float = 0.5,
) -> PerplexityReport:
    """Estimate theta on the observed half of each test document with
    fixed-phi chains, then score the held-out half.

    ``theta_kind`` selects the hard-count ("standard") or soft-count
    ("soft") estimator; ``s_averaged`` is the number of retained samples
    averaged over (pooled across chains).
    """
    observed, heldout = split_heldout(test_corpus, fraction=fraction)
    pred_schedule = _prediction_schedule(schedule, s_averaged)
    states = _prediction_states(observed, phi, hyper, pred_schedule)
    mode = SamplingMode.predict(phi)
    if theta_kind == "soft":
        theta = theta_soft(states, observed, hyper, mode)
    elif theta_kind == "standard":
        theta = theta_naive_mc(states, hyper)
    else:
        raise ValueError(f"unknown theta_kind {theta_kind!r}")
    held_tokens = [doc.tokens for doc in heldout.documents]
    n_held = int(sum(t.shape[0] for t in held_tokens))
    if n_held == 0:
        raise ValueError("no held-out tokens to score")
    ll = log_likelihood(held_tokens, theta, phi)
    return PerplexityReport(
        log_likelihood=ll,
        token_count=n_held,
        perplexity=float(np.exp(-ll / n_held)),
        protocol={
            "fraction": fraction,
            "theta_kind": theta_kind,
            "s_averaged": s_averaged,
            "chains": schedule.chains,
            "seed": schedule.seed,
        },
    )


def heldout_perplexity_grid(
    test_corpus: Corpus,
    phi_by_kind: dict[str, np.ndarray],
    hyper: Hyperparams,
    schedule: ChainSchedule,
    s_averaged: int = 1,
    fraction: float = 0.5,
) -> dict[str, PerplexityReport]:
    """All (phi kind) x (theta kind) combinations. For each phi, both theta
    estimators are computed from the same chain snapshots, so the
    comparison between them is paired."""
    observed, heldout = split_heldout(test_corpus, fraction=fraction)
    held_tokens = [doc.tokens for doc in heldout.documents]
    n_held = int(sum(t.shape[0] for t in held_tokens))
    if n_held == 0:
        raise ValueError("no held-out tokens to score")
    pred_schedule = _prediction_schedule(schedule, s_averaged)
    reports: dict[str, PerplexityReport] = {}
    for phi_name, phi in phi_by_kind.items():
        states = _prediction_states(observed, phi, hyper, pred_schedule)
        mode = SamplingMode.predict(phi)
        thetas = {
            "theta_standard": theta_naive_mc(states, hyper),
            "theta_soft": theta_soft(states, observed, hyper, mode),
        }
        for theta_name, theta in thetas.items():
            ll = log_likelihood(held_tokens, theta, phi)
            reports[f"{phi_name}+{theta_name}"] = PerplexityReport(
                log_likelihood=ll,
                token_count=n_held,
                perplexity=float(np.exp(-ll / n_held)),
                protocol={
                    "fraction": fraction,
                    "phi_kind": phi_name,
                    "theta_kind": theta_name,
                    "s_averaged": s_averaged,
                    "chains": schedule.chains,
                    "seed": schedule.seed,
                },
            )
    return reports


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    # precision + recall == 0 maps to F1 = 0 by convention
    return 2 * tp / denom if denom else 0.0


def f1_metrics(
    predicted: Sequence[set[int]], gold: Sequence[set[int]], n_labels: int
) -> F1Report:
    """Micro-averaged F1 from global counts, macro-averaged F1 as the
    unweighted mean of per-label F1, and example-based F1 as the mean of
    per-document F1. A document with empty predicted and empty gold sets
    scores per-document F1 = 1 (correctly predicting "no labels")."""
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold lists must align")
    tp = np.zeros(n_labels, dtype=np.int64)
    fp = np.zeros(n_labels, dtype=np.int64)
    fn = np.zeros(n_labels, dtype=np.int64)
    example_scores = []
    for pred, true in zip(predicted, gold):
        pred = set(pred)
        true = set(true)
        for l in pred & true:
            tp[l] += 1
        for l in pred - true:
            fp[l] += 1
        for l in true - pred:
            fn[l] += 1
        if not pred and not true:
            example_scores.append(1.0)
        else:
            example_scores.append(_f1(len(pred & true), len(pred - true), len(true - pred)))
    per_label = []
    for l in range(n_labels):
        p_denom = tp[l] + fp[l]
        r_denom = tp[l] + fn[l]
        per_label.append({
            "label": l,
            "precision": tp[l] / p_denom if p_denom else 0.0,
            "recall": tp[l] / r_denom if r_denom else 0.0,
            "f1": _f1(int(tp[l]), int(fp[l]), int(fn[l])),
        })
    return F1Report(
        micro_f=_f1(int(tp.sum()), int(fp.sum()), int(fn.sum())),
        macro_f=float(np.mean([row["f1"] for row in per_label])) if n_labels else 0.0,
        example_f=float(np.mean(example_scores)) if example_scores else 0.0,
        per_label=per_label,
    )


def word_association(
    phi: np.ndarray, cue: int, candidates: Sequence[int]
) -> list[dict]:
    """Score each candidate w2 against the cue word w1 by the topic-mixture
    conditional

        score(w2) = sum_k phi[k, w2] * phi[k, cue] / sum_k' phi[k', cue]

    and return the candidates ranked by descending score (ties broken by
    ascending word id). The score is invariant to permuting phi's rows.
    """
    phi = np.asarray(phi, dtype=np.float64)
    cue_mass = phi[:, cue].sum()
    if cue_mass <= 0:
        raise ValueError(f"cue word {cue} has zero total topic mass")
    topic_given_cue = phi[:, cue] / cue_mass
    scored = [
        {"word": int(w), "score": float(phi[:, w] @ topic_given_cue)}
        for w in candidates
    ]
    scored.sort(key=lambda row: (-row["score"], row["word"]))
    for rank, row in enumerate(scored, start=1):
        row["rank"] = rank
    return scored


@dataclass
class TraceRow:
    iteration: int
    log_likelihood: float
    seconds: float
    estimator_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "log_likelihood": self.log_likelihood,
            "seconds": self.seconds,
            "estimator_seconds": self.estimator_seconds,
        }


def convergence_trace(
    corpus: Corpus,
    hyper: Hyperparams,
    algorithm: str,
    iters: int,
    seed: int = 0,
    record_every: int = 1,
) -> list[TraceRow]:
    """Training log-likelihood and cumulative wall clock per iteration.

    ``cgs`` recovers the standard estimators after each sweep; ``cgs_soft``
    runs the identical chain but recovers the soft-count estimators, whose
    extra recovery cost is reported in ``estimator_seconds``; ``cvb0`` is
    the deterministic variational run. Wall clock uses a monotonic timer.
    """
    docs = [doc.tokens for doc in corpus.documents]
    rows: list[TraceRow] = []
    if algorithm in ("cgs", "cgs_soft"):
        mode = SamplingMode.train()
        state = init_state(corpus, hyper.n_topics, mode, mix_chain_seed(seed, 0))
        rng = np.random.default_rng(mix_chain_seed(seed, 0) + 1)
        start = time.perf_counter()
        for it in range(1, iters + 1):
            sweep(state, corpus, hyper, mode, rng)
            if it % record_every and it != iters:
                continue
            est_start = time.perf_counter()
            if algorithm == "cgs_soft":
                phi = phi_soft(state, corpus, hyper)
                theta = theta_soft([state], corpus, hyper, mode)
            else:
                phi = phi_standard(state.counts, hyper)
                theta = theta_standard(state.counts, hyper)
            est_seconds = time.perf_counter() - est_start
            ll = log_likelihood(docs, theta, phi)
            rows.append(TraceRow(
                iteration=it,
                log_likelihood=ll,
                seconds=time.perf_counter() - start,
                estimator_seconds=est_seconds,
            ))
    elif algorithm == "cvb0":
        state = init_variational(corpus, hyper.n_topics, seed=seed)
        start = time.perf_counter()
        for it in range(1, iters + 1):
            cvb0_sweep(state, corpus, hyper, SamplingMode.train())
            if it % record_every and it != iters:
                continue
            est_start = time.perf_counter()
            est = cvb0_estimates(state, hyper)
            est_seconds = time.perf_counter() - est_start
            ll = log_likelihood(docs, est.theta, est.phi)
            rows.append(TraceRow(
                iteration=it,
                log_likelihood=ll,
                seconds=time.perf_counter() - start,
                estimator_seconds=est_seconds,
            ))
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return rows
