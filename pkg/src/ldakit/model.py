"""Core numeric state: hyperparameters, count matrices, parameter estimates,
and a portable binary checkpoint container.

All reals are 64-bit IEEE: the soft-count accumulations sum up to
total-token-count many terms and 32-bit accumulation drifts past the 1e-9
conservation invariants at realistic K*V. ``n_kv`` is stored topic-major
(row = topic) because both the Gibbs update and the phi estimators scan a
word's column across topics.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus
from .errors import CheckpointError


@dataclass(frozen=True)
class Hyperparams:
    """Dirichlet priors: ``alpha`` over topics (length K), ``beta`` over word
    types (length V), with their sums cached."""

    alpha: np.ndarray
    beta: np.ndarray
    alpha_sum: float
    beta_sum: float

    @classmethod
    def from_vectors(cls, alpha, beta) -> "Hyperparams":
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        if alpha.ndim != 1 or beta.ndim != 1:
            raise ValueError("alpha and beta must be vectors")
        if (alpha <= 0).any() or (beta <= 0).any():
            raise ValueError("hyperparameters must be strictly positive")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        return cls(alpha=alpha, beta=beta,
                   alpha_sum=float(alpha.sum()), beta_sum=float(beta.sum()))

    @classmethod
    def symmetric(cls, n_topics: int, alpha: float, n_terms: int, beta: float) -> "Hyperparams":
        return cls.from_vectors(np.full(n_topics, alpha), np.full(n_terms, beta))

    @property
    def n_topics(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_terms(self) -> int:
        return self.beta.shape[0]

    def validate(self) -> None:
        for cached, vec, name in ((self.alpha_sum, self.alpha, "alpha"),
                                  (self.beta_sum, self.beta, "beta")):
            fresh = float(vec.sum())
            if abs(cached - fresh) > 1e-12 * max(1.0, abs(fresh)):
                raise ValueError(f"cached {name}_sum out of date")


@dataclass
class CountMatrices:
    """Integer tallies of hard topic assignments.

    ``n_dk[d, k]``: tokens of document d assigned to topic k.
    ``n_kv[k, v]``: corpus-wide assignments of word type v to topic k.
    ``n_k``/``n_d``: the corresponding row sums.
    """

    n_dk: np.ndarray
    n_kv: np.ndarray
    n_k: np.ndarray
    n_d: np.ndarray

    @classmethod
    def zeros(cls, n_docs: int, n_topics: int, n_terms: int) -> "CountMatrices":
        return cls(
            n_dk=np.zeros((n_docs, n_topics), dtype=np.int64),
            n_kv=np.zeros((n_topics, n_terms), dtype=np.int64),
            n_k=np.zeros(n_topics, dtype=np.int64),
            n_d=np.zeros(n_docs, dtype=np.int64),
        )

    @property
    def n_topics(self) -> int:
        return self.n_kv.shape[0]

    def copy(self) -> "CountMatrices":
        return CountMatrices(self.n_dk.copy(), self.n_kv.copy(),
                             self.n_k.copy(), self.n_d.copy())

    def validate(self) -> None:
        if (self.n_dk < 0).any() or (self.n_kv < 0).any():
            raise ValueError("negative counts")
        if not np.array_equal(self.n_dk.sum(axis=1), self.n_d):
            raise ValueError("n_d inconsistent with n_dk")
        if not np.array_equal(self.n_kv.sum(axis=1), self.n_k):
            raise ValueError("n_k inconsistent with n_kv")
        if self.n_dk.sum() != self.n_k.sum():
            raise ValueError("total token count mismatch between n_dk and n_kv")


def rebuild_counts(z: Sequence[np.ndarray], corpus: Corpus, n_topics: int) -> CountMatrices:
    """Tally assignments from scratch; the audit reference for incremental
    bookkeeping."""
    counts = CountMatrices.zeros(corpus.n_docs, n_topics, corpus.n_terms)
    for d, (doc, zd) in enumerate(zip(corpus.documents, z)):
        zd = np.asarray(zd)
        if zd.shape[0] != doc.n_tokens:
            raise ValueError(f"document {d}: assignment length mismatch")
        if zd.shape[0] and (zd.min() < 0 or zd.max() >= n_topics):
            raise ValueError(f"document {d}: topic id outside [0, {n_topics})")
        np.add.at(counts.n_dk[d], zd, 1)
        np.add.at(counts.n_kv, (zd, doc.tokens), 1)
    counts.n_k[:] = counts.n_kv.sum(axis=1)
    counts.n_d[:] = counts.n_dk.sum(axis=1)
    return counts


@dataclass
class SamplerState:
    """Hard assignments plus their tallies; the mutable heart of the Gibbs
    sampler. Single-writer: one chain owns one state."""

    z: list[np.ndarray]
    counts: CountMatrices
    rng_seed: int
    iteration: int = 0

    def snapshot(self) -> "SamplerState":
        return SamplerState(
            z=[zd.copy() for zd in self.z],
            counts=self.counts.copy(),
            rng_seed=self.rng_seed,
            iteration=self.iteration,
        )

    def audit(self, corpus: Corpus) -> None:
        """Rebuild-and-compare check of the incremental counts."""
        fresh = rebuild_counts(self.z, corpus, self.counts.n_topics)
        for a, b, name in ((fresh.n_dk, self.counts.n_dk, "n_dk"),
                           (fresh.n_kv, self.counts.n_kv, "n_kv"),
                           (fresh.n_k, self.counts.n_k, "n_k"),
                           (fresh.n_d, self.counts.n_d, "n_d")):
            if not np.array_equal(a, b):
                raise ValueError(f"counts audit failed on {name}")


@dataclass
class SoftCounts:
    """Accumulated per-token transition probabilities: the real-valued
    counterparts of :class:`CountMatrices`."""

    m_dk: np.ndarray
    m_kv: np.ndarray
    m_k: np.ndarray

    @classmethod
    def zeros(cls, n_docs: int, n_topics: int, n_terms: int) -> "SoftCounts":
        return cls(
            m_dk=np.zeros((n_docs, n_topics)),
            m_kv=np.zeros((n_topics, n_terms)),
            m_k=np.zeros(n_topics),
        )

    @classmethod
    def from_hard(cls, counts: CountMatrices) -> "SoftCounts":
        return cls(
            m_dk=counts.n_dk.astype(np.float64),
            m_kv=counts.n_kv.astype(np.float64),
            m_k=counts.n_k.astype(np.float64),
        )

    def copy(self) -> "SoftCounts":
        return SoftCounts(self.m_dk.copy(), self.m_kv.copy(), self.m_k.copy())

    def validate(self, doc_lengths: Optional[np.ndarray] = None, atol: float = 1e-9) -> None:
        if doc_lengths is not None:
            if not np.allclose(self.m_dk.sum(axis=1), doc_lengths, atol=atol, rtol=0):
                raise ValueError("per-document soft counts do not sum to N_d")
        if not np.allclose(self.m_kv.sum(axis=1), self.m_k, atol=atol, rtol=0):
            raise ValueError("m_k inconsistent with m_kv")


@dataclass
class ParamEstimate:
    """Row-stochastic theta (D x K) and phi (K x V) with provenance metadata:
    ``meta`` records the estimator kind and how many chains/samples were
    averaged."""

    theta: Optional[np.ndarray]
    phi: Optional[np.ndarray]
    meta: dict = field(default_factory=dict)

    def validate(self, atol: float = 1e-9) -> None:
        for mat, name in ((self.theta, "theta"), (self.phi, "phi")):
            if mat is None:
                continue
            if (mat < 0).any():
                raise ValueError(f"{name} has negative entries")
            if not np.allclose(mat.sum(axis=1), 1.0, atol=atol, rtol=0):
                raise ValueError(f"{name} rows do not sum to 1")


# --------------------------------------------------------------------------
# Checkpoint container: 8-byte magic, version byte, uint64-length-prefixed
# UTF-8 JSON metadata, then dense row-major little-endian matrices in the
# order listed in the metadata. Chosen for cross-language portability
# without schema dependencies; integer round trips are bit-exact and reals
# round-trip exactly via their 64-bit IEEE encoding.
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TOPICCKP"
CHECKPOINT_VERSION = 1

_DTYPES = {"int64": "<i8", "float64": "<f8"}


def _pack_arrays(kind: str, arrays: list[tuple[str, np.ndarray]], extra: dict) -> bytes:
    meta = {
        "kind": kind,
        "arrays": [
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
            }
            for name, arr in arrays
        ],
        "extra": extra,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = [CHECKPOINT_MAGIC, bytes([CHECKPOINT_VERSION]),
           struct.pack("<Q", len(blob)), blob]
    for _, arr in arrays:
        code = _DTYPES.get(str(arr.dtype))
        if code is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype}")
        out.append(np.ascontiguousarray(arr).astype(code, copy=False).tobytes())
    return b"".join(out)


def _unpack_arrays(data: bytes, path) -> tuple[str, dict[str, np.ndarray], dict]:
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    if data[8] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {data[8]} incompatible with "
            f"{CHECKPOINT_VERSION}"
        )
    (blob_len,) = struct.unpack("<Q", data[9:17])
    meta = json.loads(data[17:17 + blob_len].decode("utf-8"))
    offset = 17 + blob_len
    arrays = {}
    for spec in meta["arrays"]:
        code = _DTYPES.get(spec["dtype"])
        if code is None:
            raise CheckpointError(f"{path}: unsupported dtype {spec['dtype']}")
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        arr = np.frombuffer(data[offset:offset + nbytes], dtype=code).reshape(shape)
        arrays[spec["name"]] = arr.astype(spec["dtype"]).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint")
    return meta["kind"], arrays, meta["extra"]


def _pack_sampler_state(state: SamplerState):
    flat_z = (np.concatenate(state.z) if state.z else np.empty(0, dtype=np.int64))
    offsets = np.cumsum([0] + [zd.shape[0] for zd in state.z]).astype(np.int64)
    arrays = [
        ("flat_z", flat_z.astype(np.int64)),
        ("offsets", offsets),
        ("n_dk", state.counts.n_dk),
        ("n_kv", state.counts.n_kv),
        ("n_k", state.counts.n_k),
        ("n_d", state.counts.n_d),
    ]
    extra = {"rng_seed": int(state.rng_seed), "iteration": int(state.iteration)}
    return arrays, extra


def _unpack_sampler_state(arrays, extra) -> SamplerState:
    offsets = arrays["offsets"]
    flat_z = arrays["flat_z"]
    z = [flat_z[offsets[i]:offsets[i + 1]].copy() for i in range(len(offsets) - 1)]
    counts = CountMatrices(arrays["n_dk"], arrays["n_kv"], arrays["n_k"], arrays["n_d"])
    return SamplerState(z=z, counts=counts,
                        rng_seed=extra["rng_seed"], iteration=extra["iteration"])


def _pack_param_estimate(est: ParamEstimate):
    arrays = []
    if est.theta is not None:
        arrays.append(("theta", est.theta.astype(np.float64)))
    if est.phi is not None:
        arrays.append(("phi", est.phi.astype(np.float64)))
    return arrays, {"meta": est.meta}


def _unpack_param_estimate(arrays, extra) -> ParamEstimate:
    return ParamEstimate(theta=arrays.get("theta"), phi=arrays.get("phi"),
                         meta=extra.get("meta", {}))


def _pack_soft_counts(soft: SoftCounts):
    return [("m_dk", soft.m_dk), ("m_kv", soft.m_kv), ("m_k", soft.m_k)], {}


def _unpack_soft_counts(arrays, extra) -> SoftCounts:
    return SoftCounts(arrays["m_dk"], arrays["m_kv"], arrays["m_k"])


# kind -> (type, pack, unpack); cvb0 registers its state at import time
_CHECKPOINT_KINDS = {
    "sampler_state": (SamplerState, _pack_sampler_state, _unpack_sampler_state),
    "param_estimate": (ParamEstimate, _pack_param_estimate, _unpack_param_estimate),
    "soft_counts": (SoftCounts, _pack_soft_counts, _unpack_soft_counts),
}


def register_checkpoint_kind(kind: str, cls, pack, unpack) -> None:
    _CHECKPOINT_KINDS[kind] = (cls, pack, unpack)


def save_checkpoint(obj, path) -> None:
    for kind, (cls, pack, _) in _CHECKPOINT_KINDS.items():
        if isinstance(obj, cls):
            arrays, extra = pack(obj)
            with open(path, "wb") as fh:
                fh.write(_pack_arrays(kind, arrays, extra))
            return
    raise CheckpointError(f"cannot checkpoint object of type {type(obj).__name__}")


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 17:
        raise CheckpointError(f"{path}: truncated checkpoint")
    kind, arrays, extra = _unpack_arrays(data, path)
    entry = _CHECKPOINT_KINDS.get(kind)
    if entry is None:
        raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
    return entry[2](arrays, extra)


def export_csv(matrix: np.ndarray, path) -> None:
    """Textual companion export of one matrix, for debugging and plotting."""
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")
