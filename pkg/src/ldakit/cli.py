"""Experiment driver.

Subcommands: train, estimate, perplexity, multilabel, word-assoc, trace,
oracle-check. Runs are configured by a flat key=value text file; any value
can be overridden on the command line with ``--set key=value``. The
effective configuration is echoed into the run directory so every run is
reproducible from its output alone.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 data
error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .cvb0 import cvb0_estimates, cvb0_run
from .errors import (
    CheckpointError,
    ConfigError,
    ConstraintError,
    EmptyCorpusError,
    EnumerationCapError,
    FormatError,
    LdakitError,
    NumericError,
)
from .estimators import phi_soft, phi_standard, theta_soft, theta_standard
from .evaluate import convergence_trace, heldout_perplexity_grid, f1_metrics, word_association
from .model import Hyperparams, ParamEstimate, SamplerState, export_csv, load_checkpoint, save_checkpoint
from .oracle import phi_soft_bound_grid
from .priorlda import (
    PriorLdaConfig,
    format_predictions,
    predict_labels,
    predictions_report,
    train_cardinality,
    train_phi,
)
from .sampler import ChainSchedule, SamplingMode, run_chain

# key -> (parser, default); None default means "required when used"
_CONFIG_SPEC = {
    "corpus": (str, None),
    "format": (str, "plaintext"),
    "vocab": (str, None),
    "labels": (str, None),
    "test_corpus": (str, None),
    "test_labels": (str, None),
    "k": (int, None),
    "alpha": (float, 0.1),
    "beta": (float, 0.01),
    "algorithm": (str, "cgs"),
    "burn_in": (int, 50),
    "lag": (int, 5),
    "samples": (int, 1),
    "chains": (int, 1),
    "train_iters": (int, 200),
    "iters": (int, 50),
    "seed": (int, 0),
    "out_dir": (str, "run"),
    "threads": (int, 1),
    "lowercase": (bool, False),
    "min_count": (int, 1),
    "fraction": (float, 0.5),
    "s_averaged": (int, 1),
    "sparse_sweep": (bool, False),
    "preset": (str, "single"),
    "model_dir": (str, None),
    "cue": (str, None),
    "candidates": (str, None),
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _coerce(key: str, raw: str):
    if key not in _CONFIG_SPEC:
        raise ConfigError(f"unknown config key {key!r}")
    typ, _ = _CONFIG_SPEC[key]
    if typ is bool:
        return _parse_bool(raw)
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def load_config(path=None, overrides=()) -> dict:
    config = {key: default for key, (_, default) in _CONFIG_SPEC.items()}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = stripped.partition("=")
                config[key.strip()] = _coerce(key.strip(), raw.strip())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        config[key.strip()] = _coerce(key.strip(), raw.strip())
    return config


def _echo_config(config: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in sorted(config.items()) if v is not None]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require(config: dict, *keys) -> None:
    for key in keys:
        if config.get(key) is None:
            raise ConfigError(f"missing required config key {key!r}")


def _load_corpus(config: dict, corpus_key="corpus", labels_key="labels"):
    _require(config, corpus_key)
    if config["format"] == "plaintext":
        corp = corpus_mod.load_plaintext(
            config[corpus_key],
            lowercase=config["lowercase"],
            min_count=config["min_count"],
        )
    elif config["format"] == "sparse":
        _require(config, "vocab")
        corp = corpus_mod.load_sparse_bow(config[corpus_key], config["vocab"])
    else:
        raise ConfigError(f"unknown corpus format {config['format']!r}")
    if config.get(labels_key):
        corp = corpus_mod.load_labels(config[labels_key], corp)
    return corp


def _schedule(config: dict) -> ChainSchedule:
    return ChainSchedule(
        burn_in=config["burn_in"], lag=config["lag"], samples=config["samples"],
        chains=config["chains"], total_train_iters=config["train_iters"],
        seed=config["seed"],
    )


def _hyper(config: dict, n_terms: int) -> Hyperparams:
    if config["k"] is None or config["k"] < 1:
        raise ConfigError("config key 'k' must be a positive integer")
    return Hyperparams.symmetric(config["k"], config["alpha"], n_terms, config["beta"])


def _check_vocab(phi: np.ndarray, corp) -> None:
    if phi.shape[1] != corp.n_terms:
        raise CheckpointError(
            f"phi covers {phi.shape[1]} word types but the corpus has {corp.n_terms}"
        )


def _write_report(out_dir: Path, name: str, payload: dict) -> None:
    payload = {"schema_version": 1, **payload}
    (out_dir / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")


def cmd_train(config: dict) -> int:
    corp = _load_corpus(config)
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    corp.vocabulary.save(out_dir / "vocab.txt")
    hyper = _hyper(config, corp.n_terms)
    schedule = _schedule(config)
    if config["algorithm"] == "cvb0":
        state = cvb0_run(corp, hyper, SamplingMode.train(),
                         iters=config["train_iters"], seed=config["seed"])
        save_checkpoint(state, out_dir / "state.ckpt")
        est = cvb0_estimates(state, hyper)
        save_checkpoint(ParamEstimate(theta=None, phi=est.phi, meta=est.meta),
                        out_dir / "phi_standard.ckpt")
    elif config["algorithm"] in ("cgs", "cgs_soft"):
        mode = SamplingMode.labeled() if config.get("labels") else SamplingMode.train()
        snapshots = run_chain(corp, hyper, mode, schedule,
                              sparse=config["sparse_sweep"])
        state = snapshots[-1]
        state.audit(corp)
        save_checkpoint(state, out_dir / "state.ckpt")
        save_checkpoint(
            ParamEstimate(theta=None, phi=phi_standard(state.counts, hyper),
                          meta={"phi_kind": "phi_standard"}),
            out_dir / "phi_standard.ckpt")
        save_checkpoint(
            ParamEstimate(theta=None,
                          phi=phi_soft(state, corp, hyper,
                                       mode=mode if mode.variant == "labeled" else None,
                                       n_workers=config["threads"]),
                          meta={"phi_kind": "phi_soft"}),
            out_dir / "phi_soft.ckpt")
    else:
        raise ConfigError(f"unknown algorithm {config['algorithm']!r}")
    return 0


def cmd_estimate(config: dict, checkpoint: str) -> int:
    corp = _load_corpus(config)
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    state = load_checkpoint(checkpoint)
    if not isinstance(state, SamplerState):
        raise CheckpointError(f"{checkpoint} does not hold a sampler state")
    hyper = _hyper(config, corp.n_terms)
    _check_vocab(state.counts.n_kv, corp)
    mode = SamplingMode.labeled() if config.get("labels") else SamplingMode.train()
    theta_std = theta_standard(state.counts, hyper)
    phi_std = phi_standard(state.counts, hyper)
    phi_soft_mat = phi_soft(state, corp, hyper,
                            mode=mode if mode.variant == "labeled" else None,
                            n_workers=config["threads"])
    theta_soft_mat = theta_soft([state], corp, hyper, mode, n_workers=config["threads"])
    for name, theta, phi in (("standard", theta_std, phi_std),
                             ("soft", theta_soft_mat, phi_soft_mat)):
        est = ParamEstimate(theta=theta, phi=phi,
                            meta={"theta_kind": f"theta_{name}", "phi_kind": f"phi_{name}"})
        save_checkpoint(est, out_dir / f"estimate_{name}.ckpt")
        export_csv(theta, out_dir / f"theta_{name}.csv")
        export_csv(phi, out_dir / f"phi_{name}.csv")
    return 0


def cmd_perplexity(config: dict) -> int:
    _require(config, "model_dir", "test_corpus")
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    test = _load_corpus(config, corpus_key="test_corpus", labels_key="test_labels")
    model_dir = Path(config["model_dir"])
    vocab_path = model_dir / "vocab.txt"
    if vocab_path.exists():
        test = corpus_mod.align_vocabulary(test, corpus_mod.Vocabulary.load(vocab_path))
    phi_by_kind = {}
    for kind in ("phi_standard", "phi_soft"):
        path = model_dir / f"{kind}.ckpt"
        if path.exists():
            est = load_checkpoint(path)
            _check_vocab(est.phi, test)
            phi_by_kind[kind] = est.phi
    if not phi_by_kind:
        raise CheckpointError(f"no phi checkpoints found under {model_dir}")
    k = next(iter(phi_by_kind.values())).shape[0]
    hyper = Hyperparams.symmetric(k, config["alpha"], test.n_terms, config["beta"])
    reports = heldout_perplexity_grid(
        test, phi_by_kind, hyper, _schedule(config),
        s_averaged=config["s_averaged"], fraction=config["fraction"],
    )
    _write_report(out_dir, "perplexity.json",
                  {"rows": {name: rep.to_dict() for name, rep in reports.items()}})
    return 0


def cmd_multilabel(config: dict) -> int:
    _require(config, "labels", "test_corpus", "test_labels")
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    train = _load_corpus(config)
    test = _load_corpus(config, corpus_key="test_corpus", labels_key="test_labels")
    test = corpus_mod.align_vocabulary(test, train.vocabulary)
    if train.label_space is None or test.label_space is None:
        raise ConfigError("multilabel needs labeled train and test corpora")
    pconfig = PriorLdaConfig()
    maker = (pconfig.schedule_averaged if config["preset"] == "averaged"
             else pconfig.schedule_single)
    schedule = maker(seed=config["seed"], total_train_iters=config["train_iters"])
    phis = train_phi(train, pconfig, schedule)
    predictor = train_cardinality(train, regularizer=pconfig.regularizer)
    # align test gold labels with the training label space by name
    name_to_id = {name: i for i, name in enumerate(train.label_space)}
    gold = []
    for doc in test.documents:
        ids = set()
        for l in doc.labels or ():
            name = test.label_space[l]
            if name in name_to_id:
                ids.add(name_to_id[name])
        gold.append(ids)
    results = {}
    for kind, theta_kind in (("phi_standard", "standard"), ("phi_soft", "soft")):
        preds = predict_labels(
            test, phis[kind].phi, train.label_frequencies, pconfig, schedule,
            predictor, theta_kind=theta_kind, n_workers=config["threads"],
        )
        report = f1_metrics([p.hard for p in preds], gold, train.n_labels)
        results[f"{kind}+theta_{theta_kind}"] = report.to_dict()
        (out_dir / f"predictions_{theta_kind}.txt").write_text(
            format_predictions(preds, train.label_space), encoding="utf-8")
        _write_report(out_dir, f"predictions_{theta_kind}.json",
                      predictions_report(preds, train.label_space))
    _write_report(out_dir, "multilabel.json", {"rows": results})
    return 0


def cmd_word_assoc(config: dict) -> int:
    _require(config, "model_dir", "cue", "candidates")
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    corp = _load_corpus(config)
    model_dir = Path(config["model_dir"])
    phis = {}
    for kind in ("phi_standard", "phi_soft"):
        est = load_checkpoint(model_dir / f"{kind}.ckpt")
        _check_vocab(est.phi, corp)
        phis[kind] = est.phi
    vocab = corp.vocabulary
    if config["cue"] not in vocab.index:
        raise FormatError(f"cue word {config['cue']!r} not in vocabulary")
    cue = vocab.index[config["cue"]]
    with open(config["candidates"], encoding="utf-8") as fh:
        names = [line.strip() for line in fh if line.strip()]
    missing = [n for n in names if n not in vocab.index]
    if missing:
        raise FormatError(f"candidate words not in vocabulary: {missing}")
    cand_ids = [vocab.index[n] for n in names]
    ranked = {kind: word_association(phi, cue, cand_ids) for kind, phi in phis.items()}
    rank_of = {
        kind: {row["word"]: row["rank"] for row in rows}
        for kind, rows in ranked.items()
    }
    score_of = {
        kind: {row["word"]: row["score"] for row in rows}
        for kind, rows in ranked.items()
    }
    rows = []
    for name, wid in zip(names, cand_ids):
        rows.append({
            "word": name,
            "score_standard": score_of["phi_standard"][wid],
            "rank_standard": rank_of["phi_standard"][wid],
            "score_soft": score_of["phi_soft"][wid],
            "rank_soft": rank_of["phi_soft"][wid],
            # positive values favor the soft estimator
            "rank_diff": rank_of["phi_standard"][wid] - rank_of["phi_soft"][wid],
        })
    _write_report(out_dir, "word_assoc.json", {"cue": config["cue"], "rows": rows})
    return 0


def cmd_trace(config: dict) -> int:
    corp = _load_corpus(config)
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    hyper = _hyper(config, corp.n_terms)
    rows = convergence_trace(corp, hyper, config["algorithm"],
                             iters=config["iters"], seed=config["seed"])
    _write_report(out_dir, "trace.json",
                  {"algorithm": config["algorithm"],
                   "rows": [r.to_dict() for r in rows]})
    with open(out_dir / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,log_likelihood,seconds,estimator_seconds\n")
        for r in rows:
            fh.write(f"{r.iteration},{r.log_likelihood:.17g},"
                     f"{r.seconds:.6f},{r.estimator_seconds:.6f}\n")
    return 0


def cmd_oracle_check(config: dict) -> int:
    corp = _load_corpus(config)
    out_dir = Path(config["out_dir"])
    _echo_config(config, out_dir)
    hyper = _hyper(config, corp.n_terms)
    schedule = ChainSchedule(burn_in=0, lag=1, samples=1, chains=1,
                             total_train_iters=config["iters"], seed=config["seed"])
    state = run_chain(corp, hyper, SamplingMode.train(), schedule)[-1]
    lower, middle, upper = phi_soft_bound_grid(state, corp, hyper)
    violations = []
    checked = 0
    for k in range(hyper.n_topics):
        if state.counts.n_k[k] <= 0:
            continue
        for v in range(corp.n_terms):
            checked += 1
            if not (lower[k, v] <= middle[k, v] <= upper[k, v]):
                violations.append({"k": k, "v": v, "lower": lower[k, v],
                                   "middle": middle[k, v], "upper": upper[k, v]})
    _write_report(out_dir, "oracle_check.json",
                  {"checked": checked, "violations": violations})
    if violations:
        print(f"oracle-check: {len(violations)} of {checked} bound checks FAILED",
              file=sys.stderr)
        return 1
    print(f"oracle-check: all {checked} bound checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldakit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "estimate", "perplexity", "multilabel",
                 "word-assoc", "trace", "oracle-check"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config value")
        p.add_argument("--threads", type=int, default=None,
                       help="cap worker threads for estimator recovery")
        if name == "estimate":
            p.add_argument("--checkpoint", required=True,
                           help="sampler-state checkpoint to recover estimates from")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
        if args.threads is not None:
            config["threads"] = args.threads
        if args.command == "train":
            return cmd_train(config)
        if args.command == "estimate":
            return cmd_estimate(config, args.checkpoint)
        if args.command == "perplexity":
            return cmd_perplexity(config)
        if args.command == "multilabel":
            return cmd_multilabel(config)
        if args.command == "word-assoc":
            return cmd_word_assoc(config)
        if args.command == "trace":
            return cmd_trace(config)
        if args.command == "oracle-check":
            return cmd_oracle_check(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, EmptyCorpusError, CheckpointError, ConstraintError,
            EnumerationCapError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except LdakitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
