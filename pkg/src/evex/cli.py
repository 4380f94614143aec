"""Command line interface.

Subcommands: gen | train | eval | predict | stats | selfcheck.
Exit codes: 0 success, 1 usage/config error, 2 runtime failure, 3 selfcheck
failure.

Settings resolve as flag > config file > built-in default. The config file is
flat ``key = value`` text (keys use underscores, '#' starts a comment); its
path comes from --config or the EVEX_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import LossConfig, ModelConfig, TrainConfig
from .corpus import EVENT_SUBTYPES, LabelCatalog, load_corpus, save_corpus
from .encoder import load_pretrained_vectors
from .evaluation import (
    cooccurrence_stats,
    export_attention,
    score,
    score_with_splits,
)
from .model import JointModel
from .synth import (
    cooccurrence_truth,
    default_cooccurrence_table,
    generate_synthetic_corpus,
    paired_cooccurrence_table,
    vocabulary_words,
)
from .training import DivergenceError, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_SELFCHECK = 3

CONFIG_ENV = "EVEX_CONFIG"


class UsageError(Exception):
    pass


def _dataclass_defaults(cls):
    return {f.name: f.default for f in fields(cls)}

MODEL_DEFAULTS = _dataclass_defaults(ModelConfig)
TRAIN_DEFAULTS = _dataclass_defaults(TrainConfig)
LOSS_DEFAULTS = _dataclass_defaults(LossConfig)
ALL_DEFAULTS = {**MODEL_DEFAULTS, **TRAIN_DEFAULTS, **LOSS_DEFAULTS}


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _coerce(key, raw):
    default = ALL_DEFAULTS[key]
    if isinstance(default, bool):
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key}: expected boolean, got {raw!r}")
    kind = type(default)
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key}: expected {kind.__name__}, got {raw!r}") from None


def add_settings_args(parser):
    group = parser.add_argument_group("model and training settings")
    for key, default in ALL_DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            group.add_argument(flag, default=None, type=str,
                               metavar="BOOL", help=f"(default: {default})")
        else:
            group.add_argument(flag, default=None, type=type(default),
                               help=f"(default: {default})")
    parser.add_argument("--config", help=f"flat key=value settings file (or ${CONFIG_ENV})")


def resolve_settings(args):
    file_values = {}
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        if not os.path.exists(path):
            raise UsageError(f"config file not found: {path}")
        file_values = parse_config_file(path)
    unknown = set(file_values) - set(ALL_DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in ALL_DEFAULTS.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = _coerce(key, flag_value) if isinstance(default, bool) else flag_value
        elif key in file_values:
            merged[key] = _coerce(key, file_values[key])
        else:
            merged[key] = default
    try:
        model = ModelConfig(**{k: merged[k] for k in MODEL_DEFAULTS})
        train_cfg = TrainConfig(**{k: merged[k] for k in TRAIN_DEFAULTS})
        loss = LossConfig(**{k: merged[k] for k in LOSS_DEFAULTS})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return model, train_cfg, loss


def _require_file(path, what):
    if path is None:
        raise UsageError(f"missing required path for {what}")
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _catalog_config(catalog: LabelCatalog) -> dict:
    return {
        "words": list(catalog.words[2:]),     # PAD/UNK re-added on load
        "pos_tags": list(catalog.pos_tags),
        "subtypes": list(catalog.subtypes),
        "roles": list(catalog.roles[1:]),
        "entity_types": list(catalog.entity_types),
    }


def _catalog_from_config(cfg: dict) -> LabelCatalog:
    return LabelCatalog(cfg["words"], pos_tags=cfg["pos_tags"], subtypes=cfg["subtypes"],
                        roles=cfg["roles"], entity_types=cfg["entity_types"])


def save_model(path, model: JointModel, seed: int) -> None:
    config = {
        "model": {k: getattr(model.config, k) for k in MODEL_DEFAULTS},
        "catalog": _catalog_config(model.catalog),
        "seed": seed,
    }
    save_checkpoint(path, config, model.state_dict())


def load_model(path) -> JointModel:
    config, state = load_checkpoint(path)
    catalog = _catalog_from_config(config["catalog"])
    model = JointModel(ModelConfig(**config["model"]), catalog, seed=config.get("seed", 0))
    model.load_state_dict(state)
    return model


def _predict_corpus(model, sentences, threads=1):
    from .heads import predict_sentence

    if threads <= 1:
        return [predict_sentence(model, s) for s in sentences]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: predict_sentence(model, s), sentences))


def prediction_record(pred, catalog, verbose_roles=False) -> dict:
    record = {
        "events": [
            {
                "trigger": {"start": s, "end": e},
                "subtype": subtype,
                "args": [{"entity": ei, "role": role} for ei, role in args],
            }
            for s, e, subtype, args in pred.events
        ],
        "trigger_tags": [catalog.trigger_tags[t] for t in pred.trigger_tag_ids],
        "attention": [round(float(v), 10) for v in pred.attention],
    }
    if verbose_roles:
        record["role_distributions"] = {
            f"{ci},{ei}": [round(float(v), 10) for v in dist]
            for (ci, ei), dist in sorted(pred.role_distributions.items())
        }
    return record


def events_from_record(record) -> list:
    return [
        (ev["trigger"]["start"], ev["trigger"]["end"], ev["subtype"],
         [(a["entity"], a["role"]) for a in ev["args"]])
        for ev in record["events"]
    ]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = args.out
    os.makedirs(out, exist_ok=True)
    table = paired_cooccurrence_table() if args.paired_table else default_cooccurrence_table()
    corpus = generate_synthetic_corpus(
        args.seed, args.n, multi_event_rate=args.rate, table=table,
        three_event_share=args.three_share, ambiguous_share=args.ambiguous_share,
    )
    n_test = args.n // 10
    n_dev = args.n // 10
    n_train = args.n - n_dev - n_test
    save_corpus(corpus[:n_train], os.path.join(out, "train.jsonl"))
    save_corpus(corpus[n_train:n_train + n_dev], os.path.join(out, "dev.jsonl"))
    save_corpus(corpus[n_train + n_dev:], os.path.join(out, "test.jsonl"))
    catalog = LabelCatalog(vocabulary_words())
    catalog.save(os.path.join(out, "vocab"))
    truth = cooccurrence_truth(table, args.rate, args.three_share)
    _write_matrix_csv(os.path.join(out, "cooccurrence_truth.csv"), truth)
    from .plots import save_cooccurrence_heatmap

    save_cooccurrence_heatmap(truth, EVENT_SUBTYPES,
                              os.path.join(out, "cooccurrence_truth.png"),
                              title="generator co-occurrence (exact)")
    meta = {
        "n": args.n, "seed": args.seed, "rate": args.rate,
        "three_share": args.three_share, "ambiguous_share": args.ambiguous_share,
        "paired_table": bool(args.paired_table),
        "split": [n_train, n_dev, n_test],
    }
    with open(os.path.join(out, "gen_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {n_train}/{n_dev}/{n_test} sentences to {out}")
    return EXIT_OK


def _write_matrix_csv(path, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(EVENT_SUBTYPES) + "\n")
        for name, row in zip(EVENT_SUBTYPES, matrix):
            fh.write(name + "," + ",".join(f"{v:.6f}" for v in row) + "\n")


def cmd_train(args) -> int:
    model_cfg, train_cfg, loss_cfg = resolve_settings(args)
    train_path = _require_file(args.train, "training corpus")
    dev_path = _require_file(args.dev, "development corpus")
    train_sentences = load_corpus(train_path)
    dev_sentences = load_corpus(dev_path)
    if not train_sentences:
        raise UsageError(f"training corpus is empty: {train_path}")
    if args.vocab:
        catalog = LabelCatalog.load(_require_file(args.vocab, "vocabulary directory"))
    else:
        catalog = LabelCatalog.from_corpus(train_sentences + dev_sentences)
    model = JointModel(model_cfg, catalog, seed=train_cfg.seed)
    if args.vectors:
        loaded = load_pretrained_vectors(model.encoder_params, catalog,
                                         _require_file(args.vectors, "word vectors"))
        print(f"loaded {loaded} pretrained word vectors")
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    log_fh = open(metrics_path, "w", encoding="utf-8")

    def on_epoch(record):
        log_fh.write(json.dumps(record, sort_keys=True) + "\n")
        log_fh.flush()
        dev = record["dev"]
        print(f"epoch {record['epoch']:4d}  loss {record['train_loss']:10.2f}  "
              f"dev trig-cls F1 {dev['trigger_cls']['f1']:.4f}  "
              f"arg-role F1 {dev['argument_role']['f1']:.4f}")

    try:
        result = train(model, train_sentences, dev_sentences, train_cfg, loss_cfg,
                       on_epoch=on_epoch)
    finally:
        log_fh.close()
    model.load_state_dict(result.best_state)
    ckpt_path = os.path.join(args.out, "checkpoint.evx")
    save_model(ckpt_path, model, train_cfg.seed)
    if result.metric_log:
        from .plots import save_training_curves

        save_training_curves(result.metric_log, os.path.join(args.out, "curves.png"))
    print(f"best dev trigger-classification F1 {max(result.best_f1, 0.0):.4f} "
          f"at epoch {result.best_epoch}; checkpoint: {ckpt_path}")
    return EXIT_OK


def _print_report(report, as_json=False, show_splits=False):
    if as_json:
        print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
        return
    names = {
        "trigger_id": "trigger identification",
        "trigger_cls": "trigger classification",
        "argument_id": "argument identification",
        "argument_role": "argument role",
    }
    print(f"{'stage':<26}{'P':>8}{'R':>8}{'F1':>8}")
    for stage in report.STAGES:
        prf = getattr(report, stage)
        print(f"{names[stage]:<26}{prf.precision:>8.4f}{prf.recall:>8.4f}{prf.f1:>8.4f}")
    if show_splits and report.splits:
        print()
        print(f"{'stage':<26}{'1/1':>8}{'1/N':>8}{'all':>8}")
        for stage in report.STAGES:
            row = [report.splits["1/1"], report.splits["1/N"], report]
            cells = "".join(f"{getattr(r, stage).f1:>8.4f}" for r in row)
            print(f"{names[stage]:<26}{cells}")


def cmd_eval(args) -> int:
    if not args.predictions and not args.checkpoint:
        raise UsageError("eval needs either --checkpoint or --predictions")
    corpus = load_corpus(_require_file(args.corpus, "evaluation corpus"))
    if args.predictions:
        with open(_require_file(args.predictions, "predictions file"), encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        predictions = [events_from_record(r) for r in records]
    else:
        model = load_model(_require_file(args.checkpoint, "checkpoint"))
        predictions = _predict_corpus(model, corpus, threads=args.threads)
    if args.split:
        report = score_with_splits(corpus, predictions,
                                   argument_buckets_by_events=args.arg_split_by_events)
    else:
        report = score(corpus, predictions)
    _print_report(report, as_json=args.json, show_splits=args.split)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(_require_file(args.checkpoint, "checkpoint"))
    corpus = load_corpus(_require_file(args.corpus, "input corpus"))
    predictions = _predict_corpus(model, corpus, threads=args.threads)
    with open(args.out, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(prediction_record(pred, model.catalog, args.verbose_roles),
                                sort_keys=True) + "\n")
    if args.attention_dir:
        os.makedirs(args.attention_dir, exist_ok=True)
        from .plots import save_attention_heatmap

        for i, pred in enumerate(predictions):
            base = os.path.join(args.attention_dir, f"attention_{i:05d}")
            export_attention(pred, base + ".csv")
            save_attention_heatmap(pred, base + ".png",
                                   title=" ".join(pred.tokens[:8]))
    print(f"wrote {len(predictions)} prediction records to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    matrix, support = cooccurrence_stats(corpus)
    out_csv = args.out + ".csv"
    _write_matrix_csv(out_csv, matrix)
    from .plots import save_cooccurrence_heatmap

    save_cooccurrence_heatmap(matrix, EVENT_SUBTYPES, args.out + ".png",
                              title="estimated event co-occurrence")
    unsupported = [EVENT_SUBTYPES[i] for i in range(len(EVENT_SUBTYPES)) if support[i] == 0]
    print(f"wrote {out_csv} and {args.out}.png")
    print(f"sentences: {len(corpus)}; subtypes with zero support: "
          f"{', '.join(unsupported) if unsupported else 'none'}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    import time

    from .selfcheck import run_selfcheck

    start = time.time()
    results = run_selfcheck(break_op=args.break_op)
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed "
          f"in {time.time() - start:.1f}s")
    return EXIT_SELFCHECK if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evex",
        description="Joint event extraction over syntactic graphs: synthesize "
                    "corpora, train, evaluate, predict, and verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic corpus (8:1:1 split)")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--n", type=int, required=True, help="total sentence count")
    gen.add_argument("--seed", type=int, default=0, help="(default: 0)")
    gen.add_argument("--rate", type=float, default=0.262,
                     help="multi-event sentence rate (default: 0.262)")
    gen.add_argument("--three-share", type=float, default=0.2,
                     help="share of multi-event sentences with three events (default: 0.2)")
    gen.add_argument("--ambiguous-share", type=float, default=0.65,
                     help="chance an eligible companion trigger uses an ambiguous lemma "
                          "(default: 0.65)")
    gen.add_argument("--paired-table", action="store_true",
                     help="use the deterministic paired co-occurrence table")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train a model and keep the best-dev checkpoint")
    tr.add_argument("--train", required=True, help="training corpus (jsonl)")
    tr.add_argument("--dev", required=True, help="development corpus (jsonl)")
    tr.add_argument("--vocab", help="vocabulary directory (from gen); default: build from corpora")
    tr.add_argument("--vectors", help="optional pretrained word-vector text file")
    tr.add_argument("--out", required=True, help="output directory")
    add_settings_args(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score a checkpoint or a predictions file against gold")
    ev.add_argument("--checkpoint", help="model checkpoint")
    ev.add_argument("--predictions", help="score this predictions file instead of a checkpoint")
    ev.add_argument("--corpus", required=True, help="gold corpus (jsonl)")
    ev.add_argument("--split", action="store_true", help="add the 1/1 vs 1/N breakdown")
    ev.add_argument("--arg-split-by-events", action="store_true",
                    help="bucket the argument stages by event count instead of argument count")
    ev.add_argument("--json", action="store_true", help="machine-readable output")
    ev.add_argument("--threads", type=int, default=1, help="(default: 1)")
    ev.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="write prediction records for a corpus")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--corpus", required=True)
    pr.add_argument("--out", required=True, help="output predictions file (jsonl)")
    pr.add_argument("--attention-dir",
                    help="also write one attention CSV + heatmap PNG per sentence")
    pr.add_argument("--verbose-roles", action="store_true",
                    help="include per-pair role distributions in records")
    pr.add_argument("--threads", type=int, default=1, help="(default: 1)")
    pr.set_defaults(func=cmd_predict)

    st = sub.add_parser("stats", help="estimate the event co-occurrence matrix of a corpus")
    st.add_argument("--corpus", required=True)
    st.add_argument("--out", required=True, help="output path prefix (.csv and .png)")
    st.set_defaults(func=cmd_stats)

    sc = sub.add_parser("selfcheck", help="run the built-in verification battery")
    sc.add_argument("--break-op", help=argparse.SUPPRESS)
    sc.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    from .checkpoint import CheckpointError
    from .corpus import CorpusError

    try:
        return args.func(args)
    except (UsageError, CheckpointError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
