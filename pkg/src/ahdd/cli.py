"""Command-line entry points: generate, train, evaluate, visualize, inspect-hierarchy."""

from __future__ import annotations

import argparse
import html
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ahdd import __version__
from ahdd.checkpoint import load_checkpoint, save_checkpoint
from ahdd.config import Option, format_config, parse_bool, parse_int_list, resolve
from ahdd.corpus import corpus_vocab, label_counts, load_jsonl, split_path
from ahdd.encoder import load_pretrained
from ahdd.errors import AhddError, CheckpointError, ConfigurationError
from ahdd.hierarchy import load_hierarchy
from ahdd.metrics import MetricsReport
from ahdd.plotting import plot_attention, plot_group_f1, plot_loss_curves
from ahdd.synthetic import SyntheticSpec, generate_synthetic
from ahdd.trainer import (Predictor, TrainingConfig, evaluate_docs, new_model, read_loss_log, train,
                          write_loss_log)

logger = logging.getLogger("ahdd")

_TYPES = {int: int, float: float, str: str, bool: parse_bool, "int": int, "float": float, "str": str,
          "bool": parse_bool}

ABLATION_FLAGS = {
    "no_add": ("--no-ADD", "--no-add"),
    "no_hdd": ("--no-HDD", "--no-hdd"),
    "no_d_att": ("--no-D-att", "--no-d-att"),
    "no_d_output": ("--no-D-output", "--no-d-output"),
}


def _dataclass_options(cls, skip=()) -> dict[str, Option]:
    opts = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        opts[f.name] = Option(f.name, _TYPES[f.type], f.default, flags=ABLATION_FLAGS.get(f.name, ()))
    return opts


def _path_options(*keys, **defaults) -> dict[str, Option]:
    return {k: Option(k, str, defaults.get(k)) for k in (*keys, *defaults)}


GENERATE_OPTIONS = {**_path_options("out_dir"), **_dataclass_options(SyntheticSpec)}
TRAIN_OPTIONS = {**_path_options("corpus_dir", "desc", "parents", "output_dir", "embeddings"),
                 **_dataclass_options(TrainingConfig)}
EVALUATE_OPTIONS = {**_path_options("checkpoint", "corpus_dir", "desc", "parents", "output_dir", split="test"),
                    "ks": Option("ks", parse_int_list, [5, 8], flags=("--k", "--ks")),
                    "threshold": Option("threshold", float, None)}
VISUALIZE_OPTIONS = {**_path_options("checkpoint", "corpus_dir", "desc", "parents", "output_dir", "doc_id", "code",
                                     split="test")}
INSPECT_OPTIONS = {**_path_options("desc", "parents", "code")}

HELP = {
    "out_dir": "directory for the generated corpus",
    "corpus_dir": "directory holding train/dev/test.jsonl",
    "desc": "code<TAB>description TSV (default: <corpus-dir>/descriptions.tsv)",
    "parents": "optional code<TAB>parent TSV overriding dot truncation",
    "output_dir": "directory for outputs",
    "embeddings": "optional whitespace-separated pretrained embedding file",
    "checkpoint": "checkpoint written by 'train'",
    "split": "which split to use (train, dev, test)",
    "ks": "K values for precision@K",
    "doc_id": "document to visualize",
    "code": "ICD code",
    "no_add": "drop associated code-description distillation",
    "no_hdd": "drop hierarchical (sibling) code-description distillation",
    "no_d_att": "use free learned attention queries instead of description-derived ones",
    "no_d_output": "use the plain output head",
}


def _add_options(parser: argparse.ArgumentParser, options: dict[str, Option]) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    for key, opt in options.items():
        flags = opt.flags or ("--" + key.replace("_", "-"),)
        if opt.type is parse_bool:
            parser.add_argument(*flags, dest=key, action="store_const", const=True, default=None,
                                help=HELP.get(key))
        elif opt.type is parse_int_list:
            parser.add_argument(*flags, dest=key, type=int, nargs="+", default=None, help=HELP.get(key))
        else:
            parser.add_argument(*flags, dest=key, type=opt.type, default=None, help=HELP.get(key))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ahdd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options, fn, text in (
        ("generate", GENERATE_OPTIONS, cmd_generate, "write a synthetic corpus"),
        ("train", TRAIN_OPTIONS, cmd_train, "train a model and write a checkpoint"),
        ("evaluate", EVALUATE_OPTIONS, cmd_evaluate, "compute the metric suite on a split"),
        ("visualize", VISUALIZE_OPTIONS, cmd_visualize, "export one code's attention over one note"),
        ("inspect-hierarchy", INSPECT_OPTIONS, cmd_inspect_hierarchy, "summarize a code hierarchy"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        _add_options(p, options)
        p.set_defaults(func=fn, options=options, subparser=p)
    return parser


def _resolve(args) -> dict:
    cli = {k: getattr(args, k) for k in args.options}
    return resolve(args.options, cli, args.config)


def _require(values: dict, *keys) -> None:
    missing = [k for k in keys if not values.get(k)]
    if missing:
        raise ConfigurationError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"{what} not found: {p}")
    return p


def _hierarchy(values: dict):
    desc = values.get("desc") or (Path(values["corpus_dir"]) / "descriptions.tsv" if values.get("corpus_dir") else None)
    if desc is None:
        raise ConfigurationError("missing required option: --desc")
    parents = values.get("parents")
    return load_hierarchy(_existing(desc, "description file"),
                          _existing(parents, "parent file") if parents else None)


def _training_config(values: dict) -> TrainingConfig:
    return TrainingConfig(**{f.name: values[f.name] for f in fields(TrainingConfig)})


def cmd_generate(values: dict) -> int:
    _require(values, "out_dir")
    spec = SyntheticSpec(**{f.name: values[f.name] for f in fields(SyntheticSpec)})
    paths = generate_synthetic(spec, values["out_dir"])
    for name, p in paths.items():
        if not p.is_file() or p.stat().st_size == 0:
            raise AhddError(f"failed to write {name} at {p}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_train(values: dict) -> int:
    _require(values, "corpus_dir", "output_dir")
    corpus_dir = Path(values["corpus_dir"])
    train_path = _existing(split_path(corpus_dir, "train"), "training split")
    dev_path = split_path(corpus_dir, "dev")
    hierarchy = _hierarchy(values)
    embeddings = _existing(values["embeddings"], "embedding file") if values.get("embeddings") else None
    config = _training_config(values)
    out = Path(values["output_dir"])
    out.mkdir(parents=True, exist_ok=True)

    vocab = corpus_vocab(train_path, hierarchy, min_count=config.min_count)
    train_docs = load_jsonl(train_path, vocab, hierarchy, config.max_length)
    dev_docs = load_jsonl(dev_path, vocab, hierarchy, config.max_length) if dev_path.exists() else []
    logger.info("vocab %d, labels %d, train %d, dev %d", len(vocab), len(hierarchy), len(train_docs), len(dev_docs))

    model = new_model(config, vocab, hierarchy)
    if embeddings is not None:
        load_pretrained(model.embedding, vocab, embeddings)
    result = train(train_docs, dev_docs, model, config, hierarchy, vocab)
    counts = label_counts(train_docs, hierarchy)

    ckpt = out / "checkpoint.ahdd"
    save_checkpoint(ckpt, result.model, vocab, hierarchy, config, train_label_counts=counts.tolist(),
                    extra={"best_epoch": result.best_epoch})
    reloaded = load_checkpoint(ckpt, hierarchy).model
    for (name, a), (_, b) in zip(result.model.named_parameters(), reloaded.named_parameters()):
        if not torch.equal(a, b):
            raise CheckpointError(f"checkpoint round-trip changed parameter {name}")

    log_path = out / "loss_log.tsv"
    write_loss_log(log_path, result.log)
    plot_loss_curves(read_loss_log(log_path), out / "loss_curves.png")
    (out / "run_config.txt").write_text(format_config(values), encoding="utf-8")
    if dev_docs:
        report = evaluate_docs(dev_docs, result.model, hierarchy, config.threshold, train_label_counts=counts)
        _write_report(report, out, "dev")
    print(f"best epoch {result.best_epoch}; dev micro-F1 {result.log[result.best_epoch - 1].dev_micro_f1:.4f}; "
          f"checkpoint {ckpt}")
    return 0


def _write_report(report: MetricsReport, out: Path, split: str) -> None:
    (out / f"metrics_{split}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / f"metrics_{split}.txt").write_text(report.to_table(), encoding="utf-8")
    plot_group_f1({"label frequency (train)": report.frequency_group_f1,
                   "average note length": report.length_group_f1}, out / f"group_f1_{split}.png")


def cmd_evaluate(values: dict) -> int:
    _require(values, "checkpoint", "corpus_dir", "output_dir")
    ckpt_path = _existing(values["checkpoint"], "checkpoint")
    eval_path = _existing(split_path(values["corpus_dir"], values["split"]), f"{values['split']} split")
    hierarchy = _hierarchy(values)
    ckpt = load_checkpoint(ckpt_path, hierarchy)
    threshold = values["threshold"] if values["threshold"] is not None else ckpt.config.threshold
    docs = load_jsonl(eval_path, ckpt.vocab, hierarchy, ckpt.config.max_length)
    report = evaluate_docs(docs, ckpt.model, hierarchy, threshold, ks=values["ks"],
                           train_label_counts=ckpt.train_label_counts)
    out = Path(values["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _write_report(report, out, values["split"])
    sys.stdout.write(report.to_table())
    return 0


def attention_html(words, weights, title: str) -> str:
    """Standalone page with each token shaded by its weight relative to the maximum."""
    top = max(weights) if len(weights) else 1.0
    spans = []
    for w, a in zip(words, weights):
        alpha = 0.0 if top <= 0 else a / top
        spans.append(f'<span title="{a:.6f}" style="background-color: rgba(192, 57, 43, {alpha:.4f}); '
                     f'padding: 1px 2px; margin: 1px; border-radius: 2px;">{html.escape(w)}</span>')
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" + html.escape(title) +
            "</title></head>\n<body style=\"font-family: sans-serif; line-height: 1.9; max-width: 60em;\">\n"
            f"<h3>{html.escape(title)}</h3>\n<p>" + " ".join(spans) + "</p>\n</body></html>\n")


def cmd_visualize(values: dict) -> int:
    _require(values, "checkpoint", "corpus_dir", "output_dir", "doc_id", "code")
    ckpt_path = _existing(values["checkpoint"], "checkpoint")
    split_file = _existing(split_path(values["corpus_dir"], values["split"]), f"{values['split']} split")
    hierarchy = _hierarchy(values)
    code = values["code"]
    if code not in hierarchy:
        raise ConfigurationError(f"unknown code {code!r}")
    ckpt = load_checkpoint(ckpt_path, hierarchy)
    docs = {d.doc_id: d for d in load_jsonl(split_file, ckpt.vocab, hierarchy, ckpt.config.max_length)}
    doc = docs.get(values["doc_id"])
    if doc is None:
        raise ConfigurationError(f"unknown document {values['doc_id']!r} in {split_file}")

    predictor = Predictor(ckpt.model, hierarchy)
    row = predictor.attention(doc)[hierarchy.index_of(code)]
    prob = predictor.probabilities(doc)[hierarchy.index_of(code)]
    if abs(row.sum() - 1.0) > 1e-6:
        raise AhddError(f"attention row sums to {row.sum()}")

    out = Path(values["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = f"attention_{doc.doc_id}_{code}".replace("/", "_")
    with open(out / f"{stem}.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("token\tweight\n")
        for w, a in zip(doc.words, row):
            fh.write(f"{w}\t{float(a)!r}\n")
    title = f"{doc.doc_id} / {code} ({' '.join(hierarchy.description(code))}), p = {prob:.3f}"
    (out / f"{stem}.html").write_text(attention_html(doc.words, row.tolist(), title), encoding="utf-8")
    plot_attention(doc.words, row, out / f"{stem}.png", title=title)
    j = int(np.argmax(row))
    print(json.dumps({"doc_id": doc.doc_id, "code": code, "probability": float(prob),
                      "max_token": doc.words[j], "max_weight": float(row[j]), "tsv": str(out / f"{stem}.tsv")}))
    return 0


def cmd_inspect_hierarchy(values: dict) -> int:
    hierarchy = _hierarchy(values)
    code = values.get("code")
    if code:
        if code not in hierarchy:
            raise ConfigurationError(f"unknown code {code!r}")
        info = {
            "code": code,
            "label_index": hierarchy.index_of(code),
            "description": " ".join(hierarchy.description(code)),
            "parent": hierarchy.parent_of(code),
            "children": list(hierarchy.children_of(code)),
            "siblings": sorted(hierarchy.siblings_of(code)),
        }
        print(json.dumps(info, indent=2))
        return 0
    roots = hierarchy.roots()
    print(f"codes: {len(hierarchy)}  roots: {len(roots)}  digest: {hierarchy.digest()[:16]}")

    def show(c, depth):
        print(f"{'  ' * depth}{c}\t{' '.join(hierarchy.description(c))}")
        for child in hierarchy.children_of(c):
            show(child, depth + 1)

    for r in roots:
        show(r, 0)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        values = _resolve(args)
        return args.func(values)
    except ConfigurationError as exc:
        args.subparser.print_usage(sys.stderr)
        print(f"ahdd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (AhddError, OSError, KeyError) as exc:
        print(f"ahdd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
