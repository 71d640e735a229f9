"""Checkpoint container.

Layout::

    b"AHDD1\\n"
    uint64 little-endian header length
    UTF-8 JSON header (config, model spec, vocabulary, hierarchy digest,
                       train label counts, parameter table, payload sha256)
    raw little-endian parameter bytes, in the model's declared order

Loading rebuilds the model from the header and requires the hierarchy it
is given to hash to the recorded digest.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from ahdd.encoder import description_token_ids
from ahdd.errors import CheckpointError
from ahdd.hierarchy import CodeHierarchy
from ahdd.model import AHDDModel, ModelSpec, build_model
from ahdd.text import Vocabulary
from ahdd.trainer import TrainingConfig

MAGIC = b"AHDD1\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: AHDDModel
    vocab: Vocabulary
    config: TrainingConfig
    hierarchy_digest: str
    train_label_counts: Optional[list[int]]
    header: dict


def save_checkpoint(
    path,
    model: AHDDModel,
    vocab: Vocabulary,
    hierarchy: CodeHierarchy,
    config: TrainingConfig,
    train_label_counts: Optional[Sequence[int]] = None,
    extra: Optional[dict] = None,
) -> None:
    table, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = p.detach().cpu().numpy()
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
        table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str.lstrip("<>|="),
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "model_spec": model.spec.to_dict(),
        "vocab": vocab.tokens,
        "labels": hierarchy.labels,
        "hierarchy_digest": hierarchy.digest(),
        "train_label_counts": None if train_label_counts is None else [int(c) for c in train_label_counts],
        "parameters": table,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_header(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not an AHDD1 checkpoint (bad magic {magic!r})")
        (n,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from None
        payload = fh.read()
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')!r}")
    return header, payload


def load_checkpoint(path, hierarchy: CodeHierarchy) -> Checkpoint:
    """Load a checkpoint against ``hierarchy``.

    Raises:
        CheckpointError: bad magic/version, payload corruption, or a
            hierarchy digest mismatch (both digests named in the message).
    """
    header, payload = read_header(path)
    digest = hierarchy.digest()
    if header["hierarchy_digest"] != digest:
        raise CheckpointError(
            f"hierarchy digest mismatch: checkpoint has {header['hierarchy_digest']}, "
            f"supplied hierarchy has {digest}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: parameter payload does not match its recorded checksum")

    vocab = Vocabulary(header["vocab"])
    config = TrainingConfig.from_dict(header["config"])
    spec = ModelSpec(**header["model_spec"])
    model = build_model(spec, description_token_ids(hierarchy, vocab), seed=config.seed)
    params = dict(model.named_parameters())
    if [e["name"] for e in header["parameters"]] != list(params):
        raise CheckpointError(f"{path}: parameter inventory does not match the model spec")
    with torch.no_grad():
        for entry in header["parameters"]:
            raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]).newbyteorder("<")).reshape(entry["shape"])
            p = params[entry["name"]]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(f"{path}: shape mismatch for {entry['name']}")
            p.copy_(torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="))).to(p.dtype))
    return Checkpoint(model, vocab, config, header["hierarchy_digest"], header.get("train_label_counts"), header)
