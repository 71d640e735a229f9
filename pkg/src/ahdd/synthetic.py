"""Synthetic clinical-note corpus with planted, hierarchy-aware keywords.

The generated code tree has depth two. Every parent owns a few "stem"
words that appear in its own description and in all its children's
descriptions; each child adds one discriminative word of its own. A note
carries 1..max_codes_per_doc gold codes drawn from distinct parents, so two
siblings never co-occur. The gold codes' stem and discriminative words make
up ``signal_fraction`` of the note; the rest is uniform noise from a
disjoint word list.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ahdd.errors import ConfigurationError
from ahdd.hierarchy import write_description_tsv

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SyntheticSpec:
    num_codes: int = 20
    branching: int = 3
    train_docs: int = 500
    dev_docs: int = 100
    test_docs: int = 100
    note_length: int = 100
    signal_fraction: float = 0.1
    vocab_size: int = 2000
    stems_per_parent: int = 2
    max_codes_per_doc: int = 3
    seed: int = 42

    def __post_init__(self):
        for name in ("num_codes", "branching", "train_docs", "dev_docs", "test_docs",
                     "note_length", "vocab_size", "stems_per_parent", "max_codes_per_doc"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0.0 < self.signal_fraction <= 1.0):
            raise ConfigurationError(f"signal_fraction must be in (0, 1], got {self.signal_fraction}")
        if self.n_signal < 1:
            raise ConfigurationError(
                f"note_length {self.note_length} x signal_fraction {self.signal_fraction} leaves no signal tokens")
        if self.n_keywords >= self.vocab_size:
            raise ConfigurationError(
                f"{self.n_keywords} keywords needed but vocab_size is {self.vocab_size}; no room for noise words")

    @property
    def num_parents(self) -> int:
        return math.ceil(self.num_codes / self.branching)

    @property
    def n_signal(self) -> int:
        return int(round(self.note_length * self.signal_fraction))

    @property
    def n_keywords(self) -> int:
        return self.num_parents * self.stems_per_parent + self.num_codes


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    descriptions: list[tuple[str, str]]
    splits: dict[str, list[dict]]
    stems: dict[str, list[str]] = field(default_factory=dict)
    discriminative: dict[str, str] = field(default_factory=dict)
    noise_words: list[str] = field(default_factory=list)


def _pseudo_words(rng: np.random.Generator, n: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n:
        n_syll = int(rng.integers(2, 5))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n_syll))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def synthesize(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build the corpus in memory; deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    words = _pseudo_words(rng, spec.vocab_size)
    keywords, noise = words[:spec.n_keywords], words[spec.n_keywords:]

    parents = [str(100 + p) for p in range(spec.num_parents)]
    children: dict[str, list[str]] = {p: [] for p in parents}
    for i in range(spec.num_codes):
        parent = parents[i // spec.branching]
        children[parent].append(f"{parent}.{len(children[parent]) + 1}")

    kw = iter(keywords)
    stems = {p: [next(kw) for _ in range(spec.stems_per_parent)] for p in parents}
    disc = {c: next(kw) for p in parents for c in children[p]}

    descriptions = []
    for p in parents:
        descriptions.append((p, " ".join(stems[p])))
        for c in children[p]:
            descriptions.append((c, " ".join(stems[p] + [disc[c]])))

    n_signal = spec.n_signal
    max_codes = min(spec.max_codes_per_doc, spec.num_parents, n_signal)
    splits: dict[str, list[dict]] = {}
    for split, n_docs in (("train", spec.train_docs), ("dev", spec.dev_docs), ("test", spec.test_docs)):
        records = []
        for d in range(n_docs):
            k = int(rng.integers(1, max_codes + 1))
            chosen_parents = sorted(rng.choice(len(parents), size=k, replace=False).tolist())
            gold = []
            for pi in chosen_parents:
                kids = children[parents[pi]]
                gold.append(kids[int(rng.integers(len(kids)))])
            # discriminative word first, so every gold code is planted at least once
            per_code = [[disc[c]] + stems[c.rsplit(".", 1)[0]] for c in gold]
            signal = [per_code[i % k][(i // k) % len(per_code[i % k])] for i in range(n_signal)]
            filler = [noise[j] for j in rng.integers(len(noise), size=spec.note_length - n_signal)]
            tokens = signal + filler
            order = rng.permutation(len(tokens))
            text = " ".join(tokens[j] for j in order)
            records.append({"doc_id": f"{split}-{d:05d}", "text": text, "labels": sorted(gold)})
        splits[split] = records

    return SyntheticCorpus(spec=spec, descriptions=descriptions, splits=splits,
                           stems=stems, discriminative=disc, noise_words=noise)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> dict[str, Path]:
    """Write train/dev/test JSONL, ``descriptions.tsv`` and ``manifest.json``.

    Returns:
        Mapping from artifact name to the written path.
    """
    corpus = synthesize(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for split, records in corpus.splits.items():
        p = out / f"{split}.jsonl"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        paths[split] = p
    paths["descriptions"] = out / "descriptions.tsv"
    write_description_tsv(paths["descriptions"], corpus.descriptions)
    manifest = {
        "generator": "ahdd.synthetic",
        "seed": spec.seed,
        "spec": asdict(spec),
        "stems": corpus.stems,
        "discriminative": corpus.discriminative,
    }
    paths["manifest"] = out / "manifest.json"
    with open(paths["manifest"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
