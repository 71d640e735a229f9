"""ICD code space: codes, short descriptions and the parent/child tree.

Parents are derived by stripping the last dot-separated segment of a code
("285.1" -> "285") unless an explicit ``code<TAB>parent`` table says
otherwise. A derived parent only counts if it is itself present in the
description file; otherwise the code is a root.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from ahdd.errors import ConfigurationError, FormatError
from ahdd.text import tokenize

logger = logging.getLogger(__name__)

DOT_TRUNCATION = "dot_truncation"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class IcdCode:
    code: str
    description: tuple[str, ...]
    parent: Optional[str] = None

    def __post_init__(self):
        if not self.code:
            raise ValueError("code must be a non-empty string")
        if len(self.description) == 0:
            raise ValueError(f"code {self.code!r} has an empty description")
        if self.parent is not None and self.parent == self.code:
            raise ValueError(f"code {self.code!r} is its own parent")


def derive_parent(
    code: str,
    mode: str = DOT_TRUNCATION,
    parent_table: Optional[Mapping[str, str]] = None,
) -> Optional[str]:
    """Return the parent code string of ``code``, or None.

    In ``dot_truncation`` mode the final dot-separated segment is removed
    ("V10.1" -> "V10"); codes without a dot have no parent. In ``explicit``
    mode the parent is looked up in ``parent_table``.

    Raises:
        ValueError: If ``code`` is empty.
        ConfigurationError: Explicit mode without a parent table, or an
            unknown mode.
    """
    if not code:
        raise ValueError("code must be non-empty")
    if mode == DOT_TRUNCATION:
        if "." not in code:
            return None
        head = code.rsplit(".", 1)[0]
        return head or None
    if mode == EXPLICIT:
        if parent_table is None:
            raise ConfigurationError("explicit parent mode requires a loaded parent table")
        return parent_table.get(code)
    raise ConfigurationError(f"unknown parent derivation mode {mode!r}")


class CodeHierarchy:
    """Immutable tree over ICD codes with a sorted-code label index.

    Every code in the hierarchy is an assignable label, internal nodes
    included.
    """

    def __init__(self, codes: Iterable[IcdCode]):
        nodes: dict[str, IcdCode] = {}
        for c in codes:
            if c.code in nodes:
                raise FormatError(f"duplicate code {c.code!r}")
            nodes[c.code] = c
        for c in nodes.values():
            if c.parent is not None and c.parent not in nodes:
                raise FormatError(f"code {c.code!r} names unknown parent {c.parent!r}")
        cycle = find_cycle({c.code: c.parent for c in nodes.values()})
        if cycle:
            raise FormatError("parent cycle: " + " -> ".join(cycle))

        self._nodes = nodes
        self._labels = sorted(nodes)
        self._index = {code: i for i, code in enumerate(self._labels)}
        children: dict[str, list[str]] = {code: [] for code in self._labels}
        for code in self._labels:
            parent = nodes[code].parent
            if parent is not None:
                children[parent].append(code)
        self._children = {k: tuple(v) for k, v in children.items()}

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, code: str) -> bool:
        return code in self._nodes

    def __iter__(self):
        return iter(self._labels)

    @property
    def labels(self) -> list[str]:
        """All codes in label-index order."""
        return list(self._labels)

    def node(self, code: str) -> IcdCode:
        try:
            return self._nodes[code]
        except KeyError:
            raise KeyError(f"unknown code {code!r}") from None

    def index_of(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise KeyError(f"unknown code {code!r}") from None

    def code_of(self, index: int) -> str:
        return self._labels[index]

    def description(self, code: str) -> tuple[str, ...]:
        return self.node(code).description

    def parent_of(self, code: str) -> Optional[str]:
        return self.node(code).parent

    def children_of(self, code: str) -> tuple[str, ...]:
        self.node(code)
        return self._children[code]

    def roots(self) -> list[str]:
        return [c for c in self._labels if self._nodes[c].parent is None]

    def siblings_of(self, code: str) -> frozenset[str]:
        """Codes sharing ``code``'s parent, excluding ``code`` itself."""
        parent = self.node(code).parent
        if parent is None:
            return frozenset()
        return frozenset(c for c in self._children[parent] if c != code)

    def digest(self) -> str:
        """Content hash over codes, descriptions and parents."""
        h = hashlib.sha256()
        for code in self._labels:
            node = self._nodes[code]
            h.update(f"{code}\t{' '.join(node.description)}\t{node.parent or ''}\n".encode("utf-8"))
        return h.hexdigest()


def find_cycle(parent_of: Mapping[str, Optional[str]]) -> Optional[list[str]]:
    """Return one parent cycle as a code list (first == last), or None."""
    state: dict[str, int] = {}
    for start in parent_of:
        path: list[str] = []
        cur: Optional[str] = start
        while cur is not None and state.get(cur) != 2:
            if state.get(cur) == 1:
                return path[path.index(cur):] + [cur]
            state[cur] = 1
            path.append(cur)
            cur = parent_of.get(cur)
        for code in path:
            state[code] = 2
    return None


def read_description_tsv(path) -> list[tuple[int, str, tuple[str, ...]]]:
    """Parse a ``code<TAB>description`` file into (line_no, code, tokens)."""
    rows = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise FormatError(f"{path}:{line_no}: expected 'code<TAB>description'")
            code, text = line.split("\t", 1)
            code = code.strip()
            if not code:
                raise FormatError(f"{path}:{line_no}: empty code")
            if code in seen:
                raise FormatError(f"{path}:{line_no}: duplicate code {code!r} (first on line {seen[code]})")
            tokens = tuple(tokenize(text))
            if not tokens:
                raise FormatError(f"{path}:{line_no}: empty description for code {code!r}")
            seen[code] = line_no
            rows.append((line_no, code, tokens))
    return rows


def read_parent_tsv(path) -> dict[str, tuple[str, int]]:
    """Parse a ``code<TAB>parent_code`` file into code -> (parent, line_no)."""
    table: dict[str, tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise FormatError(f"{path}:{line_no}: expected 'code<TAB>parent_code'")
            code, parent = parts[0].strip(), parts[1].strip()
            if code in table:
                raise FormatError(f"{path}:{line_no}: duplicate parent entry for {code!r}")
            if code == parent:
                raise FormatError(f"{path}:{line_no}: code {code!r} is its own parent")
            table[code] = (parent, line_no)
    return table


def load_hierarchy(desc_path, parent_path=None) -> CodeHierarchy:
    """Load a hierarchy from a description TSV and an optional parent TSV.

    Explicit parent entries win over dot truncation. Parents that are not
    themselves in the description file are dropped (the code becomes a root).

    Raises:
        FormatError: duplicate rows, empty descriptions, unknown explicit
            parents or a parent cycle; the message names the offending line.
    """
    rows = read_description_tsv(desc_path)
    codes = {code for _, code, _ in rows}
    explicit = read_parent_tsv(parent_path) if parent_path is not None else {}
    parent_of: dict[str, Optional[str]] = {}
    for _, code, _ in rows:
        if code in explicit:
            parent, line_no = explicit[code]
            if parent not in codes:
                raise FormatError(f"{parent_path}:{line_no}: parent {parent!r} of {code!r} is not a known code")
            parent_of[code] = parent
        else:
            parent = derive_parent(code)
            if parent is not None and parent not in codes:
                logger.debug("derived parent %s of %s absent from %s; treating as root", parent, code, desc_path)
                parent = None
            parent_of[code] = parent
    for code, (_, line_no) in explicit.items():
        if code not in codes:
            raise FormatError(f"{parent_path}:{line_no}: code {code!r} is not in {desc_path}")

    cycle = find_cycle(parent_of)
    if cycle:
        line_no = min(explicit[c][1] for c in cycle if c in explicit)
        raise FormatError(f"{parent_path}:{line_no}: parent cycle: " + " -> ".join(cycle))
    return CodeHierarchy(IcdCode(code, tokens, parent_of[code]) for _, code, tokens in rows)


def write_description_tsv(path, rows: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for code, text in rows:
            fh.write(f"{code}\t{text}\n")


def from_mapping(descriptions: Mapping[str, str], parents: Optional[Mapping[str, str]] = None) -> CodeHierarchy:
    """Build a hierarchy in memory from ``code -> description`` text."""
    codes = set(descriptions)
    items = []
    for code, text in descriptions.items():
        if parents is not None and code in parents:
            parent = parents[code]
        else:
            parent = derive_parent(code)
            if parent not in codes:
                parent = None
        items.append(IcdCode(code, tuple(tokenize(text)), parent))
    return CodeHierarchy(items)


def anemia_toy_hierarchy() -> CodeHierarchy:
    """The anemia example: 285 with children 285.1 and 285.8."""
    return from_mapping({
        "285": "Other and unspecified anemias",
        "285.1": "Acute posthemorrhagic anemia",
        "285.8": "Other specified anemias",
    })

