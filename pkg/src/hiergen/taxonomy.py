"""Leveled discipline taxonomy: a single-rooted tree of coded label nodes
with strict level increments, path validation, and the four-way
prediction/truth comparison (acc / sl / se / other).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

ROOT_CODE = "root"
STOP_CODE = "<stop>"

ACC = "acc"
STOP_LATE = "sl"
STOP_EARLY = "se"
OTHER = "other"


class TaxonomyError(ValueError):
    """Structural validation failure; ``problems`` lists every offender."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid taxonomy: " + "; ".join(self.problems))


@dataclass(frozen=True)
class LabelNode:
    id: int
    code: str
    level: int
    parent_id: int | None


@dataclass(frozen=True)
class LabelPath:
    """Root-anchored label sequence; the root itself is implicit.

    ``terminated`` records whether an explicit stop was emitted; paths
    that reach the maximum depth end without one.
    """

    labels: tuple[int, ...] = ()
    terminated: bool = False

    def __len__(self):
        return len(self.labels)


class Taxonomy:
    """Immutable after construction; safe for concurrent reads."""

    def __init__(self, nodes: list[LabelNode], root: LabelNode):
        self.root = root
        self.nodes = {root.id: root}
        for n in nodes:
            self.nodes[n.id] = n
        self.max_depth = max((n.level for n in nodes), default=0)
        self._children: dict[int, list[int]] = {n.id: [] for n in self.nodes.values()}
        for n in nodes:
            self._children[n.parent_id].append(n.id)
        self._levels: list[list[LabelNode]] = [
            sorted(
                (n for n in nodes if n.level == lvl),
                key=lambda n: n.code,
            )
            for lvl in range(1, self.max_depth + 1)
        ]
        self._by_code = {n.code: n for n in self.nodes.values()}
        self._index_in_level = {
            n.id: i for lvl in self._levels for i, n in enumerate(lvl)
        }

    # -- construction -------------------------------------------------

    @classmethod
    def from_specs(cls, specs: list[tuple[str, int, str | None]]) -> "Taxonomy":
        """Build from (code, level, parent_code) triples, validating the
        tree shape: unique codes, one root level, uniform parent links one
        level up, no self/cyclic/multi-parent arrangements.
        """
        problems = []
        seen: dict[str, tuple[int, str | None]] = {}
        for code, level, parent in specs:
            if code in seen:
                prev_level, prev_parent = seen[code]
                if (prev_level, prev_parent) != (level, parent):
                    problems.append(
                        f"node '{code}' declared twice with parents "
                        f"'{prev_parent}' and '{parent}'"
                    )
                else:
                    problems.append(f"node '{code}' declared twice")
                continue
            seen[code] = (level, parent)
        if not seen:
            problems.append("no nodes given (missing root level)")
            raise TaxonomyError(problems)

        for code, (level, parent) in seen.items():
            if level < 1:
                problems.append(f"node '{code}' has non-positive level {level}")
                continue
            if parent == code:
                problems.append(f"node '{code}' is its own parent")
                continue
            if level == 1:
                if parent not in (None, ROOT_CODE):
                    problems.append(
                        f"level-1 node '{code}' must hang off the root, got parent '{parent}'"
                    )
                continue
            if parent is None or parent == ROOT_CODE:
                problems.append(f"node '{code}' at level {level} has no parent")
                continue
            if parent not in seen:
                problems.append(f"node '{code}' references unknown parent '{parent}'")
                continue
            if seen[parent][0] != level - 1:
                problems.append(
                    f"node '{code}' at level {level} skips levels: parent "
                    f"'{parent}' is at level {seen[parent][0]}"
                )
        if not any(lvl == 1 for lvl, _ in seen.values()):
            problems.append("no level-1 nodes (nothing attaches to the root)")
        if problems:
            raise TaxonomyError(problems)

        ordered = sorted(seen.items(), key=lambda kv: (kv[1][0], kv[0]))
        root = LabelNode(id=0, code=ROOT_CODE, level=0, parent_id=None)
        by_code = {ROOT_CODE: root}
        nodes = []
        for next_id, (code, (level, parent)) in enumerate(ordered, start=1):
            parent_node = by_code[parent if (parent and level > 1) else ROOT_CODE]
            node = LabelNode(id=next_id, code=code, level=level, parent_id=parent_node.id)
            by_code[code] = node
            nodes.append(node)
        return cls(nodes, root)

    # -- lookups ------------------------------------------------------

    def node(self, label_id: int) -> LabelNode:
        try:
            return self.nodes[label_id]
        except KeyError:
            raise KeyError(f"unknown label id {label_id}") from None

    def by_code(self, code: str) -> LabelNode:
        try:
            return self._by_code[code]
        except KeyError:
            raise KeyError(f"unknown label code '{code}'") from None

    def children(self, label_id: int) -> list[LabelNode]:
        if label_id not in self.nodes:
            raise KeyError(f"unknown label id {label_id}")
        return [self.nodes[c] for c in self._children[label_id]]

    def level_nodes(self, level: int) -> list[LabelNode]:
        """Nodes at ``level`` in stable (code-sorted) order; this order
        defines the within-level class index used by the model heads."""
        if not 1 <= level <= self.max_depth:
            raise ValueError(f"level {level} outside 1..{self.max_depth}")
        return self._levels[level - 1]

    def level_size(self, level: int) -> int:
        return len(self.level_nodes(level))

    def index_in_level(self, label_id: int) -> int:
        return self._index_in_level[self.node(label_id).id]

    def belongs_to(self, child_id: int, ancestor_id: int) -> bool:
        """Partial order: True iff ``ancestor_id`` is a proper ancestor."""
        node = self.node(child_id)
        self.node(ancestor_id)
        while node.parent_id is not None:
            if node.parent_id == ancestor_id:
                return True
            node = self.nodes[node.parent_id]
        return False

    # -- paths ----------------------------------------------------------

    def path_from_codes(self, codes: list[str], terminated: bool = False) -> LabelPath:
        return LabelPath(tuple(self.by_code(c).id for c in codes), terminated)

    def codes(self, path: LabelPath) -> list[str]:
        return [self.node(i).code for i in path.labels]

    def validate_path(self, path: LabelPath) -> bool:
        """True iff the labels chain parent->child starting from the root.

        Unknown ids raise (distinct from returning False).
        """
        prev = self.root.id
        for label_id in path.labels:
            node = self.node(label_id)
            if node.parent_id != prev:
                return False
            prev = node.id
        return True

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        records = [
            {
                "code": n.code,
                "level": n.level,
                "parent": None if n.parent_id == 0 else self.nodes[n.parent_id].code,
            }
            for n in sorted(
                (n for n in self.nodes.values() if n.level > 0),
                key=lambda n: (n.level, n.code),
            )
        ]
        return json.dumps({"nodes": records}, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json(), encoding="utf-8")


def load_taxonomy(source: str | Path) -> Taxonomy:
    """Load and validate a taxonomy from its JSON file form.

    Schema: {"nodes": [{"code": str, "level": int, "parent": str|null}]}.
    Saving a loaded taxonomy reproduces the file byte-for-byte.
    """
    raw = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise TaxonomyError([f"not valid JSON: {e}"]) from None
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise TaxonomyError(["missing top-level 'nodes' list"])
    specs = []
    for i, rec in enumerate(doc["nodes"]):
        try:
            specs.append((rec["code"], int(rec["level"]), rec.get("parent")))
        except (KeyError, TypeError, ValueError):
            raise TaxonomyError([f"record {i} lacks code/level fields: {rec!r}"]) from None
    return Taxonomy.from_specs(specs)


def classify_result(pred: LabelPath, truth: LabelPath) -> str:
    """Compare a predicted path against the gold path.

    acc: identical labels and length. se: prediction is a strict prefix
    of the truth (stopped early). sl: truth is a strict prefix of the
    prediction (stopped late). other: some level disagrees outright.
    """
    shared = min(len(pred), len(truth))
    if pred.labels[:shared] != truth.labels[:shared]:
        return OTHER
    if len(pred) == len(truth):
        return ACC
    return STOP_EARLY if len(pred) < len(truth) else STOP_LATE
