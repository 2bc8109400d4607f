"""Class hierarchy: class_map.csv / class_tree.json parsing, queries and serialization.

The class map lists every class name with its pixel value in breadth-wise order.
The class tree is a nested JSON object whose keys are class names and whose values
are the child objects (an empty object for leaves). Names are compared byte-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from utils.errors import HierarchyFormatError, UnknownClassError

ClassMapEntries = List[Tuple[str, int]]

# masks are stored as 8-bit PNGs
MAX_PIXEL_VALUE = 255


@dataclass(frozen=True)
class ClassNode:
    """A single class of the hierarchy."""

    name: str
    parent: Optional[str]
    children: Tuple[str, ...]
    level: int
    pixel_value: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_root(self) -> bool:
        return self.parent is None


@dataclass(frozen=True)
class ClassTree:
    """Immutable parsed hierarchy.

    ``nodes`` are stored breadth-wise, which for a valid dataset is also the class-map
    order. ``levels[l]`` holds the class names of level ``l`` and ``parent_groups[l - 1]``
    maps each parent at level ``l - 1`` to its ordered children at level ``l``.
    """

    nodes: Tuple[ClassNode, ...]
    header: Optional[Tuple[str, str]] = field(default=None, compare=False)

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @cached_property
    def _by_name(self) -> Dict[str, ClassNode]:
        return {node.name: node for node in self.nodes}

    @cached_property
    def levels(self) -> Tuple[Tuple[str, ...], ...]:
        depth = max((node.level for node in self.nodes), default=-1) + 1
        return tuple(
            tuple(node.name for node in self.nodes if node.level == lvl) for lvl in range(depth)
        )

    @cached_property
    def parent_groups(self) -> Tuple[Mapping[str, Tuple[str, ...]], ...]:
        groups = []
        for lvl in range(1, self.depth):
            group: Dict[str, Tuple[str, ...]] = OrderedDict()
            for name in self.levels[lvl]:
                parent = self._by_name[name].parent
                group[parent] = group.get(parent, ()) + (name,)
            groups.append(group)
        return tuple(groups)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(node.name for node in self.nodes)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.nodes)

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def node(self, name: str) -> ClassNode:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownClassError(f"Unknown class '{name}'; known classes: {list(self.names)}") from None

    def level_of(self, name: str) -> int:
        return self.node(name).level

    def children_of(self, name: str) -> Tuple[str, ...]:
        return self.node(name).children

    def parent_of(self, name: str) -> Optional[str]:
        return self.node(name).parent

    @property
    def leaves(self) -> Tuple[str, ...]:
        return tuple(node.name for node in self.nodes if node.is_leaf)

    @property
    def flat_classes(self) -> Tuple[str, ...]:
        """Leaf classes in class-map order: the outputs of a flat baseline."""
        return self.leaves

    @property
    def parents(self) -> Tuple[str, ...]:
        return tuple(node.name for node in self.nodes if not node.is_leaf)

    @property
    def background(self) -> Optional[str]:
        for node in self.nodes:
            if node.pixel_value == 0:
                return node.name
        return None

    def descendants(self, name: str) -> Tuple[str, ...]:
        """All classes below ``name`` in breadth-wise order."""
        found: List[str] = []
        frontier = list(self.children_of(name))
        while frontier:
            found.extend(frontier)
            frontier = [c for child in frontier for c in self.children_of(child)]
        return tuple(found)

    def descendant_values(self, name: str) -> Tuple[int, ...]:
        """Pixel values covered by ``name``: its own value plus every descendant's."""
        members = (name,) + self.descendants(name)
        return tuple(
            self.node(m).pixel_value for m in members if self.node(m).pixel_value is not None
        )

    def parent_index(self, level: int) -> List[int]:
        """For each class of ``level``, the index of its parent within ``level - 1``."""
        if level < 1 or level >= self.depth:
            raise ValueError(f"Level {level} has no parent level (depth {self.depth})")
        previous = self.levels[level - 1]
        return [previous.index(self.node(name).parent) for name in self.levels[level]]

    def class_map(self) -> ClassMapEntries:
        return [(node.name, node.pixel_value) for node in self.nodes if node.pixel_value is not None]

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_nested(self) -> Dict[str, dict]:
        def build(name: str) -> Dict[str, dict]:
            return OrderedDict((child, build(child)) for child in self.children_of(name))

        roots = self.levels[0] if self.levels else ()
        return OrderedDict((root, build(root)) for root in roots)

    def to_class_tree_json(self) -> str:
        return json.dumps(self.to_nested(), indent=4) + "\n"

    def to_class_map_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        if self.header:
            writer.writerow(self.header)
        for name, value in self.class_map():
            writer.writerow([name, value])
        return buffer.getvalue()

    def fingerprint(self) -> str:
        """sha256 over the canonical serialization; identifies the hierarchy in checkpoints."""
        payload = self.to_class_map_csv() + "\x00" + self.to_class_tree_json()
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------


def parse_class_map(csv_text: str) -> ClassMapEntries:
    """Parse ``class_map.csv`` text into ``(name, pixel value)`` pairs in file order.

    A first row whose value column is not an integer is treated as a header.
    """
    entries, _ = _parse_class_map_with_header(csv_text)
    return entries


def _parse_class_map_with_header(csv_text: str) -> Tuple[ClassMapEntries, Optional[Tuple[str, str]]]:
    rows = [row for row in csv.reader(io.StringIO(csv_text)) if any(cell.strip() for cell in row)]
    header: Optional[Tuple[str, str]] = None
    entries: ClassMapEntries = []
    seen_names: Dict[str, int] = {}
    seen_values: Dict[int, str] = {}

    for line_no, row in enumerate(rows, start=1):
        if len(row) < 2:
            raise HierarchyFormatError(f"class map row {line_no}: expected 'name,value', got {row!r}")
        name, raw_value = row[0], row[1].strip()
        try:
            value = int(raw_value)
        except ValueError:
            if line_no == 1:
                header = (row[0], row[1])
                continue
            raise HierarchyFormatError(
                f"class map row {line_no}: pixel value {raw_value!r} is not an integer"
            ) from None
        if value < 0:
            raise HierarchyFormatError(f"class map row {line_no}: pixel value {value} is negative")
        if value > MAX_PIXEL_VALUE:
            raise HierarchyFormatError(
                f"class map row {line_no}: pixel value {value} does not fit an 8-bit mask (max {MAX_PIXEL_VALUE})"
            )
        if name in seen_names:
            raise HierarchyFormatError(f"class map row {line_no}: duplicate class name '{name}'")
        if value in seen_values:
            raise HierarchyFormatError(
                f"class map row {line_no}: pixel value {value} of '{name}' already used by "
                f"'{seen_values[value]}'"
            )
        seen_names[name] = value
        seen_values[value] = name
        entries.append((name, value))

    if not entries:
        raise HierarchyFormatError("class map is empty")
    return entries, header


def _reject_duplicate_keys(pairs: Sequence[Tuple[str, object]]) -> "OrderedDict[str, object]":
    result: "OrderedDict[str, object]" = OrderedDict()
    for key, value in pairs:
        if key in result:
            raise HierarchyFormatError(f"class tree: class '{key}' listed twice under the same parent")
        result[key] = value
    return result


def parse_class_tree(json_text: str, class_map: ClassMapEntries | str) -> ClassTree:
    """Parse ``class_tree.json`` against a class map and build a ``ClassTree``.

    ``class_map`` is either already-parsed entries or raw CSV text.
    """
    header = None
    if isinstance(class_map, str):
        class_map, header = _parse_class_map_with_header(class_map)

    try:
        nested = json.loads(json_text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise HierarchyFormatError(f"class tree is not valid JSON: {exc}") from exc
    if not isinstance(nested, dict) or not nested:
        raise HierarchyFormatError("class tree must be a non-empty JSON object")

    values = dict(class_map)
    parents: Dict[str, Optional[str]] = {}
    children: Dict[str, Tuple[str, ...]] = {}
    levels: Dict[str, int] = {}
    order: List[str] = []

    # Breadth-wise walk so node order matches the class map's depth-wise order.
    frontier: List[Tuple[Optional[str], str, object, int]] = [(None, k, v, 0) for k, v in nested.items()]
    while frontier:
        next_frontier = []
        for parent, name, subtree, level in frontier:
            if name in parents:
                raise HierarchyFormatError(
                    f"class tree: '{name}' appears under both '{parents[name]}' and '{parent}'"
                )
            if not isinstance(subtree, dict):
                raise HierarchyFormatError(
                    f"class tree: value of '{name}' must be an object, got {type(subtree).__name__}"
                )
            parents[name] = parent
            levels[name] = level
            children[name] = tuple(subtree.keys())
            order.append(name)
            next_frontier.extend((name, k, v, level + 1) for k, v in subtree.items())
        frontier = next_frontier

    for name in order:
        if not children[name] and name not in values:
            raise HierarchyFormatError(
                f"class tree: leaf '{name}' has no pixel value in the class map "
                "(names are case-sensitive)"
            )
    missing = [name for name, _ in class_map if name not in parents]
    if missing:
        raise HierarchyFormatError(f"class map classes missing from class tree: {missing}")

    map_order = [name for name, _ in class_map]
    tree_order = [name for name in order if name in values]
    if tree_order != map_order:
        raise HierarchyFormatError(
            f"class tree order {tree_order} does not match class map order {map_order}"
        )

    nodes = tuple(
        ClassNode(
            name=name,
            parent=parents[name],
            children=children[name],
            level=levels[name],
            pixel_value=values.get(name),
        )
        for name in order
    )
    return ClassTree(nodes=nodes, header=header)


def load_class_tree(tree_path, map_path) -> ClassTree:
    """Read and parse a class_tree.json / class_map.csv pair from disk."""
    with open(map_path, "r", encoding="utf-8", newline="") as f:
        map_text = f.read()
    with open(tree_path, "r", encoding="utf-8") as f:
        tree_text = f.read()
    try:
        return parse_class_tree(tree_text, map_text)
    except HierarchyFormatError as exc:
        raise HierarchyFormatError(f"{tree_path} / {map_path}: {exc}") from exc


def save_class_tree(tree: ClassTree, tree_path, map_path) -> None:
    """Write the class_tree.json / class_map.csv pair for ``tree``."""
    with open(map_path, "w", encoding="utf-8", newline="") as f:
        f.write(tree.to_class_map_csv())
    with open(tree_path, "w", encoding="utf-8") as f:
        f.write(tree.to_class_tree_json())
