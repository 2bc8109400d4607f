"""Hierarchy construction rules and the visibility-parent query.

Rules checked by ``validate_hierarchy``:
  (i)   a parent class has at least two direct children (exactly two is flagged as a warning
        because more than two are expected)
  (ii)  a parent class is made up of its children: it must cover at least one stored class
        and the Background class cannot be a parent
  (iii) a child class cannot exist over multiple branches
Structural problems (dangling links, cycles, level mismatches) are reported as ``structure``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from .class_tree import ClassTree


@dataclass(frozen=True)
class Violation:
    """A single broken rule, naming the offending class."""

    rule: str          # "i", "ii", "iii" or "structure"
    class_name: str
    message: str
    severity: str = "error"   # "error" | "warning"

    def __str__(self) -> str:
        return f"[rule {self.rule}/{self.severity}] {self.class_name}: {self.message}"


def validate_hierarchy(tree: ClassTree) -> List[Violation]:
    """Return every rule violation found in ``tree``; an empty list means the tree is valid."""
    violations: List[Violation] = []
    names = set(tree.names)

    # (iii) and dangling links: every child listed by exactly one parent, parent links agree.
    listed_by: Dict[str, List[str]] = {}
    for node in tree.nodes:
        for child in node.children:
            listed_by.setdefault(child, []).append(node.name)
            if child not in names:
                violations.append(
                    Violation("structure", node.name, f"lists unknown child '{child}'")
                )
    for child, parents in listed_by.items():
        if len(parents) > 1:
            violations.append(
                Violation("iii", child, f"appears under multiple parents {parents}")
            )

    for node in tree.nodes:
        if node.parent is None:
            if node.level != 0:
                violations.append(
                    Violation("structure", node.name, f"root class has level {node.level}, expected 0")
                )
            continue
        if node.parent not in names:
            violations.append(
                Violation("structure", node.name, f"parent '{node.parent}' is not a known class")
            )
            continue
        parent = tree.node(node.parent)
        if node.name not in parent.children:
            violations.append(
                Violation("structure", node.name, f"parent '{parent.name}' does not list it as a child")
            )
        if node.level != parent.level + 1:
            violations.append(
                Violation(
                    "structure",
                    node.name,
                    f"level {node.level} is not parent level {parent.level} + 1",
                )
            )

    for name in tree.names:
        if _has_cycle(tree, name):
            violations.append(Violation("structure", name, "parent links form a cycle"))

    # (i) and (ii) per parent class.
    background = tree.background
    for node in tree.nodes:
        if node.is_leaf:
            continue
        count = len(node.children)
        if count < 2:
            violations.append(
                Violation("i", node.name, f"has {count} direct child class; at least 2 required")
            )
        elif count == 2:
            violations.append(
                Violation(
                    "i",
                    node.name,
                    "has exactly 2 direct child classes; more than two are expected",
                    severity="warning",
                )
            )
        if node.name == background:
            violations.append(
                Violation("ii", node.name, "the Background class cannot be a parent")
            )
        elif not _covers_stored_class(tree, node.name):
            violations.append(
                Violation("ii", node.name, "is not made up of any stored child class")
            )

    return violations


def _has_cycle(tree: ClassTree, start: str) -> bool:
    seen = {start}
    current: Optional[str] = tree.node(start).parent
    while current is not None:
        if current == start:
            return True
        if current in seen or current not in tree:
            return False
        seen.add(current)
        current = tree.node(current).parent
    return False


def _covers_stored_class(tree: ClassTree, name: str) -> bool:
    frontier = list(tree.node(name).children)
    seen = set()
    while frontier:
        child = frontier.pop()
        if child in seen or child not in tree:
            continue
        seen.add(child)
        node = tree.node(child)
        if node.pixel_value is not None:
            return True
        frontier.extend(node.children)
    return False


def visibility_parent(tree: ClassTree, class_name: str) -> Optional[str]:
    """Class whose target plane gates ``class_name``'s loss; ``None`` for root classes."""
    return tree.node(class_name).parent
