"""Class hierarchy package: parsing, queries and rule validation."""

from .class_tree import (
    ClassNode,
    ClassTree,
    load_class_tree,
    parse_class_map,
    parse_class_tree,
    save_class_tree,
)
from .rules import Violation, validate_hierarchy, visibility_parent

__all__ = [
    "ClassNode",
    "ClassTree",
    "Violation",
    "load_class_tree",
    "parse_class_map",
    "parse_class_tree",
    "save_class_tree",
    "validate_hierarchy",
    "visibility_parent",
]
