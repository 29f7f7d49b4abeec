"""The workflow syntax tree shared by the transcriber and the DSL parser."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

from .shortcut import RawAction


class NodeKind(str, enum.Enum):
    ROOT = "Root"
    CALL = "Call"
    IF = "If"
    ELSE = "Else"
    REPEAT_EACH = "RepeatEach"
    REPEAT_COUNT = "RepeatCount"
    MENU = "Menu"
    MENU_CASE = "MenuCase"


# Kinds that consume a closing (mode 2) marker.
OPENING_KINDS = frozenset({NodeKind.IF, NodeKind.REPEAT_EACH, NodeKind.REPEAT_COUNT, NodeKind.MENU})
BLOCK_KINDS = OPENING_KINDS | {NodeKind.ELSE, NodeKind.MENU_CASE}


@dataclass(eq=False)
class AstNode:
    kind: NodeKind
    action: RawAction | None = None
    children: list["AstNode"] = field(default_factory=list)
    parent: "AstNode | None" = field(default=None, repr=False)

    @property
    def grouping_id(self) -> str | None:
        return self.action.grouping_id if self.action is not None else None

    def add(self, kind: NodeKind, action: RawAction | None) -> "AstNode":
        node = AstNode(kind, action, parent=self)
        self.children.append(node)
        return node

    def walk(self) -> Iterator["AstNode"]:
        """Pre-order traversal, self first."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(eq=False)
class WorkflowAst:
    root: AstNode = field(default_factory=lambda: AstNode(NodeKind.ROOT))

    def walk(self) -> Iterator[AstNode]:
        return self.root.walk()

    def calls(self) -> list[AstNode]:
        return [n for n in self.walk() if n.kind is NodeKind.CALL]


def kind_skeleton(node: AstNode | WorkflowAst) -> tuple:
    """Node kinds and child structure with every payload dropped."""
    if isinstance(node, WorkflowAst):
        node = node.root
    return (node.kind.value, tuple(kind_skeleton(c) for c in node.children))


def format_tree(node: AstNode | WorkflowAst, indent: int = 0) -> str:
    if isinstance(node, WorkflowAst):
        node = node.root
    label = node.kind.value
    if node.action is not None:
        label += f" {node.action.identifier}"
    lines = ["  " * indent + label]
    lines.extend(format_tree(c, indent + 1) for c in node.children)
    return "\n".join(lines)
