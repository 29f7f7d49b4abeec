"""Turn a flat shortcut action list into a tree, then into Python-style code.

The tree builder walks the actions once with a cursor: an opening marker
(mode 0) adds a block node and descends into it, a separator (mode 1) starts
an else branch or a new menu case, and a closing marker (mode 2) climbs back
out. Code is produced by a pre-order walk of the finished tree.
"""

from __future__ import annotations

import keyword
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import BinaryParam, DanglingReference, OrphanElse, UnbalancedControlFlow
from .shortcut import Attachment, Binary, ParamValue, RawAction, RawShortcut
from .tree import AstNode, NodeKind, WorkflowAst

BUILTIN_PREFIX = "is.workflow.actions."
CONDITIONAL = BUILTIN_PREFIX + "conditional"
REPEAT_EACH = BUILTIN_PREFIX + "repeat.each"
REPEAT_COUNT = BUILTIN_PREFIX + "repeat.count"
MENU = BUILTIN_PREFIX + "choosefrommenu"
DICTIONARY = BUILTIN_PREFIX + "dictionary"

BLOCK_IDENTIFIERS = {
    CONDITIONAL: NodeKind.IF,
    REPEAT_EACH: NodeKind.REPEAT_EACH,
    REPEAT_COUNT: NodeKind.REPEAT_COUNT,
    MENU: NodeKind.MENU,
}

INDENT = "    "
DEFAULT_ASK_PROMPT = "Please enter the value:"

# Names the emitted code relies on; variable names must not shadow them.
RESERVED_NAMES = frozenset({"input", "print", "range", "str", "len", "int", "float",
                            "bool", "list", "dict", "True", "False", "None"})

COMPARISONS = {
    "Equals": "==",
    "Does Not Equal": "!=",
    "Is Greater Than": ">",
    "Is Less Than": "<",
}
MEMBERSHIP = {
    "Contains": "in",
    "Does Not Contain": "not in",
}


# -- tree building -----------------------------------------------------------


def block_kind(action: RawAction) -> NodeKind | None:
    if action.control_flow_mode is None:
        return None
    return BLOCK_IDENTIFIERS.get(action.identifier)


def _enclosing_menu(node: AstNode, grouping_id: str | None) -> AstNode | None:
    """The menu that ``node`` is, or whose case ``node`` is, if its id matches."""
    if node.kind is NodeKind.MENU_CASE:
        node = node.parent
    if node.kind is NodeKind.MENU and node.grouping_id == grouping_id:
        return node
    return None


def _close(cursor: AstNode, action: RawAction, index: int) -> AstNode:
    if cursor.kind is NodeKind.ROOT:
        raise UnbalancedControlFlow(f"action {index}: end of block with no open block")
    if cursor.grouping_id != action.grouping_id:
        raise UnbalancedControlFlow(
            f"action {index}: closes block {action.grouping_id!r} "
            f"but the innermost open block is {cursor.grouping_id!r}")
    return cursor.parent


def build_ast(s: RawShortcut) -> WorkflowAst:
    """Build the workflow tree for ``s``.

    Raises :class:`UnbalancedControlFlow` when an end marker has nothing to
    close (or a block is left open) and :class:`OrphanElse` when an else/case
    marker has no matching open block.
    """
    tree = WorkflowAst()
    cursor = tree.root
    for index, action in enumerate(s.actions):
        kind = block_kind(action)
        mode = action.control_flow_mode
        if kind is None:
            cursor.add(NodeKind.CALL, action)
        elif mode == 0:
            cursor = cursor.add(kind, action)
        elif kind is NodeKind.IF and mode == 1:
            if cursor.kind is not NodeKind.IF or cursor.grouping_id != action.grouping_id:
                raise OrphanElse(f"action {index}: else branch without a matching if")
            cursor = cursor.parent.add(NodeKind.ELSE, action)
        elif kind is NodeKind.MENU and mode == 1:
            menu = _enclosing_menu(cursor, action.grouping_id)
            if menu is None:
                raise OrphanElse(f"action {index}: menu case without a matching open menu")
            cursor = menu.add(NodeKind.MENU_CASE, action)
        elif kind is NodeKind.MENU and mode == 2:
            menu = _enclosing_menu(cursor, action.grouping_id)
            if menu is None:
                raise UnbalancedControlFlow(
                    f"action {index}: end of menu {action.grouping_id!r} while another block is open")
            cursor = menu.parent
        elif mode == 2:
            cursor = _close(cursor, action, index)
        else:
            raise UnbalancedControlFlow(f"action {index}: loops have no mode {mode} marker")
    if cursor is not tree.root:
        raise UnbalancedControlFlow(f"block {cursor.grouping_id!r} is never closed")
    return tree


# -- naming ------------------------------------------------------------------


_INVALID_CHARS = re.compile(r"[^A-Za-z0-9_]")


def sanitize_identifier(name: str, fallback: str = "var") -> str:
    """Make ``name`` a valid identifier: invalid characters become ``_``."""
    ident = _INVALID_CHARS.sub("_", name.strip())
    if not ident:
        ident = fallback
    if ident[0].isdigit():
        ident = "_" + ident
    if keyword.iskeyword(ident) or keyword.issoftkeyword(ident):
        ident += "_"
    return ident


def _dedupe(name: str, taken: set[str]) -> str:
    if name not in taken and name not in RESERVED_NAMES:
        return name
    n = 2
    while f"{name}_{n}" in taken:
        n += 1
    return f"{name}_{n}"


def _iter_attachments(value: ParamValue) -> Iterable[Attachment]:
    if isinstance(value, Attachment):
        yield value
    elif isinstance(value, dict):
        for v in value.values():
            yield from _iter_attachments(v)
    elif isinstance(value, list):
        for v in value:
            yield from _iter_attachments(v)


def referenced_uuids(tree: WorkflowAst) -> set[str]:
    refs = set()
    for node in tree.walk():
        if node.action is None:
            continue
        for value in node.action.params.values():
            refs.update(a.output_uuid for a in _iter_attachments(value) if a.output_uuid)
    return refs


@dataclass
class NamingPlan:
    names: dict[str, str] = field(default_factory=dict)
    style: str = "deterministic"

    def get(self, uuid: str) -> str | None:
        return self.names.get(uuid)


def assign_names(tree: WorkflowAst, external: Mapping[str, str] | None = None,
                 pattern: str = "var_{n}") -> NamingPlan:
    """Name every call output that some later attachment refers to.

    Without ``external`` the names follow ``pattern`` in pre-order
    (``var_1``, ``var_2``...). External names are sanitized and suffixed
    (``count``, ``count_2``) on collision; outputs the external map does not
    cover fall back to the pattern.
    """
    refs = referenced_uuids(tree)
    targets = [n.action.uuid for n in tree.calls() if n.action.uuid in refs]
    # A uuid can only be defined once; ignore accidental duplicates.
    targets = list(dict.fromkeys(targets))
    taken: set[str] = set()
    names: dict[str, str] = {}
    pending = []
    for uuid in targets:
        if external and uuid in external:
            name = _dedupe(sanitize_identifier(external[uuid]), taken)
            names[uuid] = name
            taken.add(name)
        else:
            pending.append(uuid)
    counter = 0
    for uuid in pending:
        while True:
            counter += 1
            name = pattern.format(n=counter)
            if name not in taken:
                break
        names[uuid] = name
        taken.add(name)
    # Keep pre-order for readability of the plan.
    ordered = {u: names[u] for u in targets}
    return NamingPlan(ordered, "external" if external else "deterministic")


# -- code emission -----------------------------------------------------------


def quote(text: str) -> str:
    """Single-quoted Python string literal."""
    out = []
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "'" + "".join(out) + "'"


def _snake(name: str) -> str:
    return re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name).lower()


def _plain_text(value: ParamValue) -> ParamValue:
    """Unwrap a text-token map that carries no embedded variables."""
    if isinstance(value, dict):
        inner = value.get("Value")
        if isinstance(inner, dict) and isinstance(inner.get("string"), str) \
                and not inner.get("attachmentsByRange"):
            return inner["string"]
    return value


class _Emitter:
    def __init__(self, names: NamingPlan, menu_style: str = "match"):
        if menu_style not in ("match", "if"):
            raise ValueError("menu_style must be 'match' or 'if'")
        self.names = names
        self.menu_style = menu_style
        self.lines: list[str] = []
        self.count_loops: list[str] = []
        self.each_loops: list[str] = []
        self.menu_depth = 0

    # values

    def value(self, v: ParamValue) -> str:
        if isinstance(v, Binary):
            raise BinaryParam(f"binary parameter of {v.length} bytes cannot be transcribed")
        if isinstance(v, Attachment):
            return self.attachment(v)
        if isinstance(v, bool):
            return "True" if v else "False"
        if v is None:
            return "None"
        if isinstance(v, (int, float)):
            return repr(v)
        if isinstance(v, str):
            return quote(v)
        if isinstance(v, list):
            return "[" + ", ".join(self.value(x) for x in v) + "]"
        if isinstance(v, dict):
            plain = _plain_text(v)
            if plain is not v:
                return self.value(plain)
            return "{" + ", ".join(f"{quote(str(k))}: {self.value(x)}" for k, x in v.items()) + "}"
        raise TypeError(f"unexpected parameter value {v!r}")

    def attachment(self, a: Attachment) -> str:
        if a.output_uuid is not None:
            name = self.names.get(a.output_uuid)
            if name is None:
                raise DanglingReference(f"output {a.output_uuid} is not named")
            return name
        if a.kind == "Ask":
            prompt = a.prompt or DEFAULT_ASK_PROMPT
            if re.search(r"[\"'\\{}\n\r]", prompt):
                return f"input({quote(prompt)})"
            return f"f'{{input(\"{prompt}\")}}'"
        if a.kind == "Variable":
            var = a.variable_name or "variable"
            if var == "Repeat Item":
                return self.each_loops[-1] if self.each_loops else "repeat_item"
            if var == "Repeat Index":
                return self.count_loops[-1] if self.count_loops else "repeat_index"
            return sanitize_identifier(var)
        return sanitize_identifier(_snake(a.kind))

    def call_expr(self, action: RawAction) -> str:
        if action.identifier == DICTIONARY:
            literal = self.dictionary_literal(action)
            if literal is not None:
                return literal
        fn = sanitize_identifier(action.identifier.replace(".", "_"))
        used: set[str] = set()
        args = []
        for key, val in action.params.items():
            kw = sanitize_identifier(key)
            while kw in used:
                kw += "_"
            used.add(kw)
            args.append(f"{kw}={self.value(val)}")
        return f"{fn}({', '.join(args)})"

    def dictionary_literal(self, action: RawAction) -> str | None:
        items = action.params.get("WFItems")
        if isinstance(items, dict) and "Value" in items:
            inner = items.get("Value")
            rows = inner.get("WFDictionaryFieldValueItems") if isinstance(inner, dict) else None
            if not isinstance(rows, list):
                return None
            pairs = []
            for row in rows:
                if not isinstance(row, dict) or "WFKey" not in row:
                    return None
                pairs.append((self.value(_plain_text(row["WFKey"])),
                              self.value(_plain_text(row.get("WFValue", "")))))
            return "{" + ", ".join(f"{k}: {v}" for k, v in pairs) + "}"
        if isinstance(items, dict):
            return self.value(items)
        return None

    # statements

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def body(self, nodes: list[AstNode], depth: int) -> None:
        if not nodes:
            self.emit(depth, "pass")
            return
        for child in nodes:
            self.node(child, depth)

    def node(self, node: AstNode, depth: int) -> None:
        kind = node.kind
        action = node.action
        if kind is NodeKind.CALL:
            expr = self.call_expr(action)
            target = self.names.get(action.uuid) if action.uuid else None
            self.emit(depth, f"{target} = {expr}" if target else expr)
        elif kind is NodeKind.IF:
            self.emit(depth, f"if {render_condition(action, self.names, self)}:")
            self.body(node.children, depth + 1)
        elif kind is NodeKind.ELSE:
            self.emit(depth, "else:")
            self.body(node.children, depth + 1)
        elif kind is NodeKind.REPEAT_COUNT:
            count = action.params.get("WFRepeatCount", 1)
            var = f"i_{len(self.count_loops) + 1}"
            self.emit(depth, f"for {var} in range({self.value(count)}):")
            self.count_loops.append(var)
            self.body(node.children, depth + 1)
            self.count_loops.pop()
        elif kind is NodeKind.REPEAT_EACH:
            iterable = action.params.get("WFInput")
            source = self.value(iterable) if iterable is not None else "shortcut_input"
            var = f"item_{len(self.each_loops) + 1}"
            self.emit(depth, f"for {var} in {source}:")
            self.each_loops.append(var)
            self.body(node.children, depth + 1)
            self.each_loops.pop()
        elif kind is NodeKind.MENU:
            self.menu(node, depth)
        elif kind is NodeKind.MENU_CASE:
            raise UnbalancedControlFlow("menu case outside a menu")
        else:
            raise ValueError(f"cannot emit node of kind {kind}")

    def menu(self, node: AstNode, depth: int) -> None:
        prompt = node.action.params.get("WFMenuPrompt")
        subject = f"input({self.value(prompt)})" if prompt is not None else "input()"
        cases = [c for c in node.children if c.kind is NodeKind.MENU_CASE]
        # Actions placed before the first case have nowhere else to go.
        for child in node.children:
            if child.kind is not NodeKind.MENU_CASE:
                self.node(child, depth)
        self.menu_depth += 1
        if self.menu_style == "match":
            self.emit(depth, f"match {subject}:")
            if not cases:
                self.emit(depth + 1, "case _:")
                self.emit(depth + 2, "pass")
            for i, case in enumerate(cases, 1):
                self.emit(depth + 1, f"case {self.case_label(case, i)}:")
                self.body(case.children, depth + 2)
        else:
            var = f"menu_{self.menu_depth}"
            self.emit(depth, f"{var} = {subject}")
            for i, case in enumerate(cases, 1):
                head = "if" if i == 1 else "elif"
                self.emit(depth, f"{head} {var} == {self.case_label(case, i)}:")
                self.body(case.children, depth + 1)
        self.menu_depth -= 1

    def case_label(self, case: AstNode, position: int) -> str:
        title = _plain_text(case.action.params.get("WFMenuItemTitle", f"Case {position}"))
        if isinstance(title, (str, int, float)) and not isinstance(title, bool):
            return self.value(title)
        return quote(f"Case {position}")


def render_condition(action: RawAction, names: NamingPlan, _emitter: "_Emitter | None" = None) -> str:
    """Render the test of an if-block as a Python expression.

    Unknown condition names fall back to a ``cond_<name>(input, operand)`` call.
    """
    em = _emitter or _Emitter(names)
    params = action.params
    subject = em.value(params["WFInput"]) if "WFInput" in params else "shortcut_input"
    operand = None
    for key in ("WFConditionalActionString", "WFNumberValue"):
        if key in params:
            operand = em.value(_plain_text(params[key]))
            break
    condition = params.get("WFCondition")
    if isinstance(condition, str) and condition in COMPARISONS:
        return f"{subject} {COMPARISONS[condition]} {operand if operand is not None else quote('')}"
    if isinstance(condition, str) and condition in MEMBERSHIP:
        return f"{operand if operand is not None else quote('')} {MEMBERSHIP[condition]} {subject}"
    label = "unspecified" if condition is None else str(condition)
    fn = "cond_" + sanitize_identifier(label.lower(), "unspecified").lstrip("_")
    args = subject if operand is None else f"{subject}, {operand}"
    return f"{fn}({args})"


def emit_code(tree: WorkflowAst, names: NamingPlan | None = None, menu_style: str = "match") -> str:
    """Pre-order emission of ``tree`` as workflow code (4-space indents).

    An empty tree gives the empty string; otherwise the text ends with a newline.
    """
    em = _Emitter(names or NamingPlan(), menu_style)
    for child in tree.root.children:
        em.node(child, 0)
    return "".join(line + "\n" for line in em.lines)


def transcribe(s: RawShortcut, external_names: Mapping[str, str] | None = None,
               menu_style: str = "match") -> str:
    tree = build_ast(s)
    return emit_code(tree, assign_names(tree, external_names), menu_style)
