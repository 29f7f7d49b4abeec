"""The restricted Python-style workflow language.

Parsing is delegated to the standard library's :mod:`ast` and the result is
narrowed to the statement and expression forms workflows actually use;
anything else (imports, function definitions, lambdas, ``try``...) is
rejected with :class:`UnsupportedConstruct`. A small standalone lexer,
:func:`tokenize_code`, produces the token stream the text metrics compare.
"""

from __future__ import annotations

import ast
import io
import re
import tokenize
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

from .errors import DslParseError, UnsupportedConstruct
from .shortcut import Attachment, RawAction
from .tree import AstNode, NodeKind, WorkflowAst

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()
    kwargs: tuple = ()  # ((keyword, expr), ...)
    line: int = 0
    col: int = 0
    # Set only when the callee is not a plain (dotted) name.
    callee: "DslExpr | None" = None


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class FStringLit:
    parts: tuple  # str pieces and embedded expressions


@dataclass(frozen=True)
class NumberLit:
    value: int | float


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class NoneLit:
    pass


@dataclass(frozen=True)
class ListLit:
    items: tuple


@dataclass(frozen=True)
class DictLit:
    keys: tuple
    values: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "DslExpr"
    rhs: "DslExpr"


@dataclass(frozen=True)
class UnaryOp:
    op: str
    operand: "DslExpr"


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: "DslExpr"
    rhs: "DslExpr"


@dataclass(frozen=True)
class Subscript:
    base: "DslExpr"
    index: "DslExpr"


@dataclass(frozen=True)
class Attribute:
    base: "DslExpr"
    attr: str


DslExpr = Union[Call, Name, StringLit, FStringLit, NumberLit, BoolLit, NoneLit, ListLit,
                DictLit, BinOp, UnaryOp, Compare, Subscript, Attribute]

# -- statements --------------------------------------------------------------


@dataclass
class Assign:
    target: DslExpr
    value: DslExpr
    line: int = 0
    end_line: int = 0


@dataclass
class ExprStmt:
    expr: DslExpr
    line: int = 0
    end_line: int = 0


@dataclass
class If:
    cond: DslExpr
    body: list
    elifs: list = field(default_factory=list)  # [(cond, body), ...]
    else_body: list = field(default_factory=list)
    line: int = 0
    end_line: int = 0


@dataclass
class ForIn:
    var: str
    iterable: DslExpr
    body: list
    line: int = 0
    end_line: int = 0


@dataclass
class While:
    cond: DslExpr
    body: list
    line: int = 0
    end_line: int = 0


@dataclass
class MatchCase:
    pattern: DslExpr
    body: list


@dataclass
class Match:
    subject: DslExpr
    cases: list
    line: int = 0
    end_line: int = 0


@dataclass
class Pass:
    line: int = 0
    end_line: int = 0


@dataclass
class Comment:
    text: str
    line: int = 0
    end_line: int = 0


DslStmt = Union[Assign, ExprStmt, If, ForIn, While, Match, Pass, Comment]


@dataclass
class DslProgram:
    statements: list
    source_map: list = field(default_factory=list)  # (first line, last line) per statement


# -- conversion from the stdlib tree ---------------------------------------

_BINOPS = {
    ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/", ast.FloorDiv: "//",
    ast.Mod: "%", ast.Pow: "**", ast.BitOr: "|", ast.BitAnd: "&", ast.BitXor: "^",
    ast.LShift: "<<", ast.RShift: ">>", ast.MatMult: "@",
}
_CMPOPS = {
    ast.Eq: "==", ast.NotEq: "!=", ast.Lt: "<", ast.LtE: "<=", ast.Gt: ">", ast.GtE: ">=",
    ast.In: "in", ast.NotIn: "not in", ast.Is: "is", ast.IsNot: "is not",
}
_UNARY = {ast.Not: "not", ast.USub: "-", ast.UAdd: "+", ast.Invert: "~"}

_STATEMENT_NAMES = {
    ast.Import: "import", ast.ImportFrom: "from", ast.FunctionDef: "def",
    ast.AsyncFunctionDef: "async", ast.ClassDef: "class", ast.Try: "try",
    ast.With: "with", ast.AsyncWith: "async", ast.AsyncFor: "async", ast.Return: "return",
    ast.Raise: "raise", ast.Global: "global", ast.Nonlocal: "nonlocal", ast.Delete: "del",
    ast.Assert: "assert", ast.Break: "break", ast.Continue: "continue",
    ast.AugAssign: "augmented assignment", ast.AnnAssign: "annotated assignment",
}


def _unsupported(node: ast.AST, what: str) -> UnsupportedConstruct:
    return UnsupportedConstruct(f"unsupported construct: {what}", getattr(node, "lineno", None),
                                getattr(node, "col_offset", -1) + 1, what)


def _dotted(node: ast.expr) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        base = _dotted(node.value)
        return None if base is None else f"{base}.{node.attr}"
    return None


def _expr(node: ast.expr) -> DslExpr:
    if isinstance(node, ast.Call):
        name = _dotted(node.func)
        callee = None if name is not None else _expr(node.func)
        args = []
        for a in node.args:
            if isinstance(a, ast.Starred):
                raise _unsupported(a, "starred argument")
            args.append(_expr(a))
        kwargs = []
        seen = set()
        for kw in node.keywords:
            if kw.arg is None:
                raise _unsupported(kw.value, "** argument")
            if kw.arg in seen:
                raise DslParseError("repeated keyword argument", node.lineno, node.col_offset + 1, kw.arg)
            seen.add(kw.arg)
            kwargs.append((kw.arg, _expr(kw.value)))
        return Call(name or "<call>", tuple(args), tuple(kwargs), node.lineno,
                    node.col_offset, callee)
    if isinstance(node, ast.Name):
        return Name(node.id)
    if isinstance(node, ast.Constant):
        v = node.value
        if isinstance(v, bool):
            return BoolLit(v)
        if v is None:
            return NoneLit()
        if isinstance(v, str):
            return StringLit(v)
        if isinstance(v, (int, float)):
            return NumberLit(v)
        raise _unsupported(node, type(v).__name__ + " literal")
    if isinstance(node, ast.JoinedStr):
        parts = []
        for piece in node.values:
            if isinstance(piece, ast.Constant):
                parts.append(piece.value)
            elif isinstance(piece, ast.FormattedValue):
                parts.append(_expr(piece.value))
            else:
                raise _unsupported(piece, "f-string part")
        return FStringLit(tuple(parts))
    if isinstance(node, (ast.List, ast.Tuple)):
        return ListLit(tuple(_expr(e) for e in node.elts))
    if isinstance(node, ast.Dict):
        if any(k is None for k in node.keys):
            raise _unsupported(node, "dict unpacking")
        return DictLit(tuple(_expr(k) for k in node.keys), tuple(_expr(v) for v in node.values))
    if isinstance(node, ast.BinOp):
        return BinOp(_BINOPS[type(node.op)], _expr(node.left), _expr(node.right))
    if isinstance(node, ast.BoolOp):
        op = "and" if isinstance(node.op, ast.And) else "or"
        result = _expr(node.values[0])
        for v in node.values[1:]:
            result = BinOp(op, result, _expr(v))
        return result
    if isinstance(node, ast.UnaryOp):
        operand = _expr(node.operand)
        if isinstance(node.op, ast.USub) and isinstance(operand, NumberLit):
            return NumberLit(-operand.value)
        return UnaryOp(_UNARY[type(node.op)], operand)
    if isinstance(node, ast.Compare):
        left = _expr(node.left)
        result = None
        for op, right_node in zip(node.ops, node.comparators):
            right = _expr(right_node)
            cmp = Compare(_CMPOPS[type(op)], left, right)
            result = cmp if result is None else BinOp("and", result, cmp)
            left = right
        return result
    if isinstance(node, ast.Subscript):
        if isinstance(node.slice, ast.Slice):
            raise _unsupported(node, "slice")
        return Subscript(_expr(node.value), _expr(node.slice))
    if isinstance(node, ast.Attribute):
        return Attribute(_expr(node.value), node.attr)
    what = {ast.Lambda: "lambda", ast.IfExp: "conditional expression",
            ast.ListComp: "comprehension", ast.SetComp: "comprehension",
            ast.DictComp: "comprehension", ast.GeneratorExp: "generator",
            ast.Await: "await", ast.Yield: "yield", ast.YieldFrom: "yield",
            ast.NamedExpr: "assignment expression", ast.Set: "set literal"}.get(type(node))
    raise _unsupported(node, what or type(node).__name__)


def _pattern(node: ast.pattern) -> DslExpr:
    if isinstance(node, ast.MatchValue):
        return _expr(node.value)
    if isinstance(node, ast.MatchSingleton):
        return NoneLit() if node.value is None else BoolLit(node.value)
    if isinstance(node, ast.MatchAs) and node.pattern is None:
        return Name(node.name or "_")
    if isinstance(node, ast.MatchOr):
        result = _pattern(node.patterns[0])
        for p in node.patterns[1:]:
            result = BinOp("|", result, _pattern(p))
        return result
    raise _unsupported(node, "match pattern")


def _body(nodes: list[ast.stmt]) -> list:
    return [_stmt(n) for n in nodes]


def _stmt(node: ast.stmt) -> DslStmt:
    span = dict(line=node.lineno, end_line=node.end_lineno)
    if isinstance(node, ast.Assign):
        if len(node.targets) != 1:
            raise _unsupported(node, "chained assignment")
        target = node.targets[0]
        if not isinstance(target, (ast.Name, ast.Subscript, ast.Attribute)):
            raise _unsupported(node, "unpacking assignment")
        return Assign(_expr(target), _expr(node.value), **span)
    if isinstance(node, ast.Expr):
        return ExprStmt(_expr(node.value), **span)
    if isinstance(node, ast.Pass):
        return Pass(**span)
    if isinstance(node, ast.If):
        cond = _expr(node.test)
        body = _body(node.body)
        elifs = []
        else_body: list = []
        orelse = node.orelse
        # An ``elif`` shows up as a lone nested If starting in the parent's column.
        while len(orelse) == 1 and isinstance(orelse[0], ast.If) \
                and orelse[0].col_offset == node.col_offset:
            inner = orelse[0]
            elifs.append((_expr(inner.test), _body(inner.body)))
            orelse = inner.orelse
        else_body = _body(orelse)
        return If(cond, body, elifs, else_body, **span)
    if isinstance(node, ast.For):
        if not isinstance(node.target, ast.Name):
            raise _unsupported(node, "loop target unpacking")
        if node.orelse:
            raise _unsupported(node, "for-else")
        return ForIn(node.target.id, _expr(node.iter), _body(node.body), **span)
    if isinstance(node, ast.While):
        if node.orelse:
            raise _unsupported(node, "while-else")
        return While(_expr(node.test), _body(node.body), **span)
    if isinstance(node, ast.Match):
        cases = []
        for c in node.cases:
            if c.guard is not None:
                raise _unsupported(c.guard, "case guard")
            cases.append(MatchCase(_pattern(c.pattern), _body(c.body)))
        return Match(_expr(node.subject), cases, **span)
    raise _unsupported(node, _STATEMENT_NAMES.get(type(node), type(node).__name__))


def _token_at(text: str | None, offset: int | None) -> str | None:
    if not text or not offset:
        return None
    rest = text[offset - 1:] if offset - 1 < len(text) else ""
    m = re.match(r"\s*(\w+|\S)", rest)
    return m.group(1) if m else None


def _standalone_comments(code: str) -> list[tuple[int, str]]:
    lines = code.splitlines()
    found = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(code).readline):
            if tok.type == tokenize.COMMENT:
                row, col = tok.start
                if lines[row - 1][:col].strip() == "":
                    found.append((row, tok.string[1:].strip()))
    except (tokenize.TokenError, IndentationError, SyntaxError):
        pass
    return found


def _bodies(stmts: list) -> Iterator[list]:
    yield stmts
    for s in stmts:
        for sub in _child_bodies(s):
            yield from _bodies(sub)


def _child_bodies(s: DslStmt) -> list[list]:
    if isinstance(s, If):
        return [s.body] + [b for _, b in s.elifs] + [s.else_body]
    if isinstance(s, (ForIn, While)):
        return [s.body]
    if isinstance(s, Match):
        return [c.body for c in s.cases]
    return []


def _attach_comments(statements: list, comments: list[tuple[int, str]]) -> None:
    # Each comment goes just before the first statement that starts after it.
    for row, text in reversed(comments):
        best = None
        for body in _bodies(statements):
            for i, s in enumerate(body):
                if not isinstance(s, Comment) and s.line > row:
                    if best is None or s.line < best[0]:
                        best = (s.line, body, i)
                    break
        if best is None:
            statements.append(Comment(text, row, row))
        else:
            _, body, i = best
            body.insert(i, Comment(text, row, row))
    # Trailing comments were appended in reverse; restore file order.
    tail = [s for s in statements if isinstance(s, Comment) and s.line > _last_line(statements)]
    if tail:
        head = [s for s in statements if s not in tail]
        statements[:] = head + sorted(tail, key=lambda c: c.line)


def _last_line(statements: list) -> int:
    lines = [s.end_line for s in statements if not isinstance(s, Comment)]
    return max(lines, default=0)


def parse(code: str) -> DslProgram:
    """Parse workflow code into a :class:`DslProgram`.

    Full-line comments are kept as :class:`Comment` statements placed before
    the statement that follows them; trailing inline comments are dropped.
    """
    try:
        module = ast.parse(code)
    except SyntaxError as exc:
        raise DslParseError(exc.msg, exc.lineno, exc.offset, _token_at(exc.text, exc.offset)) from None
    except ValueError as exc:
        raise DslParseError(str(exc)) from None
    statements = _body(module.body)
    comments = _standalone_comments(code)
    if comments:
        _attach_comments(statements, comments)
    return DslProgram(statements, [(s.line, s.end_line) for s in statements])


# -- traversal helpers -------------------------------------------------------


def iter_statements(stmts: list) -> Iterator[DslStmt]:
    """Pre-order walk over statements, nested bodies included."""
    for s in stmts:
        yield s
        for body in _child_bodies(s):
            yield from iter_statements(body)


def expr_children(e: DslExpr) -> list:
    if isinstance(e, Call):
        kids = [] if e.callee is None else [e.callee]
        return kids + list(e.args) + [v for _, v in e.kwargs]
    if isinstance(e, FStringLit):
        return [p for p in e.parts if not isinstance(p, str)]
    if isinstance(e, ListLit):
        return list(e.items)
    if isinstance(e, DictLit):
        return [x for pair in zip(e.keys, e.values) for x in pair]
    if isinstance(e, (BinOp, Compare)):
        return [e.lhs, e.rhs]
    if isinstance(e, UnaryOp):
        return [e.operand]
    if isinstance(e, Subscript):
        return [e.base, e.index]
    if isinstance(e, Attribute):
        return [e.base]
    return []


def iter_exprs(e: DslExpr) -> Iterator[DslExpr]:
    yield e
    for c in expr_children(e):
        yield from iter_exprs(c)


def statement_exprs(s: DslStmt) -> list:
    """Expressions owned directly by ``s`` (not by nested bodies), in source order."""
    if isinstance(s, Assign):
        return [s.target, s.value]
    if isinstance(s, ExprStmt):
        return [s.expr]
    if isinstance(s, If):
        return [s.cond]
    if isinstance(s, ForIn):
        return [s.iterable]
    if isinstance(s, While):
        return [s.cond]
    if isinstance(s, Match):
        return [s.subject]
    return []


def to_source(e: DslExpr) -> str:
    """Render an expression back to code."""
    if isinstance(e, Call):
        fn = e.name if e.callee is None else to_source(e.callee)
        args = [to_source(a) for a in e.args] + [f"{k}={to_source(v)}" for k, v in e.kwargs]
        return f"{fn}({', '.join(args)})"
    if isinstance(e, Name):
        return e.id
    if isinstance(e, StringLit):
        return repr(e.value)
    if isinstance(e, FStringLit):
        inner = "".join(p.replace("{", "{{").replace("}", "}}") if isinstance(p, str)
                        else "{" + to_source(p) + "}" for p in e.parts)
        return "f" + repr(inner)
    if isinstance(e, (NumberLit, BoolLit)):
        return repr(e.value)
    if isinstance(e, NoneLit):
        return "None"
    if isinstance(e, ListLit):
        return "[" + ", ".join(to_source(i) for i in e.items) + "]"
    if isinstance(e, DictLit):
        return "{" + ", ".join(f"{to_source(k)}: {to_source(v)}" for k, v in zip(e.keys, e.values)) + "}"
    if isinstance(e, (BinOp, Compare)):
        return f"({to_source(e.lhs)} {e.op} {to_source(e.rhs)})"
    if isinstance(e, UnaryOp):
        sep = " " if e.op == "not" else ""
        return f"{e.op}{sep}{to_source(e.operand)}"
    if isinstance(e, Subscript):
        return f"{to_source(e.base)}[{to_source(e.index)}]"
    if isinstance(e, Attribute):
        return f"{to_source(e.base)}.{e.attr}"
    raise TypeError(f"not an expression: {e!r}")


# -- tree bridge -------------------------------------------------------------

_CONDITIONAL = "is.workflow.actions.conditional"
_REPEAT_EACH = "is.workflow.actions.repeat.each"
_REPEAT_COUNT = "is.workflow.actions.repeat.count"
_MENU = "is.workflow.actions.choosefrommenu"


def _param(e: DslExpr):
    if isinstance(e, (StringLit, NumberLit, BoolLit)):
        return e.value
    if isinstance(e, NoneLit):
        return None
    if isinstance(e, Name):
        return Attachment(kind="Variable", variable_name=e.id)
    return to_source(e)


def _call_action(call: Call) -> RawAction:
    params = {k: _param(v) for k, v in call.kwargs}
    for i, a in enumerate(call.args):
        params[f"#{i}"] = _param(a)
    return RawAction(identifier=call.name, params=params)


def _synthetic(identifier: str, **params) -> RawAction:
    return RawAction(identifier=identifier, params=params, control_flow_mode=0)


def _lower_body(stmts: list, parent: AstNode) -> None:
    for s in stmts:
        _lower(s, parent)


def _lower_if(cond: DslExpr, body: list, elifs: list, else_body: list, parent: AstNode) -> None:
    node = parent.add(NodeKind.IF, _synthetic(_CONDITIONAL, condition=to_source(cond)))
    _lower_body(body, node)
    if elifs:
        branch = parent.add(NodeKind.ELSE, _synthetic(_CONDITIONAL))
        (c, b), rest = elifs[0], elifs[1:]
        _lower_if(c, b, rest, else_body, branch)
    elif else_body:
        branch = parent.add(NodeKind.ELSE, _synthetic(_CONDITIONAL))
        _lower_body(else_body, branch)


def _is_placeholder_case(cases: list) -> bool:
    """``case _: pass`` alone is how an empty menu is written."""
    if len(cases) != 1:
        return False
    c = cases[0]
    return c.pattern == Name("_") and all(isinstance(b, (Pass, Comment)) for b in c.body)


def _lower(s: DslStmt, parent: AstNode) -> None:
    if isinstance(s, (Assign, ExprStmt)):
        value = s.value if isinstance(s, Assign) else s.expr
        if isinstance(value, Call):
            parent.add(NodeKind.CALL, _call_action(value))
    elif isinstance(s, If):
        _lower_if(s.cond, s.body, s.elifs, s.else_body, parent)
    elif isinstance(s, ForIn):
        it = s.iterable
        if isinstance(it, Call) and it.name == "range":
            count = to_source(it.args[-1]) if it.args else "0"
            node = parent.add(NodeKind.REPEAT_COUNT, _synthetic(_REPEAT_COUNT, WFRepeatCount=count))
        else:
            node = parent.add(NodeKind.REPEAT_EACH, _synthetic(_REPEAT_EACH, WFInput=to_source(it)))
        _lower_body(s.body, node)
    elif isinstance(s, While):
        node = parent.add(NodeKind.REPEAT_EACH, _synthetic(_REPEAT_EACH, condition=to_source(s.cond)))
        _lower_body(s.body, node)
    elif isinstance(s, Match):
        node = parent.add(NodeKind.MENU, _synthetic(_MENU, WFMenuPrompt=to_source(s.subject)))
        if _is_placeholder_case(s.cases):
            return
        for case in s.cases:
            branch = node.add(NodeKind.MENU_CASE, RawAction(
                _MENU, {"WFMenuItemTitle": to_source(case.pattern)}, control_flow_mode=1))
            _lower_body(case.body, branch)
    # Pass and Comment carry no structure.


def to_ast(p: DslProgram) -> WorkflowAst:
    """Lower a parsed program onto the workflow tree vocabulary."""
    tree = WorkflowAst()
    _lower_body(p.statements, tree.root)
    return tree


# -- calls and data flow -----------------------------------------------------


class CallSite(NamedTuple):
    name: str
    keywords: tuple
    line: int


def collect_calls(p: DslProgram) -> list[CallSite]:
    """Every call expression in the program, in source order."""
    found = []
    for s in iter_statements(p.statements):
        for root in statement_exprs(s):
            for e in iter_exprs(root):
                if isinstance(e, Call):
                    found.append((e.line, e.col, CallSite(e.name, tuple(k for k, _ in e.kwargs), e.line)))
    found.sort(key=lambda t: (t[0], t[1]))
    return [c for _, _, c in found]


class DataflowEdge(NamedTuple):
    """A use of variable ``var`` reached by the definition described by ``def_site``.

    ``use_site`` and ``def_site`` describe *where* the use and definition
    happen without naming any variable, so the edge survives renaming.
    """

    var: str
    use_site: str
    def_site: str


def _name_uses(e: DslExpr, context: str) -> Iterator[tuple[str, str]]:
    """(name, context) for each variable read in ``e``, in source order."""
    if isinstance(e, Name):
        yield e.id, context
        return
    if isinstance(e, Call):
        if e.callee is not None:
            yield from _name_uses(e.callee, f"call:{e.name}:callee")
        elif "." in e.name:
            # ``obj.method()`` reads obj.
            yield e.name.split(".", 1)[0], f"call:{e.name}:callee"
        for i, a in enumerate(e.args):
            yield from _name_uses(a, f"call:{e.name}:#{i}")
        for k, v in e.kwargs:
            yield from _name_uses(v, f"call:{e.name}:{k}")
        return
    for c in expr_children(e):
        yield from _name_uses(c, context)


def _def_site(value: DslExpr) -> str:
    if isinstance(value, Call):
        return f"call:{value.name}"
    return f"value:{type(value).__name__}"


def _events(stmts: list) -> Iterator[tuple]:
    """Reads and writes in program order: ("use", name, site) / ("def", name, site)."""
    for s in stmts:
        if isinstance(s, Assign):
            yield from (("use", n, c) for n, c in _name_uses(s.value, "assign"))
            if isinstance(s.target, Name):
                yield ("def", s.target.id, _def_site(s.value))
            else:
                yield from (("use", n, c) for n, c in _name_uses(s.target, "store"))
        elif isinstance(s, ExprStmt):
            yield from (("use", n, c) for n, c in _name_uses(s.expr, "expr"))
        elif isinstance(s, If):
            yield from (("use", n, c) for n, c in _name_uses(s.cond, "if"))
            yield from _events(s.body)
            for cond, body in s.elifs:
                yield from (("use", n, c) for n, c in _name_uses(cond, "if"))
                yield from _events(body)
            yield from _events(s.else_body)
        elif isinstance(s, ForIn):
            yield from (("use", n, c) for n, c in _name_uses(s.iterable, "for"))
            yield ("def", s.var, "for")
            yield from _events(s.body)
        elif isinstance(s, While):
            yield from (("use", n, c) for n, c in _name_uses(s.cond, "while"))
            yield from _events(s.body)
        elif isinstance(s, Match):
            yield from (("use", n, c) for n, c in _name_uses(s.subject, "match"))
            for case in s.cases:
                yield from _events(case.body)


def extract_dataflow(p: DslProgram) -> list[DataflowEdge]:
    """Def-use edges with variables renamed by first definition (``v0``, ``v1``...).

    Each use is linked to the nearest preceding assignment of the same name
    in program order, ignoring branch structure. Uses with no earlier
    assignment link to a ``free`` definition; names never assigned at all are
    numbered separately (``f0``, ``f1``...). The result is sorted.
    """
    events = list(_events(p.statements))
    ids: dict[str, str] = {}
    for kind, name, _ in events:
        if kind == "def" and name not in ids:
            ids[name] = f"v{len(ids)}"
    free = 0
    for kind, name, _ in events:
        if name not in ids:
            ids[name] = f"f{free}"
            free += 1
    last_def: dict[str, str] = {}
    edges = []
    for kind, name, site in events:
        if kind == "def":
            last_def[name] = site
        else:
            edges.append(DataflowEdge(ids[name], site, last_def.get(name, "free")))
    edges.sort()
    return edges


# -- lexer -------------------------------------------------------------------

INDENT_TOKEN = "<INDENT>"
DEDENT_TOKEN = "<DEDENT>"

_STRING = r"""(?:[rRbBuUfF]{0,2})(?:'''(?:[^\\]|\\.)*?'''|\"\"\"(?:[^\\]|\\.)*?\"\"\"|'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")"""
_NUMBER = r"(?:0[xXoObB][0-9a-fA-F_]+|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[jJ]?)"
_NAME = r"[^\W\d]\w*"
_OPERATOR = r"(?:\*\*=|//=|>>=|<<=|->|:=|==|!=|<=|>=|\*\*|//|<<|>>|[-+*/%@&|^]=|[-+*/%@&|^~<>=.,:;()\[\]{}])"
_TOKEN_RE = re.compile(rf"(?P<comment>#[^\n]*)|(?P<string>{_STRING})|(?P<number>{_NUMBER})|"
                       rf"(?P<name>{_NAME})|(?P<op>{_OPERATOR})|(?P<newline>\n)|(?P<ws>[ \t\f\r]+|\\\n)|(?P<other>.)",
                       re.S)


def tokenize_code(code: str) -> list[str]:
    """Split code into metric tokens; comments dropped, indentation as INDENT/DEDENT.

    Never fails: unterminated strings or odd characters become single tokens,
    so malformed model output still gets a token-level score.
    """
    tokens: list[str] = []
    levels = [0]
    depth = 0
    at_line_start = True
    pos = 0
    n = len(code)
    while pos < n:
        if at_line_start and depth == 0:
            m = re.compile(r"[ \t\f]*").match(code, pos)
            indent_text = m.group(0)
            rest = code[m.end():m.end() + 1]
            if rest in ("\n", "#", "\r") or m.end() >= n:
                # Blank or comment-only line: no indentation change.
                pass
            else:
                width = len(indent_text.expandtabs(8))
                if width > levels[-1]:
                    levels.append(width)
                    tokens.append(INDENT_TOKEN)
                while width < levels[-1]:
                    levels.pop()
                    tokens.append(DEDENT_TOKEN)
                if width > levels[-1]:
                    levels.append(width)
            at_line_start = False
            pos = m.end()
            continue
        m = _TOKEN_RE.match(code, pos)
        kind = m.lastgroup
        text = m.group(0)
        pos = m.end()
        if kind == "newline":
            at_line_start = True
        elif kind in ("comment", "ws"):
            pass
        elif kind == "other" and text in "'\"":
            # Unterminated string: swallow to end of line.
            end = code.find("\n", pos)
            end = n if end < 0 else end
            tokens.append(text + code[pos:end])
            pos = end
        else:
            if text in "([{":
                depth += 1
            elif text in ")]}":
                depth = max(depth - 1, 0)
            tokens.append(text)
    tokens.extend(DEDENT_TOKEN for _ in levels[1:])
    return tokens
