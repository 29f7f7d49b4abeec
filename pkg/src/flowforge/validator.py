"""Rule-based quality checks for model-written workflows.

Three rules run in order:

1. the response must contain a code block that parses as workflow code;
2. every called function must be a provided API or an allowed builtin, and at
   least one provided API must be used;
3. calls to documented APIs must use known parameter names, supply required
   parameters, and pass literals of the declared type.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Iterable

from . import wfdsl
from .errors import DslParseError, UnsupportedConstruct
from .registry import ApiDoc, underscore

NO_CODE = "NoCode"
HALLUCINATED_API = "HallucinatedApi"
PARAM_VIOLATION = "ParamViolation"
UNSUPPORTED_CONSTRUCT = "UnsupportedConstruct"
_RULE_ORDER = {NO_CODE: 0, UNSUPPORTED_CONSTRUCT: 1, HALLUCINATED_API: 2, PARAM_VIOLATION: 3}

DEFAULT_ALLOWLIST = frozenset({"input", "print", "range", "str", "len"})

# Declared parameter types we know how to compare literals against.
_TYPE_FAMILIES = {
    "text": "text", "string": "text", "str": "text",
    "integer": "integer", "int": "integer",
    "number": "number", "float": "number", "real": "number", "double": "number",
    "boolean": "boolean", "bool": "boolean",
}


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    line: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": [v.to_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


_FENCE = re.compile(r"```([^\n`]*)\n(.*?)```", re.S)


def extract_code_block(response: str) -> str | None:
    """Code from the first ```python block after ``Code:``, else the first fenced block."""
    marker = re.search(r"Code\s*:", response)
    if marker:
        for m in _FENCE.finditer(response, marker.end()):
            if m.group(1).strip().lower() in ("python", "py"):
                return m.group(2).rstrip("\n")
    m = _FENCE.search(response)
    return m.group(2).rstrip("\n") if m else None


def _literal_family(e) -> str | None:
    if isinstance(e, (wfdsl.StringLit, wfdsl.FStringLit)):
        return "text"
    if isinstance(e, wfdsl.BoolLit):
        return "boolean"
    if isinstance(e, wfdsl.NumberLit):
        return "integer" if isinstance(e.value, int) else "number"
    return None


def _type_conflict(declared: str, literal: str) -> bool:
    family = _TYPE_FAMILIES.get(declared.strip().lower())
    if family is None:
        return False
    if family == "number":
        return literal not in ("integer", "number")
    return family != literal


def _all_calls(program: wfdsl.DslProgram) -> list[wfdsl.Call]:
    calls = []
    for s in wfdsl.iter_statements(program.statements):
        for root in wfdsl.statement_exprs(s):
            calls.extend(e for e in wfdsl.iter_exprs(root) if isinstance(e, wfdsl.Call))
    calls.sort(key=lambda c: (c.line, c.col))
    return calls


def _check_params(call: wfdsl.Call, doc: ApiDoc, fn: str) -> Iterable[Violation]:
    bound: dict[str, object] = {}
    for i, arg in enumerate(call.args):
        if i >= len(doc.params):
            yield Violation(PARAM_VIOLATION, f"{fn}: too many positional arguments", call.line)
            break
        bound[doc.params[i].name] = arg
    for key, value in call.kwargs:
        if doc.param(key) is None:
            yield Violation(PARAM_VIOLATION, key, call.line)
            continue
        bound[key] = value
    for p in doc.params:
        if p.required and p.name not in bound:
            yield Violation(PARAM_VIOLATION, f"{fn}: missing required parameter {p.name}", call.line)
    for name, value in bound.items():
        family = _literal_family(value)
        declared = doc.param(name).type
        if family is not None and declared and _type_conflict(declared, family):
            yield Violation(PARAM_VIOLATION, f"{name}: expected {declared}, got {family} literal",
                            call.line)


def _sort_key(v: Violation):
    return (v.line is None, v.line or 0, _RULE_ORDER[v.rule], v.detail)


def validate_code(code: str | None, provided_apis: Iterable[ApiDoc],
                  allow: Iterable[str] = DEFAULT_ALLOWLIST,
                  require_all_apis: bool = False) -> ValidationReport:
    """Run the rule chain on bare workflow code (``None`` means no code at all)."""
    if code is None or not code.strip():
        return ValidationReport([Violation(NO_CODE, "response contains no code block")])
    try:
        program = wfdsl.parse(code)
    except UnsupportedConstruct as exc:
        return ValidationReport([Violation(UNSUPPORTED_CONSTRUCT, exc.token or str(exc), exc.line)])
    except DslParseError as exc:
        return ValidationReport([Violation(NO_CODE, f"code does not parse: {exc}", exc.line)])

    provided = {d.function_name: d for d in provided_apis}
    allow = set(allow)
    violations: list[Violation] = []
    used: set[str] = set()
    for call in _all_calls(program):
        fn = underscore(call.name)
        doc = provided.get(fn)
        if doc is not None:
            used.add(fn)
            violations.extend(_check_params(call, doc, fn))
        elif call.name not in allow:
            violations.append(Violation(HALLUCINATED_API, fn, call.line))
    if not used:
        violations.append(Violation(HALLUCINATED_API, "no provided API used"))
    elif require_all_apis:
        for fn in sorted(set(provided) - used):
            violations.append(Violation(HALLUCINATED_API, f"provided API not used: {fn}"))
    violations.sort(key=_sort_key)
    return ValidationReport(violations)


def validate(response: str, provided_apis: Iterable[ApiDoc],
             allow: Iterable[str] = DEFAULT_ALLOWLIST,
             require_all_apis: bool = False) -> ValidationReport:
    """Validate a raw model response (code is pulled out of its fenced block first)."""
    return validate_code(extract_code_block(response), provided_apis, allow, require_all_apis)
