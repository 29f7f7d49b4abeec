"""Reading shortcut property lists (XML or JSON form) into flat action lists."""

from __future__ import annotations

import ast
import datetime as _dt
import io
import json
import plistlib
import re
import xml.parsers.expat
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Union

from .errors import BinaryPlistError, ParseError, SchemaError

ACTIONS_KEY = "WFWorkflowActions"
IDENTIFIER_KEY = "WFWorkflowActionIdentifier"
PARAMETERS_KEY = "WFWorkflowActionParameters"
MODE_KEY = "WFControlFlowMode"
GROUPING_KEY = "GroupingIdentifier"
UUID_KEY = "UUID"

# Attachment types that point at something other than a prior action's output.
INPUT_ATTACHMENT_TYPES = frozenset({
    "Ask", "Variable", "ExtensionInput", "ShortcutInput", "Clipboard",
    "CurrentDate", "DeviceDetails", "Input",
})

_BYTES_REPR = re.compile(r"""^b(?:'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")$""", re.S)


@dataclass(frozen=True)
class Binary:
    """An opaque byte payload. Never rendered into workflow code."""

    data: bytes

    @property
    def length(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Attachment:
    """A parameter that refers to another action's output or to user input.

    ``kind`` is the attachment ``Type`` (``ActionOutput``, ``Ask``, ``Variable``...).
    ``raw`` keeps the original mapping so the value can be written back unchanged.
    """

    kind: str
    output_uuid: str | None = None
    output_name: str | None = None
    variable_name: str | None = None
    prompt: str | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)


ParamValue = Union[str, int, float, bool, None, list, dict, Binary, Attachment]


@dataclass(frozen=True)
class RawAction:
    identifier: str
    params: dict[str, Any] = field(default_factory=dict)
    control_flow_mode: int | None = None
    grouping_id: str | None = None
    uuid: str | None = None


@dataclass(frozen=True)
class RawShortcut:
    client_version: str = ""
    workflow_types: list[str] = field(default_factory=list)
    actions: list[RawAction] = field(default_factory=list)
    # Remaining top-level keys, kept only so the document can be re-emitted.
    extra: dict = field(default_factory=dict, compare=False, repr=False)


# -- value decoding ----------------------------------------------------------


def _as_attachment(value: dict) -> Attachment | None:
    inner = value.get("Value")
    if isinstance(inner, dict) and isinstance(inner.get("Type"), str):
        kind = inner["Type"]
        if kind == "ActionOutput" and isinstance(inner.get("OutputUUID"), str):
            return Attachment(
                kind=kind,
                output_uuid=inner["OutputUUID"],
                output_name=inner.get("OutputName"),
                raw=value,
            )
        if "OutputUUID" in inner and isinstance(inner["OutputUUID"], str):
            return Attachment(kind=kind, output_uuid=inner["OutputUUID"],
                              output_name=inner.get("OutputName"), raw=value)
        if kind in INPUT_ATTACHMENT_TYPES:
            prompt = inner.get("Prompt")
            return Attachment(
                kind=kind,
                variable_name=inner.get("VariableName"),
                prompt=prompt if isinstance(prompt, str) else None,
                raw=value,
            )
        return None
    # Conditional inputs wrap the attachment one level deeper.
    if value.get("Type") == "Variable" and isinstance(value.get("Variable"), dict):
        nested = _as_attachment(value["Variable"])
        if nested is not None:
            return Attachment(nested.kind, nested.output_uuid, nested.output_name,
                              nested.variable_name, nested.prompt, raw=value)
    return None


def decode_value(value: Any) -> ParamValue:
    """Convert a plist/JSON value into the tagged ``ParamValue`` form."""
    if isinstance(value, (bytes, bytearray)):
        return Binary(bytes(value))
    if isinstance(value, bool) or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        if _BYTES_REPR.match(value):
            try:
                data = ast.literal_eval(value)
            except (ValueError, SyntaxError):
                return value
            if isinstance(data, bytes):
                return Binary(data)
        return value
    if isinstance(value, _dt.datetime):
        return value.isoformat()
    if isinstance(value, dict):
        att = _as_attachment(value)
        if att is not None:
            return att
        return {str(k): decode_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [decode_value(v) for v in value]
    if value is None:
        return None
    raise SchemaError(f"unsupported value type {type(value).__name__}")


def encode_value(value: ParamValue) -> Any:
    """Inverse of :func:`decode_value` for the JSON form."""
    if isinstance(value, Binary):
        return repr(value.data)
    if isinstance(value, Attachment):
        return value.raw
    if isinstance(value, dict):
        return {k: encode_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [encode_value(v) for v in value]
    return value


def _json_default(obj: Any) -> Any:
    if isinstance(obj, (bytes, bytearray)):
        return repr(bytes(obj))
    if isinstance(obj, _dt.datetime):
        return obj.isoformat()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


# -- document level ----------------------------------------------------------


def _read_bytes(source: bytes | str | BinaryIO) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        return source.encode("utf-8")
    return source.read()


def _line_col_to_offset(data: bytes, line: int, col: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: max(line - 1, 0)]) + col


def _load_document(data: bytes, fmt: str | None, path: str | None) -> Any:
    if data.startswith(b"bplist00"):
        raise BinaryPlistError("binary property lists are not supported", 0, path)
    if fmt is None:
        fmt = "xml" if data.lstrip()[:1] == b"<" else "json"
    if fmt in ("xml", "xml-plist", "plist"):
        try:
            return plistlib.load(io.BytesIO(data), fmt=plistlib.FMT_XML)
        except xml.parsers.expat.ExpatError as exc:
            raise ParseError(f"malformed XML: {xml.parsers.expat.errors.messages.get(exc.code, exc)}",
                             _line_col_to_offset(data, exc.lineno, exc.offset), path) from exc
        except (ValueError, plistlib.InvalidFileException) as exc:
            raise ParseError(f"malformed property list: {exc}", None, path) from exc
    if fmt == "json":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("document is not valid UTF-8", exc.start, path) from exc
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            offset = len(text[: exc.pos].encode("utf-8"))
            raise ParseError(f"malformed JSON: {exc.msg}", offset, path) from exc
    raise ValueError(f"unknown format {fmt!r}")


def _build_action(index: int, entry: Any) -> RawAction:
    if not isinstance(entry, dict):
        raise SchemaError(f"action {index}: expected a mapping")
    ident = entry.get(IDENTIFIER_KEY)
    if not isinstance(ident, str) or not ident:
        raise SchemaError(f"action {index}: missing {IDENTIFIER_KEY}")
    raw_params = entry.get(PARAMETERS_KEY, {})
    if not isinstance(raw_params, dict):
        raise SchemaError(f"action {index}: {PARAMETERS_KEY} must be a mapping")

    params = dict(raw_params)
    mode = params.pop(MODE_KEY, None)
    grouping = params.pop(GROUPING_KEY, None)
    uuid = params.pop(UUID_KEY, None)
    if mode is not None:
        try:
            mode = int(mode)
        except (TypeError, ValueError):
            raise SchemaError(f"action {index}: bad {MODE_KEY} {mode!r}") from None
        if mode not in (0, 1, 2):
            raise SchemaError(f"action {index}: {MODE_KEY} must be 0, 1 or 2")
        if grouping is None:
            raise SchemaError(f"action {index}: control flow action without {GROUPING_KEY}")
    return RawAction(
        identifier=ident,
        params={str(k): decode_value(v) for k, v in params.items()},
        control_flow_mode=mode,
        grouping_id=None if grouping is None else str(grouping),
        uuid=None if uuid is None else str(uuid),
    )


def parse_shortcut(source: bytes | str | BinaryIO, format: str | None = None,
                   path: str | None = None) -> RawShortcut:
    """Parse an XML-plist or JSON shortcut document.

    ``format`` is ``"xml"`` or ``"json"``; when omitted it is sniffed from the
    first non-blank byte. Control-flow keys (mode, grouping id, UUID) are
    lifted out of each action's parameter map.
    """
    data = _read_bytes(source)
    doc = _load_document(data, format, path)
    if not isinstance(doc, dict) or not isinstance(doc.get(ACTIONS_KEY), list):
        raise SchemaError(f"{path + ': ' if path else ''}top level must be a mapping with a "
                          f"{ACTIONS_KEY} list")
    actions = [_build_action(i, a) for i, a in enumerate(doc[ACTIONS_KEY])]
    types = doc.get("WFWorkflowTypes", [])
    if not isinstance(types, list):
        raise SchemaError("WFWorkflowTypes must be a list")
    extra = {k: v for k, v in doc.items()
             if k not in (ACTIONS_KEY, "WFWorkflowClientVersion", "WFWorkflowTypes")}
    return RawShortcut(
        client_version=str(doc.get("WFWorkflowClientVersion", "")),
        workflow_types=[str(t) for t in types],
        actions=actions,
        extra=extra,
    )


def load_shortcut(path: str | Path) -> RawShortcut:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else None
    return parse_shortcut(path.read_bytes(), fmt, str(path))


def shortcut_to_dict(s: RawShortcut) -> dict:
    actions = []
    for a in s.actions:
        params = {k: encode_value(v) for k, v in a.params.items()}
        if a.control_flow_mode is not None:
            params[MODE_KEY] = a.control_flow_mode
        if a.grouping_id is not None:
            params[GROUPING_KEY] = a.grouping_id
        if a.uuid is not None:
            params[UUID_KEY] = a.uuid
        actions.append({IDENTIFIER_KEY: a.identifier, PARAMETERS_KEY: params})
    doc = {"WFWorkflowClientVersion": s.client_version, "WFWorkflowTypes": list(s.workflow_types)}
    doc.update(s.extra)
    doc[ACTIONS_KEY] = actions
    return doc


def serialize_shortcut(s: RawShortcut) -> bytes:
    """Emit the JSON form of ``s``; binary payloads are written as ``b'...'`` reprs."""
    return json.dumps(shortcut_to_dict(s), indent=2, ensure_ascii=False,
                      default=_json_default).encode("utf-8")


def _contains_binary(value: ParamValue) -> bool:
    if isinstance(value, Binary):
        return True
    if isinstance(value, dict):
        return any(_contains_binary(v) for v in value.values())
    if isinstance(value, list):
        return any(_contains_binary(v) for v in value)
    return False


def scan_binary_params(s: RawShortcut) -> list[tuple[int, str]]:
    """List every (action index, param key) whose value holds a binary blob."""
    hits = []
    for i, action in enumerate(s.actions):
        for key in sorted(action.params):
            if _contains_binary(action.params[key]):
                hits.append((i, key))
    return hits
