"""API documentation records and the registry that indexes them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import DuplicateApi, SchemaError

BUILTIN_APP_ID = "is.workflow.actions"

_MISSING = object()


@dataclass(frozen=True)
class ApiParam:
    name: str
    type: str = ""
    default: Any = None
    required: bool = False
    has_default: bool = field(default=False, compare=True, repr=False)

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type,
                "default": self.default if self.has_default else None,
                "required": self.required}


@dataclass(frozen=True)
class ApiDoc:
    id: str
    app_id: str
    name: str = ""
    description: str = ""
    params: tuple[ApiParam, ...] = ()
    return_type: str | None = None
    return_name: str | None = None

    @property
    def function_name(self) -> str:
        """The name workflow code calls this API by."""
        return underscore(self.id)

    def param(self, name: str) -> ApiParam | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "app_id": self.app_id,
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "return_type": self.return_type,
            "return_name": self.return_name,
        }

    def to_prompt(self) -> str:
        """A Python-style stub used when showing the API to a model."""
        args = []
        for p in self.params:
            arg = f"{p.name}: {p.type}" if p.type else p.name
            if p.has_default:
                arg += f" = {p.default!r}"
            args.append(arg)
        ret = f" -> {self.return_type}" if self.return_type else ""
        lines = [f"def {self.function_name}({', '.join(args)}){ret}:"]
        doc = self.description or self.name
        if self.return_name:
            doc = f"{doc}\nReturns: {self.return_name}" if doc else f"Returns: {self.return_name}"
        if doc:
            lines.append(f'    """{doc}"""')
        else:
            lines.append("    ...")
        return "\n".join(lines)


def underscore(api_id: str) -> str:
    return api_id.replace(".", "_")


@dataclass
class ApiRegistry:
    docs: dict[str, ApiDoc] = field(default_factory=dict)
    apps: dict[str, list[str]] = field(default_factory=dict)
    builtin_app_id: str = BUILTIN_APP_ID
    _by_function: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_docs(cls, docs: Iterable[ApiDoc], builtin_app_id: str = BUILTIN_APP_ID) -> "ApiRegistry":
        reg = cls(builtin_app_id=builtin_app_id)
        for doc in docs:
            if doc.id in reg.docs:
                raise DuplicateApi(f"duplicate API id {doc.id!r}")
            fn = doc.function_name
            if fn in reg._by_function:
                raise DuplicateApi(f"API ids {reg._by_function[fn]!r} and {doc.id!r} "
                                   f"both map to {fn!r}")
            if len({p.name for p in doc.params}) != len(doc.params):
                raise SchemaError(f"{doc.id}: repeated parameter name")
            reg.docs[doc.id] = doc
            reg._by_function[fn] = doc.id
            reg.apps.setdefault(doc.app_id, []).append(doc.id)
        return reg

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs.values())

    def get(self, api_id: str) -> ApiDoc | None:
        return self.docs.get(api_id)

    def lookup(self, function_name: str) -> ApiDoc | None:
        """Find the doc whose id, dots replaced by underscores, equals ``function_name``."""
        api_id = self._by_function.get(function_name)
        return self.docs[api_id] if api_id is not None else None

    def is_builtin(self, doc: ApiDoc) -> bool:
        return is_builtin(doc, self.builtin_app_id)

    def builtin_docs(self) -> list[ApiDoc]:
        return [d for d in self.docs.values() if self.is_builtin(d)]

    def third_party_apps(self) -> list[str]:
        return [a for a in self.apps if a != self.builtin_app_id]


def is_builtin(doc: ApiDoc, builtin_app_id: str = BUILTIN_APP_ID) -> bool:
    return bool(doc.app_id) and doc.app_id == builtin_app_id


# -- JSON form ---------------------------------------------------------------


def _require(entry: dict, key: str, kind, where: str, optional: bool = False):
    value = entry.get(key, _MISSING)
    if value is _MISSING or value is None:
        if optional:
            return None
        raise SchemaError(f"{where}: missing {key!r}")
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: {key!r} must be {kind.__name__}")
    return value


def _param_from_dict(entry: Any, where: str) -> ApiParam:
    if not isinstance(entry, dict):
        raise SchemaError(f"{where}: parameter must be an object")
    name = _require(entry, "name", str, where)
    ptype = _require(entry, "type", str, where, optional=True) or ""
    required = entry.get("required", False)
    if not isinstance(required, bool):
        raise SchemaError(f"{where}: 'required' must be a boolean")
    has_default = entry.get("default") is not None
    if has_default and required:
        raise SchemaError(f"{where}: parameter {name!r} has a default but is marked required")
    return ApiParam(name, ptype, entry.get("default"), required, has_default)


def doc_from_dict(entry: Any) -> ApiDoc:
    if not isinstance(entry, dict):
        raise SchemaError("each API entry must be an object")
    api_id = _require(entry, "id", str, "api")
    where = f"api {api_id!r}"
    params = entry.get("params", [])
    if not isinstance(params, list):
        raise SchemaError(f"{where}: 'params' must be a list")
    return ApiDoc(
        id=api_id,
        app_id=_require(entry, "app_id", str, where),
        name=_require(entry, "name", str, where, optional=True) or "",
        description=_require(entry, "description", str, where, optional=True) or "",
        params=tuple(_param_from_dict(p, where) for p in params),
        return_type=_require(entry, "return_type", str, where, optional=True),
        return_name=_require(entry, "return_name", str, where, optional=True),
    )


def registry_from_dict(doc: Any, builtin_app_id: str = BUILTIN_APP_ID) -> ApiRegistry:
    if not isinstance(doc, dict) or not isinstance(doc.get("apis"), list):
        raise SchemaError('registry must be an object with an "apis" list')
    return ApiRegistry.from_docs((doc_from_dict(e) for e in doc["apis"]), builtin_app_id)


def registry_to_dict(r: ApiRegistry) -> dict:
    return {"apis": [d.to_dict() for d in r.docs.values()]}


def loads_registry(text: str | bytes, builtin_app_id: str = BUILTIN_APP_ID) -> ApiRegistry:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"registry is not valid JSON: {exc}") from None
    return registry_from_dict(doc, builtin_app_id)


def dumps_registry(r: ApiRegistry) -> str:
    return json.dumps(registry_to_dict(r), indent=2, ensure_ascii=False) + "\n"


def load_registry(source: str | Path, builtin_app_id: str = BUILTIN_APP_ID) -> ApiRegistry:
    return loads_registry(Path(source).read_text(encoding="utf-8"), builtin_app_id)


def save_registry(r: ApiRegistry, sink: str | Path) -> None:
    Path(sink).write_text(dumps_registry(r), encoding="utf-8")
