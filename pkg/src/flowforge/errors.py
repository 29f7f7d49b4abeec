"""Exception hierarchy shared across flowforge modules."""

from __future__ import annotations


class FlowforgeError(Exception):
    """Base class for every error raised by this package."""


# -- ingestion ---------------------------------------------------------------


class ParseError(FlowforgeError):
    """A workflow document is not well-formed XML or JSON."""

    def __init__(self, message: str, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        where = []
        if path:
            where.append(path)
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SchemaError(FlowforgeError):
    """A document parsed but does not have the expected structure."""


class BinaryPlistError(ParseError):
    """Binary (bplist00) property lists are not decoded."""


# -- transcription -----------------------------------------------------------


class TranscribeError(FlowforgeError):
    pass


class UnbalancedControlFlow(TranscribeError):
    pass


class OrphanElse(TranscribeError):
    pass


class BinaryParam(TranscribeError):
    pass


class DanglingReference(TranscribeError):
    pass


# -- workflow DSL ------------------------------------------------------------


class DslParseError(FlowforgeError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 token: str | None = None):
        self.line = line
        self.column = column
        self.token = token
        loc = f"line {line}" if line is not None else "unknown line"
        if column is not None:
            loc += f", column {column}"
        tok = f" near {token!r}" if token else ""
        super().__init__(f"{loc}: {message}{tok}")


class UnsupportedConstruct(DslParseError):
    """Valid Python that falls outside the workflow language (import, def, ...)."""


# -- registry / metrics / pipeline ---------------------------------------------


class DuplicateApi(SchemaError):
    pass


class ConfigError(FlowforgeError):
    pass


class ArgError(FlowforgeError, ValueError):
    pass


class SamplingError(FlowforgeError):
    pass


# -- gateway -----------------------------------------------------------------


class TemplateError(FlowforgeError):
    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"unfilled placeholder: {placeholder}")


class TransportError(FlowforgeError):
    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class MockMissError(TransportError):
    pass


class VerdictParseError(FlowforgeError):
    pass


class CommentParseError(FlowforgeError):
    pass


class RenameParseError(FlowforgeError):
    pass
