"""Tools for turning shortcut workflows into a code corpus and scoring it."""

from .errors import FlowforgeError
from .metrics import codebleu, complexity
from .registry import ApiDoc, ApiRegistry, load_registry
from .shortcut import load_shortcut, parse_shortcut
from .transcriber import build_ast, transcribe
from .validator import validate, validate_code
from .wfdsl import parse

__version__ = "0.1.0"

__all__ = [
    "ApiDoc", "ApiRegistry", "FlowforgeError", "build_ast", "codebleu", "complexity",
    "load_registry", "load_shortcut", "parse", "parse_shortcut", "transcribe", "validate",
    "validate_code",
]
