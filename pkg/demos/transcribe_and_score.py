"""Transcribe a shortcut, check it against a registry and score it.

    python3 demos/transcribe_and_score.py
"""

import json
from pathlib import Path

import flowforge

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

shortcut = flowforge.load_shortcut(FIX / "buy_kindle_book.plist")
names = json.loads((FIX / "buy_kindle_book_names.json").read_text())
code = flowforge.transcribe(shortcut, names)
print(code)

registry = flowforge.load_registry(FIX / "reference_registry.json")
report = flowforge.validate_code(code, list(registry))
print("validator:", "pass" if report.passed else [v.rule for v in report.violations])

c = flowforge.complexity(code)
print(f"actions={c.n_actions} if={c.n_if} loop={c.n_loop} depth={c.nested_depth}")

# Score the default-name transcription against the named one.
plain = flowforge.transcribe(shortcut)
score = flowforge.codebleu(plain, code)
print(f"codebleu={score.codebleu:.4f} (bleu={score.bleu:.3f} weighted={score.weighted_ngram:.3f} "
      f"ast={score.ast_match:.3f} dataflow={score.dataflow_match:.3f})")
