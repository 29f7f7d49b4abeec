"""CodeBLEU and structural statistics for workflow code.

CodeBLEU here is the weighted sum of four scores in [0, 1]:

* token BLEU (n = 1..4, add-epsilon smoothing, brevity penalty),
* the same n-gram match with keyword tokens weighted up,
* clipped matching of erased-leaf AST subtrees,
* clipped matching of alpha-normalized def-use edges.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

from . import wfdsl
from .errors import ArgError, ConfigError, DslParseError
from .wfdsl import DslProgram

DEFAULT_WEIGHTS = (0.1, 0.1, 0.4, 0.4)
EPSILON = 1e-9
KEYWORD_WEIGHT = 5.0
KEYWORDS = frozenset({
    "if", "else", "elif", "for", "while", "in", "match", "case", "pass",
    "range", "input", "print", "and", "or", "not",
})


# -- token metrics -----------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _score(candidate: Sequence[str], reference: Sequence[str], max_n: int, weight_of,
           epsilon: float) -> float:
    if not candidate:
        return 0.0
    log_total = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        if not cand and not ref:
            # Both sequences too short for this order; it carries no evidence.
            continue
        denom = sum(weight_of(g) * c for g, c in cand.items())
        matched = sum(weight_of(g) * min(c, ref[g]) for g, c in cand.items() if g in ref)
        if matched > 0:
            precision = matched / denom
        else:
            precision = epsilon / denom if denom > 0 else epsilon
        log_total += math.log(precision)
        orders += 1
    if orders == 0:
        return 0.0
    return _brevity_penalty(len(candidate), len(reference)) * math.exp(log_total / orders)


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4,
         epsilon: float = EPSILON) -> float:
    """Sentence BLEU over token lists.

    Modified (clipped) n-gram precisions for n = 1..max_n are combined by a
    geometric mean; a zero precision is replaced by ``epsilon`` over the
    candidate n-gram count. Orders for which neither side has any n-gram are
    skipped. An empty candidate scores 0.
    """
    return _score(candidate, reference, max_n, lambda g: 1.0, epsilon)


def weighted_ngram(candidate: Sequence[str], reference: Sequence[str],
                   keyword_weight: float = KEYWORD_WEIGHT, max_n: int = 4,
                   keywords: frozenset = KEYWORDS, epsilon: float = EPSILON) -> float:
    """BLEU where each n-gram counts with the mean weight of its tokens.

    Keyword tokens weigh ``keyword_weight``, all others 1. With
    ``keyword_weight=1`` this is exactly :func:`bleu`.
    """
    def weight_of(gram):
        return sum(keyword_weight if t in keywords else 1.0 for t in gram) / len(gram)

    return _score(candidate, reference, max_n, weight_of, epsilon)


# -- syntax tree match -------------------------------------------------------


def _expr_node(e) -> tuple:
    W = wfdsl
    if isinstance(e, W.Call):
        kids = [] if e.callee is None else [_expr_node(e.callee)]
        kids += [_expr_node(a) for a in e.args]
        kids += [("Keyword", (_expr_node(v),)) for _, v in e.kwargs]
        return ("Call", tuple(kids))
    if isinstance(e, (W.BinOp, W.Compare)):
        return (f"{type(e).__name__}:{e.op}", (_expr_node(e.lhs), _expr_node(e.rhs)))
    if isinstance(e, W.UnaryOp):
        return (f"UnaryOp:{e.op}", (_expr_node(e.operand),))
    return (type(e).__name__, tuple(_expr_node(c) for c in wfdsl.expr_children(e)))


def _body_node(stmts: list) -> tuple:
    return ("Body", tuple(_stmt_node(s) for s in stmts if not isinstance(s, wfdsl.Comment)))


def _stmt_node(s) -> tuple:
    W = wfdsl
    if isinstance(s, W.Assign):
        return ("Assign", (_expr_node(s.target), _expr_node(s.value)))
    if isinstance(s, W.ExprStmt):
        return ("ExprStmt", (_expr_node(s.expr),))
    if isinstance(s, W.If):
        kids = [_expr_node(s.cond), _body_node(s.body)]
        kids += [("Elif", (_expr_node(c), _body_node(b))) for c, b in s.elifs]
        if s.else_body:
            kids.append(("Else", (_body_node(s.else_body),)))
        return ("If", tuple(kids))
    if isinstance(s, W.ForIn):
        return ("ForIn", (("Name", ()), _expr_node(s.iterable), _body_node(s.body)))
    if isinstance(s, W.While):
        return ("While", (_expr_node(s.cond), _body_node(s.body)))
    if isinstance(s, W.Match):
        cases = tuple(("Case", (_expr_node(c.pattern), _body_node(c.body))) for c in s.cases)
        return ("Match", (_expr_node(s.subject),) + cases)
    return (type(s).__name__, ())


def syntax_tree(p: DslProgram) -> tuple:
    """The program as nested ``(label, children)`` tuples with names and literals erased."""
    return ("Program", tuple(_stmt_node(s) for s in p.statements if not isinstance(s, wfdsl.Comment)))


def subtree_counts(p: DslProgram) -> Counter:
    """Multiset of every subtree below the program root, hash-consed to ints."""
    table: dict = {}
    counts: Counter = Counter()

    def visit(node: tuple) -> int:
        label, kids = node
        key = (label, tuple(visit(k) for k in kids))
        ident = table.setdefault(key, len(table))
        counts[ident] += 1
        return ident

    for child in syntax_tree(p)[1]:
        visit(child)
    # Re-key by structure so counts from different programs are comparable.
    inverse = {v: k for k, v in table.items()}

    def expand(ident: int) -> tuple:
        label, kids = inverse[ident]
        return (label, tuple(expand(k) for k in kids))

    return Counter({expand(i): c for i, c in counts.items()})


def _clipped_ratio(cand: Counter, ref: Counter, normalize: str) -> float:
    matched = sum(min(c, cand[k]) for k, c in ref.items() if k in cand)
    n_ref = sum(ref.values())
    n_cand = sum(cand.values())
    if normalize == "reference":
        return 1.0 if n_ref == 0 else matched / n_ref
    if normalize == "candidate":
        return 1.0 if n_cand == 0 else matched / n_cand
    if normalize == "symmetric":
        return 1.0 if n_ref + n_cand == 0 else 2 * matched / (n_ref + n_cand)
    raise ConfigError(f"unknown normalization {normalize!r}")


def _program(p: DslProgram | str) -> DslProgram:
    return wfdsl.parse(p) if isinstance(p, str) else p


def ast_match(candidate: DslProgram | str, reference: DslProgram | str,
              normalize: str = "reference") -> float:
    """Share of reference subtrees found in the candidate (clipped multiset match).

    A candidate that does not parse scores 0; an empty reference scores 1.
    """
    try:
        cand = _program(candidate)
    except DslParseError:
        return 0.0
    return _clipped_ratio(subtree_counts(cand), subtree_counts(_program(reference)), normalize)


def dataflow_match(candidate: DslProgram | str, reference: DslProgram | str) -> float:
    try:
        cand = _program(candidate)
    except DslParseError:
        return 0.0
    ref_edges = Counter(wfdsl.extract_dataflow(_program(reference)))
    return _clipped_ratio(Counter(wfdsl.extract_dataflow(cand)), ref_edges, "reference")


# -- combination -------------------------------------------------------------


@dataclass
class MetricReport:
    bleu: float
    weighted_ngram: float
    ast_match: float
    dataflow_match: float
    codebleu: float
    weights: tuple = DEFAULT_WEIGHTS
    candidate_unparseable: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        return d


def check_weights(weights: Sequence[float]) -> tuple:
    weights = tuple(float(w) for w in weights)
    if len(weights) != 4:
        raise ConfigError("CodeBLEU needs exactly four weights")
    if any(w < 0 for w in weights):
        raise ConfigError("weights must be non-negative")
    if abs(math.fsum(weights) - 1.0) > 1e-12:
        raise ConfigError(f"weights must sum to 1, got {math.fsum(weights)!r}")
    return weights


def combine(components: Sequence[float], weights: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    """Weighted sum of (bleu, weighted n-gram, ast match, data-flow match)."""
    w1, w2, w3, w4 = check_weights(weights)
    b, wn, a, d = components
    return w1 * b + w2 * wn + w3 * a + w4 * d


def codebleu(candidate: str, reference: str, weights: Sequence[float] = DEFAULT_WEIGHTS,
             keyword_weight: float = KEYWORD_WEIGHT, ast_normalize: str = "reference") -> MetricReport:
    """Score ``candidate`` code against ``reference`` code.

    The reference must parse. An unparseable candidate still gets the two
    token-level scores; its syntax and data-flow scores are 0 and
    ``candidate_unparseable`` is set.
    """
    weights = check_weights(weights)
    ref_prog = wfdsl.parse(reference)
    cand_tokens = wfdsl.tokenize_code(candidate)
    ref_tokens = wfdsl.tokenize_code(reference)
    b = bleu(cand_tokens, ref_tokens)
    wn = weighted_ngram(cand_tokens, ref_tokens, keyword_weight)
    try:
        cand_prog = wfdsl.parse(candidate)
    except DslParseError:
        cand_prog = None
    if cand_prog is None:
        a = d = 0.0
    else:
        a = ast_match(cand_prog, ref_prog, ast_normalize)
        d = dataflow_match(cand_prog, ref_prog)
    return MetricReport(b, wn, a, d, combine((b, wn, a, d), weights), weights, cand_prog is None)


# -- structure statistics ----------------------------------------------------


@dataclass
class ComplexityStats:
    n_actions: int = 0
    n_if: int = 0
    n_loop: int = 0
    nested_depth: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _depth(stmts: list, level: int) -> int:
    deepest = level
    for s in stmts:
        bodies = wfdsl._child_bodies(s)
        if isinstance(s, (wfdsl.If, wfdsl.ForIn, wfdsl.While, wfdsl.Match)):
            deepest = max(deepest, level + 1)
            for b in bodies:
                deepest = max(deepest, _depth(b, level + 1))
    return deepest


def complexity(p: DslProgram | str) -> ComplexityStats:
    """Count call statements, ifs (each elif included), loops, and block nesting depth.

    Top-level statements sit at depth 0; a match block adds depth but is not
    counted as an if or a loop.
    """
    p = _program(p)
    stats = ComplexityStats()
    for s in wfdsl.iter_statements(p.statements):
        if isinstance(s, wfdsl.Assign) and isinstance(s.value, wfdsl.Call):
            stats.n_actions += 1
        elif isinstance(s, wfdsl.ExprStmt) and isinstance(s.expr, wfdsl.Call):
            stats.n_actions += 1
        elif isinstance(s, wfdsl.If):
            stats.n_if += 1 + len(s.elifs)
        elif isinstance(s, (wfdsl.ForIn, wfdsl.While)):
            stats.n_loop += 1
    stats.nested_depth = _depth(p.statements, 0)
    return stats


def agreement_rate(labels_a: Sequence[bool], labels_b: Sequence[bool]) -> float:
    """Fraction of positions where two label vectors agree."""
    if len(labels_a) != len(labels_b):
        raise ArgError(f"label vectors differ in length ({len(labels_a)} vs {len(labels_b)})")
    if not labels_a:
        raise ArgError("label vectors are empty")
    return sum(bool(a) == bool(b) for a, b in zip(labels_a, labels_b)) / len(labels_a)
