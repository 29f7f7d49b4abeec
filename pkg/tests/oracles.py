"""Independent reference implementations used to cross-check the metrics.

They work from the generator's tuple structure (tests/generators.py), never
from flowforge's parser, and favour obvious loops over efficiency.
"""

from __future__ import annotations

import math


# -- n-gram BLEU ------------------------------------------------------------------


def ngram_list(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def oracle_bleu(cand, ref, max_n=4, eps=1e-9, weight=lambda g: 1.0):
    if not cand:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        c_grams = ngram_list(cand, n)
        r_grams = ngram_list(ref, n)
        if not c_grams and not r_grams:
            continue
        # Clip by pairing each candidate n-gram with an unused equal reference n-gram.
        unused = list(r_grams)
        hit = 0.0
        for g in c_grams:
            if g in unused:
                unused.remove(g)
                hit += weight(g)
        total = sum(weight(g) for g in c_grams)
        if hit > 0:
            p = hit / total
        else:
            p = eps / total if total > 0 else eps
        logs.append(math.log(p))
    if not logs:
        return 0.0
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(sum(logs) / len(logs))


# -- erased syntax subtrees -------------------------------------------------------------


def _expr_tree(e):
    tag = e[0]
    if tag == "name":
        return ("Name", ())
    if tag == "str":
        return ("StringLit", ())
    if tag == "num":
        return ("NumberLit", ())
    if tag == "call":
        kids = [_expr_tree(a) for a in e[2]]
        kids += [("Keyword", (_expr_tree(v),)) for _, v in e[3]]
        return ("Call", tuple(kids))
    if tag == "cmp":
        return (f"Compare:{e[1]}", (_expr_tree(e[2]), _expr_tree(e[3])))
    raise ValueError(tag)


def _body_tree(stmts):
    # An empty block is written with a single ``pass``.
    if not stmts:
        return ("Body", (("Pass", ()),))
    return ("Body", tuple(_stmt_tree(s) for s in stmts))


def _stmt_tree(s):
    tag = s[0]
    if tag == "assign":
        return ("Assign", (("Name", ()), _expr_tree(s[2])))
    if tag == "expr":
        return ("ExprStmt", (_expr_tree(s[1]),))
    if tag == "pass":
        return ("Pass", ())
    if tag == "if":
        kids = [_expr_tree(s[1]), _body_tree(s[2])]
        if s[3] is not None:
            kids.append(("Else", (_body_tree(s[3]),)))
        return ("If", tuple(kids))
    if tag == "for":
        return ("ForIn", (("Name", ()), _expr_tree(s[2]), _body_tree(s[3])))
    if tag == "match":
        cases = tuple(("Case", (("StringLit", ()), _body_tree(b))) for _, b in s[2])
        return ("Match", (_expr_tree(s[1]),) + cases)
    raise ValueError(tag)


def all_subtrees(prog) -> list:
    """Every subtree below the program root, one entry per occurrence."""
    out = []

    def walk(node):
        out.append(node)
        for k in node[1]:
            walk(k)

    for s in prog:
        walk(_stmt_tree(s))
    return out


def exhaustive_match(cand: list, ref: list) -> int:
    """Size of a one-to-one pairing of equal items, found by direct search."""
    used = [False] * len(cand)
    matched = 0
    for r in ref:
        for i, c in enumerate(cand):
            if not used[i] and c == r:
                used[i] = True
                matched += 1
                break
    return matched


def oracle_ast_match(cand_prog, ref_prog) -> float:
    ref = all_subtrees(ref_prog)
    if not ref:
        return 1.0
    return exhaustive_match(all_subtrees(cand_prog), ref) / len(ref)


# -- def-use edges -------------------------------------------------------------------


def _uses(e, site):
    tag = e[0]
    if tag == "name":
        return [(e[1], site)]
    if tag == "call":
        out = []
        for i, a in enumerate(e[2]):
            out += _uses(a, f"call:{e[1]}:#{i}")
        for k, v in e[3]:
            out += _uses(v, f"call:{e[1]}:{k}")
        return out
    if tag == "cmp":
        return _uses(e[2], site) + _uses(e[3], site)
    return []


def _trace(stmts, out):
    for s in stmts:
        tag = s[0]
        if tag == "assign":
            out += [("use", n, c) for n, c in _uses(s[2], "assign")]
            out.append(("def", s[1], f"call:{s[2][1]}"))
        elif tag == "expr":
            out += [("use", n, c) for n, c in _uses(s[1], "expr")]
        elif tag == "if":
            out += [("use", n, c) for n, c in _uses(s[1], "if")]
            _trace(s[2], out)
            _trace(s[3] or [], out)
        elif tag == "for":
            out += [("use", n, c) for n, c in _uses(s[2], "for")]
            out.append(("def", s[1], "for"))
            _trace(s[3], out)
        elif tag == "match":
            out += [("use", n, c) for n, c in _uses(s[1], "match")]
            for _, b in s[2]:
                _trace(b, out)
    return out


def oracle_edges(prog) -> list:
    events = _trace(prog, [])
    order_def = []
    for kind, name, _ in events:
        if kind == "def" and name not in order_def:
            order_def.append(name)
    order_free = []
    for _, name, _ in events:
        if name not in order_def and name not in order_free:
            order_free.append(name)

    def alias(name):
        if name in order_def:
            return f"v{order_def.index(name)}"
        return f"f{order_free.index(name)}"

    edges = []
    for i, (kind, name, site) in enumerate(events):
        if kind != "use":
            continue
        source = "free"
        for j in range(i - 1, -1, -1):
            if events[j][0] == "def" and events[j][1] == name:
                source = events[j][2]
                break
        edges.append((alias(name), site, source))
    return edges


def oracle_dataflow_match(cand_prog, ref_prog) -> float:
    ref = oracle_edges(ref_prog)
    if not ref:
        return 1.0
    return exhaustive_match(oracle_edges(cand_prog), ref) / len(ref)
