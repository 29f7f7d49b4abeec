"""Seeded random generators shared by property and acceptance tests.

Programs are built as plain tuples first and rendered to text afterwards, so
oracles can read the structure without going through the package's parser.
"""

from __future__ import annotations

import random

from flowforge.shortcut import RawAction, RawShortcut

FUNCS = ("is_workflow_actions_count", "is_workflow_actions_url", "get_text", "show", "alert")
KWS = ("WFInput", "WFText", "WFURL", "WFCount")
VARS = ("a", "b", "c", "d")
STRS = ("x", "0", "UpdateKit", "hello world")
CMP_OPS = ("==", "!=", "<", ">")


# -- expressions ----------------------------------------------------------------


def gen_atom(rng: random.Random):
    r = rng.random()
    if r < 0.45:
        return ("name", rng.choice(VARS))
    if r < 0.8:
        return ("str", rng.choice(STRS))
    return ("num", rng.randint(0, 9))


def gen_call(rng: random.Random):
    fn = rng.choice(FUNCS)
    n_pos = rng.choice((0, 0, 0, 1))
    args = [gen_atom(rng) for _ in range(n_pos)]
    kws = rng.sample(KWS, rng.randint(0, 2))
    return ("call", fn, args, [(k, gen_atom(rng)) for k in kws])


def gen_cond(rng: random.Random):
    v = ("name", rng.choice(VARS))
    s = ("str", rng.choice(STRS))
    if rng.random() < 0.3:
        return ("cmp", "in", s, v)
    return ("cmp", rng.choice(CMP_OPS), v, s)


# -- statements -----------------------------------------------------------------


def gen_program(rng: random.Random, max_stmts: int = 10, max_depth: int = 3) -> list:
    """A list of statements containing at most ``max_stmts`` statements in total."""
    budget = [rng.randint(1, max_stmts)]

    def block(depth: int, must: bool) -> list:
        out = []
        while budget[0] > 0 and (must and not out or rng.random() < 0.7):
            budget[0] -= 1
            out.append(stmt(depth))
        return out

    def stmt(depth: int):
        r = rng.random()
        if depth < max_depth and r < 0.12:
            return ("if", gen_cond(rng), block(depth + 1, False),
                    block(depth + 1, False) if rng.random() < 0.5 else None)
        if depth < max_depth and r < 0.2:
            it = ("call", "range", [("num", rng.randint(1, 5))], []) if rng.random() < 0.5 \
                else ("name", rng.choice(VARS))
            return ("for", rng.choice(VARS), it, block(depth + 1, False))
        if depth < max_depth and r < 0.25:
            cases = [(rng.choice(STRS), block(depth + 1, False)) for _ in range(rng.randint(1, 3))]
            return ("match", ("name", rng.choice(VARS)), cases)
        if r < 0.65:
            return ("assign", rng.choice(VARS), gen_call(rng))
        if r < 0.95:
            return ("expr", gen_call(rng))
        return ("pass",)

    prog = []
    while budget[0] > 0:
        budget[0] -= 1
        prog.append(stmt(0))
    return prog


def _q(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def render_expr(e) -> str:
    tag = e[0]
    if tag == "name":
        return e[1]
    if tag == "str":
        return _q(e[1])
    if tag == "num":
        return str(e[1])
    if tag == "call":
        parts = [render_expr(a) for a in e[2]] + [f"{k}={render_expr(v)}" for k, v in e[3]]
        return f"{e[1]}({', '.join(parts)})"
    if tag == "cmp":
        return f"{render_expr(e[2])} {e[1]} {render_expr(e[3])}"
    raise ValueError(tag)


def render_program(prog: list) -> str:
    lines: list[str] = []

    def body(stmts, depth):
        if not stmts:
            lines.append("    " * depth + "pass")
        for s in stmts:
            emit(s, depth)

    def emit(s, depth):
        pad = "    " * depth
        tag = s[0]
        if tag == "assign":
            lines.append(f"{pad}{s[1]} = {render_expr(s[2])}")
        elif tag == "expr":
            lines.append(pad + render_expr(s[1]))
        elif tag == "pass":
            lines.append(pad + "pass")
        elif tag == "if":
            lines.append(f"{pad}if {render_expr(s[1])}:")
            body(s[2], depth + 1)
            if s[3] is not None:
                lines.append(pad + "else:")
                body(s[3], depth + 1)
        elif tag == "for":
            lines.append(f"{pad}for {s[1]} in {render_expr(s[2])}:")
            body(s[3], depth + 1)
        elif tag == "match":
            lines.append(f"{pad}match {render_expr(s[1])}:")
            for pattern, b in s[2]:
                lines.append(f"{pad}    case {_q(pattern)}:")
                body(b, depth + 2)

    for s in prog:
        emit(s, 0)
    return "".join(l + "\n" for l in lines)


def random_program_text(rng: random.Random, max_stmts: int = 10) -> str:
    return render_program(gen_program(rng, max_stmts))


# -- shortcut control-flow sequences ----------------------------------------------

BLOCKS = ("is.workflow.actions.conditional", "is.workflow.actions.repeat.each",
          "is.workflow.actions.repeat.count", "is.workflow.actions.choosefrommenu")


def random_shortcut(rng: random.Random, max_len: int = 200, max_depth: int = 6) -> RawShortcut:
    """A well-nested action list of at most ``max_len`` actions."""
    actions: list[RawAction] = []
    counter = [0]
    reserved = [0]  # closing markers still owed

    def gid() -> str:
        counter[0] += 1
        return f"G{counter[0]}"

    def room(n: int) -> bool:
        return len(actions) + reserved[0] + n <= max_len

    def seq(depth: int) -> None:
        while room(1) and rng.random() < 0.75:
            r = rng.random()
            if depth < max_depth and r < 0.3 and room(2):
                block(depth)
            else:
                counter[0] += 1
                actions.append(RawAction(f"com.example.step{rng.randint(0, 4)}", {},
                                         uuid=f"U{counter[0]}"))

    def block(depth: int) -> None:
        ident = rng.choice(BLOCKS)
        g = gid()
        reserved[0] += 1
        if ident.endswith("conditional"):
            actions.append(RawAction(ident, {"WFCondition": "Equals", "WFConditionalActionString": "1"}, 0, g))
            seq(depth + 1)
            if rng.random() < 0.5 and room(2):
                actions.append(RawAction(ident, {}, 1, g))
                seq(depth + 1)
        elif ident.endswith("choosefrommenu"):
            n_cases = rng.randint(1, 3)
            titles = [f"Option {i}" for i in range(n_cases)]
            actions.append(RawAction(ident, {"WFMenuPrompt": "Pick", "WFMenuItems": titles}, 0, g))
            for t in titles:
                if not room(2):
                    break
                actions.append(RawAction(ident, {"WFMenuItemTitle": t}, 1, g))
                seq(depth + 1)
        elif ident.endswith("repeat.count"):
            actions.append(RawAction(ident, {"WFRepeatCount": rng.randint(1, 9)}, 0, g))
            seq(depth + 1)
        else:
            actions.append(RawAction(ident, {}, 0, g))
            seq(depth + 1)
        reserved[0] -= 1
        actions.append(RawAction(ident, {}, 2, g))

    seq(0)
    return RawShortcut("900", [], actions)
