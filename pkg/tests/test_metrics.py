import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from flowforge import metrics, wfdsl
from flowforge.errors import ArgError, ConfigError
from flowforge.metrics import (
    KEYWORDS, agreement_rate, ast_match, bleu, codebleu, combine, complexity, dataflow_match,
    weighted_ngram,
)

from generators import gen_program, render_program
from oracles import oracle_ast_match, oracle_bleu, oracle_dataflow_match

tokens = st.lists(st.sampled_from(["a", "b", "c", "if", "for", "(", ")", "x"]), max_size=14)


@settings(max_examples=300, deadline=None)
@given(tokens, tokens)
def test_bleu_matches_oracle(c, r):
    assert bleu(c, r) == pytest.approx(oracle_bleu(c, r), rel=1e-12, abs=0)


@settings(max_examples=300, deadline=None)
@given(tokens, tokens)
def test_weighted_ngram_matches_oracle(c, r):
    def w(g):
        return sum(5.0 if t in KEYWORDS else 1.0 for t in g) / len(g)

    assert weighted_ngram(c, r) == pytest.approx(oracle_bleu(c, r, weight=w), rel=1e-12, abs=0)


@settings(max_examples=200, deadline=None)
@given(tokens, tokens)
def test_unit_keyword_weight_is_plain_bleu(c, r):
    assert weighted_ngram(c, r, keyword_weight=1.0) == bleu(c, r)


@settings(max_examples=200, deadline=None)
@given(tokens, tokens)
def test_scores_in_unit_interval(c, r):
    assert 0.0 <= bleu(c, r) <= 1.0 + 1e-12


def test_bleu_edge_cases():
    assert bleu([], ["a"]) == 0.0
    assert bleu(["a", "b", "c", "d"], ["a", "b", "c", "d"]) == 1.0
    # A single shared token: only the unigram order has evidence on both sides.
    assert bleu(["a"], ["a"]) == 1.0


def test_brevity_penalty_value():
    c, r = ["a", "b"], ["a", "b", "c", "d"]
    # Unigram and bigram precision are 1; trigram and 4-gram orders exist only in the reference.
    p3 = p4 = 1e-9  # no candidate n-grams of that order: epsilon alone
    expected = math.exp(1 - 4 / 2) * math.exp((math.log(1) + math.log(1) + math.log(p3) + math.log(p4)) / 4)
    assert bleu(c, r) == pytest.approx(expected, rel=1e-12)


def test_codebleu_identity_on_listing(fixtures):
    code = (fixtures / "buy_kindle_book_listing.py").read_text()
    assert codebleu(code, code).codebleu == pytest.approx(1.0, abs=1e-12)


def test_renaming_keeps_dataflow_and_ast():
    a = "x = f()\ng(A=x)\n"
    b = "renamed = f()\ng(A=renamed)\n"
    r = codebleu(b, a)
    assert r.ast_match == 1.0 and r.dataflow_match == 1.0 and r.bleu < 1.0


def test_unparseable_candidate():
    r = codebleu("def (:\n", "f()\n")
    assert r.candidate_unparseable and r.ast_match == 0.0 and r.dataflow_match == 0.0


def test_weights_validation():
    with pytest.raises(ConfigError):
        combine((1, 1, 1, 1), (0.5, 0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        combine((1, 1, 1, 1), (1.0, 0.0, 0.0))
    with pytest.raises(ConfigError):
        combine((1, 1, 1, 1), (1.5, -0.5, 0.0, 0.0))


def test_combine_uniform_weights():
    assert combine((0.2, 0.4, 0.6, 0.8), (0.25,) * 4) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("normalize", ["reference", "candidate", "symmetric"])
def test_ast_normalizations(normalize):
    ref = "f()\n"
    cand = "f()\ng()\n"
    value = ast_match(cand, ref, normalize)
    assert 0.0 <= value <= 1.0
    if normalize == "reference":
        assert value == 1.0


def test_unknown_normalization():
    with pytest.raises(ConfigError):
        ast_match("f()\n", "f()\n", "weird")


def test_empty_reference_scores_one():
    assert ast_match("f()\n", "") == 1.0
    assert dataflow_match("f()\n", "") == 1.0


def test_statement_deletion_can_raise_dataflow_score():
    # Removing a statement shifts alpha-renaming, so the matched share can go up.
    ref = "b = f()\na = g()\nh(X=a)\n"
    full = "c = k()\nb = f()\na = g()\nh(X=a)\n"
    cut = "b = f()\na = g()\nh(X=a)\n"
    assert dataflow_match(full, ref) < dataflow_match(cut, ref)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_match_scores_agree_with_oracles(seed):
    rng = random.Random(seed)
    a, b = gen_program(rng), gen_program(rng)
    ta, tb = render_program(a), render_program(b)
    assert ast_match(ta, tb) == oracle_ast_match(a, b)
    assert dataflow_match(ta, tb) == oracle_dataflow_match(a, b)


def test_complexity_of_listing(fixtures):
    stats = complexity((fixtures / "buy_kindle_book_listing.py").read_text())
    assert (stats.n_actions, stats.n_if, stats.n_loop, stats.nested_depth) == (9, 2, 0, 1)


def test_complexity_counts_elif_and_nesting():
    code = "if a:\n    for i in x:\n        while y:\n            f()\nelif b:\n    g()\n"
    s = complexity(code)
    assert (s.n_actions, s.n_if, s.n_loop, s.nested_depth) == (2, 2, 2, 3)


def test_match_adds_depth_without_counting_as_branch():
    s = complexity("match x:\n    case 'a':\n        f()\n")
    assert (s.n_if, s.n_loop, s.nested_depth) == (0, 0, 1)


def test_agreement_rate():
    assert agreement_rate([True, False, True], [True, True, True]) == pytest.approx(2 / 3)
    with pytest.raises(ArgError):
        agreement_rate([True], [True, False])
    with pytest.raises(ArgError):
        agreement_rate([], [])
