import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actiongram.grammar import (
    Grammar,
    N,
    T,
    encoding_cost,
    extract_macros,
    flatten,
    infer,
    k_sequitur_infer,
    mdl_filter,
    raw_grammar,
    sequitur_infer,
)
from conftest import is_acyclic, letters, nonoverlapping_count, repeated_digrams, word

HANOI_STRING = "bafbcdbafecfbafbcdbcfecdbafbcdb"


def macro_words(g):
    return {word(m.primitives) for m in extract_macros(g)}


def sequences(max_len=300):
    return st.integers(2, 10).flatmap(
        lambda a: st.lists(st.integers(0, a - 1), min_size=1, max_size=max_len))


# --- sequitur ----------------------------------------------------------------


def test_abab_factors_ab():
    g = sequitur_infer(letters("abab"))
    assert len(g.rules) == 1
    (head, body), = g.rules.items()
    assert body == (T(0), T(1))
    assert g.start == (N(head), N(head))


def test_no_repeats_gives_no_rules():
    g = sequitur_infer(letters("abcdef"))
    assert g.rules == {}
    assert [s.id for s in g.start] == letters("abcdef")


def test_hanoi_worked_example():
    g = sequitur_infer(letters(HANOI_STRING))
    assert macro_words(g) == {"bc", "ec", "baf", "bafbcd"}
    assert g.expand() == letters(HANOI_STRING)


def test_hanoi_worked_example_rule_structure():
    g = sequitur_infer(letters(HANOI_STRING))
    by_word = {word(flatten(g, h)): h for h in g.rules}
    j = g.rules[by_word["bafbcd"]]
    # J -> I G d with I -> baf and G -> bc
    assert j == (N(by_word["baf"]), N(by_word["bc"]), T(3))


def test_empty_input_rejected():
    with pytest.raises(ValueError, match="empty input"):
        sequitur_infer([])
    with pytest.raises(ValueError, match="empty input"):
        mdl_filter([])


def test_overlapping_run():
    g = sequitur_infer([0, 0, 0])
    assert g.rules == {}
    g = sequitur_infer([0] * 4)
    assert macro_words(g) == {"aa"}
    assert g.expand() == [0] * 4


def test_nonterminal_ids_disjoint_from_terminals():
    seq = letters(HANOI_STRING)
    g = sequitur_infer(seq)
    assert not set(g.rules) & set(seq)
    assert min(g.rules) > max(seq)


def test_deterministic():
    seq = letters(HANOI_STRING * 3)
    assert sequitur_infer(seq) == sequitur_infer(list(seq))


@settings(max_examples=200, deadline=None)
@given(sequences())
def test_sequitur_invariants(seq):
    g = sequitur_infer(seq)
    assert g.expand() == seq
    assert repeated_digrams(g) == []
    assert all(c >= 2 for c in g.references().values())
    assert all(len(body) >= 2 for body in g.rules.values())
    assert is_acyclic(g)


# --- k-sequitur ---------------------------------------------------------------


def test_k3_keeps_triple_repeat():
    g = k_sequitur_infer(letters("ababab"), 3)
    assert list(g.rules.values()) == [(T(0), T(1))]


def test_k3_drops_double_repeats():
    assert k_sequitur_infer(letters("ababcdcd"), 3).rules == {}


def substrings_repeating(seq, k):
    """Brute force: every substring (length >= 2) with k non-overlapping occurrences."""
    out = set()
    for i, j in itertools.combinations(range(len(seq) + 1), 2):
        if j - i >= 2 and nonoverlapping_count(seq, seq[i:j]) >= k:
            out.add(tuple(seq[i:j]))
    return out


def test_k4_single_rule_matches_bruteforce():
    seq = letters("abababab" + "cdcd")
    assert substrings_repeating(seq, 4) == {(0, 1)}
    g = k_sequitur_infer(seq, 4)
    assert list(g.rules.values()) == [(T(0), T(1))]


@pytest.mark.parametrize("k", [1, 0, -3])
def test_invalid_k(k):
    with pytest.raises(ValueError, match="invalid k"):
        k_sequitur_infer([0, 1], k)


@settings(max_examples=100, deadline=None)
@given(sequences(200), st.integers(2, 6))
def test_k_sequitur_invariants(seq, k):
    g = k_sequitur_infer(seq, k)
    assert g.expand() == seq
    assert all(c >= k for c in g.references().values())
    for m in extract_macros(g):
        assert nonoverlapping_count(seq, m.primitives) >= k


# --- MDL ----------------------------------------------------------------------


def test_cost_raw_abab():
    assert encoding_cost(raw_grammar(letters("abab"))) == 4.0


def test_cost_factored_abab():
    g = Grammar((N(2), N(2)), {2: (T(0), T(1))})
    assert encoding_cost(g) == pytest.approx(5 * math.log2(3))
    assert encoding_cost(g) == pytest.approx(7.92, abs=5e-3)


def test_cost_single_symbol_floor():
    assert encoding_cost(raw_grammar([0, 0, 0, 0])) == 4.0


def test_mdl_rejects_tiny_input():
    assert mdl_filter(letters("abab")).rules == {}


def test_mdl_accepts_long_repeat():
    seq = letters("ab" * 64)
    g = mdl_filter(seq)
    assert "ab" in macro_words(g)
    assert encoding_cost(g) < encoding_cost(raw_grammar(seq))
    assert g.expand() == seq


@settings(max_examples=150, deadline=None)
@given(sequences())
def test_mdl_never_above_raw(seq):
    g = mdl_filter(seq)
    assert g.expand() == seq
    assert encoding_cost(g) <= encoding_cost(raw_grammar(seq))
    assert all(c >= 2 for c in g.references().values())


@settings(max_examples=60, deadline=None)
@given(sequences(120))
def test_mdl_kept_rules_each_pay_off(seq):
    """Dropping any single kept rule must not make the grammar cheaper."""
    from actiongram.grammar import restrict

    g = mdl_filter(seq)
    cost = encoding_cost(g)
    for h in g.rules:
        # an inner rule may only pay off because a parent references it; judge leaves
        if any(not s.terminal for s in g.rules[h]):
            continue
        assert encoding_cost(restrict(g, set(g.rules) - {h})) >= cost - 1e-9


# --- flatten / macros ------------------------------------------------------------


def test_flatten_nested():
    g = Grammar((N(8), N(8)), {6: (T(1), T(0), T(5)), 7: (T(1), T(2)), 8: (N(6), N(7), T(3))})
    assert word(flatten(g, 8)) == "bafbcd"
    assert word(flatten(g, 7)) == "bc"


def test_flatten_unknown_head():
    with pytest.raises(KeyError):
        flatten(sequitur_infer(letters("abab")), 99)


def test_flatten_is_idempotent():
    g = sequitur_infer(letters(HANOI_STRING))
    for h in g.rules:
        assert flatten(g, h) == flatten(g, h)


def test_extract_macros_empty():
    assert extract_macros(raw_grammar([0, 1, 2])) == []


def test_extract_macros_dedups():
    g = Grammar((N(5), N(6), N(5), N(6)), {5: (T(0), T(1)), 6: (T(0), T(1))})
    macros = extract_macros(g)
    assert [m.primitives for m in macros] == [(0, 1)]


@settings(max_examples=100, deadline=None)
@given(sequences(), st.sampled_from(["sequitur", "k-sequitur", "mdl"]))
def test_macros_are_substrings(seq, calc):
    g = infer(seq, calc, 3)
    for m in extract_macros(g):
        assert len(m) >= 2
        assert nonoverlapping_count(seq, m.primitives) >= 2


def test_unknown_calculator():
    with pytest.raises(ValueError):
        infer([0, 1], "lzw")
