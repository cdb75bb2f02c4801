"""Grammars for the 3-disk Hanoi action string under every calculator, and the HAR count.

    python scripts/worked_grammar_example.py
"""

from actiongram.grammar import encoding_cost, extract_macros, infer, raw_grammar
from actiongram.replay import Decision, EpisodeTrace, har_expand

ACTIONS = "bafbcdbafecfbafbcdbcfecdbafbcdb"


def to_ids(s: str) -> list[int]:
    return [ord(c) - ord("a") for c in s]


def to_letters(seq) -> str:
    return "".join(chr(ord("a") + x) for x in seq)


def show(calculator: str, k: int = 2) -> None:
    seq = to_ids(ACTIONS)
    g = infer(seq, calculator, k)
    macros = [to_letters(m.primitives) for m in extract_macros(g)]
    label = f"{calculator} (k={k})" if calculator == "k-sequitur" else calculator
    print(f"{label:16s} macros {macros}  cost {encoding_cost(g):.1f} bits "
          f"(raw {encoding_cost(raw_grammar(seq)):.1f})")


def har_example() -> int:
    """Trace 'a c a b' with c = abab; states are positions in the primitive stream."""
    trace, pos = EpisodeTrace(), 0
    for action, prims in ((0, [0]), (6, [0, 1, 0, 1]), (0, [0]), (1, [1])):
        d = Decision(action, planned=len(prims), states=[pos])
        for a in prims:
            pos += 1
            d.primitives.append(a)
            d.states.append(pos)
            d.rewards.append(-1.0)
            d.dones.append(False)
        trace.decisions.append(d)
    return len(har_expand(trace, {6: (0, 1, 0, 1)}))


if __name__ == "__main__":
    print(f"input {ACTIONS} ({len(ACTIONS)} moves)")
    show("sequitur")
    for k in (3, 4):
        show("k-sequitur", k)
    show("mdl")
    print(f"HAR on 'a c a b' with c = abab: {har_example()} experiences")
