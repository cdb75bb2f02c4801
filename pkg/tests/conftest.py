from __future__ import annotations

from actiongram.grammar import Grammar


def letters(s: str) -> list[int]:
    return [ord(c) - ord("a") for c in s]


def word(seq) -> str:
    return "".join(chr(ord("a") + x) for x in seq)


def nonoverlapping_count(seq, pattern) -> int:
    """Greedy left-to-right count of non-overlapping occurrences."""
    seq, pattern = list(seq), list(pattern)
    n, i, count = len(pattern), 0, 0
    while i + n <= len(seq):
        if seq[i:i + n] == pattern:
            count += 1
            i += n
        else:
            i += 1
    return count


def repeated_digrams(g: Grammar) -> list:
    """Digrams with two non-overlapping occurrences anywhere in the grammar."""
    counts: dict = {}
    for body in (g.start, *g.rules.values()):
        last: dict = {}
        for i in range(len(body) - 1):
            d = (body[i], body[i + 1])
            if last.get(d) == i - 1:
                continue  # overlaps the previous counted occurrence ("aaa")
            last[d] = i
            counts[d] = counts.get(d, 0) + 1
    return [d for d, c in counts.items() if c > 1]


def is_acyclic(g: Grammar) -> bool:
    state: dict[int, int] = {}

    def visit(h: int) -> bool:
        if state.get(h) == 1:
            return False
        if state.get(h) == 2:
            return True
        state[h] = 1
        ok = all(visit(s.id) for s in g.rules[h] if not s.terminal)
        state[h] = 2
        return ok

    return all(visit(h) for h in g.rules)
