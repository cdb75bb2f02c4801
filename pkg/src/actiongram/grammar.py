"""Grammar induction over action sequences.

Sequitur builds a context-free grammar online, keeping two invariants:
no digram appears twice (digram uniqueness) and every rule is referenced
at least twice (rule utility). The k and MDL calculators reuse the
Sequitur grammar and keep only the rules that pass a stricter test.

Terminal ids are the caller's integers (primitive actions, plus any
negative separators). Nonterminal ids are allocated above the largest
terminal so the two ranges never collide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log2
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence


class Symbol(NamedTuple):
    id: int
    terminal: bool

    def __repr__(self) -> str:
        return f"{self.id}" if self.terminal else f"R{self.id}"


def T(i: int) -> Symbol:
    return Symbol(i, True)


def N(i: int) -> Symbol:
    return Symbol(i, False)


@dataclass(frozen=True)
class MacroAction:
    primitives: tuple[int, ...]
    source: int = -1

    def __len__(self) -> int:
        return len(self.primitives)


@dataclass(frozen=True)
class Grammar:
    start: tuple[Symbol, ...]
    rules: Mapping[int, tuple[Symbol, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "rules", MappingProxyType(dict(self.rules)))

    def expand(self) -> list[int]:
        out: list[int] = []
        for s in self.start:
            out.extend(flatten(self, s.id) if not s.terminal else (s.id,))
        return out

    def references(self) -> dict[int, int]:
        """Number of times each nonterminal is referenced in start and bodies."""
        refs = {h: 0 for h in self.rules}
        for body in (self.start, *self.rules.values()):
            for s in body:
                if not s.terminal:
                    refs[s.id] += 1
        return refs

    def __str__(self) -> str:
        lines = ["S -> " + " ".join(map(repr, self.start))]
        for h, body in self.rules.items():
            lines.append(f"R{h} -> " + " ".join(map(repr, body)))
        return "\n".join(lines)


# --- online Sequitur ---------------------------------------------------------


class _Rule:
    __slots__ = ("guard", "refs", "serial")

    def __init__(self, serial: int) -> None:
        self.guard = _Node(self, True)
        self.guard.next = self.guard.prev = self.guard
        self.refs = 0
        self.serial = serial

    def first(self) -> _Node:
        return self.guard.next

    def last(self) -> _Node:
        return self.guard.prev

    def body(self) -> list:
        out, node = [], self.guard.next
        while node is not self.guard:
            out.append(node.value)
            node = node.next
        return out


class _Node:
    __slots__ = ("value", "prev", "next", "is_guard")

    def __init__(self, value, is_guard: bool = False) -> None:
        self.value = value
        self.prev: _Node | None = None
        self.next: _Node | None = None
        self.is_guard = is_guard


class _Sequitur:
    """Linked-list Sequitur after Nevill-Manning and Witten's reference code."""

    def __init__(self) -> None:
        self.index: dict[tuple, _Node] = {}
        self.n_rules = 0
        self.start = self._new_rule()

    def _new_rule(self) -> _Rule:
        r = _Rule(self.n_rules)
        self.n_rules += 1
        return r

    def _node(self, value) -> _Node:
        if isinstance(value, _Rule):
            value.refs += 1
        return _Node(value)

    def _delete_digram(self, node: _Node) -> None:
        nxt = node.next
        if node.is_guard or nxt.is_guard:
            return
        key = (node.value, nxt.value)
        if self.index.get(key) is node:
            del self.index[key]

    def _join(self, left: _Node, right: _Node) -> None:
        ln = left.next
        if ln is not None:
            index = self.index
            if not (left.is_guard or ln.is_guard):
                key = (left.value, ln.value)
                if index.get(key) is left:
                    del index[key]
            # "aaa": keep the surviving overlapped digram indexed. A guard's
            # value is its own rule, which never occurs in its own body, so
            # guards cannot satisfy these equalities.
            p, n = right.prev, right.next
            if p is not None and n is not None and right.value == p.value == n.value:
                index[(right.value, right.value)] = right
            p, n = left.prev, ln
            if p is not None and left.value == p.value == n.value:
                index[(left.value, left.value)] = p
        left.next = right
        right.prev = left

    def _insert_after(self, at: _Node, new: _Node) -> None:
        self._join(new, at.next)
        self._join(at, new)

    def _delete(self, node: _Node) -> None:
        self._join(node.prev, node.next)
        self._delete_digram(node)
        if type(node.value) is _Rule:
            node.value.refs -= 1

    def _check(self, node: _Node) -> bool:
        nxt = node.next
        if node.is_guard or nxt.is_guard:
            return False
        key = (node.value, nxt.value)
        found = self.index.get(key)
        if found is None:
            self.index[key] = node
            return False
        if found is node:
            return False
        if found.next is not node:  # overlapping occurrences are not repeats
            self._match(node, found)
        return True

    def _match(self, ss: _Node, m: _Node) -> None:
        if m.prev.is_guard and m.next.next.is_guard:
            rule = m.prev.value
            self._substitute(ss, rule)
        else:
            rule = self._new_rule()
            # a fresh two-symbol body: nothing to unindex, so link directly
            g, a, b = rule.guard, self._node(ss.value), self._node(ss.next.value)
            g.next, a.prev, a.next, b.prev, b.next, g.prev = a, g, b, a, g, b
            self._substitute(m, rule)
            self._substitute(ss, rule)
            first = rule.first()
            self.index[(first.value, first.next.value)] = first
        # rule utility for the symbols absorbed into the rule body
        for node in (rule.first(), rule.first().next):
            if not node.is_guard and type(node.value) is _Rule and node.value.refs == 1:
                self._expand(node)
                break

    def _substitute(self, node: _Node, rule: _Rule) -> None:
        # unlink the two symbols at `node` and put one reference to `rule`
        # in their place; the joins are inlined copies of _join
        q = node.prev
        index = self.index
        for _ in range(2):
            gone = q.next
            nxt = gone.next
            if not (q.is_guard or gone.is_guard):
                key = (q.value, gone.value)
                if index.get(key) is q:
                    del index[key]
            n = nxt.next
            if n is not None and nxt.value == gone.value == n.value:
                index[(nxt.value, nxt.value)] = nxt
            p = q.prev
            if p is not None and q.value == p.value == gone.value:
                index[(q.value, q.value)] = p
            q.next = nxt
            nxt.prev = q
            if not nxt.is_guard:
                key = (gone.value, nxt.value)
                if index.get(key) is gone:
                    del index[key]
            if type(gone.value) is _Rule:
                gone.value.refs -= 1
        rule.refs += 1
        new = _Node(rule)
        r = q.next
        new.next = r
        r.prev = new
        if not (q.is_guard or r.is_guard):
            key = (q.value, r.value)
            if index.get(key) is q:
                del index[key]
        p = q.prev
        if p is not None and q.value == p.value == r.value:
            index[(q.value, q.value)] = p
        q.next = new
        new.prev = q
        if not self._check(q):
            self._check(new)

    def _expand(self, node: _Node) -> None:
        left, right = node.prev, node.next
        rule = node.value
        f, l = rule.first(), rule.last()
        self._delete_digram(left)
        self._delete_digram(node)
        self._join(left, f)
        self._join(l, right)
        if not right.is_guard:
            self.index[(l.value, right.value)] = l

    def feed(self, value: int) -> None:
        guard = self.start.guard
        last = guard.prev
        node = _Node(value)
        node.prev, node.next = last, guard
        guard.prev = node
        last.next = node
        if last.is_guard:
            return
        key = (last.value, value)
        if key not in self.index:
            self.index[key] = last
        else:
            self._check(last)

    def to_grammar(self, base: int) -> Grammar:
        order: dict[_Rule, int] = {}
        bodies: dict[_Rule, list] = {}
        stack = [self.start]
        # preorder numbering by first appearance, left to right
        while stack:
            r = stack.pop()
            if r in bodies:
                continue
            body = r.body()
            bodies[r] = body
            if r is not self.start:
                order[r] = base + len(order)
            stack.extend(reversed([v for v in body if isinstance(v, _Rule) and v not in bodies]))

        syms: dict = {}
        for r, i in order.items():
            syms[r] = N(i)

        def conv(body: list) -> tuple[Symbol, ...]:
            out = []
            for v in body:
                sym = syms.get(v)
                if sym is None:
                    sym = syms[v] = T(v)
                out.append(sym)
            return tuple(out)

        rules = {order[r]: conv(bodies[r]) for r in sorted(order, key=order.get)}
        return Grammar(conv(bodies[self.start]), rules)


# --- public operations -------------------------------------------------------


def _validate(seq: Sequence[int]) -> list[int]:
    seq = [int(x) for x in seq]
    if not seq:
        raise ValueError("empty input")
    return seq


def _nonterminal_base(seq: Sequence[int]) -> int:
    return max(max(seq) + 1, 0)


def sequitur_infer(seq: Sequence[int]) -> Grammar:
    """Infer a grammar with plain Sequitur (rule utility threshold 2)."""
    seq = _validate(seq)
    engine = _Sequitur()
    for x in seq:
        engine.feed(x)
    return engine.to_grammar(_nonterminal_base(seq))


def restrict(g: Grammar, keep: Iterable[int]) -> Grammar:
    """Inline every rule not in `keep`; the result expands to the same sequence."""
    keep = set(keep)
    memo: dict[int, tuple[Symbol, ...]] = {}

    def body_of(h: int) -> tuple[Symbol, ...]:
        if h not in memo:
            memo[h] = sub(g.rules[h])
        return memo[h]

    def sub(body: Sequence[Symbol]) -> tuple[Symbol, ...]:
        out: list[Symbol] = []
        for s in body:
            if s.terminal or s.id in keep:
                out.append(s)
            else:
                out.extend(body_of(s.id))
        return tuple(out)

    rules = {h: body_of(h) for h in g.rules if h in keep}
    return Grammar(sub(g.start), rules)


def _renumber(g: Grammar, base: int) -> Grammar:
    """Renumber rules from `base` in order of first appearance."""
    order: dict[int, int] = {}
    stack = [iter(g.start)]
    while stack:
        for s in stack[-1]:
            if not s.terminal and s.id not in order:
                order[s.id] = base + len(order)
                stack.append(iter(g.rules[s.id]))
                break
        else:
            stack.pop()
    if all(old == new for old, new in order.items()):
        return g
    remap = {N(old): N(new) for old, new in order.items()}

    def conv(body):
        return tuple([remap.get(s, s) for s in body])

    return Grammar(conv(g.start), {order[h]: conv(g.rules[h]) for h in sorted(g.rules, key=order.get)})


def _flat_lengths(g: Grammar) -> dict[int, int]:
    out: dict[int, int] = {}

    # rule ids grow with first appearance, so children are not always
    # numbered after parents; resolve on demand
    def length(h: int) -> int:
        n = 0
        for s in g.rules[h]:
            if s.terminal:
                n += 1
            else:
                c = out.get(s.id)
                n += c if c is not None else length(s.id)
        out[h] = n
        return n

    for h in g.rules:
        if h not in out:
            length(h)
    return out


def _topdown(g: Grammar) -> list[int]:
    """Rule heads ordered so every rule comes after all rules referencing it."""
    flat_len = _flat_lengths(g)
    return sorted(g.rules, key=lambda h: (-flat_len[h], h))


def k_sequitur_infer(seq: Sequence[int], k: int) -> Grammar:
    """Sequitur with rule utility raised to `k` references."""
    if not isinstance(k, int) or k < 2:
        raise ValueError("invalid k")
    return k_filter(sequitur_infer(seq), k)


def _rule_base(g: Grammar) -> int:
    # Sequitur numbers its rules upwards from the first free id
    return min(g.rules, default=0)


def k_filter(g: Grammar, k: int) -> Grammar:
    """Inline every rule of a Sequitur grammar used fewer than `k` times.

    Rules are decided parents-first: inlining a parent can only add
    references to its children, so each rule is judged on its final count.
    """
    if not isinstance(k, int) or k < 2:
        raise ValueError("invalid k")
    if k == 2 or not g.rules:
        return g
    refs = g.references()
    dropped: set[int] = set()
    for h in _topdown(g):
        if refs[h] < k:
            dropped.add(h)
            for s in g.rules[h]:
                if not s.terminal:
                    refs[s.id] += refs[h] - 1
    kept = [h for h in g.rules if h not in dropped]
    return _renumber(restrict(g, kept), _rule_base(g))


def encoding_cost(g: Grammar) -> float:
    """Bits to write the grammar with a fixed-length code per symbol.

    Every symbol occurrence plus one delimiter per rule, at
    log2(distinct symbols) bits each, floored at one bit.
    """
    symbols = set(g.start)
    occurrences = len(g.start)
    for h, body in g.rules.items():
        symbols.add(N(h))
        symbols.update(body)
        occurrences += len(body)
    return (occurrences + len(g.rules)) * log2(max(2, len(symbols)))


def raw_grammar(seq: Sequence[int]) -> Grammar:
    """The rule-free grammar that spells out `seq` directly."""
    seq = [int(x) for x in seq]
    sym = {x: T(x) for x in set(seq)}
    return Grammar(tuple(map(sym.__getitem__, seq)), {})


def mdl_filter(seq: Sequence[int]) -> Grammar:
    """Keep Sequitur's rules only where each one lowers the encoding cost."""
    return mdl_select(sequitur_infer(seq))


def mdl_select(g: Grammar) -> Grammar:
    """Greedy MDL pruning of a Sequitur grammar, innermost rules first.

    The cost update is computed in closed form: keeping a rule collapses
    each of its occurrences in the current grammar to one symbol and adds
    its body.
    """
    if not g.rules:
        return g
    flat_len = _flat_lengths(g)
    order = sorted(g.rules, key=lambda h: (-flat_len[h], h))
    terminals = len({s.id for body in (g.start, *g.rules.values()) for s in body if s.terminal})
    total = sum(1 if s.terminal else flat_len[s.id] for s in g.start)

    # occurrences of each rule in the full derivation tree
    paths = {h: 0 for h in g.rules}
    for s in g.start:
        if not s.terminal:
            paths[s.id] += 1
    for h in order:
        for s in g.rules[h]:
            if not s.terminal:
                paths[s.id] += paths[h]

    kept: set[int] = set()
    body_len: dict[int, int] = {}

    def cost(total: int, n_rules: int) -> float:
        return (total + n_rules) * log2(max(2, terminals + n_rules))

    best = cost(total, 0)
    for h in reversed(order):
        blen = sum(1 if (s.terminal or s.id in kept) else body_len[s.id] for s in g.rules[h])
        body_len[h] = blen
        trial = total - paths[h] * (blen - 1) + blen
        c = cost(trial, len(kept) + 1)
        if c < best:
            kept.add(h)
            total, best = trial, c
    return _renumber(restrict(g, kept), _rule_base(g))


CALCULATORS = ("sequitur", "k-sequitur", "mdl")


def infer(seq: Sequence[int], calculator: str = "sequitur", k: int = 2) -> Grammar:
    if calculator == "sequitur":
        return sequitur_infer(seq)
    if calculator in ("k", "k-sequitur"):
        return k_sequitur_infer(seq, k)
    if calculator == "mdl":
        return mdl_filter(seq)
    raise ValueError(f"unknown grammar calculator {calculator!r}")


def flatten(g: Grammar, head: int) -> list[int]:
    if head not in g.rules:
        raise KeyError(f"unknown nonterminal {head}")
    out: list[int] = []
    stack = list(reversed(g.rules[head]))
    while stack:
        s = stack.pop()
        if s.terminal:
            out.append(s.id)
        else:
            stack.extend(reversed(g.rules[s.id]))
    return out


def extract_macros(g: Grammar) -> list[MacroAction]:
    """One macro per nonterminal, deduplicated, shortest first."""
    seen: dict[tuple[int, ...], MacroAction] = {}
    for h in g.rules:
        prims = tuple(flatten(g, h))
        if len(prims) >= 2 and prims not in seen:
            seen[prims] = MacroAction(prims, h)
    return sorted(seen.values(), key=lambda m: (len(m), m.primitives))


def parse_symbols(text: str) -> list[int]:
    return [int(tok) for tok in text.split()]


def format_symbols(seq: Iterable[int]) -> str:
    return " ".join(str(x) for x in seq)
