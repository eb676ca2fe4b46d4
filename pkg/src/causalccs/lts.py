"""Labelled transition systems and their text/DOT formats.

Text format, one directive per line, ``#`` comments::

    lts NAME
    init S0
    trans S0 a S1
    trans S1 ~b S0
    trans S0 tau S0
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Hashable

from causalccs.ccs import Action, ParseError, parse_action


@dataclass
class Lts:
    """States are dense ids ``0..n-1``; ``payloads[i]`` is optional data for state ``i``."""

    payloads: list[Any] = field(default_factory=list)
    edges: set[tuple[int, Action, int]] = field(default_factory=set)
    initial: int = 0
    name: str = "lts"
    truncated: bool = False

    def add_state(self, payload: Any = None) -> int:
        self.payloads.append(payload)
        return len(self.payloads) - 1

    def add_edge(self, src: int, label: Action, dst: int) -> None:
        n = len(self.payloads)
        if not (0 <= src < n and 0 <= dst < n):
            raise ValueError(f"edge ({src}, {label}, {dst}) leaves the state space")
        self.edges.add((src, label, dst))

    @property
    def states(self) -> range:
        return range(len(self.payloads))

    @property
    def num_states(self) -> int:
        return len(self.payloads)

    @property
    def labels(self) -> set[Action]:
        return {a for _, a, _ in self.edges}

    def successors(self) -> list[list[tuple[Action, int]]]:
        succ: list[list[tuple[Action, int]]] = [[] for _ in self.payloads]
        for s, a, t in self.edges:
            succ[s].append((a, t))
        return succ

    def deadlocks(self) -> list[int]:
        busy = {s for s, _, _ in self.edges}
        return [s for s in self.states if s not in busy]

    def relabel(self, fn) -> Lts:
        """Copy with every edge label mapped through ``fn``."""
        out = Lts(list(self.payloads), set(), self.initial, self.name, self.truncated)
        out.edges = {(s, fn(a), t) for s, a, t in self.edges}
        return out

    def reachable(self) -> Lts:
        """Copy restricted to states reachable from the initial one, renumbered."""
        succ = self.successors()
        order = [self.initial]
        seen = {self.initial: 0}
        for s in order:
            for _, t in sorted(succ[s], key=lambda e: (e[0], e[1])):
                if t not in seen:
                    seen[t] = len(order)
                    order.append(t)
        out = Lts([self.payloads[s] for s in order], set(), 0, self.name, self.truncated)
        out.edges = {(seen[s], a, seen[t]) for s, a, t in self.edges if s in seen}
        return out


def write_lts(lts: Lts, names: dict[int, str] | None = None) -> str:
    name = (lambda s: names[s]) if names else (lambda s: f"s{s}")
    lines = [f"lts {lts.name}"]
    if lts.truncated:
        lines.append("# truncated")
    lines.append(f"init {name(lts.initial)}")
    for s in lts.states:
        lines.append(f"state {name(s)}")
    for s, a, t in sorted(lts.edges):
        lines.append(f"trans {name(s)} {a} {name(t)}")
    return "\n".join(lines) + "\n"


def read_lts(text: str) -> Lts:
    """Parse the line format; state tokens are renumbered in order of appearance."""
    lts = Lts()
    ids: dict[Hashable, int] = {}
    init = None
    edges = []

    def state(tok: str) -> int:
        if tok not in ids:
            ids[tok] = lts.add_state(tok)
        return ids[tok]

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if raw.strip() == "# truncated":
                lts.truncated = True
            continue
        words = line.split()
        head = words[0]
        if head == "lts" and len(words) == 2:
            lts.name = words[1]
        elif head == "init" and len(words) == 2:
            if init is not None:
                raise ParseError("duplicate init", lineno, 1)
            init = state(words[1])
        elif head == "state" and len(words) == 2:
            state(words[1])
        elif head == "trans" and len(words) == 4:
            if init is None:
                raise ParseError("transition before the initial state is declared", lineno, 1)
            try:
                label = parse_action(words[2])
            except ParseError as e:
                raise ParseError(str(e), lineno, 1) from None
            edges.append((state(words[1]), label, state(words[3])))
        else:
            raise ParseError(f"malformed line {line!r}", lineno, 1)
    if init is None:
        raise ParseError("missing init line")
    lts.initial = init
    for e in edges:
        lts.add_edge(*e)
    return lts


def export_dot(lts: Lts, title: str | None = None) -> str:
    lines = [f'digraph "{title or lts.name}" {{', "  rankdir=LR;", "  node [shape=circle];"]
    lines.append('  __init [shape=point, label=""];')
    for s in lts.states:
        shape = ', shape=doublecircle' if s == lts.initial else ""
        lines.append(f'  s{s} [label="{s}"{shape}];')
    lines.append(f"  __init -> s{lts.initial};")
    for s, a, t in sorted(lts.edges):
        lines.append(f'  s{s} -> s{t} [label="{a}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def isomorphic_lts(a: Lts, b: Lts) -> bool:
    """Exact LTS isomorphism for the small systems used in round-trip checks."""
    if a.num_states != b.num_states or len(a.edges) != len(b.edges):
        return False
    ra, rb = a.reachable(), b.reachable()
    if ra.num_states != a.num_states or rb.num_states != b.num_states:
        return _brute_iso(a, b)
    # deterministic renumbering is canonical only for deterministic systems
    if write_lts(ra).splitlines()[1:] == write_lts(rb).splitlines()[1:]:
        return True
    return _brute_iso(a, b)


def _brute_iso(a: Lts, b: Lts) -> bool:
    succ_a = defaultdict(set)
    for s, l, t in a.edges:
        succ_a[s].add((l, t))
    edges_b = b.edges
    n = a.num_states
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def ok(s: int) -> bool:
        for l, t in succ_a[s]:
            if t in mapping and (mapping[s], l, mapping[t]) not in edges_b:
                return False
        for s2, l, t in a.edges:
            if t == s and s2 in mapping and (mapping[s2], l, mapping[s]) not in edges_b:
                return False
        return True

    def go(i: int) -> bool:
        if i == n:
            return True
        for c in range(b.num_states):
            if c in used or (i == a.initial) != (c == b.initial):
                continue
            mapping[i] = c
            used.add(c)
            if ok(i) and go(i + 1):
                return True
            del mapping[i]
            used.discard(c)
        return False

    return go(0)
