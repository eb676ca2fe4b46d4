"""Flow event structures of CCS terms, cut at recursive calls.

A term is translated into a *shape*: the prefix occurrences of the term laid
out in a tree of parallel and choice nodes, with recursive calls that sit
below a commit left as stubs. Every shape node occupies a slot; slots are
numbered in post-order so that each subtree covers a contiguous interval,
and conflict between two slots is read off the node where their root paths
diverge (a choice node means conflict, a parallel node means concurrency).

Events are derived from the shape: one per unrestricted occurrence and one
per pair of complementary concurrent occurrences (a synchronization). An
occurrence only contributes events once its guarding occurrence is able to
happen; occurrences that cannot (restricted with no partner, or guarded by
such) and stubs are kept as *inert* nodes, which take part in isomorphism
and signatures but never in configurations.
"""

from __future__ import annotations

import bisect
import itertools
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

from causalccs.ccs import (
    Action, Call, CCSError, Env, Nil, Par, Prefix, Process, Restrict, Sum,
    UnguardedRecursionError, UNFOLD_LIMIT, parse_action, substitute,
)

MAX_EVENTS = 1_000_000


class GuardError(CCSError):
    """Recursion not guarded by a commit action."""


class EventBudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class Stub:
    name: str
    args: tuple[str, ...]
    slot: int
    guard: int | None
    parent: int | None


@dataclass(frozen=True)
class Event:
    id: int
    label: Action | None
    constituents: tuple[int, ...]
    active: bool = True
    stub: Stub | None = None

    def __str__(self):
        if self.stub is not None:
            return f"{self.stub.name}({','.join(self.stub.args)})@{self.id}"
        return f"{self.label}@{self.id}"


# ---------------------------------------------------------------------------
# commit guard check
# ---------------------------------------------------------------------------

_BOUND = "#bound"


def _calls_below(p: Process, K: frozenset, bound: frozenset, guarded: bool):
    """Yield (call, crossed_commit) for the calls reachable in ``p`` without unfolding."""
    stack = [(p, bound, guarded)]
    while stack:
        q, b, g = stack.pop()
        if isinstance(q, Prefix):
            commit = q.action in K and q.action.channel not in b
            stack.append((q.body, b, g or commit))
        elif isinstance(q, (Par, Sum)):
            stack.extend(((q.left, b, g), (q.right, b, g)))
        elif isinstance(q, Restrict):
            stack.append((q.body, b | {q.channel}, g))
        elif isinstance(q, Call):
            yield Call(q.name, tuple(_BOUND if a in b else a for a in q.args)), g


def check_commit_guarded(p: Process, env: Env, K: Iterable[Action]) -> None:
    """Raise :class:`GuardError` unless every recursion cycle crosses a commit.

    Definitions are checked as instantiated from ``p``: a formal parameter
    becomes a commit only once an observable action is passed for it.
    """
    K = frozenset(K)
    edges: dict[tuple, list[tuple[tuple, bool]]] = {}
    todo = [c for c, _ in _calls_below(p, K, frozenset(), False)]
    while todo:
        c = todo.pop()
        key = (c.name, c.args)
        if key in edges:
            continue
        body = env.unfold(c.name, c.args)
        bound = frozenset({_BOUND})
        edges[key] = []
        for d, g in _calls_below(body, K, bound, False):
            edges[key].append(((d.name, d.args), g))
            todo.append(d)
    # cycle search over commit-free edges
    state: dict[tuple, int] = {}
    trail: list[tuple] = []

    def visit(v):
        state[v] = 1
        trail.append(v)
        for w, g in edges.get(v, ()):
            if g:
                continue
            if state.get(w) == 1:
                cycle = trail[trail.index(w):] + [w]
                path = " -> ".join(n for n, _ in cycle)
                raise GuardError(f"recursion through {w[0]} is not guarded by a commit: {path}")
            if w not in state:
                visit(w)
        trail.pop()
        state[v] = 2

    for v in list(edges):
        if v not in state:
            visit(v)


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------
# ('pre', action, child|None) | ('par', children) | ('sum', children)
# | ('stub', name, args) | ('ready', name, args)

_HIDDEN = re.compile(r"#(\d+)\Z")


def _mk(kind: str, parts: list) -> tuple | None:
    flat = []
    for q in parts:
        if q is None:
            continue
        if q[0] == kind:
            flat.extend(q[1])
        else:
            flat.append(q)
    if not flat:
        return None
    if len(flat) == 1:
        return flat[0]
    return (kind, tuple(flat))


class _Translator:
    def __init__(self, env: Env, K: frozenset, hidden: set[str], counter: int):
        self.env = env
        self.K = K
        self.hidden = hidden
        self.counter = counter
        self.budget = UNFOLD_LIMIT

    def fresh(self, base: str) -> str:
        self.counter += 1
        name = f"{base.split('#')[0]}#{self.counter}"
        self.hidden.add(name)
        return name

    def __call__(self, p: Process, guarded: bool):
        if isinstance(p, Nil):
            return None
        if isinstance(p, Prefix):
            commit = p.action in self.K and p.action.channel not in self.hidden
            return ("pre", p.action, self(p.body, guarded or commit))
        if isinstance(p, Par):
            return _mk("par", [self(p.left, guarded), self(p.right, guarded)])
        if isinstance(p, Sum):
            parts = [self(p.left, guarded), self(p.right, guarded)]
            for q in parts:
                if q is not None and q[0] == "par":
                    raise CCSError(f"choice operand in {p} is not guarded by a prefix")
            return _mk("sum", parts)
        if isinstance(p, Restrict):
            y = self.fresh(p.channel)
            return self(substitute(p.body, {p.channel: y}), guarded)
        if isinstance(p, Call):
            if guarded:
                return ("stub", p.name, p.args)
            self.budget -= 1
            if self.budget < 0:
                raise UnguardedRecursionError(f"unguarded recursion through {p.name}")
            return self(self.env.unfold(p.name, p.args), guarded)
        raise TypeError(p)


def _max_hidden(names: Iterable[str]) -> int:
    top = 0
    for x in names:
        m = _HIDDEN.search(x)
        if m:
            top = max(top, int(m.group(1)))
    return top


# ---------------------------------------------------------------------------
# conflict tree
# ---------------------------------------------------------------------------


@dataclass
class CTNode:
    kind: str
    lo: int
    hi: int
    children: list[int] = field(default_factory=list)
    slot: int | None = None
    shape: tuple | None = field(default=None, repr=False)


class ConflictTree:
    """Interval tree over slots; choice nodes record conflicting interval pairs."""

    def __init__(self):
        self.nodes: list[CTNode] = []
        self.paths: list[tuple[int, ...]] = []
        self._rel: dict[tuple[int, int], str] = {}

    def rectangles(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """``[n-m] # [n'-m']`` pairs recorded at choice nodes."""
        out = []
        for node in self.nodes:
            if node.kind != "sum":
                continue
            spans = [(self.nodes[c].lo, self.nodes[c].hi) for c in node.children]
            out.extend(itertools.combinations(spans, 2))
        return out

    def relation(self, i: int, j: int) -> str:
        """'same', 'anc' (i guards j), 'desc', 'sum' (conflict) or 'par'."""
        if i == j:
            return "same"
        key = (i, j)
        hit = self._rel.get(key)
        if hit is not None:
            return hit
        pi, pj = self.paths[i], self.paths[j]
        k = 0
        while k < len(pi) and k < len(pj) and pi[k] == pj[k]:
            k += 1
        if k == len(pi):
            rel = "anc"
        elif k == len(pj):
            rel = "desc"
        else:
            rel = "sum" if self.nodes[pi[k - 1]].kind == "sum" else "par"
        self._rel[key] = rel
        return rel

    def in_conflict(self, i: int, j: int) -> bool:
        """Descend from the root while both slots share a child interval."""
        node = self.nodes[0]
        while True:
            nxt = None
            for c in node.children:
                ch = self.nodes[c]
                a, b = ch.lo <= i <= ch.hi, ch.lo <= j <= ch.hi
                if a and b:
                    nxt = ch
                    break
                if a or b:
                    if node.kind == "sum":
                        return any(self.nodes[d].lo <= (j if a else i) <= self.nodes[d].hi
                                   for d in node.children if d != c)
                    if node.kind == "pre" or node.kind == "par":
                        return False
            if nxt is None:
                return False
            node = nxt


def _layout(shape) -> tuple[ConflictTree, list[tuple]]:
    """Post-order slot numbering; returns the tree and the shape node per slot."""
    tree = ConflictTree()
    tree.nodes.append(CTNode("root", 0, -1))
    slots: list[tuple] = []
    paths: list[tuple[int, ...]] = []

    def walk(node, path: tuple[int, ...]) -> int:
        nid = len(tree.nodes)
        ct = CTNode(node[0] if node[0] in ("pre", "par", "sum") else "stub", len(slots), -1,
                    shape=node)
        tree.nodes.append(ct)
        here = path + (nid,)
        if node[0] == "pre":
            if node[2] is not None:
                ct.children.append(walk(node[2], here))
            ct.slot = len(slots)
            slots.append(node)
            paths.append(here)
        elif node[0] in ("par", "sum"):
            for child in node[1]:
                ct.children.append(walk(child, here))
        else:
            ct.slot = len(slots)
            slots.append(node)
            paths.append(here)
        ct.hi = len(slots) - 1
        return nid

    if shape is not None:
        tree.nodes[0].children.append(walk(shape, (0,)))
    tree.nodes[0].hi = len(slots) - 1
    tree.paths = paths
    return tree, slots


# ---------------------------------------------------------------------------
# flow event structures
# ---------------------------------------------------------------------------


class Fes:
    """Flow event structure derived from a shape (see module docstring)."""

    def __init__(self, shape, hidden: Iterable[str], K: Iterable[Action], max_events: int = MAX_EVENTS):
        self.shape = shape
        self.hidden = frozenset(hidden)
        self.K = frozenset(K)
        self.tree, self.slot_nodes = _layout(shape)
        n = len(self.slot_nodes)
        self.parent: list[int | None] = []
        self.guard: list[int | None] = []
        for s in range(n):
            path = self.tree.paths[s]
            par = grd = None
            for nid in reversed(path[:-1]):
                node = self.tree.nodes[nid]
                if node.kind == "pre":
                    if par is None:
                        par = node.slot
                    if self.slot_nodes[node.slot][1] in self.K:
                        grd = node.slot
                        break
            self.parent.append(par)
            self.guard.append(grd)
        self._derive(max_events)

    # -- construction ------------------------------------------------------

    def _label(self, s: int) -> Action | None:
        node = self.slot_nodes[s]
        return node[1] if node[0] == "pre" else None

    def _blocked(self, a: Action) -> bool:
        return not a.silent and a.channel in self.hidden

    def _derive(self, max_events: int) -> None:
        n = len(self.slot_nodes)
        occ = [s for s in range(n) if self.slot_nodes[s][0] == "pre"]
        kids: dict[int | None, list[int]] = {}
        for s in occ:
            kids.setdefault(self.parent[s], []).append(s)
        # grow the reachable occurrences: a child becomes reachable once its parent has an event
        reach: set[int] = set()
        busy: set[int] = set()
        plain: list[int] = []
        synch: list[tuple[int, int]] = []
        by_chan: dict[tuple[str, str], list[int]] = {}
        todo = list(kids.get(None, ()))
        while todo:
            s = todo.pop()
            reach.add(s)
            a = self._label(s)
            fired = []
            if not self._blocked(a):
                plain.append(s)
                fired.append(s)
            if not a.silent:
                other = "out" if a.kind == "in" else "in"
                for t in by_chan.get((other, a.channel), ()):
                    if self.tree.relation(s, t) == "par":
                        synch.append((min(s, t), max(s, t)))
                        fired.extend((s, t))
                by_chan.setdefault((a.kind, a.channel), []).append(s)
            for f in fired:
                if f not in busy:
                    busy.add(f)
                    todo.extend(kids.get(f, ()))
        active = [(s,) for s in plain] + synch
        active.sort(key=lambda c: (min(c), c))
        if len(active) > max_events:
            raise EventBudgetExceeded(f"{len(active)} events exceed the budget of {max_events}")
        nodes: list[Event] = []
        for c in active:
            label = self._label(c[0]) if len(c) == 1 else Action("tau")
            nodes.append(Event(len(nodes), label, c, True))
        self.stubs: list[Stub] = []
        self.ready: list[int] = []
        for s in range(n):
            node = self.slot_nodes[s]
            if node[0] == "pre":
                if (s,) not in set(active):
                    nodes.append(Event(len(nodes), node[1], (s,), False))
            else:
                stub = Stub(node[1], node[2], s, self.guard[s], self.parent[s])
                self.stubs.append(stub)
                if node[0] == "ready":
                    self.ready.append(s)
                nodes.append(Event(len(nodes), None, (s,), False, stub))
        self.nodes = nodes
        self.events = tuple(e for e in nodes if e.active)
        by_slot: dict[int, list[int]] = {}
        for e in nodes:
            for c in e.constituents:
                by_slot.setdefault(c, []).append(e.id)
        flow = set()
        for e in nodes:
            for c in e.constituents:
                p = self.parent[c]
                if p is not None:
                    for d in by_slot.get(p, ()):
                        flow.add((d, e.id))
        self.flow = frozenset(flow)
        self.preds: list[list[int]] = [[] for _ in nodes]
        self.succs: list[list[int]] = [[] for _ in nodes]
        for d, e in sorted(flow):
            self.preds[e].append(d)
            self.succs[d].append(e)

    # -- relations ---------------------------------------------------------

    def conflict(self, d: int, e: int) -> bool:
        return e in self.conflict_sets[d]

    @cached_property
    def slot_conflicts(self) -> list[set[int]]:
        """Slots in different branches of some choice, per slot."""
        out: list[set[int]] = [set() for _ in self.slot_nodes]
        for node in self.tree.nodes:
            if node.kind != "sum":
                continue
            spans = [range(self.tree.nodes[c].lo, self.tree.nodes[c].hi + 1) for c in node.children]
            for a, b in itertools.combinations(spans, 2):
                for i in a:
                    out[i].update(b)
                for j in b:
                    out[j].update(a)
        return out

    @cached_property
    def by_slot(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.slot_nodes]
        for e in self.nodes:
            for c in e.constituents:
                out[c].append(e.id)
        return out

    @cached_property
    def conflict_sets(self) -> list[frozenset[int]]:
        out = []
        for e in self.nodes:
            acc: set[int] = set()
            for c in e.constituents:
                acc.update(self.by_slot[c])
                for s in self.slot_conflicts[c]:
                    acc.update(self.by_slot[s])
            acc.discard(e.id)
            out.append(frozenset(acc))
        return out

    def label_of(self, e: int) -> Action | None:
        return self.nodes[e].label

    def __len__(self):
        return len(self.events)

    def __repr__(self):
        evs = ", ".join(str(e) for e in self.events)
        return f"<Fes {{{evs}}} stubs={len(self.stubs)}>"

    def describe(self) -> str:
        lines = [repr(self)]
        for d, e in sorted(self.flow):
            lines.append(f"  {self.nodes[d]} < {self.nodes[e]}")
        for d in range(len(self.nodes)):
            for e in sorted(self.conflict_sets[d]):
                if d < e:
                    lines.append(f"  {self.nodes[d]} # {self.nodes[e]}")
        return "\n".join(lines)


class ExplicitFes(Fes):
    """Event structure given directly by labels, flow and conflict pairs.

    Used to build structures no term produces; the residual follows the
    textbook definition (drop X and everything in conflict with it).
    """

    def __init__(self, labels: Iterable[Action | str], flow: Iterable[tuple[int, int]] = (),
                 conflicts: Iterable[tuple[int, int]] = (), hidden: Iterable[str] = (),
                 K: Iterable[Action] = ()):
        labels = [parse_action(a) if isinstance(a, str) else a for a in labels]
        self.shape = None
        self.hidden = frozenset(hidden)
        self.K = frozenset(parse_action(k) if isinstance(k, str) else k for k in K)
        self.stubs, self.ready = [], []
        self.nodes = [Event(i, a, (i,)) for i, a in enumerate(labels)]
        self.events = tuple(self.nodes)
        n = len(self.nodes)
        self.flow = frozenset((d, e) for d, e in flow)
        if any(d == e or not (0 <= d < n and 0 <= e < n) for d, e in self.flow):
            raise ValueError("flow must be irreflexive over existing events")
        self.preds = [[] for _ in range(n)]
        self.succs = [[] for _ in range(n)]
        for d, e in sorted(self.flow):
            self.preds[e].append(d)
            self.succs[d].append(e)
        conf: list[set[int]] = [set() for _ in range(n)]
        for d, e in conflicts:
            if d == e:
                raise ValueError("conflict must be irreflexive")
            conf[d].add(e)
            conf[e].add(d)
        self.conflict_sets = [frozenset(c) for c in conf]

    def restrict_to(self, keep: Iterable[int]) -> "ExplicitFes":
        keep = sorted(keep)
        index = {e: i for i, e in enumerate(keep)}
        return ExplicitFes(
            [self.nodes[e].label for e in keep],
            [(index[d], index[e]) for d, e in self.flow if d in index and e in index],
            [(index[d], index[e]) for d in keep for e in self.conflict_sets[d]
             if e in index and index[d] < index[e]],
            self.hidden, self.K,
        )


def active_part(E: Fes) -> ExplicitFes:
    """The active events of ``E`` with flow and conflict among them."""
    keep = [e.id for e in E.events]
    labels = [e.label for e in E.events]
    index = {e: i for i, e in enumerate(keep)}
    return ExplicitFes(
        labels,
        [(index[d], index[e]) for d, e in E.flow if d in index and e in index],
        [(index[d], index[e]) for d in keep for e in E.conflict_sets[d]
         if e in index and index[d] < index[e]],
        E.hidden, E.K,
    )


def partial_unfold(p: Process, env: Env | None = None, K: Iterable[Action] = (),
                   max_events: int = MAX_EVENTS) -> Fes:
    """Event structure of ``p``; calls below a commit become stubs."""
    env = env if env is not None else Env()
    K = frozenset(K)
    check_commit_guarded(p, env, K)
    hidden: set[str] = set()
    tr = _Translator(env, K, hidden, 0)
    shape = tr(p, False)
    return Fes(shape, hidden, K, max_events)


def conflict_naive(E: Fes, d: int, e: int) -> bool:
    """Pairwise check on root paths: shared occurrence or divergence at a choice."""
    if d == e:
        return False
    for a in E.nodes[d].constituents:
        for b in E.nodes[e].constituents:
            if a == b or E.tree.relation(a, b) == "sum":
                return True
    return False


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


def is_configuration(E: Fes, X: Iterable[int]) -> bool:
    X = frozenset(X)
    if any(not (0 <= x < len(E.nodes)) or not E.nodes[x].active for x in X):
        return False
    conf = E.conflict_sets
    for d in X:
        if not conf[d].isdisjoint(X):
            return False
    if not _acyclic(E, X):
        return False
    for e in X:
        for d in E.preds[e]:
            if d in X:
                continue
            if not any(f in X and f in conf[d] for f in E.preds[e]):
                return False
    return True


def _acyclic(E: Fes, X: frozenset[int]) -> bool:
    indeg = {x: 0 for x in X}
    for x in X:
        for y in E.succs[x]:
            if y in X:
                indeg[y] += 1
    ready = [x for x, k in indeg.items() if k == 0]
    seen = 0
    while ready:
        x = ready.pop()
        seen += 1
        for y in E.succs[x]:
            if y in X:
                indeg[y] -= 1
                if indeg[y] == 0:
                    ready.append(y)
    return seen == len(X)


def ancestors(E: Fes, e: int, within: Iterable[int] | None = None) -> set[int]:
    """Events ``d`` with ``d <* e``, optionally following flow inside ``within`` only."""
    allowed = None if within is None else set(within)
    out: set[int] = set()
    todo = [e]
    while todo:
        x = todo.pop()
        for d in E.preds[x]:
            if d in out or not E.nodes[d].active:
                continue
            if allowed is not None and d not in allowed:
                continue
            out.add(d)
            todo.append(d)
    return out


def is_e_minimal(E: Fes, X: Iterable[int], e: int) -> bool:
    X = frozenset(X)
    return e in X and X - {e} <= ancestors(E, e, X)


def _dominating_choices(E: Fes, undominated: list[int], candidates: list[int],
                        chosen: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
    """Independent subsets of ``candidates`` meeting every undominated cause."""
    conf = E.conflict_sets
    rest = [d for d in undominated
            if d not in chosen and not any(c in conf[d] for c in chosen)]
    if not rest:
        yield chosen
        return
    d = rest[0]
    for c in candidates:
        if c in chosen or (c != d and c not in conf[d]):
            continue
        if any(c in conf[x] for x in chosen):
            continue
        yield from _dominating_choices(E, rest, candidates, chosen + (c,))


def e_minimal_configs(E: Fes, e: int, avoid: Iterable[Action] = ()) -> set[frozenset[int]]:
    """All configurations containing ``e`` made only of causes of ``e``.

    Causes labelled in ``avoid`` are never used; the result is then exactly
    the e-minimal configurations free of such events.
    """
    avoid = frozenset(avoid)
    if not E.nodes[e].active:
        return set()
    conf = E.conflict_sets
    found: set[frozenset[int]] = set()
    seen: set[tuple[frozenset[int], frozenset[int]]] = set()

    def extend(X: frozenset[int], pending: frozenset[int]) -> None:
        if (X, pending) in seen:
            return
        seen.add((X, pending))
        if not pending:
            if is_configuration(E, X) and is_e_minimal(E, X, e):
                found.add(X)
            return
        x = min(pending)
        rest = pending - {x}
        P = [d for d in E.preds[x] if E.nodes[d].active]
        forced = tuple(d for d in P if d in X)
        undominated = [d for d in P if d not in X and conf[d].isdisjoint(forced)]
        candidates = [d for d in P if d not in X and conf[d].isdisjoint(X)
                      and E.nodes[d].label not in avoid]
        for S in _dominating_choices(E, undominated, candidates, ()):
            extend(X | set(S), rest | set(S))

    extend(frozenset({e}), frozenset({e}))
    return found


def e_minimal_configs_bruteforce(E: Fes, e: int) -> set[frozenset[int]]:
    """Exhaustive subset check over the causes of ``e``; exponential."""
    anc = sorted(ancestors(E, e))
    out = set()
    for k in range(len(anc) + 1):
        for sub in itertools.combinations(anc, k):
            X = frozenset(sub) | {e}
            if is_configuration(E, X) and is_e_minimal(E, X, e):
                out.add(X)
    return out


def configurations(E: Fes, limit: int = 1 << 16) -> set[frozenset[int]]:
    """All configurations, grown event by event from the empty one."""
    out = {frozenset()}
    frontier = [frozenset()]
    while frontier:
        nxt = []
        for X in frontier:
            for e in E.events:
                if e.id in X:
                    continue
                Y = X | {e.id}
                if Y not in out and is_configuration(E, Y):
                    out.add(Y)
                    nxt.append(Y)
                    if len(out) > limit:
                        raise RuntimeError("too many configurations")
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# residuals and stub instantiation
# ---------------------------------------------------------------------------


def _residual_shape(E: Fes, X: frozenset[int], graft=None):
    """Rebuild the shape after ``X``; untouched subtrees are shared, not copied.

    ``graft`` (if given) maps a released stub to its replacement subtree;
    otherwise released stubs are marked ready.
    """
    done = {c for x in X for c in E.nodes[x].constituents}
    gone: set[int] = set()
    for c in done:
        gone |= E.slot_conflicts[c]
    released = {st.slot for st in E.stubs if st.guard in done and st.slot not in gone}
    touched = sorted(done | gone | released)
    nodes = E.tree.nodes

    def hit(ct: CTNode) -> bool:
        k = bisect.bisect_left(touched, ct.lo)
        return k < len(touched) and touched[k] <= ct.hi

    def rebuild(nid: int):
        ct = nodes[nid]
        if not hit(ct):
            return ct.shape
        node = ct.shape
        kind = node[0]
        if kind == "pre":
            child = rebuild(ct.children[0]) if ct.children else None
            s = ct.slot
            if s in gone:
                return None
            if s in done:
                return child
            return ("pre", node[1], child)
        if kind in ("par", "sum"):
            parts = [rebuild(c) for c in ct.children]
            if kind == "sum" and any(q is not None and q[0] == "par" for q in parts):
                raise CCSError("choice operand is not guarded by a prefix")
            return _mk(kind, parts)
        if ct.slot in gone:
            return None
        if graft is not None:
            return graft(node)
        return ("ready", node[1], node[2])

    if not nodes[0].children:
        return None
    return rebuild(nodes[0].children[0])


def residual(E: Fes, X: Iterable[int]) -> Fes:
    """Structure left after ``X`` happened, minus everything in conflict with it.

    Stubs guarded by an event of ``X`` stay in place, marked ready; see
    :func:`instantiate`. Stubs whose guard was discarded go with it.
    """
    X = frozenset(X)
    if not is_configuration(E, X):
        raise ValueError("residual by a set that is not a configuration")
    if isinstance(E, ExplicitFes):
        gone = set(X)
        for x in X:
            gone |= E.conflict_sets[x]
        return E.restrict_to(e.id for e in E.nodes if e.id not in gone)
    return Fes(_residual_shape(E, X), E.hidden, E.K)


def _graft(shape, hidden: set[str], K: frozenset, env: Env):
    tr = _Translator(env, K, hidden, _max_hidden(hidden))

    def graft(node):
        kind = node[0]
        if kind == "pre":
            return ("pre", node[1], graft(node[2]) if node[2] is not None else None)
        if kind in ("par", "sum"):
            parts = [graft(c) for c in node[1]]
            if kind == "sum" and any(q is not None and q[0] == "par" for q in parts):
                raise CCSError("choice operand is not guarded by a prefix")
            return _mk(kind, parts)
        if kind == "ready":
            return tr(env.unfold(node[1], node[2]), False)
        return node

    return graft(shape) if shape is not None else None


def instantiate(E: Fes, env: Env) -> Fes:
    """Replace ready stubs by the partial unfolding of their definition bodies."""
    if not E.ready:
        return E
    hidden = set(E.hidden)
    return Fes(_graft(E.shape, hidden, E.K, env), hidden, E.K)


def advance_shape(E: Fes, X: Iterable[int], env: Env) -> tuple[tuple | None, frozenset[str]]:
    """Shape and hidden names of ``instantiate(residual(E, X))``, without deriving it."""
    hidden = set(E.hidden)
    tr = _Translator(env, E.K, hidden, _max_hidden(hidden))
    shape = _residual_shape(E, frozenset(X), lambda node: tr(env.unfold(node[1], node[2]), False))
    return shape, frozenset(hidden)


def advance(E: Fes, X: Iterable[int], env: Env) -> Fes:
    """``instantiate(residual(E, X))`` with a single derivation."""
    shape, hidden = advance_shape(E, X, env)
    return Fes(shape, hidden, E.K)


class ShapeKeys:
    """Canonical text of shapes up to the order of parallel and choice branches.

    Equal keys mean equal event structures up to slot numbering. Keys are
    memoized per node object, so shared subtrees are only rendered once.
    """

    def __init__(self):
        self._memo: dict[int, tuple[tuple, str]] = {}

    def __call__(self, node) -> str:
        if node is None:
            return "0"
        hit = self._memo.get(id(node))
        if hit is not None and hit[0] is node:
            return hit[1]
        kind = node[0]
        if kind == "pre":
            key = f"{node[1]}.{self(node[2])}"
        elif kind in ("par", "sum"):
            sep = "|" if kind == "par" else "+"
            key = "(" + sep.join(sorted(self(c) for c in node[1])) + ")"
        else:
            key = f"{kind}:{node[1]}({','.join(node[2])})"
        self._memo[id(node)] = (node, key)
        return key


# ---------------------------------------------------------------------------
# signatures and isomorphism
# ---------------------------------------------------------------------------


def _color(E: Fes, e: Event) -> tuple:
    if e.stub is not None:
        args = tuple("#" if a in E.hidden else a for a in e.stub.args)
        return ("stub", e.stub.name, args)
    a = e.label
    lab = (a.kind, "#") if (not a.silent and a.channel in E.hidden) else (a.kind, a.channel)
    return ("ev", lab, e.active, len(e.constituents))


def signature(E: Fes) -> int:
    """Isomorphism-invariant fingerprint of all nodes, active and inert.

    Per node: label class, flow in/out degrees, conflict degree and the
    multiset of predecessor labels. Hash values are stable within a process.
    """
    cached = E.__dict__.get("_signature")
    if cached is not None:
        return cached
    colors = [hash(_color(E, e)) for e in E.nodes]
    conf = E.conflict_sets
    rows = sorted(
        (colors[i], len(E.preds[i]), len(E.succs[i]), len(conf[i]),
         hash(tuple(sorted(colors[d] for d in E.preds[i]))))
        for i in range(len(E.nodes))
    )
    sig = hash((tuple(rows), len(E.events), len(E.nodes), len(E.flow)))
    E.__dict__["_signature"] = sig
    return sig


def _refined_colors(E: Fes, rounds: int = 3) -> list[int]:
    cached = E.__dict__.get("_colors")
    if cached is not None:
        return cached
    cur = [hash(_color(E, e)) for e in E.nodes]
    conf = E.conflict_sets
    for _ in range(rounds):
        cur = [hash((cur[i], tuple(sorted(cur[d] for d in E.preds[i])),
                     tuple(sorted(cur[d] for d in E.succs[i])),
                     tuple(sorted(cur[d] for d in conf[i]))))
               for i in range(len(E.nodes))]
    E.__dict__["_colors"] = cur
    return cur


def _hidden_refs(E: Fes, e: Event) -> list[str]:
    if e.stub is not None:
        return [a for a in e.stub.args]
    if e.label is not None and not e.label.silent:
        return [e.label.channel]
    return []


def isomorphic(E1: Fes, E2: Fes) -> bool:
    """Exact label-, flow-, conflict- and stub-preserving bijection of nodes.

    Restricted channel names may be renamed, consistently, by the bijection.
    """
    if len(E1.nodes) != len(E2.nodes) or len(E1.events) != len(E2.events):
        return False
    if len(E1.flow) != len(E2.flow):
        return False
    c1, c2 = _refined_colors(E1), _refined_colors(E2)
    if Counter(c1) != Counter(c2):
        return False
    classes: dict[str, list[int]] = {}
    for j, c in enumerate(c2):
        classes.setdefault(c, []).append(j)
    order = sorted(range(len(E1.nodes)), key=lambda i: (len(classes[c1[i]]), i))
    conf1, conf2 = E1.conflict_sets, E2.conflict_sets
    mapping: dict[int, int] = {}
    used: set[int] = set()
    names: dict[str, str] = {}
    back: dict[str, str] = {}

    def bind_names(i: int, j: int) -> list[str] | None:
        added = []
        r1, r2 = _hidden_refs(E1, E1.nodes[i]), _hidden_refs(E2, E2.nodes[j])
        if len(r1) != len(r2):
            return None
        for a, b in zip(r1, r2):
            h1, h2 = a in E1.hidden, b in E2.hidden
            if h1 != h2:
                break
            if not h1:
                if a != b:
                    break
                continue
            if a in names:
                if names[a] != b:
                    break
                continue
            if b in back:
                break
            names[a] = b
            back[b] = a
            added.append(a)
        else:
            return added
        for a in added:
            del back[names.pop(a)]
        return None

    def consistent(i: int, j: int) -> bool:
        for rel1, rel2 in ((E1.preds, E2.preds), (E1.succs, E2.succs), (conf1, conf2)):
            near = rel2[j]
            hits = 0
            for i2 in rel1[i]:
                j2 = mapping.get(i2)
                if j2 is not None:
                    if j2 not in near:
                        return False
                    hits += 1
            if hits != sum(1 for j2 in near if j2 in used):
                return False
        return True

    def go(k: int) -> bool:
        if k == len(order):
            return True
        i = order[k]
        for j in classes[c1[i]]:
            if j in used or not consistent(i, j):
                continue
            added = bind_names(i, j)
            if added is None:
                continue
            mapping[i] = j
            used.add(j)
            if go(k + 1):
                return True
            del mapping[i]
            used.discard(j)
            for a in added:
                del back[names.pop(a)]
        return False

    return go(0)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def fes_to_dot(E: Fes, name: str = "fes") -> str:
    lines = [f'digraph "{name}" {{']
    for e in E.nodes:
        style = "" if e.active else ", style=dashed"
        lines.append(f'  e{e.id} [label="{e}"{style}];')
    for d, e in sorted(E.flow):
        lines.append(f"  e{d} -> e{e};")
    for d in range(len(E.nodes)):
        for e in sorted(E.conflict_sets[d]):
            if d < e:
                lines.append(f"  e{d} -> e{e} [dir=none, style=dashed, color=red];")
    lines.append("}")
    return "\n".join(lines) + "\n"
