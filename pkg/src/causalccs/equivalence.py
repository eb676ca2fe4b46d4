"""Weak bisimulation relative to an observable set K.

Moves labelled outside K (including ``tau``) are unobservable and may be
matched by any sequence of unobservable moves, the empty one included;
a K-labelled move is matched by a K^c* k K^c* word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from causalccs.ccs import Action
from causalccs.lts import Lts

EPS = "<eps>"


@dataclass
class SaturatedLts:
    base: Lts
    eps: list[frozenset[int]]
    obs: dict[Action, list[frozenset[int]]] = field(default_factory=dict)

    def pairs(self, label=EPS) -> set[tuple[int, int]]:
        rel = self.eps if label == EPS else self.obs[label]
        return {(s, t) for s, ts in enumerate(rel) for t in ts}


def saturate(lts: Lts, K: Iterable[Action]) -> SaturatedLts:
    K = frozenset(K)
    n = lts.num_states
    silent: list[list[int]] = [[] for _ in range(n)]
    visible: dict[Action, list[list[int]]] = {k: [[] for _ in range(n)] for k in K}
    for s, a, t in lts.edges:
        if a in K:
            visible[a][s].append(t)
        else:
            silent[s].append(t)
    eps = []
    for s in range(n):
        seen = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for v in silent[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        eps.append(frozenset(seen))
    obs = {}
    for k, step in visible.items():
        after = [frozenset().union(*(eps[v] for v in step[u])) if step[u] else frozenset()
                 for u in range(n)]
        obs[k] = [frozenset().union(*(after[u] for u in eps[s])) for s in range(n)]
    return SaturatedLts(lts, eps, obs)


@dataclass
class Verdict:
    equivalent: bool
    witness: tuple[int, int, object] | None = None
    blocks: int = 0

    def __bool__(self):
        return self.equivalent


def _refine(succ: list[dict[object, frozenset[int]]], n: int):
    """Coarsest stable partition; yields the history of block assignments."""
    block = [0] * n
    history = [block]
    count = 1
    while True:
        sigs: dict[tuple, int] = {}
        new = []
        for s in range(n):
            sig = (block[s],) + tuple(sorted(
                (str(lab), frozenset(block[t] for t in ts)) for lab, ts in succ[s].items()
                if ts
            ))
            new.append(sigs.setdefault(sig, len(sigs)))
        history.append(new)
        if len(sigs) == count:
            return new, history
        block, count = new, len(sigs)


def weak_bisim(l1: Lts, l2: Lts, K: Iterable[Action]) -> Verdict:
    """Decide whether the initial states of ``l1`` and ``l2`` are weakly bisimilar."""
    K = frozenset(K)
    s1, s2 = saturate(l1, K), saturate(l2, K)
    off = l1.num_states
    n = off + l2.num_states
    succ: list[dict[object, frozenset[int]]] = []
    for sat, shift in ((s1, 0), (s2, off)):
        for s in range(sat.base.num_states):
            row = {EPS: frozenset(t + shift for t in sat.eps[s])}
            for k, rel in sat.obs.items():
                row[k] = frozenset(t + shift for t in rel[s])
            succ.append(row)
    block, history = _refine(succ, n)
    a, b = l1.initial, l2.initial + off
    if block[a] == block[b]:
        return Verdict(True, None, len(set(block)))
    # the last round in which a and b still shared a block tells which label split them
    for before, after in zip(history, history[1:]):
        if after[a] != after[b]:
            for lab in [EPS] + sorted(K):
                ta = frozenset(before[t] for t in succ[a].get(lab, ()))
                tb = frozenset(before[t] for t in succ[b].get(lab, ()))
                if ta != tb:
                    return Verdict(False, (l1.initial, l2.initial, lab), len(set(block)))
    return Verdict(False, (l1.initial, l2.initial, None), len(set(block)))


def strong_bisim_naive(l1: Lts, l2: Lts) -> bool:
    """Greatest-fixpoint strong bisimilarity on state pairs; quadratic, for cross-checks."""
    succ1, succ2 = l1.successors(), l2.successors()
    rel = {(p, q) for p in l1.states for q in l2.states}
    changed = True
    while changed:
        changed = False
        for p, q in list(rel):
            fwd = all(any(b == a and (p2, q2) in rel for b, q2 in succ2[q]) for a, p2 in succ1[p])
            bwd = all(any(a == b and (p2, q2) in rel for a, p2 in succ1[p]) for b, q2 in succ2[q])
            if not (fwd and bwd):
                rel.discard((p, q))
                changed = True
    return (l1.initial, l2.initial) in rel
