"""Causal transition systems by exploring event-structure states.

Each state is a flow event structure. From a state, every commit event ``e``
together with each of its e-minimal configurations gives one edge, labelled
with the commit, to the residual after that configuration (with the stubs the
commit released unfolded). States are merged up to isomorphism, with a
signature bucket in front of the exact check.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from causalccs.ccs import Action, Env, Process
from causalccs.fes import (
    MAX_EVENTS, EventBudgetExceeded, Fes, ShapeKeys, advance, advance_shape, e_minimal_configs,
    isomorphic, partial_unfold, signature,
)
from causalccs.lts import Lts
from causalccs.rccs import check_commits

MAX_STATES = 100_000


@dataclass
class CompressStats:
    states: int = 0
    edges: int = 0
    iso_checks: int = 0
    seconds: float = 0.0
    truncated: bool = False
    reason: str = ""


class Registry:
    """States up to isomorphism, bucketed by signature."""

    def __init__(self):
        self.buckets: dict[int, list[tuple[Fes, int]]] = {}
        self.iso_checks = 0

    def find(self, E: Fes, sig: int | None = None) -> int | None:
        sig = sig if sig is not None else signature(E)
        for other, sid in self.buckets.get(sig, ()):
            self.iso_checks += 1
            if isomorphic(E, other):
                return sid
        return None

    def add(self, E: Fes, sid: int, sig: int | None = None) -> None:
        sig = sig if sig is not None else signature(E)
        self.buckets.setdefault(sig, []).append((E, sid))


def canonical_key(E: Fes) -> int:
    """Signature used to bucket states; equal for isomorphic structures."""
    return signature(E)


def commit_moves(E: Fes) -> list[tuple[Action, frozenset[int]]]:
    """Commit label and e-minimal configuration for every edge leaving ``E``."""
    out = []
    for e in E.events:
        if e.label not in E.K:
            continue
        for X in sorted(e_minimal_configs(E, e.id, avoid=E.K), key=sorted):
            out.append((e.label, X))
    return out


def commit_steps(E: Fes, env: Env) -> list[tuple[Action, Fes]]:
    """Edges leaving ``E`` with their target structures."""
    return [(k, advance(E, X, env)) for k, X in commit_moves(E)]


def compute_cts(p: Process, env: Env | None = None, K: Iterable[Action] = (),
                max_states: int = MAX_STATES, max_events: int = MAX_EVENTS,
                stats: CompressStats | None = None) -> Lts:
    """Causal transition system of ``p`` relative to the commits ``K``.

    Targets are first looked up by their shape text, which catches the
    common case of a syntactically identical residual without deriving it;
    otherwise the derived structure goes through the signature registry.
    Exceeding a budget stops the exploration; the partial system is returned
    with ``truncated`` set.
    """
    env = env if env is not None else Env()
    K = frozenset(K)
    stats = stats if stats is not None else CompressStats()
    t0 = time.perf_counter()
    check_commits(p, env, K)
    lts = Lts(name="cts")
    registry = Registry()
    keys = ShapeKeys()
    by_shape: dict[str, int] = {}
    start = partial_unfold(p, env, K, max_events)
    sid = lts.add_state(start)
    registry.add(start, sid)
    by_shape[keys(start.shape)] = sid
    todo = deque([sid])
    try:
        while todo:
            src = todo.popleft()
            E = lts.payloads[src]
            for k, X in commit_moves(E):
                shape, hidden = advance_shape(E, X, env)
                key = keys(shape)
                dst = by_shape.get(key)
                if dst is None:
                    E2 = Fes(shape, hidden, K, max_events)
                    sig = signature(E2)
                    dst = registry.find(E2, sig)
                    if dst is None:
                        if lts.num_states >= max_states:
                            stats.reason = f"state budget of {max_states} exceeded"
                            lts.truncated = True
                            break
                        dst = lts.add_state(E2)
                        registry.add(E2, dst, sig)
                        todo.append(dst)
                    by_shape[key] = dst
                lts.add_edge(src, k, dst)
            if lts.truncated:
                break
    except EventBudgetExceeded as exc:
        stats.reason = str(exc)
        lts.truncated = True
    stats.states = lts.num_states
    stats.edges = len(lts.edges)
    stats.iso_checks = registry.iso_checks
    stats.seconds = time.perf_counter() - t0
    stats.truncated = lts.truncated
    return lts
