"""Dining philosophers: process generators, specification and benchmark."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

from causalccs.ccs import Action, CCSError, Env, Process, build_lts, parse
from causalccs.compress import compute_cts
from causalccs.equivalence import weak_bisim
from causalccs.lts import Lts


def _check(n: int) -> None:
    if not isinstance(n, int) or n < 2:
        raise CCSError(f"need at least 2 philosophers, got {n!r}")


def observables(n: int) -> list[Action]:
    return [Action("in", f"{kind}{i}") for i in range(1, n + 1) for kind in ("eat", "rel")]


def _forks(i: int, n: int) -> tuple[str, str]:
    return f"t{i}", f"t{i % n + 1}"


def _assemble(n: int, defs: list[str]) -> str:
    binders = ",".join(f"t{i}" for i in range(1, n + 1))
    chops = " | ".join(f"~t{i}" for i in range(1, n + 1))
    phils = " | ".join(f"Phil{i}({','.join(_forks(i, n))},eat{i},rel{i})" for i in range(1, n + 1))
    return "\n".join(defs) + f"\n({binders})({chops} | {phils})\n"


def phil_partial_source(n: int) -> str:
    """Philosophers who keep a chopstick until they have eaten."""
    _check(n)
    defs = [f"Phil{i}(l,r,e,x) = l.r.e.x.(~l | ~r | Phil{i}(l,r,e,x))" for i in range(1, n + 1)]
    return _assemble(n, defs)


def phil_full_source(n: int) -> str:
    """Philosophers who may silently put a chopstick back after each acquisition."""
    _check(n)
    defs = [
        f"Phil{i}(l,r,e,x) = l.(tau.(~l | Phil{i}(l,r,e,x))"
        f" + r.(tau.(~l | ~r | Phil{i}(l,r,e,x)) + e.x.(~l | ~r | Phil{i}(l,r,e,x))))"
        for i in range(1, n + 1)
    ]
    return _assemble(n, defs)


def phil_partial(n: int) -> tuple[Process, Env, list[Action]]:
    p, env = parse(phil_partial_source(n))
    return p, env, observables(n)


def phil_full(n: int) -> tuple[Process, Env, list[Action]]:
    p, env = parse(phil_full_source(n))
    return p, env, observables(n)


def phil_spec(n: int) -> Lts:
    """Sets of philosophers eating at once; eat and release move between them."""
    _check(n)
    states = [frozenset(c) for k in range(n // 2 + 1)
              for c in itertools.combinations(range(1, n + 1), k)
              if all(not (i % n + 1 in c) for i in c)]
    lts = Lts(name=f"phil_spec{n}")
    index = {s: lts.add_state(s) for s in states}
    lts.initial = index[frozenset()]
    for s in states:
        for i in range(1, n + 1):
            left, right = (i - 2) % n + 1, i % n + 1
            if i in s:
                lts.add_edge(index[s], Action("in", f"rel{i}"), index[s - {i}])
            elif left not in s and right not in s:
                lts.add_edge(index[s], Action("in", f"eat{i}"), index[s | {i}])
    return lts


def spec_count(n: int) -> int:
    """S(1)=1, S(2)=3, S(n+1)=S(n)+S(n-1)."""
    a, b = 1, 3
    if n == 1:
        return 1
    for _ in range(n - 2):
        a, b = b, a + b
    return b


@dataclass
class BenchRecord:
    n: int
    cts_states: int
    cts_edges: int
    wall_time: float
    verdict: str
    expected_states: int = 0

    def row(self) -> str:
        return (f"{self.n:>3} {self.cts_states:>8} {self.expected_states:>8} {self.cts_edges:>8} "
                f"{self.wall_time:>9.3f} {self.wall_time / max(self.cts_states, 1) * 1000:>9.3f}  {self.verdict}")


BENCH_HEADER = "  n   states expected    edges  time(s)  ms/state  verdict"


def bench_one(n: int, mode: str = "partial", max_states: int = 100_000) -> BenchRecord:
    spec = phil_spec(n)
    t0 = time.perf_counter()
    if mode == "partial":
        p, env, K = phil_partial(n)
        lts = compute_cts(p, env, K, max_states=max_states)
    elif mode == "full":
        p, env, K = phil_full(n)
        try:
            lts = build_lts(p, env, max_states=max_states)
        except Exception as exc:  # StateBudgetExceeded carries the partial system
            lts = getattr(exc, "partial", None) or Lts(truncated=True)
            lts.truncated = True
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if lts.truncated:
        verdict = "truncated"
    else:
        verdict = "equivalent" if weak_bisim(lts, spec, K) else "not"
    wall = time.perf_counter() - t0
    return BenchRecord(n, lts.num_states, len(lts.edges), wall, verdict, spec_count(n))


def run_bench(n_max: int, mode: str = "partial", n_min: int = 2) -> list[BenchRecord]:
    return [bench_one(n, mode) for n in range(n_min, n_max + 1)]
