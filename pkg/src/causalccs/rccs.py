"""Reversible CCS: memories, forward/backward/commit moves and trace causality.

Reachable terms are kept in a flat shape: every restriction is extruded to
the top with a globally fresh name (``x#3``) and the threads below it carry
sequential code only (prefix sums, calls, ``0``). Open memory elements also
keep the continuation of the action, which makes undoing a move an exact
inverse even after the continuation has been split into several threads.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from causalccs.ccs import (
    NIL, TAU, Action, Call, CCSError, Env, Nil, Par, Prefix, Process, Restrict, Sum,
    StateBudgetExceeded, UnguardedRecursionError, UNFOLD_LIMIT, normalize, par_of,
    substitute, summands,
)
from causalccs.lts import Lts

FORWARD, BACKWARD = "forward", "backward"
COMMIT, REVERSIBLE = "commit", "reversible"


@dataclass(frozen=True)
class Open:
    tid: int
    action: Action
    alternative: Process
    continuation: Process = NIL


@dataclass(frozen=True)
class Closed:
    tid: int


Memory = tuple  # of Open | Closed, top first


class RProcess:
    __slots__ = ()

    def __str__(self):
        return _show(self)


@dataclass(frozen=True)
class Thread(RProcess):
    memory: Memory
    code: Process

    __str__ = RProcess.__str__


@dataclass(frozen=True)
class RPar(RProcess):
    left: RProcess
    right: RProcess

    __str__ = RProcess.__str__


@dataclass(frozen=True)
class RRestrict(RProcess):
    channel: str
    body: RProcess

    __str__ = RProcess.__str__


def _show_mem(m: Memory) -> str:
    parts = []
    for e in m:
        if isinstance(e, Open):
            parts.append(f"<{e.tid},{e.action},{e.alternative}>")
        else:
            parts.append(f"<{e.tid}>")
    return ".".join(parts + ["<>"])


def _show(r: RProcess) -> str:
    if isinstance(r, Thread):
        return f"{_show_mem(r.memory)} > {r.code}"
    if isinstance(r, RPar):
        return f"({_show(r.left)}) | ({_show(r.right)})"
    return f"({r.channel})({_show(r.body)})"


@dataclass(frozen=True)
class RTransition:
    source: RProcess
    label: Action
    tid: int
    direction: str
    target: RProcess
    kind: str

    @property
    def forward(self) -> bool:
        return self.direction == FORWARD

    def __str__(self):
        mark = "" if self.forward else "-"
        return f"{self.label}^{self.tid}{mark}"


# ---------------------------------------------------------------------------
# flat representation
# ---------------------------------------------------------------------------

_HIDDEN = re.compile(r"#(\d+)\Z")


def flatten(r: RProcess) -> tuple[list[str], list[Thread]]:
    names: list[str] = []
    threads: list[Thread] = []
    stack = [r]
    while stack:
        q = stack.pop()
        if isinstance(q, Thread):
            threads.append(q)
        elif isinstance(q, RPar):
            stack.extend((q.right, q.left))
        else:
            names.append(q.channel)
            stack.append(q.body)
    return names, threads


def assemble(names: Iterable[str], threads: Iterable[Thread]) -> RProcess:
    threads = sorted(threads, key=str)
    if not threads:
        body: RProcess = Thread((), NIL)
    else:
        body = threads[0]
        for t in threads[1:]:
            body = RPar(body, t)
    for x in sorted(set(names), reverse=True):
        body = RRestrict(x, body)
    return body


class _Fresh:
    """Hands out hidden names ``base#n`` not used anywhere in the term."""

    def __init__(self, names: Iterable[str]):
        top = 0
        for x in names:
            m = _HIDDEN.search(x)
            if m:
                top = max(top, int(m.group(1)))
        self.n = top

    def __call__(self, base: str) -> str:
        self.n += 1
        return f"{base.split('#')[0]}#{self.n}"


def _spawn(memory: Memory, code: Process, env: Env, fresh: _Fresh,
           names: list[str], budget: list[int]) -> list[Thread]:
    """Distribute ``memory`` over the parallel components of ``code``."""
    if isinstance(code, Par):
        return (_spawn(memory, code.left, env, fresh, names, budget)
                + _spawn(memory, code.right, env, fresh, names, budget))
    if isinstance(code, Restrict):
        y = fresh(code.channel)
        names.append(y)
        return _spawn(memory, substitute(code.body, {code.channel: y}), env, fresh, names, budget)
    if isinstance(code, Call):
        budget[0] -= 1
        if budget[0] < 0:
            raise UnguardedRecursionError(f"unguarded recursion through {code.name}")
        return _spawn(memory, env.unfold(code.name, code.args), env, fresh, names, budget)
    if isinstance(code, Nil) and not memory:
        return []
    return [Thread(memory, code)]


def _all_names(r: RProcess) -> set[str]:
    names, threads = flatten(r)
    out = set(names)
    for t in threads:
        out |= _proc_names(t.code)
        for e in t.memory:
            if isinstance(e, Open):
                out |= _proc_names(e.alternative) | _proc_names(e.continuation)
                if e.action.channel:
                    out.add(e.action.channel)
    return out


def _proc_names(p: Process) -> set[str]:
    out = set()
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, Prefix):
            if q.action.channel:
                out.add(q.action.channel)
            stack.append(q.body)
        elif isinstance(q, (Par, Sum)):
            stack.extend((q.left, q.right))
        elif isinstance(q, Restrict):
            out.add(q.channel)
            stack.append(q.body)
        elif isinstance(q, Call):
            out.update(q.args)
    return out


def lift(p: Process, K: Iterable[Action] = (), env: Env | None = None) -> RProcess:
    """``<> > p`` with the memory distributed over parallel components."""
    env = env if env is not None else Env()
    names: list[str] = []
    fresh = _Fresh(_proc_names(p))
    threads = _spawn((), p, env, fresh, names, [UNFOLD_LIMIT])
    return assemble(names, threads)


def forget(r: RProcess) -> Process:
    """Erase memories; the result is normalized."""
    names, threads = flatten(r)
    body: Process = par_of(t.code for t in threads)
    for x in names:
        body = Restrict(x, body)
    return normalize(body)


# ---------------------------------------------------------------------------
# moves
# ---------------------------------------------------------------------------


def _options(code: Process, env: Env, budget: list[int]) -> list[tuple[Action, Process, Process]]:
    """Guarded summands of sequential code as (action, continuation, alternative)."""
    flat: list[Process] = []
    todo = list(reversed(summands(code)))
    while todo:
        q = todo.pop()
        if isinstance(q, Call):
            budget[0] -= 1
            if budget[0] < 0:
                raise UnguardedRecursionError(f"unguarded recursion through {q.name}")
            todo.extend(reversed(summands(env.unfold(q.name, q.args))))
        elif isinstance(q, Prefix):
            flat.append(q)
        elif not isinstance(q, Nil):
            raise CCSError(f"choice operand {q} is not guarded by a prefix")
    out = []
    for i, q in enumerate(flat):
        rest = flat[:i] + flat[i + 1:]
        alt = NIL
        for s in rest:
            alt = s if isinstance(alt, Nil) else Sum(alt, s)
        out.append((q.action, q.body, alt))
    return out


def _max_tid(threads: Sequence[Thread]) -> int:
    return max((e.tid for t in threads for e in t.memory), default=0)


def rtransitions(r: RProcess, K: Iterable[Action], env: Env | None = None,
                 next_tid: int | None = None, backward: bool = True) -> list[RTransition]:
    """All forward, commit and backward moves of ``r``.

    ``next_tid`` supplies the identifier used by forward moves; by default it
    is one more than the largest identifier stored in ``r``.
    """
    env = env if env is not None else Env()
    K = frozenset(K)
    names, threads = flatten(r)
    hidden = set(names)
    tid = next_tid if next_tid is not None else _max_tid(threads) + 1
    fresh = _Fresh(_all_names(r))
    budget = [UNFOLD_LIMIT]
    opts = [_options(t.code, env, budget) for t in threads]
    out: list[RTransition] = []

    def build(replace: dict[int, list[Thread]], extra_names: list[str]) -> RProcess:
        new = []
        for i, t in enumerate(threads):
            new.extend(replace[i]) if i in replace else new.append(t)
        return assemble(names + extra_names, new)

    for i, t in enumerate(threads):
        for a, cont, alt in opts[i]:
            if not a.silent and a.channel in hidden:
                continue
            extra: list[str] = []
            if a in K:
                mem = (Closed(tid),) + t.memory
                kind = COMMIT
            else:
                mem = (Open(tid, a, alt, cont),) + t.memory
                kind = REVERSIBLE
            spawned = _spawn(mem, cont, env, fresh, extra, budget)
            out.append(RTransition(r, a, tid, FORWARD, build({i: spawned}, extra), kind))

    for i, t in enumerate(threads):
        for j in range(i + 1, len(threads)):
            u = threads[j]
            for a, cont, alt in opts[i]:
                if a.silent or a in K:
                    continue
                for b, cont2, alt2 in opts[j]:
                    if b != a.complement() or b in K:
                        continue
                    extra = []
                    left = _spawn((Open(tid, a, alt, cont),) + t.memory, cont, env, fresh, extra, budget)
                    right = _spawn((Open(tid, b, alt2, cont2),) + u.memory, cont2, env, fresh, extra, budget)
                    out.append(RTransition(r, TAU, tid, FORWARD, build({i: left, j: right}, extra), REVERSIBLE))

    if backward:
        out.extend(_backward(r, names, threads))
    return out


def _backward(r: RProcess, names: list[str], threads: list[Thread]) -> list[RTransition]:
    out = []
    holders: dict[int, list[int]] = {}
    for i, t in enumerate(threads):
        for e in t.memory:
            holders.setdefault(e.tid, []).append(i)
    hidden = set(names)
    for tid in sorted(holders):
        idx = holders[tid]
        if not all(isinstance(threads[i].memory[0], Open) and threads[i].memory[0].tid == tid
                   for i in idx):
            continue
        groups: dict[tuple, None] = {}
        for i in idx:
            groups[(threads[i].memory[0], threads[i].memory[1:])] = None
        if len(groups) > 2:
            continue
        restored = []
        for elem, rest in groups:
            code = Prefix(elem.action, elem.continuation)
            if not isinstance(elem.alternative, Nil):
                code = Sum(code, elem.alternative)
            restored.append(Thread(rest, code))
        if len(groups) == 1:
            label = next(iter(groups))[0].action
            if not label.silent and label.channel in hidden:
                continue
        else:
            label = TAU
        keep = [t for i, t in enumerate(threads) if i not in set(idx)]
        target = assemble(names, keep + restored)
        out.append(RTransition(r, label, tid, BACKWARD, target, REVERSIBLE))
    return out


# ---------------------------------------------------------------------------
# causality
# ---------------------------------------------------------------------------


def _pushed(t: RTransition) -> set[Memory]:
    """Memories of ``t``'s target whose top element was created by ``t``."""
    _, threads = flatten(t.target)
    return {th.memory for th in threads if th.memory and th.memory[0].tid == t.tid}


def mu(t: RTransition) -> set[Memory]:
    """The memories a forward transition acted upon."""
    if not t.forward:
        raise ValueError("mu is defined for forward transitions only")
    return {m[1:] for m in _pushed(t)}


def _is_suffix(short: Memory, long: Memory) -> bool:
    return len(short) <= len(long) and long[len(long) - len(short):] == short


def direct_cause(trace: Sequence[RTransition], i: int, j: int) -> bool:
    """Whether step ``i`` directly causes step ``j`` (0-based, ``i < j``).

    Step ``j`` must act on a memory extending the one step ``i`` pushed; a bare
    strict-prefix test between the acted-upon memories would make the empty
    memory cause everything.
    """
    n = len(trace)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("trace index out of range")
    if i >= j:
        return False
    pushed = _pushed(trace[i])
    return any(_is_suffix(m, m2) for m in pushed for m2 in mu(trace[j]))


def causes(trace: Sequence[RTransition]) -> list[set[int]]:
    """``causes(trace)[j]`` = indices of steps causing step ``j`` (transitive)."""
    out: list[set[int]] = []
    for j in range(len(trace)):
        anc: set[int] = set()
        for i in range(j):
            if direct_cause(trace, i, j):
                anc.add(i)
                anc |= out[i]
        out.append(anc)
    return out


def is_causal(trace: Sequence[RTransition]) -> bool:
    if not trace:
        return False
    n = len(trace) - 1
    return causes(trace)[n] == set(range(n))


def is_k_causal(trace: Sequence[RTransition], K: Iterable[Action]) -> bool:
    K = frozenset(K)
    if not trace or not all(t.forward for t in trace):
        return False
    if trace[-1].label not in K or any(t.label in K for t in trace[:-1]):
        return False
    return is_causal(trace)


# ---------------------------------------------------------------------------
# canonical keys and exploration
# ---------------------------------------------------------------------------


def rkey(r: RProcess) -> str:
    """State key insensitive to thread order, identifier values and hidden names."""
    names, threads = flatten(r)
    hidden = set(names)

    def render(t: Thread, tids: dict[int, str], hmap: dict[str, str]) -> str:
        def proc(p: Process) -> str:
            return str(normalize(substitute(p, hmap)))

        parts = []
        for e in t.memory:
            if isinstance(e, Open):
                parts.append(f"<{tids.get(e.tid, '?')},{e.action.rename(hmap)},"
                             f"{proc(e.alternative)},{proc(e.continuation)}>")
            else:
                parts.append(f"<{tids.get(e.tid, '?')}>")
        return ".".join(parts) + " > " + proc(t.code)

    blank = {x: "$" for x in hidden}
    order = sorted(threads, key=lambda t: render(t, {}, blank))
    tids: dict[int, str] = {}
    hmap: dict[str, str] = {}
    for t in order:
        for e in t.memory:
            tids.setdefault(e.tid, str(len(tids)))
        for x in sorted(_all_names(Thread(t.memory, t.code)) & hidden,
                        key=lambda x: render(t, {}, {**blank, x: "$$"})):
            hmap.setdefault(x, f"${len(hmap)}")
    return " | ".join(sorted(render(t, tids, {**blank, **hmap}) for t in order))


def open_count(r: RProcess) -> int:
    seen = set()
    for t in flatten(r)[1]:
        seen.update(e.tid for e in t.memory if isinstance(e, Open))
    return len(seen)


def backtrack_normal_form(r: RProcess, K: Iterable[Action] = (), env: Env | None = None,
                          max_steps: int = 100_000) -> RProcess:
    """Undo reversible moves until none is left."""
    for _ in range(max_steps):
        back = _backward(r, *flatten(r))
        if not back:
            return r
        r = back[0].target
    raise RuntimeError("backtracking did not terminate")


def backward_normal_forms(r: RProcess) -> set[str]:
    """Keys of every state reachable by a maximal backward path (exhaustive)."""
    out: set[str] = set()
    seen: set[str] = set()
    todo = [r]
    while todo:
        q = todo.pop()
        k = rkey(q)
        if k in seen:
            continue
        seen.add(k)
        back = _backward(q, *flatten(q))
        if not back:
            out.add(k)
        todo.extend(t.target for t in back)
    return out


def reversible_lts(p: Process, K: Iterable[Action], env: Env | None = None,
                   max_states: int = 200_000) -> Lts:
    """Reachable LTS of the lift of ``p``: K labels kept, everything else ``tau``."""
    env = env if env is not None else Env()
    K = frozenset(K)
    lts = Lts(name="reversible")
    start = lift(p, K, env)
    index = {rkey(start): lts.add_state(start)}
    todo = deque([start])
    while todo:
        r = todo.popleft()
        src = index[rkey(r)]
        for t in rtransitions(r, K, env):
            k = rkey(t.target)
            if k not in index:
                if len(index) >= max_states:
                    lts.truncated = True
                    raise StateBudgetExceeded(f"state budget of {max_states} exceeded", lts)
                index[k] = lts.add_state(t.target)
                todo.append(t.target)
            label = t.label if (t.forward and t.label in K) else TAU
            lts.add_edge(src, label, index[k])
    return lts


# ---------------------------------------------------------------------------
# validation and the brute-force compression oracle
# ---------------------------------------------------------------------------


def free_actions(p: Process, env: Env) -> set[Action]:
    """Actions on free channels of ``p`` and of every definition instance it reaches."""
    acts: set[Action] = set()
    seen: set[tuple[str, tuple[str, ...]]] = set()
    todo: list[tuple[Process, frozenset[str]]] = [(p, frozenset())]
    while todo:
        q, bound = todo.pop()
        if isinstance(q, Prefix):
            if not q.action.silent and q.action.channel not in bound:
                acts.add(q.action)
            todo.append((q.body, bound))
        elif isinstance(q, (Par, Sum)):
            todo.extend(((q.left, bound), (q.right, bound)))
        elif isinstance(q, Restrict):
            todo.append((q.body, bound | {q.channel}))
        elif isinstance(q, Call):
            args = tuple("#bound" if a in bound else a for a in q.args)
            if (q.name, args) not in seen:
                seen.add((q.name, args))
                todo.append((env.unfold(q.name, args), frozenset({"#bound"})))
    return acts


def check_commits(p: Process, env: Env, K: Iterable[Action]) -> None:
    """Reject silent observables and commits that could synchronize."""
    acts = free_actions(p, env)
    for k in K:
        if k.silent:
            raise CCSError("tau cannot be observable")
        if k.complement() in acts and k in acts:
            raise CCSError(f"commit {k} can synchronize with {k.complement()}")


@dataclass
class OracleStats:
    trace_nodes: int = 0
    truncated: bool = False


def oracle_cts(p: Process, K: Iterable[Action], env: Env | None = None,
               max_states: int = 100_000, max_nodes: int = 1_000_000,
               max_depth: int | None = None) -> Lts:
    """Causal transition system by brute-force enumeration of forward traces.

    From the lift of every discovered CCS state, forward reversible traces are
    extended depth first; each commit that closes a k-causal trace yields an
    edge to the memory-erased target. Traces reaching an already visited
    reversible state are cut, since causality of any extension only depends
    on the memories of that state.
    """
    env = env if env is not None else Env()
    K = frozenset(K)
    check_commits(p, env, K)
    lts = Lts(name="oracle")
    start = normalize(p)
    index = {start: lts.add_state(start)}
    todo = deque([start])
    while todo:
        q = todo.popleft()
        src = index[q]
        for k, target in _causal_steps(q, K, env, max_nodes, max_depth, lts):
            if target not in index:
                if len(index) >= max_states:
                    lts.truncated = True
                    return lts
                index[target] = lts.add_state(target)
                todo.append(target)
            lts.add_edge(src, k, index[target])
    return lts


def _causal_steps(q: Process, K: frozenset, env: Env, max_nodes: int,
                  max_depth: int | None, lts: Lts) -> set[tuple[Action, Process]]:
    found: set[tuple[Action, Process]] = set()
    seen: set[str] = set()
    nodes = 0
    path: list[RTransition] = []

    def dfs(r: RProcess) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            lts.truncated = True
            return
        for t in rtransitions(r, K, env, backward=False):
            if t.kind == COMMIT:
                if is_k_causal(path + [t], K):
                    found.add((t.label, forget(t.target)))
                continue
            if max_depth is not None and len(path) >= max_depth:
                lts.truncated = True
                continue
            key = rkey(t.target)
            if key in seen:
                continue
            seen.add(key)
            path.append(t)
            dfs(t.target)
            path.pop()

    dfs(lift(q, K, env))
    return found
