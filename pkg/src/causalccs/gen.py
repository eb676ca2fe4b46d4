"""Random commit-guarded processes for cross-validation suites."""

from __future__ import annotations

import random
from dataclasses import dataclass

from causalccs.ccs import Action, Env, Process, parse

CHANNELS = ("a", "b", "c")
COMMITS = ("k1", "k2")


@dataclass
class Sample:
    source: str
    process: Process
    env: Env
    K: list[Action]


class _Builder:
    def __init__(self, rng: random.Random, budget: int, recursive: bool):
        self.rng = rng
        self.budget = budget
        self.recursive = recursive
        self.commits: set[str] = set()

    def action(self) -> str:
        roll = self.rng.random()
        if roll < 0.3:
            k = self.rng.choice(COMMITS)
            self.commits.add(k)
            return k
        if roll < 0.4:
            return "tau"
        ch = self.rng.choice(CHANNELS)
        return ch if self.rng.random() < 0.5 else "~" + ch

    def seq(self, guarded: bool, depth: int = 0) -> str:
        """Prefix sums; a call may only appear below a commit."""
        if self.budget <= 0 or (depth > 0 and self.rng.random() < 0.25):
            if guarded and self.recursive and self.rng.random() < 0.6:
                return "D(a,b,c,k1,k2)"
            return "0"
        width = 2 if self.budget >= 2 and self.rng.random() < 0.3 else 1
        branches = []
        for _ in range(width):
            if self.budget <= 0:
                break
            self.budget -= 1
            act = self.action()
            cont = self.seq(guarded or act in COMMITS, depth + 1)
            branches.append(f"{act}.({cont})")
        return " + ".join(branches)


def random_process(rng: random.Random, max_prefixes: int = 8, max_components: int = 3,
                   recursive: bool = True) -> Sample:
    """A process with at most ``max_prefixes`` prefixes in total (definition included).

    At least one commit is always present; commits are only used as inputs,
    so they can never synchronize.
    """
    while True:
        use_def = recursive and rng.random() < 0.5
        b = _Builder(rng, max_prefixes, use_def)
        src = ""
        if use_def:
            b.budget -= 1
            k = rng.choice(COMMITS)
            b.commits.add(k)
            src = f"D(a,b,c,k1,k2) = {k}.({b.seq(True, 1)})\n"
        comps = ["D(a,b,c,k1,k2)"] if use_def else []
        n = rng.randint(max(1, len(comps)), max_components)
        share, spare = divmod(b.budget, max(1, n - len(comps)))
        for i in range(n - len(comps)):
            b.budget = share + (spare if i == 0 else 0)
            comps.append(b.seq(False))
        if not b.commits:
            continue
        main = " | ".join(f"({c})" for c in comps)
        hidden = [c for c in CHANNELS if rng.random() < 0.5]
        if hidden:
            main = f"({','.join(hidden)})({main})"
        src += main + "\n"
        p, env = parse(src)
        K = [Action("in", k) for k in sorted(b.commits)]
        return Sample(src, p, env, K)


def corpus(seed: int, count: int, **kw) -> list[Sample]:
    rng = random.Random(seed)
    return [random_process(rng, **kw) for _ in range(count)]
