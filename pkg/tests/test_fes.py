import itertools
import random

import pytest

from causalccs.ccs import Action, Nil, Par, Prefix, Restrict, Sum, parse
from causalccs.fes import (
    ExplicitFes, GuardError, active_part, check_commit_guarded, configurations, conflict_naive,
    e_minimal_configs, e_minimal_configs_bruteforce, fes_to_dot, is_configuration, isomorphic,
    partial_unfold, residual, signature,
)

def unfold(src, K=()):
    p, env = parse(src)
    return partial_unfold(p, env, [Action.inp(k) for k in K])


def ids(E, label):
    return [e.id for e in E.events if str(e.label) == label]


def labels_of(E, X):
    return sorted(str(E.nodes[x].label) for x in X)


# -- worked structures ------------------------------------------------------------


@pytest.fixture
def fig():
    """An output racing a synchronization, then a commit c."""
    return unfold("a.c.~a.0 | ~a.0", ["c"])


def test_events_of_race(fig):
    assert sorted(str(e.label) for e in fig.events) == ["a", "c", "tau", "~a", "~a"]


def test_flow_of_race(fig):
    (a,), (t,), (c,) = ids(fig, "a"), ids(fig, "tau"), ids(fig, "c")
    assert (a, c) in fig.flow and (t, c) in fig.flow
    inner = [d for d, e in fig.flow if d == c]
    assert len(inner) == 1


def test_conflicts_of_race(fig):
    (a,), (t,) = ids(fig, "a"), ids(fig, "tau")
    assert fig.conflict(a, t)
    outer = [e for e in ids(fig, "~a") if fig.conflict(t, e)]
    assert len(outer) == 1
    assert not fig.conflict(a, outer[0])


def test_two_minimal_configurations_for_the_commit(fig):
    (c,) = ids(fig, "c")
    got = {tuple(labels_of(fig, X)) for X in e_minimal_configs(fig, c)}
    assert got == {("a", "c"), ("c", "tau")}


def test_residual_after_synchronization(fig):
    (c,) = ids(fig, "c")
    (t,) = ids(fig, "tau")
    X = next(X for X in e_minimal_configs(fig, c) if t in X)
    R = residual(fig, X)
    assert [str(e.label) for e in R.events] == ["~a"]


def test_restricted_pair_gives_single_silent_event():
    E = unfold("(x)(x | ~x)")
    assert [str(e.label) for e in E.events] == ["tau"]


def test_choice_rectangles_and_conflicts():
    E = unfold("a.(b.0 | c.0 + d.0) + e.0")
    assert E.tree.rectangles() == [((0, 3), (4, 4)), ((1, 1), (2, 2))]
    (b,), (c,), (d,), (e,) = (ids(E, x) for x in "bcde")
    assert E.conflict(b, e) and E.conflict(c, d)
    assert not E.conflict(b, c)


def test_conflict_matches_naive_definition(flat_corpus):
    for s in flat_corpus[:30]:
        E = partial_unfold(s.process, s.env, s.K)
        evs = [e.id for e in E.events]
        for d, e in itertools.combinations(evs, 2):
            assert E.conflict(d, e) == conflict_naive(E, d, e)


def test_is_configuration_examples():
    E = unfold("a.(b.0 | c.0 + d.0) + e.0")
    (a,), (b,), (c,), (d,), (e,) = (ids(E, x) for x in "abcde")
    assert is_configuration(E, {a, b, c})
    assert is_configuration(E, {e})
    assert not is_configuration(E, {b})
    assert not is_configuration(E, {a, c, d})
    assert not is_configuration(E, {a, e})


def test_dot_export_lists_events():
    E = unfold("a.b.0")
    dot = fes_to_dot(E)
    assert dot.startswith("digraph") and "->" in dot


# -- commit guard -------------------------------------------------------------------


def test_guarded_recursion_accepted():
    p, env = parse("D(a,k) = a.k.D(a,k)\nD(a,k)")
    check_commit_guarded(p, env, [Action.inp("k")])


def test_unguarded_recursion_rejected():
    p, env = parse("D(a,k) = a.D(a,k)\nD(a,k)")
    with pytest.raises(GuardError):
        check_commit_guarded(p, env, [Action.inp("k")])


def test_mutual_recursion_through_commit_accepted():
    p, env = parse("D(a,k) = k.E(a,k)\nE(a,k) = a.D(a,k)\nD(a,k)")
    check_commit_guarded(p, env, [Action.inp("k")])


def test_calls_below_commits_become_stubs():
    E = unfold("D(a,k) = a.k.D(a,k)\nD(a,k)", ["k"])
    assert sorted(str(e.label) for e in E.events) == ["a", "k"]
    assert len(E.stubs) == 1


# -- e-minimal configurations ---------------------------------------------------------


def test_chain_has_one_minimal_configuration():
    E = ExplicitFes(["a", "k"], [(0, 1)])
    assert e_minimal_configs(E, 1) == {frozenset({0, 1})}


def test_cause_in_conflict_with_effect_leaves_nothing():
    E = ExplicitFes(["a", "k"], [(0, 1)], [(0, 1)])
    assert e_minimal_configs(E, 1) == set()


def test_alternative_causes():
    E = ExplicitFes(["a", "b", "k"], [(0, 2), (1, 2)], [(0, 1)])
    assert e_minimal_configs(E, 2) == {frozenset({0, 2}), frozenset({1, 2})}


def test_search_matches_bruteforce(recursive_corpus):
    for s in recursive_corpus[:80]:
        E = partial_unfold(s.process, s.env, s.K)
        for e in E.events:
            assert e_minimal_configs(E, e.id) == e_minimal_configs_bruteforce(E, e.id)


# -- signature and isomorphism ----------------------------------------------------------


def test_signature_separates_labels_and_shapes():
    assert signature(unfold("a")) != signature(unfold("b"))
    assert signature(unfold("a + b")) != signature(unfold("a | b"))
    assert signature(unfold("a | b")) == signature(unfold("b | a"))


def test_isomorphism_sees_flow():
    assert not isomorphic(unfold("(u)(a | a)"), unfold("(u)(a.a)"))
    assert isomorphic(unfold("a.b | c"), unfold("c | a.b"))


def test_isomorphism_tracks_hidden_names():
    assert isomorphic(unfold("(x)(x.a | ~x)"), unfold("(y)(~y | y.a)"))
    assert not isomorphic(unfold("(x)(x.a | ~x)"), unfold("(x)(x.a) | ~x"))


def test_smallest_signature_collision():
    # a 2-cycle plus a dangling edge against a 4-chain: same local views
    E1 = ExplicitFes("aaaa", [(1, 3), (2, 0), (3, 1)])
    E2 = ExplicitFes("aaaa", [(1, 3), (2, 1), (3, 0)])
    assert signature(E1) == signature(E2)
    assert not isomorphic(E1, E2)


def test_no_collision_on_three_events():
    pairs = list(itertools.permutations(range(3), 2))
    undirected = list(itertools.combinations(range(3), 2))
    buckets: dict[int, list[ExplicitFes]] = {}
    for labels in ("aaa", "aab"):
        for fmask in range(1 << len(pairs)):
            flow = [pairs[i] for i in range(len(pairs)) if fmask >> i & 1]
            for cmask in range(1 << len(undirected)):
                conf = [undirected[i] for i in range(len(undirected)) if cmask >> i & 1]
                E = ExplicitFes(labels, flow, conf)
                buckets.setdefault(signature(E), []).append(E)
    for group in buckets.values():
        assert all(isomorphic(group[0], E) for E in group[1:])


def _shuffled(E, rng):
    perm = list(range(len(E.nodes)))
    rng.shuffle(perm)
    inv = {old: new for new, old in enumerate(perm)}
    return ExplicitFes(
        [E.nodes[old].label for old in perm],
        [(inv[d], inv[e]) for d, e in E.flow],
        [(inv[d], inv[e]) for d in range(len(E.nodes)) for e in E.conflict_sets[d] if d < e],
    )


def test_isomorphism_invariant_under_renumbering():
    rng = random.Random(3)
    for src in ("a.(b | c) + d", "(x)(x.a | ~x | ~x.b)", "a.b.c | a.c"):
        E = active_part(unfold(src))
        F = _shuffled(E, rng)
        assert signature(E) == signature(F)
        assert isomorphic(E, F)


# -- configurations against an independent enumerator ------------------------------------


def _tag(p, counter):
    if isinstance(p, Nil):
        return ("nil",)
    if isinstance(p, Prefix):
        counter[0] += 1
        return ("pre", p.action, counter[0], _tag(p.body, counter))
    if isinstance(p, Par):
        return ("par", _tag(p.left, counter), _tag(p.right, counter))
    if isinstance(p, Sum):
        return ("sum", _tag(p.left, counter), _tag(p.right, counter))
    if isinstance(p, Restrict):
        return ("res", p.channel, _tag(p.body, counter))
    raise TypeError(p)


def _moves(t):
    kind = t[0]
    if kind == "pre":
        return [(t[1], frozenset({t[2]}), t[3])]
    if kind == "sum":
        return _moves(t[1]) + _moves(t[2])
    if kind == "res":
        return [(a, g, ("res", t[1], r)) for a, g, r in _moves(t[2]) if a.channel != t[1]]
    if kind == "par":
        left, right = _moves(t[1]), _moves(t[2])
        out = [(a, g, ("par", r, t[2])) for a, g, r in left]
        out += [(a, g, ("par", t[1], r)) for a, g, r in right]
        for a, g, r in left:
            for b, h, s in right:
                if a.kind != "tau" and b == a.complement():
                    out.append((Action("tau"), g | h, ("par", r, s)))
        return out
    return []


def positional_histories(p) -> set[frozenset]:
    """Sets of fired prefix groups over all forward runs of a tagged term."""
    start = (_tag(p, [0]), frozenset())
    seen, stack = {start}, [start]
    while stack:
        t, fired = stack.pop()
        for _, g, r in _moves(t):
            nxt = (r, fired | {g})
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return {fired for _, fired in seen}


@pytest.mark.parametrize("src", [
    "a.c.~a.0 | ~a.0", "(x)(x | x | ~x.~x.a | ~x.~x.b)", "a.(b.0 | c.0 + d.0) + e.0",
    "(l)(~l | l.a.~l | l.b.~l)",
])
def test_configurations_match_histories(src):
    p, env = parse(src)
    assert len(configurations(partial_unfold(p, env))) == len(positional_histories(p))


def test_configurations_match_histories_on_corpus(flat_corpus):
    for s in flat_corpus:
        E = partial_unfold(s.process, s.env, s.K)
        assert len(configurations(E)) == len(positional_histories(s.process)), s.source
