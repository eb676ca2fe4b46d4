import pytest

from causalccs import parse, parse_action
from causalccs.gen import corpus

# (source, observables) pairs that every cross-validation suite includes
WORKED = [
    ("(x)(x | x | ~x.~x.a | ~x.~x.b)", "a,b"),
    ("k.0", "k"),
    ("a.k.0 + b.0", "k"),
    ("a.c.~a.0 | ~a.0", "c"),
    ("(a)(a.c.~a.0 | ~a.0)", "c"),
    ("a.(b.0 | c.0 + d.0) + e.0", "b,c,d,e"),
    ("(l)(~l | l.a.~l | l.b.~l)", "a,b"),
    ("(x)(x.a.0 | ~x.0 + ~x.b.0)", "a,b"),
    ("D(k,x) = x.k.D(k,x)\n(x)(D(k,x) | ~x | ~x)", "k"),
    ("D(k,e) = k.E(k,e)\nE(k,e) = e.D(k,e) + tau.0\nD(k,e)", "k"),
    ("(t1,t2)(~t1 | ~t2 | P(t1,t2,eat1,rel1) | P(t2,t1,eat2,rel2))\n"
     "P(l,r,e,x) = l.r.e.x.(~l | ~r | P(l,r,e,x))", "eat1,rel1,eat2,rel2"),
]

ACCEPTANCE_LINES: list[str] = []


def worked_examples():
    out = []
    for src, obs in WORKED:
        p, env = parse(src)
        out.append((src, p, env, [parse_action(a) for a in obs.split(",")]))
    return out


@pytest.fixture(scope="session")
def recursive_corpus():
    return corpus(2024, 220, recursive=True)


@pytest.fixture(scope="session")
def flat_corpus():
    return corpus(7, 60, recursive=False)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
