"""CCS terms, concrete syntax, structural congruence and interleaving semantics."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

__all__ = [
    "Action", "TAU", "Process", "Nil", "Prefix", "Par", "Sum", "Restrict", "Call",
    "Definition", "Env", "CCSError", "ParseError", "UnguardedRecursionError",
    "StateBudgetExceeded", "parse", "parse_action", "free_names", "substitute",
    "normalize", "transitions", "build_lts", "par_of", "sum_of", "summands",
    "components", "fresh_name",
]

UNFOLD_LIMIT = 10_000


class CCSError(Exception):
    """Base class for malformed terms and environments."""


class ParseError(CCSError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class UnguardedRecursionError(CCSError):
    pass


class StateBudgetExceeded(Exception):
    """Raised when exploration exceeds its state budget; carries the partial result."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

IN, OUT, SILENT = "in", "out", "tau"


@dataclass(frozen=True, order=True)
class Action:
    kind: str
    channel: str | None = None

    def __post_init__(self):
        if self.kind not in (IN, OUT, SILENT):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if (self.kind == SILENT) != (self.channel is None):
            raise ValueError("silent actions carry no channel, visible ones must")

    @classmethod
    def inp(cls, channel: str) -> Action:
        return cls(IN, channel)

    @classmethod
    def out(cls, channel: str) -> Action:
        return cls(OUT, channel)

    @property
    def silent(self) -> bool:
        return self.kind == SILENT

    def complement(self) -> Action:
        if self.kind == SILENT:
            raise ValueError("the silent action has no complement")
        return Action(OUT if self.kind == IN else IN, self.channel)

    def rename(self, mapping: Mapping[str, str]) -> Action:
        if self.channel is None or self.channel not in mapping:
            return self
        return Action(self.kind, mapping[self.channel])

    def __str__(self):
        if self.kind == SILENT:
            return "tau"
        return ("~" if self.kind == OUT else "") + self.channel


TAU = Action(SILENT)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")


def parse_action(text: str) -> Action:
    """Read an action in concrete syntax: ``x``, ``~x`` or ``tau``."""
    text = text.strip()
    if text == "tau":
        return TAU
    out = text.startswith("~")
    name = text[1:] if out else text
    if not _IDENT.match(name) or name == "tau":
        raise ParseError(f"bad action {text!r}")
    return Action(OUT if out else IN, name)


# ---------------------------------------------------------------------------
# Processes
# ---------------------------------------------------------------------------


class Process:
    __slots__ = ()

    def __str__(self):
        return _show(self, 0)

    def __repr__(self):
        return f"<{type(self).__name__} {self}>"


@dataclass(frozen=True, repr=False)
class Nil(Process):
    pass


@dataclass(frozen=True, repr=False)
class Prefix(Process):
    action: Action
    body: Process


@dataclass(frozen=True, repr=False)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True, repr=False)
class Sum(Process):
    left: Process
    right: Process


@dataclass(frozen=True, repr=False)
class Restrict(Process):
    channel: str
    body: Process


@dataclass(frozen=True, repr=False)
class Call(Process):
    name: str
    args: tuple[str, ...] = ()


NIL = Nil()

# precedence levels: 0 = par, 1 = sum, 2 = prefix/atom


def _show(p: Process, level: int) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Prefix):
        body = p.body
        if isinstance(body, (Nil, Prefix, Call, Restrict)):
            return f"{p.action}.{_show(body, 2)}"
        return f"{p.action}.({_show(body, 0)})"
    if isinstance(p, Call):
        return f"{p.name}({','.join(p.args)})"
    if isinstance(p, Restrict):
        return f"({p.channel}){_show(p.body, 2)}"
    if isinstance(p, Par):
        s = f"{_show(p.left, 0)} | {_show(p.right, 1)}"
        return s if level == 0 else f"({s})"
    if isinstance(p, Sum):
        s = f"{_show(p.left, 1)} + {_show(p.right, 2)}"
        return s if level <= 1 else f"({s})"
    raise TypeError(p)


def par_of(parts: Iterable[Process]) -> Process:
    parts = list(parts)
    if not parts:
        return NIL
    out = parts[0]
    for q in parts[1:]:
        out = Par(out, q)
    return out


def sum_of(parts: Iterable[Process]) -> Process:
    parts = list(parts)
    if not parts:
        return NIL
    out = parts[0]
    for q in parts[1:]:
        out = Sum(out, q)
    return out


def components(p: Process) -> list[Process]:
    """Flatten nested parallel composition."""
    if isinstance(p, Par):
        return components(p.left) + components(p.right)
    return [p]


def summands(p: Process) -> list[Process]:
    """Flatten nested choice."""
    if isinstance(p, Sum):
        return summands(p.left) + summands(p.right)
    return [p]


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Definition:
    formals: tuple[str, ...]
    body: Process


class Env(Mapping):
    """Recursive definitions ``D(x1,...,xn) = body``, mutual recursion allowed."""

    def __init__(self, defs: Mapping[str, Definition] | None = None):
        self._defs = dict(defs or {})
        self._unfold_cache: dict[tuple[str, tuple[str, ...]], Process] = {}

    def __getitem__(self, name):
        return self._defs[name]

    def __iter__(self):
        return iter(self._defs)

    def __len__(self):
        return len(self._defs)

    def __repr__(self):
        return f"Env({self._defs!r})"

    def define(self, name: str, formals: Iterable[str], body: Process) -> None:
        if name in self._defs:
            raise CCSError(f"duplicate definition {name}")
        self._defs[name] = Definition(tuple(formals), body)
        self._unfold_cache.clear()

    def unfold(self, name: str, args: tuple[str, ...]) -> Process:
        """Body of ``name`` with actuals substituted for formals."""
        key = (name, args)
        hit = self._unfold_cache.get(key)
        if hit is not None:
            return hit
        if name not in self._defs:
            raise CCSError(f"unbound definition {name}")
        d = self._defs[name]
        if len(d.formals) != len(args):
            raise CCSError(f"{name} expects {len(d.formals)} arguments, got {len(args)}")
        body = substitute(d.body, dict(zip(d.formals, args)))
        self._unfold_cache[key] = body
        return body

    def validate(self, p: Process | None = None) -> None:
        """Check resolution, arity and closedness of every definition body."""
        for name, d in self._defs.items():
            if len(set(d.formals)) != len(d.formals):
                raise CCSError(f"{name}: repeated formal parameter")
            self._check_calls(d.body)
            extra = free_names(d.body) - set(d.formals)
            if extra:
                raise CCSError(f"{name}: free names {sorted(extra)} are not formals")
        if p is not None:
            self._check_calls(p)

    def _check_calls(self, p: Process) -> None:
        for q in _subterms(p):
            if isinstance(q, Call):
                if q.name not in self._defs:
                    raise CCSError(f"unbound definition {q.name}")
                n = len(self._defs[q.name].formals)
                if n != len(q.args):
                    raise CCSError(f"{q.name} expects {n} arguments, got {len(q.args)}")

    def source(self) -> str:
        lines = []
        for name, d in self._defs.items():
            lines.append(f"{name}({','.join(d.formals)}) = {d.body}")
        return "\n".join(lines)


def _subterms(p: Process) -> Iterator[Process]:
    stack = [p]
    while stack:
        q = stack.pop()
        yield q
        if isinstance(q, Prefix):
            stack.append(q.body)
        elif isinstance(q, (Par, Sum)):
            stack.extend((q.left, q.right))
        elif isinstance(q, Restrict):
            stack.append(q.body)


# ---------------------------------------------------------------------------
# Names and substitution
# ---------------------------------------------------------------------------


def free_names(p: Process, env: Env | None = None) -> frozenset[str]:
    """Free channel names; a call contributes its actuals."""
    if isinstance(p, Nil):
        return frozenset()
    if isinstance(p, Prefix):
        own = frozenset() if p.action.silent else frozenset((p.action.channel,))
        return own | free_names(p.body)
    if isinstance(p, (Par, Sum)):
        return free_names(p.left) | free_names(p.right)
    if isinstance(p, Restrict):
        return free_names(p.body) - {p.channel}
    if isinstance(p, Call):
        return frozenset(p.args)
    raise TypeError(p)


def fresh_name(base: str, avoid: set[str] | frozenset[str]) -> str:
    name = base + "'"
    while name in avoid:
        name += "'"
    return name


def substitute(p: Process, mapping: Mapping[str, str]) -> Process:
    """Capture-avoiding renaming of free names."""
    if not mapping:
        return p
    if isinstance(p, Nil):
        return p
    if isinstance(p, Prefix):
        return Prefix(p.action.rename(mapping), substitute(p.body, mapping))
    if isinstance(p, Par):
        return Par(substitute(p.left, mapping), substitute(p.right, mapping))
    if isinstance(p, Sum):
        return Sum(substitute(p.left, mapping), substitute(p.right, mapping))
    if isinstance(p, Call):
        return Call(p.name, tuple(mapping.get(a, a) for a in p.args))
    if isinstance(p, Restrict):
        inner = {k: v for k, v in mapping.items() if k != p.channel}
        x, body = p.channel, p.body
        if x in inner.values():
            y = fresh_name(x, set(inner.values()) | free_names(body))
            body = substitute(body, {x: y})
            x = y
        return Restrict(x, substitute(body, inner))
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Structural congruence
# ---------------------------------------------------------------------------

_CANON = re.compile(r"_r(\d+)\Z")


def _binder_height(p: Process) -> int:
    h = 0
    for q in _subterms(p):
        if isinstance(q, Restrict):
            m = _CANON.match(q.channel)
            if m:
                h = max(h, int(m.group(1)))
    return h


def _mk_par(parts: Iterable[Process]) -> Process:
    flat = [q for r in parts for q in components(r) if not isinstance(q, Nil)]
    flat.sort(key=str)
    return par_of(flat)


def _mk_sum(parts: Iterable[Process]) -> Process:
    flat = {str(q): q for r in parts for q in summands(r) if not isinstance(q, Nil)}
    return sum_of(flat[k] for k in sorted(flat))


def _mk_restrict(x: str, body: Process) -> Process:
    fn = free_names(body)
    if x not in fn:
        return body
    if isinstance(body, Par):
        inside, outside = [], []
        for q in components(body):
            (inside if x in free_names(q) else outside).append(q)
        if outside:
            return _mk_par(outside + [_mk_restrict(x, _mk_par(inside))])
    h = _binder_height(body) + 1
    while f"_r{h}" in fn and f"_r{h}" != x:
        h += 1
    y = f"_r{h}"
    if y != x:
        body = normalize(substitute(body, {x: y}))
    return Restrict(y, body)


def normalize(p: Process, env: Env | None = None) -> Process:
    """Canonical representative of the structural congruence class of ``p``.

    Parallel and choice operands are flattened and sorted, ``0`` units are
    dropped, duplicate summands are merged, dead restrictions are removed,
    restrictions are narrowed to the components that use them and bound
    names are renamed canonically. Recursive calls are left folded.
    """
    if isinstance(p, (Nil, Call)):
        return p
    if isinstance(p, Prefix):
        return Prefix(p.action, normalize(p.body))
    if isinstance(p, Par):
        return _mk_par((normalize(p.left), normalize(p.right)))
    if isinstance(p, Sum):
        return _mk_sum((normalize(p.left), normalize(p.right)))
    if isinstance(p, Restrict):
        return _mk_restrict(p.channel, normalize(p.body))
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Interleaving semantics
# ---------------------------------------------------------------------------


class _Budget:
    __slots__ = ("left",)

    def __init__(self, n: int):
        self.left = n

    def spend(self, name: str) -> None:
        self.left -= 1
        if self.left < 0:
            raise UnguardedRecursionError(f"unguarded recursion through {name}")


def _steps(p: Process, env: Env, budget: _Budget) -> list[tuple[Action, Process]]:
    if isinstance(p, Nil):
        return []
    if isinstance(p, Prefix):
        return [(p.action, p.body)]
    if isinstance(p, Sum):
        return _steps(p.left, env, budget) + _steps(p.right, env, budget)
    if isinstance(p, Call):
        budget.spend(p.name)
        return _steps(env.unfold(p.name, p.args), env, budget)
    if isinstance(p, Restrict):
        x = p.channel
        return [(a, Restrict(x, q)) for a, q in _steps(p.body, env, budget) if a.channel != x]
    if isinstance(p, Par):
        left = _steps(p.left, env, budget)
        right = _steps(p.right, env, budget)
        out = [(a, Par(q, p.right)) for a, q in left]
        out += [(a, Par(p.left, q)) for a, q in right]
        for a, q in left:
            if a.silent:
                continue
            for b, r in right:
                if not b.silent and b == a.complement():
                    out.append((TAU, Par(q, r)))
        return out
    raise TypeError(p)


def transitions(p: Process, env: Env | None = None,
                unfold_limit: int = UNFOLD_LIMIT) -> set[tuple[Action, Process]]:
    """One-step derivatives of ``p``, targets normalized."""
    env = env if env is not None else Env()
    try:
        steps = _steps(p, env, _Budget(unfold_limit))
    except RecursionError:
        raise UnguardedRecursionError("unguarded recursion: unfolding nests too deeply") from None
    return {(a, normalize(q)) for a, q in steps}


def build_lts(p: Process, env: Env | None = None, max_states: int = 100_000):
    """Reachable interleaving LTS of ``p``; states are normalized processes."""
    from causalccs.lts import Lts

    env = env if env is not None else Env()
    lts = Lts()
    start = normalize(p)
    index = {start: lts.add_state(start)}
    todo = deque([start])
    while todo:
        q = todo.popleft()
        src = index[q]
        for a, r in sorted(transitions(q, env), key=lambda t: (t[0], str(t[1]))):
            if r not in index:
                if len(index) >= max_states:
                    lts.truncated = True
                    raise StateBudgetExceeded(
                        f"state budget of {max_states} exceeded", partial=lts)
                index[r] = lts.add_state(r)
                todo.append(r)
            lts.add_edge(src, a, index[r])
    return lts


# ---------------------------------------------------------------------------
# Concrete syntax
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<zero>0)
  | (?P<sym>[~.|+(),=;])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


_BINARY = {".", "|", "+", "=", ",", "(", "~", ";"}


def _tokenize(text: str) -> list[_Tok]:
    raw: list[_Tok] = []
    pos, line, start = 0, 1, 0
    depth = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        col = pos - start + 1
        if kind == "nl":
            if depth == 0:
                raw.append(_Tok("nl", "\n", line, col))
            line += 1
            start = m.end()
        elif kind in ("ident", "zero", "sym"):
            t = m.group()
            if t == "(":
                depth += 1
            elif t == ")":
                depth = max(0, depth - 1)
            raw.append(_Tok("ident" if kind == "ident" else t, t, line, col))
        pos = m.end()
    toks: list[_Tok] = []
    for i, t in enumerate(raw):
        if t.kind != "nl":
            toks.append(t)
            continue
        prev = toks[-1].kind if toks else ";"
        nxt = raw[i + 1].kind if i + 1 < len(raw) else "eof"
        if prev in _BINARY or nxt in {".", "|", "+", ")", "nl", "eof", "="}:
            continue
        toks.append(_Tok(";", ";", t.line, t.col))
    toks.append(_Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str) -> _Tok:
        t = self.next()
        if t.kind != kind:
            what = repr(t.text) if t.text else "end of input"
            raise ParseError(f"expected {kind!r}, found {what}", t.line, t.col)
        return t

    def name(self) -> str:
        t = self.expect("ident")
        if t.text == "tau":
            raise ParseError("'tau' is reserved", t.line, t.col)
        return t.text

    def names(self) -> list[str]:
        out = []
        if self.peek().kind == "ident":
            out.append(self.name())
            while self.peek().kind == ",":
                self.next()
                out.append(self.name())
        return out

    def program(self) -> tuple[Process, Env]:
        env = Env()
        main = None
        while self.peek().kind != "eof":
            if self.peek().kind == ";":
                self.next()
                continue
            start = self.peek()
            if self._is_definition():
                name = self.name()
                self.expect("(")
                formals = self.names()
                self.expect(")")
                self.expect("=")
                try:
                    env.define(name, formals, self.par())
                except CCSError as e:
                    raise ParseError(str(e), start.line, start.col) from None
            else:
                if main is not None:
                    raise ParseError("more than one main process", start.line, start.col)
                main = self.par()
            if self.peek().kind not in (";", "eof"):
                t = self.peek()
                raise ParseError(f"unexpected {t.text!r}", t.line, t.col)
        if main is None:
            raise ParseError("no main process")
        try:
            env.validate(main)
        except CCSError as e:
            raise ParseError(str(e)) from None
        return main, env

    def _is_definition(self) -> bool:
        if self.peek().kind != "ident" or self.peek(1).kind != "(":
            return False
        k = 2
        while self.peek(k).kind in ("ident", ","):
            k += 1
        return self.peek(k).kind == ")" and self.peek(k + 1).kind == "="

    def par(self) -> Process:
        p = self.sum()
        while self.peek().kind == "|":
            self.next()
            p = Par(p, self.sum())
        return p

    def sum(self) -> Process:
        p = self.pre()
        while self.peek().kind == "+":
            self.next()
            p = Sum(p, self.pre())
        return p

    def _continuation(self) -> Process:
        if self.peek().kind == ".":
            self.next()
            return self.pre()
        return NIL

    def pre(self) -> Process:
        t = self.peek()
        if t.kind == "0":
            self.next()
            return NIL
        if t.kind == "~":
            self.next()
            return Prefix(Action.out(self.name()), self._continuation())
        if t.kind == "ident":
            if t.text == "tau":
                self.next()
                return Prefix(TAU, self._continuation())
            if self.peek(1).kind == "(":
                name = self.name()
                self.expect("(")
                args = self.names()
                self.expect(")")
                return Call(name, tuple(args))
            return Prefix(Action.inp(self.name()), self._continuation())
        if t.kind == "(":
            if self._is_restriction():
                self.next()
                chans = self.names()
                self.expect(")")
                body = self.pre()
                for x in reversed(chans):
                    body = Restrict(x, body)
                return body
            self.next()
            p = self.par()
            self.expect(")")
            return p
        what = repr(t.text) if t.text else "end of input"
        raise ParseError(f"unexpected {what}", t.line, t.col)

    def _is_restriction(self) -> bool:
        k = 1
        if self.peek(k).kind != "ident" or self.peek(k).text == "tau":
            return False
        k += 1
        while self.peek(k).kind == "," and self.peek(k + 1).kind == "ident":
            k += 2
        if self.peek(k).kind != ")":
            return False
        nxt = self.peek(k + 1)
        return nxt.kind in ("ident", "0", "~", "(")


def parse(text: str) -> tuple[Process, Env]:
    """Parse a CCS program: definitions ``D(x,y) = p`` plus one main process.

    Statements are separated by ``;`` or line breaks; ``#`` starts a comment.
    """
    return _Parser(text).program()


def parse_process(text: str, env: Env | None = None) -> Process:
    """Parse a single process expression against an existing environment."""
    parser = _Parser(text)
    p = parser.par()
    while parser.peek().kind == ";":
        parser.next()
    t = parser.peek()
    if t.kind != "eof":
        raise ParseError(f"unexpected {t.text!r}", t.line, t.col)
    if env is not None:
        try:
            env._check_calls(p)
        except CCSError as e:
            raise ParseError(str(e)) from None
    return p
