"""Command-line front end.

Exit codes: 0 success or equivalent, 1 not equivalent, 2 input error,
3 budget exceeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from causalccs.ccs import CCSError, StateBudgetExceeded, build_lts, parse, parse_action
from causalccs.compress import MAX_STATES, CompressStats, compute_cts
from causalccs.equivalence import weak_bisim
from causalccs.lts import Lts, export_dot, read_lts, write_lts
from causalccs.phil import BENCH_HEADER, bench_one
from causalccs.rccs import FORWARD, lift, oracle_cts, rtransitions

OK, NOT_EQUIVALENT, INPUT_ERROR, BUDGET = 0, 1, 2, 3


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _load(path: str):
    return parse(_read(path))


def _obs(text: str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise InputError("--obs needs at least one action")
    return [parse_action(t) for t in items]


def _is_lts_text(text: str) -> bool:
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return line.split()[0] == "lts"
    return False


def _load_spec(path: str) -> Lts:
    text = _read(path)
    if _is_lts_text(text):
        return read_lts(text)
    p, env = parse(text)
    return build_lts(p, env)


def _emit(lts: Lts, fmt: str) -> None:
    sys.stdout.write(export_dot(lts) if fmt == "dot" else write_lts(lts))


def cmd_compress(args) -> int:
    p, env = _load(args.file)
    stats = CompressStats()
    lts = compute_cts(p, env, _obs(args.obs), max_states=args.max_states, stats=stats)
    _emit(lts, args.format)
    if lts.truncated:
        print(f"budget exceeded: {stats.reason}", file=sys.stderr)
        return BUDGET
    return OK


def cmd_check(args) -> int:
    p, env = _load(args.file)
    K = _obs(args.obs)
    spec = _load_spec(args.spec)
    lts = compute_cts(p, env, K, max_states=args.max_states)
    if lts.truncated:
        print("budget exceeded while compressing", file=sys.stderr)
        return BUDGET
    verdict = weak_bisim(lts, spec, K)
    if verdict:
        print(f"equivalent ({lts.num_states} causal states, {spec.num_states} spec states)")
        return OK
    _, _, label = verdict.witness
    print(f"not equivalent: initial states are told apart by {label}")
    return NOT_EQUIVALENT


def cmd_oracle(args) -> int:
    p, env = _load(args.file)
    lts = oracle_cts(p, _obs(args.obs), env, max_states=args.max_states, max_depth=args.depth)
    _emit(lts, args.format)
    if lts.truncated:
        print("budget exceeded: exploration was cut", file=sys.stderr)
        return BUDGET
    return OK


def cmd_simulate(args) -> int:
    p, env = _load(args.file)
    K = _obs(args.obs)
    script = _read(args.script)
    r = lift(p, K, env)
    print(f"state: {r}")
    for lineno, raw in enumerate(script.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        moves = rtransitions(r, K, env)
        fwd = [t for t in moves if t.direction == FORWARD]
        back = [t for t in moves if t.direction != FORWARD]
        cmd, *rest = line.split()
        if cmd == "list":
            for i, t in enumerate(fwd):
                print(f"  fwd {i}: {t} ({t.kind})")
            for i, t in enumerate(back):
                print(f"  back {i}: {t}")
            continue
        if cmd not in ("fwd", "back") or len(rest) != 1 or not rest[0].isdigit():
            raise InputError(f"{args.script}:{lineno}: expected 'fwd N', 'back N' or 'list'")
        pool = fwd if cmd == "fwd" else back
        k = int(rest[0])
        if k >= len(pool):
            raise InputError(f"{args.script}:{lineno}: no {cmd} move {k} ({len(pool)} available)")
        t = pool[k]
        r = t.target
        print(f"{cmd} {t}")
        print(f"state: {r}")
    return OK


def cmd_bench(args) -> int:
    if args.system != "phil":
        raise InputError(f"unknown benchmark {args.system!r}")
    if args.n < 2:
        raise InputError("--n must be at least 2")
    mode = "full" if args.full else "partial"
    print(BENCH_HEADER)
    code = OK
    for n in range(2, args.n + 1):
        rec = bench_one(n, mode, max_states=args.max_states)
        print(rec.row(), flush=True)
        if rec.verdict == "truncated":
            code = BUDGET
        elif rec.verdict != "equivalent" and code == OK:
            code = NOT_EQUIVALENT
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causalccs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, budget=True):
        sp.add_argument("file", help="CCS source file")
        sp.add_argument("--obs", required=True, help="comma-separated observable commit actions")
        if budget:
            sp.add_argument("--max-states", type=int, default=MAX_STATES)

    sp = sub.add_parser("compress", help="compute the causal transition system")
    common(sp)
    sp.add_argument("--format", choices=("lts", "dot"), default="lts")
    sp.set_defaults(run=cmd_compress)

    sp = sub.add_parser("check", help="compress and compare with a specification")
    common(sp)
    sp.add_argument("--spec", required=True, help="specification as .lts text or CCS source")
    sp.set_defaults(run=cmd_check)

    sp = sub.add_parser("oracle", help="brute-force causal transition system")
    common(sp)
    sp.add_argument("--depth", type=int, default=None, help="cut forward traces at this length")
    sp.add_argument("--format", choices=("lts", "dot"), default="lts")
    sp.set_defaults(run=cmd_oracle)

    sp = sub.add_parser("simulate", help="step the reversible process from a script")
    common(sp, budget=False)
    sp.add_argument("--script", required=True)
    sp.set_defaults(run=cmd_simulate)

    sp = sub.add_parser("bench", help="dining philosophers benchmark")
    sp.add_argument("system", help="only 'phil' is available")
    sp.add_argument("--n", type=int, required=True, help="largest number of philosophers")
    sp.add_argument("--full", action="store_true", help="direct LTS of the releasing variant")
    sp.add_argument("--max-states", type=int, default=MAX_STATES)
    sp.set_defaults(run=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else INPUT_ERROR
    try:
        return args.run(args)
    except (InputError, CCSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except StateBudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return BUDGET


if __name__ == "__main__":
    sys.exit(main())
