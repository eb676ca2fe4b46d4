"""Causal compression of reversible CCS processes.

The package verifies CCS processes equipped with generic distributed
backtracking: instead of exploring the reversible process, it computes the
causal transition system of the forward process relative to a set of
observable commit actions and checks it against a specification up to weak
bisimulation.
"""

from causalccs.ccs import (
    TAU,
    Action,
    Call,
    CCSError,
    Env,
    Nil,
    Par,
    ParseError,
    Prefix,
    Process,
    Restrict,
    Sum,
    build_lts,
    free_names,
    normalize,
    parse,
    parse_action,
    transitions,
)
from causalccs.compress import compute_cts
from causalccs.equivalence import saturate, weak_bisim
from causalccs.lts import Lts, export_dot, read_lts, write_lts

__all__ = [
    "TAU",
    "Action",
    "CCSError",
    "Call",
    "Env",
    "Lts",
    "Nil",
    "Par",
    "ParseError",
    "Prefix",
    "Process",
    "Restrict",
    "Sum",
    "build_lts",
    "compute_cts",
    "export_dot",
    "free_names",
    "normalize",
    "parse",
    "parse_action",
    "read_lts",
    "saturate",
    "transitions",
    "weak_bisim",
    "write_lts",
]

__version__ = "0.1.0"
