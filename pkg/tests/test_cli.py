import pytest

from causalccs.cli import BUDGET, INPUT_ERROR, NOT_EQUIVALENT, OK, main
from causalccs.lts import read_lts

MUTEX = "(x)(x | x | ~x.~x.a | ~x.~x.b)\n"
AB = "lts ab\ninit s0\ntrans s0 a s1\ntrans s0 b s2\n"


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def test_compress_prints_lts(files, capsys):
    assert main(["compress", files("m.ccs", MUTEX), "--obs", "a,b"]) == OK
    lts = read_lts(capsys.readouterr().out)
    assert sorted(map(str, lts.labels)) == ["a", "b"] and len(lts.edges) == 2


def test_compress_dot(files, capsys):
    assert main(["compress", files("m.ccs", MUTEX), "--obs", "a,b", "--format", "dot"]) == OK
    assert capsys.readouterr().out.startswith("digraph")


def test_check_equivalent(files, capsys):
    assert main(["check", files("m.ccs", MUTEX), "--obs", "a,b", "--spec", files("ab.lts", AB)]) == OK
    assert "equivalent" in capsys.readouterr().out


def test_check_against_ccs_spec(files):
    args = ["check", files("m.ccs", MUTEX), "--obs", "a,b", "--spec", files("s.ccs", "a.0 + b.0")]
    assert main(args) == OK


def test_check_not_equivalent(files, capsys):
    assert main(["check", files("a.ccs", "a"), "--obs", "a", "--spec", files("b.ccs", "b.0")]) == NOT_EQUIVALENT
    assert "not equivalent" in capsys.readouterr().out


def test_budget_exit_code(files):
    src = "D(k,a) = a.k.(D(k,a) | D(k,a))\nD(k,a)\n"
    assert main(["compress", files("d.ccs", src), "--obs", "k", "--max-states", "3"]) == BUDGET


@pytest.mark.parametrize("text", ["a.(b", "E(a)", "k.0 | ~k.0"])
def test_input_errors(files, text, capsys):
    assert main(["compress", files("bad.ccs", text), "--obs", "k"]) == INPUT_ERROR
    assert "error" in capsys.readouterr().err


def test_missing_file_and_bad_flags(tmp_path):
    assert main(["compress", str(tmp_path / "nope.ccs"), "--obs", "a"]) == INPUT_ERROR
    assert main(["compress"]) == INPUT_ERROR
    assert main(["bench", "phil", "--n", "1"]) == INPUT_ERROR


def test_oracle(files, capsys):
    assert main(["oracle", files("m.ccs", MUTEX), "--obs", "a,b"]) == OK
    assert len(read_lts(capsys.readouterr().out).edges) == 2


def test_simulate(files, capsys):
    script = files("s.txt", "list\nfwd 0\nback 0\n")
    assert main(["simulate", files("m.ccs", "a.b.0"), "--obs", "b", "--script", script]) == OK
    out = capsys.readouterr().out
    assert "fwd a" in out and "back" in out


def test_simulate_bad_move(files):
    script = files("s.txt", "fwd 4\n")
    assert main(["simulate", files("m.ccs", "a.0"), "--obs", "a", "--script", script]) == INPUT_ERROR


def test_bench(capsys):
    assert main(["bench", "phil", "--n", "3"]) == OK
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 3 and rows[-1].split()[-1] == "equivalent"
