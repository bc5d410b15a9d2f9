import json
import re

import pytest

from qpalg.cli import fixture_path, main, parse_context, parse_probes, sample_runs
from qpalg.semantics import TOMO4, StepOptions
from qpalg.syntax import parse_process


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestParse:
    def test_teleport(self, capsys):
        code, out, _ = run(["parse", str(fixture_path("teleport"))], capsys)
        assert code == 0
        assert "Teleport" in out and "BuildEPR" in out

    def test_empty_file(self, tmp_path, capsys):
        f = tmp_path / "empty.qpa"
        f.write_text("")
        code, _, err = run(["parse", str(f)], capsys)
        assert code == 1
        assert str(f) in err

    def test_recursion_is_legal(self, tmp_path, capsys):
        f = tmp_path / "loop.qpa"
        f.write_text("P := P\n")
        assert run(["parse", str(f)], capsys)[0] == 0

    def test_positioned_error(self, tmp_path, capsys):
        f = tmp_path / "bad.qpa"
        f.write_text("P := a!0 .\n")
        code, _, err = run(["parse", str(f)], capsys)
        assert code == 1
        assert re.match(rf"{re.escape(str(f))}:\d+:\d+: ", err)

    def test_bundled_name(self, capsys):
        assert run(["parse", "had.qpa"], capsys)[0] == 0


class TestGraph:
    def test_nil(self, capsys):
        code, out, err = run(["graph", "had.qpa", "--entry", "nil"], capsys)
        assert code == 0
        assert "->" not in out and "1 nodes, 0 edges" in err

    def test_had_dot(self, capsys):
        code, out, _ = run(["graph", "had.qpa"], capsys)
        assert code == 0
        assert out.count("g?$v0<") == 4 and out.count("h!$v0") == 4

    def test_json_file(self, tmp_path, capsys):
        target = tmp_path / "g.json"
        code, _, _ = run(["graph", "fig1.qpa", "--format", "json", "-o", str(target)], capsys)
        assert code == 0
        doc = json.loads(target.read_text())
        assert len(doc["nodes"]) == 4

    def test_overflow_exit_code(self, capsys):
        code, _, err = run(["graph", "simulhad.qpa", "--max-nodes", "20"], capsys)
        assert code == 2 and "20" in err

    def test_teleport_with_context(self, capsys):
        code, _, err = run(["graph", "teleport.qpa", "--context", "psi=+"], capsys)
        assert code == 0 and "49 nodes" in err

    def test_semantic_error(self, capsys):
        code, _, err = run(["graph", "teleport.qpa"], capsys)
        assert code == 1 and err.startswith("error:")


class TestRun:
    def test_teleport_corrections_uniform(self, capsys):
        code, out, _ = run(
            ["run", "teleport.qpa", "--context", "psi=+", "--trials", "4000", "--seed", "7",
             "--observe", "g", "--json"],
            capsys,
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["trials"] == 4000
        counts = {k: v for k, v in doc["outcomes"].items()}
        assert sorted(counts) == ["(0,)", "(1,)", "(2,)", "(3,)"]
        for v in counts.values():
            assert abs(v / 4000 - 0.25) <= 0.03

    def test_nondeterministic_choice_is_uniform(self):
        report = sample_runs(parse_process("(a!0.nil +(0.2) b!0.nil) + c!0.nil"), trials=1000, seed=3)
        freq = report.frequencies()
        assert sum(report.outcomes.values()) == report.trials
        assert abs(freq[("c!0",)] - 0.5) <= 4 * (0.25 / 1000) ** 0.5
        # the coin is only reached when c was not chosen
        assert freq[("b!0",)] == pytest.approx(0.4, abs=0.07)
        assert freq[("a!0",)] == pytest.approx(0.1, abs=0.04)

    def test_nil_trace(self):
        report = sample_runs(parse_process("nil"), trials=3)
        assert report.traces == [[], [], []]
        # nil is inaction; only end counts as successful termination
        assert report.finals == {"stopped {}": 3}
        report = sample_runs(parse_process("end"), trials=2)
        assert report.finals == {"terminated {}": 2}

    def test_seed_determinism(self, capsys, monkeypatch):
        argv = ["run", "fig1.qpa", "--trials", "50", "--json"]
        monkeypatch.setenv("QPALG_SEED", "11")
        first = run(argv, capsys)[1]
        again = run(argv, capsys)[1]
        assert first == again and json.loads(first)["seed"] == 11
        explicit = run(argv + ["--seed", "11"], capsys)[1]
        assert explicit == first

    def test_text_summary(self, capsys):
        code, out, _ = run(["run", "fig1.qpa", "--trials", "20"], capsys)
        assert code == 0 and out.startswith("seed 0, 20 trials")


class TestCheck:
    def test_had_vs_simulation(self, tmp_path, capsys):
        witness = tmp_path / "w.json"
        code, out, _ = run(["check", "had.qpa", "simulhad.qpa", "--witness", str(witness)], capsys)
        assert code == 0
        assert "over tested family" in out
        doc = json.loads(witness.read_text())
        assert doc["verdict"] is True
        assert len(doc["contexts"][0]["partition"]["classes"]) >= 2

    def test_had_vs_itself(self, capsys):
        assert run(["check", "had.qpa", "had.qpa", "--rooted"], capsys)[0] == 0

    def test_choice_vs_coin(self, capsys):
        code, out, _ = run(["check", "fig3.qpa", "fig3.qpa", "--entry-a", "S1", "--entry-b", "S2"],
                           capsys)
        assert code == 1 and "NOT equivalent" in out

    def test_rooted_flag(self, capsys):
        argv = ["check", "fig2.qpa", "fig2.qpa", "--entry-a", "S1", "--entry-b", "S2"]
        assert run(argv, capsys)[0] == 0
        # the unfolding step of a call hides the root, so compare bodies
        argv = ["check", "fig2.qpa", "fig2.qpa", "--entry-a", "a!0.nil",
                "--entry-b", "a!0.nil +(0.2) a!0.nil", "--rooted"]
        assert run(argv, capsys)[0] == 1

    def test_context_family(self, capsys):
        argv = ["check", "had.qpa", "had.qpa", "--entry-a", "H[x].g!x.nil", "--entry-b", "g!x.nil",
                "--probe-states", "", "--context", "x,y=epr", "--context", "x=+"]
        code, out, _ = run(argv, capsys)
        assert code == 1
        assert out.count("NOT equivalent") == 1


class TestHelpers:
    def test_context_spec(self):
        ctx = parse_context("psi=+; x,y=epr; n=3; k:Nat; z:Qubit")
        assert set(ctx.q) == {"psi", "x", "y"}
        assert ctx.f["n"] == 3 and ctx.types["k"] == "Nat" and ctx.types["z"] == "Qubit"

    def test_context_errors(self):
        with pytest.raises(ValueError):
            parse_context("x=banana")
        with pytest.raises(ValueError):
            parse_context("x,y,z=epr")

    def test_probes(self):
        assert parse_probes("tomo4") == TOMO4
        assert [n for n, _ in parse_probes("0,+")] == ["0", "+"]
        assert parse_probes("") == ()
        with pytest.raises(ValueError):
            parse_probes("0,z")

    def test_options_default(self):
        assert StepOptions().qubit_probes == ()
