import json

import numpy as np
import pytest

from conftest import load
from oracles import permutation_oracle
from qpalg import quantum
from qpalg.cli import parse_context
from qpalg.graph import (
    StateSpaceOverflow,
    build_graph,
    canonical_key,
    export,
    from_json,
    to_json,
)
from qpalg.semantics import TOMO4, Context, ProcessState, StepOptions
from qpalg.syntax import ActionPrefix, Nil, Send, Var, parse_process

S = quantum.STATES


def graph_of(text, ctx=None, defs=None, opts=None, **kw):
    return build_graph(ProcessState.of(parse_process(text), ctx), defs, opts, **kw)


def teleport_graph(psi="+"):
    prog = load("teleport")
    ctx = parse_context(f"psi={psi}")
    return build_graph(ProcessState.of(prog.entry, ctx), prog.definitions)


class TestCanonicalKey:
    def _measured(self, name):
        ctx = Context(types={name: "Nat"}, f={name: 1})
        return ProcessState.of(ActionPrefix(Send("g", Var(name)), Nil()), ctx)

    def test_fresh_numbering(self):
        assert canonical_key(self._measured("$m3")) == canonical_key(self._measured("$m7"))

    def test_user_names_matter(self):
        assert canonical_key(self._measured("$m3")) != canonical_key(self._measured("k"))

    def test_rounding_window(self):
        a = np.diag([0.4999999996, 0.5000000004]).astype(complex)
        b = np.diag([0.5000000001, 0.4999999999]).astype(complex)
        p = parse_process("g!x.nil")
        ka = canonical_key(ProcessState.of(p, Context().with_qubits(("x",), a)))
        kb = canonical_key(ProcessState.of(p, Context().with_qubits(("x",), b)))
        assert ka == kb

    def test_register_order(self):
        rng = np.random.default_rng(1)
        rho = quantum.random_density(2, rng)
        perm = permutation_oracle(["x", "y"], ["y", "x"])
        swapped = perm @ rho @ perm.T
        p = parse_process("g!x.h!y.nil")
        k1 = canonical_key(ProcessState.of(p, Context().with_qubits(("x", "y"), rho)))
        k2 = canonical_key(ProcessState.of(p, Context().with_qubits(("y", "x"), swapped)))
        assert k1 == k2


class TestBuild:
    def test_nil(self):
        g = graph_of("nil")
        assert len(g.nodes) == 1 and g.edges == []

    def test_coin_inside_choice(self):
        g = graph_of("(a!0.nil +(0.2) b!0.nil) + c!0.nil")
        assert len(g.nodes) == 4
        root = g.out(g.initial)
        assert all(e.is_prob for e in root)
        assert sorted(e.prob for e in root) == pytest.approx([0.2, 0.8])
        for e in root:
            labels = sorted(f.label.text() for f in g.out(e.dst))
            assert "c!0" in labels and len(labels) == 2

    def test_had_with_probes(self):
        prog = load("had")
        g = build_graph(ProcessState.of(prog.entry), prog.definitions, StepOptions(qubit_probes=TOMO4))
        receives = [e for e in g.edges if not e.is_prob and e.label.kind == "qrecv"]
        sends = [e for e in g.edges if not e.is_prob and e.label.kind == "qsend"]
        assert len(receives) == 4 and len(sends) == 4
        H = quantum.H_MATRIX
        for r in receives:
            (e,) = g.out(r.dst)
            while e.label.silent:
                (e,) = g.out(e.dst)
            assert e.label.kind == "qsend"
            np.testing.assert_allclose(e.label.state, H @ r.label.state @ H, atol=1e-12)

    def test_simulhad_correction_steps_are_quarter_fanouts(self):
        prog = load("simulhad")
        g = build_graph(ProcessState.of(prog.entry), prog.definitions, StepOptions(qubit_probes=TOMO4))
        prob_nodes = [i for i in range(len(g.nodes)) if g.out(i) and g.out(i)[0].is_prob]
        assert prob_nodes
        for i in prob_nodes:
            assert sorted(e.prob for e in g.out(i)) == pytest.approx([0.5, 0.5])

        def next_event(i):
            # internal steps between fan-outs only interleave, so any order will do
            while True:
                out = g.out(i)
                if out[0].is_prob:
                    return ("fanout", i)
                e = out[0]
                assert all(f.silent for f in out)
                if e.label.via and e.label.via[0] == "r":
                    return ("r", e.label.via[1])
                i = e.dst

        checked = 0
        for i in prob_nodes:
            kinds = [next_event(e.dst)[0] for e in g.out(i)]
            if kinds != ["fanout", "fanout"]:
                continue
            outcomes = {}
            for e in g.out(i):
                _, j = next_event(e.dst)
                for f in g.out(j):
                    kind, value = next_event(f.dst)
                    assert kind == "r"
                    outcomes[value] = outcomes.get(value, 0) + e.prob * f.prob
            assert sorted(outcomes) == [0, 1, 2, 3]
            assert all(v == pytest.approx(0.25) for v in outcomes.values())
            checked += 1
        assert checked > 0

    def test_overflow(self):
        prog = load("simulhad")
        with pytest.raises(StateSpaceOverflow):
            build_graph(
                ProcessState.of(prog.entry), prog.definitions, StepOptions(qubit_probes=TOMO4), max_nodes=50
            )

    def test_deterministic(self):
        a, b = teleport_graph(), teleport_graph()
        assert to_json(a) == to_json(b)

    def test_teleport_golden_size(self):
        g = teleport_graph()
        assert (len(g.nodes), len(g.edges)) == (49, 69)


class TestExport:
    def test_single_node_dot(self):
        dot = export(graph_of("nil"), "dot")
        assert dot.count("->") == 0 and "n0" in dot

    def test_probability_label(self):
        dot = export(graph_of("a!0.nil +(0.2) b!0.nil"), "dot")
        assert 'label="p=0.2"' in dot

    def test_json_schema(self):
        doc = json.loads(export(graph_of("a!0.nil +(0.2) b!0.nil"), "json"))
        assert doc["initial"] == 0
        assert {"id", "process", "context"} <= set(doc["nodes"][0])
        assert all({"from", "to", "label"} <= set(e) for e in doc["edges"])

    def test_teleport_json_roundtrip(self):
        text = to_json(teleport_graph("+i"))
        again = to_json(from_json(text))
        assert again == text
        assert to_json(from_json(again)) == again

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            export(graph_of("nil"), "svg")


@pytest.mark.parametrize("name", ["teleport", "simulhad", "fig1", "buildepr"])
def test_prob_and_action_edges_never_mix(name):
    prog = load(name)
    opts = StepOptions(qubit_probes=TOMO4)
    ctx = parse_context("psi=+i") if name == "teleport" else None
    g = build_graph(ProcessState.of(prog.entry, ctx), prog.definitions, opts)
    for i in range(len(g.nodes)):
        kinds = {e.is_prob for e in g.out(i)}
        assert len(kinds) <= 1
        if True in kinds:
            assert sum(e.prob for e in g.out(i)) == pytest.approx(1.0)
