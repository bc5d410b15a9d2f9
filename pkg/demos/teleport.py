"""Teleport each probe state and show what Bob ends up holding."""

import numpy as np

from qpalg import build_graph, parse_process
from qpalg.cli import sample_runs
from qpalg.cli import fixture_path, parse_context
from qpalg.semantics import TOMO4, ProcessState
from qpalg.syntax import parse_program

prog = parse_program(fixture_path("teleport").read_text())
observed = parse_process("TeleportObserved[psi]")

for name, rho in TOMO4:
    ctx = parse_context(f"psi=|{name}>")
    g = build_graph(ProcessState.of(observed, ctx), prog.definitions)
    outputs = [e.label.state for e in g.edges if not e.is_prob and e.label.kind == "qsend"]
    worst = max(np.max(np.abs(s - rho)) for s in outputs)
    print(f"psi={name:3s} graph {len(g.nodes):3d} nodes, "
          f"{len(outputs)} distinct delivery edge(s), max deviation {worst:.1e}")

report = sample_runs(prog.entry, parse_context("psi=+"), prog.definitions,
                     trials=2000, seed=1, observe="g")
print("\nvalues Alice sent on g in 2000 sampled runs:")
for (k,), f in report.frequencies().items():
    print(f"  k={k}  {f:.3f}")
