"""Compare a Hadamard gate with its measurement-based simulation."""

import time

from qpalg import build_graph, check_branching_bisim, check_rooted
from qpalg.bisim import mu_system, solve_mu_system, union
from qpalg.cli import fixture_path
from qpalg.semantics import TOMO4, ProcessState, StepOptions
from qpalg.syntax import parse_program

opts = StepOptions(qubit_probes=TOMO4)
graphs = []
for name in ("had", "simulhad"):
    prog = parse_program(fixture_path(name).read_text())
    graphs.append(build_graph(ProcessState.of(prog.entry), prog.definitions, opts))
    print(f"{name:9s} {len(graphs[-1].nodes):4d} nodes {len(graphs[-1].edges):5d} edges")

t0 = time.perf_counter()
ok, part = check_branching_bisim(*graphs)
print(f"\nbranching bisimilar: {ok} ({len(part)} classes, {time.perf_counter() - t0:.2f}s)")
print(f"rooted: {check_rooted(*graphs, part)}")

u, (_, offset) = union(*graphs)
print("\nprobability of eventually returning the qubit, per input probe:")
for e in graphs[1].edges:
    if not e.is_prob and e.label.kind == "qsend":
        members = part.class_of(e.src + offset)
        x = solve_mu_system(mu_system(u, members, part.class_of(e.dst + offset)))
        print(f"  class of {len(members):3d} states: min {x.min():.12f}  max {x.max():.12f}")
