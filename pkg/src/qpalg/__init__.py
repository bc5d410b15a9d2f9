"""Quantum process algebra: parser, density-matrix semantics and bisimulation."""

from .bisim import (
    EquivReport,
    MuSystem,
    Partition,
    check_branching_bisim,
    check_process_equiv,
    check_rooted,
    solve_mu_system,
)
from .graph import ProcessGraph, StateSpaceOverflow, build_graph, canonical_key, export
from .semantics import TOMO4, Context, ProcessState, StepOptions, qubit_state, step
from .syntax import QPAlgSyntaxError, parse_process, parse_program, pretty_print

__version__ = "0.1.0"
