"""Command-line front end: ``qpalg parse|graph|run|check``."""

import argparse
import json
import os
import sys
import time
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import quantum
from .bisim import check_branching_bisim, check_rooted, describe_context
from .graph import StateSpaceOverflow, build_graph, canonicalize, export
from .semantics import (
    TOMO4,
    Context,
    ProcessState,
    SemanticError,
    StepOptions,
    _expand,
    is_terminated,
)
from .syntax import QPAlgSyntaxError, parse_process, parse_program, print_program

EXIT_OK, EXIT_NEGATIVE, EXIT_OVERFLOW = 0, 1, 2


def fixture_path(name):
    """Path of a bundled ``.qpa`` example (``name`` with or without suffix)."""
    if not name.endswith(".qpa"):
        name += ".qpa"
    return Path(str(resources.files("qpalg") / "fixtures" / name))


def load_program(path):
    p = Path(path)
    if not p.exists() and fixture_path(p.name).exists() and p.parent == Path("."):
        p = fixture_path(p.name)
    return parse_program(p.read_text())


def entry_process(prog, entry):
    if entry is None:
        if prog.entry is None:
            raise QPAlgSyntaxError("no entry process; pass --entry", 1, 1)
        return prog.entry
    return parse_process(entry)


# -- contexts and probes ----------------------------------------------------


def parse_context(text):
    """Build a context from ``"psi=+; x,y=epr; w=mixed; n=3; k:Nat; z:Qubit"``.

    Bare digits denote naturals; write ``|0>`` or ``|1>`` for basis qubits.
    """
    ctx = Context()
    for item in filter(None, (s.strip() for s in text.split(";"))):
        if "=" in item:
            lhs, rhs = (s.strip() for s in item.split("=", 1))
            names = [n.strip() for n in lhs.split(",")]
            if rhs.lstrip("-").isdigit():
                (name,) = names
                ctx = ctx.with_nat(name, int(rhs))
            elif rhs == "mixed":
                for name in reversed(names):
                    ctx = ctx.with_qubit(name, np.eye(2, dtype=complex) / 2)
            elif rhs == "epr":
                if len(names) != 2:
                    raise ValueError("epr needs two qubit names")
                ctx = ctx.with_qubits(names, quantum.EPR)
            elif rhs.strip("|>") in quantum.STATES:
                for name in reversed(names):
                    ctx = ctx.with_qubit(name, quantum.STATES[rhs.strip("|>")])
            else:
                raise ValueError(f"unknown state {rhs!r}")
        elif ":" in item:
            name, typ = (s.strip() for s in item.split(":", 1))
            if typ == "Nat":
                ctx = ctx.with_nat(name)
            elif typ == "Qubit":
                ctx = ctx.declare_qubit(name)
            else:
                raise ValueError(f"unknown type {typ!r}")
        else:
            raise ValueError(f"cannot read context item {item!r}")
    return ctx


def parse_probes(text):
    """``tomo4`` or a comma list of named states, e.g. ``0,1,+``."""
    if not text:
        return ()
    if text == "tomo4":
        return TOMO4
    out = []
    for name in text.split(","):
        name = name.strip()
        if name not in quantum.STATES:
            raise ValueError(f"unknown probe state {name!r}")
        out.append((name, quantum.STATES[name]))
    return tuple(out)


def _options(args):
    values = tuple(int(v) for v in args.values.split(",")) if args.values else ()
    return StepOptions(classical_probes=values, qubit_probes=parse_probes(args.probe_states))


# -- sampling ---------------------------------------------------------------


@dataclass
class RunReport:
    seed: int
    traces: list = field(default_factory=list)  # label texts per trial
    outcomes: Counter = field(default_factory=Counter)
    finals: Counter = field(default_factory=Counter)  # how and where runs ended

    @property
    def trials(self):
        return len(self.traces)

    def frequencies(self):
        return {k: v / self.trials for k, v in sorted(self.outcomes.items())}

    def to_json(self):
        return json.dumps(
            {
                "seed": self.seed,
                "trials": self.trials,
                "outcomes": {str(k): v for k, v in sorted(self.outcomes.items())},
                "finals": {k: v for k, v in sorted(self.finals.items())},
                "traces": self.traces,
            },
            indent=1,
        )


class Sampler:
    """Random maximal runs with memoized steps.

    Probabilistic branches are drawn with their probabilities.  Competing
    actions are chosen uniformly, which is a convention of this tool only.
    """

    def __init__(self, definitions=None, opts=None, max_steps=100000):
        self.defs = definitions
        self.opts = opts or StepOptions()
        self.max_steps = max_steps
        self._memo = {}

    def _successors(self, key, state):
        hit = self._memo.get(key)
        if hit is None:
            trans, pending = _expand(state, self.defs, self.opts)
            succ = []
            for t in trans:
                k, c = canonicalize(t.target)
                succ.append((t, k, c))
            status = "stopped"
            if state.is_context_stable and is_terminated(state.process, state.ctx):
                status = "terminated"
            elif pending:
                status = "open"
            hit = self._memo[key] = (succ, status)
        return hit

    def run(self, state, rng, observe=None):
        key, state = canonicalize(state)
        trace, observed = [], []
        for _ in range(self.max_steps):
            succ, status = self._successors(key, state)
            if not succ:
                return trace, tuple(observed), status, describe_context(state.ctx)
            if succ[0][0].is_prob:
                probs = np.array([t.prob for t, _, _ in succ])
                t, key, state = succ[rng.choice(len(succ), p=probs / probs.sum())]
            else:
                t, key, state = succ[rng.integers(len(succ))]
                label = t.label
                trace.append(label.text() if label.via is None else f"tau[{label.via[0]}:{label.via[1]}]")
                if observe is None and not label.silent:
                    observed.append(label.text())
                elif observe is not None:
                    gate, value = (label.via or (label.gate, label.value))
                    if gate == observe and label.kind in ("tau", "send", "recv"):
                        observed.append(value)
        return trace, tuple(observed), "step limit", ""


def sample_runs(process, ctx=None, definitions=None, opts=None, trials=1000, seed=None,
                observe=None):
    """Monte-Carlo execution; ``observe`` names a gate whose values are tallied."""
    if seed is None:
        seed = int(os.environ.get("QPALG_SEED", "0"))
    rng = np.random.default_rng(seed)
    sampler = Sampler(definitions, opts)
    report = RunReport(seed)
    start = ProcessState.of(process, ctx)
    for _ in range(trials):
        trace, outcome, status, final = sampler.run(start, rng, observe)
        report.traces.append(trace)
        report.outcomes[outcome if observe is None else tuple(outcome)] += 1
        report.finals[f"{status} {final}"] += 1
    return report


# -- commands ---------------------------------------------------------------


def _context_arg(args):
    return parse_context(args.context) if args.context else Context()


def cmd_parse(args):
    prog = load_program(args.file)
    print(print_program(prog))
    return EXIT_OK


def cmd_graph(args):
    prog = load_program(args.file)
    proc = entry_process(prog, args.entry)
    g = build_graph(
        ProcessState.of(proc, _context_arg(args)), prog.definitions, _options(args), args.max_nodes
    )
    text = export(g, args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{len(g.nodes)} nodes, {len(g.edges)} edges", file=sys.stderr)
    return EXIT_OK


def cmd_run(args):
    prog = load_program(args.file)
    proc = entry_process(prog, args.entry)
    report = sample_runs(
        proc, _context_arg(args), prog.definitions, _options(args), args.trials, args.seed,
        args.observe,
    )
    if args.json:
        print(report.to_json())
        return EXIT_OK
    print(f"seed {report.seed}, {report.trials} trials")
    what = f"values on {args.observe}" if args.observe else "visible traces"
    print(f"{what}:")
    for outcome, count in sorted(report.outcomes.items(), key=lambda kv: str(kv[0])):
        shown = " ".join(str(v) for v in outcome) or "(none)"
        print(f"  {shown:30s} {count:6d}  {count / report.trials:.4f}")
    print("final states:")
    for final, count in sorted(report.finals.items()):
        print(f"  {final}  x{count}")
    return EXIT_OK


def cmd_check(args):
    prog_a, prog_b = load_program(args.file_a), load_program(args.file_b)
    p = entry_process(prog_a, args.entry_a)
    q = entry_process(prog_b, args.entry_b)
    opts = _options(args)
    contexts = [parse_context(c) for c in args.context] or [Context()]
    verdicts, witnesses = [], []
    for ctx in contexts:
        t0 = time.perf_counter()
        g1 = build_graph(ProcessState.of(p, ctx), prog_a.definitions, opts, args.max_nodes)
        g2 = build_graph(ProcessState.of(q, ctx), prog_b.definitions, opts, args.max_nodes)
        ok, part = check_branching_bisim(g1, g2)
        if ok and args.rooted:
            ok = check_rooted(g1, g2, part)
        verdicts.append(ok)
        witnesses.append({"context": describe_context(ctx), "verdict": ok,
                          "partition": json.loads(part.to_json())})
        word = "equivalent" if ok else "NOT equivalent"
        print(f"{describe_context(ctx)}: {word} "
              f"({len(g1.nodes)}+{len(g2.nodes)} nodes, {len(part)} classes, "
              f"{time.perf_counter() - t0:.2f}s)")
    holds = all(verdicts)
    relation = "rooted branching bisimilar" if args.rooted else "branching bisimilar"
    print(f"{'yes' if holds else 'no'}: {relation} over tested family of {len(verdicts)} contexts")
    if args.witness:
        Path(args.witness).write_text(json.dumps({"verdict": holds, "contexts": witnesses},
                                                 indent=1))
        print(f"witness written to {args.witness}")
    return EXIT_OK if holds else EXIT_NEGATIVE


def _common(sub, entry=True):
    if entry:
        sub.add_argument("--entry", help="entry process, e.g. 'Teleport[psi]'")
    sub.add_argument("--context", **({"action": "append", "default": []} if not entry else {}),
                     help="context spec such as 'psi=+; n=3; k:Nat'")
    sub.add_argument("--probe-states", default="tomo4",
                     help="qubit probes for open receptions: tomo4 or e.g. 0,1,+ ('' for none)")
    sub.add_argument("--values", default="", help="classical probe values, e.g. 0,1,2")
    sub.add_argument("--max-nodes", type=int, default=100000)


def build_parser():
    ap = argparse.ArgumentParser(prog="qpalg", description="Quantum process algebra toolkit")
    subs = ap.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("parse", help="parse a file and pretty-print it")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_parse)

    sp = subs.add_parser("graph", help="build and export a process graph")
    sp.add_argument("file")
    _common(sp)
    sp.add_argument("--format", choices=("dot", "json"), default="dot")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_graph)

    sp = subs.add_parser("run", help="sample maximal runs")
    sp.add_argument("file")
    _common(sp)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, help="defaults to $QPALG_SEED or 0")
    sp.add_argument("--observe", help="tally the values crossing this gate")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = subs.add_parser("check", help="decide bisimilarity of two processes")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--entry-a")
    sp.add_argument("--entry-b")
    _common(sp, entry=False)
    sp.add_argument("--rooted", action="store_true")
    sp.add_argument("--witness", help="write the witness partition as JSON")
    sp.set_defaults(func=cmd_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QPAlgSyntaxError as exc:
        where = getattr(args, "file", None) or getattr(args, "file_a", "")
        print(f"{where}:{exc.line}:{exc.column}: {exc.msg}", file=sys.stderr)
        return EXIT_NEGATIVE
    except StateSpaceOverflow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (SemanticError, quantum.QuantumError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
