"""Process graphs: finite reachable transition systems of process states."""

import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quantum
from .semantics import (
    Context,
    Label,
    ProcessState,
    StepOptions,
    _expand,
    is_terminated,
)
from .syntax import pretty_print, substitute

KEY_DECIMALS = 6
_RUNTIME_NAME = re.compile(r"\$[a-z]*\d+")


class StateSpaceOverflow(Exception):
    def __init__(self, limit):
        super().__init__(f"state space exceeds {limit} nodes")
        self.limit = limit


# -- canonical form ---------------------------------------------------------


def _rounded(x, decimals=KEY_DECIMALS):
    # adding 0.0 turns -0.0 into 0.0 so equal states hash equally
    return np.round(np.asarray(x, dtype=complex), decimals) + 0.0


def _context_key(ctx):
    return (
        tuple(sorted(ctx.types.items())),
        ctx.q,
        _rounded(ctx.rho).tobytes(),
        tuple(sorted(ctx.f.items())),
    )


def canonicalize(state):
    """Rename runtime variables by first occurrence and sort the register.

    Returns ``(key, canonical_state)``.  Two states with the same key differ
    only by a consistent renaming of generated names, the order of ``q`` and
    floating-point noise below ``1e-6``.
    """
    text = pretty_print(state.process)
    order = list(dict.fromkeys(_RUNTIME_NAME.findall(text)))
    for _, ctx in state.context:
        for n in list(ctx.q) + sorted(ctx.types):
            if n.startswith("$") and n not in order:
                order.append(n)
    mapping = {old: f"$v{i}" for i, old in enumerate(order)}
    process = substitute(state.process, mapping) if mapping else state.process
    branches = []
    for p, ctx in state.context:
        rn = lambda n: mapping.get(n, n)  # noqa: E731
        q = tuple(rn(n) for n in ctx.q)
        new_q = tuple(sorted(q))
        rho = quantum.reorder(list(q), ctx.rho, list(new_q)) if q != new_q else ctx.rho
        new = Context(
            {rn(n): t for n, t in ctx.types.items()},
            new_q,
            rho,
            {rn(n): v for n, v in ctx.f.items()},
        )
        branches.append((float(p), new, _context_key(new)))
    branches.sort(key=lambda b: (b[2], round(b[0], 9)))
    canon = ProcessState(process, tuple((p, c) for p, c, _ in branches))
    key = (
        pretty_print(process),
        tuple((round(p, 9), k) for p, _, k in branches),
    )
    return key, canon


def canonical_key(state):
    return canonicalize(state)[0]


def label_key(label, decimals=8):
    """Hashable identity of a label; qubit labels compare by their matrices."""
    if label.kind == "tau":
        return ("tau",)
    if label.kind in ("send", "recv"):
        return (label.kind, label.gate, label.value)
    return (label.kind, label.gate, _rounded(label.state, decimals).tobytes())


# -- graphs -----------------------------------------------------------------


@dataclass
class Edge:
    src: int
    dst: int
    label: Optional[Label] = None
    prob: Optional[float] = None

    @property
    def is_prob(self):
        return self.prob is not None

    @property
    def silent(self):
        return self.is_prob or self.label.silent

    def text(self):
        return f"p={self.prob:g}" if self.is_prob else self.label.text()


@dataclass
class GraphNode:
    key: object
    state: Optional[ProcessState] = None
    terminated: bool = False
    open: bool = False
    payload: Optional[dict] = None  # set for graphs loaded from JSON


@dataclass
class ProcessGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    initial: int = 0

    def __post_init__(self):
        self._out = None

    def out(self, i):
        if self._out is None or len(self._out) != len(self.nodes):
            self._out = [[] for _ in self.nodes]
            for e in self.edges:
                self._out[e.src].append(e)
        return self._out[i]

    def __len__(self):
        return len(self.nodes)

    def deadlocks(self):
        """Non-terminated nodes without successors."""
        return [
            i for i, n in enumerate(self.nodes) if not self.out(i) and not n.terminated
        ]

    def maximal_paths(self, limit=100000):
        """Enumerate maximal paths of an acyclic graph as lists of edges."""
        out = []

        def walk(i, path, seen):
            if len(out) > limit:
                raise StateSpaceOverflow(limit)
            edges = self.out(i)
            if not edges:
                out.append(list(path))
                return
            for e in edges:
                if e.dst in seen:
                    raise ValueError("graph has a cycle")
                path.append(e)
                walk(e.dst, path, seen | {e.dst})
                path.pop()

        walk(self.initial, [], {self.initial})
        return out


def initial_state(process, ctx=None):
    return ProcessState.of(process, ctx)


def build_graph(state, definitions=None, opts=None, max_nodes=100000):
    """Breadth-first construction of the reachable process graph.

    Transitions of each node are ordered by label text, probability and
    target key, so node numbering is reproducible.
    """
    opts = opts or StepOptions()
    if not isinstance(state, ProcessState):
        state = ProcessState.of(state)
    key, canon = canonicalize(state)
    graph = ProcessGraph()
    index = {key: 0}
    graph.nodes.append(GraphNode(key, canon))
    queue = deque([0])
    while queue:
        i = queue.popleft()
        node = graph.nodes[i]
        trans, pending = _expand(node.state, definitions, opts)
        node.open = bool(pending)
        if node.state.is_context_stable:
            node.terminated = is_terminated(node.state.process, node.state.ctx)
        found = []
        for t in trans:
            k, c = canonicalize(t.target)
            found.append((t, k, c))
        found.sort(
            key=lambda x: (
                x[0].is_prob,
                "" if x[0].is_prob else x[0].label.text(),
                x[0].prob or 0.0,
                repr(x[1]),
            )
        )
        probs, seen = {}, set()
        for t, k, c in found:
            j = index.get(k)
            if j is None:
                if len(graph.nodes) >= max_nodes:
                    raise StateSpaceOverflow(max_nodes)
                j = len(graph.nodes)
                index[k] = j
                graph.nodes.append(GraphNode(k, c))
                queue.append(j)
            if t.is_prob:
                probs[j] = probs.get(j, 0.0) + t.prob
            elif (j, label_key(t.label)) not in seen:
                seen.add((j, label_key(t.label)))
                graph.edges.append(Edge(i, j, label=t.label))
        for j, p in probs.items():
            graph.edges.append(Edge(i, j, prob=p))
    return graph


# -- export / import --------------------------------------------------------


def _matrix_json(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def _matrix_from_json(rows):
    return np.array([[complex(re_, im) for re_, im in row] for row in rows])


def _context_json(p, ctx):
    return {
        "p": p,
        "types": dict(sorted(ctx.types.items())),
        "q": list(ctx.q),
        "rho": _matrix_json(ctx.rho),
        "f": dict(sorted(ctx.f.items())),
    }


def _node_json(i, node):
    if node.payload is not None:
        return node.payload
    return {
        "id": i,
        "process": pretty_print(node.state.process),
        "context": [_context_json(p, c) for p, c in node.state.context],
        "terminated": node.terminated,
        "open": node.open,
    }


def _label_json(label):
    d = {"kind": label.kind, "text": label.text()}
    if label.gate is not None:
        d["gate"] = label.gate
    if label.value is not None:
        d["value"] = label.value
    if label.state is not None:
        d["state"] = _matrix_json(label.state)
    if label.probe is not None:
        d["probe"] = label.probe
    if label.via is not None:
        d["via"] = list(label.via)
    return d


def _label_from_json(d):
    state = _matrix_from_json(d["state"]) if "state" in d else None
    via = tuple(d["via"]) if "via" in d else None
    return Label(d["kind"], d.get("gate"), d.get("value"), state, d.get("probe"), via)


def to_json(graph):
    edges = []
    for e in graph.edges:
        if e.is_prob:
            edges.append({"from": e.src, "to": e.dst, "label": e.text(), "prob": e.prob})
        else:
            edges.append({"from": e.src, "to": e.dst, "label": _label_json(e.label)})
    doc = {
        "initial": graph.initial,
        "nodes": [_node_json(i, n) for i, n in enumerate(graph.nodes)],
        "edges": edges,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def from_json(text):
    """Load a graph written by :func:`to_json`; nodes keep their JSON payload."""
    doc = json.loads(text)
    graph = ProcessGraph(initial=doc["initial"])
    for d in doc["nodes"]:
        graph.nodes.append(
            GraphNode(d["id"], terminated=d["terminated"], open=d["open"], payload=d)
        )
    for d in doc["edges"]:
        if "prob" in d:
            graph.edges.append(Edge(d["from"], d["to"], prob=d["prob"]))
        else:
            graph.edges.append(Edge(d["from"], d["to"], label=_label_from_json(d["label"])))
    return graph


def _dot_escape(s):
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(graph, show_terms=False):
    lines = ["digraph process {", "  rankdir=TB;", '  node [shape=circle, label=""];']
    for i, n in enumerate(graph.nodes):
        attrs = []
        if show_terms and n.state is not None:
            attrs.append(f'label="{_dot_escape(pretty_print(n.state.process))}", shape=box')
        if i == graph.initial:
            attrs.append("penwidth=2")
        if n.terminated:
            attrs.append("shape=doublecircle")
        lines.append(f"  n{i}" + (f" [{', '.join(attrs)}]" if attrs else "") + ";")
    for e in graph.edges:
        style = ", style=dashed" if e.is_prob else ""
        lines.append(f'  n{e.src} -> n{e.dst} [label="{_dot_escape(e.text())}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(graph, fmt="dot"):
    if fmt == "dot":
        return to_dot(graph)
    if fmt == "json":
        return to_json(graph)
    raise ValueError(f"unknown format {fmt!r}")
