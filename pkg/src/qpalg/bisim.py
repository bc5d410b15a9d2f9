"""Probabilistic branching bisimulation on process graphs.

The coarsest bisimulation on the union of two graphs is computed by
signature refinement: a node's signature collects what it can do after
silent moves that stay inside its own class.  Silent moves are tau actions
and probabilistic transitions.  Refinement alternates with splits on the
reachability probabilities ``mu`` until both are stable, and the result is
re-verified before a verdict is returned.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import Edge, ProcessGraph, build_graph, label_key
from .semantics import TOMO4, ProcessState, StepOptions

TOL = 1e-9
RESIDUAL_TOL = 1e-10


class SingularSystem(ArithmeticError):
    pass


class VerificationFailed(AssertionError):
    pass


# -- union graphs and partitions --------------------------------------------


def union(*graphs):
    """Disjoint union; returns the union and the node offset of each input."""
    u = ProcessGraph()
    offsets = []
    for g in graphs:
        base = len(u.nodes)
        offsets.append(base)
        u.nodes.extend(g.nodes)
        u.edges.extend(Edge(e.src + base, e.dst + base, e.label, e.prob) for e in g.edges)
    return u, offsets


class _Arcs:
    """Adjacency with precomputed label keys."""

    def __init__(self, graph):
        self.n = len(graph.nodes)
        self.out = [[] for _ in range(self.n)]
        for e in graph.edges:
            key = None if e.silent else label_key(e.label)
            self.out[e.src].append((e.is_prob, key, e.dst, e.prob))


def _as_arcs(graph):
    return graph if isinstance(graph, _Arcs) else _Arcs(graph)


@dataclass
class Partition:
    """Class assignment of the nodes of a (union) graph."""

    block: list
    origin: list = field(default_factory=list)  # (graph index, node id) per node

    def classes(self):
        out = {}
        for i, b in enumerate(self.block):
            out.setdefault(b, []).append(i)
        return [out[b] for b in sorted(out)]

    def class_of(self, i):
        b = self.block[i]
        return [j for j, c in enumerate(self.block) if c == b]

    def same(self, i, j):
        return self.block[i] == self.block[j]

    def __len__(self):
        return len(set(self.block))

    def to_json(self, verdict=None):
        classes = {}
        for cid, members in enumerate(self.classes()):
            classes[str(cid)] = [
                {"graph": self.origin[i][0], "node": self.origin[i][1]} if self.origin else i
                for i in members
            ]
        doc = {"classes": classes}
        if verdict is not None:
            doc["verdict"] = verdict
        return json.dumps(doc, indent=1, sort_keys=True)


def _renumber(keys):
    ids, out = {}, []
    for k in keys:
        out.append(ids.setdefault(k, len(ids)))
    return out


# -- signatures ---------------------------------------------------------------


def _inert_closure(arcs, block, s):
    """Nodes reachable from ``s`` by silent moves staying in its class."""
    seen = {s}
    stack = [s]
    b = block[s]
    while stack:
        r = stack.pop()
        for is_prob, key, dst, _ in arcs.out[r]:
            if key is None and block[dst] == b and dst not in seen:
                seen.add(dst)
                stack.append(dst)
    return seen


def signature(arcs, block, s):
    sig = set()
    b = block[s]
    for r in _inert_closure(arcs, block, s):
        for _, key, dst, _ in arcs.out[r]:
            tb = block[dst]
            if key is None:
                if tb != b:
                    sig.add(("silent", tb))
            else:
                sig.add((key, tb))
    return frozenset(sig)


def _refine_signatures(arcs, block):
    while True:
        sigs = [signature(arcs, block, s) for s in range(arcs.n)]
        new = _renumber(list(zip(block, sigs)))
        if len(set(new)) == len(set(block)):
            return block
        block = new


# -- mu -----------------------------------------------------------------------


@dataclass
class MuSystem:
    """``x = A x + b`` over ``nodes``; members of the class that cannot
    reach the target are excluded (their value is 0)."""

    A: np.ndarray
    b: np.ndarray
    nodes: list


def solve_mu_system(system):
    n = len(system.nodes)
    if n == 0:
        return np.zeros(0)
    A = np.asarray(system.A, dtype=float)
    b = np.asarray(system.b, dtype=float)
    try:
        x = np.linalg.solve(np.eye(n) - A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    residual = np.max(np.abs(x - (A @ x + b)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SingularSystem(f"residual {residual:.3g}")
    if np.min(x) < -RESIDUAL_TOL or np.max(x) > 1 + RESIDUAL_TOL:
        raise SingularSystem("solution outside [0, 1]")
    return np.clip(x, 0.0, 1.0)


def _reaching(arcs, members, target):
    """Members of the class that can reach ``target`` inside class ∪ target."""
    inside = set(members) | set(target)
    rev = {}
    for s in inside:
        for _, _, dst, _ in arcs.out[s]:
            if dst in inside:
                rev.setdefault(dst, []).append(s)
    seen = set(target)
    stack = list(target)
    while stack:
        r = stack.pop()
        for s in rev.get(r, ()):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return {s for s in members if s in seen}


def reaches(graph, partition, s, target):
    """Whether ``s`` can reach ``target`` without leaving its class ∪ target."""
    target = set(target)
    if s in target:
        return True
    return s in _reaching(_as_arcs(graph), partition.class_of(s), target)


def mu_system(graph, members, target):
    """Linear system for ``mu(S, target)`` over the class ``members``."""
    arcs = _as_arcs(graph)
    members = sorted(members)
    target = set(target)
    live = sorted(_reaching(arcs, members, target))
    pos = {s: i for i, s in enumerate(live)}
    n = len(live)
    A, b = np.zeros((n, n)), np.zeros(n)

    def useful(r):
        return r in target or r in pos

    for s in live:
        i = pos[s]
        prob = [(dst, p) for is_p, _, dst, p in arcs.out[s] if is_p and useful(dst)]
        if prob:
            weighted = prob
        else:
            succ = sorted({dst for is_p, _, dst, _ in arcs.out[s] if not is_p and useful(dst)})
            weighted = [(dst, 1.0 / len(succ)) for dst in succ]
        for dst, w in weighted:
            if dst in target:
                b[i] += w
            else:
                A[i, pos[dst]] += w
    return MuSystem(A, b, live)


def mu_values(arcs, members, target):
    """``mu(S, target)`` for every ``S`` in ``members`` (a dict)."""
    target = set(target)
    arcs = _as_arcs(arcs)
    system = mu_system(arcs, members, target)
    x = solve_mu_system(system)
    values = {s: 0.0 for s in members}
    values.update(zip(system.nodes, x))
    for s in members:
        if s in target:
            values[s] = 1.0
    return values


def mu(partition, graph, s, target_class):
    """Probability of reaching ``target_class`` from ``s`` within its class."""
    if s in set(target_class):
        return 1.0
    return mu_values(_as_arcs(graph), partition.class_of(s), target_class)[s]


def _cluster(values):
    """Group nodes whose values agree within TOL (sorted single linkage)."""
    order = sorted(values, key=lambda s: values[s])
    groups, current, last = [], [], None
    for s in order:
        if last is not None and values[s] - last > TOL:
            groups.append(current)
            current = []
        current.append(s)
        last = values[s]
    groups.append(current)
    return groups


def _successor_classes(arcs, block, members):
    out = set()
    for s in members:
        for _, _, dst, _ in arcs.out[s]:
            if block[dst] != block[s]:
                out.add(block[dst])
    return sorted(out)


def _mu_split(arcs, block):
    """Split classes whose members disagree on some mu; None if stable."""
    classes = {}
    for s, b in enumerate(block):
        classes.setdefault(b, []).append(s)
    key = [(b,) for b in block]
    changed = False
    for b, members in sorted(classes.items()):
        if len(members) < 2:
            continue
        for m in _successor_classes(arcs, block, members):
            values = mu_values(arcs, members, classes[m])
            groups = _cluster(values)
            if len(groups) > 1:
                changed = True
                for g, group in enumerate(groups):
                    for s in group:
                        key[s] = key[s] + ((m, g),)
    return _renumber(key) if changed else None


def coarsest_partition(graph, origin=None):
    arcs = _Arcs(graph)
    block = [0] * arcs.n
    while True:
        block = _refine_signatures(arcs, block)
        split = _mu_split(arcs, block)
        if split is None:
            break
        block = split
    partition = Partition(block, origin or [])
    problems = verify_partition(graph, partition, arcs)
    if problems:
        raise VerificationFailed("; ".join(problems[:5]))
    return partition


def verify_partition(graph, partition, arcs=None):
    """Re-check the bisimulation clauses on ``partition``; returns violations."""
    arcs = arcs or _Arcs(graph)
    block = partition.block
    problems = []
    classes = {}
    for s, b in enumerate(block):
        classes.setdefault(b, []).append(s)
    for b, members in classes.items():
        ref = signature(arcs, block, members[0])
        for s in members[1:]:
            if signature(arcs, block, s) != ref:
                problems.append(f"nodes {members[0]} and {s} differ in moves")
        for m in _successor_classes(arcs, block, members):
            values = mu_values(arcs, members, classes[m])
            spread = max(values.values()) - min(values.values())
            if spread > TOL:
                problems.append(f"class {b}: mu towards {m} varies by {spread:.3g}")
    return problems


# -- public checks ------------------------------------------------------------


def check_branching_bisim(g1, g2):
    """Branching bisimilarity of the initial states of two graphs.

    Returns ``(verdict, partition)`` where the partition is over the disjoint
    union (``partition.origin`` maps union nodes back to graph/node pairs).
    """
    u, (o1, o2) = union(g1, g2)
    origin = [(0, i) for i in range(len(g1))] + [(1, i) for i in range(len(g2))]
    part = coarsest_partition(u, origin)
    return part.same(g1.initial + o1, g2.initial + o2), part


def _rooted(arcs, part, s, t, assumed):
    if (s, t) in assumed:
        return True
    if not part.same(s, t):
        return False
    assumed = assumed | {(s, t)}
    for a, b, forward in ((s, t, True), (t, s, False)):
        acts_b = [(k, d) for is_p, k, d, _ in arcs.out[b] if not is_p]
        probs_b = [d for is_p, _, d, _ in arcs.out[b] if is_p]
        for is_p, key, dst, _ in arcs.out[a]:
            if is_p:
                pairs = [(dst, d) if forward else (d, dst) for d in probs_b]
                if not any(_rooted(arcs, part, x, y, assumed) for x, y in pairs):
                    return False
            elif not any(k == key and part.same(dst, d) for k, d in acts_b):
                return False
    return True


def check_rooted(g1, g2, partition=None):
    """Rooted branching bisimilarity of the two initial states."""
    u, (o1, o2) = union(g1, g2)
    if partition is None:
        origin = [(0, i) for i in range(len(g1))] + [(1, i) for i in range(len(g2))]
        partition = coarsest_partition(u, origin)
    return _rooted(_Arcs(u), partition, g1.initial + o1, g2.initial + o2, frozenset())


@dataclass
class EquivReport:
    verdicts: list  # (context description, bool)
    scope: str = "over tested family"

    @property
    def holds(self):
        return all(v for _, v in self.verdicts)

    def __bool__(self):
        return self.holds

    def summary(self):
        word = "equivalent" if self.holds else "not equivalent"
        return f"{word} {self.scope} ({len(self.verdicts)} contexts)"


def describe_context(ctx):
    parts = [f"{n}:{t}" for n, t in sorted(ctx.types.items())]
    if ctx.f:
        parts.append(", ".join(f"{n}={v}" for n, v in sorted(ctx.f.items())))
    return "{" + "; ".join(parts) + "}"


def check_process_equiv(p, q, family, definitions=None, rooted=True, probes=TOMO4,
                        classical_probes=(), max_nodes=100000):
    """Check ``p`` against ``q`` in every context of ``family``.

    With ``rooted`` the rooted relation is used; otherwise plain branching
    bisimilarity.  The verdict covers only the contexts supplied.
    """
    if not family:
        raise ValueError("empty context family")
    opts = StepOptions(classical_probes=tuple(classical_probes), qubit_probes=tuple(probes))
    defs_p, defs_q = definitions, definitions
    if isinstance(definitions, tuple):
        defs_p, defs_q = definitions
    verdicts = []
    for ctx in family:
        g1 = build_graph(ProcessState.of(p, ctx), defs_p, opts, max_nodes)
        g2 = build_graph(ProcessState.of(q, ctx), defs_q, opts, max_nodes)
        ok, part = check_branching_bisim(g1, g2)
        if ok and rooted:
            ok = check_rooted(g1, g2, part)
        verdicts.append((describe_context(ctx), ok))
    return EquivReport(verdicts)
