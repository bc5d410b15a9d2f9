"""Operational semantics: contexts, process states and the one-step relation.

Variables are alpha-renamed to unique runtime names (``$v<k>`` for declared
variables, ``$m<k>`` for measurement results) when their declaration fires.
With unique names the register ``q``, the store ``f`` and the declared-type
map are global to a state, and the scoping discipline of the environment
stack reduces to "a name is visible iff it occurs free in the term".
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import quantum
from .syntax import (
    NAT,
    QUBIT,
    ActionPrefix,
    Apply,
    Arith,
    BoolOp,
    Call,
    Compare,
    CondChoice,
    End,
    ExprAction,
    NatLit,
    Neg,
    Nil,
    NondetChoice,
    Not,
    Parallel,
    ProbChoice,
    Receive,
    Restrict,
    Send,
    Seq,
    Var,
    VarDecl,
    children,
    free_vars,
    substitute,
)

PROB_TOL = 1e-9
INT_MIN, INT_MAX = -(2 ** 63), 2 ** 63 - 1
DISCARD = "_"


class SemanticError(Exception):
    pass


class UnboundVariable(SemanticError):
    pass


class UninitializedQubit(SemanticError):
    pass


class QubitAlreadyInitialized(SemanticError):
    pass


class DivisionByZero(SemanticError):
    pass


class ArithmeticOverflow(SemanticError):
    pass


class UnboundProcessName(SemanticError):
    pass


class ArityMismatch(SemanticError):
    pass


class TypeMismatch(SemanticError):
    pass


class TermTooLarge(SemanticError):
    pass


# -- contexts ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Context:
    """A stable context: declared types, qubit register ``q``, ``rho``, store ``f``."""

    types: dict = field(default_factory=dict)
    q: tuple = ()
    rho: np.ndarray = field(default_factory=lambda: np.ones((1, 1), dtype=complex))
    f: dict = field(default_factory=dict)

    @classmethod
    def empty(cls):
        return cls()

    def with_qubit(self, name, nu):
        """Declare ``name`` and initialize it to ``nu`` at the head of ``q``."""
        return self.with_qubits((name,), nu)

    def with_qubits(self, names, rho):
        names = tuple(names)
        self._check_fresh(names)
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (2 ** len(names),) * 2 or not quantum.is_density(rho):
            raise quantum.InvalidDensity(f"bad joint state for {names}")
        types = dict(self.types, **{n: QUBIT for n in names})
        return Context(types, names + self.q, np.kron(rho, self.rho), dict(self.f))

    def with_nat(self, name, value=None):
        self._check_fresh((name,))
        f = dict(self.f)
        if value is not None:
            f[name] = int(value)
        return Context(dict(self.types, **{name: NAT}), self.q, self.rho, f)

    def declare_qubit(self, name):
        """Declare an uninitialized qubit variable."""
        self._check_fresh((name,))
        return Context(dict(self.types, **{name: QUBIT}), self.q, self.rho, dict(self.f))

    def _check_fresh(self, names):
        for n in names:
            if n in self.types:
                raise SemanticError(f"{n!r} already declared")

    def check(self, tol=1e-9):
        """Assert the context invariants (used by tests after every step)."""
        assert self.rho.shape == (2 ** len(self.q),) * 2
        assert len(set(self.q)) == len(self.q)
        assert all(self.types.get(n) == QUBIT for n in self.q)
        assert all(self.types.get(n) == NAT for n in self.f)
        assert quantum.is_density(self.rho, tol)


def stable(mixture):
    return len(mixture) == 1


def point(ctx):
    return ((1.0, ctx),)


@dataclass(frozen=True, eq=False)
class ProcessState:
    process: object
    context: tuple  # ((p, Context), ...) summing to 1

    @classmethod
    def of(cls, process, ctx=None):
        return cls(process, point(ctx if ctx is not None else Context()))

    @property
    def is_context_stable(self):
        return stable(self.context)

    @property
    def ctx(self):
        if not stable(self.context):
            raise SemanticError("context is probabilistic")
        return self.context[0][1]


# -- labels and transitions -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Label:
    """Action label.

    ``kind`` is one of ``tau``, ``send`` (``g!v``), ``recv`` (``g?v``),
    ``qsend`` (``g!x``, with ``state`` the sent qubit's reduced matrix) and
    ``qrecv`` (``g?x``, with ``state`` the received qubit's matrix).  Internal
    communications are ``tau`` with ``via = (gate, value)``.
    """

    kind: str
    gate: Optional[str] = None
    value: object = None
    state: Optional[np.ndarray] = None
    probe: Optional[str] = None
    via: Optional[tuple] = None

    @property
    def silent(self):
        return self.kind == "tau"

    def text(self):
        if self.kind == "tau":
            return "tau"
        op = "!" if self.kind in ("send", "qsend") else "?"
        if self.kind == "qrecv" and self.probe:
            return f"{self.gate}?{self.value}<{self.probe}>"
        return f"{self.gate}{op}{self.value}"

    def __repr__(self):
        return f"Label({self.text()})"


TAU = Label("tau")


@dataclass(frozen=True, eq=False)
class Transition:
    """Either an action transition (``prob is None``) or a probabilistic one."""

    target: ProcessState
    label: Optional[Label] = None
    prob: Optional[float] = None

    @property
    def is_prob(self):
        return self.prob is not None


@dataclass(frozen=True)
class StepOptions:
    """Probe sets realizing open receptions, plus housekeeping switches."""

    classical_probes: tuple = ()
    qubit_probes: tuple = ()  # ((name, 2x2 matrix), ...)
    collect_garbage: bool = True
    unfold_limit: int = 20000  # maximum term size after unfolding a call


TOMO4 = tuple((name, quantum.STATES[name]) for name in ("0", "1", "+", "+i"))


# -- stability and termination ----------------------------------------------


def is_stable(p):
    """Probabilistic stability of a process term."""
    if isinstance(p, ProbChoice):
        return False
    if isinstance(p, (Parallel, NondetChoice)):
        return is_stable(p.left) and is_stable(p.right)
    if isinstance(p, CondChoice):
        return all(is_stable(q) for _, q in p.branches)
    if isinstance(p, Restrict):
        return is_stable(p.body)
    if isinstance(p, Seq):
        return is_stable(p.left)
    return True


def is_terminated(p, ctx):
    """Successful termination: ``end`` everywhere it matters."""
    if isinstance(p, End):
        return True
    if isinstance(p, Parallel):
        return is_terminated(p.left, ctx) and is_terminated(p.right, ctx)
    if isinstance(p, Restrict):
        return is_terminated(p.body, ctx)
    if isinstance(p, NondetChoice):
        return is_terminated(p.left, ctx) or is_terminated(p.right, ctx)
    if isinstance(p, CondChoice):
        return any(
            eval_condition(c, ctx) and is_terminated(q, ctx) for c, q in p.branches
        )
    return False


# -- expressions ------------------------------------------------------------


def _check_int(v):
    if not INT_MIN <= v <= INT_MAX:
        raise ArithmeticOverflow(str(v))
    return v


def _lookup(name, ctx):
    if name not in ctx.types:
        raise UnboundVariable(name)
    if ctx.types[name] != NAT:
        raise TypeMismatch(f"{name} is a qubit, not a Nat")
    if name not in ctx.f:
        raise UnboundVariable(f"{name} has no value")
    return ctx.f[name]


def eval_pure(e, ctx):
    """Integer value of an Apply-free expression."""
    if isinstance(e, NatLit):
        return _check_int(e.value)
    if isinstance(e, Var):
        return _lookup(e.name, ctx)
    if isinstance(e, Neg):
        return _check_int(-eval_pure(e.operand, ctx))
    if isinstance(e, Arith):
        a, b = eval_pure(e.left, ctx), eval_pure(e.right, ctx)
        if e.op == "+":
            return _check_int(a + b)
        if e.op == "-":
            return _check_int(a - b)
        if e.op == "*":
            return _check_int(a * b)
        if b == 0:
            raise DivisionByZero(f"{a} / 0")
        q = abs(a) // abs(b)
        return _check_int(q if (a >= 0) == (b >= 0) else -q)
    if isinstance(e, Apply):
        raise SemanticError("transformation application in a pure position")
    raise TypeError(f"not an expression: {e!r}")


def eval_condition(c, ctx):
    if isinstance(c, Compare):
        a, b = eval_pure(c.left, ctx), eval_pure(c.right, ctx)
        return a == b if c.op == "=" else a < b
    if isinstance(c, BoolOp):
        if c.op == "and":
            return eval_condition(c.left, ctx) and eval_condition(c.right, ctx)
        return eval_condition(c.left, ctx) or eval_condition(c.right, ctx)
    if isinstance(c, Not):
        return not eval_condition(c.operand, ctx)
    raise TypeError(f"not a condition: {c!r}")


def _first_apply(e):
    """Leftmost-innermost Apply node of ``e`` (Apply args are variables)."""
    if isinstance(e, Apply):
        return e
    if isinstance(e, Arith):
        return _first_apply(e.left) or _first_apply(e.right)
    if isinstance(e, Neg):
        return _first_apply(e.operand)
    return None


def _replace_first(e, target, new):
    if e is target:
        return new, True
    if isinstance(e, Arith):
        left, done = _replace_first(e.left, target, new)
        if done:
            return Arith(e.op, left, e.right), True
        right, done = _replace_first(e.right, target, new)
        return Arith(e.op, e.left, right), done
    if isinstance(e, Neg):
        inner, done = _replace_first(e.operand, target, new)
        return Neg(inner), done
    return e, False


def fresh_name(ctx, prefix):
    k = 0
    while f"{prefix}{k}" in ctx.types:
        k += 1
    return f"{prefix}{k}"


def _check_qubits(names, ctx):
    for n in names:
        if n not in ctx.types:
            raise UnboundVariable(n)
        if ctx.types[n] != QUBIT:
            raise TypeMismatch(f"{n} is not a qubit")
        if n not in ctx.q:
            raise UninitializedQubit(n)


def eval_expression(e, ctx):
    """One evaluation step of ``e`` in the stable context ``ctx``.

    Returns ``(result, mixture)``.  For an Apply-free expression ``result``
    is its integer value and the mixture is ``ctx`` itself.  Otherwise the
    leftmost-innermost ``A[xs]`` is evaluated: ``result`` is ``e`` with that
    application replaced by a fresh Nat variable ``y`` and the mixture holds
    one context per measurement outcome, each binding ``y`` to the outcome.
    """
    app = _first_apply(e)
    if app is None:
        return eval_pure(e, ctx), point(ctx)
    A = quantum.builtin(app.name)
    if len(app.qubits) != A.arity:
        raise ArityMismatch(f"{app.name} takes {A.arity} qubits")
    _check_qubits(app.qubits, ctx)
    y = fresh_name(ctx, "$m")
    types = dict(ctx.types, **{y: NAT})
    branches = quantum.measure(A, list(app.qubits), list(ctx.q), ctx.rho)
    mixture = tuple(
        (p, Context(types, ctx.q, rho_i, dict(ctx.f, **{y: int(t)})))
        for t, p, rho_i in branches
    )
    residual, _ = _replace_first(e, app, Var(y))
    return residual, mixture


def qubit_state(x, state):
    """Reduced density matrix of qubit ``x`` in a state with stable context."""
    ctx = state.ctx if isinstance(state, ProcessState) else state
    if x not in ctx.q:
        raise UninitializedQubit(x)
    return quantum.partial_trace(list(ctx.q), ctx.rho, [x])


# -- the stepper ------------------------------------------------------------
#
# Internal moves, all relative to one stable context:
#   ("prob", p, P')            process-level probabilistic choice
#   ("act", label, P', mix)    action transition to P' over mixture mix
#   ("offer", gate, var, P')   receive capability, completed by a partner
#                              or by a probe at top level


def _wrap(moves, fn):
    out = []
    for m in moves:
        if m[0] == "prob":
            out.append(("prob", m[1], fn(m[2])))
        elif m[0] == "act":
            out.append(("act", m[1], fn(m[2]), m[3]))
        else:
            out.append(("offer", m[1], m[2], fn(m[3])))
    return out


def _prob_moves(p, ctx):
    """Process-level probabilistic moves; they never change the context."""
    if isinstance(p, ProbChoice):
        return [("prob", float(w), q) for w, q in p.branches]
    if isinstance(p, (Parallel, NondetChoice)):
        return _combine_prob(p.left, p.right, type(p), ctx)
    if isinstance(p, Restrict):
        return _wrap(_prob_moves(p.body, ctx), lambda b: Restrict(b, p.gates))
    if isinstance(p, Seq):
        return _wrap(_prob_moves(p.left, ctx), lambda l: Seq(l, p.right))
    if isinstance(p, CondChoice):
        return [
            m
            for c, q in p.branches
            if not is_stable(q) and eval_condition(c, ctx)
            for m in _prob_moves(q, ctx)
        ]
    return []


def _combine_prob(left, right, build, ctx):
    """Probabilistic rules for binary operators (resolution before action)."""
    sl, sr = is_stable(left), is_stable(right)
    if not sl and not sr:
        return [
            ("prob", p * q, build(l2, r2))
            for _, p, l2 in _prob_moves(left, ctx)
            for _, q, r2 in _prob_moves(right, ctx)
        ]
    if not sl:
        return [("prob", p, build(l2, right)) for _, p, l2 in _prob_moves(left, ctx)]
    return [("prob", q, build(left, r2)) for _, q, r2 in _prob_moves(right, ctx)]


def _prefix_moves(p, ctx):
    action = p.action
    if isinstance(action, (Send, ExprAction)):
        app = _first_apply(action.expr)
        if app is not None:
            residual, mixture = eval_expression(action.expr, ctx)
            new_action = (
                Send(action.gate, residual) if isinstance(action, Send) else ExprAction(residual)
            )
            return [("act", TAU, ActionPrefix(new_action, p.body), mixture)]
    if isinstance(action, ExprAction):
        eval_pure(action.expr, ctx)
        return [("act", TAU, p.body, point(ctx))]
    if isinstance(action, Send):
        e = action.expr
        if isinstance(e, Var) and ctx.types.get(e.name) == QUBIT:
            if e.name not in ctx.q:
                raise UninitializedQubit(e.name)
            label = Label("qsend", action.gate, e.name, state=qubit_state(e.name, ctx))
            return [("act", label, p.body, point(ctx))]
        v = eval_pure(e, ctx)
        return [("act", Label("send", action.gate, v), p.body, point(ctx))]
    # Receive
    if action.var != DISCARD and action.var not in ctx.types:
        raise UnboundVariable(action.var)
    return [("offer", action.gate, action.var, p.body)]


def _communicate(send, offer, ctx, target):
    """Synchronize a send move with a receive offer; returns a move or None."""
    label = send[1]
    var = offer[2]
    if label.kind == "send":
        v = label.value
        if var == DISCARD or ctx.types[var] == NAT:
            f = dict(ctx.f)
            if var != DISCARD:
                f[var] = v
            new = Context(ctx.types, ctx.q, ctx.rho, f)
        else:
            if var in ctx.q:
                raise QubitAlreadyInitialized(var)
            if v not in (0, 1):
                return None
            nu = quantum.STATES[str(v)]
            new = Context(ctx.types, (var,) + ctx.q, np.kron(nu, ctx.rho), dict(ctx.f))
        return ("act", Label("tau", via=(label.gate, v)), target, point(new))
    # qubit sent
    if var == DISCARD or ctx.types[var] != QUBIT:
        return None
    if var in ctx.q:
        raise QubitAlreadyInitialized(var)
    x = label.value
    q = tuple(var if n == x else n for n in ctx.q)
    types = {n: t for n, t in ctx.types.items() if n != x}
    new = Context(types, q, ctx.rho, dict(ctx.f))
    return ("act", Label("tau", via=(label.gate, "qubit")), target, point(new))


def _sync(ml, mr, ctx, build):
    out = []
    for a in ml:
        if a[0] != "act" or a[1].kind not in ("send", "qsend"):
            continue
        for b in mr:
            if b[0] == "offer" and b[1] == a[1].gate:
                m = _communicate(a, b, ctx, build(a[2], b[3]))
                if m is not None:
                    out.append(m)
    return out


def _moves(p, ctx, defs, opts):
    if isinstance(p, (Nil, End)):
        return []
    if not is_stable(p):
        moves = _prob_moves(p, ctx)
        # a conditional whose unstable branches are all disabled acts normally
        if moves or not isinstance(p, CondChoice):
            return moves
    if isinstance(p, ActionPrefix):
        return _prefix_moves(p, ctx)
    if isinstance(p, VarDecl):
        types = dict(ctx.types)
        mapping = {}
        for name, t in p.decls:
            new = fresh_name(Context(types), "$v")
            types[new] = t
            mapping[name] = new
        body = substitute(p.body, mapping)
        return [("act", TAU, body, point(Context(types, ctx.q, ctx.rho, dict(ctx.f))))]
    if isinstance(p, Call):
        d = defs.get(p.name)
        if d is None:
            raise UnboundProcessName(p.name)
        if len(d.params) != len(p.args):
            raise ArityMismatch(f"{p.name} expects {len(d.params)} arguments")
        for (param, t), arg in zip(d.params, p.args):
            if arg not in ctx.types:
                raise UnboundVariable(arg)
            if ctx.types[arg] != t:
                raise TypeMismatch(f"argument {arg} of {p.name} should be {t}")
        body = substitute(d.body, {param: arg for (param, _), arg in zip(d.params, p.args)})
        if opts is not None and term_size(body) > opts.unfold_limit:
            raise TermTooLarge(p.name)
        return [("act", TAU, body, point(ctx))]
    if isinstance(p, (Parallel, NondetChoice)):
        ml = _moves(p.left, ctx, defs, opts)
        mr = _moves(p.right, ctx, defs, opts)
        if isinstance(p, NondetChoice):
            return ml + mr
        out = _wrap(ml, lambda l: Parallel(l, p.right))
        out += _wrap(mr, lambda r: Parallel(p.left, r))
        out += _sync(ml, mr, ctx, lambda l, r: Parallel(l, r))
        out += _sync(mr, ml, ctx, lambda r, l: Parallel(l, r))
        return out
    if isinstance(p, Restrict):
        inner = _moves(p.body, ctx, defs, opts)
        kept = [
            m
            for m in inner
            if not (
                (m[0] == "act" and m[1].gate in p.gates and m[1].kind != "tau")
                or (m[0] == "offer" and m[1] in p.gates)
            )
        ]
        return _wrap(kept, lambda b: Restrict(b, p.gates))
    if isinstance(p, CondChoice):
        chosen = [q for c, q in p.branches if eval_condition(c, ctx)]
        return [m for q in chosen for m in _moves(q, ctx, defs, opts)]
    if isinstance(p, Seq):
        if is_terminated(p.left, ctx):
            return [("act", TAU, p.right, point(ctx))]
        return _wrap(_moves(p.left, ctx, defs, opts), lambda l: Seq(l, p.right))
    raise TypeError(f"not a process: {p!r}")


def term_size(p):
    return 1 + sum(term_size(c) for c in children(p))


def collect_garbage(process, ctx):
    """Drop variables that no longer occur in ``process``.

    Unreferenced qubits are traced out of ``rho``; nothing the process can
    still do depends on them.
    """
    live = set(free_vars(process))
    if all(n in live for n in ctx.types):
        return ctx
    keep_q = [n for n in ctx.q if n in live]
    rho = ctx.rho
    if len(keep_q) != len(ctx.q):
        rho = quantum.partial_trace(list(ctx.q), rho, keep_q)
    types = {n: t for n, t in ctx.types.items() if n in live}
    f = {n: v for n, v in ctx.f.items() if n in live}
    return Context(types, tuple(keep_q), rho, f)


def normalize(state, opts=None):
    if opts is not None and not opts.collect_garbage:
        return state
    mixture = tuple((p, collect_garbage(state.process, c)) for p, c in state.context)
    return ProcessState(state.process, mixture)


def _expand(state, definitions, opts):
    """Transitions of ``state`` plus the receive offers left unanswered."""
    opts = opts or StepOptions()
    definitions = definitions or {}
    if not state.is_context_stable:
        trans = [
            Transition(normalize(ProcessState(state.process, point(c)), opts), prob=p)
            for p, c in state.context
        ]
        return trans, []
    ctx = state.ctx
    out, pending = [], []
    for m in _moves(state.process, ctx, definitions, opts):
        if m[0] == "prob":
            out.append(Transition(normalize(ProcessState(m[2], point(ctx)), opts), prob=m[1]))
        elif m[0] == "act":
            out.append(Transition(normalize(ProcessState(m[2], m[3]), opts), label=m[1]))
        else:
            new = _probe(m, ctx, opts)
            if new is None:
                pending.append(m)
            else:
                out.extend(new)
    return out, pending


def _probe(offer, ctx, opts):
    _, gate, var, body = offer
    if var == DISCARD or ctx.types[var] == NAT:
        if not opts.classical_probes:
            return None
        out = []
        for v in opts.classical_probes:
            f = dict(ctx.f)
            if var != DISCARD:
                f[var] = int(v)
            target = ProcessState(body, point(Context(ctx.types, ctx.q, ctx.rho, f)))
            out.append(Transition(normalize(target, opts), label=Label("recv", gate, int(v))))
        return out
    if var in ctx.q:
        raise QubitAlreadyInitialized(var)
    if not opts.qubit_probes:
        return None
    out = []
    for name, nu in opts.qubit_probes:
        nu = np.asarray(nu, dtype=complex)
        new = Context(ctx.types, (var,) + ctx.q, quantum.tensor_prepend(nu, ctx.rho), dict(ctx.f))
        label = Label("qrecv", gate, var, state=nu, probe=name)
        out.append(Transition(normalize(ProcessState(body, point(new)), opts), label=label))
    return out


def step(state, definitions=None, opts=None):
    """All transitions out of ``state``.

    Unstable contexts yield only probabilistic transitions, one per branch.
    Open receptions fire only for the probe values/states in ``opts``.
    """
    return _expand(state, definitions, opts)[0]


def has_open_receive(state, definitions=None, opts=None):
    """True if some reception of ``state`` could not fire for lack of probes."""
    return bool(_expand(state, definitions, opts)[1])
