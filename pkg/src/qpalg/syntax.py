"""Abstract syntax, parser and pretty printer for QPAlg programs.

Concrete syntax (ASCII)::

    Had := [x:Qubit . g?x . H[x] . h!x . nil]
    Alice[x:Qubit, y:Qubit] := CNot[x,y] . H[x] . g!M_std2[x,y] . end
    (a!0.nil +(0.2) b!0.nil) + c!0.nil

``!`` send, ``?`` receive, ``||`` parallel, ``+`` nondeterministic choice,
``+(p)`` probabilistic choice, ``[x:T . P]`` declaration,
``[c1 -> P1, c2 -> P2]`` conditional, ``P \\ {g,h}`` restriction, ``;``
sequence.  Mixing ``||``, ``+`` and ``+(p)`` at one level needs parentheses.
Comments run from ``--`` to the end of the line.
"""

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .quantum import BUILTINS

NAT = "Nat"
QUBIT = "Qubit"
TYPES = (NAT, QUBIT)
KEYWORDS = {"nil", "end", "and", "or", "not", NAT, QUBIT}


class QPAlgSyntaxError(SyntaxError):
    def __init__(self, msg, line=0, column=0):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.msg = msg
        self.line = line
        self.column = column


class ArityError(QPAlgSyntaxError):
    pass


class DuplicateDefinition(QPAlgSyntaxError):
    pass


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class NatLit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Apply:
    """Admissible transformation applied to qubit variables, ``A[x,y]``."""

    name: str
    qubits: tuple


@dataclass(frozen=True)
class Compare:
    op: str  # '=' or '<'
    left: object
    right: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # 'and' or 'or'
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    operand: object


# -- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    gate: str
    expr: object


@dataclass(frozen=True)
class Receive:
    gate: str
    var: str


@dataclass(frozen=True)
class ExprAction:
    expr: object


# -- processes --------------------------------------------------------------


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class ActionPrefix:
    action: object
    body: object


@dataclass(frozen=True)
class VarDecl:
    decls: tuple  # ((name, type), ...)
    body: object


@dataclass(frozen=True)
class Parallel:
    left: object
    right: object


@dataclass(frozen=True)
class NondetChoice:
    left: object
    right: object


@dataclass(frozen=True)
class ProbChoice:
    branches: tuple  # ((Fraction, process), ...)


@dataclass(frozen=True)
class CondChoice:
    branches: tuple  # ((condition, process), ...)


@dataclass(frozen=True)
class Restrict:
    body: object
    gates: frozenset


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Seq:
    left: object
    right: object


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple  # ((name, type), ...)
    body: object


@dataclass
class Program:
    definitions: dict = field(default_factory=dict)
    entry: Optional[object] = None


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|--[^\n]*)
  | (?P<num>\d+\.\d+|\d+)
  | (?P<ident>[^\W\d][\w']*)
  | (?P<op>:=|\|\||->|[\\{}\[\]().,:!?+\-*/=<;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'ident', 'op', 'eof'
    text: str
    line: int
    column: int


def tokenize(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QPAlgSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parser -----------------------------------------------------------------


def _check_prob(p, tok):
    if not 0 < p < 1:
        raise QPAlgSyntaxError(f"probability {p} not in (0,1)", tok.line, tok.column)


class Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.pos = 0

    # token helpers
    def peek(self, offset=0):
        i = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, text, offset=0):
        tok = self.peek(offset)
        return tok.kind in ("op", "ident") and tok.text == text

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos = min(self.pos + 1, len(self.tokens) - 1)
        return tok

    def error(self, msg, tok=None, cls=QPAlgSyntaxError):
        tok = tok or self.peek()
        return cls(msg, tok.line, tok.column)

    def expect(self, text):
        if not self.at(text):
            tok = self.peek()
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def ident(self, what="identifier"):
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        if "$" in tok.text:
            raise self.error("'$' is reserved for generated names")
        return self.advance().text

    # program level
    def program(self):
        prog = Program()
        while self.peek().kind != "eof":
            if self._at_definition():
                d = self.definition()
                if d.name in prog.definitions:
                    raise self.error(
                        f"process {d.name!r} defined twice", cls=DuplicateDefinition
                    )
                prog.definitions[d.name] = d
            elif prog.entry is None:
                prog.entry = self.process()
            else:
                raise self.error(f"unexpected {self.peek().text!r}")
        if not prog.definitions and prog.entry is None:
            raise self.error("empty program")
        return prog

    def _at_definition(self):
        if self.peek().kind != "ident" or self.peek().text in KEYWORDS:
            return False
        if self.at(":=", 1):
            return True
        if not self.at("[", 1):
            return False
        i = 2
        while self.peek(i).kind == "ident" and self.at(",", i + 1):
            i += 2
        return self.peek(i).kind == "ident" and self.at(":", i + 1)

    def definition(self):
        tok = self.peek()
        name = self.ident("process name")
        if name in BUILTINS:
            raise self.error(f"{name!r} names a builtin transformation", tok)
        params = ()
        if self.at("["):
            self.advance()
            params = self.typed_names()
            self.expect("]")
        self.expect(":=")
        return Definition(name, params, self.process())

    def typed_names(self):
        out = []
        while True:
            group = [self.ident("variable")]
            while self.at(","):
                self.advance()
                group.append(self.ident("variable"))
            self.expect(":")
            tok = self.peek()
            if tok.text not in TYPES:
                raise self.error(f"unknown type {tok.text!r}")
            self.advance()
            out.extend((n, tok.text) for n in group)
            if not self.at(","):
                break
            self.advance()
        names = [n for n, _ in out]
        if len(set(names)) != len(names):
            raise self.error("duplicate variable in declaration")
        return tuple(out)

    # processes
    def process(self):
        left = self.binary()
        if self.at(";"):
            self.advance()
            return Seq(left, self.process())
        return left

    def _prob_op(self):
        """Probability of a ``+(p)`` operator at the cursor, else None."""
        if not (self.at("+") and self.at("(", 1) and self.peek(2).kind == "num"):
            return None
        if self.at(")", 3):
            return 4, Fraction(self.peek(2).text)
        if self.at("/", 3) and self.peek(4).kind == "num" and self.at(")", 5):
            return 6, Fraction(int(self.peek(2).text), int(self.peek(4).text))
        return None

    def binary(self):
        first = self.restricted()
        kind = None
        items = [first]
        probs = []
        while True:
            prob = self._prob_op()
            if prob is not None:
                this = "prob"
            elif self.at("||"):
                this = "par"
            elif self.at("+"):
                this = "choice"
            else:
                break
            if kind not in (None, this):
                raise self.error("mix of ||, + and +(p) needs parentheses")
            kind = this
            tok = self.peek()
            if prob is not None:
                width, p = prob
                _check_prob(p, tok)
                probs.append(p)
                for _ in range(width):
                    self.advance()
            else:
                self.advance()
            items.append(self.restricted())
        if kind is None:
            return first
        if kind == "prob":
            # left-associative: ((P1 +(a) P2) +(b) P3) gives a*b, (1-a)*b, 1-b
            branches = [(Fraction(1), items[0])]
            for p, proc in zip(probs, items[1:]):
                branches = [(w * p, q) for w, q in branches] + [(1 - p, proc)]
            return ProbChoice(tuple(branches))
        node = Parallel if kind == "par" else NondetChoice
        out = items[0]
        for item in items[1:]:
            out = node(out, item)
        return out

    def restricted(self):
        body = self.prefixed()
        while self.at("\\"):
            self.advance()
            self.expect("{")
            gates = [self.ident("gate")]
            while self.at(","):
                self.advance()
                gates.append(self.ident("gate"))
            self.expect("}")
            body = Restrict(body, frozenset(gates))
        return body

    def prefixed(self):
        action = self.maybe_action()
        if action is None:
            return self.atom()
        self.expect(".")
        return ActionPrefix(action, self.prefixed())

    def maybe_action(self):
        tok = self.peek()
        if tok.kind == "num" or self.at("-"):
            return ExprAction(self.nexp())
        if tok.kind != "ident" or tok.text in KEYWORDS:
            return None
        if self.at("!", 1):
            gate = self.ident("gate")
            self.advance()
            return Send(gate, self.nexp())
        if self.at("?", 1):
            gate = self.ident("gate")
            self.advance()
            return Receive(gate, self.ident("variable"))
        if tok.text in BUILTINS or self.at(".", 1):
            return ExprAction(self.nexp())
        return None

    def atom(self):
        tok = self.peek()
        if self.at("nil"):
            self.advance()
            return Nil()
        if self.at("end"):
            self.advance()
            return End()
        if self.at("("):
            self.advance()
            p = self.process()
            self.expect(")")
            return p
        if self.at("["):
            self.advance()
            if self._at_decl():
                decls = self.typed_names()
                self.expect(".")
                body = self.process()
                self.expect("]")
                return VarDecl(decls, body)
            branches = [self.cond_branch()]
            while self.at(","):
                self.advance()
                branches.append(self.cond_branch())
            self.expect("]")
            return CondChoice(tuple(branches))
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            name = self.ident("process name")
            args = ()
            if self.at("["):
                self.advance()
                args = self.name_list()
                self.expect("]")
            return Call(name, args)
        raise self.error(f"expected a process, found {tok.text or 'end of input'!r}")

    def _at_decl(self):
        i = 0
        while self.peek(i).kind == "ident" and self.at(",", i + 1):
            i += 2
        return self.peek(i).kind == "ident" and self.at(":", i + 1)

    def name_list(self):
        names = [self.ident("variable")]
        while self.at(","):
            self.advance()
            names.append(self.ident("variable"))
        return tuple(names)

    def cond_branch(self):
        c = self.condition()
        self.expect("->")
        return (c, self.process())

    # conditions
    def condition(self):
        left = self.conjunction()
        while self.at("or"):
            self.advance()
            left = BoolOp("or", left, self.conjunction())
        return left

    def conjunction(self):
        left = self.cond_atom()
        while self.at("and"):
            self.advance()
            left = BoolOp("and", left, self.cond_atom())
        return left

    def cond_atom(self):
        if self.at("not"):
            self.advance()
            return Not(self.cond_atom())
        if self.at("("):
            saved = self.pos
            self.advance()
            try:
                c = self.condition()
                self.expect(")")
                if not (self.at("=") or self.at("<")):
                    return c
            except QPAlgSyntaxError:
                pass
            self.pos = saved
        left = self.nexp()
        if not (self.at("=") or self.at("<")):
            raise self.error("expected '=' or '<' in condition")
        op = self.advance().text
        return Compare(op, left, self.nexp())

    # expressions
    def nexp(self):
        left = self.nfact()
        while (self.at("+") and self._prob_op() is None) or self.at("-"):
            op = self.advance().text
            left = Arith(op, left, self.nfact())
        return left

    def nfact(self):
        left = self.nterm()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            left = Arith(op, left, self.nterm())
        return left

    def nterm(self):
        tok = self.peek()
        if tok.kind == "num":
            if "." in tok.text:
                raise self.error("expected an integer")
            self.advance()
            return NatLit(int(tok.text))
        if self.at("-"):
            self.advance()
            return Neg(self.nterm())
        if self.at("("):
            self.advance()
            e = self.nexp()
            self.expect(")")
            return e
        if tok.kind == "ident" and tok.text in BUILTINS:
            self.advance()
            self.expect("[")
            qubits = [self.ident("qubit variable")]
            while self.at(",") or self.at("*"):
                self.advance()
                qubits.append(self.ident("qubit variable"))
            self.expect("]")
            arity = BUILTINS[tok.text].arity
            if len(qubits) != arity:
                raise ArityError(
                    f"{tok.text} takes {arity} qubit(s), got {len(qubits)}",
                    tok.line,
                    tok.column,
                )
            if len(set(qubits)) != len(qubits):
                raise self.error("repeated qubit in transformation", tok)
            return Apply(tok.text, tuple(qubits))
        return Var(self.ident("expression"))


def parse_program(text):
    """Parse QPAlg source text into a :class:`Program`."""
    return Parser(text).program()


def parse_process(text):
    """Parse a single process expression."""
    p = Parser(text)
    proc = p.process()
    if p.peek().kind != "eof":
        raise p.error(f"unexpected {p.peek().text!r}")
    return proc


# -- pretty printer ---------------------------------------------------------

_BINARY = (Parallel, NondetChoice, ProbChoice, Seq)


def _fmt_prob(p):
    p = Fraction(p)
    d = p.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d != 1:
        return f"{p.numerator}/{p.denominator}"
    digits = 0
    while (p * 10 ** digits).denominator != 1:
        digits += 1
    return f"{float(p):.{max(digits, 1)}f}"


def format_expr(e):
    if isinstance(e, NatLit):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        if isinstance(e.operand, Arith):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Apply):
        return f"{e.name}[{','.join(e.qubits)}]"
    if isinstance(e, Arith):
        tight = e.op in "*/"
        left = format_expr(e.left)
        if tight and isinstance(e.left, Arith) and e.left.op in "+-":
            left = f"({left})"
        right = format_expr(e.right)
        if isinstance(e.right, Arith) and (tight or e.right.op in "+-"):
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Compare):
        return f"{format_expr(e.left)} {e.op} {format_expr(e.right)}"
    if isinstance(e, BoolOp):
        left = format_expr(e.left)
        right = format_expr(e.right)
        if e.op == "and":
            if isinstance(e.left, BoolOp) and e.left.op == "or":
                left = f"({left})"
            if isinstance(e.right, BoolOp):
                right = f"({right})"
        elif isinstance(e.right, BoolOp) and e.right.op == "or":
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Not):
        inner = format_expr(e.operand)
        if isinstance(e.operand, BoolOp):
            inner = f"({inner})"
        return f"not {inner}"
    raise TypeError(f"not an expression: {e!r}")


def format_action(a):
    if isinstance(a, Send):
        return f"{a.gate}!{format_expr(a.expr)}"
    if isinstance(a, Receive):
        return f"{a.gate}?{a.var}"
    return format_expr(a.expr)


def _decls(decls):
    return ", ".join(f"{n}:{t}" for n, t in decls)


def pretty_print(p):
    """Concrete syntax for ``p``; ``parse_process`` inverts it."""
    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, End):
        return "end"
    if isinstance(p, ActionPrefix):
        body = pretty_print(p.body)
        if isinstance(p.body, _BINARY + (Restrict,)):
            body = f"({body})"
        action = format_action(p.action)
        if isinstance(p.action, ExprAction) and action.startswith("("):
            raise ValueError("expression actions cannot start with '('")
        # "0.1" would lex as a decimal, so keep digits apart
        sep = " . " if action[-1].isdigit() and body[0].isdigit() else "."
        return f"{action}{sep}{body}"
    if isinstance(p, VarDecl):
        return f"[{_decls(p.decls)} . {pretty_print(p.body)}]"
    if isinstance(p, (Parallel, NondetChoice)):
        op = "||" if isinstance(p, Parallel) else "+"
        left = pretty_print(p.left)
        if isinstance(p.left, _BINARY) and type(p.left) is not type(p):
            left = f"({left})"
        right = pretty_print(p.right)
        if isinstance(p.right, _BINARY):
            right = f"({right})"
        return f"{left} {op} {right}"
    if isinstance(p, ProbChoice):
        parts = []
        total = Fraction(0)
        for i, (w, proc) in enumerate(p.branches):
            text = pretty_print(proc)
            if isinstance(proc, _BINARY):
                text = f"({text})"
            if i:
                cond = total / (total + w)
                parts.append(f"+({_fmt_prob(cond)})")
            parts.append(text)
            total += w
        return " ".join(parts)
    if isinstance(p, CondChoice):
        inner = ", ".join(
            f"{format_expr(c)} -> {pretty_print(proc)}" for c, proc in p.branches
        )
        return f"[{inner}]"
    if isinstance(p, Restrict):
        body = pretty_print(p.body)
        if isinstance(p.body, _BINARY):
            body = f"({body})"
        return f"{body} \\ {{{', '.join(sorted(p.gates))}}}"
    if isinstance(p, Call):
        return f"{p.name}[{', '.join(p.args)}]" if p.args else p.name
    if isinstance(p, Seq):
        left = pretty_print(p.left)
        if isinstance(p.left, Seq):
            left = f"({left})"
        return f"{left} ; {pretty_print(p.right)}"
    raise TypeError(f"not a process: {p!r}")


def print_program(prog):
    lines = []
    for d in prog.definitions.values():
        head = f"{d.name}[{_decls(d.params)}]" if d.params else d.name
        lines.append(f"{head} := {pretty_print(d.body)}")
    if prog.entry is not None:
        lines.append(pretty_print(prog.entry))
    return "\n".join(lines) + "\n"


# -- desugaring -------------------------------------------------------------


def desugar(p):
    """Replace ``P ; Q`` by ``(P' || $seq<k>?_.Q') \\ {$seq<k>}``.

    ``end`` inside ``P`` becomes ``$seq<k>!0.nil`` for the innermost
    enclosing sequence; ``end`` outside any sequence becomes ``nil``.
    """
    counter = [0]

    def go(p, signal):
        if isinstance(p, End):
            return Nil() if signal is None else ActionPrefix(Send(signal, NatLit(0)), Nil())
        if isinstance(p, Seq):
            gate = f"$seq{counter[0]}"
            counter[0] += 1
            left = go(p.left, gate)
            right = go(p.right, signal)
            return Restrict(
                Parallel(left, ActionPrefix(Receive(gate, "_"), right)), frozenset({gate})
            )
        return map_children(p, lambda c: go(c, signal))

    return go(p, None)


def map_children(p, fn):
    """Rebuild ``p`` with ``fn`` applied to each direct sub-process."""
    if isinstance(p, ActionPrefix):
        return ActionPrefix(p.action, fn(p.body))
    if isinstance(p, VarDecl):
        return VarDecl(p.decls, fn(p.body))
    if isinstance(p, (Parallel, NondetChoice, Seq)):
        return type(p)(fn(p.left), fn(p.right))
    if isinstance(p, ProbChoice):
        return ProbChoice(tuple((w, fn(q)) for w, q in p.branches))
    if isinstance(p, CondChoice):
        return CondChoice(tuple((c, fn(q)) for c, q in p.branches))
    if isinstance(p, Restrict):
        return Restrict(fn(p.body), p.gates)
    return p


def children(p):
    if isinstance(p, (ActionPrefix, VarDecl, Restrict)):
        return (p.body,)
    if isinstance(p, (Parallel, NondetChoice, Seq)):
        return (p.left, p.right)
    if isinstance(p, (ProbChoice, CondChoice)):
        return tuple(q for _, q in p.branches)
    return ()


# -- variables and substitution ---------------------------------------------


def expr_vars(e):
    """Variable names occurring in an expression or condition, in order."""
    if isinstance(e, Var):
        return [e.name]
    if isinstance(e, Apply):
        return list(e.qubits)
    if isinstance(e, (Arith, Compare, BoolOp)):
        return expr_vars(e.left) + expr_vars(e.right)
    if isinstance(e, (Neg, Not)):
        return expr_vars(e.operand)
    return []


def action_vars(a):
    if isinstance(a, Receive):
        return [a.var]
    return expr_vars(a.expr)


def free_vars(p):
    """Free variable names of ``p`` in first-occurrence order."""
    seen = {}

    def go(p, bound):
        if isinstance(p, ActionPrefix):
            for n in action_vars(p.action):
                if n not in bound:
                    seen.setdefault(n, None)
        elif isinstance(p, CondChoice):
            for c, _ in p.branches:
                for n in expr_vars(c):
                    if n not in bound:
                        seen.setdefault(n, None)
        elif isinstance(p, Call):
            for n in p.args:
                if n not in bound:
                    seen.setdefault(n, None)
        if isinstance(p, VarDecl):
            bound = bound | {n for n, _ in p.decls}
        for c in children(p):
            go(c, bound)

    go(p, frozenset())
    return list(seen)


def rename_expr(e, m):
    if isinstance(e, Var):
        return Var(m.get(e.name, e.name))
    if isinstance(e, Apply):
        return Apply(e.name, tuple(m.get(n, n) for n in e.qubits))
    if isinstance(e, (Arith, Compare, BoolOp)):
        return type(e)(e.op, rename_expr(e.left, m), rename_expr(e.right, m))
    if isinstance(e, (Neg, Not)):
        return type(e)(rename_expr(e.operand, m))
    return e


def rename_action(a, m):
    if isinstance(a, Receive):
        return Receive(a.gate, m.get(a.var, a.var))
    return type(a)(a.gate, rename_expr(a.expr, m)) if isinstance(a, Send) else ExprAction(
        rename_expr(a.expr, m)
    )


def substitute(p, mapping, avoid=()):
    """Capture-avoiding renaming of free variables of ``p``.

    Binders that would capture a name in the range of ``mapping`` are
    themselves renamed to ``$c<k>`` names, which user code cannot spell.
    """
    mapping = dict(mapping)
    taken = set(mapping.values()) | set(avoid)
    counter = [0]

    def fresh():
        while f"$c{counter[0]}" in taken:
            counter[0] += 1
        name = f"$c{counter[0]}"
        taken.add(name)
        return name

    def go(p, m):
        if not m:
            return p
        if isinstance(p, ActionPrefix):
            return ActionPrefix(rename_action(p.action, m), go(p.body, m))
        if isinstance(p, CondChoice):
            return CondChoice(tuple((rename_expr(c, m), go(q, m)) for c, q in p.branches))
        if isinstance(p, Call):
            return Call(p.name, tuple(m.get(n, n) for n in p.args))
        if isinstance(p, VarDecl):
            inner = {k: v for k, v in m.items() if k not in {n for n, _ in p.decls}}
            range_ = set(inner.values())
            decls = []
            for n, t in p.decls:
                if n in range_:
                    new = fresh()
                    inner[n] = new
                    decls.append((new, t))
                else:
                    decls.append((n, t))
            return VarDecl(tuple(decls), go(p.body, inner))
        return map_children(p, lambda c: go(c, m))

    return go(p, mapping)


def gates_of(p):
    """All gate names used by ``p`` (sends, receives and restrictions)."""
    out = set()

    def go(p):
        if isinstance(p, ActionPrefix) and isinstance(p.action, (Send, Receive)):
            out.add(p.action.gate)
        if isinstance(p, Restrict):
            out.update(p.gates)
        for c in children(p):
            go(c)

    go(p)
    return out
