"""Density-matrix engine for the quantum part of QPAlg contexts.

Qubit ordering: position 0 of a register ``q`` is the leftmost (most
significant) tensor factor, so basis index ``b`` of ``q = [x0, x1, ...]`` has
``x0`` as its highest bit.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Branches whose probability is at or below this are dropped by :func:`measure`.
PROB_FLOOR = 1e-12
#: Largest register handled densely.
MAX_QUBITS = 12


class QuantumError(Exception):
    pass


class UnknownTransformation(QuantumError):
    pass


class UnknownQubit(QuantumError):
    pass


class DuplicateQubit(QuantumError):
    pass


class ArityMismatch(QuantumError):
    pass


class InvalidDensity(QuantumError):
    pass


@dataclass(frozen=True)
class AdmissibleTransformation:
    """A general measurement ``{A_t}`` acting on ``arity`` qubits.

    ``branches`` pairs each outcome value with its operator; unitaries have a
    single branch with outcome 0.
    """

    name: str
    arity: int
    branches: tuple

    @property
    def outcomes(self):
        return tuple(t for t, _ in self.branches)

    def completeness_error(self):
        dim = 2 ** self.arity
        total = sum(op.conj().T @ op for _, op in self.branches)
        return float(np.max(np.abs(total - np.eye(dim))))


def ket(*bits):
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(str(b) for b in bits), 2) if bits else 0] = 1.0
    return v


def projector(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


_S2 = 1 / np.sqrt(2)
H_MATRIX = _S2 * np.array([[1, 1], [1, -1]], dtype=complex)
PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

# Named single-qubit states, also used as probe sets for open receptions.
STATES = {
    "0": projector([1, 0]),
    "1": projector([0, 1]),
    "+": projector([_S2, _S2]),
    "-": projector([_S2, -_S2]),
    "+i": projector([_S2, 1j * _S2]),
    "-i": projector([_S2, -1j * _S2]),
    "mixed": 0.5 * np.eye(2, dtype=complex),
}

EPR = projector(_S2 * (ket(0, 0) + ket(1, 1)))


def _eigenprojectors(observable):
    """Split a ±1-valued observable into (+1, P+), (-1, P-) branches."""
    ident = np.eye(observable.shape[0], dtype=complex)
    return ((1, (ident + observable) / 2), (-1, (ident - observable) / 2))


def _build_builtins():
    table = {
        "H": (1, ((0, H_MATRIX),)),
        "CNot": (2, ((0, CNOT_MATRIX),)),
        "I": (1, ((0, PAULI_I),)),
        "SigmaX": (1, ((0, PAULI_X),)),
        "SigmaY": (1, ((0, PAULI_Y),)),
        "SigmaZ": (1, ((0, PAULI_Z),)),
        "M_std1": (1, tuple((b, projector(ket(b))) for b in (0, 1))),
        "M_std2": (
            2,
            tuple((2 * i + j, projector(ket(i, j))) for i in (0, 1) for j in (0, 1)),
        ),
        "X": (1, _eigenprojectors(PAULI_X)),
        "ZX": (2, _eigenprojectors(np.kron(PAULI_Z, PAULI_X))),
        # Pauli observables used by the state-transfer gadget
        "XX": (2, _eigenprojectors(np.kron(PAULI_X, PAULI_X))),
        "Z": (1, _eigenprojectors(PAULI_Z)),
    }
    return {
        name: AdmissibleTransformation(name, arity, branches)
        for name, (arity, branches) in table.items()
    }


BUILTINS = _build_builtins()


def builtin(name):
    """Return the predefined admissible transformation called ``name``."""
    try:
        return BUILTINS[name]
    except KeyError:
        raise UnknownTransformation(name) from None


def _positions(q, xs):
    index = {name: i for i, name in enumerate(q)}
    if len(set(xs)) != len(xs):
        raise DuplicateQubit(f"repeated qubit in {list(xs)}")
    try:
        return tuple(index[x] for x in xs)
    except KeyError as exc:
        raise UnknownQubit(exc.args[0]) from None


@lru_cache(maxsize=256)
def _permutation(n, front):
    order = list(front) + [i for i in range(n) if i not in front]
    dim = 2 ** n
    perm = np.zeros((dim, dim))
    for b in range(dim):
        bits = [(b >> (n - 1 - i)) & 1 for i in range(n)]
        new = 0
        for pos in order:
            new = (new << 1) | bits[pos]
        perm[new, b] = 1.0
    perm.setflags(write=False)
    return perm


def permutation_to_front(q, xs):
    """Permutation matrix moving the qubits ``xs`` to the head of ``q``.

    Conjugation ``Π ρ Π†`` re-expresses ``ρ`` in the order ``xs + rest``,
    the remaining names keeping their relative order.
    """
    return _permutation(len(q), _positions(q, xs))


def apply_branch(A, i, xs, q, rho):
    """Unnormalized image of ``rho`` under branch ``i`` of ``A`` on ``xs``."""
    if len(xs) != A.arity:
        raise ArityMismatch(f"{A.name} takes {A.arity} qubits, got {len(xs)}")
    perm = permutation_to_front(q, xs)
    k = len(q) - A.arity
    op = np.kron(A.branches[i][1], np.eye(2 ** k))
    full = perm.T @ op @ perm
    return full @ rho @ full.conj().T


def measure(A, xs, q, rho):
    """Outcome distribution of ``A[xs]``: list of (outcome, p, normalized rho)."""
    out = []
    for i, (outcome, _) in enumerate(A.branches):
        image = apply_branch(A, i, xs, q, rho)
        p = float(np.real(np.trace(image)))
        if p > PROB_FLOOR:
            out.append((outcome, p, image / p))
    return out


def partial_trace(q, rho, keep):
    """Reduced density matrix of the qubits ``keep`` (in that order)."""
    keep_pos = _positions(q, keep)
    n = len(q)
    traced = [i for i in range(n) if i not in keep_pos]
    t = np.asarray(rho).reshape((2,) * (2 * n))
    # Move kept row/col indices first, then contract the traced pairs.
    rows = list(keep_pos) + traced
    cols = [n + i for i in keep_pos] + [n + i for i in traced]
    t = t.transpose(rows + cols)
    m = len(keep_pos)
    dk, dt = 2 ** m, 2 ** len(traced)
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)


def tensor_prepend(nu, rho):
    """``nu ⊗ rho``: a fresh qubit placed at the head of the register."""
    nu = np.asarray(nu, dtype=complex)
    if nu.shape != (2, 2) or not is_density(nu):
        raise InvalidDensity("expected a valid one-qubit density matrix")
    return np.kron(nu, rho)


def reorder(q, rho, new_q):
    """Express ``rho`` over register ``q`` in the register order ``new_q``."""
    if sorted(q) != sorted(new_q):
        raise UnknownQubit(f"{list(new_q)} is not a permutation of {list(q)}")
    perm = permutation_to_front(q, new_q)
    return perm @ rho @ perm.T


def is_density(rho, tol=1e-9, normalized=True):
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
        return False
    if normalized and abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.min(np.linalg.eigvalsh(rho)) >= -tol)


def random_density(n, rng, rank=None):
    """Random ``n``-qubit density matrix (Ginibre ensemble)."""
    dim = 2 ** n
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
