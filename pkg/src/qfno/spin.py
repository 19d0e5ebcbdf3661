"""Spin-chain Hamiltonians, Pauli-string observables, and energy ordering.

Chains are 1D with periodic boundary, sites labeled 1..n, and basis states
indexed so site 1 is the most significant bit (the Kronecker order).  Two
families are supported:

* ``heisenberg``: sum over bonds of Jz z.z + Jx x.x + Jy y.y plus a z field,
* ``ising``:      sum over bonds of Jz z.z plus an x field.

The bond sum runs i = 1..n with wraparound, taken literally: for n = 2 the
single physical bond enters twice.  Operators are the full Pauli matrices
(eigenvalues +-1), not spin-1/2 halves.

``energy_order`` sorts basis states by the real diagonal of H (the energy
expectation of each basis state), stably, which is the canonical input/output
ordering for the energy-domain operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, ValidationError, as_complex, eigh, kron

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)

_PAULI = {"X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

MODELS = ("heisenberg", "ising")
MIN_QUBITS, MAX_QUBITS = 2, 10

# Couplings get their own stream id, far away from per-sample state streams.
COUPLING_STREAM = 2**63


@dataclass(frozen=True)
class SpinChainSpec:
    """Chain size, model family, couplings, and the seed they came from."""

    n: int
    model: str
    jx: float
    jy: float
    jz: float
    h: float
    seed: int = 0

    def __post_init__(self):
        if not MIN_QUBITS <= self.n <= MAX_QUBITS:
            raise ValidationError(f"n must be in [{MIN_QUBITS}, {MAX_QUBITS}], got {self.n}")
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "ising" and (self.jx != 0.0 or self.jy != 0.0):
            raise ValidationError("ising uses only (jz, h); jx and jy must be 0")

    @property
    def dim(self) -> int:
        return 2**self.n

    @classmethod
    def random(cls, n: int, model: str, seed: int) -> "SpinChainSpec":
        """Draw couplings i.i.d. from U[-2, 2) on the coupling stream.

        Draw order is (jx, jy, jz, h) for heisenberg and (jz, h) for ising.
        """
        stream = RngStream(seed, COUPLING_STREAM)
        if model == "heisenberg":
            jx, jy, jz, h = stream.uniform(-2.0, 2.0, 4)
            return cls(n=n, model=model, jx=jx, jy=jy, jz=jz, h=h, seed=seed)
        if model == "ising":
            jz, h = stream.uniform(-2.0, 2.0, 2)
            return cls(n=n, model=model, jx=0.0, jy=0.0, jz=jz, h=h, seed=seed)
        raise ValidationError(f"model must be one of {MODELS}, got {model!r}")


def site_operator(n: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker-embed single-site 2x2 operators; ``ops`` maps 0-based site -> matrix."""
    if any(not 0 <= site < n for site in ops):
        raise ValidationError(f"site index out of range for chain of {n}")
    out = np.ones((1, 1), dtype=np.complex128)
    for site in range(n):
        out = kron(out, ops.get(site, IDENTITY_2))
    return out


@dataclass(frozen=True)
class HamiltonianMatrix:
    """A dense Hamiltonian with its eigendecomposition and basis orderings."""

    spec: SpinChainSpec
    matrix: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    energy_order: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def energy_order(h) -> np.ndarray:
    """Stable ascending sort of basis states by Re(H[i, i])."""
    matrix = h.matrix if isinstance(h, HamiltonianMatrix) else as_complex(h)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"energy_order needs a square matrix, got {matrix.shape}")
    return np.argsort(np.diag(matrix).real, kind="stable")


def build_hamiltonian(spec: SpinChainSpec) -> HamiltonianMatrix:
    """Materialize the dense Hamiltonian and cache its eigendecomposition."""
    n = spec.n
    matrix = np.zeros((spec.dim, spec.dim), dtype=np.complex128)
    for i in range(n):
        j = (i + 1) % n
        if spec.model == "heisenberg":
            matrix += spec.jz * site_operator(n, {i: SIGMA_Z, j: SIGMA_Z})
            matrix += spec.jx * site_operator(n, {i: SIGMA_X, j: SIGMA_X})
            matrix += spec.jy * site_operator(n, {i: SIGMA_Y, j: SIGMA_Y})
            matrix += spec.h * site_operator(n, {i: SIGMA_Z})
        else:
            matrix += spec.jz * site_operator(n, {i: SIGMA_Z, j: SIGMA_Z})
            matrix += spec.h * site_operator(n, {i: SIGMA_X})
    eigenvalues, eigenvectors = eigh(matrix)
    return HamiltonianMatrix(
        spec=spec,
        matrix=matrix,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        energy_order=energy_order(matrix),
    )


class PauliString:
    """A product of single-site Paulis in structured (bit-rule) form.

    Acting on a basis state |s>, the string flips the bits under X/Y factors
    and multiplies by a state-dependent phase, so the dense matrix is a
    permutation times a diagonal.  Expectations run in O(2^n) per state
    instead of O(4^n).
    """

    def __init__(self, n: int, factors: list[tuple[int, str]], label: str | None = None):
        if not factors:
            raise ValidationError("a Pauli string needs at least one factor")
        seen = set()
        for site, axis in factors:
            if not 0 <= site < n:
                raise ValidationError(f"site {site} out of range for chain of {n}")
            if axis not in _PAULI:
                raise ValidationError(f"axis must be X, Y, or Z, got {axis!r}")
            if site in seen:
                raise ValidationError(f"duplicate site {site} in Pauli string")
            seen.add(site)
        self.n = n
        self.factors = sorted(factors)
        self.label = label or "".join(f"{axis}{site + 1}" for site, axis in self.factors)

        dim = 2**n
        states = np.arange(dim)
        flip_mask = 0
        coeff = np.ones(dim, dtype=np.complex128)
        for site, axis in self.factors:
            bit = (states >> (n - 1 - site)) & 1
            if axis == "X":
                flip_mask |= 1 << (n - 1 - site)
            elif axis == "Y":
                flip_mask |= 1 << (n - 1 - site)
                # sigma_y |0> = i|1>, sigma_y |1> = -i|0>
                coeff = coeff * np.where(bit == 0, 1j, -1j)
            else:
                coeff = coeff * np.where(bit == 0, 1.0, -1.0)
        self.flip_mask = flip_mask
        self.coeff = coeff
        self.permuted = states ^ flip_mask

    def dense(self) -> np.ndarray:
        """Materialize the matrix; used as the slow oracle route in tests."""
        dim = 2**self.n
        out = np.zeros((dim, dim), dtype=np.complex128)
        out[self.permuted, np.arange(dim)] = self.coeff
        return out

    def expectations(self, columns: np.ndarray) -> np.ndarray:
        """<psi|P|psi> for each column of a (dim, m) block of states; real output."""
        columns = as_complex(columns)
        single = columns.ndim == 1
        if single:
            columns = columns[:, None]
        if columns.shape[0] != 2**self.n:
            raise ValidationError(
                f"state dimension {columns.shape[0]} does not match chain of {self.n}"
            )
        values = np.sum(
            np.conj(columns[self.permuted, :]) * self.coeff[:, None] * columns, axis=0
        ).real
        return values[0] if single else values


@dataclass(frozen=True)
class ObservableSet:
    """An ordered collection of Pauli strings with printable labels."""

    n: int
    strings: tuple[PauliString, ...]

    def __post_init__(self):
        if not self.strings:
            raise ValidationError("observable set cannot be empty")

    def __len__(self) -> int:
        return len(self.strings)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.strings]

    def operators(self) -> list[np.ndarray]:
        """Dense matrices, in order (test oracle route; avoid in hot paths)."""
        return [s.dense() for s in self.strings]

    def expectations(self, columns: np.ndarray) -> np.ndarray:
        """Stack of per-string expectations: (len(self), m) for (dim, m) input."""
        return np.stack([s.expectations(columns) for s in self.strings])


def default_observables(n: int) -> ObservableSet:
    """The canonical 6n strings: XX, YY, ZZ bond pairs then X, Y, Z singles.

    Pairs run over bonds (i, i+1) for i = 1..n with wraparound, labels like
    ``X1X2 .. XnX1``; singles run over sites.  Order is fixed; channel c of an
    observables dataset always means the same string.
    """
    if not MIN_QUBITS <= n <= MAX_QUBITS:
        raise ValidationError(f"n must be in [{MIN_QUBITS}, {MAX_QUBITS}], got {n}")
    strings: list[PauliString] = []
    for axis in ("X", "Y", "Z"):
        for i in range(n):
            j = (i + 1) % n
            label = f"{axis}{i + 1}{axis}{j + 1}"
            strings.append(PauliString(n, [(i, axis), (j, axis)], label=label))
    for axis in ("X", "Y", "Z"):
        for i in range(n):
            strings.append(PauliString(n, [(i, axis)], label=f"{axis}{i + 1}"))
    return ObservableSet(n=n, strings=tuple(strings))


def expectation(state: np.ndarray, operator, norm_tol: float = 1e-10) -> float:
    """<psi|O|psi> for a normalized state and a Hermitian operator.

    ``operator`` may be a PauliString, a HamiltonianMatrix, or a dense matrix
    (validated Hermitian).  The value is real by construction; the residual
    imaginary part is discarded.
    """
    state = as_complex(state)
    if state.ndim != 1:
        raise ValidationError(f"expectation needs a 1-d state, got shape {state.shape}")
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > norm_tol:
        raise ValidationError(f"state norm {norm} deviates from 1 beyond {norm_tol}")
    if isinstance(operator, PauliString):
        return float(operator.expectations(state))
    matrix = operator.matrix if isinstance(operator, HamiltonianMatrix) else as_complex(operator)
    if matrix.shape != (state.size, state.size):
        raise ValidationError(f"operator shape {matrix.shape} does not match state {state.size}")
    deviation = float(np.max(np.abs(matrix - matrix.conj().T)))
    if deviation > 1e-10:
        raise ValidationError(f"operator is not Hermitian (deviation {deviation:.3e})")
    return float(np.vdot(state, matrix @ state).real)
