"""Normalized wavefunctions and the random initial-state generators.

A :class:`WaveFunction` is a unit-norm complex amplitude vector tagged with
its basis ordering: ``"binary"`` (computational basis, site 1 as the high
bit) or ``"energy"`` (basis states permuted by ascending diagonal energy).
The tag exists so fidelity and evolution code can refuse to mix orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from .numerics import RngStream, ValidationError, as_complex
from .spin import HamiltonianMatrix

BASIS_ORDERS = ("binary", "energy")


@dataclass
class WaveFunction:
    amplitudes: np.ndarray
    basis_order: str = "binary"
    norm_tol: float = field(default=1e-10, repr=False, compare=False)

    def __post_init__(self):
        # Contiguity matters: validation views the buffer as float pairs.
        self.amplitudes = np.ascontiguousarray(as_complex(self.amplitudes))
        if self.amplitudes.ndim != 1 or self.amplitudes.size == 0:
            raise ValidationError(
                f"amplitudes must be a non-empty vector, got shape {self.amplitudes.shape}"
            )
        if self.basis_order not in BASIS_ORDERS:
            raise ValidationError(f"basis_order must be one of {BASIS_ORDERS}")
        if not np.all(np.isfinite(self.amplitudes.view(np.float64))):
            raise ValidationError("amplitudes contain NaN or Inf")
        norm = self.norm()
        if abs(norm - 1.0) > self.norm_tol:
            raise ValidationError(f"state norm {norm!r} deviates from 1 beyond {self.norm_tol}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 2**n != self.dim:
            raise ValidationError(f"dimension {self.dim} is not a power of two")
        return n

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def reorder(self, permutation: np.ndarray) -> "WaveFunction":
        """Permute amplitudes and toggle the basis tag.

        Passing an energy order to a binary-basis state yields the
        energy-basis representation; passing the inverse permutation to an
        energy-basis state goes back.
        """
        permutation = np.asarray(permutation, dtype=np.intp)
        if sorted(permutation.tolist()) != list(range(self.dim)):
            raise ValidationError("permutation must rearrange exactly the state indices")
        flipped = "energy" if self.basis_order == "binary" else "binary"
        return WaveFunction(self.amplitudes[permutation], basis_order=flipped)


def _normalize(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    amp = re + 1j * im
    norm = np.linalg.norm(amp)
    if norm == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return amp / norm


def random_state(n: int, stream: RngStream) -> WaveFunction:
    """Haar-agnostic dense random state: re, im i.i.d. U[-1, 1), then normalized."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    dim = 2**n
    re = stream.uniform(-1.0, 1.0, dim)
    im = stream.uniform(-1.0, 1.0, dim)
    return WaveFunction(_normalize(re, im), basis_order="binary")


def low_energy_state(
    n: int,
    hamiltonian: HamiltonianMatrix,
    stream: RngStream,
    fraction: float = 0.25,
) -> WaveFunction:
    """Random state supported on the lowest-diagonal-energy basis states.

    The support is the first ``ceil(fraction * 2**n)`` entries of the
    Hamiltonian's energy order; amplitudes on the support are drawn like
    :func:`random_state` and the rest are exactly zero.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    dim = 2**n
    if hamiltonian.dim != dim:
        raise ValidationError(
            f"hamiltonian dimension {hamiltonian.dim} does not match n={n}"
        )
    support = hamiltonian.energy_order[: math.ceil(fraction * dim)]
    re = stream.uniform(-1.0, 1.0, support.size)
    im = stream.uniform(-1.0, 1.0, support.size)
    amplitudes = np.zeros(dim, dtype=np.complex128)
    amplitudes[support] = _normalize(re, im)
    return WaveFunction(amplitudes, basis_order="binary")
