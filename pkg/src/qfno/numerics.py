"""Dense complex linear algebra, Fourier transforms, and counter-based RNG.

Conventions shared by the whole package:

* tensors are ``numpy.complex128`` arrays; real-valued data rides in the real
  part of a complex array rather than switching dtypes,
* the forward discrete Fourier transform carries the ``1/N`` prefactor and the
  inverse carries none, so a retained low/high frequency coefficient has the
  same magnitude no matter the grid length (this is what makes evaluating a
  trained operator on a finer grid meaningful),
* eigenvalues come back in ascending order with orthonormal columns.

The heavy kernels delegate to numpy (pocketfft / LAPACK / BLAS); this module
owns the conventions and the validation, not the arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """An argument violates a documented precondition."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge or produced garbage."""


def as_complex(x) -> np.ndarray:
    """Coerce array-like input to a complex128 ndarray without copying when possible."""
    return np.asarray(x, dtype=np.complex128)


def _check_axis(x: np.ndarray, axis: int) -> None:
    if not isinstance(axis, (int, np.integer)):
        raise ValidationError(f"axis must be an integer, got {axis!r}")
    if not -x.ndim <= axis < x.ndim:
        raise ValidationError(f"axis {axis} out of range for {x.ndim}-d tensor")


def dft_forward(x, axis: int = -1) -> np.ndarray:
    """DFT along ``axis``: X[k] = (1/N) sum_j x[j] exp(-2*pi*i*j*k/N)."""
    x = as_complex(x)
    if x.ndim == 0:
        raise ValidationError("dft_forward needs at least a 1-d tensor")
    _check_axis(x, axis)
    return np.fft.fft(x, axis=axis, norm="forward")


def dft_inverse(x, axis: int = -1) -> np.ndarray:
    """Inverse DFT along ``axis``: x[j] = sum_k X[k] exp(+2*pi*i*j*k/N), no prefactor."""
    x = as_complex(x)
    if x.ndim == 0:
        raise ValidationError("dft_inverse needs at least a 1-d tensor")
    _check_axis(x, axis)
    return np.fft.ifft(x, axis=axis, norm="forward")


def eigh(h, hermitian_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues real ascending and
    eigenvectors as orthonormal columns, so ``h == V @ diag(w) @ V.conj().T``.

    Raises ValidationError if ``h`` is not square or deviates from Hermiticity
    by more than ``hermitian_tol`` in max absolute entry, NumericError if the
    backend fails to converge.
    """
    h = as_complex(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"eigh needs a square matrix, got shape {h.shape}")
    if h.shape[0] == 0:
        raise ValidationError("eigh needs a non-empty matrix")
    deviation = float(np.max(np.abs(h - h.conj().T)))
    if deviation > hermitian_tol:
        raise ValidationError(
            f"matrix is not Hermitian: max |H - H^dagger| = {deviation:.3e} "
            f"exceeds tolerance {hermitian_tol:.3e}"
        )
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return w, v


def matmul(a, b) -> np.ndarray:
    """Matrix product of two 2-d complex tensors."""
    a = as_complex(a)
    b = as_complex(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError(f"matmul needs 2-d tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def matvec(a, x) -> np.ndarray:
    """Matrix-vector product of a 2-d tensor with a 1-d tensor."""
    a = as_complex(a)
    x = as_complex(x)
    if a.ndim != 2 or x.ndim != 1:
        raise ValidationError(f"matvec needs (2-d, 1-d) tensors, got {a.shape} and {x.shape}")
    if a.shape[1] != x.shape[0]:
        raise ValidationError(f"matvec shape mismatch: {a.shape} @ {x.shape}")
    return a @ x


def kron(a, b) -> np.ndarray:
    """Kronecker product of two 2-d complex tensors."""
    a = as_complex(a)
    b = as_complex(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError(f"kron needs 2-d tensors, got {a.shape} and {b.shape}")
    return np.kron(a, b)


_MAX_UINT64 = 2**64


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Independent streams with the same seed never collide, and draws do not
    depend on thread count or draw interleaving across streams, so a dataset
    is a pure function of its seeds.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not isinstance(value, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            if not 0 <= value < _MAX_UINT64:
                raise ValidationError(f"{name} must fit in a u64, got {value}")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id: int) -> "RngStream":
        """A fresh stream under the same seed."""
        return RngStream(self.seed, stream_id)

    def uniform(self, lo: float, hi: float, count: int) -> np.ndarray:
        """``count`` i.i.d. draws from U[lo, hi) as float64."""
        if not lo < hi:
            raise ValidationError(f"uniform needs lo < hi, got [{lo}, {hi})")
        if count < 0:
            raise ValidationError(f"uniform count must be >= 0, got {count}")
        return self._gen.uniform(lo, hi, size=count)

    def standard_normal(self, shape) -> np.ndarray:
        """Standard normal draws with the given shape, float64."""
        return self._gen.standard_normal(size=shape)

    def permutation(self, n: int) -> np.ndarray:
        """A uniformly random permutation of range(n)."""
        if n < 0:
            raise ValidationError(f"permutation length must be >= 0, got {n}")
        return self._gen.permutation(n)


def rng_uniform(stream: RngStream, lo: float, hi: float, count: int) -> np.ndarray:
    """Functional alias for :meth:`RngStream.uniform`."""
    return stream.uniform(lo, hi, count)
