"""Complex-valued Fourier neural operators for 1D quantum spin-chain dynamics.

The package has two halves.  The data half builds random Heisenberg / Ising
chains, evolves states exactly through the eigendecomposition, and packs the
trajectories into binary datasets.  The model half is a small define-by-run
autodiff tape plus a complex FNO (spectral convolutions over either the
energy index or the time grid), a training loop, and evaluation / rollout /
super-resolution tooling.  Everything runs on numpy arrays; no GPU framework
is involved.
"""

from .numerics import NumericError, ValidationError

__all__ = ["NumericError", "ValidationError"]

__version__ = "0.1.0"
