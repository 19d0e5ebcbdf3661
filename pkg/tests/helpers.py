"""Shared test utilities: finite-difference gradients and random tensors."""

import numpy as np


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def fd_gradient(loss_fn, params, h=1e-5):
    """Central-difference gradient of ``loss_fn()`` for each Param.

    Real and imaginary parts are perturbed independently and packed back as
    ``d/d(re) + 1j * d/d(im)``, the same split convention the tape uses.
    ``loss_fn`` must recompute the forward pass from the params' current
    values; the params are mutated in place and restored.
    """
    grads = []
    for p in params:
        flat = p.value.reshape(-1)
        gflat = np.zeros(flat.size, dtype=np.complex128)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = loss_fn()
            flat[i] = orig - h
            loss_minus = loss_fn()
            d_re = (loss_plus - loss_minus) / (2 * h)
            flat[i] = orig + 1j * h
            loss_plus = loss_fn()
            flat[i] = orig - 1j * h
            loss_minus = loss_fn()
            d_im = (loss_plus - loss_minus) / (2 * h)
            flat[i] = orig
            gflat[i] = d_re + 1j * d_im
        grads.append(gflat.reshape(p.value.shape))
    return grads


def max_rel_error(analytic, numeric):
    """Infinity-norm relative error between gradient pytrees (lists of arrays)."""
    num = 0.0
    den = 0.0
    for a, n in zip(analytic, numeric, strict=True):
        split_a = np.concatenate([np.ravel(a.real), np.ravel(a.imag)])
        split_n = np.concatenate([np.ravel(n.real), np.ravel(n.imag)])
        num = max(num, float(np.max(np.abs(split_a - split_n), initial=0.0)))
        den = max(den, float(np.max(np.abs(split_n), initial=0.0)))
    return num / max(den, 1e-12)
