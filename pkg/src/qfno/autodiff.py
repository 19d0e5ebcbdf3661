"""Reverse-mode automatic differentiation over batched complex tensors.

A :class:`Tape` records operations as they execute (define-by-run) and replays
them backwards to accumulate parameter gradients.  Gradients follow the split
convention: the real and imaginary parts of every complex entry are treated as
independent real coordinates, and the cotangent for a complex tensor is stored
as ``d(loss)/d(re) + 1j * d(loss)/d(im)``.  Two consequences worth keeping in
mind when reading the pullbacks below:

* for a map that is complex-linear, ``y = A(x)``, the pullback is the adjoint,
  ``gx = A^H(gy)``, and the weight cotangent of a product picks up a conjugate
  on the activation, ``gW = gy * conj(x)``;
* nonlinearities act on re/im separately, so their pullbacks scale the real
  and imaginary parts of the incoming cotangent separately.

Everything is batched: signal tensors are shaped ``(batch, channels, grid)``
and a single tape pass covers the whole batch.  Losses reduce to a python
float held in a scalar node.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import ValidationError, as_complex, dft_forward, dft_inverse


class Var:
    """A value tracked by a tape.

    ``value`` is a complex128 ndarray (or a python float for loss scalars),
    ``grad`` is filled in by :meth:`Tape.backward` for nodes that require it.
    """

    __slots__ = ("value", "grad", "requires_grad", "_pullback")

    def __init__(self, value, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._pullback = None

    @property
    def shape(self):
        return np.shape(self.value)


class Param(Var):
    """A named trainable leaf.  Gradients accumulate across a backward pass."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        value = np.ascontiguousarray(as_complex(value))
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


def _accumulate(var: Var, grad) -> None:
    if not var.requires_grad:
        return
    if var.grad is None:
        # May alias an upstream buffer, so later accumulation stays out-of-place.
        var.grad = grad
    else:
        var.grad = var.grad + grad


# gelu(x) = 0.5 x (1 + tanh(c (x + a x^3))), tanh approximation
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _gelu_with_cache(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value plus the reusable pieces of the derivative (tanh dominates cost)."""
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * (x * x2)))
    return 0.5 * x * (1.0 + t), t, x2


def _gelu_derivative_from_cache(x: np.ndarray, t: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + t) + (0.5 * _GELU_C) * x * (1.0 - t * t) * (1.0 + 3.0 * _GELU_A * x2)


def _gelu(x: np.ndarray) -> np.ndarray:
    return _gelu_with_cache(x)[0]


class Tape:
    """Op recorder.  One forward pass, one backward pass, then discard."""

    def __init__(self):
        self._nodes: list[Var] = []
        self._spent = False

    # -- node plumbing -----------------------------------------------------

    def constant(self, value) -> Var:
        """Wrap an ndarray as an untracked leaf."""
        return Var(as_complex(value), requires_grad=False)

    def _emit(self, value, inputs: tuple[Var, ...], pullback) -> Var:
        requires = any(v.requires_grad for v in inputs)
        out = Var(value, requires_grad=requires)
        if requires:
            out._pullback = pullback
        self._nodes.append(out)
        return out

    def backward(self, loss: Var) -> None:
        """Propagate d(loss)=1 through the recorded graph, filling ``.grad``.

        ``loss`` must be a scalar node produced by this tape.  A tape can only
        be walked once; build a new tape for the next step.
        """
        if self._spent:
            raise RuntimeError("tape already walked backwards; build a new tape")
        if not any(loss is node for node in self._nodes):
            raise ValidationError("loss node was not produced by this tape")
        if np.ndim(loss.value) != 0:
            raise ValidationError("backward needs a scalar loss node")
        self._spent = True
        loss.grad = 1.0
        for node in reversed(self._nodes):
            if node.grad is not None and node._pullback is not None:
                node._pullback(node.grad)

    # -- arithmetic --------------------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        if a.shape != b.shape:
            raise ValidationError(f"add shape mismatch: {a.shape} vs {b.shape}")
        value = a.value + b.value

        def pullback(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return self._emit(value, (a, b), pullback)

    def mul(self, a: Var, b: Var) -> Var:
        """Elementwise complex product."""
        if a.shape != b.shape:
            raise ValidationError(f"mul shape mismatch: {a.shape} vs {b.shape}")
        av, bv = a.value, b.value
        value = av * bv

        def pullback(g):
            _accumulate(a, np.conj(bv) * g)
            _accumulate(b, np.conj(av) * g)

        return self._emit(value, (a, b), pullback)

    def scale(self, a: Var, c: complex) -> Var:
        """Multiply by a python scalar constant."""
        value = a.value * c
        cc = np.conj(c)

        def pullback(g):
            _accumulate(a, cc * g)

        return self._emit(value, (a,), pullback)

    # -- channel mixing ----------------------------------------------------

    def channel_affine(self, v: Var, w: Var, b: Var) -> Var:
        """Pointwise channel map: out[s, o, j] = sum_i w[o, i] v[s, i, j] + b[o]."""
        vv, wv, bv = v.value, w.value, b.value
        if vv.ndim != 3 or wv.ndim != 2 or bv.ndim != 1:
            raise ValidationError(
                f"channel_affine needs (3-d, 2-d, 1-d), got {vv.shape}, {wv.shape}, {bv.shape}"
            )
        if wv.shape[1] != vv.shape[1] or bv.shape[0] != wv.shape[0]:
            raise ValidationError(
                f"channel_affine shape mismatch: v{vv.shape} w{wv.shape} b{bv.shape}"
            )
        mixed = np.tensordot(wv, vv, axes=([1], [1]))  # (o, s, j)
        value = np.moveaxis(mixed, 0, 1) + bv[None, :, None]

        def pullback(g):
            if v.requires_grad:
                gv = np.tensordot(np.conj(wv), g, axes=([0], [1]))  # (i, s, j)
                _accumulate(v, np.moveaxis(gv, 0, 1))
            if w.requires_grad:
                _accumulate(w, np.tensordot(g, np.conj(vv), axes=([0, 2], [0, 2])))
            if b.requires_grad:
                _accumulate(b, g.sum(axis=(0, 2)))

        return self._emit(value, (v, w, b), pullback)

    def mode_mix(self, v: Var, r: Var) -> Var:
        """Per-mode channel map: out[s, o, k] = sum_i r[k, o, i] v[s, i, k]."""
        vv, rv = v.value, r.value
        if vv.ndim != 3 or rv.ndim != 3:
            raise ValidationError(f"mode_mix needs 3-d tensors, got {vv.shape}, {rv.shape}")
        if rv.shape[0] != vv.shape[2] or rv.shape[2] != vv.shape[1]:
            raise ValidationError(f"mode_mix shape mismatch: v{vv.shape} r{rv.shape}")
        vt = vv.transpose(2, 1, 0)  # (k, i, s)
        value = np.matmul(rv, vt).transpose(2, 1, 0)  # (k, o, s) -> (s, o, k)

        def pullback(g):
            gt = g.transpose(2, 1, 0)  # (k, o, s)
            if v.requires_grad:
                gv = np.matmul(np.conj(rv).transpose(0, 2, 1), gt)  # (k, i, s)
                _accumulate(v, gv.transpose(2, 1, 0))
            if r.requires_grad:
                _accumulate(r, np.matmul(gt, np.conj(vt).transpose(0, 2, 1)))

        return self._emit(value, (v, r), pullback)

    # -- spectral plumbing ---------------------------------------------------

    def dft(self, v: Var) -> Var:
        """Forward DFT along the grid axis (last), 1/N prefactor."""
        value = dft_forward(v.value, axis=-1)
        n = value.shape[-1]

        def pullback(g):
            # Adjoint of (1/N) * Omega is (1/N) * Omega^*, i.e. the unscaled
            # inverse divided by N.
            _accumulate(v, dft_inverse(g, axis=-1) / n)

        return self._emit(value, (v,), pullback)

    def idft(self, v: Var) -> Var:
        """Inverse DFT along the grid axis (last), no prefactor."""
        value = dft_inverse(v.value, axis=-1)
        n = value.shape[-1]

        def pullback(g):
            # Adjoint of Omega^* is Omega = N * ((1/N) * Omega).
            _accumulate(v, dft_forward(g, axis=-1) * n)

        return self._emit(value, (v,), pullback)

    def gather_modes(self, v: Var, indices: np.ndarray) -> Var:
        """Keep the listed frequency indices (last axis); inverse of scatter."""
        indices = np.asarray(indices, dtype=np.intp)
        n = v.value.shape[-1]
        if indices.ndim != 1 or (indices.size and (indices.min() < 0 or indices.max() >= n)):
            raise ValidationError(f"gather indices out of range for grid {n}")
        value = v.value[..., indices]

        def pullback(g):
            gv = np.zeros_like(v.value)
            gv[..., indices] = g
            _accumulate(v, gv)

        return self._emit(value, (v,), pullback)

    def scatter_modes(self, v: Var, indices: np.ndarray, n: int) -> Var:
        """Embed coefficients at the listed frequency indices of a length-n axis."""
        indices = np.asarray(indices, dtype=np.intp)
        if indices.ndim != 1 or indices.size != v.value.shape[-1]:
            raise ValidationError("scatter needs one index per retained mode")
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            raise ValidationError(f"scatter indices out of range for grid {n}")
        value = np.zeros(v.value.shape[:-1] + (n,), dtype=np.complex128)
        value[..., indices] = v.value

        def pullback(g):
            _accumulate(v, g[..., indices])

        return self._emit(value, (v,), pullback)

    # -- nonlinearity --------------------------------------------------------

    def split_gelu(self, v: Var) -> Var:
        """GELU applied to real and imaginary parts independently."""
        re = np.ascontiguousarray(v.value.real)
        im = np.ascontiguousarray(v.value.imag)
        value_re, tanh_re, re2 = _gelu_with_cache(re)
        value_im, tanh_im, im2 = _gelu_with_cache(im)
        value = value_re + 1j * value_im

        def pullback(g):
            d_re = _gelu_derivative_from_cache(re, tanh_re, re2)
            d_im = _gelu_derivative_from_cache(im, tanh_im, im2)
            _accumulate(v, d_re * g.real + 1j * (d_im * g.imag))

        return self._emit(value, (v,), pullback)

    # -- reductions ----------------------------------------------------------

    def sum_abs2(self, v: Var) -> Var:
        """Sum of squared moduli over all entries; a real scalar node."""
        vv = v.value
        value = float(np.sum(vv.real**2 + vv.imag**2))

        def pullback(g):
            _accumulate(v, (2.0 * g) * vv)

        return self._emit(value, (v,), pullback)

    def rel_l2(self, pred: Var, target: np.ndarray) -> Var:
        """Mean over the batch of ||pred - target|| / ||target|| (guarded).

        ``target`` is a constant.  Axis 0 is the batch axis; the norms run
        over all remaining axes.
        """
        target = as_complex(target)
        if pred.shape != target.shape:
            raise ValidationError(f"rel_l2 shape mismatch: {pred.shape} vs {target.shape}")
        if np.ndim(pred.value) < 1:
            raise ValidationError("rel_l2 needs a batch axis")
        diff = pred.value - target
        batch = diff.shape[0]
        axes = tuple(range(1, diff.ndim))
        num = np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=axes))
        den = np.sqrt(np.sum(target.real**2 + target.imag**2, axis=axes))
        den = np.maximum(den, 1e-12)
        value = float(np.mean(num / den))

        def pullback(g):
            safe_num = np.maximum(num, 1e-300)  # num == 0 gives diff == 0 anyway
            factor = g / (batch * den * safe_num)
            _accumulate(pred, factor.reshape((-1,) + (1,) * (diff.ndim - 1)) * diff)

        return self._emit(value, (pred,), pullback)

    def mse(self, pred: Var, target: np.ndarray) -> Var:
        """Mean squared modulus of (pred - target) over all entries."""
        target = as_complex(target)
        if pred.shape != target.shape:
            raise ValidationError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
        diff = pred.value - target
        count = diff.size
        if count == 0:
            raise ValidationError("mse needs at least one entry")
        value = float(np.sum(diff.real**2 + diff.imag**2) / count)

        def pullback(g):
            _accumulate(pred, (2.0 * g / count) * diff)

        return self._emit(value, (pred,), pullback)

    # -- generic dispatch ------------------------------------------------------

    def record(self, kind: str, *args, **kwargs) -> Var:
        """Dispatch a primitive by name; unknown names raise ValidationError."""
        op = _PRIMITIVES.get(kind)
        if op is None:
            raise ValidationError(f"unsupported primitive: {kind!r}")
        return getattr(self, op)(*args, **kwargs)


_PRIMITIVES = {
    "add": "add",
    "mul": "mul",
    "scale": "scale",
    "channel_affine": "channel_affine",
    "mode_mix": "mode_mix",
    "dft": "dft",
    "idft": "idft",
    "gather_modes": "gather_modes",
    "scatter_modes": "scatter_modes",
    "split_gelu": "split_gelu",
    "sum_abs2": "sum_abs2",
    "rel_l2": "rel_l2",
    "mse": "mse",
}


def loss_rel_l2(pred: np.ndarray, target: np.ndarray) -> float:
    """Tape-free twin of :meth:`Tape.rel_l2` for evaluation code."""
    pred = as_complex(pred)
    target = as_complex(target)
    if pred.shape != target.shape:
        raise ValidationError(f"rel_l2 shape mismatch: {pred.shape} vs {target.shape}")
    axes = tuple(range(1, pred.ndim))
    diff = pred - target
    num = np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=axes))
    den = np.maximum(np.sqrt(np.sum(target.real**2 + target.imag**2, axis=axes)), 1e-12)
    return float(np.mean(num / den))


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Tape-free twin of :meth:`Tape.mse`."""
    pred = as_complex(pred)
    target = as_complex(target)
    if pred.shape != target.shape:
        raise ValidationError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValidationError("mse needs at least one entry")
    diff = pred - target
    return float(np.sum(diff.real**2 + diff.imag**2) / diff.size)
