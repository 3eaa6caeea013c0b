"""Tape-based reverse-mode differentiation over dense numpy arrays.

Only the operations the FNO and its losses need are provided. Each op
computes its value eagerly and, when a :class:`Tape` is active and some input
requires a gradient, appends a node holding the saved values for the adjoint.

Gradient convention for complex arrays: the gradient of a real loss ``L``
w.r.t. a complex ``z`` is ``dL/dRe(z) + 1j * dL/dIm(z)``, i.e. real and
imaginary parts are treated as independent reals. Plain gradient descent
``z -= lr * grad`` is then the usual descent step.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import fft as _fft

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_active_tapes: list["Tape"] = []


class Tensor:
    """An array plus the bookkeeping reverse mode needs."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "adjoint", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        data = np.asarray(data)
        if not (np.issubdtype(data.dtype, np.floating) or np.issubdtype(data.dtype, np.complexfloating)):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self.adjoint = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


class Tape:
    """Ordered record of the ops executed while the tape is active."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, parents: tuple, adjoint) -> Tensor:
    if _active_tapes and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.adjoint = adjoint
        _active_tapes[-1].nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _fit(g: np.ndarray, parent: Tensor) -> np.ndarray:
    """Reduce a broadcast gradient to ``parent``'s shape and dtype."""
    g = _unbroadcast(g, parent.shape)
    if not parent.is_complex and np.iscomplexobj(g):
        g = g.real
    return g


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate ``d loss`` through ``tape``; fills ``.grad`` on leaves.

    Returns:
        Mapping from every leaf that requires a gradient to its gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    for node in tape.nodes:
        node.grad = None
    leaves: dict[int, Tensor] = {}
    for node in tape.nodes:
        for p in node.parents:
            if p.adjoint is None and p.requires_grad:
                p.grad = None
                leaves[id(p)] = p
    loss.grad = np.ones_like(loss.data, dtype=np.float64)

    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        grads = node.adjoint(node.grad)
        for p, g in zip(node.parents, grads):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g
    return {leaf: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            for leaf in leaves.values()}


# -- elementwise ------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_fit(g, a), _fit(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_fit(g, a), _fit(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    return _record(out, (a, b), lambda g: (_fit(g * np.conj(b.data), a),
                                           _fit(g * np.conj(a.data), b)))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data * c)
    return _record(out, (x,), lambda g: (_fit(g * np.conj(c), x),))


def gelu(x) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF ``Phi``."""
    x = as_tensor(x)
    cdf = ndtr(x.data)
    out = Tensor(x.data * cdf)

    def adjoint(g):
        # g * (cdf + x * pdf), built in place to limit temporaries
        d = np.multiply(x.data, x.data)
        d *= -0.5
        np.exp(d, out=d)
        d *= _INV_SQRT_2PI
        d *= x.data
        d += cdf
        d *= g
        return (d,)

    return _record(out, (x,), adjoint)


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    out = Tensor(np.where(on, x.data, 0.0))
    return _record(out, (x,), lambda g: (g * on,))


ACTIVATIONS = {"gelu": gelu, "relu": relu}


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; the gradient is zero strictly outside the range."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    out = Tensor(np.clip(x.data, lo, hi))
    return _record(out, (x,), lambda g: (g * inside,))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data[index])

    def adjoint(g):
        full = np.zeros_like(x.data, dtype=np.result_type(x.data, g))
        if _has_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _record(out, (x,), adjoint)


def _has_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(x.shape),))


def real(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.real(x.data).copy())
    return _record(out, (x,), lambda g: (_fit(g.astype(np.complex128), x),))


# -- reductions ---------------------------------------------------------------------

def sum_(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.sum(x.data, axis=axis))

    def adjoint(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(out, (x,), adjoint)


def square(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data * x.data)
    return _record(out, (x,), lambda g: (2.0 * g * x.data,))


def l2norm(x, axis=None) -> Tensor:
    """Euclidean norm over ``axis``; the subgradient at zero is taken as 0."""
    x = as_tensor(x)
    norm = np.sqrt(np.sum(np.abs(x.data) ** 2, axis=axis))
    out = Tensor(norm)

    def adjoint(g):
        n = norm if axis is None else np.expand_dims(norm, axis)
        gg = g if axis is None else np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, gg * x.data / safe, 0.0),)

    return _record(out, (x,), adjoint)


# -- channel mixing -------------------------------------------------------------------

def pointwise_linear(x, weight, bias=None) -> Tensor:
    """Affine map across the channel axis at every grid point.

    Args:
        x: ``(c_in, ...)`` or batched ``(B, c_in, ...)``; the channel axis is
            the one matching ``weight.shape[1]`` counted from the left after
            the optional batch axis.
        weight: ``(c_out, c_in)``.
        bias: ``(c_out,)``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    c_out, c_in = weight.shape
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    if xd.shape[1] != c_in:
        raise ValueError(f"channel mismatch: input has {xd.shape[1]}, weight expects {c_in}")
    spatial = xd.shape[2:]
    flat = xd.reshape(xd.shape[0], c_in, -1)
    y = np.matmul(weight.data, flat)
    if bias is not None:
        if bias.shape != (c_out,):
            raise ValueError(f"bias shape {bias.shape} != ({c_out},)")
        y += bias.data[:, None]
    y = y.reshape((xd.shape[0], c_out) + spatial)
    out = Tensor(y if batched else y[0])

    def adjoint(g):
        gf = (g if batched else g[None]).reshape(xd.shape[0], c_out, -1)
        gx = np.matmul(weight.data.T, gf).reshape(xd.shape)
        gw = np.matmul(gf, flat.transpose(0, 2, 1)).sum(axis=0)
        grads = [gx if batched else gx[0], gw]
        if bias is not None:
            grads.append(gf.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, parents, adjoint)


# -- spectral --------------------------------------------------------------------------

def fft2(x) -> Tensor:
    """Unnormalised 2-D DFT over the last two axes (in-house mixed radix)."""
    x = as_tensor(x)
    n = x.shape[-1] * x.shape[-2]
    out = Tensor(_fft.fft2(x.data))
    # adjoint of the unnormalised DFT is n * inverse DFT
    return _record(out, (x,), lambda g: (_fit(n * _fft.ifft2(g), x),))


def ifft2(x) -> Tensor:
    """Inverse 2-D DFT over the last two axes with ``1/(nx nt)`` scaling."""
    x = as_tensor(x)
    n = x.shape[-1] * x.shape[-2]
    out = Tensor(_fft.ifft2(x.data))
    return _record(out, (x,), lambda g: (_fit(_fft.fft2(g) / n, x),))


def retained_modes(n: int, m: int) -> np.ndarray:
    """FFT-order indices of the ``m`` lowest-|k| frequencies of length ``n``.

    Non-negative frequencies ``0 .. ceil(m/2)-1`` followed by the negative
    ones ``-floor(m/2) .. -1``; ``m == n`` keeps every index in natural order.
    """
    if not 1 <= m <= n:
        raise ValueError(f"mode count {m} outside [1, {n}]")
    pos = (m + 1) // 2
    return np.concatenate([np.arange(pos), np.arange(n - (m - pos), n)]).astype(np.intp)


def spectral_multiply(x_hat, weights) -> Tensor:
    """Channel mixing on the retained low modes of a full 2-D spectrum.

    Args:
        x_hat: complex ``([B,] c_in, nx, nt)`` spectrum.
        weights: complex ``(c_out, c_in, m_x, m_t)``; entry ``[..., a, b]``
            acts on mode ``(retained_modes(nx, m_x)[a], retained_modes(nt, m_t)[b])``.

    Returns:
        ``([B,] c_out, nx, nt)`` spectrum, zero outside the retained blocks.
    """
    x_hat, weights = as_tensor(x_hat), as_tensor(weights)
    c_out, c_in, m_x, m_t = weights.shape
    nx, nt = x_hat.shape[-2:]
    if m_x > nx or m_t > nt:
        raise ValueError(f"modes ({m_x}, {m_t}) exceed grid ({nx}, {nt})")
    if x_hat.shape[-3] != c_in:
        raise ValueError(f"channel mismatch: spectrum has {x_hat.shape[-3]}, weights expect {c_in}")
    ix = retained_modes(nx, m_x)[:, None]
    it = retained_modes(nt, m_t)[None, :]
    block = x_hat.data[..., ix, it]
    y = np.zeros(x_hat.shape[:-3] + (c_out, nx, nt), dtype=np.complex128)
    y[..., ix, it] = np.einsum("oiab,...iab->...oab", weights.data, block, optimize=True)
    out = Tensor(y)

    def adjoint(g):
        g_block = g[..., ix, it]
        gx = np.zeros(x_hat.shape, dtype=np.complex128)
        gx[..., ix, it] = np.einsum("oiab,...oab->...iab", np.conj(weights.data), g_block,
                                    optimize=True)
        gw = np.einsum("...oab,...iab->oiab", g_block, np.conj(block), optimize=True)
        return (_fit(gx, x_hat), gw)

    return _record(out, (x_hat, weights), adjoint)


@lru_cache(maxsize=None)
def _mode_basis(n: int, m: int) -> np.ndarray:
    """Rows of the length-``n`` DFT matrix for the retained frequencies."""
    k = retained_modes(n, m)
    return np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)


def _gemm_last(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Contract the last axis of ``x`` with ``m`` as one 2-D GEMM."""
    out = np.ascontiguousarray(x).reshape(-1, x.shape[-1]) @ m
    return out.reshape(x.shape[:-1] + (m.shape[-1],))


@lru_cache(maxsize=None)
def _time_basis(nt: int, m_t: int):
    """Contiguous real/imag parts of the forward and inverse time DFTs."""
    et = _mode_basis(nt, m_t)  # (m_t, nt)
    fwd = et.T  # (nt, m_t)
    inv = np.conj(et) / nt  # (m_t, nt)
    return (np.ascontiguousarray(fwd.real), np.ascontiguousarray(fwd.imag),
            np.ascontiguousarray(inv.real), np.ascontiguousarray(inv.imag))


def truncated_fft2(x, m_x: int, m_t: int) -> Tensor:
    """The ``(m_x, m_t)`` retained block of ``fft2(x)`` for real ``x``.

    Equal to ``fft2(x)[..., retained_modes(nx, m_x)[:, None], retained_modes(nt, m_t)]``
    but computed with two small dense DFTs.
    """
    x = as_tensor(x)
    nx, nt = x.shape[-2:]
    ex = _mode_basis(nx, m_x)
    fr, fi, _, _ = _time_basis(nt, m_t)
    out = Tensor(ex @ (_gemm_last(x.data, fr) + 1j * _gemm_last(x.data, fi)))

    def adjoint(g):
        # Re(ex^H g conj(et)) with conj(et) = fr.T - 1j fi.T
        h = np.conj(ex).T @ g
        return (_gemm_last(h.real, fr.T) + _gemm_last(h.imag, fi.T),)

    return _record(out, (x,), adjoint)


def truncated_irfft2(blocks, nx: int, nt: int) -> Tensor:
    """Real part of ``ifft2`` of a spectrum that is zero outside the retained block.

    Taking the real part projects onto Hermitian-symmetric spectra, so the
    conjugate partner of every retained mode is handled implicitly.
    """
    blocks = as_tensor(blocks)
    m_x, m_t = blocks.shape[-2:]
    ix = np.conj(_mode_basis(nx, m_x)).T / nx  # (nx, m_x)
    _, _, ir, ii = _time_basis(nt, m_t)
    h = ix @ blocks.data
    out = Tensor(_gemm_last(h.real, ir) - _gemm_last(h.imag, ii))

    def adjoint(g):
        # ix^H g conj(it), it = (ir + 1j ii).T
        return (np.conj(ix).T @ (_gemm_last(g, ir.T) - 1j * _gemm_last(g, ii.T)),)

    return _record(out, (blocks,), adjoint)


def block_multiply(blocks, weights) -> Tensor:
    """Per-mode channel mixing on compact ``(..., c_in, m_x, m_t)`` blocks."""
    blocks, weights = as_tensor(blocks), as_tensor(weights)
    if blocks.shape[-3:] != weights.shape[1:]:
        raise ValueError(f"block shape {blocks.shape[-3:]} != weight shape {weights.shape[1:]}")
    y = np.einsum("oiab,...iab->...oab", weights.data, blocks.data, optimize=True)
    out = Tensor(y)

    def adjoint(g):
        gb = np.einsum("oiab,...oab->...iab", np.conj(weights.data), g, optimize=True)
        gw = np.einsum("...oab,...iab->oiab", g, np.conj(blocks.data), optimize=True)
        return (gb, gw)

    return _record(out, (blocks, weights), adjoint)


# -- traffic flux ---------------------------------------------------------------------

def godunov_flux(u_up, u_dn, u_max: float, v_max_ms: float) -> Tensor:
    """``min(demand(u_up), supply(u_dn))`` in veh/km * m/s, differentiable.

    Subgradients: demand and supply use ``f'(u)`` on their ``f`` branch and 0
    on the ``q_max`` branch (``u = u_cr`` counts as the ``f`` branch of both);
    a tie ``demand == supply`` sends the gradient to ``u_up``.
    """
    u_up, u_dn = as_tensor(u_up), as_tensor(u_dn)
    u_cr = 0.5 * u_max
    q_max = 0.25 * u_max * v_max_ms
    a, b = u_up.data, u_dn.data
    f_a = a * v_max_ms * (1.0 - a / u_max)
    f_b = b * v_max_ms * (1.0 - b / u_max)
    dem = np.where(a <= u_cr, f_a, q_max)
    sup = np.where(b > u_cr, f_b, q_max)
    take_dem = dem <= sup
    out = Tensor(np.where(take_dem, dem, sup))

    def adjoint(g):
        d_dem = np.where(a <= u_cr, v_max_ms * (1.0 - 2.0 * a / u_max), 0.0)
        d_sup = np.where(b >= u_cr, v_max_ms * (1.0 - 2.0 * b / u_max), 0.0)
        return (_fit(g * take_dem * d_dem, u_up), _fit(g * ~take_dem * d_sup, u_dn))

    return _record(out, (u_up, u_dn), adjoint)
