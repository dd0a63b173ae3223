"""
Finite-difference weights and derivative helpers.

Weights come from Fornberg's recursion, so arbitrary (also nonuniform) node
sets are supported. On uniform grids the helpers use centered stencils in the
interior and shift to one-sided stencils of the same width near the edges.
"""
import numpy as np


def fornberg_weights(nodes, x0, deriv=1):
    """
    Weights ``w`` with ``f^(deriv)(x0) ~ sum(w * f(nodes))``.

    Parameters
    ----------
    nodes : 1-D array_like
        Distinct sample abscissae.
    x0 : float
        Evaluation point.
    deriv : int
        Derivative order, smaller than ``len(nodes)``.
    """
    x = np.asarray(nodes, dtype=float)
    n = len(x)
    if deriv >= n:
        raise ValueError("need more nodes than the derivative order")
    c = np.zeros((n, deriv + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, deriv)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, deriv]


def stencil_offsets(i, n, order):
    """Integer offsets of the ``order+1``-point stencil used at index ``i`` of ``n``."""
    if order % 2:
        raise ValueError("order must be even")
    npts = order + 1
    if n < npts:
        raise ValueError(f"need at least {npts} points for order {order}, got {n}")
    half = order // 2
    start = min(max(i - half, 0), n - npts)
    return np.arange(start, start + npts) - i


def uniform_stencils(n, order=8):
    """
    First-derivative stencils for a uniform grid of unit spacing.

    Returns ``(offsets, weights)`` of shape ``(n, order+1)``; divide the
    weighted sum by the actual spacing.
    """
    offsets = np.empty((n, order + 1), dtype=int)
    weights = np.empty((n, order + 1))
    cache = {}
    for i in range(n):
        off = stencil_offsets(i, n, order)
        key = off[0]
        if key not in cache:
            cache[key] = fornberg_weights(off, 0.0)
        offsets[i] = off
        weights[i] = cache[key]
    return offsets, weights


def uniform_derivative(values, h, order=8, axis=0):
    """Derivative of samples on a uniform grid of spacing ``h`` along ``axis``."""
    y = np.moveaxis(np.asarray(values), axis, 0)
    n = y.shape[0]
    offsets, weights = uniform_stencils(n, order)
    idx = np.arange(n)[:, None] + offsets
    shape = (n, order + 1) + (1,) * (y.ndim - 1)
    dy = np.sum(weights.reshape(shape) * y[idx], axis=1) / h
    return np.moveaxis(dy, 0, axis)


def nonuniform_derivative(x, y, npts=5):
    """Derivative of ``y(x)`` on arbitrary ascending nodes, ``npts``-point stencils."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = len(x)
    out = np.empty(y.shape, dtype=np.result_type(y, float))
    for i in range(n):
        off = stencil_offsets(i, n, npts - 1)
        sel = i + off
        out[i] = np.tensordot(fornberg_weights(x[sel], x[i]), y[sel], axes=1)
    return out
