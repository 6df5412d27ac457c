"""Composite Gauss-Legendre rules on panels.

Every integral in the package that is not an FFT goes through these helpers:
nodes and weights are built once per panel layout and reused across
integrands, so doubling the panel count gives a cheap error estimate.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(order):
    """Gauss-Legendre nodes and weights on [-1, 1] (cached, read-only)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def panel_rule(breakpoints, order=16):
    """Composite rule over consecutive panels ``[b_i, b_{i+1}]``.

    Parameters
    ----------
    breakpoints : array_like
        Strictly increasing panel edges.
    order : int
        Gauss-Legendre points per panel.

    Returns
    -------
    nodes, weights : ndarray
    """
    b = np.asarray(breakpoints, dtype=float)
    if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
        raise ValueError("breakpoints must be a strictly increasing 1-D array")
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(b)
    mid = 0.5 * (b[1:] + b[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def refine_breakpoints(breakpoints):
    """Split every panel in two (the refinement-doubling step)."""
    b = np.asarray(breakpoints, dtype=float)
    out = np.empty(2 * b.size - 1)
    out[0::2] = b
    out[1::2] = 0.5 * (b[1:] + b[:-1])
    return out


def geometric_breakpoints(lo, hi, ratio=0.5):
    """Panels shrinking geometrically toward ``lo`` (for endpoint cusps).

    Edges are ``lo + (hi - lo) * ratio**k`` down to a width of about
    ``1e-16 * (hi - lo)``.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    n = int(np.ceil(np.log(1e-16) / np.log(ratio)))
    edges = lo + (hi - lo) * ratio ** np.arange(n, -1, -1)
    return np.concatenate([[lo], edges])


def uniform_breakpoints(lo, hi, max_width):
    """Equal panels on ``[lo, hi]`` no wider than ``max_width``."""
    n = max(1, int(np.ceil((hi - lo) / max_width)))
    return np.linspace(lo, hi, n + 1)


def integrate(fn, breakpoints, order=16):
    """Integrate a vectorized callable over the composite rule."""
    nodes, weights = panel_rule(breakpoints, order)
    return np.sum(weights * fn(nodes), axis=-1)


def integrate_doubling(fn, breakpoints, order=16, rtol=1e-10, max_doublings=6, atol=0.0):
    """Integrate with panel doubling until two successive values agree.

    Returns
    -------
    value : float or complex
        The value on the finest layout used.
    error : float
        Absolute difference between the last two layouts.
    """
    b = np.asarray(breakpoints, dtype=float)
    prev = integrate(fn, b, order)
    err = np.inf
    for _ in range(max_doublings):
        b = refine_breakpoints(b)
        cur = integrate(fn, b, order)
        err = float(np.max(np.abs(cur - prev)))
        prev = cur
        if err <= max(atol, rtol * float(np.max(np.abs(cur)))):
            break
    return prev, err
