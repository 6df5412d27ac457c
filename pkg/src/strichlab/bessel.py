"""Bessel functions of the first kind, J_nu(r), for real nu >= 0 and r >= 0.

Three regimes, chosen per sample:

* power series for small arguments, ``r <= max(8, nu/2)``;
* Hankel's large-argument expansion once ``r >= max(40, nu**2)``, summed
  until the terms stop decreasing (never fewer than six corrections);
* Miller's backward recurrence with Neumann-sum normalization in between.

Upward recurrence is never used: it is unstable for ``r < nu``.
"""

import math

import numpy as np
from scipy.special import roots_jacobi

from .errors import RangeError

NU_MAX = 200.0
R_MAX = 1.0e4

_SERIES_MAX_TERMS = 400
_BIG = 1.0e200


def _check_envelope(nu, r):
    if not np.isfinite(nu) or nu < 0 or nu > NU_MAX:
        raise RangeError(f"order nu={nu} outside supported envelope [0, {NU_MAX:g}]")
    if r.size and (not np.all(np.isfinite(r)) or r.min() < 0 or r.max() > R_MAX):
        raise RangeError(f"argument outside supported envelope [0, {R_MAX:g}]")


def _series(nu, r):
    out = np.zeros_like(r)
    pos = r > 0
    if nu == 0:
        out[~pos] = 1.0
    x = r[pos]
    if x.size == 0:
        return out
    half = 0.5 * x
    q = -(half * half)
    term = np.exp(nu * np.log(half) - math.lgamma(nu + 1.0))
    total = term.copy()
    for m in range(1, _SERIES_MAX_TERMS):
        term = term * q / (m * (m + nu))
        total += term
        # Terms decrease monotonically once m(m+nu) > (x/2)^2.
        if m * (m + nu) > np.max(-q) and np.all(np.abs(term) <= 1e-17 * np.abs(total) + 1e-300):
            break
    out[pos] = total
    return out


def _hankel_coefficients(nu, count):
    mu = 4.0 * nu * nu
    a = np.empty(count)
    a[0] = 1.0
    for k in range(1, count):
        a[k] = a[k - 1] * (mu - (2 * k - 1) ** 2) / (k * 8.0)
    return a


def _asymptotic(nu, r):
    coeffs = _hankel_coefficients(nu, 120)
    p = np.zeros_like(r)
    q = np.zeros_like(r)
    inv = 1.0 / r
    power = np.ones_like(r)
    prev_mag = np.full_like(r, np.inf)
    active = np.ones(r.shape, dtype=bool)
    for k in range(coeffs.size):
        term = coeffs[k] * power
        mag = np.abs(term)
        # Stop each sample at the smallest term (optimal truncation); keep at
        # least seven terms so six corrections are always included.
        if k >= 7:
            active &= mag < prev_mag
        contrib = np.where(active, term, 0.0)
        if k % 4 == 0:
            p += contrib
        elif k % 4 == 1:
            q += contrib
        elif k % 4 == 2:
            p -= contrib
        else:
            q -= contrib
        prev_mag = np.where(active, mag, prev_mag)
        if k >= 7 and (not active.any() or np.all(mag < 1e-18)):
            break
        power = power * inv
    chi = r - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * r)) * (p * np.cos(chi) - q * np.sin(chi))


def _neumann_weights(mu, count):
    """Weights c_m with (r/2)^mu = sum_m c_m J_{mu+2m}(r)."""
    m = np.arange(count, dtype=float)
    w = np.empty(count)
    w[0] = math.gamma(mu + 1.0)
    if count > 1:
        mm = m[1:]
        log_ratio = np.array([math.lgamma(mu + k) - math.lgamma(k + 1.0) for k in mm])
        w[1:] = (mu + 2.0 * mm) * np.exp(log_ratio)
    return w


def _miller(nu, r):
    n0 = int(math.floor(nu))
    mu = nu - n0
    scale = max(float(r.max()), float(n0), 1.0)
    start = int(math.ceil(scale + 20.0 + 6.0 * scale ** (1.0 / 3.0) + math.sqrt(40.0 * scale)))
    start += start % 2  # even start keeps the Neumann sum aligned on mu + 2m
    weights = _neumann_weights(mu, start // 2 + 1)

    j_next = np.zeros_like(r)
    j_cur = np.full_like(r, 1e-300)
    norm = np.zeros_like(r)
    target = np.zeros_like(r)
    two_over_r = 2.0 / r
    for k in range(start, 0, -1):
        if k % 2 == 0:
            norm += weights[k // 2] * j_cur
        if k == n0:
            target = j_cur.copy()
        j_prev = (mu + k) * two_over_r * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        big = np.abs(j_cur) > _BIG
        if big.any():
            s = np.where(big, 1.0 / _BIG, 1.0)
            j_cur *= s
            j_next *= s
            norm *= s
            target *= s
    norm += weights[0] * j_cur
    if n0 == 0:
        target = j_cur
    return target * np.exp(mu * np.log(0.5 * r)) / norm


def bessel_j(nu, r):
    """Evaluate J_nu(r).

    Parameters
    ----------
    nu : float
        Order, ``0 <= nu <= 200``.
    r : float or array_like
        Arguments, ``0 <= r <= 1e4``.

    Returns
    -------
    float or ndarray
        Same shape as ``r``. Absolute error is below 1e-10 for
        ``nu <= 50, r <= 200`` and below 1e-8 elsewhere in the envelope.

    Raises
    ------
    RangeError
        If ``nu`` or any ``r`` is outside the envelope.
    """
    nu = float(nu)
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    _check_envelope(nu, r)
    flat = r.ravel()
    out = np.empty_like(flat)

    series = flat <= max(8.0, 0.5 * nu)
    asym = (~series) & (flat >= max(40.0, nu * nu))
    mid = ~(series | asym)
    if series.any():
        out[series] = _series(nu, flat[series])
    if asym.any():
        out[asym] = _asymptotic(nu, flat[asym])
    if mid.any():
        out[mid] = _miller(nu, flat[mid])
    out = out.reshape(r.shape)
    return float(out[0]) if scalar else out


def bessel_j_poisson(nu, r, order=120):
    """J_nu(r) by direct quadrature of Poisson's integral.

    The weight ``(1 - theta^2)^(nu - 1/2)`` is absorbed exactly by a
    Gauss-Jacobi rule, leaving the entire function ``cos(r theta)``.
    Independent of ``bessel_j``; meant as a check for moderate ``r``.
    """
    nu = float(nu)
    if nu < 0:
        raise RangeError("Poisson integral requires nu >= 0 here")
    r = np.asarray(r, dtype=float)
    theta, w = roots_jacobi(order, nu - 0.5, nu - 0.5)
    integral = np.cos(np.multiply.outer(r, theta)) @ w
    safe = np.where(r > 0, 0.5 * r, 1.0)
    pref = np.exp(nu * np.log(safe) - math.lgamma(nu + 0.5)) / math.sqrt(math.pi)
    if nu == 0:
        pref = np.full_like(safe, 1.0 / math.pi)
    pref = np.where(r > 0, pref, pref if nu == 0 else 0.0)
    return pref * integral
