"""Isotropic a-stable densities and the kernels built from them.

The density is ``f_a(x) = (2 pi)^-d int exp(i x.xi) exp(-|xi|^a) dxi``, in
radial form

    f_a(r) = (2 pi)^(-d/2) r^(-nu) int_0^inf J_nu(r rho) rho^(d/2) exp(-rho^a) drho,
    nu = (d - 2)/2.

For small ``r * R`` (``R`` the effective frequency cutoff) the integral is
taken on the real axis. Otherwise it is rotated into the upper half plane,
``rho = s exp(i theta)``, where ``J_nu = Re H^(1)_nu`` decays exponentially;
the rotated integrand is smooth and non-oscillatory on the scale ``1/r``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import hankel1e, roots_laguerre

from .bessel import bessel_j
from .errors import DomainError, InvalidInputError, RangeError, ResolutionError
from .quadrature import (
    geometric_breakpoints,
    integrate_doubling,
    panel_rule,
    refine_breakpoints,
    uniform_breakpoints,
)

X_MAX = 1.0e3
# exp(-rho^a) is below 1e-19 past rho^a = 44.
_EXP_CUT = 44.0
_REAL_AXIS_PHASE = 60.0
_CHUNK = 256


def sphere_area(d):
    """Surface measure of ``S^{d-1}``; equals 2 for ``d = 1``."""
    return 2.0 * math.pi ** (0.5 * d) / math.gamma(0.5 * d)


@dataclass(frozen=True)
class StableDensitySpec:
    a: float
    d: int
    t: float = 1.0

    def __post_init__(self):
        if not (0 < self.a <= 2):
            raise DomainError(f"stability index a must lie in (0, 2], got {self.a}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError("d must be a positive integer")
        if not self.t > 0:
            raise InvalidInputError("time scale t must be positive")


@dataclass(frozen=True)
class DeltaApproximant:
    """Unit-mass Gaussian of width ``eps``; ``hat(xi) = exp(-eps^2 |xi|^2 / 2)``."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")

    def hat(self, xi_abs):
        return np.exp(-0.5 * (self.eps * np.asarray(xi_abs)) ** 2)


# --- density ----------------------------------------------------------------

def density_at_origin(a, d):
    """``f_a(0) = (2 pi)^-d |S^{d-1}| Gamma(d/a) / a``."""
    return sphere_area(d) * math.gamma(d / a) / (a * (2 * math.pi) ** d)


def _rotation_angle(a):
    return min(0.5 * math.pi, 0.25 * math.pi / a)


@lru_cache(maxsize=16)
def _rotated_rule(a, splits=0):
    theta = _rotation_angle(a)
    damp = math.cos(a * theta)
    s_max = (_EXP_CUT / damp) ** (1.0 / a)
    # cusp-graded panels toward 0, then growth by 10% per panel so the slow
    # phase s^a sin(a theta) stays well resolved by 16-point panels
    lo = geometric_breakpoints(0.0, 1.0, 0.5)
    n_hi = max(1, int(math.ceil(math.log(max(s_max, 1.0 + 1e-9)) / math.log(1.1))))
    hi = np.geomspace(1.0, max(s_max, 1.0 + 1e-9), n_hi + 1)[1:]
    edges = np.concatenate([lo, hi])
    for _ in range(splits):
        edges = refine_breakpoints(edges)
    nodes, weights = panel_rule(edges, 16)
    return theta, nodes, weights


def _rotated_density(a, d, r, splits=0):
    """Radial density at ``r > 0`` along the rotated contour."""
    theta, s, w = _rotated_rule(a, splits)
    rot = np.exp(1j * theta)
    rho = s * rot
    nu = 0.5 * (d - 2)
    g = rho ** (0.5 * d) * np.exp(-(rho ** a)) * w * rot
    out = np.empty(r.size)
    for start in range(0, r.size, _CHUNK):
        rr = r[start:start + _CHUNK]
        z = np.multiply.outer(rr, rho)
        if d == 1:
            # H^(1)_{-1/2}(z) = sqrt(2/(pi z)) exp(i z)
            kern = np.sqrt(2.0 / (math.pi * z)) * np.exp(1j * z)
        else:
            # the unscaled routine misreports deep in the upper half plane
            kern = hankel1e(nu, z) * np.exp(1j * z)
        kern = np.where(np.isfinite(kern), kern, 0.0)
        out[start:start + _CHUNK] = np.real(kern @ g) * rr ** (-nu)
    return out * (2 * math.pi) ** (-0.5 * d)


def _real_axis_density(a, d, r, splits=0):
    """Radial density by real-axis quadrature (cosine kernel for d = 1)."""
    cut = _EXP_CUT ** (1.0 / a)
    r_max = float(r.max())
    width = min(1.0, 1.0 / (1.0 + r_max))
    edges = np.concatenate([geometric_breakpoints(0.0, min(1.0, cut), 0.5),
                            uniform_breakpoints(1.0, cut, width)[1:] if cut > 1 else []])
    for _ in range(splits):
        edges = refine_breakpoints(edges)
    rho, w = panel_rule(edges, 16)
    g = w * rho ** (0.5 * d) * np.exp(-(rho ** a))
    nu = 0.5 * (d - 2)
    if d == 1:
        kern = np.cos(np.multiply.outer(r, rho)) * np.sqrt(2.0 / (math.pi * rho))
        vals = kern @ g
    else:
        vals = bessel_j(nu, np.multiply.outer(r, rho)) @ g * r ** (-nu)
    return vals * (2 * math.pi) ** (-0.5 * d)


def stable_density_radial(a, d, r, splits=0):
    """``f_a(r)`` at unit time for radii ``r >= 0`` (array in, array out).

    ``splits`` halves every quadrature panel that many times; comparing
    ``splits=0`` with ``splits=1`` gives a refinement error estimate.
    """
    r = np.abs(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    flat, res = r.ravel(), out.reshape(-1)
    zero = flat == 0
    res[zero] = density_at_origin(a, d)
    if a == 2:
        res[~zero] = (4 * math.pi) ** (-0.5 * d) * np.exp(-0.25 * flat[~zero] ** 2)
        return out
    cut = _EXP_CUT ** (1.0 / a)
    small = (~zero) & (flat * cut <= _REAL_AXIS_PHASE)
    large = (~zero) & ~small
    if small.any():
        res[small] = _real_axis_density(a, d, flat[small], splits)
    if large.any():
        res[large] = _rotated_density(a, d, flat[large], splits)
    return out


def stable_density(spec, x, splits=0):
    """Density ``f_a(t, x) = t^(-d/a) f_a(t^(-1/a) x)``.

    Parameters
    ----------
    spec : StableDensitySpec
    x : array_like
        Points; for ``d > 1`` the last axis holds the ``d`` coordinates, for
        ``d = 1`` any shape of scalars is accepted.

    Returns
    -------
    float or ndarray
        Relative accuracy about 1e-10 or better; tails beyond the double
        range of the Gaussian case underflow to 0.
    """
    x = np.asarray(x, dtype=float)
    if spec.d == 1:
        r = np.abs(x)
    else:
        if x.shape[-1:] != (spec.d,):
            raise InvalidInputError(f"points must have a trailing axis of length {spec.d}")
        r = np.sqrt(np.sum(x * x, axis=-1))
    if r.size and float(np.max(r)) > X_MAX:
        raise RangeError(f"|x| beyond the supported envelope {X_MAX:g}")
    scale = spec.t ** (-1.0 / spec.a)
    out = scale ** spec.d * stable_density_radial(spec.a, spec.d, r * scale, splits)
    return float(out) if out.ndim == 0 else out


# --- large-|x| series --------------------------------------------------------

def tail_coefficients(a, d, terms):
    """``c_k`` with ``f_a(r) ~ sum_k c_k r^(-d - a k)``, ``k = 1..terms``.

    Convergent for ``a < 1``, asymptotic for ``1 <= a < 2``, identically zero
    for ``a = 2``.
    """
    out = np.zeros(terms)
    if a == 2:
        return out
    for k in range(1, terms + 1):
        ak = a * k
        s = math.sin(0.5 * math.pi * ak)
        if abs(s) < 1e-12:  # a k even: the term vanishes
            continue
        log_mag = (ak * math.log(2.0) + math.lgamma(0.5 * (d + ak)) + math.lgamma(1 + 0.5 * ak)
                   - math.lgamma(k + 1.0))
        if log_mag > 700:
            break
        out[k - 1] = (-1) ** (k + 1) * s * math.exp(log_mag) * math.pi ** (-0.5 * d - 1)
    return out


def _tail_terms(a, d, r_min, rel=1e-17, max_terms=80):
    """Series terms to keep for ``r >= r_min`` (stop at the smallest term)."""
    c = tail_coefficients(a, d, max_terms)
    ks = np.arange(1, max_terms + 1)
    mags = np.abs(c) * r_min ** (-a * ks)
    lead = mags.max() if mags.size else 0.0
    keep = max_terms
    best = np.inf
    for i, m in enumerate(mags):
        if c[i] == 0:
            continue
        if m > best:
            keep = i
            break
        best = m
        if m <= rel * lead:
            keep = i + 1
            break
    return c[:keep]


def tail_series(a, d, r, r_min=None):
    r = np.asarray(r, dtype=float)
    c = _tail_terms(a, d, float(np.min(r)) if r_min is None else r_min)
    ks = np.arange(1, c.size + 1)
    return np.sum(c * np.power.outer(r, -d - a * ks), axis=-1)


# --- characteristic function ---------------------------------------------------

def _tail_start(a):
    if a == 2:
        return 20.0
    if a < 1:
        return 40.0
    return 40.0 if a == 1 else 60.0


def _near_breakpoints(x_end, eta):
    lo = geometric_breakpoints(0.0, 1.0, 0.5)[-12:]
    lo = np.concatenate([[0.0], lo[lo > 0]])
    n = max(1, int(math.ceil(math.log(x_end) / math.log(1.15))))
    hi = np.geomspace(1.0, x_end, n + 1)[1:]
    edges = np.concatenate([lo, hi])
    if eta > 0:
        cap = 2.0 / eta
        refined = [edges[0]]
        for b in edges[1:]:
            prev = refined[-1]
            pieces = max(1, int(math.ceil((b - prev) / cap)))
            refined.extend(np.linspace(prev, b, pieces + 1)[1:])
        edges = np.asarray(refined)
    return edges


def _radial_kernel_real(d, eta, r):
    """``int_{S^{d-1}} exp(i eta omega.e r) d omega`` (real), with eta = 0 handled."""
    if eta == 0:
        return np.full_like(r, sphere_area(d))
    if d == 1:
        return 2.0 * np.cos(eta * r)
    nu = 0.5 * (d - 2)
    z = eta * r
    return (2 * math.pi) ** (0.5 * d) * z ** (-nu) * bessel_j(nu, z)


def _far_tail(a, d, eta, x_start):
    """``int_{|x|>X} exp(i eta.x) f_a(x) dx`` from the tail series, termwise."""
    c = _tail_terms(a, d, x_start)
    if c.size == 0 or not np.any(c):
        return 0.0
    ks = np.arange(1, c.size + 1)
    if eta == 0:
        return sphere_area(d) * float(np.sum(c * x_start ** (-a * ks) / (a * ks)))
    # contour r = X + i v, Gauss-Laguerre in eta v on exp(-eta v)
    u, w = roots_laguerre(60)
    v = u / eta
    z = eta * (x_start + 1j * v)
    nu = 0.5 * (d - 2)
    if d == 1:
        kern = 2.0 * np.exp(1j * eta * x_start)  # times exp(-eta v), absorbed by the rule
    else:
        kern = (2 * math.pi) ** (0.5 * d) * z ** (-nu) * hankel1e(nu, z) * np.exp(1j * eta * x_start)
    rr = x_start + 1j * v
    total = 0.0
    for ck, k in zip(c, ks):
        if ck == 0:
            continue
        vals = kern * rr ** (d - 1) * rr ** (-d - a * k) * 1j / eta
        total += ck * float(np.real(np.sum(w * vals)))
    return total


def characteristic_check(spec, eta, with_error=False):
    """``int exp(i eta.x) f_a(t, x) dx``, to compare with ``exp(-t |eta|^a)``.

    The integral runs over ``|x| <= X`` by panel quadrature of the density and
    over ``|x| > X`` by termwise integration of the large-``|x|`` series.
    With ``with_error`` the panel-doubling difference is returned as well.
    """
    eta = np.asarray(eta, dtype=float)
    norm = float(np.sqrt(np.sum(eta * eta)))
    e = norm * spec.t ** (1.0 / spec.a)
    a, d = spec.a, spec.d
    x_end = _tail_start(a)
    if e > 0:
        x_end = max(x_end, 25.0 / e)
    edges = _near_breakpoints(x_end, e)

    def integrand(r):
        return _radial_kernel_real(d, e, r) * r ** (d - 1) * stable_density_radial(a, d, r)

    near, err = integrate_doubling(integrand, edges, order=16, rtol=1e-12, max_doublings=1)
    if err > 1e-8:
        raise ResolutionError(f"characteristic integral unresolved (error {err:.2e})")
    val = complex(near + _far_tail(a, d, e, x_end))
    return (val, float(err)) if with_error else val


# --- K_h(tau) ---------------------------------------------------------------

def khat_density(xi_abs, tau, h, params):
    """Integrand of ``K_h(tau)`` at ``|xi|`` (per unit volume in ``R^d``)."""
    rho = np.asarray(xi_abs, dtype=float)
    a, d = params.a, params.d
    ra = rho ** a
    return ra * (1 + rho * rho) ** (0.5 * (a - d)) / ((tau - ra) ** 2 + ra * ra) * h.hat(rho)


def khat_density_at_zero(xi_abs, h, params):
    """The ``tau = 0`` integrand in its simplified form ``|xi|^-a <xi>^(a-d) h(xi)``."""
    rho = np.asarray(xi_abs, dtype=float)
    return rho ** (-params.a) * (1 + rho * rho) ** (0.5 * (params.a - params.d)) * h.hat(rho)


def _khat_breakpoints(tau, h, params):
    top = math.sqrt(2 * 46.0) / h.eps
    lo = geometric_breakpoints(0.0, 1.0, 0.5)
    hi = np.geomspace(1.0, max(top, 2.0), max(8, int(math.ceil(4 * math.log(max(top, 2.0))))) + 1)[1:]
    edges = np.concatenate([lo, hi])
    if tau > 0:
        knee = tau ** (1.0 / params.a)
        edges = np.union1d(edges, [knee])
    return edges


def k_hat(h, params, tau, rtol=1e-9, with_error=False):
    """``K_h(tau) = int |xi|^a <xi>^(a-d) / ((tau - |xi|^a)^2 + |xi|^(2a)) h(xi) dxi`` with C = 1.

    Raises
    ------
    DomainError
        Unless ``d > d_a`` and ``tau >= 0``.
    ResolutionError
        If panel doubling fails to settle to 1e-7 relative.
    """
    if params.d <= params.d_a:
        raise DomainError(f"k_hat needs d > d_a (d={params.d}, d_a={params.d_a})")
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    area = sphere_area(params.d)

    def radial(rho):
        return area * rho ** (params.d - 1) * khat_density(rho, tau, h, params)

    val, err = integrate_doubling(radial, _khat_breakpoints(tau, h, params), 16, rtol=rtol, max_doublings=4)
    if err > 1e-7 * abs(val):
        raise ResolutionError(f"k_hat quadrature did not settle (relative error {err / abs(val):.2e})")
    return (float(val), float(err)) if with_error else float(val)


@dataclass(frozen=True)
class DivergenceFit:
    eps: tuple
    values: tuple
    slope: float
    intercept: float
    r_squared: float
    degenerate: bool

    def rows(self):
        return list(zip(self.eps, self.values))


def linear_fit(x, y):
    """Least-squares line; returns slope, intercept, R^2 and a degeneracy flag."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return 0.0, float(np.mean(y)) if y.size else 0.0, 0.0, True
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2, False


def divergence_scan(params, eps_list):
    """``K_h(0)`` over ``eps_list`` with a least-squares fit against ``log(1/eps)``."""
    eps = [float(e) for e in eps_list]
    if not eps:
        raise InvalidInputError("eps_list is empty")
    span = math.log2(max(eps) / min(eps))
    if 0 < span < 3:
        raise InvalidInputError(f"eps_list spans {span:.2f} octaves; at least 3 are required")
    values = [k_hat(DeltaApproximant(e), params, 0.0) for e in eps]
    slope, intercept, r2, degenerate = linear_fit(np.log(1.0 / np.asarray(eps)), values)
    return DivergenceFit(tuple(eps), tuple(values), slope, intercept, r2, degenerate)


# --- the explicit kernel 1/(sigma - i t) ------------------------------------------

def closed_form_constant(params):
    """``c_d = a (2 pi)^d / |S^{d-1}|``."""
    return params.a * (2 * math.pi) ** params.d / sphere_area(params.d)


def closed_form_k(params, sigma, alpha, beta, t, gamma=0.0, with_error=False):
    """Numeric and exact values of ``(exp(itD^a) phi | psi)``.

    ``phi^ = |xi|^alpha sigma^gamma exp(-sigma |xi|^a / 2)`` and
    ``psi^ = |xi|^beta sigma^-gamma exp(-sigma |xi|^a / 2)`` with
    ``alpha + beta = a - d``; the pairing is ``(f | g) = int f conj(g)``.

    Returns
    -------
    (complex, complex)
        Quadrature value and ``1 / (c_d (sigma - i t))``; with ``with_error``
        a third entry holds the panel-doubling difference of the first.
    """
    a, d = params.a, params.d
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    if abs(alpha + beta - (a - d)) > 1e-12:
        raise InvalidInputError(f"alpha + beta must equal a - d = {a - d}")
    if alpha <= -d or beta <= -d:
        raise InvalidInputError("alpha and beta must exceed -d")
    area = sphere_area(d)

    # substitute u = rho^a; panels uniform in u, graded toward u = 0
    u_max = 46.0 / sigma
    width = min(1.0, 1.0 / (sigma + abs(t)))
    edges = np.concatenate([geometric_breakpoints(0.0, width, 0.5),
                            uniform_breakpoints(width, u_max, width)[1:]])

    def integrand(u):
        rho = u ** (1.0 / a)
        phi = rho**alpha * sigma**gamma * np.exp(-0.5 * sigma * u)
        psi = rho**beta * sigma ** (-gamma) * np.exp(-0.5 * sigma * u)
        jac = rho ** (1.0 - a) / a
        return np.exp(1j * t * u) * phi * np.conj(psi) * rho ** (d - 1) * jac

    val, err = integrate_doubling(integrand, edges, 16, rtol=1e-12, max_doublings=3)
    numeric = complex(val) * area / (2 * math.pi) ** d
    exact = 1.0 / (closed_form_constant(params) * (sigma - 1j * t))
    if with_error:
        return numeric, exact, float(err) * area / (2 * math.pi) ** d
    return numeric, exact
