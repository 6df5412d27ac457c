"""Radial profiles, harmonic bookkeeping and the Bessel-type operators T_a^nu, S_j^nu.

``T_a^nu h(t, r) = r**(-(d-2)/2) * int_0^inf exp(i t rho**a) J_nu(r rho) rho**((1-d+a)/2) h(rho) drho``

is evaluated as a single matrix product over panel Gauss-Legendre nodes,
``E(t, rho) @ diag(w h rho**...) @ J(rho, r)``, so profiles that share nodes
share the expensive Bessel table.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .bessel import R_MAX, bessel_j
from .errors import DomainError, InvalidInputError, ResolutionError
from .quadrature import panel_rule, refine_breakpoints, uniform_breakpoints
from .spectral_core import chi

# Largest phase change (radians) tolerated across one panel of the default rule.
PHASE_PER_PANEL = math.pi / 2
REFINE_TOL = 1e-4
ANNULUS_SAMPLES = 64


def harmonic_count(d, k):
    """Dimension of the degree-``k`` spherical harmonics on ``S^{d-1}``."""
    if d < 2 or k < 0:
        raise InvalidInputError("harmonic_count needs d >= 2 and k >= 0")
    second = math.comb(d + k - 3, k - 2) if k >= 2 else 0
    return math.comb(d + k - 1, k) - second


@dataclass(frozen=True)
class HarmonicIndex:
    degree: int
    dim: int

    def __post_init__(self):
        if self.degree < 0 or self.dim < 2:
            raise InvalidInputError("HarmonicIndex needs degree >= 0 and dim >= 2")

    @property
    def nu(self):
        return 0.5 * (self.dim - 2 + 2 * self.degree)

    @property
    def multiplicity(self):
        return harmonic_count(self.dim, self.degree)


class RadialProfile:
    """Complex samples on quadrature nodes for ``int_0^inf . drho``.

    Profiles built with :meth:`from_function` remember the generating
    function and panel breakpoints, which lets :meth:`refine` split every
    panel in two and resample.
    """

    def __init__(self, nodes, weights, values, fn=None, breakpoints=None, order=None):
        nodes = np.asarray(nodes, dtype=float)
        weights = np.asarray(weights, dtype=float)
        values = np.asarray(values, dtype=complex)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.shape != values.shape[-1:]:
            raise InvalidInputError("nodes, weights and values must have matching length")
        if nodes.size and (nodes[0] <= 0 or np.any(np.diff(nodes) <= 0)):
            raise InvalidInputError("nodes must be positive and strictly increasing")
        if np.any(weights <= 0):
            raise InvalidInputError("quadrature weights must be positive")
        self.nodes = nodes
        self.weights = weights
        self.values = values
        self.fn = fn
        self.breakpoints = None if breakpoints is None else np.asarray(breakpoints, dtype=float)
        self.order = order

    @classmethod
    def from_function(cls, fn, breakpoints, order=16):
        nodes, weights = panel_rule(breakpoints, order)
        return cls(nodes, weights, fn(nodes), fn=fn, breakpoints=breakpoints, order=order)

    @classmethod
    def on_interval(cls, lo, hi, fn, max_width=0.05, order=16):
        return cls.from_function(fn, uniform_breakpoints(lo, hi, max_width), order)

    def with_values(self, values):
        return RadialProfile(self.nodes, self.weights, values, None, self.breakpoints, self.order)

    def refine(self):
        if self.fn is None or self.breakpoints is None:
            raise ResolutionError("profile has no generating function; cannot refine")
        return RadialProfile.from_function(self.fn, refine_breakpoints(self.breakpoints), self.order)

    def integral(self):
        return complex(np.sum(self.weights * self.values))

    def l2_norm(self):
        """``(int |h|^2 drho)**(1/2)``."""
        return math.sqrt(float(np.sum(self.weights * np.abs(self.values) ** 2)))

    def __len__(self):
        return self.nodes.size

    def __repr__(self):
        return f"RadialProfile(n={self.nodes.size}, support=[{self.nodes[0]:.4g}, {self.nodes[-1]:.4g}])"


def _phase_rate(profile, params, t_max, r_max):
    lo, hi = profile.nodes[0], profile.nodes[-1]
    return t_max * params.a * max(lo ** (params.a - 1), hi ** (params.a - 1)) + r_max


def _check_node_density(profile, params, times, radii):
    if profile.breakpoints is None:
        widths = np.diff(profile.nodes)
        width = float(widths.max()) if widths.size else 0.0
        budget = PHASE_PER_PANEL / 4
    else:
        width = float(np.diff(profile.breakpoints).max())
        budget = PHASE_PER_PANEL * (profile.order or 16) / 4
    t_max = float(np.max(np.abs(times))) if np.size(times) else 0.0
    r_max = float(np.max(radii)) if np.size(radii) else 0.0
    rate = _phase_rate(profile, params, t_max, r_max)
    if rate * width > budget:
        raise ResolutionError(
            f"oscillation rate {rate:.3g} too fast for panel width {width:.3g}; refine the profile"
        )


def oscillatory_breakpoints(lo, hi, params, t_max, r_max, order=16):
    """Panels on ``[lo, hi]`` fine enough for :func:`t_a_nu` up to ``t_max, r_max``."""
    rate = t_max * params.a * max(lo ** (params.a - 1), hi ** (params.a - 1)) + r_max
    width = PHASE_PER_PANEL * order / 4 / max(rate, 1e-300)
    return uniform_breakpoints(lo, hi, min(width, (hi - lo) / 4))


@lru_cache(maxsize=8)
def _bessel_table_cached(nu, nodes_key, radii_key):
    nodes = np.frombuffer(nodes_key)
    radii = np.frombuffer(radii_key)
    out = bessel_j(nu, np.multiply.outer(nodes, radii))
    out.flags.writeable = False
    return out


def bessel_table(nu, nodes, radii):
    """``J_nu(rho_m r_n)`` as an ``(M, R)`` array (cached on exact inputs)."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    radii = np.ascontiguousarray(radii, dtype=float)
    if nodes.size and radii.size and nodes[-1] * radii.max() > R_MAX:
        raise ResolutionError("r * rho exceeds the Bessel evaluation envelope")
    return _bessel_table_cached(float(nu), nodes.tobytes(), radii.tobytes())


def _t_a_nu_raw(h, params, nu, times, radii):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    d, a = params.d, params.a
    jt = bessel_table(nu, h.nodes, radii)
    weight = h.weights * h.nodes ** (0.5 * (1 - d + a))
    phase = np.exp(1j * np.multiply.outer(times, h.nodes ** a))
    vals = np.atleast_2d(h.values) * weight
    # (..., T, M) @ (M, R)
    out = (phase[None, :, :] * vals[:, None, :]) @ jt
    out *= radii ** (-0.5 * (d - 2))
    return out if h.values.ndim == 2 else out[0]


def t_a_nu(h, params, nu, times, radii, check=True):
    """Evaluate ``T_a^nu h`` on the ``(t, r)`` lattice.

    Parameters
    ----------
    h : RadialProfile
        ``h.values`` may be 2-D ``(n_profiles, n_nodes)``; the result then gains a
        leading axis.
    params : DispersionParams
    nu : float
        Bessel order, ``(d - 2 + 2k)/2`` for degree ``k``.
    times, radii : array_like
    check : bool
        Verify node density and, for profiles with a generating function,
        compare against one refinement.

    Returns
    -------
    ndarray of complex, shape ``(len(times), len(radii))``
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < 0):
        raise InvalidInputError("radii must be nonnegative")
    if params.d > 2 and np.any(radii == 0):
        raise DomainError("r = 0 is singular for the prefactor r^{-(d-2)/2} when d > 2")
    if check:
        _check_node_density(h, params, times, radii)
    out = _t_a_nu_raw(h, params, nu, times, radii)
    if check and h.fn is not None:
        fine = _t_a_nu_raw(h.refine(), params, nu, times, radii)
        scale = max(float(np.max(np.abs(fine))), 1e-300)
        if float(np.max(np.abs(fine - out))) / scale > REFINE_TOL:
            raise ResolutionError("T_a^nu disagrees with its refinement; nodes too coarse")
    return out


def annulus_radii(j, samples=ANNULUS_SAMPLES):
    lo, hi = 0.625 * 2.0 ** j, 1.6 * 2.0 ** j
    return np.linspace(lo, hi, max(samples, ANNULUS_SAMPLES))


def trapezoid_l2(values, times):
    """``(int |v|^2 dt)**(1/2)`` by the trapezoid rule on (possibly nonuniform) times."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return 0.0
    return math.sqrt(float(np.trapezoid(np.abs(values) ** 2, times)))


def s_nu_j(h, params, nu, j, times, samples=ANNULUS_SAMPLES):
    """Measured ``||S_j^nu h||_{L_t^2 L_r^inf}`` on the annulus of ``chi_j``.

    ``S_j^nu h(t, r) = chi_j(r) int exp(i t rho^a) J_nu(r rho) rho^((1-d+a)/2) chi_0(rho) h(rho) drho``.
    The sup in ``r`` is a grid maximum over ``samples`` points; the time
    integral is the trapezoid rule on ``times``.
    """
    radii = annulus_radii(j, samples)
    localized = h.with_values(h.values * chi(0, h.nodes))
    vals = _t_a_nu_raw(localized, params, nu, times, radii)
    vals = vals * radii ** (0.5 * (params.d - 2)) * chi(j, radii)
    sup_r = np.max(np.abs(vals), axis=-1)
    return trapezoid_l2(sup_r, times)


def bessel_tail_threshold(j):
    """Order beyond which ``||S_j^nu||`` is negligible (below 1e-6 relative).

    For ``x <= 2.56 * 2**j`` (largest ``r * rho`` on the support) the bound
    ``|J_nu(x)| <= (x/2)**nu / Gamma(nu+1)`` collapses once ``nu`` exceeds a
    few multiples of ``x``; ``8 * 2**j + 40`` leaves a wide margin.
    """
    return 8.0 * 2.0 ** j + 40.0


def bessel_tail_bound(nu, x):
    """``(x/2)**nu / Gamma(nu+1)``, the leading small-argument bound."""
    return math.exp(nu * math.log(0.5 * x) - math.lgamma(nu + 1.0))


def unit_random_profile(template, rng):
    """Complex Gaussian values normalized to unit ``L^2(drho)`` on ``template``'s nodes."""
    g = rng.standard_normal(len(template)) + 1j * rng.standard_normal(len(template))
    g /= np.linalg.norm(g)
    return template.with_values(g / np.sqrt(template.weights))


def _output_norm(out):
    if isinstance(out, RadialProfile):
        return out.l2_norm()
    return float(np.abs(out))


def operator_norm_lower_bound(op, trials, seed, domain, sampler=None):
    """Largest ``||op h|| / ||h||`` over ``trials`` random profiles.

    Parameters
    ----------
    op : callable
        ``RadialProfile -> RadialProfile`` (normed in ``L^2(drho)``) or
        ``RadialProfile -> float`` (already a norm).
    trials : int
        At least 8. Trials are drawn in order from one seeded stream, so a
        larger ``trials`` never lowers the result.
    seed : int
    domain : RadialProfile
        Supplies nodes and weights for the trial profiles.
    sampler : callable, optional
        ``(domain, rng) -> RadialProfile``; defaults to :func:`unit_random_profile`.
    """
    if trials < 8:
        raise InvalidInputError("operator_norm_lower_bound needs trials >= 8")
    sampler = sampler or unit_random_profile
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        h = sampler(domain, rng)
        size = h.l2_norm()
        if size == 0:
            continue
        best = max(best, _output_norm(op(h)) / size)
    return best


def legendre_basis(nodes, lo, hi, modes):
    """``P_m`` on ``[lo, hi]`` mapped from ``[-1, 1]``, zero outside; shape ``(modes, len(nodes))``."""
    u = (2.0 * np.asarray(nodes) - (lo + hi)) / (hi - lo)
    inside = (u >= -1) & (u <= 1)
    basis = legendre.legvander(np.clip(u, -1, 1), modes - 1).T
    return basis * inside
