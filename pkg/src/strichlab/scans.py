"""Measurement scans for the spherically averaged homogeneous and
double-endpoint inhomogeneous estimates.

Both scans compute lower bounds for operator norms: ratios over seeded
random trials, with every table carrying its time window and the drift
seen when the discretization is refined or the window doubled.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .duhamel_nls import duhamel_recursion
from .errors import InvalidInputError, PreconditionError
from .mixed_norms import (
    AngularBundle,
    SpaceTimeSample,
    as_exponent,
    dual_exponent,
    spherical_mixed_norm,
    trapezoid_weights,
    theorem3_threshold,
)
from .quadrature import panel_rule, refine_breakpoints
from .radial_hankel import (
    HarmonicIndex,
    RadialProfile,
    bessel_table,
    legendre_basis,
    oscillatory_breakpoints,
    t_a_nu,
)
from .spectral_core import chi

BAND = (0.625, 1.6)


@dataclass(frozen=True)
class Discretization:
    window: float = 16.0
    dt: float = 0.1
    dr: float = 0.1
    modes: int = 8

    def refined(self):
        return Discretization(self.window, 0.5 * self.dt, 0.5 * self.dr, self.modes)

    def doubled(self):
        return Discretization(2 * self.window, self.dt, self.dr, self.modes)


@dataclass
class ScanTable:
    """Ratios per row key with drift columns and the settings that produced them."""

    experiment: str
    keys: list
    values: list
    refinement_drift: list
    window_drift: list
    seed: int
    settings: dict = field(default_factory=dict)
    trials: np.ndarray = None

    def rows(self):
        return [
            dict(experiment=self.experiment, key=k, value=v, refinement_drift=rd, window_drift=wd, seed=self.seed)
            for k, v, rd, wd in zip(self.keys, self.values, self.refinement_drift, self.window_drift)
        ]


# --- homogeneous scan ------------------------------------------------------------

def theorem2_threshold(params):
    """Largest admissible angular exponent (exclusive), or ``None`` outside the covered range."""
    d, a = params.d, params.a
    if d >= 3:
        bound = 0.5 * (d - 2)
        if a > 1:
            bound = max(bound, 1.0 / 7.0 + 0.5 * (d - 2))
        return bound
    if d >= 2 and a > 1:
        return 1.0 / 7.0 + 0.5 * (d - 2)
    return None


def _band(j):
    return BAND[0] * 2.0**j, BAND[1] * 2.0**j


def _t2_lattice(params, nu, disc, j):
    lo, hi = _band(j)
    scale_t = 2.0 ** (-j * params.a)
    t_max = disc.window * scale_t
    n_t = int(round(disc.window / disc.dt))
    times = np.linspace(-t_max, t_max, 2 * n_t + 1)
    speed = params.a * max(lo ** (params.a - 1), hi ** (params.a - 1))
    r_max = max(speed * t_max, nu / lo) + 10.0 * 2.0**-j
    dr = disc.dr * 2.0**-j
    radii = np.arange(1e-3 * 2.0**-j, r_max + dr, dr)
    return times, radii


def _t2_profiles(params, nu, disc, j, times, radii, refine):
    lo, hi = _band(j)
    edges = oscillatory_breakpoints(lo, hi, params, float(np.max(np.abs(times))), float(radii[-1]))
    if refine:
        edges = refine_breakpoints(edges)
    nodes, weights = panel_rule(edges, 16)
    basis = legendre_basis(nodes, lo, hi, disc.modes) * chi(j, nodes)
    gram = (basis * weights) @ basis.T
    return RadialProfile(nodes, weights, basis.astype(complex), breakpoints=edges, order=16), gram


def _sup_l2(vals, times):
    """``L_t^2 L_r^inf`` of ``vals[..., t, r]`` plus the argmax radius index per time."""
    mag = np.abs(vals)
    idx = np.argmax(mag, axis=-1)
    sup = np.take_along_axis(mag, idx[..., None], axis=-1)[..., 0]
    return np.sqrt(np.trapezoid(sup**2, times, axis=-1)), idx


def _ascend(c, tables, gram, weights_t, times, iterations=25):
    """Raise the ratio of one trial by alternating radius selection and a generalized eigenproblem."""
    best = None
    for _ in range(iterations):
        vals = np.tensordot(c, tables, axes=(0, 0))
        num, idx = _sup_l2(vals, times)
        ratio = num / math.sqrt(max(np.real(np.conj(c) @ gram @ c), 1e-300))
        if best is not None and ratio <= best[0] * (1 + 1e-10):
            break
        best = (ratio, c)
        cols = tables[:, np.arange(times.size), idx]  # (modes, times)
        form = (cols * weights_t) @ cols.conj().T
        _, vecs = eigh(form, gram)
        c = vecs[:, -1]
    return best


def _t2_single(params, nu, disc, j, c, refine=False):
    times, radii = _t2_lattice(params, nu, disc, j)
    prof, gram = _t2_profiles(params, nu, disc, j, times, radii, refine)
    h = prof.with_values(c @ prof.values)
    vals = t_a_nu(h, params, nu, times, radii, check=False)
    num, _ = _sup_l2(vals, times)
    return float(num) / math.sqrt(float(np.real(np.conj(c) @ gram @ c)))


def theorem2_scan(params, s, degrees, trials, seed, disc=None, band=0, ascent=True, drift=True):
    """Ratios ``(1+k)^s ||T_a^nu h||_{L_t^2 L_r^inf} / ||h||_{L^2(drho)}`` per degree.

    Profiles are ``chi_band(rho) * sum_m c_m P_m`` with complex Gaussian
    ``c`` (``disc.modes`` Legendre modes on the band). Times cover
    ``[-T, T]`` with ``T = disc.window`` (scaled by ``2^{-a band}``); radii
    reach past the outgoing front and the Bessel turning point.

    Parameters
    ----------
    params : DispersionParams
    s : float
        Angular exponent, below :func:`theorem2_threshold`.
    degrees : iterable of int
    trials : int
    seed : int
    disc : Discretization, optional
    band : int
        Dyadic band of the profiles; the ratio is invariant under it.
    ascent : bool
        Improve every trial by local ascent before taking the maximum.
    drift : bool
        Recompute the best trial on the refined lattice and on the doubled window.

    Returns
    -------
    ScanTable
        ``values[i]`` is the maximum over trials for ``keys[i]``; ``trials``
        holds every trial's ratio, shape ``(len(degrees), trials)``.

    Raises
    ------
    PreconditionError
        Dimension or exponent outside the covered range.
    """
    limit = theorem2_threshold(params)
    if limit is None:
        raise PreconditionError(f"no homogeneous estimate for d={params.d}, a={params.a}")
    if not s < limit:
        raise PreconditionError(f"s={s} is not below the threshold {limit:.6g}")
    if trials < 1:
        raise InvalidInputError("trials must be positive")
    disc = disc or Discretization()
    degrees = [int(k) for k in degrees]
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((trials, disc.modes)) + 1j * rng.standard_normal((trials, disc.modes))
    values, ref_drift, win_drift, per_trial = [], [], [], []
    for k in degrees:
        nu = HarmonicIndex(k, params.d).nu
        times, radii = _t2_lattice(params, nu, disc, band)
        prof, gram = _t2_profiles(params, nu, disc, band, times, radii, refine=False)
        tables = t_a_nu(prof, params, nu, times, radii)
        w_t = trapezoid_weights(times)
        ratios, best_c = [], None
        for c in coeffs:
            if ascent:
                ratio, c_end = _ascend(c, tables, gram, w_t, times)
            else:
                num, _ = _sup_l2(np.tensordot(c, tables, axes=(0, 0)), times)
                ratio, c_end = num / math.sqrt(float(np.real(np.conj(c) @ gram @ c))), c
            ratios.append(float(ratio))
            if best_c is None or ratio >= max(ratios):
                best_c = c_end
        weight = (1.0 + k) ** s
        best = weight * max(ratios)
        values.append(best)
        per_trial.append([weight * r for r in ratios])
        if drift:
            fine = weight * _t2_single(params, nu, disc.refined(), band, best_c, refine=True)
            wide = weight * _t2_single(params, nu, disc.doubled(), band, best_c)
            ref_drift.append(abs(fine - best) / fine)
            win_drift.append(abs(wide - best) / wide)
        else:
            ref_drift.append(float("nan"))
            win_drift.append(float("nan"))
    settings = dict(window=disc.window * 2.0 ** (-band * params.a), dt=disc.dt, dr=disc.dr,
                    modes=disc.modes, band=band, s=s, ascent=ascent)
    return ScanTable("theorem2-scan", degrees, values, ref_drift, win_drift, seed, settings,
                     np.asarray(per_trial))


# --- inhomogeneous scan ----------------------------------------------------------

@dataclass(frozen=True)
class DuhamelDiscretization:
    """Lattice for the retarded scan; forcing lives in ``[0, support]``, output in ``[0, window]``."""

    window: float = 64.0
    dt: float = 0.25
    dr: float = 0.25
    support: float = 8.0
    bumps: int = 4
    modes: int = 4

    def refined(self):
        return DuhamelDiscretization(self.window, 0.5 * self.dt, 0.5 * self.dr, self.support,
                                     self.bumps, self.modes)

    def doubled(self):
        return DuhamelDiscretization(2 * self.window, self.dt, self.dr, self.support,
                                     self.bumps, self.modes)


THEOREM3_DEGREES = (0, 1)


def _time_bumps(times, support, count):
    """Compactly supported smooth bumps ``exp(-1/(1-u^2))`` tiling ``[0, support]``."""
    half = support / (count + 1)
    centers = half * np.arange(1, count + 1)
    u = (times[None, :] - centers[:, None]) / half
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _t3_lattice(params, disc, refine):
    lo, hi = BAND
    n_t = int(round(disc.window / disc.dt))
    times = disc.dt * np.arange(n_t + 1)
    speed = params.a * max(lo ** (params.a - 1), hi ** (params.a - 1))
    r_max = speed * disc.window + 10.0
    radii = np.arange(0.5 * disc.dr, r_max + disc.dr, disc.dr)
    edges = oscillatory_breakpoints(lo, hi, params, disc.window, r_max)
    if refine:
        edges = refine_breakpoints(edges)
    nodes, weights = panel_rule(edges, 16)
    return times, radii, nodes, weights


def _hankel_synthesis(values, nodes, weights, radii, nu, d):
    """Physical radial coefficient from frequency samples ``values[..., node]``:
    ``(2 pi)^{-d/2} r^{-(d-2)/2} int J_nu(r rho) v rho^{d/2} drho``."""
    table = bessel_table(nu, nodes, radii)
    v = values * (weights * nodes ** (0.5 * d))
    # real products keep the large matmul in double-precision BLAS
    out = (np.ascontiguousarray(v.real) @ table) + 1j * (np.ascontiguousarray(v.imag) @ table)
    return out * (radii ** (-0.5 * (d - 2)) * (2 * math.pi) ** (-0.5 * d))


def _bundles(radii, dim, per_degree):
    """One AngularBundle per time from ``{degree: array (times, radii)}``."""
    degrees = tuple(HarmonicIndex(k, dim) for k in per_degree)
    weights = trapezoid_weights(radii)
    n_t = next(iter(per_degree.values())).shape[0]
    return [AngularBundle(radii, degrees, tuple(v[n][None, :] for v in per_degree.values()), weights)
            for n in range(n_t)]


def _t3_ratio(params, disc, coeffs, p, r_dual, refine=False):
    """Ratios for every trial in ``coeffs`` (shape ``(trials, degrees, bumps, modes)``)."""
    times, radii, nodes, weights = _t3_lattice(params, disc, refine)
    bumps = _time_bumps(times, disc.support, disc.bumps)
    active = np.flatnonzero(np.any(bumps != 0, axis=0))
    span = slice(0, active[-1] + 2 if active.size else 1)
    basis = legendre_basis(nodes, *BAND, disc.modes) * chi(0, nodes)
    omega = nodes ** params.a
    forcing, response = {}, {}
    for idx, k in enumerate(THEOREM3_DEGREES):
        nu = HarmonicIndex(k, params.d).nu
        # (trials, times, nodes)
        g_hat = np.einsum("it,zim,mn->ztn", bumps, coeffs[:, idx], basis)
        u_hat = np.stack([duhamel_recursion(g, disc.dt, omega) for g in g_hat])
        forcing[k] = _hankel_synthesis(g_hat[:, span], nodes, weights, radii, nu, params.d)
        response[k] = _hankel_synthesis(u_hat, nodes, weights, radii, nu, params.d)
    out = []
    for z in range(coeffs.shape[0]):
        g_part = {k: v[z] for k, v in forcing.items()}
        den = spherical_mixed_norm(SpaceTimeSample(times[span], _bundles(radii, params.d, g_part)), 2, r_dual)
        if den == 0:
            out.append(0.0)
            continue
        u_part = {k: v[z] for k, v in response.items()}
        num = spherical_mixed_norm(SpaceTimeSample(times, _bundles(radii, params.d, u_part)), 2, p)
        out.append(num / den)
    return np.asarray(out)


def theorem3_scan(params, p, r, trials, seed, disc=None, ensemble=None, drift=True):
    """Ensemble ratios ``||int_0^t e^{i(t-s)D^a} P_0 g ds||_{L_t^2 L_rho^p L_omega^2} / ||g||_{L_t^2 L_rho^{r'} L_omega^2}``.

    Trial forcings carry degrees 0 and 1 (one harmonic each). Their
    frequency profiles are ``chi_0(rho) sum c_{im} b_i(s) P_m(rho)`` with
    smooth time bumps ``b_i`` inside ``[0, disc.support]`` and complex
    Gaussian ``c``; the retarded integral is the trapezoid recursion per
    frequency node.

    Parameters
    ----------
    params : DispersionParams
    p, r : exponent
        Both strictly above :func:`theorem3_threshold`.
    trials : int
    seed : int
    disc : DuhamelDiscretization, optional
    ensemble : ndarray, optional
        Explicit coefficients ``(trials, 2, bumps, modes)``; overrides the seeded draw.
    drift : bool

    Returns
    -------
    ScanTable
        One row keyed ``"ensemble-max"``; per-trial ratios in ``trials``.

    Raises
    ------
    PreconditionError
        ``d <= d_a`` or an exponent at or below the threshold.
    """
    if params.d <= params.d_a:
        raise PreconditionError(f"the inhomogeneous scan needs d > d_a (d={params.d}, d_a={params.d_a})")
    limit = theorem3_threshold(params)
    p, r = as_exponent(p), as_exponent(r)
    for name, e in (("p", p), ("r", r)):
        if not e > limit:
            raise PreconditionError(f"exponent {name}={e} must exceed the threshold {limit}")
    disc = disc or DuhamelDiscretization()
    if ensemble is None:
        rng = np.random.default_rng(seed)
        shape = (trials, len(THEOREM3_DEGREES), disc.bumps, disc.modes)
        ensemble = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ensemble = np.asarray(ensemble, dtype=complex)
    r_dual = dual_exponent(r)
    ratios = _t3_ratio(params, disc, ensemble, p, r_dual)
    best = float(np.max(ratios)) if ratios.size else 0.0
    ref_drift = win_drift = float("nan")
    if drift and best > 0:
        fine = float(np.max(_t3_ratio(params, disc.refined(), ensemble, p, r_dual, refine=True)))
        wide = float(np.max(_t3_ratio(params, disc.doubled(), ensemble, p, r_dual)))
        ref_drift = abs(fine - best) / fine
        win_drift = abs(wide - best) / wide
    settings = dict(window=disc.window, dt=disc.dt, dr=disc.dr, support=disc.support,
                    bumps=disc.bumps, modes=disc.modes, p=str(p), r=str(r))
    return ScanTable("theorem3-scan", ["ensemble-max"], [best], [ref_drift], [win_drift], seed,
                     settings, ratios)
