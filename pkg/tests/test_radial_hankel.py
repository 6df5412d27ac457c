import math

import numpy as np
import pytest
from scipy import integrate, special

from strichlab.bessel import bessel_j, bessel_j_poisson
from strichlab.errors import DomainError, InvalidInputError, RangeError, ResolutionError
from strichlab.radial_hankel import (
    HarmonicIndex,
    RadialProfile,
    bessel_tail_threshold,
    harmonic_count,
    operator_norm_lower_bound,
    s_nu_j,
    t_a_nu,
)
from strichlab.spectral_core import FREQUENCY, DispersionParams, SpectralField, UniformGrid, chi, propagate


def bump_profile(weight=lambda r: 1.0, width=0.05):
    return RadialProfile.on_interval(0.625, 1.6, lambda r: weight(r) * chi(0, r), width)


# --- Bessel -------------------------------------------------------------

@pytest.mark.parametrize("r", [1.0, 10.0, 100.0])
def test_bessel_half_integer(r):
    assert bessel_j(0.5, r) == pytest.approx(math.sqrt(2 / (math.pi * r)) * math.sin(r), abs=1e-13)


def test_bessel_at_zero():
    assert bessel_j(0, 0.0) == 1.0
    for nu in (0.5, 1, 7.3):
        assert bessel_j(nu, 0.0) == 0.0


def test_bessel_envelope():
    with pytest.raises(RangeError):
        bessel_j(201, 1.0)
    with pytest.raises(RangeError):
        bessel_j(1, 1.0e4 + 1)
    with pytest.raises(RangeError):
        bessel_j(-0.5, 1.0)


def test_bessel_against_scipy_envelope():
    rng = np.random.default_rng(0)
    nu = rng.uniform(0, 50, 400)
    r = rng.uniform(0, 200, 400)
    err = max(abs(bessel_j(n, x) - special.jv(n, x)) for n, x in zip(nu, r))
    assert err < 1e-10
    nu = rng.uniform(0, 200, 200)
    r = rng.uniform(0, 1e4, 200)
    err = max(abs(bessel_j(n, x) - special.jv(n, x)) for n, x in zip(nu, r))
    assert err < 1e-8


def test_bessel_poisson_random():
    rng = np.random.default_rng(1)
    nu = rng.uniform(0, 10, 200)
    r = rng.uniform(0, 20, 200)
    err = max(abs(bessel_j(n, x) - bessel_j_poisson(n, x)) for n, x in zip(nu, r))
    assert err < 1e-10


def test_bessel_recurrence_residual():
    r = np.linspace(0.1, 300, 3001)
    for nu in (1.0, 2.5, 10.0, 40.0):
        res = bessel_j(nu - 1, r) + bessel_j(nu + 1, r) - 2 * nu / r * bessel_j(nu, r)
        assert np.max(np.abs(res)) < 1e-9


def test_bessel_small_argument_bound():
    for nu in (0.5, 3.0, 12.0, 60.0):
        r = np.linspace(0, math.sqrt(nu + 1), 200)
        bound = np.exp(nu * np.log(np.maximum(r, 1e-300) / 2) - math.lgamma(nu + 1)) * (1 + r**2)
        assert np.all(np.abs(bessel_j(nu, r)) <= bound + 1e-300)


# --- harmonics ------------------------------------------------------------

def test_harmonic_count():
    for d in range(2, 8):
        assert harmonic_count(d, 0) == 1
    for k in range(1, 20):
        assert harmonic_count(2, k) == 2
        assert harmonic_count(3, k) == 2 * k + 1
    assert harmonic_count(4, 3) == 16
    idx = HarmonicIndex(3, 5)
    assert idx.nu == 4.5
    assert HarmonicIndex(4, 5).nu - idx.nu == 1
    with pytest.raises(InvalidInputError):
        HarmonicIndex(0, 1)


# --- profiles ---------------------------------------------------------------

def test_profile_quadrature_refinement():
    h = bump_profile(lambda r: np.cos(3 * r))
    coarse = h.integral()
    fine = h.refine().integral()
    assert abs(coarse - fine) <= 1e-8 * abs(fine)


def test_profile_validation():
    with pytest.raises(InvalidInputError):
        RadialProfile([1.0, 0.5], [1, 1], [0, 0])
    with pytest.raises(InvalidInputError):
        RadialProfile([0.5, 1.0], [1, -1], [0, 0])


# --- T_a^nu -----------------------------------------------------------------

def test_t_a_nu_zero():
    h = bump_profile(lambda r: 0 * r)
    out = t_a_nu(h, DispersionParams(2, 3), 0.5, [0, 1], [1, 2])
    assert np.all(out == 0)


def test_t_a_nu_r_zero_singular():
    with pytest.raises(DomainError):
        t_a_nu(bump_profile(), DispersionParams(2, 3), 0.5, [0], [0.0, 1.0])


def test_t_a_nu_linearity():
    p = DispersionParams(1.5, 3)
    h1 = bump_profile(lambda r: r)
    h2 = bump_profile(lambda r: np.sin(5 * r))
    alpha = 0.3 - 1.7j
    both = h1.with_values(alpha * h1.values + h2.values)
    times, radii = [0.0, 1.0, 3.0], np.linspace(0.5, 10, 20)
    lhs = t_a_nu(both, p, 1.5, times, radii, check=False)
    rhs = alpha * t_a_nu(h1, p, 1.5, times, radii, check=False) + t_a_nu(h2, p, 1.5, times, radii, check=False)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


def test_t_a_nu_fourier_bessel_oracle():
    p = DispersionParams(2, 3)
    nu = 1.5
    h = bump_profile(lambda r: 1 + r, width=0.02)
    radii = np.array([0.7, 2.0, 5.5, 11.0])
    out = t_a_nu(h, p, nu, [0.0], radii)[0]

    def integrand(rho, r):
        return special.jv(nu, r * rho) * rho**0.0 * (1 + rho) * chi(0, rho)

    for r, val in zip(radii, out):
        ref = r**-0.5 * integrate.quad(integrand, 0.625, 1.6, args=(r,), epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        assert abs(val - ref) <= 1e-8 * max(abs(ref), 1e-3)


def test_t_a_nu_against_grid_propagator():
    # radial f with F f(xi) = G(|xi|): exp(itD^2) f on rays equals (2 pi)^{-3/2} T^{1/2}(rho^{3/2} G)
    p = DispersionParams(2, 3)
    grid = UniformGrid(3, 128, 64.0)
    f = SpectralField(grid, chi(0, grid.frequency_magnitude()), FREQUENCY)
    h = bump_profile(lambda r: r**1.5)
    n = grid.points_per_axis // 2
    idx = np.arange(n + 1, n + 20)
    radii = grid.axis()[idx]
    for t in (0.0, 2.0, 5.0):
        u = propagate(f, t, p).to_physical().values[idx, n, n]
        ref = t_a_nu(h, p, 0.5, [t], radii)[0] * (2 * np.pi) ** -1.5
        assert np.max(np.abs(u - ref)) <= 1e-3 * np.max(np.abs(ref))


def test_t_a_nu_resolution_error():
    h = bump_profile(width=0.3)
    with pytest.raises(ResolutionError):
        t_a_nu(h, DispersionParams(2, 3), 0.5, [200.0], [1.0])


# --- S_j^nu -------------------------------------------------------------------

def test_s_nu_j_zero():
    h = bump_profile(lambda r: 0 * r)
    assert s_nu_j(h, DispersionParams(2, 3), 0.5, 1, np.linspace(-4, 4, 41)) == 0.0


@pytest.mark.parametrize("j", [0, 1, 2])
def test_s_nu_j_bessel_tail_collapse(j):
    h = bump_profile(lambda r: np.exp(1j * r))
    times = np.linspace(-4, 4, 81)
    nu = bessel_tail_threshold(j)
    assert s_nu_j(h, DispersionParams(2, 3), nu, j, times) <= 1e-6 * h.l2_norm()


def test_s_nu_j_monotone_in_nu():
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    h = bump_profile(lambda r: np.polynomial.polynomial.polyval(r, coeffs), width=0.02)
    times = np.linspace(-8, 8, 161)
    j, p = 3, DispersionParams(2, 3)
    vals = [s_nu_j(h, p, nu, j, times) for nu in (0.5, 1.5, 2.5, 3.5)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("j", [0, 1])
def test_s_nu_j_lower_bounds_decay_beyond_two(j):
    dom = RadialProfile.on_interval(0.625, 1.6, lambda r: chi(0, r), 0.02)
    times = np.linspace(-8, 8, 161)
    p = DispersionParams(2, 3)
    bounds = [operator_norm_lower_bound(lambda h: s_nu_j(h, p, nu, j, times), 16, 0, dom)
              for nu in (2.5, 3.5, 4.5, 5.5, 6.5)]
    assert all(b <= a for a, b in zip(bounds, bounds[1:]))


# --- operator norm lower bounds ---------------------------------------------

def _domain():
    return bump_profile(width=0.25)


def test_norm_bound_identity_and_homogeneity():
    dom = _domain()
    one = operator_norm_lower_bound(lambda h: h, 16, 5, dom)
    two = operator_norm_lower_bound(lambda h: h.with_values(2 * h.values), 16, 5, dom)
    assert 0.99 < one <= 1.0 + 1e-14
    assert two == 2 * one


def test_norm_bound_projection():
    dom = RadialProfile.on_interval(0.625, 1.6, lambda r: 1 + 0 * r, max_width=1.0, order=8)

    def first_node(h):
        vals = np.zeros_like(h.values)
        vals[0] = h.values[0]
        return h.with_values(vals)

    series = [operator_norm_lower_bound(first_node, n, 11, dom) for n in (8, 16, 32, 64)]
    assert all(b >= a for a, b in zip(series, series[1:]))
    assert series[-1] >= 0.5
    with pytest.raises(InvalidInputError):
        operator_norm_lower_bound(first_node, 4, 11, dom)
