import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import levy_stable

from strichlab.errors import DomainError, InvalidInputError, RangeError
from strichlab.levy_kernels import (
    DeltaApproximant,
    StableDensitySpec,
    characteristic_check,
    closed_form_constant,
    closed_form_k,
    divergence_scan,
    k_hat,
    khat_density,
    khat_density_at_zero,
    stable_density,
    stable_density_radial,
    tail_series,
)
from strichlab.spectral_core import DispersionParams

X = np.linspace(-10, 10, 401)


def test_gaussian_closed_form():
    f = stable_density(StableDensitySpec(2, 1), X)
    assert np.max(np.abs(f - np.exp(-X**2 / 4) / np.sqrt(4 * np.pi))) < 1e-12


def test_cauchy_closed_form():
    f = stable_density(StableDensitySpec(1, 1), X)
    assert np.max(np.abs(f - 1 / (np.pi * (1 + X**2)))) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 4])
def test_poisson_kernel_higher_dim(d):
    r = np.array([0.0, 0.05, 0.5, 2.0, 10.0, 40.0, 200.0, 900.0])
    f = stable_density_radial(1, d, r)
    exact = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2) * (1 + r**2) ** (-(d + 1) / 2)
    assert np.max(np.abs(f - exact) / exact) < 1e-10


@pytest.mark.parametrize("a", [0.5, 1.2, 1.5, 1.9])
def test_one_dim_against_independent_library(a):
    # scipy's symmetric stable law with unit scale has characteristic function exp(-|u|^a)
    xs = np.array([0.01, 0.3, 1.0, 3.0, 10.0, 50.0, 300.0, 1000.0])
    ref = levy_stable.pdf(xs, a, 0)
    assert np.max(np.abs(stable_density_radial(a, 1, xs) - ref) / ref) < 1e-7


@pytest.mark.parametrize("a", [0.5, 1.5])
def test_tail_series_matches_far_field(a):
    xs = np.array([100.0, 300.0, 1000.0])
    f = stable_density_radial(a, 1, xs)
    assert np.max(np.abs(f - tail_series(a, 1, xs)) / f) < 1e-6


def test_tail_band_a15():
    xs = np.linspace(10, 100, 91)
    ratio = stable_density(StableDensitySpec(1.5, 1), xs) * (1 + xs) ** 2.5
    assert 0.1 < ratio.min() and ratio.max() < 1.0
    assert ratio.max() / ratio.min() < 2.0


def test_positivity_and_self_similarity():
    rng = np.random.default_rng(0)
    for a in (0.5, 1.0, 1.5, 2.0):
        for d in (1, 2, 3):
            reach = 10 if a == 2 else 30  # keep the Gaussian above underflow
            pts = rng.uniform(-reach, reach, size=(20, d))
            for t in (0.5, 3.0):
                spec = StableDensitySpec(a, d, t)
                x = pts[:, 0] if d == 1 else pts
                f = stable_density(spec, x)
                assert np.all(f > 0)
                unit = stable_density(StableDensitySpec(a, d, 1.0), np.asarray(x) * t ** (-1 / a))
                assert np.max(np.abs(f - t ** (-d / a) * unit) / f) < 1e-10


def test_density_errors():
    with pytest.raises(DomainError):
        StableDensitySpec(2.5, 1)
    with pytest.raises(DomainError):
        StableDensitySpec(0.0, 1)
    with pytest.raises(RangeError):
        stable_density(StableDensitySpec(1, 1), 1e4)
    with pytest.raises(InvalidInputError):
        stable_density(StableDensitySpec(1, 3), [1.0, 2.0])


def test_characteristic_examples():
    assert characteristic_check(StableDensitySpec(1.3, 1), [0.0]) == pytest.approx(1.0, abs=1e-10)
    assert characteristic_check(StableDensitySpec(2, 1, 1.0), [1.0]) == pytest.approx(math.exp(-1), abs=1e-8)
    val = characteristic_check(StableDensitySpec(0.5, 1, 2.0), [3.0])
    assert abs(val - math.exp(-2 * math.sqrt(3))) < 1e-6


@pytest.mark.parametrize("a", [0.5, 1.0, 1.3, 2.0])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_unit_mass(a, d):
    val = characteristic_check(StableDensitySpec(a, d, 0.7), np.zeros(d))
    assert abs(val - 1) < 1e-8


def test_unit_mass_by_direct_integration():
    # independent of the tail series: adaptive quadrature of the density itself
    f = lambda x: stable_density_radial(1.5, 1, np.array([x]))[0]
    head = integrate.quad(f, 0, 200, limit=400, epsabs=1e-13)[0]
    tail = integrate.quad(f, 200, np.inf, limit=400, epsabs=1e-14)[0]
    assert abs(2 * (head + tail) - 1) < 1e-8


def test_semigroup_in_frequency():
    for a in (0.5, 1.5):
        for eta in (0.4, 2.0):
            prod = characteristic_check(StableDensitySpec(a, 1, 0.5), [eta]) * characteristic_check(
                StableDensitySpec(a, 1, 1.5), [eta]
            )
            assert abs(prod - characteristic_check(StableDensitySpec(a, 1, 2.0), [eta])) < 1e-8


def test_characteristic_multidim_direction():
    spec = StableDensitySpec(1.3, 3, 1.0)
    val = characteristic_check(spec, [0.3, -0.4, 1.2])
    assert abs(val - math.exp(-(1.3**1.3))) < 1e-8


# --- K_h ------------------------------------------------------------------------

P23 = DispersionParams(2, 3)


def test_khat_tau_zero_integrand():
    h = DeltaApproximant(0.3)
    rho = np.geomspace(1e-3, 30.0, 500)
    for p in (P23, DispersionParams(1, 4), DispersionParams(1.5, 3)):
        general = khat_density(rho, 0.0, h, p)
        simple = khat_density_at_zero(rho, h, p)
        # (0 - |xi|^a)^2 + |xi|^(2a) = 2 |xi|^(2a)
        assert np.max(np.abs(2 * general - simple) / simple) < 1e-12


def test_khat_epsilon_one_stable_and_positive():
    h = DeltaApproximant(1.0)
    coarse = k_hat(h, P23, 0.0)
    fine = k_hat(h, P23, 0.0, rtol=1e-13)
    assert coarse > 0
    assert abs(coarse - fine) <= 1e-6 * fine
    ref = integrate.quad(
        lambda r: 4 * np.pi * r**2 * khat_density(r, 0.0, h, P23), 0, np.inf, limit=400, epsrel=1e-12
    )[0]
    assert coarse == pytest.approx(ref, rel=1e-8)


def test_khat_monotone_in_eps():
    vals = [k_hat(DeltaApproximant(e), P23, 0.0) for e in (0.05, 0.1, 0.5, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_khat_continuous_positive_in_tau():
    h = DeltaApproximant(0.2)
    taus = np.linspace(0, 4, 41)
    vals = np.array([k_hat(h, P23, t) for t in taus])
    assert np.all(vals > 0)
    assert np.max(np.abs(np.diff(vals))) < 0.1 * vals.max()


def test_khat_domain():
    with pytest.raises(DomainError):
        k_hat(DeltaApproximant(1.0), DispersionParams(2, 2), 0.0)
    with pytest.raises(DomainError):
        k_hat(DeltaApproximant(1.0), P23, -1.0)


@pytest.mark.parametrize("a,d", [(2, 3), (1, 4)])
def test_divergence_scan(a, d):
    fit = divergence_scan(DispersionParams(a, d), [2.0**-k for k in range(3, 11)])
    assert fit.slope > 0
    assert fit.r_squared >= 0.99
    assert not fit.degenerate
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    # asymptotic slope: half the sphere area (the tau = 0 denominator is 2|xi|^(2a))
    assert fit.slope == pytest.approx(area / 2, rel=0.02)


def test_divergence_scan_degenerate_and_span():
    fit = divergence_scan(P23, [0.1, 0.1, 0.1])
    assert fit.degenerate and fit.slope == 0.0
    with pytest.raises(InvalidInputError):
        divergence_scan(P23, [0.1, 0.05])


# --- closed-form kernel ---------------------------------------------------------

def test_closed_form_t_zero():
    p = DispersionParams(1.3, 2)
    num, exact = closed_form_k(p, 0.8, 0.2, p.a - p.d - 0.2, 0.0)
    assert num.real > 0 and abs(num.imag) < 1e-15
    assert abs(num - 1 / (closed_form_constant(p) * 0.8)) <= 1e-8 * abs(num)


@pytest.mark.parametrize("t", [0.5, 2.0, 8.0])
def test_closed_form_times(t):
    p = DispersionParams(1.3, 2)
    num, exact = closed_form_k(p, 1.0, 0.0, p.a - p.d, t)
    assert abs(num - exact) <= 1e-6 * abs(exact)
    c = closed_form_constant(p)
    assert abs(num.imag - t / (c * (1 + t * t))) < 1e-6


def test_closed_form_gamma_cancels():
    p = DispersionParams(2, 2)
    base = closed_form_k(p, 0.5, 0.3, -0.3, 2.0)[0]
    for gamma in (-1.0, 2.5):
        assert abs(closed_form_k(p, 0.5, 0.3, -0.3, 2.0, gamma=gamma)[0] - base) <= 1e-13 * abs(base)


def test_closed_form_invalid_pair():
    p = DispersionParams(2, 2)
    with pytest.raises(InvalidInputError):
        closed_form_k(p, 1.0, 0.3, 0.3, 1.0)
    with pytest.raises(InvalidInputError):
        closed_form_k(p, 1.0, -2.5, 2.5, 1.0)
