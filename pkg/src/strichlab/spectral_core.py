"""Uniform periodic grids, Fourier multipliers and Littlewood-Paley pieces.

Conventions
-----------
The continuous transform is ``F f(xi) = int exp(-i x.xi) f(x) dx``. On the
grid ``x_j = -L + j dx`` it is approximated by the Riemann sum, so the
frequency-space samples are ``dx**d * fft(f)`` times the phase of the left
edge, ``exp(i xi L) = (-1)**m`` for ``xi = m pi / L``. With this scaling
``||f||_2 = (2 pi)**(-d/2) ||F f||_2`` holds with the natural quadrature
weights on both sides.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError, ResolutionError, SingularSymbolError
from .quadrature import panel_rule

PHYSICAL = "physical"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class UniformGrid:
    """The periodic box ``[-L, L)**dim`` with ``points_per_axis`` samples per axis."""

    dim: int
    points_per_axis: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidInputError(f"grid dimension must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if n < 8 or n & (n - 1):
            raise InvalidInputError(f"points_per_axis must be a power of two >= 8, got {n}")
        if not self.half_width > 0:
            raise InvalidInputError("half_width must be positive")

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def dx(self):
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def dxi(self):
        return math.pi / self.half_width

    @property
    def nyquist(self):
        """Largest resolved frequency along an axis, ``N pi / (2L)``."""
        return self.points_per_axis * math.pi / (2.0 * self.half_width)

    def axis(self):
        return -self.half_width + self.dx * np.arange(self.points_per_axis)

    def frequency_axis(self):
        return 2.0 * math.pi * np.fft.fftfreq(self.points_per_axis, d=self.dx)

    def coordinates(self):
        """Meshgrid of physical coordinates, one array per axis."""
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")

    def radius(self):
        return _radius(self)

    def frequency_magnitude(self):
        """``|xi|`` on the FFT-ordered frequency grid (read-only, cached)."""
        return _frequency_magnitude(self)

    def edge_phase(self):
        return _edge_phase(self)

    def refined(self, factor=2):
        """Same box with ``factor`` times as many points per axis."""
        return UniformGrid(self.dim, self.points_per_axis * factor, self.half_width)


@lru_cache(maxsize=32)
def _frequency_magnitude(grid):
    axes = [grid.frequency_axis()] * grid.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    out = np.sqrt(sum(m * m for m in mesh))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=32)
def _radius(grid):
    mesh = grid.coordinates()
    out = np.sqrt(sum(m * m for m in mesh))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=32)
def _edge_phase(grid):
    m = np.fft.fftfreq(grid.points_per_axis, d=1.0 / grid.points_per_axis).astype(int)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    out = sign
    for _ in range(grid.dim - 1):
        out = np.multiply.outer(out, sign)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DispersionParams:
    """Dispersion exponent ``a`` of ``D**a`` and spatial dimension ``d``."""

    a: float
    d: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise InvalidInputError(f"dispersion exponent a must be positive, got {self.a}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError(f"dimension d must be a positive integer, got {self.d}")

    @property
    def d_a(self):
        """3 for the wave case ``a == 1``, otherwise 2."""
        return 3 if self.a == 1 else 2

    @property
    def s_c(self):
        """Scaling-critical Sobolev index ``(d - a) / 2``."""
        return 0.5 * (self.d - self.a)


class SpectralField:
    """Complex samples of a function on a :class:`UniformGrid`.

    ``space`` says whether ``values`` holds physical samples or the scaled
    frequency samples described in the module docstring. Conversions return
    new objects; the stored array is never modified in place.
    """

    __slots__ = ("grid", "values", "space")

    def __init__(self, grid, values, space=PHYSICAL):
        values = np.asarray(values, dtype=complex)
        if values.shape != grid.shape:
            raise InvalidInputError(f"values shape {values.shape} does not match grid {grid.shape}")
        if space not in (PHYSICAL, FREQUENCY):
            raise InvalidInputError(f"unknown space flag {space!r}")
        self.grid = grid
        self.values = values
        self.space = space

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(*coords)`` in physical space."""
        return cls(grid, fn(*grid.coordinates()), PHYSICAL)

    @classmethod
    def from_symbol(cls, grid, fn):
        """Frequency-space field ``fn(xi_1, ..., xi_d)`` on the FFT-ordered grid."""
        axes = [grid.frequency_axis()] * grid.dim
        return cls(grid, fn(*np.meshgrid(*axes, indexing="ij")), FREQUENCY)

    def to_frequency(self):
        if self.space == FREQUENCY:
            return self
        g = self.grid
        vals = np.fft.fftn(self.values) * (g.dx ** g.dim) * g.edge_phase()
        return SpectralField(g, vals, FREQUENCY)

    def to_physical(self):
        if self.space == PHYSICAL:
            return self
        g = self.grid
        vals = np.fft.ifftn(self.values * g.edge_phase()) / (g.dx ** g.dim)
        return SpectralField(g, vals, PHYSICAL)

    def in_space(self, space):
        return self.to_frequency() if space == FREQUENCY else self.to_physical()

    def l2_norm(self):
        """Discrete L2 norm, computed in whichever space the field is stored."""
        g = self.grid
        sq = float(np.sum(np.abs(self.values) ** 2))
        if self.space == PHYSICAL:
            return math.sqrt(sq * g.dx ** g.dim)
        return math.sqrt(sq * g.dxi ** g.dim) / (2.0 * math.pi) ** (0.5 * g.dim)

    def sup_norm(self):
        return float(np.max(np.abs(self.to_physical().values)))

    def with_values(self, values):
        return SpectralField(self.grid, values, self.space)

    def __repr__(self):
        return f"SpectralField(grid={self.grid}, space={self.space!r})"


def _require_finite(f):
    if not np.all(np.isfinite(f.values)):
        raise InvalidInputError("field contains non-finite samples")


def apply_multiplier(f, symbol):
    """Multiply ``F f`` by ``symbol`` (same shape, FFT order); keep ``f.space``."""
    fh = f.to_frequency()
    out = SpectralField(f.grid, fh.values * symbol, FREQUENCY)
    return out.in_space(f.space)


def propagator_symbol(grid, t, params):
    """``exp(i t |xi|**a)``; the value at ``xi = 0`` is 1 since ``|0|**a = 0``."""
    return np.exp(1j * t * grid.frequency_magnitude() ** params.a)


def propagate(f, t, params):
    """Free evolution ``exp(i t D**a) f``.

    Parameters
    ----------
    f : SpectralField
    t : float
    params : DispersionParams
        ``params.d`` must equal ``f.grid.dim``.

    Returns
    -------
    SpectralField
        In the same space as ``f``.
    """
    _require_finite(f)
    if params.d != f.grid.dim:
        raise InvalidInputError(f"params.d={params.d} but grid has dim {f.grid.dim}")
    if t == 0:
        return f
    return apply_multiplier(f, propagator_symbol(f.grid, t, params))


def _zero_mode_is_negligible(fh):
    vals = fh.values
    scale = np.max(np.abs(vals))
    return abs(vals.flat[0]) <= 1e-12 * scale if scale > 0 else True


def derivative_symbol(grid, s, inhomogeneous=False):
    """``|xi|**s`` (zero at the origin for ``s != 0``) or ``(1+|xi|^2)**(s/2)``."""
    xi = grid.frequency_magnitude()
    if inhomogeneous:
        return (1.0 + xi * xi) ** (0.5 * s)
    if s == 0:
        return np.ones_like(xi)
    out = np.zeros_like(xi)
    nz = xi > 0
    out[nz] = xi[nz] ** s
    return out


def fractional_derivative(f, s, inhomogeneous=False):
    """Apply ``D**s`` (homogeneous) or ``<D>**s`` (inhomogeneous).

    Raises
    ------
    SingularSymbolError
        Homogeneous ``s < 0`` on data with a non-vanishing zero mode.
    """
    _require_finite(f)
    if s == 0:
        return f
    fh = f.to_frequency()
    if not inhomogeneous and s < 0 and not _zero_mode_is_negligible(fh):
        raise SingularSymbolError(f"|xi|^{s} is singular at xi=0 and the field has nonzero mean")
    out = SpectralField(f.grid, fh.values * derivative_symbol(f.grid, s, inhomogeneous), FREQUENCY)
    return out.in_space(f.space)


def sobolev_norm(f, s, homogeneous=True):
    """``||D**s f||_2`` or ``||<D>**s f||_2`` evaluated in frequency space."""
    _require_finite(f)
    fh = f.to_frequency()
    if homogeneous and s < 0 and not _zero_mode_is_negligible(fh):
        raise SingularSymbolError(f"|xi|^{s} is singular at xi=0 and the field has nonzero mean")
    sym = derivative_symbol(f.grid, s, inhomogeneous=not homogeneous)
    return SpectralField(f.grid, fh.values * sym, FREQUENCY).l2_norm()


# --- the cutoff eta ------------------------------------------------------

ETA_PLATEAU = 1.25
ETA_SUPPORT = 1.6
_BUMP_PANELS = 128
_BUMP_ORDER = 16

ETA_FORMULA = (
    "eta(r) = 1 for r <= 5/4, 0 for r >= 8/5, else 1 - B((r - 5/4)/(8/5 - 5/4)) with "
    "B(u) = int_0^u psi / int_0^1 psi, psi(v) = exp(-1/(4 v (1 - v))); "
    f"B by {_BUMP_PANELS}-panel {_BUMP_ORDER}-point Gauss-Legendre"
)


def _psi(v):
    inside = (v > 0) & (v < 1)
    arg = np.where(inside, 4.0 * v * (1.0 - v), 1.0)
    return np.where(inside, np.exp(-1.0 / arg), 0.0)


@lru_cache(maxsize=1)
def _bump_table():
    edges = np.linspace(0.0, 1.0, _BUMP_PANELS + 1)
    nodes, weights = panel_rule(edges, _BUMP_ORDER)
    per_panel = (weights * _psi(nodes)).reshape(_BUMP_PANELS, _BUMP_ORDER).sum(axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(per_panel)])
    return edges, cumulative


def _bump_cdf(u):
    """Normalized integral of the bump from 0 to ``u`` (``u`` clipped to [0, 1])."""
    from .quadrature import gauss_legendre

    edges, cumulative = _bump_table()
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    idx = np.minimum((u * _BUMP_PANELS).astype(int), _BUMP_PANELS - 1)
    left = edges[idx]
    x, w = gauss_legendre(_BUMP_ORDER)
    half = 0.5 * (u - left)
    pts = (left + half)[..., None] + half[..., None] * x
    partial = np.sum(_psi(pts) * w, axis=-1) * half
    return (cumulative[idx] + partial) / cumulative[-1]


def eta(r):
    """The smooth cutoff: 1 on ``|r| <= 5/4``, 0 on ``|r| >= 8/5``, monotone between."""
    r = np.abs(np.asarray(r, dtype=float))
    u = (r - ETA_PLATEAU) / (ETA_SUPPORT - ETA_PLATEAU)
    out = 1.0 - _bump_cdf(u)
    out = np.where(r <= ETA_PLATEAU, 1.0, out)
    out = np.where(r >= ETA_SUPPORT, 0.0, out)
    return out if out.ndim else float(out)


def chi(k, r):
    """Annular cutoff ``eta(r / 2**k) - eta(r / 2**(k-1))``."""
    r = np.asarray(r, dtype=float)
    return eta(r / 2.0 ** k) - eta(r / 2.0 ** (k - 1))


def chi_low(k, r):
    """Ball cutoff ``eta(r / 2**k)``."""
    return eta(np.asarray(r, dtype=float) / 2.0 ** k)


@dataclass(frozen=True)
class CutoffBank:
    """Dyadic bands ``k_min..k_max`` built from :func:`eta`."""

    k_min: int
    k_max: int
    formula: str = ETA_FORMULA

    def __post_init__(self):
        if self.k_max < self.k_min:
            raise InvalidInputError("k_max must be >= k_min")

    @property
    def bands(self):
        return range(self.k_min, self.k_max + 1)

    def chi(self, k, r):
        return chi(k, r)

    def chi_low(self, k, r):
        return chi_low(k, r)

    @staticmethod
    def annulus(k):
        """Closed support interval of ``chi(k, .)``."""
        return (0.625 * 2.0 ** k, 1.6 * 2.0 ** k)

    @staticmethod
    def plateau(k):
        """Interval where ``chi(k, .) == 1``."""
        return (0.8 * 2.0 ** k, 1.25 * 2.0 ** k)


def _check_band(grid, k):
    top = ETA_SUPPORT * 2.0 ** k
    if top >= grid.nyquist:
        raise ResolutionError(
            f"band k={k} reaches |xi|={top:g}, not below the grid Nyquist frequency {grid.nyquist:g}"
        )


def lp_project(f, k, bank=None):
    """Littlewood-Paley piece ``P_k f``."""
    _check_band(f.grid, k)
    return apply_multiplier(f, chi(k, f.grid.frequency_magnitude()))


def lp_low(f, k, bank=None):
    """Low-frequency part ``P_{<=k} f``."""
    _check_band(f.grid, k)
    return apply_multiplier(f, chi_low(k, f.grid.frequency_magnitude()))


def lp_decompose(f, bank):
    """``[P_{<=k_min-1} f, P_{k_min} f, ..., P_{k_max} f]`` in frequency space."""
    fh = f.to_frequency()
    pieces = [lp_low(fh, bank.k_min - 1)]
    pieces.extend(lp_project(fh, k) for k in bank.bands)
    return pieces


# --- diagnostics for sup norms on periodic grids ------------------------

def upsample(f, factor=2):
    """Band-limited interpolation onto a grid with ``factor`` x points per axis."""
    g = f.grid
    fine = g.refined(factor)
    fh = f.to_frequency().values
    n, m = g.points_per_axis, fine.points_per_axis
    freq_c = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    idx = np.where(freq_c >= 0, freq_c, m + freq_c)
    out = np.zeros(fine.shape, dtype=complex)
    out[np.ix_(*([idx] * g.dim))] = fh
    return SpectralField(fine, out, FREQUENCY).in_space(f.space)


def sup_norm_refined(f, factor=2):
    """Grid maximum, refined-grid maximum and their relative drift."""
    coarse = f.sup_norm()
    fine = upsample(f, factor).sup_norm()
    drift = abs(fine - coarse) / fine if fine > 0 else 0.0
    return coarse, fine, drift


def boundary_mass_fraction(f, radius_fraction=0.5):
    """Fraction of ``||f||_2**2`` outside ``|x| <= radius_fraction * L``."""
    phys = f.to_physical()
    dens = np.abs(phys.values) ** 2
    total = float(dens.sum())
    if total == 0:
        return 0.0
    outside = phys.grid.radius() > radius_fraction * phys.grid.half_width
    return float(dens[outside].sum()) / total
