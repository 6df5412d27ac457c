"""Exponent arithmetic, admissibility predicates and space-time norms.

Exponents live in ``[2, inf]`` and are held exactly: finite values as
:class:`fractions.Fraction`, infinity as the singleton :data:`INF`.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError
from .radial_hankel import HarmonicIndex
from .spectral_core import DispersionParams, SpectralField


class _Infinity:
    """The exponent ``inf``; compares above every finite exponent."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("strichlab-inf")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def as_exponent(value):
    """Convert ``value`` to an exact exponent.

    Accepts ``INF``, ``float('inf')``, the strings ``"inf"``/``"infinity"``,
    integers, Fractions, strings like ``"10/3"`` and floats (taken at their
    exact binary value).
    """
    if value is INF:
        return INF
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf", "∞"):
            return INF
        try:
            return Fraction(text)
        except ValueError as exc:
            raise InvalidInputError(f"cannot parse exponent {value!r}") from exc
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return INF
        if not math.isfinite(value):
            raise InvalidInputError(f"exponent must be finite or +inf, got {value}")
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"cannot interpret {value!r} as an exponent") from exc


def reciprocal(e):
    e = as_exponent(e)
    return Fraction(0) if e is INF else 1 / e


def exponent_to_float(e):
    e = as_exponent(e)
    return math.inf if e is INF else float(e)


def check_exponent(name, value):
    e = as_exponent(value)
    if e is not INF and e < 2:
        raise InvalidInputError(f"exponent {name}={value} violates the bound 2 <= {name} <= inf")
    return e


@dataclass(frozen=True)
class AdmissibilityQuery:
    params: DispersionParams
    q: object
    p: object

    def __post_init__(self):
        object.__setattr__(self, "q", check_exponent("q", self.q))
        object.__setattr__(self, "p", check_exponent("p", self.p))


def is_admissible(query):
    """Frequency-localized Strichartz range:
    ``1/q <= ((d - d_a + 2)/2)(1/2 - 1/p)`` minus the triple ``(2, inf, d_a)``."""
    d, d_a = query.params.d, query.params.d_a
    if query.q == 2 and query.p is INF and d == d_a:
        return False
    lhs = reciprocal(query.q)
    rhs = Fraction(d - d_a + 2, 2) * (Fraction(1, 2) - reciprocal(query.p))
    return lhs <= rhs


def radial_endpoint(d):
    """The excluded radial endpoint ``p = (4d - 2)/(2d - 3)`` paired with ``q = 2``."""
    if 2 * d - 3 == 0:
        return None
    return Fraction(4 * d - 2, 2 * d - 3)


def is_radially_admissible(query):
    """Radial Strichartz range: ``(inf, 2)`` or
    ``1/q < (d - d_a/2 + 1/2)(1/2 - 1/p)``; for ``a > 1`` equality is allowed
    except at ``(2, (4d-2)/(2d-3))``."""
    params = query.params
    if query.q is INF and query.p == 2:
        return True
    lhs = reciprocal(query.q)
    slope = Fraction(params.d) - Fraction(params.d_a, 2) + Fraction(1, 2)
    rhs = slope * (Fraction(1, 2) - reciprocal(query.p))
    if lhs < rhs:
        return True
    if lhs == rhs and params.a > 1:
        return not (query.q == 2 and query.p == radial_endpoint(params.d))
    return False


def scaling_regularity(params, q, p):
    """``s = (1/2 - 1/p) d - a/q``."""
    return float((Fraction(1, 2) - reciprocal(p)) * params.d) - params.a * float(reciprocal(q))


def theorem3_threshold(params):
    """``(4d + 2 - 2 d_a) / (2d - d_a - 1)``; exponents must exceed it."""
    d, d_a = params.d, params.d_a
    return Fraction(4 * d + 2 - 2 * d_a, 2 * d - d_a - 1)


def dual_exponent(r):
    r = as_exponent(r)
    if r is INF:
        return Fraction(1)
    if r == 1:
        return INF
    return r / (r - 1)


# --- samples ------------------------------------------------------------------

@dataclass
class AngularBundle:
    """Degree-indexed radial coefficient profiles on one physical radial grid.

    ``coefficients[i]`` has shape ``(m_i, len(radii))`` with ``m_i`` at most the
    multiplicity of ``degrees[i]``.
    """

    radii: np.ndarray
    degrees: tuple
    coefficients: tuple
    radial_weights: np.ndarray = None

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        seen = set()
        for idx in self.degrees:
            if not isinstance(idx, HarmonicIndex):
                raise InvalidInputError("degrees must be HarmonicIndex values")
            if idx.degree in seen:
                raise InvalidInputError(f"degree {idx.degree} listed twice")
            seen.add(idx.degree)
        if len(self.coefficients) != len(self.degrees):
            raise InvalidInputError("one coefficient block per degree is required")
        blocks = []
        for idx, block in zip(self.degrees, self.coefficients):
            block = np.atleast_2d(np.asarray(block, dtype=complex))
            if block.shape[-1] != self.radii.size:
                raise InvalidInputError("coefficient profiles do not match the radial grid")
            if block.shape[0] > idx.multiplicity:
                raise InvalidInputError(
                    f"degree {idx.degree} carries {block.shape[0]} profiles, more than n(k)={idx.multiplicity}"
                )
            blocks.append(block)
        self.coefficients = tuple(blocks)
        self.degrees = tuple(self.degrees)
        if self.radial_weights is None:
            self.radial_weights = trapezoid_weights(self.radii)
        self.radial_weights = np.asarray(self.radial_weights, dtype=float)

    @property
    def dim(self):
        return self.degrees[0].dim if self.degrees else None

    def angular_l2(self):
        """``(sum_{k,l} |a_k^l(r)|^2)^(1/2)`` at each radius."""
        if not self.coefficients:
            return np.zeros_like(self.radii)
        total = sum(np.sum(np.abs(b) ** 2, axis=0) for b in self.coefficients)
        return np.sqrt(total)


def trapezoid_weights(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return np.zeros_like(x)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def _is_uniform(times):
    if times.size < 3:
        return True
    steps = np.diff(times)
    return np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)


@dataclass
class SpaceTimeSample:
    """Per-time payloads (``SpectralField`` or ``AngularBundle``) on a time list."""

    times: np.ndarray
    payloads: list
    time_weights: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.payloads) != self.times.size:
            raise InvalidInputError("one payload per time is required")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("times must be strictly increasing")
        if self.time_weights is None:
            if not _is_uniform(self.times):
                raise InvalidInputError("nonuniform times need explicit weights")
            self.time_weights = trapezoid_weights(self.times)
        self.time_weights = np.asarray(self.time_weights, dtype=float)
        if self.payloads:
            first = self.payloads[0]
            if isinstance(first, SpectralField):
                if any(f.grid != first.grid for f in self.payloads):
                    raise InvalidInputError("payloads must share one grid")
            elif isinstance(first, AngularBundle):
                if any(b.radii.shape != first.radii.shape or np.any(b.radii != first.radii) for b in self.payloads):
                    raise InvalidInputError("mismatched radial grids across times")

    @property
    def uniform_step(self):
        if not _is_uniform(self.times):
            raise InvalidInputError("times are not uniform")
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def lp_norm_weighted(values, weights, p):
    """``(sum w |v|^p)^(1/p)`` along the last axis, or ``max |v|`` for ``p = INF``."""
    p = as_exponent(p)
    mag = np.abs(values)
    if p is INF:
        return np.max(mag, axis=-1) if mag.size else 0.0
    pf = float(p)
    return np.sum(weights * mag**pf, axis=-1) ** (1.0 / pf)


def time_norm(values, sample, q):
    return float(lp_norm_weighted(np.asarray(values), sample.time_weights, q))


def spatial_norm(f, p):
    """Grid ``L^p`` norm of a :class:`SpectralField`."""
    phys = f.to_physical()
    vol = phys.grid.dx ** phys.grid.dim
    return float(lp_norm_weighted(phys.values.ravel(), vol, p))


def mixed_norm(sample, q, p):
    """``|| ||u(t)||_{L^p_x} ||_{L^q_t}`` by grid sums in x and trapezoid in t."""
    if sample.payloads and not isinstance(sample.payloads[0], SpectralField):
        raise InvalidInputError("mixed_norm needs full-grid SpectralField payloads")
    per_time = [spatial_norm(f, p) for f in sample.payloads]
    return time_norm(per_time, sample, q)


def mixed_norm_sup_drift(sample, q):
    """Relative change of ``L^q_t L^inf_x`` when every payload is refined once."""
    from .spectral_core import upsample

    coarse = mixed_norm(sample, q, INF)
    fine_vals = [upsample(f).sup_norm() for f in sample.payloads]
    fine = time_norm(fine_vals, sample, q)
    return fine, abs(fine - coarse) / fine if fine > 0 else 0.0


def radial_norm(values, radii, weights, d, p):
    """``L^p(r^{d-1} dr)`` of samples on the radial grid (``INF``: grid max)."""
    return lp_norm_weighted(values, weights * radii ** (d - 1), p)


def spherical_mixed_norm(sample, q, p):
    """``L_t^q L_rho^p L_omega^2`` of a bundle-valued sample."""
    if sample.payloads and not isinstance(sample.payloads[0], AngularBundle):
        raise InvalidInputError("spherical_mixed_norm needs AngularBundle payloads")
    per_time = []
    for b in sample.payloads:
        per_time.append(float(radial_norm(b.angular_l2(), b.radii, b.radial_weights, b.dim, p)))
    return time_norm(per_time, sample, q)


def angular_smooth(bundle, s):
    """Weight each degree-``k`` block by ``(1 + k)**s``."""
    if s == 0:
        return bundle
    blocks = tuple(b * (1.0 + idx.degree) ** s for idx, b in zip(bundle.degrees, bundle.coefficients))
    return AngularBundle(bundle.radii, bundle.degrees, blocks, bundle.radial_weights)
