"""Retarded Duhamel integrals and the cubic fractional NLS ``i u_t + D^a u = |u|^2 u``.

Two independent routes to the solution are provided: Strang splitting
(:func:`nls_step`, :func:`evolve`) and Picard iteration of the Duhamel map
(:func:`picard_iterate`). Both are second order in ``dt``.
"""

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlowupError,
    ContractionFailure,
    InvalidInputError,
    PreconditionError,
)
from .mixed_norms import SpaceTimeSample
from .spectral_core import (
    FREQUENCY,
    PHYSICAL,
    DispersionParams,
    SpectralField,
    UniformGrid,
    chi,
    propagate,
    sobolev_norm,
)

# Largest sup norm of the data accepted by picard_iterate unless overridden.
# Calibrated with calibrate_small_data: a = 1.5, d = 1, profile
# exp(-x^2)(1 + 0.2ix), horizon 4, dt 0.05, ladder 0.05 * 2^k.
DEFAULT_SMALL_DATA_SUP = 0.8


def critical_regularity(params):
    """``s_c = (d - a) / 2``."""
    return 0.5 * (params.d - params.a)


@dataclass
class NlsConfig:
    params: DispersionParams
    grid: UniformGrid
    dt: float
    horizon: float
    initial: SpectralField
    small_data_sup: float = DEFAULT_SMALL_DATA_SUP

    def __post_init__(self):
        if self.params.d not in (1, 2):
            raise InvalidInputError("the NLS solver supports d = 1 or 2")
        if self.grid.dim != self.params.d or self.initial.grid != self.grid:
            raise InvalidInputError("grid, data and params must agree on dimension")
        if not (self.dt > 0 and self.horizon > 0):
            raise InvalidInputError("dt and horizon must be positive")
        peak = float(np.max(self.grid.frequency_magnitude())) ** self.params.a
        if self.dt * peak > math.pi:
            raise InvalidInputError(
                f"dt * max|xi|^a = {self.dt * peak:.3g} exceeds pi; the linear phase per step is unresolved"
            )
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise InvalidInputError("horizon must be an integer multiple of dt")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.steps + 1)


@dataclass
class SolutionTrace:
    times: np.ndarray
    fields: list
    mass: np.ndarray
    sup: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def relative_mass_drift(self):
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0]) if self.mass[0] > 0 else 0.0


# --- Duhamel ------------------------------------------------------------------

def duhamel_recursion(g_hat, dt, omega):
    """Trapezoid Duhamel sums in frequency.

    ``u_n = sum_{m<=n} w_m exp(i (t_n - s_m) omega) g_m`` with trapezoid weights,
    computed as ``u_n = e (u_{n-1} + dt/2 g_{n-1}) + dt/2 g_n``, ``e = exp(i dt omega)``.

    Parameters
    ----------
    g_hat : ndarray, shape (n_times, ...)
    dt : float
    omega : ndarray broadcastable to ``g_hat[0]``
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    out = np.zeros_like(g_hat)
    step = np.exp(1j * dt * omega)
    half = 0.5 * dt
    for n in range(1, g_hat.shape[0]):
        out[n] = step * (out[n - 1] + half * g_hat[n - 1]) + half * g_hat[n]
    return out


def _stack_frequency(sample):
    return np.stack([f.to_frequency().values for f in sample.payloads])


def duhamel_integral(g, params, localize=False):
    """``u(t) = int_0^t exp(i (t - s) D^a) g(s) ds`` on the sample's times.

    Parameters
    ----------
    g : SpaceTimeSample
        Uniform times, ``SpectralField`` payloads.
    params : DispersionParams
    localize : bool
        Apply ``P_0`` to ``g`` first.

    Returns
    -------
    SpaceTimeSample
        Payloads in the space of the input payloads; ``u(t_0) = 0``.
    """
    dt = g.uniform_step
    if not g.payloads:
        return g
    grid = g.payloads[0].grid
    space = g.payloads[0].space
    xi = grid.frequency_magnitude()
    g_hat = _stack_frequency(g)
    if localize:
        g_hat = g_hat * chi(0, xi)
    u_hat = duhamel_recursion(g_hat, dt, xi**params.a)
    fields = [SpectralField(grid, v, FREQUENCY).in_space(space) for v in u_hat]
    return SpaceTimeSample(g.times, fields, metadata=dict(g.metadata, duhamel=True))


# --- Strang splitting -----------------------------------------------------------

def _nonlinear_phase(values, dt):
    return np.exp(-1j * dt * np.abs(values) ** 2) * values


def nls_step(u, dt, params, step_index=0):
    """One Strang step: half linear, full nonlinear phase, half linear."""
    half = np.exp(0.5j * dt * u.grid.frequency_magnitude() ** params.a)
    v = SpectralField(u.grid, u.to_frequency().values * half, FREQUENCY).to_physical()
    with np.errstate(over="ignore", invalid="ignore"):
        nonlin = _nonlinear_phase(v.values, dt)
    if not np.all(np.isfinite(nonlin)):
        raise BlowupError("non-finite values in the NLS step", step_index)
    w = SpectralField(u.grid, nonlin, PHYSICAL).to_frequency()
    out = SpectralField(u.grid, w.values * half, FREQUENCY)
    return out.in_space(u.space)


def evolve(u0, dt, steps, params, store_every=1, first_step=0):
    """Apply ``steps`` Strang steps, fusing adjacent half-steps.

    Returns
    -------
    SolutionTrace
        Fields every ``store_every`` steps (always including the last), mass
        and sup norm after every step.
    """
    grid = u0.grid
    omega = grid.frequency_magnitude() ** params.a
    half = np.exp(0.5j * dt * omega)
    full = half * half
    vol = grid.dx ** grid.dim
    u_hat = u0.to_frequency().values * half
    phys = u0.to_physical().values
    times, fields = [0.0], [u0.to_physical()]
    with np.errstate(over="ignore", invalid="ignore"):
        mass = [math.sqrt(float(np.sum(np.abs(phys) ** 2)) * vol)]
        sup = [float(np.max(np.abs(phys)))]
        for n in range(1, steps + 1):
            v = SpectralField(grid, u_hat, FREQUENCY).to_physical().values
            v = _nonlinear_phase(v, dt)
            if not np.all(np.isfinite(v)):
                raise BlowupError("non-finite values during evolution", first_step + n)
            w_hat = SpectralField(grid, v, PHYSICAL).to_frequency().values
            cur_hat = w_hat * half
            phys = SpectralField(grid, cur_hat, FREQUENCY).to_physical().values
            mass.append(math.sqrt(float(np.sum(np.abs(phys) ** 2)) * vol))
            sup.append(float(np.max(np.abs(phys))))
            if n % store_every == 0 or n == steps:
                times.append(n * dt)
                fields.append(SpectralField(grid, phys, PHYSICAL))
            u_hat = w_hat * full
    return SolutionTrace(np.asarray(times), fields, np.asarray(mass), np.asarray(sup))


def run_nls(config, store_every=1):
    """Strang evolution over the configured horizon.

    Non-radial data in ``d = 2`` are evolved but flagged: a warning is issued
    and ``diagnostics["radial"]`` is ``False``.
    """
    radial = is_radial(config.initial)
    if config.params.d == 2 and not radial:
        warnings.warn("non-radial initial data in d = 2; the run is a diagnostic only", stacklevel=2)
    trace = evolve(config.initial, config.dt, config.steps, config.params, store_every)
    trace.diagnostics["radial"] = radial
    return trace


# --- Picard iteration -------------------------------------------------------------

@dataclass
class PicardResult:
    trace: SolutionTrace
    residuals: list

    @property
    def ratios(self):
        r = self.residuals
        return [b / a if a > 0 else 0.0 for a, b in zip(r, r[1:])]


def _space_time_l2(diff_hat, grid, dt):
    per_time = np.sum(np.abs(diff_hat) ** 2, axis=tuple(range(1, diff_hat.ndim))) * grid.dxi**grid.dim
    per_time /= (2 * math.pi) ** grid.dim
    weights = np.full(per_time.shape, dt)
    weights[0] = weights[-1] = 0.5 * dt
    return math.sqrt(float(np.sum(weights * per_time)))


def picard_iterate(phi, config, iterations, check_smallness=True):
    """Iterate ``u -> exp(itD^a) phi - i int_0^t exp(i(t-s)D^a) |u|^2 u ds``.

    Residuals are space-time ``L^2`` norms of successive differences.

    Raises
    ------
    PreconditionError
        Data sup norm above ``config.small_data_sup``.
    ContractionFailure
        Residuals grew on three consecutive iterations.
    """
    grid, params = config.grid, config.params
    if check_smallness and phi.sup_norm() > config.small_data_sup:
        raise PreconditionError(
            f"data sup norm {phi.sup_norm():.3g} exceeds the small-data threshold {config.small_data_sup:g}"
        )
    times = config.times
    omega = grid.frequency_magnitude() ** params.a
    phi_hat = phi.to_frequency().values
    linear = np.exp(1j * np.multiply.outer(times, omega)) * phi_hat
    axes = tuple(range(1, linear.ndim))
    u_hat = linear
    residuals = []
    growth = 0
    for _ in range(iterations):
        u = np.fft.ifftn(u_hat * grid.edge_phase(), axes=axes) / grid.dx**grid.dim
        nonlin = np.abs(u) ** 2 * u
        g_hat = np.fft.fftn(nonlin, axes=axes) * grid.dx**grid.dim * grid.edge_phase()
        new_hat = linear - 1j * duhamel_recursion(g_hat, config.dt, omega)
        res = _space_time_l2(new_hat - u_hat, grid, config.dt)
        if residuals and res > residuals[-1]:
            growth += 1
            if growth >= 3:
                raise ContractionFailure("Picard residuals grew on three consecutive iterations")
        else:
            growth = 0
        residuals.append(res)
        u_hat = new_hat
    fields = [SpectralField(grid, v, FREQUENCY).to_physical() for v in u_hat]
    mass = np.array([f.l2_norm() for f in fields])
    sup = np.array([f.sup_norm() for f in fields])
    return PicardResult(SolutionTrace(times, fields, mass, sup), residuals)


def space_time_distance(trace_a, trace_b):
    """Trapezoid ``L_t^2 L_x^2`` distance between traces on the same times."""
    if trace_a.times.shape != trace_b.times.shape or np.any(np.abs(trace_a.times - trace_b.times) > 1e-12):
        raise InvalidInputError("traces must share their time samples")
    per = np.array([
        SpectralField(f.grid, f.to_physical().values - g.to_physical().values).l2_norm() ** 2
        for f, g in zip(trace_a.fields, trace_b.fields)
    ])
    dt = trace_a.times[1] - trace_a.times[0]
    w = np.full(per.shape, dt)
    w[0] = w[-1] = 0.5 * dt
    return math.sqrt(float(np.sum(w * per)))


def calibrate_small_data(profile, config, amplitudes, iterations=6, max_ratio=0.5):
    """Largest amplitude in ``amplitudes`` whose Picard ratios all stay below ``max_ratio``.

    Returns ``(amplitude, {amplitude: ratios})``; amplitude is ``None`` if none qualifies.
    """
    best, table = None, {}
    for amp in sorted(amplitudes):
        data = profile.with_values(amp * profile.values)
        try:
            result = picard_iterate(data, config, iterations, check_smallness=False)
            ratios = result.ratios[1:]
        except ContractionFailure:
            ratios = [math.inf]
        table[amp] = ratios
        if ratios and max(ratios) <= max_ratio:
            best = amp
    return best, table


# --- scattering diagnostic ------------------------------------------------------------

@dataclass
class ScatteringDiagnostic:
    times: np.ndarray
    profiles: list
    distances: np.ndarray
    regularity: float
    homogeneous: bool

    def window_diameter(self, lo, hi):
        """Largest distance among profiles with ``lo*T <= t <= hi*T``."""
        t_end = self.times[-1]
        sel = np.where((self.times >= lo * t_end - 1e-12) & (self.times <= hi * t_end + 1e-12))[0]
        if sel.size < 2:
            return 0.0
        return float(np.max(self.distances[np.ix_(sel, sel)]))

    def settles(self, tol=None):
        mid = self.window_diameter(0.5, 0.75)
        last = self.window_diameter(0.75, 1.0)
        ok = last <= mid
        return ok and (tol is None or last <= tol)


def scattering_profile(trace, params):
    """``v(t) = exp(-itD^a) u(t)`` and pairwise distances in the ``s_c`` Sobolev norm.

    Negative ``s_c`` uses the inhomogeneous norm so that data with nonzero
    mean stay admissible.
    """
    s_c = critical_regularity(params)
    homogeneous = s_c >= 0
    profiles = [propagate(u, -t, params).to_frequency() for t, u in zip(trace.times, trace.fields)]
    n = len(profiles)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff = profiles[i].with_values(profiles[i].values - profiles[j].values)
            dist[i, j] = dist[j, i] = sobolev_norm(diff, s_c, homogeneous) if np.any(diff.values) else 0.0
    return ScatteringDiagnostic(np.asarray(trace.times), profiles, dist, s_c, homogeneous)


# --- data generators --------------------------------------------------------------------

def radial_initial_data(grid, profile):
    """Sample ``profile(|x|)`` onto ``grid``."""
    return SpectralField(grid, profile(grid.radius()), PHYSICAL)


def is_radial(f, tol=1e-12):
    """Invariance under the axis reflections and permutations of the grid.

    The grid point ``-L`` has no mirror image, so the comparison drops the
    first sample along each axis.
    """
    v = f.to_physical().values
    core = v[(slice(1, None),) * v.ndim]
    scale = max(float(np.max(np.abs(core))), 1e-300)
    for axis in range(core.ndim):
        if np.max(np.abs(core - np.flip(core, axis=axis))) > tol * scale:
            return False
    if core.ndim == 2 and np.max(np.abs(core - core.T)) > tol * scale:
        return False
    return True


def trace_to_csv(trace, params, diagnostic=None):
    """CSV text with columns t, mass, sup, critical_sobolev, scattering_distance."""
    s_c = critical_regularity(params)
    homogeneous = s_c >= 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "mass", "sup", "critical_sobolev", "scattering_distance"])
    for i, (t, u) in enumerate(zip(trace.times, trace.fields)):
        crit = sobolev_norm(u, s_c, homogeneous)
        dist = diagnostic.distances[i, -1] if diagnostic is not None else ""
        writer.writerow([repr(float(t)), repr(u.l2_norm()), repr(u.sup_norm()), repr(crit),
                         repr(float(dist)) if dist != "" else ""])
    return buf.getvalue()
