"""Runners that turn a validated :class:`~strichlab.config.ExperimentConfig` into result rows."""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bessel import bessel_j, bessel_j_poisson
from .duhamel_nls import NlsConfig, radial_initial_data, run_nls, scattering_profile
from .errors import ResolutionError
from .levy_kernels import (
    DeltaApproximant,
    StableDensitySpec,
    characteristic_check,
    closed_form_k,
    k_hat,
    linear_fit,
    stable_density,
)
from .mixed_norms import AdmissibilityQuery, as_exponent, is_admissible, is_radially_admissible
from .radial_hankel import HarmonicIndex, RadialProfile, oscillatory_breakpoints, t_a_nu
from .scans import Discretization, DuhamelDiscretization, theorem2_scan, theorem3_scan
from .spectral_core import (
    FREQUENCY,
    SpectralField,
    boundary_mass_fraction,
    chi,
    propagate,
    sup_norm_refined,
)

EXACT = "exact"
THREADS_ENV = "STRICHLAB_THREADS"
BOUNDARY_MASS_LIMIT = 1e-6
RADIAL_MARGIN = 128.0
RADIAL_DR = 0.25


@dataclass
class Outcome:
    """Rows plus run metadata destined for the sidecar file."""

    rows: list
    window: object = None
    drifts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def cell_map(fn, cells):
    """``[fn(c) for c in cells]``, possibly threaded; order always preserved."""
    cells = list(cells)
    n = min(thread_count(), len(cells))
    if n <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, cells))


def _row(metric, value, error, **cell):
    return dict(metric=metric, value=value, error=error, cell=cell)


def _fit_rows(x, values, errors, **cell):
    """Slope, intercept and R^2 with errors from refitting perturbed data."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    slope, intercept, r2, degenerate = linear_fit(x, values)
    worst = values + np.asarray(errors, dtype=float) * np.sign(x - x.mean())
    s2, i2, r22, _ = linear_fit(x, worst)
    rows = [
        _row("slope", slope, abs(s2 - slope), **cell),
        _row("intercept", intercept, abs(i2 - intercept), **cell),
        _row("r_squared", r2, abs(r22 - r2), **cell),
        _row("degenerate_fit", degenerate, EXACT, **cell),
    ]
    return rows, dict(slope=slope, intercept=intercept, r_squared=r2, degenerate=degenerate)


# --- kernels -------------------------------------------------------------------

def run_density(cfg):
    p = cfg.params
    spec = StableDensitySpec(p["a"], p["d"], p["t"])
    x = np.asarray(p["x"], dtype=float)
    pts = x if spec.d == 1 else np.outer(x, np.eye(spec.d)[0])
    base = np.atleast_1d(stable_density(spec, pts))
    fine = np.atleast_1d(stable_density(spec, pts, splits=1))
    rows = [_row("density", float(v), float(abs(f - v)), x=float(xi)) for xi, v, f in zip(x, base, fine)]
    return Outcome(rows)


def run_char_check(cfg):
    p = cfg.params
    spec = StableDensitySpec(p["a"], p["d"], p["t"])

    def cell(e):
        vec = np.zeros(spec.d)
        vec[0] = e
        val, err = characteristic_check(spec, vec if spec.d > 1 else e, with_error=True)
        exact = math.exp(-spec.t * abs(e) ** spec.a)
        return [
            _row("characteristic_real", val.real, err, eta=e),
            _row("characteristic_imag", val.imag, err, eta=e),
            _row("deviation", abs(val - exact), err, eta=e),
        ]

    return Outcome([r for rows in cell_map(cell, p["eta"]) for r in rows])


def run_khat_scan(cfg):
    params = cfg.dispersion()
    eps = cfg.params["eps"]
    cells = cell_map(lambda e: k_hat(DeltaApproximant(e), params, 0.0, with_error=True), eps)
    values = [v for v, _ in cells]
    errors = [e for _, e in cells]
    rows = [_row("k_hat0", v, e, eps=x) for x, v, e in zip(eps, values, errors)]
    fit_rows, fit = _fit_rows(np.log(1.0 / np.asarray(eps)), values, errors)
    return Outcome(rows + fit_rows, extra=dict(fit=fit))


def run_closed_form_k(cfg):
    params = cfg.dispersion()
    p = cfg.params
    alpha = p["alpha"]
    beta = params.a - params.d - alpha
    cells = [(s, t) for s in p["sigma"] for t in p["t"]]

    def cell(st):
        s, t = st
        num, exact, err = closed_form_k(params, s, alpha, beta, t, p["gamma"], with_error=True)
        return [
            _row("k_real", num.real, err, sigma=s, t=t),
            _row("k_imag", num.imag, err, sigma=s, t=t),
            _row("relative_error", abs(num - exact) / abs(exact), err / abs(exact), sigma=s, t=t),
        ]

    return Outcome([r for rows in cell_map(cell, cells) for r in rows])


def run_bessel_verify(cfg):
    p = cfg.params
    nus = np.linspace(0.0, p["nu_max"], p["nu_count"]) if p["nu_count"] > 1 else np.array([p["nu_max"]])
    radii = p["r_max"] * np.arange(1, p["r_count"] + 1) / p["r_count"]
    rows = []
    worst_gap = worst_oracle = worst_rec = worst_rec_oracle = 0.0
    for nu in nus:
        j = bessel_j(nu, radii)
        quad = bessel_j_poisson(nu, radii)
        oracle_gap = np.abs(bessel_j_poisson(nu, radii, order=160) - quad)
        gap = np.abs(j - quad)
        if nu >= 1:
            rec = np.abs(bessel_j(nu - 1, radii) + bessel_j(nu + 1, radii) - 2 * nu / radii * j)
            rec_q = np.abs(bessel_j_poisson(nu - 1, radii) + bessel_j_poisson(nu + 1, radii)
                           - 2 * nu / radii * quad)
            worst_rec = max(worst_rec, float(rec.max()))
            worst_rec_oracle = max(worst_rec_oracle, float(np.abs(rec - rec_q).max()))
        worst_gap = max(worst_gap, float(gap.max()))
        worst_oracle = max(worst_oracle, float(oracle_gap.max()))
        rows.extend(_row("bessel_j", float(v), float(g), nu=float(nu), r=float(r))
                    for r, v, g in zip(radii, j, gap))
    rows.append(_row("max_quadrature_gap", worst_gap, worst_oracle))
    rows.append(_row("max_recurrence_residual", worst_rec, worst_rec_oracle))
    return Outcome(rows)


# --- dispersive decay -------------------------------------------------------------

@dataclass
class DecayResult:
    times: np.ndarray
    sup: np.ndarray
    sup_error: np.ndarray
    boundary_mass: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    degenerate: bool
    window: dict
    rows: list


def _decay_grid(params, band, times, grid):
    xi = grid.frequency_magnitude()
    phi = SpectralField(grid, chi(band, xi).astype(complex), FREQUENCY)
    sup, err, mass = [], [], []
    for t in times:
        u = propagate(phi, t, params)
        m = boundary_mass_fraction(u)
        if m > BOUNDARY_MASS_LIMIT:
            raise ResolutionError(
                f"wraparound contamination at t={t:g}: boundary mass {m:.2e} exceeds {BOUNDARY_MASS_LIMIT:g}; "
                "enlarge grid.half_width")
        coarse, fine, _ = sup_norm_refined(u.to_physical())
        sup.append(fine)
        err.append(abs(fine - coarse))
        mass.append(m)
    window = dict(path="grid", points=grid.points_per_axis, half_width=grid.half_width)
    return np.array(sup), np.array(err), np.array(mass), window


def _decay_radial(params, band, times):
    d, a = params.d, params.a
    lo, hi = 0.625 * 2.0**band, 1.6 * 2.0**band
    speed = a * max(lo ** (a - 1), hi ** (a - 1))
    t_max = float(np.max(times))
    r_max = speed * t_max + RADIAL_MARGIN
    # data P_0-type in frequency: phi^ = chi_band; h carries the Hankel weights
    expo = 0.5 * (2 * d - 1 - a)
    breaks = oscillatory_breakpoints(lo, hi, params, t_max, r_max)
    h = RadialProfile.from_function(lambda r: r**expo * chi(band, r), breaks)
    nu = HarmonicIndex(0, d).nu
    radii = np.arange(0.5 * RADIAL_DR, r_max, RADIAL_DR)
    u = np.abs(t_a_nu(h, params, nu, times, radii))
    dens = u**2 * radii ** (d - 1)
    shell = radii > r_max - 0.25 * RADIAL_MARGIN
    mass = dens[:, shell].sum(axis=1) / np.maximum(dens.sum(axis=1), 1e-300)
    bad = np.flatnonzero(mass > BOUNDARY_MASS_LIMIT)
    if bad.size:
        raise ResolutionError(
            f"outer-shell mass {mass[bad[0]]:.2e} at t={times[bad[0]]:g} exceeds {BOUNDARY_MASS_LIMIT:g}")
    idx = np.argmax(u, axis=1)
    coarse = u[np.arange(len(times)), idx]
    fine = np.empty_like(coarse)
    for n, t in enumerate(times):
        local = np.linspace(radii[idx[n]] - RADIAL_DR, radii[idx[n]] + RADIAL_DR, 65)
        local = local[local > 0]
        fine[n] = max(coarse[n], float(np.max(np.abs(t_a_nu(h, params, nu, [t], local, check=False)))))
    window = dict(path="radial", r_max=r_max, dr=RADIAL_DR, nodes=len(h.nodes))
    return fine, np.abs(fine - coarse), mass, window


def dispersive_decay_run(params, band, times, grid=None):
    """Sup-norm of ``e^{itD^a}`` applied to data with ``phi^ = chi_band`` and its log-log fit.

    Parameters
    ----------
    params : DispersionParams
    band : int
    times : array_like
        Positive times; one time gives a degenerate fit.
    grid : UniformGrid, optional
        Periodic grid for ``d <= 2``; ``d >= 3`` uses the radial Hankel path.

    Returns
    -------
    DecayResult

    Raises
    ------
    ResolutionError
        Boundary mass above 1e-6 at some time (wraparound or truncation).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if params.d >= 3:
        sup, err, mass, window = _decay_radial(params, band, times)
    else:
        if grid is None:
            raise ResolutionError("a periodic grid is required for d <= 2")
        sup, err, mass, window = _decay_grid(params, band, times, grid)
    window.update(t_min=float(times.min()), t_max=float(times.max()))
    logt = np.log(times)
    rows = [_row("sup", float(s), float(e), t=float(t)) for t, s, e in zip(times, sup, err)]
    rows += [_row("boundary_mass", float(m), float(m), t=float(t)) for t, m in zip(times, mass)]
    # errors of log sup are relative errors of sup
    fit_rows, fit = _fit_rows(logt, np.log(sup), err / sup)
    return DecayResult(times, sup, err, mass, fit["slope"], fit["intercept"], fit["r_squared"],
                       fit["degenerate"], window, rows + fit_rows)


def run_dispersive_decay(cfg):
    p = cfg.params
    times = np.geomspace(p["t_min"], p["t_max"], p["samples"]) if p["samples"] > 1 else np.array([p["t_min"]])
    res = dispersive_decay_run(cfg.dispersion(), p["band"], times, cfg.uniform_grid())
    drifts = dict(max_relative_sup_error=float(np.max(res.sup_error / res.sup)))
    return Outcome(res.rows, window=res.window, drifts=drifts)


# --- scans ----------------------------------------------------------------------

def run_theorem2_scan(cfg):
    params = cfg.dispersion()
    p = cfg.params
    disc = Discretization(p["window"], p["dt"], p["dr"], p["modes"])
    tables = cell_map(lambda k: theorem2_scan(params, p["s"], [k], p["trials"], cfg.seed, disc, band=p["band"]),
                      p["degrees"])
    rows, ref, win = [], {}, {}
    for k, tab in zip(p["degrees"], tables):
        v = tab.values[0]
        rows.append(_row("ratio", v, v * tab.refinement_drift[0], degree=k))
        ref[str(k)] = tab.refinement_drift[0]
        win[str(k)] = tab.window_drift[0]
    return Outcome(rows, window=dict(T=disc.window, dt=disc.dt, dr=disc.dr, modes=disc.modes),
                   drifts=dict(refinement=ref, window=win))


def run_theorem3_scan(cfg):
    params = cfg.dispersion()
    p = cfg.params
    disc = DuhamelDiscretization(p["window"], p["dt"], p["dr"], p["support"], p["bumps"], p["modes"])
    tab = theorem3_scan(params, p["p"], p["r"], p["trials"], cfg.seed, disc)
    v = tab.values[0]
    rows = [_row("ensemble_max_ratio", v, v * tab.refinement_drift[0])]
    rows += [_row("trial_ratio", float(x), EXACT if v == 0 else float(x) * tab.refinement_drift[0], trial=i)
             for i, x in enumerate(tab.trials)]
    return Outcome(rows, window=dict(T=disc.window, dt=disc.dt, dr=disc.dr, support=disc.support),
                   drifts=dict(refinement=tab.refinement_drift[0], window=tab.window_drift[0]))


# --- NLS ------------------------------------------------------------------------

def _nls_trace(cfg, dt):
    p = cfg.params
    params = cfg.dispersion()
    grid = cfg.uniform_grid()
    amp, w = p["amplitude"], p["width"]
    phi = radial_initial_data(grid, lambda r: amp * np.exp(-((r / w) ** 2)))
    ratio = int(round(p["dt"] / dt))
    conf = NlsConfig(params, grid, dt, p["horizon"], phi)
    return run_nls(conf, store_every=p["store_every"] * ratio)


def run_nls_experiment(cfg):
    params = cfg.dispersion()
    every = cfg.params["store_every"]
    trace = _nls_trace(cfg, cfg.params["dt"])
    fine = _nls_trace(cfg, 0.5 * cfg.params["dt"])
    diag = scattering_profile(trace, params)
    diag_f = scattering_profile(fine, params)
    # mass and sup are per step; stored fields sit every `every` steps (twice that on the fine run)
    idx = every * np.arange(len(trace.times))
    mass, mass_f = trace.mass[idx], fine.mass[2 * idx]
    sup, sup_f = trace.sup[idx], fine.sup[2 * idx]
    rows = []
    for n, t in enumerate(trace.times):
        t = float(t)
        rows.append(_row("mass", float(mass[n]), float(abs(mass[n] - mass_f[n])), t=t))
        rows.append(_row("sup", float(sup[n]), float(abs(sup[n] - sup_f[n])), t=t))
        # distance of the scattered profile at t to the one at the horizon
        dist, dist_f = diag.distances[n, -1], diag_f.distances[n, -1]
        rows.append(_row("scattering_distance", float(dist), float(abs(dist - dist_f)), t=t))
    drift = trace.relative_mass_drift()
    rows.append(_row("mass_drift", drift, abs(drift - fine.relative_mass_drift())))
    rows.append(_row("scattering_settles", bool(diag.settles()), EXACT))
    return Outcome(rows, window=dict(T=cfg.params["horizon"], dt=cfg.params["dt"]),
                   drifts=dict(dt_halving_max_sup=float(np.max(np.abs(sup - sup_f))),
                               radial=bool(trace.diagnostics.get("radial", False))))


# --- admissibility ----------------------------------------------------------------

def run_admissible_table(cfg):
    params = cfg.dispersion()
    rows = []
    for q in cfg.params["q"]:
        for p in cfg.params["p"]:
            query = AdmissibilityQuery(params, as_exponent(q), as_exponent(p))
            rows.append(_row("admissible", bool(is_admissible(query)), EXACT, q=q, p=p))
            rows.append(_row("radially_admissible", bool(is_radially_admissible(query)), EXACT, q=q, p=p))
    return Outcome(rows)


RUNNERS = {
    "density": run_density,
    "char-check": run_char_check,
    "dispersive-decay": run_dispersive_decay,
    "khat-scan": run_khat_scan,
    "closed-form-k": run_closed_form_k,
    "bessel-verify": run_bessel_verify,
    "theorem2-scan": run_theorem2_scan,
    "theorem3-scan": run_theorem3_scan,
    "nls-run": run_nls_experiment,
    "admissible-table": run_admissible_table,
}


def execute(cfg):
    return RUNNERS[cfg.kind](cfg)
