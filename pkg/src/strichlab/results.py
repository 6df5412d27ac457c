"""Result rows, the versioned CSV format, sidecar metadata and plot scripts."""

import csv
import io
import json
import math
import os
import re
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .spectral_core import ETA_FORMULA

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# strichlab-results schema={SCHEMA_VERSION}"
COLUMNS = ("experiment_id", "params", "metric", "value", "error_estimate", "seed")
EXACT = "exact"
METRIC_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_.-]*")


def _plain(v):
    """JSON-safe scalar: numpy types unwrapped, non-finite floats as strings."""
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def canonical_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    params: dict
    metric: str
    value: object
    error_estimate: object
    seed: int

    def __post_init__(self):
        if not METRIC_NAME.fullmatch(self.metric):
            raise ValueError(f"metric name {self.metric!r} is not an identifier")
        e = self.error_estimate
        if e != EXACT:
            if isinstance(e, str) or e is None or not isinstance(e, (int, float, np.floating)):
                raise ValueError(f"error estimate for {self.metric} must be a number or {EXACT!r}")

    def cells(self):
        return [self.experiment_id, canonical_json(self.params), self.metric,
                format_value(self.value), format_value(self.error_estimate), str(self.seed)]


def render_csv(rows):
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def atomic_write(path, text):
    """Write ``text`` (UTF-8) to ``path`` via a temp file in the same directory and a rename."""
    path = os.path.abspath(path)
    folder = os.path.dirname(path)
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".meta.json"


def sidecar(config_dict, grid, window, drifts, extra=None):
    meta = {
        "schema": SCHEMA_VERSION,
        "software": {"name": "strichlab", "version": __version__},
        "eta_formula": ETA_FORMULA,
        "grid": grid or None,
        "time_window": window,
        "drifts": drifts or {},
        "config": config_dict,
    }
    if extra:
        meta["extra"] = extra
    return json.dumps(_plain(meta), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def read_csv(path):
    """Parse a result file into dicts keyed by column; checks the schema line."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text.strip():
        return []
    first, _, rest = text.partition("\n")
    if first.rstrip("\r") != SCHEMA_LINE:
        raise ValueError(f"{path}: missing or unsupported schema line")
    reader = csv.DictReader(io.StringIO(rest))
    if reader.fieldnames is None:
        return []
    if tuple(reader.fieldnames) != COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    out = []
    for rec in reader:
        rec["params"] = json.loads(rec["params"])
        out.append(rec)
    return out


# --- plot scripts -----------------------------------------------------------------

def _num(text):
    if text in ("true", "false"):
        return 1.0 if text == "true" else 0.0
    if text == EXACT:
        return 0.0
    return float(text)


# metric -> (x key, x transform, axes scale, panel title)
PLOTTABLE = {
    "density": ("x", "identity", "linear", "stable density"),
    "characteristic_real": ("eta", "identity", "linear", "characteristic function (real part)"),
    "deviation": ("eta", "identity", "linear", "deviation from exp(-t|eta|^a)"),
    "k_hat0": ("eps", "log_inverse", "linear", "k_hat(0) against log(1/eps)"),
    "relative_error": ("t", "identity", "linear", "closed-form kernel relative error"),
    "bessel_j": ("r", "identity", "linear", "J_nu(r)"),
    "sup": ("t", "identity", "loglog", "sup norm"),
    "ratio": ("degree", "identity", "linear", "ratio per degree"),
    "trial_ratio": ("trial", "identity", "linear", "ratio per trial"),
    "mass": ("t", "identity", "linear", "relative mass drift"),
    "scattering_distance": ("t", "identity", "linear", "scattering distance"),
}
# scalar summaries, shown in the title rather than plotted
SUMMARY = {"slope", "intercept", "r_squared", "degenerate_fit", "mass_drift", "scattering_settles",
           "max_quadrature_gap", "max_recurrence_residual", "ensemble_max_ratio", "boundary_mass",
           "characteristic_imag", "k_real", "k_imag", "admissible", "radially_admissible"}

_SCRIPT_HEAD = '''"""Figures for {source}; generated, self-contained."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

SOURCE = {source!r}
PANELS = {panels!r}
SUMMARY = {summary!r}
'''

_SCRIPT_BODY = '''

def main(out="{stem}.png"):
    fig, axes = plt.subplots(len(PANELS), 1, figsize=(6, 3.2 * len(PANELS)), squeeze=False)
    for ax, panel in zip(axes[:, 0], PANELS):
        for label, xs, ys, es in panel["series"]:
            if panel["scale"] == "loglog":
                keep = [i for i in range(len(xs)) if xs[i] > 0 and ys[i] > 0]
                xs, ys, es = ([v[i] for i in keep] for v in (xs, ys, es))
            ax.errorbar(xs, ys, yerr=es, fmt="o-", ms=3, capsize=2, label=label)
        fit = panel.get("fit")
        if fit:
            lo, hi = min(panel["series"][0][1]), max(panel["series"][0][1])
            ax.plot([lo, hi], [fit["slope"] * lo + fit["intercept"], fit["slope"] * hi + fit["intercept"]],
                    "k--", label="fit slope %.4g" % fit["slope"])
        if panel["scale"] == "loglog":
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_title(panel["title"])
        ax.set_xlabel(panel["xlabel"])
        if len(panel["series"]) > 1 or fit:
            ax.legend(fontsize=7)
    if SUMMARY:
        fig.suptitle(", ".join("%s=%s" % kv for kv in SUMMARY[:6]), fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)


if __name__ == "__main__":
    main()
'''


def _panels(records):
    groups = {}
    summary = []
    fits = {}
    for rec in records:
        metric = rec["metric"]
        if metric in SUMMARY:
            summary.append((metric, rec["value"]))
            if metric in ("slope", "intercept"):
                fits[metric] = float(rec["value"])
            continue
        if metric not in PLOTTABLE:
            warnings.warn(f"unknown metric {metric!r}; skipped", stacklevel=3)
            continue
        groups.setdefault(metric, []).append(rec)
    panels = []
    for metric, recs in groups.items():
        xkey, transform, scale, title = PLOTTABLE[metric]
        series = {}
        for rec in recs:
            cell = rec["params"]
            if xkey not in cell:
                continue
            x = float(cell[xkey])
            if transform == "log_inverse":
                x = math.log(1.0 / x)
            label = ", ".join(f"{k}={cell[k]}" for k in sorted(cell) if k != xkey) or metric
            xs, ys, es = series.setdefault(label, ([], [], []))
            xs.append(x)
            ys.append(_num(rec["value"]))
            es.append(_num(rec["error_estimate"]))
        if metric == "mass":
            for xs, ys, es in series.values():
                m0 = ys[0] or 1.0
                ys[:] = [abs(y - ys[0]) / m0 for y in ys]
                es[:] = [e / m0 for e in es]
        panel = dict(title=title, xlabel="log(1/eps)" if transform == "log_inverse" else xkey, scale=scale,
                     series=[(k, *v) for k, v in series.items()])
        if metric == "k_hat0" and len(fits) == 2:
            panel["fit"] = fits
        panels.append(panel)
    return panels, summary


def plot_script(records, source):
    """Source text of a matplotlib script that redraws ``records``."""
    stem = os.path.splitext(os.path.basename(source))[0]
    if not records:
        return f'"""Figures for {source}; the result file holds no rows, nothing to plot."""\n'
    panels, summary = _panels(records)
    if not panels:
        return (f'"""Figures for {source}; no plottable metrics."""\n\nSUMMARY = {summary!r}\n')
    return _SCRIPT_HEAD.format(source=source, panels=panels, summary=summary) + _SCRIPT_BODY.format(stem=stem)


def plot_script_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + "_plot.py"


def emit_plot_script(csv_path, out_path=None):
    """Write the plot script for ``csv_path`` and return its path."""
    records = read_csv(csv_path)
    out_path = out_path or plot_script_path(csv_path)
    atomic_write(out_path, plot_script(records, os.path.basename(csv_path)))
    return out_path
