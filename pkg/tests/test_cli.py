import csv
import io
import os
import threading
import time

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from strichlab import __version__
from strichlab.cli import main
from strichlab.config import load, validate
from strichlab.errors import ConfigError
from strichlab.experiments import cell_map, dispersive_decay_run
from strichlab.levy_kernels import divergence_scan
from strichlab.results import (
    COLUMNS,
    SCHEMA_LINE,
    ResultRow,
    atomic_write,
    emit_plot_script,
    plot_script,
    read_csv,
    render_csv,
)
from strichlab.spectral_core import ETA_FORMULA, DispersionParams, UniformGrid


def write_config(tmp_path, name="exp.yaml", **doc):
    doc.setdefault("seed", 0)
    doc.setdefault("output", name.replace(".yaml", ".csv"))
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def run_ok(path):
    assert main(["run", path]) == 0
    return str(path).replace(".yaml", ".csv")


def rows_by(records, metric):
    return [r for r in records if r["metric"] == metric]


# --- validation ---------------------------------------------------------------------

def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="khat-scan", output="x.csv", params=dict(a=2, d=3, foo=1)))
    assert info.value.key == "params.foo"
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="khat-scan", output="x.csv", params=dict(a=2, d=3), extra=1))
    assert info.value.key == "extra"


def test_required_and_kind():
    with pytest.raises(ConfigError, match="params.d"):
        validate(dict(kind="khat-scan", output="x.csv", params=dict(a=2)))
    with pytest.raises(ConfigError, match="kind"):
        validate(dict(kind="nope", output="x.csv"))
    with pytest.raises(ConfigError, match="output"):
        validate(dict(kind="khat-scan", params=dict(a=2, d=3)))


@pytest.mark.parametrize("params,key", [
    (dict(a=2.5, d=1), "params.a"),             # density needs a <= 2
    (dict(a=0, d=1), "params.a"),
    (dict(a=1, d=1, t=-1.0), "params.t"),
    (dict(a=True, d=1), "params.a"),
])
def test_density_ranges(params, key):
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="density", output="x.csv", params=params))
    assert info.value.key == key


def test_module_preconditions_surface_as_keys():
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="khat-scan", output="x.csv", params=dict(a=2, d=2)))
    assert info.value.key == "params.d"
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="theorem2-scan", output="x.csv", params=dict(a=1, d=3, s=0.5)))
    assert info.value.key == "params.s"
    with pytest.raises(ConfigError, match="threshold 10/3") as info:
        validate(dict(kind="theorem3-scan", output="x.csv", params=dict(a=2, d=3, p=3, r=4)))
    assert info.value.key == "params.p"
    with pytest.raises(ConfigError, match="exceeds pi"):
        validate(dict(kind="nls-run", output="x.csv", params=dict(a=2, d=1, dt=1.0),
                      grid=dict(points=256, half_width=16.0)))
    with pytest.raises(ConfigError, match="integer multiple"):
        validate(dict(kind="nls-run", output="x.csv", params=dict(a=1.5, d=1, horizon=1.03)))
    with pytest.raises(ConfigError) as info:
        validate(dict(kind="nls-run", output="x.csv", params=dict(a=1.5, d=1), grid=dict(points=100, half_width=8.0)))
    assert info.value.key == "grid.points"


def test_exponent_bound_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, kind="admissible-table", params=dict(a=2, d=3, q=[1.5]))
    assert main(["run", path]) == 2
    err = capsys.readouterr().err
    assert "params.q" in err and "2 <= q <= inf" in err
    assert not os.path.exists(path.replace(".yaml", ".csv"))


def test_validate_subcommand(tmp_path, capsys):
    path = write_config(tmp_path, kind="khat-scan", params=dict(a=2, d=3, bogus=0))
    assert main(["validate", path]) == 2
    assert "params.bogus" in capsys.readouterr().err
    good = write_config(tmp_path, "good.yaml", kind="khat-scan", params=dict(a=2, d=3))
    assert main(["validate", good]) == 0
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("kind: [unterminated\n")
    assert main(["validate", str(path)]) == 2


def test_decay_defaults_depend_on_path():
    grid = validate(dict(kind="dispersive-decay", output="x.csv", params=dict(a=2, d=1)))
    assert (grid.params["band"], grid.params["t_min"], grid.params["t_max"]) == (3, 1.0, 40.0)
    assert grid.grid == {"points": 65536, "half_width": 4096.0}
    radial = validate(dict(kind="dispersive-decay", output="x.csv", params=dict(a=1, d=3)))
    assert (radial.params["band"], radial.params["t_min"], radial.params["t_max"]) == (0, 32.0, 512.0)
    assert radial.grid == {}


# --- runs -----------------------------------------------------------------------------

def test_admissible_table_examples(tmp_path):
    lattice = dict(q=[2, 4, "inf"], p=[2, 6, "inf"])
    out = run_ok(write_config(tmp_path, "a23.yaml", kind="admissible-table", params=dict(a=2, d=3, **lattice)))
    table = {(r["params"]["q"], r["params"]["p"]): r["value"] for r in rows_by(read_csv(out), "admissible")}
    assert table[("2", "6")] == "true"
    assert table[("2", "inf")] == "true"
    assert table[("2", "2")] == "false"
    out = run_ok(write_config(tmp_path, "a22.yaml", kind="admissible-table", params=dict(a=2, d=2, **lattice)))
    table = {(r["params"]["q"], r["params"]["p"]): r["value"] for r in rows_by(read_csv(out), "admissible")}
    assert table[("2", "inf")] == "false"
    assert all(r["error_estimate"] == "exact" for r in read_csv(out))


def test_khat_scan_delegates_to_divergence_scan(tmp_path):
    out = run_ok(write_config(tmp_path, kind="khat-scan", params=dict(a=2, d=3)))
    records = read_csv(out)
    fit = divergence_scan(DispersionParams(2, 3), [2.0**-j for j in range(3, 11)])
    assert float(rows_by(records, "slope")[0]["value"]) == fit.slope
    assert float(rows_by(records, "r_squared")[0]["value"]) == fit.r_squared
    assert [float(r["value"]) for r in rows_by(records, "k_hat0")] == list(fit.values)


def test_every_row_has_an_error_estimate(tmp_path):
    kinds = [
        ("density", dict(a=1.5, d=1, x=[0.0, 1.0, 3.0])),
        ("char-check", dict(a=1.5, eta=[0.0, 2.0])),
        ("closed-form-k", dict(a=2, d=2, sigma=[1.0], t=[0.0, 2.0])),
        ("bessel-verify", dict(nu_count=2, r_count=3)),
        ("nls-run", dict(a=1.5, d=1, horizon=0.5, store_every=5)),
    ]
    for i, (kind, params) in enumerate(kinds):
        out = run_ok(write_config(tmp_path, f"k{i}.yaml", kind=kind, params=params))
        records = read_csv(out)
        assert records
        for r in records:
            assert r["error_estimate"] == "exact" or float(r["error_estimate"]) >= 0


def test_closed_form_rows_match_kernel(tmp_path):
    out = run_ok(write_config(tmp_path, kind="closed-form-k", params=dict(a=1.3, d=2)))
    errs = [float(r["value"]) for r in rows_by(read_csv(out), "relative_error")]
    assert len(errs) == 8 and max(errs) < 1e-6


def test_numerical_failure_exit_code(tmp_path, capsys):
    # the fastest packet leaves the box long before t = 40
    path = write_config(tmp_path, kind="dispersive-decay", params=dict(a=2, d=1, samples=3),
                        grid=dict(points=1024, half_width=64.0))
    assert main(["run", path]) == 1
    assert "boundary mass" in capsys.readouterr().err


def test_decay_single_time_is_degenerate():
    grid = UniformGrid(1, 4096, 256.0)
    res = dispersive_decay_run(DispersionParams(2, 1), 3, [2.0], grid)
    assert res.degenerate and res.sup.shape == (1,)


def test_decay_grid_error_estimates():
    grid = UniformGrid(1, 8192, 512.0)
    res = dispersive_decay_run(DispersionParams(2, 1), 3, [1.0, 2.0, 4.0], grid)
    assert not res.degenerate
    assert np.all(res.sup_error <= 1e-2 * res.sup)
    assert np.all(res.boundary_mass <= 1e-6)


# --- output files ---------------------------------------------------------------------

def test_csv_schema_and_sidecar(tmp_path):
    out = run_ok(write_config(tmp_path, kind="khat-scan", params=dict(a=1, d=4, eps=[0.125, 0.0625, 0.03125, 0.015625])))
    text = open(out, encoding="utf-8").read()
    assert text.splitlines()[0] == SCHEMA_LINE
    assert text.splitlines()[1] == ",".join(COLUMNS)
    meta = yaml.safe_load(open(out.replace(".csv", ".meta.json"), encoding="utf-8"))
    assert meta["eta_formula"] == ETA_FORMULA
    assert meta["software"]["version"] == __version__
    assert meta["config"]["params"]["d"] == 4
    assert not any("time" in k and "window" not in k for k in meta)


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "r.csv"
    target.write_text("old")
    atomic_write(str(target), "new")
    assert target.read_text() == "new"
    assert sorted(os.listdir(tmp_path)) == ["r.csv"]


def test_atomic_write_failure_keeps_old(tmp_path, monkeypatch):
    target = tmp_path / "r.csv"
    target.write_text("old")

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(str(target), "new")
    assert target.read_text() == "old"
    assert sorted(os.listdir(tmp_path)) == ["r.csv"]


def test_result_row_requires_error():
    with pytest.raises(ValueError):
        ResultRow("x", {}, "m", 1.0, None, 0)
    with pytest.raises(ValueError):
        ResultRow("x", {}, "m", 1.0, "", 0)
    with pytest.raises(ValueError):
        ResultRow("x", {}, "bad\x00name", 1.0, 0.0, 0)


text_st = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=20)


@settings(max_examples=60, deadline=None)
@given(label=text_st, metric=st.from_regex(r"[A-Za-z][A-Za-z0-9_.-]{0,12}", fullmatch=True),
       value=st.floats(allow_nan=False))
def test_csv_round_trip(tmp_path_factory, label, metric, value):
    row = ResultRow("id", {"label": label}, metric, value, 0.5, 7)
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    atomic_write(str(path), render_csv([row]))
    (rec,) = read_csv(str(path))
    assert rec["params"] == {"label": label}
    assert rec["metric"] == metric
    assert float(rec["value"]) == value
    # the body parses with a strict RFC-4180 reader too
    body = path.read_text(encoding="utf-8").split("\n", 1)[1]
    assert len(list(csv.reader(io.StringIO(body), strict=True))) == 2


def test_determinism_and_threads(tmp_path, monkeypatch):
    path = write_config(tmp_path, kind="closed-form-k", params=dict(a=2, d=2))
    out = run_ok(path)
    first = open(out, "rb").read()
    meta = open(out.replace(".csv", ".meta.json"), "rb").read()
    monkeypatch.setenv("STRICHLAB_THREADS", "4")
    run_ok(path)
    assert open(out, "rb").read() == first
    assert open(out.replace(".csv", ".meta.json"), "rb").read() == meta


def test_config_round_trip(tmp_path, capsys):
    path = write_config(tmp_path, kind="nls-run", params=dict(a=1.5, d=1, horizon=0.5, store_every=5))
    out = run_ok(path)
    first = open(out, "rb").read()
    capsys.readouterr()
    assert main(["validate", "--dump", path]) == 0
    dumped = tmp_path / "dumped.yaml"
    dumped.write_text(capsys.readouterr().out)
    assert load(str(dumped)).to_dict() == load(path).to_dict()
    run_ok(str(dumped))
    assert open(out, "rb").read() == first


def test_cell_map_preserves_order(monkeypatch):
    monkeypatch.setenv("STRICHLAB_THREADS", "4")
    seen = []

    def slow(i):
        time.sleep(0.01 * (5 - i))
        seen.append(threading.get_ident())
        return i * i

    assert cell_map(slow, range(5)) == [0, 1, 4, 9, 16]


# --- plot scripts -----------------------------------------------------------------------

def test_plot_khat_has_fit_overlay(tmp_path):
    out = run_ok(write_config(tmp_path, kind="khat-scan", params=dict(a=2, d=3)))
    script = open(emit_plot_script(out), encoding="utf-8").read()
    compile(script, "plot.py", "exec")
    ns = {}
    exec(script.split("\n\ndef main")[0], ns)
    (panel,) = ns["PANELS"]
    assert panel["fit"]["slope"] > 0
    assert panel["xlabel"] == "log(1/eps)"


def test_plot_nls_panels(tmp_path):
    out = run_ok(write_config(tmp_path, kind="nls-run", params=dict(a=1.5, d=1, horizon=0.5, store_every=5)))
    script = open(emit_plot_script(out), encoding="utf-8").read()
    assert "relative mass drift" in script and "scattering distance" in script


def test_plot_empty_and_unknown(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(render_csv([]))
    script = open(emit_plot_script(str(empty)), encoding="utf-8").read()
    assert script.startswith('"""') and "import" not in script
    blank = tmp_path / "blank.csv"
    blank.write_text("")
    assert "import" not in open(emit_plot_script(str(blank)), encoding="utf-8").read()
    rec = dict(metric="mystery", value="1.0", error_estimate="exact", params={})
    with pytest.warns(UserWarning, match="mystery"):
        plot_script([rec], "x.csv")


def test_plot_subcommand_on_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,result\n")
    assert main(["plot", str(bad)]) == 2


def test_plot_script_runs(tmp_path):
    pytest.importorskip("matplotlib")
    out = run_ok(write_config(tmp_path, kind="khat-scan", params=dict(a=2, d=3)))
    script = emit_plot_script(out)
    ns = {"__name__": "plot"}
    exec(open(script, encoding="utf-8").read(), ns)
    ns["main"](str(tmp_path / "fig.png"))
    assert (tmp_path / "fig.png").stat().st_size > 0
