import json
import math
import shutil

import numpy as np
import pytest

from sbcool.cli import PHI_PRESETS, main, steady_state_report
from sbcool.config import hz, load_params, parse_grid
from sbcool.core_model import (
    cooling_rate_constant,
    mean_n_trajectory,
    steady_state_n,
    transition_rates,
)
from sbcool.fileio import read_csv, read_dataset, read_fit_result, read_table, write_csv, write_dataset
from sbcool.validate import fixture_dir

FIX = fixture_dir()


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def _params_file(tmp_path, name="p.json", **over):
    doc = json.loads((FIX / "dynamics.json").read_text())
    for k in ("experiment", "dynamics", "_note"):
        doc.pop(k, None)
    doc.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# --- steady-state -------------------------------------------------------------


def test_steady_state_published(capsys):
    rc, out, _ = run(capsys, "steady-state", "--params", FIX / "dynamics.json", "--format", "json")
    assert rc == 0
    rep = json.loads(out)
    assert abs(rep["n_inf"] - 22.5) <= 0.3
    assert rep["lamb_dicke_valid"] is True


def test_steady_state_equals_library(capsys):
    rc, out, _ = run(capsys, "steady-state", "--params", FIX / "dynamics.json", "--format", "json")
    rep = json.loads(out)
    p = load_params(FIX / "dynamics.json").params
    r = transition_rates(p)
    assert rep["n_inf"] == steady_state_n(p)
    assert rep["W"] == cooling_rate_constant(p)
    assert (rep["R_minus"], rep["R_plus"], rep["N_plus"]) == (r.R_minus, r.R_plus, r.N_plus)
    assert rep == json.loads(json.dumps(steady_state_report(load_params(FIX / "dynamics.json"))))


def test_steady_state_csv_format(capsys):
    rc, out, _ = run(capsys, "steady-state", "--params", FIX / "dynamics.json", "--format", "csv")
    lines = out.strip().splitlines()
    assert lines[0] == "quantity,value"
    rows = dict(line.split(",", 1) for line in lines[1:])
    assert float(rows["n_inf"]) == steady_state_n(load_params(FIX / "dynamics.json").params)


def test_steady_state_cooperativity_scaling(tmp_path, capsys):
    a = _params_file(tmp_path, "a.json", kappa_hz=1e-6, n_dot_ext=0.0)
    b = _params_file(tmp_path, "b.json", kappa_hz=1e-6, n_dot_ext=0.0, eta=0.148)
    na = json.loads(run(capsys, "steady-state", "--params", a, "--format", "json")[1])["n_inf"]
    nb = json.loads(run(capsys, "steady-state", "--params", b, "--format", "json")[1])["n_inf"]
    assert nb / na == pytest.approx(0.1, rel=1e-9)


def test_steady_state_divergence_message(tmp_path, capsys):
    rc, _, err = run(capsys, "steady-state", "--params", _params_file(tmp_path, eta=0.0))
    assert rc == 2
    assert "diverges" in err


def test_missing_key_is_data_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kappa_hz": 1e5}))
    rc, _, err = run(capsys, "steady-state", "--params", path)
    assert rc == 2
    assert "omega_hz" in err


def test_invalid_json_is_data_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{\n  \"kappa_hz\": ,\n}")
    rc, _, err = run(capsys, "steady-state", "--params", path)
    assert rc == 2
    assert ":2:" in err


def test_hz_conversion_at_parse(tmp_path):
    p = load_params(_params_file(tmp_path)).params
    assert p.kappa == 2 * math.pi * 117e3
    assert p.omega == 2 * math.pi * 0.87e6
    assert p.delta_lc == -2 * math.pi * 0.87e6


# --- simulate -----------------------------------------------------------------


def test_simulate_zero_noise_equals_closed_form(tmp_path, capsys):
    rc, _, _ = run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", tmp_path,
                   "--noise", "none", "--no-oracle")
    assert rc == 0
    p = load_params(FIX / "dynamics.json").params
    for b in ("red", "carrier", "blue"):
        d = read_dataset(tmp_path / f"data_{b}.csv")
        closed = read_table(tmp_path / f"closed_{b}.csv", ["t_s", "mean_n"])
        assert np.array_equal(d.y, closed["mean_n"])
        assert np.array_equal(d.y, mean_n_trajectory(p, b, 0.3, d.x).mean_n)


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", out, "--seed", 9)[0] == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    for m in (ma, mb):
        m.pop("started")
        m.pop("finished")
    assert ma == mb
    for name in ma["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert ma["seed"] == 9
    assert ma["rng_algorithm"]


def test_simulate_seed_changes_data(tmp_path, capsys):
    run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", tmp_path / "a", "--seed", 1, "--no-oracle")
    run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", tmp_path / "b", "--seed", 2, "--no-oracle")
    assert (tmp_path / "a/data_red.csv").read_bytes() != (tmp_path / "b/data_red.csv").read_bytes()


def test_simulate_morphology(tmp_path, capsys):
    doc = json.loads((FIX / "dynamics.json").read_text())
    doc["dynamics"]["grids"]["red"] = {"start": 0.0, "stop": 0.02, "num": 41}
    params = tmp_path / "p.json"
    params.write_text(json.dumps(doc))
    rc, _, _ = run(capsys, "simulate", "--params", params, "--out", tmp_path, "--noise", "none")
    assert rc == 0
    red = read_table(tmp_path / "oracle_red.csv", ["t_s", "mean_n", "tail_mass"])
    car = read_table(tmp_path / "closed_carrier.csv", ["t_s", "mean_n"])
    blue = read_table(tmp_path / "closed_blue.csv", ["t_s", "mean_n"])
    slope = np.polyfit(car["t_s"], car["mean_n"], 1)[0]
    assert slope == pytest.approx(1.4e4, rel=0.02)
    assert abs(red["mean_n"][-1] - 22.5) < 0.3
    assert np.all(np.diff(np.diff(blue["mean_n"])) > 0)
    assert blue["mean_n"][-1] > car["mean_n"][-1] > red["mean_n"][np.searchsorted(red["t_s"], car["t_s"][-1])]


def test_simulate_plot_file(tmp_path, capsys):
    run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", tmp_path, "--svg")
    header, rows, _ = read_csv(tmp_path / "plot.csv")
    assert header == ["branch", "t_s", "closed_form", "oracle", "y", "sigma_y"]
    assert {r[0] for r in rows} == {"red", "carrier", "blue"}
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_simulate_oracle_matches_closed_form(tmp_path, capsys):
    run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", tmp_path)
    for b in ("red", "carrier", "blue"):
        o = read_table(tmp_path / f"oracle_{b}.csv", ["t_s", "mean_n", "tail_mass"])
        c = read_table(tmp_path / f"closed_{b}.csv", ["t_s", "mean_n"])
        assert np.all(np.abs(o["mean_n"] - c["mean_n"]) / (1 + c["mean_n"]) < 1e-2)


def test_simulate_saturation(tmp_path, capsys):
    rc, _, _ = run(capsys, "simulate", "--params", FIX / "saturation.json", "--out", tmp_path,
                   "--scenario", "saturation")
    assert rc == 0
    d = read_dataset(tmp_path / "data_saturation.csv")
    assert d.x.size == 12


def test_simulate_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc, _, err = run(capsys, "simulate", "--params", FIX / "dynamics.json", "--out", blocker / "sub", "--no-oracle")
    assert rc == 2
    assert str(blocker) in err


# --- CSV round trip -------------------------------------------------------------


def test_csv_round_trip_byte_identical(tmp_path):
    src = FIX / "dynamics_red.csv"
    d = read_dataset(src)
    out = write_dataset(d, tmp_path / "dynamics_red.csv")
    assert out.read_bytes() == src.read_bytes()
    again = write_dataset(read_dataset(out), tmp_path / "again.csv")
    assert again.read_bytes() == out.read_bytes()


def test_csv_comments_allowed(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("# a comment\n# another\nx,y,sigma_y\n1.0,2.0,0.5\n")
    d = read_dataset(path)
    assert d.y[0] == 2.0


def test_write_csv_uses_repr(tmp_path):
    path = write_csv(tmp_path / "r.csv", ["v"], [(0.1 + 0.2,)])
    assert float(path.read_text().splitlines()[1]) == 0.1 + 0.2


# --- spectrum -----------------------------------------------------------------


def _lines(tmp_path, capsys, phi):
    rc, _, _ = run(capsys, "spectrum", "--params", FIX / "spectrum.json", "--out", tmp_path, "--phi", phi)
    assert rc == 0
    t = read_table(tmp_path / "lines.csv", ["offset_hz", "weight", "dnx", "dny", "dnz"])
    return {(int(a), int(b), int(c)): (o, w) for o, w, a, b, c in zip(*t.values())}


def test_spectrum_antinode_no_first_axial(tmp_path, capsys):
    lines = _lines(tmp_path, capsys, "antinode")
    assert (0, 0, 1) not in lines and (0, 0, -1) not in lines
    assert (0, 0, 0) in lines


def test_spectrum_node_no_carrier(tmp_path, capsys):
    lines = _lines(tmp_path, capsys, "node")
    assert (0, 0, 0) not in lines
    assert (0, 0, 2) not in lines
    assert (0, 0, 1) in lines


def test_spectrum_offsets_match_trap(tmp_path, capsys):
    lines = _lines(tmp_path, capsys, "mid")
    for mode, f in enumerate((1.45e6, 1.20e6, 0.87e6)):
        unit = [0, 0, 0]
        unit[mode] = 1
        assert lines[tuple(unit)][0] == pytest.approx(f, rel=1e-12)
        assert lines[tuple(-u for u in unit)][0] == pytest.approx(-f, rel=1e-12)


def test_phi_presets():
    assert PHI_PRESETS == {"antinode": 0.0, "mid": math.pi / 4, "node": math.pi / 2}


def test_spectrum_explicit_phi_equals_preset(tmp_path, capsys):
    a = _lines(tmp_path / "a", capsys, "node")
    b = _lines(tmp_path / "b", capsys, repr(math.pi / 2))
    assert a == b


def test_bad_phi_is_usage_error(tmp_path, capsys):
    rc, _, err = run(capsys, "spectrum", "--params", FIX / "spectrum.json", "--out", tmp_path, "--phi", "sideways")
    assert rc == 1
    assert "antinode" in err


def test_spectrum_profile_in_hz(tmp_path, capsys):
    run(capsys, "spectrum", "--params", FIX / "spectrum.json", "--out", tmp_path)
    prof = read_table(tmp_path / "profile.csv", ["delta_lc_hz", "rate"])
    grid = parse_grid(json.loads((FIX / "spectrum.json").read_text())["spectrum"]["grid_hz"])
    assert np.allclose(prof["delta_lc_hz"], grid, rtol=1e-12, atol=1e-6)
    assert np.all(prof["rate"] >= 0)


# --- fit ----------------------------------------------------------------------


def test_fit_dynamics_fixture(tmp_path, capsys):
    rc, out, _ = run(capsys, "fit", "dynamics", *(FIX / f"dynamics_{b}.csv" for b in ("red", "carrier", "blue")),
                     "--params", FIX / "dynamics.json", "--out", tmp_path)
    assert rc == 0
    assert "reduced_chi_sq" in out
    res = read_fit_result(tmp_path / "fit_dynamics.json")
    assert abs(res.parameters["n0"] - 0.30) <= 0.06
    assert abs(res.parameters["gamma_sc"] - 2.87e6) <= 0.02e6
    assert abs(res.parameters["eta"] - 0.0148) <= 0.0002


def test_fit_dynamics_any_file_order(tmp_path, capsys):
    files = [FIX / f"dynamics_{b}.csv" for b in ("blue", "red", "carrier")]
    run(capsys, "fit", "dynamics", *files, "--params", FIX / "dynamics.json", "--out", tmp_path)
    res = read_fit_result(tmp_path / "fit_dynamics.json")
    assert abs(res.parameters["eta"] - 0.0148) <= 0.0002


def test_fit_saturation_fixture(tmp_path, capsys):
    rc, _, _ = run(capsys, "fit", "saturation", FIX / "saturation_data.csv", "--out", tmp_path)
    assert rc == 0
    res = read_fit_result(tmp_path / "fit_saturation.json")
    assert abs(res.parameters["eta"] - 0.018) <= 0.004
    assert abs(res.parameters["gamma_sat"] - 8e6) <= 2e6


def test_fit_spectrum_fixture(tmp_path, capsys):
    rc, _, _ = run(capsys, "fit", "spectrum", FIX / "spectrum_data.csv", "--params", FIX / "spectrum.json",
                   "--out", tmp_path)
    assert rc == 0
    res = read_fit_result(tmp_path / "fit_spectrum.json")
    width_hz = res.derived["width_hz"][0]
    assert width_hz == pytest.approx(150e3, rel=0.05)
    assert res.parameters["width"] == pytest.approx(hz(width_hz), rel=1e-12)


def test_fit_dry_run(tmp_path, capsys):
    rc, out, _ = run(capsys, "fit", "saturation", FIX / "saturation_data.csv", "--out", tmp_path, "--dry-run")
    assert rc == 0
    assert "12 residuals" in out
    assert not (tmp_path / "fit_saturation.json").exists()
    rc, out, _ = run(capsys, "fit", "dynamics", *(FIX / f"dynamics_{b}.csv" for b in ("red", "carrier", "blue")),
                     "--params", FIX / "dynamics.json", "--dry-run")
    assert "60 residuals, 3 parameters" in out


def test_fit_malformed_csv_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    shutil.copy(FIX / "saturation_data.csv", bad)
    lines = bad.read_text().splitlines()
    lines[4] = "1e6,oops,3.0"
    bad.write_text("\n".join(lines) + "\n")
    rc, _, err = run(capsys, "fit", "saturation", bad, "--out", tmp_path)
    assert rc == 2
    assert f"{bad}:5:" in err
    assert "oops" in err


def test_fit_degenerate_named(tmp_path, capsys):
    rc, _, err = run(capsys, "fit", "dynamics", *(FIX / f"dynamics_{b}.csv" for b in ("red", "carrier", "blue")),
                     "--params", FIX / "dynamics.json", "--out", tmp_path, "--float", "c_factor")
    assert rc == 2
    assert "degenerate" in err and "c_factor" in err


def test_fit_wrong_arity_is_usage_error(tmp_path, capsys):
    rc, _, _ = run(capsys, "fit", "dynamics", FIX / "dynamics_red.csv", "--params", FIX / "dynamics.json")
    assert rc == 1


# --- validate -----------------------------------------------------------------


def test_validate_fresh_build(capsys):
    rc, out, _ = run(capsys, "validate")
    assert rc == 0
    assert "FAIL" not in out


def test_validate_corrupted_fixture(tmp_path, capsys):
    bad = tmp_path / "fx"
    shutil.copytree(FIX, bad)
    with open(bad / "dynamics_red.csv", "a") as fh:
        fh.write("0.5,1.0,0.1\n")
    rc, out, _ = run(capsys, "validate", "--fixtures", bad)
    assert rc == 3
    assert "[FAIL] fixture dynamics_red.csv" in out


def test_validate_zero_cooperativity_skips(tmp_path, capsys):
    rc, out, _ = run(capsys, "validate", "--params", _params_file(tmp_path, eta=0.0))
    assert rc == 0
    skip = [line for line in out.splitlines() if line.startswith("[SKIP]")]
    assert len(skip) == 1 and "eta = 0" in skip[0]


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
