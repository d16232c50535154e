import json

import numpy as np
import pytest

from zshift import cases, cli, csvio


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def case_file(tmp_path):
    path = tmp_path / "case.toml"
    path.write_text(cases.case_text("case_study"))
    return path


def test_flow_no_load_prints_zero_angles(tmp_path, capsys):
    assert run("flow", "--config", "builtin:no_load", "--out", tmp_path) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[2:]]
    assert len(rows) == 6 and all(r[1] == "0.000" for r in rows)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "flow" and manifest["outputs"] == ["flow.csv"]
    assert manifest["exit_code"] == 0 and len(manifest["config_sha256"]) == 64


def test_flow_case_study_angles(case_file, tmp_path, capsys):
    assert run("flow", "--config", case_file, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    for node, deg in (("N1", "0.970"), ("N2", "2.529"), ("N3", "4.148"), ("N4", "4.888")):
        assert any(line.split()[:2] == [node, deg] for line in out.splitlines()[2:])


def test_malformed_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("reference_node = 'P'\n[base\n")
    assert run("flow", "--config", bad, "--out", tmp_path / "o") == 2
    assert "bad.toml" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    text = cases.case_text("case_study").replace("id_a = 150.0", "id_a = 150000.0")
    cfg = tmp_path / "collapse.toml"
    cfg.write_text(text)
    assert run("flow", "--config", cfg, "--out", tmp_path / "o") == 3
    assert "numerical failure" in capsys.readouterr().err


def test_lockfile_blocks_concurrent_runs(tmp_path):
    (tmp_path / cli.LOCK_NAME).write_text("1")
    assert run("flow", "--config", "builtin:no_load", "--out", tmp_path) == 2


def test_bad_grid_spec(tmp_path):
    assert run("impedance", "--config", "builtin:passive", "--grid", "1:x:3",
               "--out", tmp_path) == 2


def test_impedance_mfd_network_pn_off_diagonals_vanish(tmp_path):
    assert run("impedance", "--config", "builtin:passive", "--domain", "pn",
               "--out", tmp_path) == 0
    load, _ = csvio.read_response(tmp_path / "z_load_pn.csv")
    src, _ = csvio.read_response(tmp_path / "z_source_pn.csv")
    assert load.grid == src.grid
    for z in (load, src):
        assert np.abs(z.values[:, 0, 1]).max() < 1e-10
        assert np.abs(z.values[:, 1, 0]).max() < 1e-10


def test_impedance_is_deterministic_and_verbose(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("impedance", "--config", "builtin:case_study", "--verbose", "--seed", 7,
                   "--out", d) == 0
    names = sorted(p.name for p in a.iterdir())
    assert "local_C3_dq.csv" in names and "global_C3_dq.csv" in names
    for name in names:
        if name.endswith(".csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rotate_zero_and_round_trip(tmp_path):
    run("impedance", "--config", "builtin:case_study", "--verbose", "--out", tmp_path / "imp")
    src = tmp_path / "imp" / "local_C2_dq.csv"
    assert run("rotate", src, 0, "--out", tmp_path / "r0") == 0
    body = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert body(tmp_path / "r0" / "local_C2_dq_global.csv") == body(src)

    assert run("rotate", src, 2.529, "--out", tmp_path / "r1") == 0
    g = tmp_path / "r1" / "local_C2_dq_global.csv"
    assert run("rotate", g, 2.529, "--out", tmp_path / "r1") == 2  # already global
    assert run("rotate", g, 2.529, "--inverse", "--node", "N2", "--out", tmp_path / "r2") == 0
    back, _ = csvio.read_response(tmp_path / "r2" / "local_C2_dq_global_local.csv")
    orig, _ = csvio.read_response(src)
    assert back.frame == orig.frame
    scale = np.linalg.norm(orig.values, axis=(1, 2))
    err = np.linalg.norm(back.values - orig.values, axis=(1, 2)) / scale
    assert err.max() < 1e-12


def test_rotate_pn_keeps_diagonal_columns(tmp_path):
    run("impedance", "--config", "builtin:case_study", "--verbose", "--domain", "pn",
        "--out", tmp_path / "imp")
    src = tmp_path / "imp" / "local_C4_pn.csv"
    assert run("rotate", src, 4.888, "--out", tmp_path / "r") == 0
    out = tmp_path / "r" / "local_C4_pn_global.csv"
    cols = lambda p: [l.split(",") for l in p.read_text().splitlines() if l[0].isdigit()]
    for a, b in zip(cols(src), cols(out)):
        assert a[1:3] == b[1:3] and a[7:9] == b[7:9]
        assert a[3:7] != b[3:7]


def test_compare_self_and_grid_mismatch(tmp_path, capsys):
    run("impedance", "--config", "builtin:case_study", "--out", tmp_path / "a")
    run("impedance", "--config", "builtin:case_study", "--grid", "1:1000:7",
        "--out", tmp_path / "b")
    z = tmp_path / "a" / "z_load_dq.csv"
    assert run("compare", z, z, "--out", tmp_path / "c") == 0
    summary = (tmp_path / "c" / "compare_summary.csv").read_text().splitlines()[1:]
    assert all(float(r.split(",")[1]) == 0 and float(r.split(",")[3]) == 0 for r in summary)
    bode = (tmp_path / "c" / "bode.csv").read_text().splitlines()
    assert bode[0] == "freq_hz,element,series,mag_db,phase_deg"
    assert len(bode) == 1 + 2 * 4 * 31
    assert run("compare", z, tmp_path / "b" / "z_load_dq.csv", "--out", tmp_path / "d") == 2


def test_sweep_undersized_dt(tmp_path, capsys):
    assert run("sweep", "--config", "builtin:passive", "--dt", "1e-3",
               "--out", tmp_path) == 2
    assert "need dt <=" in capsys.readouterr().err


def test_passive_sweep_compares_at_oracle_floor(tmp_path):
    grid = "2:500:5:log"
    run("impedance", "--config", "builtin:passive", "--grid", grid, "--out", tmp_path / "a")
    assert run("sweep", "--config", "builtin:passive", "--grid", grid,
               "--out", tmp_path / "m") == 0
    assert (tmp_path / "m" / "sweep_diagnostics.csv").exists()
    assert run("compare", tmp_path / "a" / "z_load_dq.csv",
               tmp_path / "m" / "measured_load_dq.csv", "--tol-mag", "1e-3",
               "--tol-phase", "0.1", "--out", tmp_path / "c") == 0


def test_stability_verdicts(tmp_path, case_file):
    grid = "0.1:10000:1000:log"
    assert run("stability", "--config", "builtin:passive", "--grid", grid,
               "--out", tmp_path / "p") == 0
    assert run("stability", "--config", case_file, "--grid", grid, "--out", tmp_path / "c") == 0
    moved = tmp_path / "moved.toml"
    moved.write_text(case_file.read_text().replace('reference_node = "P"',
                                                   'reference_node = "N4"'))
    assert run("stability", "--config", moved, "--grid", grid, "--out", tmp_path / "m") == 0
    a = (tmp_path / "c" / "stability_report.txt").read_text()
    b = (tmp_path / "m" / "stability_report.txt").read_text()
    assert "verdict: stable" in a and "verdict: stable" in b
    assert (tmp_path / "c" / "nyquist.csv").exists()


def test_unstable_case_exit_1(tmp_path):
    text = cases.case_text("case_study").replace("kp_pll = 0.00758", "kp_pll = 0.0758") \
        .replace("ki_pll = 0.152", "ki_pll = 15.2")
    cfg = tmp_path / "fast_pll.toml"
    cfg.write_text(text)
    assert run("stability", "--config", cfg, "--grid", "0.1:10000:1000:log",
               "--out", tmp_path / "o") == 1
