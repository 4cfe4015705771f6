import json

import numpy as np
import pytest

from concatmwpm.cli import main, parse_p_grid
from concatmwpm.dem import parse_dem
from concatmwpm.montecarlo import read_csv, sample, write_csv, write_events


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_p_grid_forms():
    assert parse_p_grid("0.01") == [0.01]
    assert parse_p_grid("0.01,0.02") == [0.01, 0.02]
    g = parse_p_grid("0.01:0.1:3")
    assert g == pytest.approx([0.01, np.sqrt(0.001), 0.1])


def test_simulate_bitflip_grid(tmp_path):
    code, out = _run(tmp_path, "a.csv", "simulate", "--mode", "bitflip", "--d", "3,5", "--p", "0.05:0.1:5", "--shots", "2000", "--seed", "1")
    assert code == 0
    text = out.read_text()
    header = json.loads(text.splitlines()[0][2:])
    assert header["mode"] == "bitflip" and header["seed"] == 1 and "artifact_version" in header
    rows = read_csv(text)
    assert len(rows) == 10
    assert {r["d"] for r in rows} == {3, 5}
    assert all(r["shots"] == 2000 for r in rows)


def test_simulate_is_deterministic(tmp_path, monkeypatch):
    args = ["simulate", "--mode", "circuit", "--d", "3", "--T", "2", "--p", "3e-3", "--shots", "5000", "--seed", "7"]
    monkeypatch.setenv("CONCATMWPM_WORKERS", "1")
    _, a = _run(tmp_path, "a.csv", *args)
    monkeypatch.setenv("CONCATMWPM_WORKERS", "3")
    _, b = _run(tmp_path, "b.csv", *args)
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a.read_text())
    assert [r["basis"] for r in rows] == ["Z", "X", "sum"]


@pytest.mark.parametrize("argv", [
    ["simulate", "--d", "3", "--p", "0.01", "--shots", "10", "--schedule", "1,2,3,4,5,6;1,2,3,4,5,6,7"],
    ["simulate", "--d", "4", "--p", "0.01", "--shots", "10"],
    ["simulate", "--d", "3", "--p", "0.01"],
    ["simulate", "--d", "3", "--p", "x:y:z", "--shots", "10"],
    ["simulate", "--mode", "other", "--d", "3", "--p", "0.01", "--shots", "10"],
    ["export-dem", "--d", "3", "--T", "1", "--p", "0.01", "--color", "R"],
    ["decode2d", "--d", "3"],
    ["enumerate-schedules", "--length", "0"],
    ["no-such-command"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_enumerate_short_length_is_empty(tmp_path):
    code, out = _run(tmp_path, "s.txt", "enumerate-schedules", "--length", "6")
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("# ")


def test_export_dem_round_trip(tmp_path):
    code, out = _run(tmp_path, "d.dem", "export-dem", "--d", "3", "--T", "2", "--p", "1e-3")
    assert code == 0
    text = out.read_text()
    dem = parse_dem(text)
    assert dem.num_detectors == 12 and len(dem) > 0
    # the same configuration always serializes identically
    _, again = _run(tmp_path, "e.dem", "export-dem", "--d", "3", "--T", "2", "--p", "1e-3")
    assert again.read_text() == text


def test_export_restricted_part_avoids_its_color(tmp_path):
    code, out = _run(tmp_path, "r.dem", "export-dem", "--d", "5", "--T", "2", "--p", "1e-3", "--color", "G", "--part", "restricted")
    assert code == 0
    dem = parse_dem(out.read_text())
    colors = [d.color.letter for d in dem.detectors]
    for m in dem.mechanisms:
        assert all(colors[i] != "g" for i in m.detectors)


def test_export_noiseless_is_header_only(tmp_path):
    code, out = _run(tmp_path, "z.dem", "export-dem", "--d", "3", "--T", "1", "--p", "0")
    assert code == 0
    assert [ln[:2] for ln in out.read_text().splitlines()] == ["# "]


def test_decode_events_file(tmp_path):
    _, dem_path = _run(tmp_path, "d.dem", "export-dem", "--d", "3", "--T", "2", "--p", "5e-3")
    dem = parse_dem(dem_path.read_text())
    batch = sample(dem, 300, seed=2)
    ev_path = tmp_path / "ev.b8"
    with open(ev_path, "wb") as fh:
        write_events(fh, batch.events)
    code, out = _run(tmp_path, "pred.txt", "decode", "--dem", str(dem_path), "--events", str(ev_path))
    assert code == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 300 and set("".join(lines)) <= {"0", "1"}
    wrong = sum(int(ln) != int(o[0]) for ln, o in zip(lines, batch.observables))
    assert wrong < 30


def test_decode_empty_dem_exits_3(tmp_path):
    _, dem_path = _run(tmp_path, "z.dem", "export-dem", "--d", "3", "--T", "1", "--p", "0")
    ev = tmp_path / "ev.b8"
    ev.write_bytes(b"")
    assert main(["decode", "--dem", str(dem_path), "--events", str(ev)]) == 3


def test_fit_on_synthetic_csv(tmp_path):
    rows = []
    for d in (5, 7, 9):
        for p in (0.01, 0.02, 0.03):
            y = 0.12 * (p / 0.069) ** (0.49 * (d - 17) + 8.5)
            rows.append(dict(d=d, T=1, p=p, schedule="-", basis="Z", shots=1, failures=0, pfail=y, ci_lo=y, ci_hi=y, seed=0))
    src = tmp_path / "in.csv"
    with open(src, "w") as fh:
        write_csv(fh, rows)
    code, out = _run(tmp_path, "fit.json", "fit", str(src))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["run_config"]["command"] == "fit"
    assert rep["subthreshold"]["p_star"] == pytest.approx(0.069, rel=1e-6)


def test_fit_missing_columns_exits_3(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("d,T\n3,1\n")
    assert main(["fit", str(src)]) == 3


def test_budget_exhaustion_exits_4(tmp_path):
    code, out = _run(tmp_path, "b.csv", "simulate", "--mode", "bitflip", "--d", "5", "--p", "0.001", "--ci", "0.01", "--max-shots", "10000")
    assert code == 4
    assert read_csv(out.read_text())[0]["shots"] == 10000


def test_decode2d_json(tmp_path):
    code, out = _run(tmp_path, "o.json", "decode2d", "--d", "7", "--errors", "3,4")
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["chosen"] == "r"
    assert rep["weights"] == {"r": 2, "g": 2, "b": 2}
    assert main(["decode2d", "--d", "3", "--faces", "99"]) == 2
