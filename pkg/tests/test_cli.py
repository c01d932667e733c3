import csv
import io
import json
import subprocess
import sys

import pytest
import yaml

from nlmimo import cli

CASCADE_3 = [{"kind": "third_order", "domain": "passband", "p1db_db": 1.4},
             {"kind": "third_order", "domain": "baseband", "p1db_db": 4.2},
             {"kind": "quantizer", "bits": 3}]
FAST_SIM = {"n_symbols": 10_000, "n_drops": 3, "snr_edge_db": [12.0], "search": False}


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _run(tmp_path, command, data, *extra, out="out.csv"):
    path = _write(tmp_path, data)
    dest = tmp_path / out
    code = cli.main([command, "--config", path, "--out", str(dest), *extra])
    text = dest.read_text(encoding="utf-8") if dest.exists() else ""
    return code, text


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bussgang_identity_renders_inf(tmp_path):
    code, text = _run(tmp_path, "bussgang", {"bussgang": {"n_samples": 20_000}})
    assert code == 0
    rows = _rows(text)
    assert text.splitlines()[0].split(",") == cli.BUSSGANG_COLUMNS
    assert [r["stage"] for r in rows] == ["cascade"]
    assert rows[0]["gamma_g_db"] == "inf" and rows[0]["a"] == "1"


def test_bussgang_limiter_and_cascade(tmp_path):
    data = {"chain": [{"kind": "limiter", "domain": "baseband", "threshold_db": 6.0}],
            "bussgang": {"n_samples": 200_000}, "seed": 5}
    code, text = _run(tmp_path, "bussgang", data)
    assert code == 0
    rows = _rows(text)
    assert len(rows) == 2
    assert abs(float(rows[-1]["gamma_g_db"]) - 20.0) < 1.0
    assert all(r["seed"] == "5" and len(r["config_hash"]) == 12 for r in rows)

    code, text = _run(tmp_path, "bussgang", {"chain": CASCADE_3, "bussgang": {"n_samples": 200_000}})
    rows = _rows(text)
    assert [r["stage"].split(":")[0] for r in rows] == ["third_order", "third_order", "quantizer",
                                                       "cascade"]
    assert abs(float(rows[-1]["gamma_g_db"]) - 12.0) < 1.5


def test_json_format(tmp_path):
    code, text = _run(tmp_path, "bussgang", {"bussgang": {"n_samples": 20_000}}, "--format", "json",
                      out="out.json")
    assert code == 0
    assert json.loads(text)[0]["gamma_g_db"] == "inf"


@pytest.mark.parametrize("data", [{"bogus": 1}, {"scenario": {"n_users": 0}},
                                  {"chain": [{"kind": "warp"}]}])
def test_invalid_config_exits_1(tmp_path, data):
    code, _ = _run(tmp_path, "bussgang", data)
    assert code == cli.EXIT_CONFIG


def test_simulate_requires_seed(tmp_path):
    data = {"scenario": {"n_antennas": 16, "n_users": 2}, "simulate": FAST_SIM}
    assert _run(tmp_path, "simulate", data)[0] == cli.EXIT_CONFIG
    assert _run(tmp_path, "sweep", data)[0] == cli.EXIT_CONFIG
    assert _run(tmp_path, "simulate", data, "--seed", "4")[0] == cli.EXIT_OK


def test_bad_flags(tmp_path):
    data = {"seed": 1, "simulate": FAST_SIM}
    assert _run(tmp_path, "simulate", data, "--workers", "0")[0] == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        cli.main(["simulate"])


def test_simulate_byte_identical_across_workers(tmp_path):
    data = {"seed": 11, "scenario": {"n_antennas": 16, "n_users": 4}, "chain": CASCADE_3,
            "simulate": {**FAST_SIM, "snr_edge_db": [8.0, 14.0]}}
    _, one = _run(tmp_path, "simulate", data, "--workers", "1", out="w1.csv")
    _, three = _run(tmp_path, "simulate", data, "--workers", "3", out="w3.csv")
    assert one == three and len(_rows(one)) == 2
    assert _run(tmp_path, "simulate", data, "--seed", "12", out="s12.csv")[1] != one


def test_simulate_search_row(tmp_path):
    data = {"seed": 2, "scenario": {"n_antennas": 16, "n_users": 1, "r_min": 99.99},
            "simulate": {"n_symbols": 50_000, "n_drops": 2, "snr_lo_db": 5, "snr_hi_db": 15,
                         "eta": {"eta_db": 0.0}}}
    code, text = _run(tmp_path, "simulate", data)
    assert code == 0
    rows = _rows(text)
    final = rows[-1]
    assert final["kind"] == "snr_edge_sim" and final["reachable"] == "true"
    assert abs(float(final["snr_edge_db"]) - 9.8) < 0.5
    assert float(final["snr_edge_bound_db"]) == pytest.approx(9.80, abs=0.01)
    assert {r["kind"] for r in rows[:-1]} == {"bisect"}

    data["simulate"]["snr_hi_db"] = 6
    rows = _rows(_run(tmp_path, "simulate", data)[1])
    assert rows[-1]["reachable"] == "false" and "unreachable" in rows[-1]["status"]


def test_design_rows_and_infeasible_row(tmp_path):
    data = {"scenario": {"n_antennas": 64},
            "design": {"rows": [{"n_users": 4, "gamma_g_db": 12.0, "eta_db": 0.0},
                                {"n_users": 32, "snr_edge_db": 5.0, "eta_db": -4.0}],
                       "bits": [2, 3, 4], "n_samples": 50_000,
                       "p1db_pb": {"start": -2, "stop": 8, "step": 1},
                       "p1db_bb": {"start": -2, "stop": 8, "step": 1}}}
    code, text = _run(tmp_path, "design", data)
    assert code == 0
    rows = _rows(text)
    assert text.splitlines()[0].split(",")[:7] == ["beta", "pc", "b", "p1db_bb_db", "p1db_pb_db",
                                                    "gamma_g_db", "snr_edge_bound_db"]
    assert rows[0]["status"] == "ok" and rows[0]["b"] == "3"
    assert float(rows[0]["gamma_g_db"]) >= 12.0
    assert rows[1]["status"].startswith("infeasible")


def _sweep_data():
    return {"seed": 3, "scenario": {"n_antennas": 16, "n_users": 2},
            "simulate": FAST_SIM,
            "sweep": {"n_users": [1, 2], "chains": [[], CASCADE_3]}}


def test_sweep_grid_resume_and_cell_equivalence(tmp_path):
    data = _sweep_data()
    code, text = _run(tmp_path, "sweep", data)
    assert code == 0
    rows = _rows(text)
    assert len(rows) == 4 and len({r["cell"] for r in rows}) == 4
    cells = tmp_path / "out.csv.cells"
    markers = sorted(cells.glob("*.json"))
    assert len(markers) == 4

    # drop one marker and tamper with another: only the missing cell is recomputed
    markers[0].unlink()
    kept = json.loads(markers[1].read_text())
    kept[0]["status"] = "from-marker"
    markers[1].write_text(json.dumps(kept))
    code, again = _run(tmp_path, "sweep", data)
    rows2 = _rows(again)
    assert code == 0 and markers[0].exists()
    assert sum(r["status"] == "from-marker" for r in rows2) == 1
    fresh = [r for r in rows2 if r["status"] != "from-marker"]
    assert all(r in rows for r in fresh)

    # a cell equals a standalone simulate of the same scenario and chain
    solo = {**data, "scenario": {"n_antennas": 16, "n_users": 1}, "chain": CASCADE_3}
    solo.pop("sweep")
    _, stext = _run(tmp_path, "simulate", solo, out="solo.csv")
    srow = _rows(stext)[0]
    crow = next(r for r in rows if r["cell"].startswith("K1-") and r["chain"] == srow["chain"])
    strip = lambda r: {k: v for k, v in r.items() if k not in ("cell", "config_hash")}
    assert strip(crow) == strip(srow)


def test_sweep_failure_sets_exit_code(tmp_path):
    data = _sweep_data()
    data["sweep"]["power_control"] = ["adaptive"]
    data["scenario"]["sinr_th_db"] = 9.0
    # n_users beyond N fails inside the cell, not at config time
    data["sweep"]["n_users"] = [1, 40]
    code, text = _run(tmp_path, "sweep", data)
    assert code == cli.EXIT_RUNTIME
    rows = _rows(text)
    assert any(r["status"].startswith("error") for r in rows)
    assert any(r["status"] == "ok" for r in rows)


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, {"bussgang": {"n_samples": 20_000}})
    res = subprocess.run([sys.executable, "-m", "nlmimo", "bussgang", "--config", path],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "cascade" in res.stdout
