import json

import pytest

from smdbench.bench import import_records
from smdbench.cli import main


def test_run_and_table(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["run", "--problems", "SMD1,SMD2", "--runs", "2", "--pop", "10", "--out",
                 str(out), "--quiet", "--audit"]) == 0
    recs = import_records(out)
    assert [r.problem for r in recs] == ["SMD1", "SMD1", "SMD2", "SMD2"]
    assert all(r.audit_ll_fe == r.ll_fe for r in recs)
    meta = json.loads(out.read_text())["meta"]
    assert meta["config"]["N_p"] == 10
    capsys.readouterr()
    assert main(["table", "--in", str(out), "--compare", "published"]) == 0
    text = capsys.readouterr().out
    assert "375488" in text and "SMD2" in text
    assert main(["table", "--in", str(out), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert rows[0]["problem"] == "SMD1"
    csv_out = tmp_path / "t.csv"
    assert main(["table", "--in", str(out), "--format", "csv", "--out", str(csv_out)]) == 0
    assert csv_out.read_text().startswith("schema_version,problem")


def test_run_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    out = tmp_path / "r.csv"
    cfg.write_text(f"[run]\nproblems = SMD3\nruns = 1\npop = 8\nout = {out}\n"
                   "[ga]\nalpha_stop_upper = 1e-3\nmax_ll_calls = 100\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert "wrote 1 records" in capsys.readouterr().out
    assert import_records(out)[0].ll_calls <= 100


def test_run_rejects_unknown_setting(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[ga]\nspeed = 11\n")
    with pytest.raises(SystemExit):
        main(["run", "--config", str(cfg), "--problems", "SMD1"])


def test_psi(capsys):
    assert main(["psi", "--problem", "SMD2", "--xu", "0,0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["xl_star"] == [0.0, 0.0, 1.0]


def test_grid_and_catalog(tmp_path):
    g = tmp_path / "g.csv"
    assert main(["grid", "--problem", "SMD1", "--axes", "xu1,xu2", "--res", "5", "--out",
                 str(g)]) == 0
    lines = g.read_text().splitlines()
    assert lines[0] == "axis1,axis2,F,f" and len(lines) == 26
    c = tmp_path / "c.json"
    assert main(["catalog", "--out", str(c)]) == 0
    assert len(json.loads(c.read_text())) == 12
