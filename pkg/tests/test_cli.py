import json
import subprocess
import sys

import pytest

from ptchain.cli import RunConfig, config_from_args, main, validate
from ptchain.core import ChainSpec
from ptchain.spectrum import enumerate_levels

UNBROKEN_INIT = "-1+i,2-2i,1+i/2,3/2+i"


def test_spectrum_uniform_pair(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["spectrum", "--n", "2", "--gamma", "1", "--max-quanta", "10", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n1,n2,E_re,E_im,real"
    assert len(lines) == 67
    levels = enumerate_levels(ChainSpec.uniform_chain(2, 1.0), 10)
    first = lines[1].split(",")
    assert float(first[2]) == levels[0].energy.real
    manifest = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert manifest["config"]["gamma"] == 1.0 and manifest["summary"]["levels"] == 66
    assert "version" in manifest and "wall_time_s" in manifest


def test_rational_flags_exact():
    cfg = config_from_args(["phase-scan", "--n", "3", "--gamma", "1/12", "--omega-y-sq", "2/3",
                            "--axes", "wx:0:2:400,wz:0:2:400"])
    assert cfg.gamma == 1 / 12 and cfg.omega_sq == [1.0, 2 / 3, 1.0]
    assert cfg.axes == ["wx:0:2:400", "wz:0:2:400"]


def test_phase_scan_three_sites(tmp_path):
    out = tmp_path / "p.csv"
    args = ["phase-scan", "--n", "3", "--gamma", "1/12", "--omega-y-sq", "2/3",
            "--axes", "wx:0:2:400,wz:0:2:400", "--output", str(out)]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "wx,wz,class" and len(lines) == 160001


def test_trajectory_unbroken(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["trajectory", "--n", "2", "--omega-sq", "3,1", "--gamma", "0.5",
                 "--init", UNBROKEN_INIT, "--t-end", "200", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2002
    assert lines[1].split(",")[1:5] == ["-1", "1", "2", "-2"]
    rows = [list(map(float, line.split(","))) for line in lines[1:]]
    assert max(abs(complex(r[1], r[2])) for r in rows) < 10


def test_json_output(tmp_path):
    out = tmp_path / "s.json"
    assert main(["phase-point", "--n", "2", "--omega-sq", "3,1", "--gamma", "1/2",
                 "--format", "json", "--output", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["phase"] == "unbroken" and len(data["nu"]) == 2


def test_eigenfunction_and_poincare(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eigenfunction", "--n", "2", "--gamma", "1", "--occ", "1,0", "--samples", "5",
                 "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 26
    out = tmp_path / "q.csv"
    assert main(["poincare", "--n", "2", "--omega-sq", "3,1", "--gamma", "1/2",
                 "--init", "1+i/2,-2+2i,1+i/2,-3/2-3i/2", "--t-end", "100",
                 "--section-coord", "1", "--output", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "t,re_x1,re_v1"


def test_oracle_check(tmp_path):
    out = tmp_path / "o.json"
    assert main(["oracle-check", "--n", "2", "--gamma", "1", "--cutoff", "16",
                 "--format", "json", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["max_distance"] < 1e-4


def test_config_file_and_override(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"n": 2, "omega_sq": [3, 1], "gamma": "1/2", "max_quanta": 3}))
    cfg = config_from_args(["spectrum", "--config", str(cfg_file), "--max-quanta", "1"])
    assert cfg.max_quanta == 1 and cfg.gamma == 0.5 and cfg.omega_sq == [3.0, 1.0]
    cfg_file.write_text(json.dumps({"n": 2, "bogus": 1}))
    assert main(["spectrum", "--config", str(cfg_file)]) == 2


def test_validate_diagnostics():
    assert validate(RunConfig("spectrum", n=1)) == ["n must be >= 2"]
    d = validate(RunConfig("oracle-check", n=2, cutoff=-1))
    assert any("cutoff" in x for x in d)
    unbroken_cfg = RunConfig("spectrum", n=2, omega_sq=[3.0, 1.0], gamma=0.5, max_quanta=4)
    assert validate(unbroken_cfg) == []
    many = validate(RunConfig("trajectory", n=2, init=[1j], dt=-1, t_end=0, format="xml"))
    assert len(many) >= 4


@pytest.mark.parametrize("args, code", [
    (["spectrum", "--n", "1"], 2),
    (["trajectory", "--n", "2", "--gamma", "1", "--init", "1,2,3,4", "--dt", "0.5",
      "--dt-out", "0.5", "--t-end", "50"], 3),
    (["spectrum", "--n", "6", "--gamma", "1", "--max-quanta", "40"], 4),
    (["oracle-check", "--n", "4", "--cutoff", "20"], 4),
])
def test_exit_codes(args, code, capsys, tmp_path):
    assert main(args + ["--output", str(tmp_path / "x.csv")]) == code
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == code and err["error"] and err["message"]


def test_determinism_and_threads(tmp_path):
    outs = []
    for k, threads in enumerate(("1", "1", "8")):
        out = tmp_path / f"p{k}.csv"
        assert main(["phase-scan", "--n", "4", "--gamma", "3/10", "--omega-z-sq", "1",
                     "--omega-w-sq", "4", "--axes", "wxsq:0.05:3:150,wysq:0.05:3:150",
                     "--threads", threads, "--output", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_console_script(tmp_path):
    out = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "ptchain.cli", "spectrum", "--n", "3",
                           "--gamma", "1", "--max-quanta", "2", "--output", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 11
