import json
import subprocess
import sys

import pytest

from acsalign import __version__
from acsalign.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_csv_to_stdout(capsys):
    code, out, _ = run(capsys, "simulate", "--p", "2", "--snr", "80:100:10", "--drops", "2", "--seed", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "scheme,p,snr_db,drops,sum_rate_mean_bpcu,sum_rate_std,rate_u1,rate_u2,rate_u3"
    assert len(lines) == 1 + 2 * 3


def test_simulate_json_to_file(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, out, _ = run(
        capsys, "simulate", "--p", "2", "--schemes", "acs", "--snr", "80:100:10",
        "--drops", "1", "--format", "json", "--out", str(path),
    )
    assert code == 0 and out == ""
    doc = json.loads(path.read_text())
    assert list(doc["schemes"]) == ["acs"]


def test_verify_report(capsys, tmp_path):
    path = tmp_path / "v.json"
    code, _, _ = run(capsys, "verify", "--p", "2", "--trials", "3", "--seed", "9", "--out", str(path))
    assert code == 0
    doc = json.loads(path.read_text())
    assert doc["p"] == 2 and doc["mode"] == "acs" and doc["trials"] == 3 and doc["seed"] == 9
    assert doc["full_rank_fraction"] == 1.0 and doc["achieved_dof"] == "6/5"
    assert doc["failures"] == [] and doc["max_leakage"] <= 1e-8


def test_verify_details_time_only(capsys):
    code, out, _ = run(capsys, "verify", "--p", "2", "--trials", "2", "--mode", "time-only", "--details")
    doc = json.loads(out)
    assert code == 0 and doc["full_rank_fraction"] == 0.0 and len(doc["draws"]) == 2


def test_zp_trace(capsys):
    code, out, _ = run(capsys, "zp-trace", "--p", "3", "--chain", "1", "--seed", "0")
    assert code == 0
    assert "zeroed blocks: [1, 4, 6, 9]" in out
    assert out.count("step ") == 4


def test_cb_check(capsys):
    code, out, _ = run(capsys, "cb-check", "--p", "3", "--seed", "1")
    assert code == 0
    assert "!" not in out.split("(", 1)[1].split(")", 1)[1]
    assert out.strip().splitlines()[-1].startswith("pattern residual:")


def test_elim_demo(capsys):
    code, out, _ = run(capsys, "elim-demo", "--seed", "4")
    assert code == 0
    dims = [line for line in out.splitlines() if line.startswith("null space dimension")]
    assert dims == ["null space dimension: 0", "null space dimension: 1"]


@pytest.mark.parametrize(
    "argv,kind",
    [
        (["simulate", "--p", "1"], "invalid_config"),
        (["simulate", "--p", "2", "--snr", "10:0:5"], "invalid_config"),
        (["simulate", "--p", "2", "--schemes", "foo"], "invalid_config"),
        (["verify", "--p", "2", "--mode", "other"], "invalid_config"),
        (["zp-trace", "--p", "3", "--chain", "4"], "invalid_config"),
        (["frobnicate"], "invalid_config"),
        ([], "invalid_config"),
    ],
)
def test_errors_are_json_on_stderr(capsys, argv, kind):
    code, out, err = run(capsys, *argv)
    assert code != 0 and out == ""
    payload = json.loads(err)
    assert payload["error"] == kind and payload["message"]


def test_output_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "verify", "--p", "2", "--trials", "1", "--out", str(tmp_path / "no" / "x.json"))
    assert code == 4
    assert json.loads(err)["error"] == "output_failed"


def test_module_entry_point_version():
    out = subprocess.run(
        [sys.executable, "-m", "acsalign", "--version"], capture_output=True, text=True, check=True
    )
    assert __version__ in out.stdout
