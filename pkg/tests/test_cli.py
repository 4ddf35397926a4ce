import subprocess
import sys

import numpy as np
import pytest

from bhtbp.cli import main
from bhtbp.harness import CSV_HEADER
from bhtbp.model import read_matrix, read_vector

SMALL = "n = 64\nm = 32\ncolumn_weight = 3\nq = 0.1\ntrials = 2\nsnr_points = 20, 40\n"


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_sweep_writes_csv(tmp_path):
    out = tmp_path / "out.csv"
    cfg = write_cfg(tmp_path, SMALL + f"output = {out}\n")
    assert main(["sweep", "--config", cfg]) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 2 * 5
    assert {l.split(",")[0] for l in lines[1:]} == {"BHT-BP", "CS-BP", "CS-BP-NS", "MAP-floor-baseline", "Oracle"}


def test_sweep_to_stdout_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["sweep", "--config", cfg]) == 0
    first = capsys.readouterr().out
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text() == first


@pytest.mark.parametrize("text", ["nonsense = 1\n", "trials = -3\n", "q = two\n"])
def test_sweep_config_errors_exit_1(tmp_path, text, capsys):
    assert main(["sweep", "--config", write_cfg(tmp_path, text)]) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_config_exit_1(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_once_prints_one_row(capsys):
    assert main(["once", "--snr", "30", "--algo", "BHT-BP", "--seed", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == CSV_HEADER
    algo, snr, trials, ser, nmse, rt = lines[1].split(",")
    assert (algo, float(snr), int(trials)) == ("BHT-BP", 30.0, 1)
    assert 0.0 <= float(ser) <= 1.0 and float(nmse) >= 0.0


def test_once_bad_seed_exit_1():
    assert main(["once", "--snr", "30", "--algo", "Oracle", "--seed", "-1"]) == 1
    assert main(["once", "--snr", "30", "--algo", "Oracle", "--seed", str(2**64)]) == 1


def test_once_dump_marginal(tmp_path, capsys):
    path = tmp_path / "m.csv"
    cfg = write_cfg(tmp_path, SMALL + "iterations = 3\n")
    assert main(["once", "--snr", "20", "--algo", "CS-BP-NS", "--seed", "1", "--config", cfg,
                 "--dump-marginal", "5", "--dump-path", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,value,mass"
    assert len(lines) == 1 + 3 * 256
    rows = np.array([[float(v) for v in l.split(",")] for l in lines[1:]])
    for it in np.unique(rows[:, 0]):
        assert rows[rows[:, 0] == it, 2].sum() == pytest.approx(1.0)
    assert main(["once", "--snr", "20", "--algo", "BHT-BP", "--seed", "1", "--config", cfg,
                 "--dump-marginal", "64", "--dump-path", str(path)]) == 1
    assert main(["once", "--snr", "20", "--algo", "Oracle", "--seed", "1", "--config", cfg,
                 "--dump-marginal", "0", "--dump-path", str(path)]) == 1


def test_once_saves_instance_and_references(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    refs = tmp_path / "refs.csv"
    assert main(["once", "--snr", "25", "--algo", "Oracle", "--seed", "2", "--config", cfg,
                 "--save-instance", str(tmp_path / "inst"), "--export-references", str(refs)]) == 0
    a = read_matrix(tmp_path / "inst" / "matrix.txt")
    x = read_vector(tmp_path / "inst" / "x0.txt")
    z = read_vector(tmp_path / "inst" / "z.txt")
    assert (a.m, a.n) == (32, 64) and x.shape == (64,) and z.shape == (32,)
    assert refs.read_text().splitlines()[0] == "value,r0,r1"


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) >= 4 and all(l.startswith("PASS") for l in out)


def test_console_script_entry_point():
    done = subprocess.run([sys.executable, "-m", "bhtbp.cli", "once", "--snr", "30", "--algo", "Nope",
                           "--seed", "0"], capture_output=True, text=True)
    assert done.returncode == 1
    assert "invalid choice" in done.stderr
