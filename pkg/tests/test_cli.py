import csv
import json

import pytest

from cipherloop.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_zero_state(tmp_path, capsys):
    assert main(["run", "--config", "zero_state", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "results.csv")
    assert rows[0] == ["t", "u0", "x0", "x1"]
    assert len(rows) == 1 + 5
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[1:])
    trace = read_csv(tmp_path / "trace.csv")
    assert trace[0] == ["t", "k", "phase", "from", "to", "msg_type", "payload_bytes"]
    out = capsys.readouterr().out
    frames = int(out.split(" frames")[0].split()[-1])
    assert len(trace) - 1 == frames
    timing = read_csv(tmp_path / "timing.csv")
    assert len(timing) == 1 + 5
    assert sum(int(r[2]) for r in timing[1:]) + sum(1 for r in trace[1:] if r[0] == "0") == frames


def test_seeded_results_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "--config", "zero_state", "--seed", "9", "--out", str(out)]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()


def test_malformed_model_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\nA = "not a matrix"\n')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err
    missing = tmp_path / "missing.toml"
    assert main(["run", "--config", str(missing)]) == 2


def test_verify_zero_state(capsys):
    assert main(["verify", "--config", "zero_state"]) == 0
    out = capsys.readouterr().out
    assert "max |u_enc - u_fixed| = 0" in out
    assert "max |u_enc - u_float| = 0.000e+00" in out


def test_verify_coarse_fraction_bits(capsys):
    """l_f = 4: larger deviation from float FGM, still bit-exact to the fixed-point solver."""
    assert main(["verify", "--config", "coarse_lf4"]) == 0
    out = capsys.readouterr().out
    assert "bit-exact" in out
    dev = float(out.split("max |u_enc - u_float| = ")[1].split()[0])
    assert dev > 2**-10


def test_keygen(tmp_path):
    assert main(["keygen", "--bits", "512", "--dgk-bits", "384", "--seed", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "keys.json").read_text())
    N, p, q = (int(doc["ahe"][k], 16) for k in ("N", "p", "q"))
    assert N == p * q and N.bit_length() == 512
    dgk = {k: int(v, 16) if isinstance(v, str) else v for k, v in doc["dgk"].items()}
    assert dgk["n"] == dgk["p"] * dgk["q"] and dgk["t_param"] == 80
    assert (dgk["p"] - 1) % (dgk["u"] * dgk["v_p"]) == 0


@pytest.mark.slow
def test_run_bundled_double_integrator(tmp_path):
    assert main(["run", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "results.csv")[1:]
    assert len(rows) == 20
    norms = [float(r[2]) ** 2 + float(r[3]) ** 2 for r in rows]
    assert norms[-1] < 0.01 * norms[0]
