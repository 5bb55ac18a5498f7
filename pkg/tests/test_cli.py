import csv
import io
import json

import numpy as np
import pytest

from sideinfo import cli
from sideinfo.dist import MixtureSpec, bsc_source, deterministic, dsbs, dumps, mixture_to_json_obj
from sideinfo.oracle import Report


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def files(tmp_path):
    (tmp_path / "dsbs.json").write_text(dumps(dsbs(0.25)))
    (tmp_path / "det.json").write_text(dumps(deterministic()))
    spec = MixtureSpec((0.5, 0.5), (bsc_source(0.5, 0.1), bsc_source(0.5, 0.4)))
    (tmp_path / "mix.json").write_text(json.dumps(mixture_to_json_obj(spec)))
    return tmp_path


def test_quantities(capsys, files):
    code, out, err = run(capsys, "quantities", files / "dsbs.json", "--eps", "0.2")
    assert code == 0
    assert "seed=0x5e1f00d" in err
    table = rows(out)
    assert all(r["schema_version"] == str(cli.SCHEMA_VERSION) for r in table)
    hhe = [r for r in table if r["quantity"] == "hhe"][0]
    assert float(hhe["value"]) == pytest.approx(0.561278, abs=1e-6)
    assert hhe["witness"] == "i*=3"
    he = [r for r in table if r["quantity"] == "he"][0]
    assert he["witness"]


def test_verify_random(capsys):
    code, out, _ = run(capsys, "verify", "--theorem", "1", "--eps", "0.1", "--random", "3")
    assert code == 0
    table = rows(out)
    assert len(table) == 3 and all(r["passed"] == "true" for r in table)
    assert all(r["opt"] and r["he"] and r["hhe"] for r in table)


@pytest.mark.parametrize("theorem", ["2", "3", "4", "lemma5", "rcom"])
def test_verify_other_checks(capsys, files, theorem):
    code, out, _ = run(capsys, "verify", files / "dsbs.json", "--theorem", theorem,
                       "--eps", "0.1", "--delta", "4", "--adversarial", "3", "--n", "6")
    assert code == 0, out
    assert all(r["passed"] == "true" for r in rows(out))


def test_verify_failure_exit_code(capsys, files, monkeypatch):
    monkeypatch.setattr(cli, "verify_theorem1", lambda pmf, eps, strict=False: Report("1", eps, {}, False, detail="x"))
    code, out, _ = run(capsys, "verify", files / "dsbs.json", "--theorem", "1")
    assert code == 1
    assert rows(out)[0]["passed"] == "false"


def test_malformed_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{bad")
    code, out, err = run(capsys, "quantities", bad, "--eps", "0.1")
    assert code == 2 and out == ""
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit_code"] == 2 and payload["error"] == "InputError"


def test_usage_error_is_json(capsys):
    code, _, err = run(capsys, "quantities")
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 2


def test_budget_exit_code(capsys, files, monkeypatch):
    monkeypatch.setenv("SIDEINFO_BUDGET", "product=4,subset=2")
    code, _, err = run(capsys, "verify", files / "dsbs.json", "--theorem", "1")
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "BudgetExceeded"


def test_bad_epsilon(capsys, files):
    code, _, _ = run(capsys, "quantities", files / "dsbs.json", "--eps", "1.5")
    assert code == 2


def stream(path, symbols):
    path.write_text("".join(f"{s}\n" for s in symbols))
    return path


def test_roundtrip_deterministic_source(capsys, files):
    xs = np.random.default_rng(0).integers(0, 2, 1000)
    x = stream(files / "x.txt", xs)
    y = stream(files / "y.txt", xs)
    code, out, _ = run(capsys, "roundtrip", files / "det.json", "--symbols", x, "--side", y, "--delta", "2")
    assert code == 0
    r = rows(out)[0]
    assert r["symbols"] == r["decoded_ok"] == "1000"
    assert r["total_bits"] == str(1000 * 5)


def test_roundtrip_empty_and_errors(capsys, files):
    e = stream(files / "e.txt", [])
    code, out, _ = run(capsys, "roundtrip", files / "det.json", "--symbols", e, "--side", e, "--delta", "2")
    assert code == 0 and rows(out)[0]["total_bits"] == "0"
    bad = stream(files / "bad.txt", [0, 7])
    y = stream(files / "y2.txt", [0, 0])
    code, _, err = run(capsys, "roundtrip", files / "det.json", "--symbols", bad, "--side", y, "--delta", "2")
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["error"] == "UnknownSymbol"
    short = stream(files / "short.txt", [0])
    code, _, err = run(capsys, "roundtrip", files / "det.json", "--symbols", y, "--side", short, "--delta", "2")
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["error"] == "StreamLengthMismatch"


def test_library_roundtrip_mismatch():
    from sideinfo.codes import EpsilonProfile
    from sideinfo.errors import StreamLengthMismatch
    det = deterministic()
    with pytest.raises(StreamLengthMismatch):
        cli.encode_decode_roundtrip(det, ["0"], [], 2.0, EpsilonProfile.uniform(det, 0.1))


def test_encode_decode_files(capsys, files):
    rng = np.random.default_rng(5)
    xs = rng.integers(0, 2, 500)
    ys = np.where(rng.random(500) < 0.25, 1 - xs, xs)
    x = stream(files / "x.txt", xs)
    y = stream(files / "y.txt", ys)
    bits, codec, dec = files / "s.bin", files / "codec.json", files / "dec.txt"
    code, out, _ = run(capsys, "encode", files / "dsbs.json", "--symbols", x, "--bits", bits,
                       "--codec", codec, "--delta", "4", "--eps-budget", "uniform:0.1")
    assert code == 0
    code, out, _ = run(capsys, "decode", "--codec", codec, "--bits", bits, "--side", y,
                       "--symbols-out", dec, "--workers", "2")
    assert code == 0
    decoded = dec.read_text().splitlines()
    assert len(decoded) == 500
    ok = sum(d == str(v) for d, v in zip(decoded, xs))
    assert ok / 500 > 0.8


def test_budget_file(capsys, files):
    (files / "budget.json").write_text(json.dumps({"0": 0.2, "1": 0.05}))
    from sideinfo.cli import parse_budget
    prof = parse_budget(str(files / "budget.json"), dsbs(0.25))
    assert prof.per_symbol == (0.2, 0.05)
    with pytest.raises(Exception):
        parse_budget("uniform:x", dsbs(0.25))


@pytest.mark.parametrize("quantity", ["rcom", "ohs", "mixture", "spectrum"])
def test_sweep(capsys, files, quantity):
    src = files / ("mix.json" if quantity == "mixture" else "dsbs.json")
    code, out, _ = run(capsys, "sweep", src, "--quantity", quantity, "--n-max", "3", "--samples", "1000")
    assert code == 0
    table = rows(out)
    assert table and list(table[0]) == ["schema_version", "quantity", "n", "value", "prediction", "gap", "stderr", "method"]


def test_diagnose(capsys, files):
    code, out, _ = run(capsys, "diagnose", files / "mix.json", "--condition1", "--n-max", "4")
    assert code == 0 and len(rows(out)) == 4
    code, out, _ = run(capsys, "diagnose", files / "mix.json", "--boundedness", "--n-max", "4")
    assert code == 0 and len(rows(out)) == 4


def test_output_file(capsys, files):
    target = files / "out.csv"
    code, out, _ = run(capsys, "quantities", files / "dsbs.json", "--eps", "0.1", "-o", target)
    assert code == 0 and out == "" and target.read_text().startswith("schema_version")


def test_outputs_independent_of_workers(capsys, files):
    runs = []
    for workers in (1, 3):
        _, a, _ = run(capsys, "verify", "--theorem", "2", "--eps", "0.1", "0.5", "--random", "4", "--workers", workers)
        _, b, _ = run(capsys, "sweep", files / "dsbs.json", "--quantity", "spectrum", "--n-max", "3",
                      "--samples", "1000", "--workers", workers)
        runs.append((a, b))
    assert runs[0] == runs[1]
