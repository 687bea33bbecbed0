import io
import json

import pytest

from autoconv.cli import EXIT_INCOMPLETE, EXIT_INPUT, EXIT_OK, EXIT_STATE, main, round_up, truncate


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def line(text, key):
    return next(ln for ln in text.splitlines() if ln.startswith(key))


def test_truncate_and_round_up():
    assert truncate(0.8759999) == "0.875999"
    assert truncate(-0.5) == "-0.500000"
    assert round_up(1.2525001) == "1.252501"


def test_eval_examples():
    code, out, _ = run("eval", "--n", "1", "--coeffs", "2,2")
    assert code == EXIT_OK and "[proof] value = 1.0" in out
    code, out, _ = run("eval", "--n", "1", "--coeffs", "1,3", "--exact")
    assert code == EXIT_OK and "[proof] value = 5/4" in out
    code, out, _ = run("eval", "--n", "1", "--coeffs", "2,2", "--range", "both")
    assert "[theorem] value" in out and "range mode: theorem" in out


def test_eval_from_file(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("1\n3\n")
    code, out, _ = run("eval", "--n", "1", "--file", str(f), "--exact")
    assert code == EXIT_OK and "value = 5/4" in out


@pytest.mark.parametrize("argv", [
    ("eval", "--n", "1", "--coeffs", "-1,5"),
    ("eval", "--n", "1", "--coeffs", "1,2,3"),
    ("eval", "--n", "1", "--coeffs", "a,b"),
    ("eval", "--n", "1"),
    ("certify", "--n", "0", "--m", "4"),
    ("certify", "--n", "1"),
    ("nosuch",),
])
def test_input_errors(argv):
    code, _, _ = run(*argv)
    assert code == EXIT_INPUT


def test_certify_global_n1():
    code, out, _ = run("certify", "--n", "1", "--m", "64", "--method", "global-lipschitz")
    assert code == EXIT_OK
    assert line(out, "certified_bound") == "certified_bound = 0.875000"


def test_certify_cells_n2_and_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, out, _ = run("certify", "--n", "2", "--m", "64", "--output", str(a))
    assert code == EXIT_OK
    assert float(line(out, "certified_bound").split("=")[1]) >= 1.05
    assert "sigma <=" in out
    run("certify", "--n", "2", "--m", "64", "--output", str(b), "--threads", "2")
    assert a.read_bytes() == b.read_bytes()


def test_certify_checkpoint_resume(tmp_path):
    cp = tmp_path / "cp.json"
    full = tmp_path / "full.json"
    part = tmp_path / "part.json"
    run("certify", "--n", "2", "--m", "10", "--output", str(full))
    code, out, _ = run("certify", "--n", "2", "--m", "10", "--checkpoint", str(cp), "--max-chunks", "3")
    assert code == EXIT_INCOMPLETE and cp.exists()
    code, out, _ = run("certify", "--n", "2", "--m", "10", "--checkpoint", str(cp), "--output", str(part))
    assert code == EXIT_OK and "resuming" in out
    assert full.read_bytes() == part.read_bytes()
    # mismatched parameters against an existing checkpoint
    code, _, err = run("certify", "--n", "2", "--m", "11", "--checkpoint", str(cp))
    assert code == EXIT_STATE and "error" in err


def test_certify_corrupt_checkpoint(tmp_path):
    cp = tmp_path / "cp.json"
    cp.write_text("{broken")
    code, _, _ = run("certify", "--n", "1", "--m", "8", "--checkpoint", str(cp))
    assert code == EXIT_STATE


def test_certify_report(tmp_path):
    rep = tmp_path / "r.json"
    code, _, _ = run("certify", "--n", "1", "--m", "16", "--report", str(rep))
    assert code == EXIT_OK
    data = json.loads(rep.read_text())
    assert {"schema_version", "command", "inputs", "outputs", "derived", "environment", "wall_time_s"} <= set(data)
    assert data["outputs"]["elapsed_s"] is not None


def test_search_n1(tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "s.csv"
    code, out, _ = run("search", "--n", "1", "--seed", "7", "--restarts", "50", "--output", str(a),
                       "--csv", str(c))
    assert code == EXIT_OK
    assert float(line(out, "best_value").split()[2]) == pytest.approx(1.0, abs=1e-6)
    run("search", "--n", "1", "--seed", "7", "--restarts", "50", "--output", str(b))
    assert a.read_bytes() == b.read_bytes()
    assert len(c.read_text().splitlines()) == 51


def test_search_report(tmp_path):
    rep = tmp_path / "r.json"
    code, _, _ = run("search", "--n", "2", "--restarts", "5", "--max-iter", "50", "--report", str(rep))
    assert code == EXIT_OK
    data = json.loads(rep.read_text())
    assert data["inputs"]["config"]["n"] == 2
    assert data["outputs"]["best_value"] <= data["derived"]["c_upper_from_step_sup"]


def test_convert():
    code, out, _ = run("convert", "--c", "1.2748")
    assert code == EXIT_OK
    assert float(out.split("=")[-1]) == pytest.approx(1.2525, abs=1e-3)
    code, out, _ = run("convert", "--sigma", "1.1509")
    assert float(out.split("=")[-1]) == pytest.approx(1.5100, abs=2e-3)
    code, out, _ = run("convert", "--c", "2")
    assert float(out.split("=")[-1]) == pytest.approx(1.0, abs=1e-15)
    for bad in (("--c", "0"), ("--sigma", "-1"), ("--c", "1", "--sigma", "1")):
        assert run("convert", *bad)[0] == EXIT_INPUT


def test_convert_step_function():
    code, out, _ = run("convert", "--n", "1", "--coeffs", "2,2")
    assert code == EXIT_OK and "sup f*f = 2.0" in out and "0, 2.0" in out
