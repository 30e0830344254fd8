"""Command-line interface: runs, outputs, determinism, verification."""

import hashlib
import json

import numpy as np
import pytest

from ngvi.cli import (
    ProblemError,
    build_phi,
    bundled_problem_names,
    load_problem,
    main,
    parse_estimate,
)


def file_hash(path):
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def read_trace_rows(path):
    rows = []
    with open(path) as handle:
        for line in handle:
            if line.startswith("#"):
                continue
            it, value, grad, accepted, converged = line.split("\t")
            rows.append((int(it), float(value), float(grad), int(accepted), int(converged)))
    return rows


def test_bundled_problems_exist():
    names = bundled_problem_names()
    assert {"scalar_gaussian", "linear_chain", "logistic_1d", "range_slam_toy"} <= set(names)


def test_load_problem_unknown_name():
    with pytest.raises(ProblemError):
        load_problem("no_such_problem")


def test_build_phi_unknown_kind():
    with pytest.raises(ProblemError) as excinfo:
        build_phi("mystery", {}, 1, "f7")
    assert "f7" in str(excinfo.value)


def test_build_phi_logistic():
    phi = build_phi("logistic_bernoulli", {"feature": [2.0], "label": 1}, 1, "obs")
    t = 0.7
    expected = np.logaddexp(0.0, 2.0 * t) - 2.0 * t
    assert np.isclose(phi(np.array([t])), expected, atol=1e-14)


def test_build_phi_polynomial():
    phi = build_phi("polynomial", {"coefficients": [1.0, 0.0, 2.0]}, 1, "p")
    assert np.isclose(phi(np.array([3.0])), 1.0 + 2.0 * 9.0, atol=1e-14)


def test_run_scalar_gaussian(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "scalar_gaussian", "-o", str(out)]) == 0
    q = parse_estimate(str(out / "estimate.txt"))
    assert np.isclose(q.mean[0], 1.0, atol=1e-10)
    assert np.isclose(q.prec.full()[0, 0], 4.0, atol=1e-10)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["converged"] is True


def test_run_linear_chain_converges_at_iteration_one(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "linear_chain", "-o", str(out)]) == 0
    rows = read_trace_rows(str(out / "trace.txt"))
    assert rows[-1][0] == 1  # iteration counter
    assert rows[-1][4] == 1  # converged flag on the last row
    q = parse_estimate(str(out / "estimate.txt"))
    assert np.allclose(q.mean, [0.0, 1.0, 2.0, 3.0], atol=1e-10)
    expected_prec = (
        np.diag([2.0, 2.0, 2.0, 1.0])
        + np.diag([-1.0] * 3, 1)
        + np.diag([-1.0] * 3, -1)
    )
    assert np.allclose(q.prec.full(), expected_prec, atol=1e-10)


def test_run_is_byte_deterministic(tmp_path):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "logistic_1d", "-o", str(out)]) == 0
        hashes.append(
            (file_hash(str(out / "trace.txt")), file_hash(str(out / "estimate.txt")))
        )
    assert hashes[0] == hashes[1]


def test_estimate_round_trip_converges_without_stepping(tmp_path):
    out1 = tmp_path / "first"
    assert main(["run", "logistic_1d", "-o", str(out1)]) == 0
    q = parse_estimate(str(out1 / "estimate.txt"))

    raw = json.loads(open(_bundled_path("logistic_1d")).read())
    raw["init"] = {
        "form": "mean_precision",
        "mean": [float(x) for x in q.mean],
        "matrix_vech": [float(x) for x in q.prec.half],
    }
    restarted = tmp_path / "problem.json"
    restarted.write_text(json.dumps(raw))
    out2 = tmp_path / "second"
    assert main(["run", str(restarted), "-o", str(out2)]) == 0
    rows = read_trace_rows(str(out2 / "trace.txt"))
    assert rows[-1][0] == 0  # converged with zero steps
    q2 = parse_estimate(str(out2 / "estimate.txt"))
    assert np.array_equal(q2.mean, q.mean)
    assert np.array_equal(q2.prec.half, q.prec.half)


def _bundled_path(name):
    from importlib import resources

    return str(resources.files("ngvi") / "problems" / f"{name}.json")


def test_malformed_index_names_factor(tmp_path, capsys):
    raw = json.loads(open(_bundled_path("linear_chain")).read())
    raw["factors"][2]["indices"] = [1, 9]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["run", str(bad), "-o", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert raw["factors"][2]["id"] in err


def test_unknown_phi_kind_exits_one(tmp_path, capsys):
    raw = json.loads(open(_bundled_path("scalar_gaussian")).read())
    raw["factors"][0]["phi"]["kind"] = "mystery"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["run", str(bad), "-o", str(tmp_path / "out")]) == 1
    assert "mystery" in capsys.readouterr().err


def test_wrong_schema_exits_one(tmp_path, capsys):
    raw = json.loads(open(_bundled_path("scalar_gaussian")).read())
    raw["schema"] = "ngvi-problem/99"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["run", str(bad), "-o", str(tmp_path / "out")]) == 1
    assert "schema" in capsys.readouterr().err


def test_invalid_json_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad), "-o", str(tmp_path / "out")]) == 1
    assert "JSON" in capsys.readouterr().err


def test_zero_max_iters_override_exits_one(capsys, tmp_path):
    assert main(["run", "scalar_gaussian", "-o", str(tmp_path), "--max-iters", "0"]) == 1
    assert "max_iters" in capsys.readouterr().err


def test_max_iters_exhaustion_exits_two(tmp_path):
    # logistic_1d needs ~11 iterations; 2 is not enough
    out = tmp_path / "out"
    assert main(["run", "logistic_1d", "-o", str(out), "--max-iters", "2"]) == 2
    rows = read_trace_rows(str(out / "trace.txt"))
    assert rows[-1][4] == 0


def test_overrides_recorded_in_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(
        ["run", "scalar_gaussian", "-o", str(out), "--step-scale", "0.5", "--order", "7"]
    ) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["step_scale"] == 0.5
    assert manifest["rule"]["order"] == 7


def test_run_range_slam(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "range_slam_toy", "-o", str(out)]) == 0
    rows = read_trace_rows(str(out / "trace.txt"))
    values = [r[1] for r in rows]
    for earlier, later in zip(values, values[1:]):
        assert later <= earlier + 1e-9 * max(1.0, abs(earlier))
    q = parse_estimate(str(out / "estimate.txt"))
    # the robot estimate moves toward the true position (1, 1)
    assert np.linalg.norm(q.mean[:2] - np.array([1.0, 1.0])) < 0.1


def test_verify_scopes(capsys):
    for scope in ("kron", "fim", "deriv", "ngd"):
        assert main(["verify", "--scope", scope]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "FAIL" not in out
