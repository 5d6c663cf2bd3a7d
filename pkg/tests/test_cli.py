import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from qnd_ergodicity import cli
from qnd_ergodicity.errors import ConfigError

QUBIT = {"eigenvalues": [0, 1], "weights": [0.5, 0.5], "epsilon": 1, "sigma": 1}
EIGEN = {"eigenvalues": [2.0], "weights": [1.0], "epsilon": 1, "sigma": 1, "n_probes": 100}

MOMENTS_SCHEMA = {
    "type": "object",
    "required": ["config", "n_critical", "probe_moments", "qbar_statistics"],
    "properties": {
        "n_critical": {"type": "number", "exclusiveMinimum": 0},
        "probe_moments": {
            "type": "object",
            "required": ["mean_q", "second_q", "cross_qq", "cov_qq", "var_q"],
            "additionalProperties": {"type": "number"},
        },
        "qbar_statistics": {
            "type": "object",
            "required": ["mean", "variance", "variance_over_eps2", "n_critical"],
            "additionalProperties": {"type": "number"},
        },
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "n_realizations", "qbar_mean", "qbar_mean_se", "qbar_var", "qbar_var_se",
        "n_critical", "peak_occupancy", "unassigned_fraction", "verdict",
    ],
    "additionalProperties": False,
    "properties": {
        "n_realizations": {"type": "integer", "minimum": 2},
        "qbar_mean": {"type": "number"},
        "qbar_mean_se": {"type": "number", "minimum": 0},
        "qbar_var": {"type": "number", "minimum": 0},
        "qbar_var_se": {"type": "number", "minimum": 0},
        "n_critical": {"type": "number", "exclusiveMinimum": 0},
        "unassigned_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "peak_occupancy": {
            "type": "array",
            "items": {"type": "array", "prefixItems": [{"type": "integer"}, {"type": "number"}]},
        },
        "verdict": {"enum": ["Ergodic", "NonErgodic"]},
    },
}


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return _write


def run(*args):
    return cli.main([str(a) for a in args])


def test_moments_eigenstate(write_config, tmp_path):
    assert run("moments", "--config", write_config(EIGEN), "--out", tmp_path) == 0
    data = json.loads((tmp_path / "moments.json").read_text())
    assert data["probe_moments"]["cov_qq"] == 0.0
    jsonschema.validate(data, MOMENTS_SCHEMA)


def test_moments_qubit(write_config, tmp_path):
    assert run("moments", "--config", write_config({**QUBIT, "n_probes": 4}), "--out", tmp_path) == 0
    data = json.loads((tmp_path / "moments.json").read_text())
    assert data["qbar_statistics"]["variance_over_eps2"] == pytest.approx(0.5, rel=1e-15)
    jsonschema.validate(data, MOMENTS_SCHEMA)
    assert json.loads(json.dumps(data)) == data


def _read_curve(path):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "density"]
    return np.array(rows[1:], dtype=float).T


def test_pdf_qbar_two_maxima(write_config, tmp_path):
    # separation 1 vs 4 sigma/sqrt(N) = 0.4
    assert run("pdf", "qbar", "--config", write_config({**QUBIT, "n_probes": 100}), "--out", tmp_path) == 0
    x, y = _read_curve(tmp_path / "pdf_qbar.csv")
    assert x.size == 1024
    interior = (y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])
    assert interior.sum() == 2
    assert np.trapezoid(y, x) == pytest.approx(1.0, abs=1e-3)


def test_pdf_qbar_merged_peaks_single_maximum(write_config, tmp_path):
    assert run("pdf", "qbar", "--config", write_config({**QUBIT, "n_probes": 2}), "--out", tmp_path) == 0
    x, y = _read_curve(tmp_path / "pdf_qbar.csv")
    assert ((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])).sum() == 1


def test_pdf_qbar_distant_narrow_peaks(write_config, tmp_path):
    cfg = {"eigenvalues": [0, 100, 250], "weights": [0.2, 0.3, 0.5], "sigma": 0.1, "n_probes": 100}
    assert run("pdf", "qbar", "--config", write_config(cfg), "--out", tmp_path) == 0
    x, y = _read_curve(tmp_path / "pdf_qbar.csv")
    assert x.size == 1024
    assert np.trapezoid(y, x) == pytest.approx(1.0, abs=1e-3)


def test_pdf_qbar_given_q1(write_config, tmp_path):
    assert run("pdf", "qbar_given_q1", "--q1", "0.3", "--config", write_config({**QUBIT, "n_probes": 10}),
               "--out", tmp_path, "--format", "json") == 0
    data = json.loads((tmp_path / "pdf_qbar_given_q1.json").read_text())
    x, y = np.array(data["x"]), np.array(data["density"])
    assert x[np.argmax(y)] == pytest.approx(0.3, abs=2e-3)
    assert run("pdf", "qbar_given_q1", "--config", write_config(QUBIT), "--out", tmp_path) == cli.EXIT_CONFIG


def test_pdf_rho_without_probes_is_pure(write_config, tmp_path):
    cfg = {**QUBIT, "amplitudes": [math.sqrt(0.5), [0, math.sqrt(0.5)]]}
    assert run("pdf", "rho", "--n", "0", "--config", write_config(cfg), "--out", tmp_path) == 0
    data = json.loads((tmp_path / "rho.json").read_text())
    rho = np.array([complex(re, im) for re, im in data["entries"]]).reshape(data["shape"])
    c = np.array([math.sqrt(0.5), 1j * math.sqrt(0.5)])
    np.testing.assert_allclose(rho, np.outer(c, c.conj()), atol=1e-15)
    assert data["purity"] == pytest.approx(1.0)


def test_pdf_rho_missing_amplitudes(write_config, tmp_path):
    assert run("pdf", "rho", "--config", write_config(QUBIT), "--out", tmp_path) == cli.EXIT_DOMAIN


def test_pdf_decimation(write_config, tmp_path):
    path = write_config({"eigenvalues": [0, 1, 2], "weights": [0.2, 0.3, 0.5], "n_probes": 3})
    assert run("pdf", "decimation", "--qbar", "0.8", "--config", path, "--out", tmp_path) == 0
    a, p = _read_two(tmp_path / "decimation.csv", ["eigenvalue", "posterior"])
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert run("pdf", "decimation", "--positions", "0.1,1.2,1.1", "--format", "json",
               "--config", path, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "decimation.json").read_text())
    assert sum(data["posterior"]) == pytest.approx(1.0, abs=1e-12)
    for row in data["trajectory"]:
        assert sum(row) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(data["posterior"], p, atol=1e-12)
    assert run("pdf", "decimation", "--positions", "0.1,1.2", "--config", path, "--out", tmp_path) == cli.EXIT_DOMAIN
    assert run("pdf", "decimation", "--config", path, "--out", tmp_path) == cli.EXIT_CONFIG


def _read_two(path, header):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == header
    return np.array(rows[1:], dtype=float).T


@pytest.mark.parametrize("cfg, verdict", [(EIGEN, "Ergodic"), ({**QUBIT, "n_probes": 100}, "NonErgodic")])
def test_ergodicity_verdicts(write_config, tmp_path, cfg, verdict):
    assert run("ergodicity", "--config", write_config(cfg), "--out", tmp_path, "--seed", 17) == 0
    data = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(data["report"], REPORT_SCHEMA)
    assert data["verdict"] == verdict
    assert data["seed"] == 17
    assert data["config"]["eigenvalues"] == cfg["eigenvalues"]
    assert data["config"]["n_probes"] == cfg["n_probes"]
    assert data["config"]["ensemble"] == {"m": 10_000, "seed": 17}
    assert f"verdict: {verdict}" in (tmp_path / "report.txt").read_text()


def test_ergodicity_byte_identical(write_config, tmp_path):
    path = write_config({**QUBIT, "n_probes": 20, "ensemble": {"m": 5000, "seed": 3}})
    outs = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert run("ergodicity", "--config", path, "--out", out, "--workers", workers) == 0
        outs.append(((out / "report.json").read_bytes(), (out / "report.txt").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_recover(write_config, tmp_path):
    path = write_config({"eigenvalues": [0, 1, 3], "weights": [0.2, 0.3, 0.5], "sigma": 2, "ensemble": {"m": 20000}})
    assert run("recover", "--monte-carlo", "--config", path, "--out", tmp_path) == 0
    data = json.loads((tmp_path / "recovered.json").read_text())
    assert data["quadrature"]["max_abs_deviation"] < 1e-8
    assert data["monte_carlo"]["max_deviation_from_quadrature_se"] < 3


def test_recover_single_level(write_config, tmp_path):
    assert run("recover", "--config", write_config({"eigenvalues": [4], "weights": [1]}), "--out", tmp_path) == 0
    data = json.loads((tmp_path / "recovered.json").read_text())
    assert data["quadrature"]["weights"] == pytest.approx([1.0], abs=1e-12)


def test_sample(write_config, tmp_path):
    path = write_config({**QUBIT, "n_probes": 3, "sigma": 0.1})
    assert run("sample", "--m", 50, "--config", path, "--out", tmp_path) == 0
    with (tmp_path / "samples.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["qbar", "assigned_peak"]
    assert len(rows) == 51
    assert run("sample", "--m", 50, "--show-branch", "--positions", "--config", path, "--out", tmp_path) == 0
    with (tmp_path / "samples.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["branch", "qbar", "assigned_peak", "q1", "q2", "q3"]
    for row in rows[1:]:
        qs = [float(v) for v in row[3:]]
        assert float(row[1]) == pytest.approx(np.mean(qs), abs=1e-14)
        assert row[2] == row[0]


def test_exit_codes(write_config, tmp_path):
    assert run("moments", "--config", tmp_path / "missing.json") == cli.EXIT_IO
    assert run("moments", "--config", write_config({"weights": [1]})) == cli.EXIT_CONFIG
    assert run("moments", "--config", write_config({**QUBIT, "bogus": 1})) == cli.EXIT_CONFIG
    assert run("moments", "--config", write_config({"eigenvalues": [1, 0], "weights": [0.5, 0.5]})) == cli.EXIT_CONFIG
    assert run("ergodicity", "--m", 1, "--config", write_config(QUBIT), "--out", tmp_path) == cli.EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("moments", "--config", write_config(QUBIT), "--out", blocker / "sub") == cli.EXIT_IO


def test_defaults(write_config):
    cfg = cli.load_config(write_config({"eigenvalues": [0], "weights": [1]}))
    assert (cfg.probe.epsilon, cfg.probe.sigma, cfg.probe.n_probes, cfg.m, cfg.seed) == (1.0, 1.0, 10, 10_000, 42)
    with pytest.raises(ConfigError):
        cli.load_config(write_config({"eigenvalues": [0], "weights": [1], "n_probes": 0}))


def test_help_mentions_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    assert "epsilon=1" in out and "seed=42" in out
