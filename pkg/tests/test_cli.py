from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from spectra.cli import EXIT_ASSUMPTION, EXIT_OK, EXIT_USAGE, main
from spectra.config import build_model, load_config, parse_config, read_vector
from spectra.errors import ValidationError

TWO_BULK_TOML = """
[model]
N = 800
M = 400
bulk = { atoms = [[18.0, 200], [1.0, 200]] }
spikes = [ { index = 0, sigma_g = 35.0 }, { index = 200, sigma_g = 4.0 } ]

[simulate]
replicates = 2
seed = 5
"""


def mp_density(E, gamma):
    # Marchenko-Pastur law with ratio gamma = M / N <= 1 and unit variance
    a, b = (1 - np.sqrt(gamma)) ** 2, (1 + np.sqrt(gamma)) ** 2
    out = np.zeros_like(E)
    inside = (E > a) & (E < b)
    out[inside] = np.sqrt((b - E[inside]) * (E[inside] - a)) / (2 * np.pi * E[inside] * gamma)
    return out


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def two_bulk_cfg(tmp_path):
    return write(tmp_path, TWO_BULK_TOML)


def test_toml_and_json_agree(tmp_path, two_bulk_cfg):
    data = {
        "model": {
            "N": 800,
            "M": 400,
            "bulk": {"atoms": [[18.0, 200], [1.0, 200]]},
            "spikes": [{"index": 0, "sigma_g": 35.0}, {"index": 200, "sigma_g": 4.0}],
        }
    }
    js = write(tmp_path, json.dumps(data), "cfg.json")
    a, b = build_model(load_config(two_bulk_cfg)), build_model(load_config(js))
    assert np.array_equal(a.sigma_g_eigenvalues(), b.sigma_g_eigenvalues())
    assert a.N == b.N == 800


@pytest.mark.parametrize(
    "data",
    [
        {},
        {"model": {"N": 10}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}, "extra": 1}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0], "atoms": [[1.0, 1]]}}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}}, "nonsense": {}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}}, "simulate": {"law": "cauchy"}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}}, "simulate": {"replicates": True}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}}, "shrink": {"loss": "Nope"}},
        {"model": {"N": 10, "bulk": {"toeplitz": {"rho": 0.4}}}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}, "spikes": [{"index": 0}]}},
        {"model": {"N": 10, "bulk": {"eigenvalues": [1.0]}, "spikes": [{"index": 0, "d": 1, "sigma_g": 2}]}},
    ],
)
def test_config_rejects(data):
    with pytest.raises(ValidationError):
        parse_config(data)


def test_model_size_mismatch():
    cfg = parse_config({"model": {"N": 10, "M": 3, "bulk": {"eigenvalues": [1.0, 2.0]}}})
    with pytest.raises(ValidationError):
        build_model(cfg)


def test_toeplitz_config():
    cfg = parse_config({"model": {"N": 40, "M": 20, "bulk": {"toeplitz": {"rho": 0.4}}}})
    model = build_model(cfg)
    assert model.M == 20 and model.basis is not None


def test_read_vector(tmp_path):
    p = write(tmp_path, "# header\n1.5, 2\n3 # trailing\n\n", "v.txt")
    assert read_vector(p).tolist() == [1.5, 2.0, 3.0]
    with pytest.raises(ValidationError):
        read_vector(write(tmp_path, "1, x\n", "bad.txt"))
    with pytest.raises(ValidationError):
        read_vector(write(tmp_path, "# nothing\n", "empty.txt"))


def test_analyze_two_bulk(tmp_path, two_bulk_cfg):
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(two_bulk_cfg), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "analysis.json").read_text())
    assert report["r"] == 2
    assert report["structure"]["p"] == 2
    locs = sorted(o["predicted_location"] for o in report["outliers"] if o["is_outlier"])
    assert locs == pytest.approx([3.0476, 44.522], abs=5e-4)


def test_analyze_no_spikes(tmp_path):
    cfg = write(tmp_path, '[model]\nN = 200\nbulk = { atoms = [[1.0, 100]] }\n')
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    report = json.loads((tmp_path / "o" / "analysis.json").read_text())
    assert report["r"] == 0 and report["outliers"] == []


def test_analyze_assumption_failure(tmp_path):
    cfg = write(tmp_path, "[model]\nN = 200\nbulk = { eigenvalues = [1.0, 1.0, 1e-6] }\n")
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ASSUMPTION
    assert (tmp_path / "o" / "analysis.json").exists()


@pytest.mark.parametrize(
    "text",
    ["[model]\nN = 10\n", "[model\n", "[model]\nN = 10\nbulk = { eigenvalues = [1.0] }\n[typo]\nx = 1\n"],
)
def test_malformed_config_writes_nothing(tmp_path, text, capsys):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()
    assert "spectra analyze" in capsys.readouterr().err


def test_missing_config_and_bad_command(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "none.toml")]) == EXIT_USAGE
    assert main(["frobnicate", "--config", "x"]) == EXIT_USAGE


def test_density_marchenko_pastur(tmp_path):
    cfg = write(tmp_path, "[model]\nN = 1000\nbulk = { atoms = [[1.0, 500]] }\n[density]\ngrid = 400\nhi = 4.0\n")
    assert main(["density", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "density.csv")
    E = np.array([float(r["E"]) for r in rows])
    rho = np.array([float(r["rho"]) for r in rows])
    assert E.size == 400
    # rho counts mass per N, so the M / N factor multiplies the normalized law
    assert np.abs(rho - 0.5 * mp_density(E, 0.5)).max() <= 1e-3
    assert np.all(rho[(E < (1 - np.sqrt(0.5)) ** 2) | (E > (1 + np.sqrt(0.5)) ** 2)] == 0)


def test_density_two_regions(tmp_path, two_bulk_cfg):
    assert main(["density", "--config", str(two_bulk_cfg), "--out", str(tmp_path), "--grid", "3000"]) == EXIT_OK
    rho = np.array([float(r["rho"]) for r in read_csv(tmp_path / "density.csv")])
    positive = rho > 0
    runs = np.count_nonzero(np.diff(positive.astype(int)) == 1) + int(positive[0])
    assert runs == 2


def test_simulate_deterministic(tmp_path, two_bulk_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(two_bulk_cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(two_bulk_cfg), "--out", str(b)]) == EXIT_OK
    assert (a / "simulation.csv").read_bytes() == (b / "simulation.csv").read_bytes()
    assert (a / "simulation.json").read_bytes() == (b / "simulation.json").read_bytes()
    payload = json.loads((a / "simulation.json").read_text())
    assert payload["replicates"] == 2 and payload["seed"] == 5
    assert main(["simulate", "--config", str(two_bulk_cfg), "--out", str(b), "--seed", "6"]) == EXIT_OK
    assert json.loads((b / "simulation.json").read_text())["digest"] != payload["digest"]


def test_shrink_requires_eigenvalues(tmp_path, two_bulk_cfg):
    assert main(["shrink", "--config", str(two_bulk_cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    cfg = write(tmp_path, TWO_BULK_TOML + '[shrink]\neigenvalues = "missing.txt"\n', "s.toml")
    assert main(["shrink", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_shrink_with_file(tmp_path):
    eigs = [44.522, 20.0, 10.0, 3.0476, 1.0, 0.5]
    (tmp_path / "eigs.txt").write_text("\n".join(map(str, eigs)))
    cfg = write(tmp_path, TWO_BULK_TOML + '[shrink]\neigenvalues = "eigs.txt"\nloss = "Stein"\n', "s.toml")
    assert main(["shrink", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "shrink.csv")
    assert len(rows) == len(eigs)
    outliers = [r for r in rows if r["method"] == "outlier-formula"]
    assert [float(r["l"]) for r in outliers] == pytest.approx([35.0, 4.0], abs=5e-2)


def test_oracle_two_bulk(tmp_path):
    eigs = [44.522, 20.0, 10.0, 3.0476, 1.0, 0.5]
    (tmp_path / "eigs.txt").write_text("\n".join(map(str, eigs)))
    cfg = write(tmp_path, TWO_BULK_TOML + '[oracle]\neigenvalues = "eigs.txt"\n', "o.toml")
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "oracle.csv")
    assert rows[0]["method"] == "outlier-formula"
    assert float(rows[0]["d_hat"]) == pytest.approx(27.514, abs=0.05)
    assert all(float(r["d_hat"]) > 0 for r in rows)


def test_oracle_simulates_when_no_file(tmp_path, two_bulk_cfg):
    assert main(["oracle", "--config", str(two_bulk_cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "oracle.csv")
    assert len(rows) == 400
    assert sum(r["method"] == "outlier-formula" for r in rows) == 2
