import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from factorial_ca import io
from factorial_ca.cli import main
from factorial_ca.design import build_model_matrix
from factorial_ca.estimation import estimate_from_observed
from factorial_ca.population import Population
from factorial_ca.randomization import Assignment

from .conftest import random_population


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_observed(path, arm, y, x=None):
    x = np.empty((len(y), 0)) if x is None else np.asarray(x).reshape(len(y), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "arm", "y_obs"] + [f"x_{k + 1}" for k in range(x.shape[1])])
        for i, (a, yi) in enumerate(zip(arm, y)):
            w.writerow([f"u{i}", a, repr(float(yi))] + [repr(float(v)) for v in x[i]])
    return path


# -- design ------------------------------------------------------------------


def test_design_csv_example(capsys):
    code, out, _ = run(capsys, "design", "--k", 2, "--format", "csv")
    assert code == 0
    assert out.splitlines() == ["I,A,B,AB", "1,-1,-1,1", "1,-1,1,-1", "1,1,-1,-1", "1,1,1,1"]


@pytest.mark.parametrize("k", [0, 17, "x"])
def test_design_bad_k(capsys, k):
    with pytest.raises(SystemExit) as exc:
        main(["design", "--k", str(k)])
    assert exc.value.code == 2


def test_design_k0_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "factorial_ca", "design", "--k", "0"], capture_output=True, text=True
    )
    assert proc.returncode == 2
    assert "usage" in proc.stderr


def test_design_json_labels(capsys):
    code, out, _ = run(capsys, "design", "--k", 3, "--format", "json")
    data = json.loads(out)
    assert data["labels"] == ["A", "B", "C", "AB", "AC", "BC", "ABC"]
    assert data["columns"]["ABC"] == [-1, 1, 1, -1, 1, -1, -1, 1]


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_design_csv_round_trip(capsys, k):
    _, out, _ = run(capsys, "design", "--k", k)
    header, matrix = io.parse_design_csv(out)
    m = build_model_matrix(k)
    assert header == ["I", *m.effect_labels]
    np.testing.assert_array_equal(matrix, m.matrix)


# -- estimate ----------------------------------------------------------------


def test_estimate_two_arm_against_hand_oracle(capsys, tmp_path):
    rng = np.random.default_rng(0)
    arm = [1] * 5 + [2] * 7
    y = rng.normal(size=12).round(3)
    path = write_observed(tmp_path / "obs.csv", arm, y)
    code, out, _ = run(capsys, "estimate", path, "--k", 1)
    assert code == 0
    report = json.loads(out)
    # independent oracle: re-read the file with the csv module and average by arm
    sums, counts = {}, {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            sums[row["arm"]] = sums.get(row["arm"], 0.0) + float(row["y_obs"])
            counts[row["arm"]] = counts.get(row["arm"], 0) + 1
    diff = sums["2"] / counts["2"] - sums["1"] / counts["1"]
    assert report["effects"][0]["tau_rb"] == pytest.approx(diff, abs=1e-12)
    assert "tau_ca" not in report["effects"][0]
    assert report["notes"]
    assert [a["n"] for a in report["arms"]] == [5, 7]
    assert report["arms"][0]["p_hat"] == pytest.approx(5 / 12)


def test_estimate_with_covariates_matches_library(capsys, tmp_path):
    rng = np.random.default_rng(1)
    pop = random_population(rng, 40, 4, 2)
    arm = rng.permutation(np.repeat(np.arange(4), 10))
    y_obs = pop.y[np.arange(40), arm]
    path = write_observed(tmp_path / "obs.csv", arm + 1, y_obs, pop.x)
    code, out, _ = run(capsys, "estimate", path, "--k", 2)
    assert code == 0
    report = json.loads(out)
    rb, ca = estimate_from_observed(build_model_matrix(2), y_obs, pop.x, Assignment(arm, (10,) * 4))
    np.testing.assert_allclose([e["tau_rb"] for e in report["effects"]], rb.tau, rtol=1e-15)
    np.testing.assert_allclose([e["tau_ca"] for e in report["effects"]], ca.tau, rtol=1e-15)
    np.testing.assert_allclose([a["beta_hat"] for a in report["arms"]], ca.beta_hat.T, rtol=1e-15)


def test_estimate_bad_arm_index(capsys, tmp_path):
    path = write_observed(tmp_path / "obs.csv", [1, 1, 2, 2, 3, 3, 5, 5], np.arange(8.0))
    code, _, err = run(capsys, "estimate", path, "--k", 2)
    assert code == 2
    assert "arm 5" in err


def test_estimate_small_arm_named(capsys, tmp_path):
    path = write_observed(tmp_path / "obs.csv", [1, 1, 2, 2, 3, 3, 4, 3], np.arange(8.0))
    code, _, err = run(capsys, "estimate", path, "--k", 2)
    assert code == 2
    assert "arm 4" in err


def test_estimate_singular_covariates(capsys, tmp_path):
    path = write_observed(tmp_path / "obs.csv", [1, 1, 2, 2], [1.0, 2.0, 3.0, 5.0], [7.0] * 4)
    code, _, err = run(capsys, "estimate", path, "--k", 1)
    assert code == 3
    assert "singular" in err


def test_estimate_rejects_population_table(capsys, tmp_path):
    pop = random_population(np.random.default_rng(2), 8, 2, 1)
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(pop))
    code, _, err = run(capsys, "estimate", path, "--k", 1)
    assert code == 2
    assert "potential-outcome" in err


def test_estimate_counterfactual_firewall(capsys, tmp_path):
    """A poison counterfactual column has no place in the schema and is refused."""
    path = tmp_path / "poison.csv"
    path.write_text("unit,arm,y_obs,y_2\nu1,1,1.0,1e300\nu2,1,2.0,1e300\nu3,2,3.0,1e300\nu4,2,4.0,1e300\n")
    code, _, _ = run(capsys, "estimate", path, "--k", 1)
    assert code == 2
    path.write_text("unit,arm,y_obs,x_1\nu1,1,1.0,0.5\nu2,1,2.0,1.5,1e300\nu3,2,3.0,1\nu4,2,4.0,2\n")
    code, _, err = run(capsys, "estimate", path, "--k", 1)
    assert code == 2
    assert "line 3" in err


def test_estimate_duplicate_units(capsys, tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("unit,arm,y_obs\na,1,1\na,1,2\nb,2,3\nc,2,4\n")
    code, _, err = run(capsys, "estimate", path, "--k", 1)
    assert code == 2 and "duplicate" in err


def test_missing_file_is_io_error(capsys, tmp_path):
    code, _, _ = run(capsys, "estimate", tmp_path / "nope.csv", "--k", 1)
    assert code == 4


# -- theory ------------------------------------------------------------------


def _uncorrelated_population(rng, n=32, j=4):
    x = rng.standard_normal((n, 1))
    y = rng.standard_normal((n, j))
    xc = x - x.mean()
    yc = y - y.mean(axis=0)
    y = y - xc @ (xc.T @ yc) / (xc.T @ xc)
    return Population(y, x)


def test_theory_uninformative_covariates(capsys, tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(_uncorrelated_population(np.random.default_rng(3))))
    code, out, _ = run(capsys, "theory", path, "--counts", 8, 8, 8, 8)
    assert code == 0
    for rec in json.loads(out)["effects"]:
        assert abs(rec["gain"]) < 1e-12


def test_theory_gain_matches_corollary(capsys, tmp_path):
    pop = random_population(np.random.default_rng(4), 64, 8, 3)
    path = tmp_path / "pop.json"
    path.write_text(io.dumps(io.population_dict(pop)))
    code, out, _ = run(capsys, "theory", path, "--proportions", *([0.125] * 8))
    assert code == 0
    report = json.loads(out)
    assert [r["label"] for r in report["effects"]] == list(build_model_matrix(3).effect_labels)
    for rec in report["effects"]:
        assert abs(rec["gain"] - rec["gain_corollary"]) <= 1e-10 * max(1.0, rec["gain"])
        assert rec["gain"] >= -1e-10
        assert rec["equal_precision"] is False


def test_theory_bad_proportions(capsys, tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(random_population(np.random.default_rng(5), 16, 2, 1)))
    code, _, _ = run(capsys, "theory", path, "--proportions", 0.3, 0.3)
    assert code == 2
    code, _, _ = run(capsys, "theory", path, "--counts", 8, 9)
    assert code == 2


def test_theory_rejects_observed_table(capsys, tmp_path):
    path = write_observed(tmp_path / "obs.csv", [1, 1, 2, 2], [1.0, 2.0, 3.0, 4.0])
    code, _, err = run(capsys, "theory", path, "--counts", 2, 2)
    assert code == 2
    assert "observed-data table" in err


def test_theory_missing_counterfactual_columns(capsys, tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(random_population(np.random.default_rng(6), 16, 2, 1)))
    code, _, err = run(capsys, "theory", path, "--k", 2, "--counts", 4, 4, 4, 4)
    assert code == 2
    assert "missing counterfactual" in err


def test_theory_singular_exit_3(capsys, tmp_path):
    pop = random_population(np.random.default_rng(7), 16, 2, 1)
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(Population(pop.y, np.column_stack([pop.x, 2 * pop.x]))))
    code, _, _ = run(capsys, "theory", path, "--counts", 8, 8)
    assert code == 3


def test_theory_conditioning_warning_surfaced(capsys, tmp_path):
    rng = np.random.default_rng(8)
    pop = random_population(rng, 40, 2, 1)
    x = np.column_stack([pop.x, pop.x[:, 0] + 1e-5 * rng.standard_normal(40)])
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(Population(pop.y, x)))
    code, _, err = run(capsys, "theory", path, "--counts", 20, 20)
    assert code == 0
    assert "warning: covariate Gram matrix condition number" in err


# -- synth + mc ----------------------------------------------------------------


def test_synth_then_theory(capsys, tmp_path):
    out = tmp_path / "pop.csv"
    code, _, _ = run(
        capsys, "synth", "--n", 64, "--k", 2, "--p", 1, "--seed", 3,
        "--coef", "[[1],[2],[0],[-1]]", "--out", out,
    )
    assert code == 0
    pop = io.read_population(out)
    assert (pop.n, pop.j, pop.p) == (64, 4, 1)
    code, text, _ = run(capsys, "theory", out, "--counts", 16, 16, 16, 16)
    assert code == 0 and json.loads(text)["n"] == 64


def _write_config(path, **overrides):
    cfg = {
        "population": {"recipe": {"n": 8, "k": 2, "p": 1, "seed": 4, "coef": [[1], [0.5], [-1], [2]]}},
        "counts": [2, 2, 2, 2],
        "replicates": 100,
        "seed": 9,
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg, indent=2))
    return path


def _strip_clock(text):
    data = json.loads(text)
    data.pop("wall_clock")
    return data


def test_mc_exhaustive_and_byte_identical(capsys, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json")
    code1, out1, _ = run(capsys, "mc", cfg)
    code2, out2, _ = run(capsys, "mc", cfg)
    assert code1 == code2 == 0
    data = json.loads(out1)
    assert data["mode"] == "exhaustive"
    assert data["replicates"] == 2520
    for rec in data["effects"]:
        if rec["method"] == "unadjusted":
            assert abs(rec["bias"]) <= 1e-12
    strip = [line for line in out1.splitlines() if '"wall_clock"' not in line]
    assert strip == [line for line in out2.splitlines() if '"wall_clock"' not in line]


def test_mc_sample_mode_seed_override(capsys, tmp_path, monkeypatch):
    cfg = _write_config(
        tmp_path / "cfg.json",
        population={"recipe": {"n": 64, "k": 2, "p": 1, "seed": 4, "coef": [[1], [0.5], [-1], [2]]}},
        counts=[16, 16, 16, 16],
        replicates=200,
    )
    _, base, _ = run(capsys, "mc", cfg)
    _, same, _ = run(capsys, "mc", cfg, "--seed", 9)
    _, other, _ = run(capsys, "mc", cfg, "--seed", 10)
    assert json.loads(base)["mode"] == "sample"
    assert _strip_clock(base) == _strip_clock(same)
    assert _strip_clock(base) != _strip_clock(other)
    monkeypatch.setenv("FACTORIAL_CA_SEED", "10")
    _, env, _ = run(capsys, "mc", cfg)
    assert _strip_clock(env) == _strip_clock(base)  # config seed wins over env default
    _, workers, _ = run(capsys, "mc", cfg, "--workers", 4, "--table")
    assert _strip_clock(workers) == _strip_clock(base)


def test_mc_env_seed_fallback(capsys, tmp_path, monkeypatch):
    cfg = _write_config(
        tmp_path / "cfg.json",
        population={"recipe": {"n": 64, "k": 1, "p": 0, "seed": 4}},
        counts=[32, 32],
        replicates=150,
    )
    data = json.loads(cfg.read_text())
    data.pop("seed")
    cfg.write_text(json.dumps(data))
    monkeypatch.setenv("FACTORIAL_CA_SEED", "77")
    _, out, _ = run(capsys, "mc", cfg)
    assert json.loads(out)["seed"] == 77


def test_mc_too_few_replicates(capsys, tmp_path):
    code, _, err = run(capsys, "mc", _write_config(tmp_path / "cfg.json", replicates=10))
    assert code == 2
    assert "replicates" in err


def test_mc_parse_error_has_line(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{\n  "counts": [2, 2],\n  "replicates": ,\n}\n')
    code, _, err = run(capsys, "mc", path)
    assert code == 2
    assert "line 3" in err


def test_mc_unknown_field(capsys, tmp_path):
    code, _, err = run(capsys, "mc", _write_config(tmp_path / "cfg.json", replicate=100))
    assert code == 2
    assert "replicate" in err


def test_mc_toml_with_population_file(capsys, tmp_path):
    pop = random_population(np.random.default_rng(10), 8, 4, 1)
    (tmp_path / "pop.csv").write_text(io.population_csv(pop))
    cfg = tmp_path / "study.toml"
    cfg.write_text('counts = [2, 2, 2, 2]\nreplicates = 100\nseed = 1\n\n[population]\nfile = "pop.csv"\n')
    code, out, _ = run(capsys, "mc", cfg)
    assert code == 0
    assert json.loads(out)["mode"] == "exhaustive"


# -- io ------------------------------------------------------------------------


def test_dumps_17_digits():
    text = io.dumps({"a": 0.1, "b": [1, 2.5, None, True], "c": float("nan")})
    data = json.loads(text)
    assert "0.10000000000000001" in text
    assert data == {"a": 0.1, "b": [1, 2.5, None, True], "c": None}


def test_population_csv_round_trip(tmp_path):
    pop = random_population(np.random.default_rng(11), 16, 4, 2)
    path = tmp_path / "pop.csv"
    path.write_text(io.population_csv(pop))
    back = io.read_population(path)
    np.testing.assert_array_equal(back.y, pop.y)
    np.testing.assert_array_equal(back.x, pop.x)


def test_population_json_round_trip(tmp_path):
    pop = random_population(np.random.default_rng(12), 16, 2, 0)
    path = tmp_path / "pop.json"
    path.write_text(io.dumps(io.population_dict(pop)))
    back = io.read_population(path)
    np.testing.assert_array_equal(back.y, pop.y)
    assert back.p == 0


def test_population_header_order_enforced(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("y_1,x_1,y_2\n1,2,3\n2,3,4\n3,4,5\n4,5,6\n")
    with pytest.raises(io.FormatError):
        io.read_population(path)
    path.write_text("y_2,y_1\n1,2\n2,3\n3,4\n4,5\n")
    with pytest.raises(io.FormatError):
        io.read_population(path)
