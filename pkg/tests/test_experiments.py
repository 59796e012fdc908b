# pylint: disable=redefined-outer-name
# required to avoid trouble with fixture declaration

"""Test module for the experiment driver and the command line."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from pydantic import ValidationError

from pytest import raises

from modules.cli import build_config
from modules.experiments import BENCH_COLUMNS
from modules.experiments import EIM_DIAG_COLUMNS
from modules.experiments import GOAL_COLUMNS
from modules.experiments import SOLUTION_COLUMNS
from modules.experiments import SWEEP_COLUMNS
from modules.experiments import ExperimentError
from modules.experiments import bench_online
from modules.experiments import export_solution_csv
from modules.experiments import run_eim_diag
from modules.experiments import run_perturb
from modules.experiments import run_sweep
from modules.main import __version__
from modules.main import rbcert
from modules.precision import PrecisionKind
from modules.schemas import EimVariant
from modules.schemas import EstimatorKind
from modules.schemas import SweepMeta

from tests.common import DIFFUSION_POINTS
from tests.common import small_config
from tests.common import small_diffusion
from tests.common import small_synthetic


def _read_csv(path: Path):
    with open(path, encoding="utf-8") as csvfile:
        rows = list(csv.reader(csvfile))
    return rows[0], rows[1:]


def _column(header, rows, name) -> np.ndarray:
    j = header.index(name)
    return np.array([float(row[j]) for row in rows])


@pytest.fixture
def out(tmpdir):
    """Output directory of an experiment."""
    return Path(tmpdir) / "out"


@pytest.fixture
def config_file(tmpdir, out):
    """Small experiment configuration written to JSON."""
    path = Path(tmpdir) / "config.json"
    path.write_text(small_config(out).model_dump_json(), encoding="utf-8")
    return path


def test_run_sweep(out):
    """Tests the files written by a sweep."""
    files = run_sweep(small_config(out))
    assert {"sweep", "meta", "eim_diag", "state", "eim"} <= set(files)
    for path in files.values():
        assert path.exists()

    header, rows = _read_csv(files["sweep"])
    assert header == SWEEP_COLUMNS
    assert len(rows) == DIFFUSION_POINTS

    with open(files["meta"], encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["n"] == 19 and meta["d"] == 2
    assert meta["n_hat"] == 2

    # Measured floors keep negative radicands
    parsed = SweepMeta.model_validate_json(
        files["meta"].read_text(encoding="utf-8")
    )
    assert parsed.n_hat == 2
    assert parsed.floors.measured["e2"] > 0.0
    assert parsed.floors.measured["e2"] >= parsed.floors.measured["e1"]
    assert meta["sigma"] == 25
    assert meta["precision"] == "double"
    assert len(meta["selected"]) == 2
    assert {"e1", "e2"} <= set(meta["floors"]["predicted"])
    assert {"e1", "e2", "e4"} <= set(meta["floors"]["measured"])

    # Certified true error
    e1 = _column(header, rows, "e1")
    err = _column(header, rows, "true_error")
    assert np.all(err <= e1 * (1 + 1e-8) + 1e-13)
    assert np.allclose(_column(header, rows, "mu")[[0, -1]], [1.0, 100.0])

    header, rows = _read_csv(files["eim_diag"])
    assert header == EIM_DIAG_COLUMNS
    assert len(rows) == meta["eim"]["sigma_hat"]


def test_sweep_determinism(tmpdir):
    """Tests byte-identical sweeps from identical configurations."""
    first = run_sweep(small_config(Path(tmpdir) / "a"))
    second = run_sweep(small_config(Path(tmpdir) / "b"))

    assert first["sweep"].read_bytes() == second["sweep"].read_bytes()


def test_goal_oriented_sweep(out):
    """Tests goal-oriented columns."""
    config = small_config(
        out,
        problem={"output": True},
        goal_oriented=True,
        estimators=[EstimatorKind.E1, EstimatorKind.E2],
    )
    files = run_sweep(config)

    header, rows = _read_csv(files["sweep"])
    assert header == SWEEP_COLUMNS + GOAL_COLUMNS
    e1_go = _column(header, rows, "e1_go")
    output_error = _column(header, rows, "output_error")
    mask = e1_go >= 1e-10
    assert mask.any()
    assert np.all(output_error[mask] <= e1_go[mask] * (1 + 1e-8))

    # Columns of estimators not requested are left empty
    j = header.index("e4_go")
    assert all(row[j] == "" for row in rows)

    with open(files["meta"], encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["dual"]["n_hat"] == 2
    assert {"e1_go", "e2_go"} <= set(meta["floors"]["predicted"])


def test_config_validation(out):
    """Tests rejection of unsatisfiable configurations."""
    with raises(ValidationError):
        small_config(out, goal_oriented=True)
    with raises(ValidationError):
        small_config(out, bench_sizes=[10])
    # E3 with nmax = 2, d = 2 needs 25 trial points
    with raises(ValidationError):
        small_config(out, problem={"trial_points": 20})

    config = small_config(
        out, problem={"trial_points": 20}, estimators=[EstimatorKind.E1]
    )
    assert config.problem.trial_points == 20


def test_run_perturb(out):
    """Tests the perturbed sweep metadata."""
    files = run_perturb(small_config(out, estimators=[EstimatorKind.E1]))

    with open(files["meta"], encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["xi"] == 1e-6
    expected = meta["delta"] * 1e-6 / meta["beta_min"]
    assert np.isclose(meta["perturbation_plateau"], expected)

    files = run_perturb(small_config(out, xi=1e-3), xi=1e-6)
    with open(files["meta"], encoding="utf-8") as f:
        assert json.load(f)["xi"] == 1e-3


def test_run_eim_diag(out):
    """Tests diagnostics of all EIM variants."""
    states = run_eim_diag(small_config(out))
    assert set(states) == set(EimVariant)

    for variant, state in states.items():
        assert 1 <= state.sigma_hat <= 5
        header, rows = _read_csv(out / f"eim_diag_{variant.value}.csv")
        assert header == EIM_DIAG_COLUMNS
        assert len(rows) == len(state.history)

    with open(out / "eim_meta.json", encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["sigma"] == 25
    assert set(meta["variants"]) == {v.value for v in EimVariant}

    states = run_eim_diag(small_config(out), [EimVariant.CLASSICAL])
    assert list(states) == [EimVariant.CLASSICAL]


def test_bench_online(out):
    """Tests the online benchmark records."""
    config = small_config(
        out,
        estimators=[EstimatorKind.E1, EstimatorKind.E2, EstimatorKind.E4],
    )
    records = bench_online(config)

    assert len(records) == 6
    assert [r["n"] for r in records] == [10] * 3 + [20] * 3
    assert all(r["median_seconds"] > 0.0 for r in records)
    assert all(r["calls"] == 5 for r in records)

    header, rows = _read_csv(out / "bench.csv")
    assert header == BENCH_COLUMNS
    assert len(rows) == 6

    with raises(ExperimentError):
        bench_online(config, [10, 10])


def test_export_solution(tmpdir):
    """Tests the solution export of the 1D problem."""
    path = Path(tmpdir) / "solution.csv"
    res = export_solution_csv(path, small_diffusion(), 10.0)
    assert res == path

    header, rows = _read_csv(path)
    assert header == SOLUTION_COLUMNS
    assert len(rows) == 19
    u_h = _column(header, rows, "u_h")
    u_exact = _column(header, rows, "u_exact")
    assert np.allclose(u_h, u_exact, atol=1e-3)

    with raises(ExperimentError):
        export_solution_csv(path, small_synthetic(), 1.0)


def test_build_config(tmpdir, config_file):
    """Tests command-line overrides."""
    config = build_config(str(config_file), "other", "single", 7)
    assert config.output_dir == Path("other")
    assert config.precision is PrecisionKind.SINGLE
    assert config.e3_seed == 7 and config.perturb_seed == 7
    assert config.greedy.e3_seed == 7
    assert config.greedy.nmax == 2

    config = build_config(str(config_file), None, None, None)
    assert config.precision is PrecisionKind.DOUBLE
    assert config.e3_seed == 0

    path = Path(tmpdir) / "synthetic.json"
    path.write_text(
        json.dumps(
            {
                "problem": {
                    "problem": "synthetic",
                    "n": 8,
                    "d": 2,
                    "trial_points": 300,
                }
            }
        ),
        encoding="utf-8",
    )
    assert build_config(str(path), None, None, 3).problem.seed == 3


def test_cli_run(config_file, out):
    """Tests the run command."""
    runner = CliRunner()
    result = runner.invoke(rbcert, ["run", "--config", str(config_file)])

    assert result.exit_code == 0
    assert (out / "sweep.csv").exists()
    assert (out / "meta.json").exists()


def test_cli_solution(tmpdir, config_file):
    """Tests the solution command with an output override."""
    other = Path(tmpdir) / "other"
    runner = CliRunner()
    result = runner.invoke(
        rbcert,
        [
            "solution",
            "--config",
            str(config_file),
            "--out",
            str(other),
            "--mu",
            "10",
        ],
    )

    assert result.exit_code == 0
    assert (other / "solution.csv").exists()


def test_cli_errors(tmpdir):
    """Tests the JSON error report and the version option."""
    runner = CliRunner()
    missing = str(Path(tmpdir) / "missing.json")
    result = runner.invoke(rbcert, ["run", "--config", missing])

    assert result.exit_code == 1
    report = json.loads(result.output.strip().splitlines()[-1])
    assert report["error"] == "FileNotFoundError"
    assert "missing.json" in report["message"]

    result = runner.invoke(rbcert, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output
