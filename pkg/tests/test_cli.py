"""End-to-end tests of the satstack command line."""

import csv
import json
from pathlib import Path

import pytest

from satstack.core import get_config
from satstack.cli import EXIT_BUDGET, EXIT_INVALID, EXIT_IO, EXIT_OK, MANIFEST_FILE, main
from satstack.utils import file_digest


def read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


@pytest.fixture
def law_path(worked_config_path: Path, tmp_path: Path) -> Path:
    out = tmp_path / "law"
    assert main(["synthesize", "--config", str(worked_config_path), "--out", str(out)]) == EXIT_OK
    # main() caches settings; reset so tests that patch the environment afterwards see it
    get_config.cache_clear()
    return out / "law.json"


class TestSynthesize:
    def test_writes_artifacts(
        self, worked_config_path: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["synthesize", "--config", str(worked_config_path), "--out", str(tmp_path)])

        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["lambda"] == 6.5
        assert summary["lambda_policy"] == "paper"
        assert len(summary["u_bound"]) == 2
        for name in ("law.json", "bounds.json", MANIFEST_FILE):
            assert (tmp_path / name).is_file()

    def test_manifest(self, worked_config_path: Path, tmp_path: Path) -> None:
        main(["synthesize", "--config", str(worked_config_path), "--out", str(tmp_path)])

        manifest = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert manifest["subcommand"] == "synthesize"
        assert manifest["config_digest"] == file_digest(worked_config_path)
        assert manifest["seed"] is None
        assert str(tmp_path / "law.json") in manifest["outputs"]

    def test_deterministic(self, worked_config_path: Path, tmp_path: Path) -> None:
        for name in ("a", "b"):
            main(["synthesize", "--config", str(worked_config_path), "--out", str(tmp_path / name)])
        first = (tmp_path / "a" / "law.json").read_bytes()
        assert first == (tmp_path / "b" / "law.json").read_bytes()

    def test_policy_override(
        self, worked_config_path: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(
            [
                "synthesize",
                "--config",
                str(worked_config_path),
                "--policy",
                "per-order",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["lambda_policy"] == "per-order"

    def test_kink_with_smoothness_rejected(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = {"p": 2, "sigma_max": 1, "L": 1, "S": 1, "alpha": 1}
        config = {"n": 2, "p": 2, "budgets": [1, 1, 1], "saturations": [spec, spec]}
        path = tmp_path / "kink.json"
        path.write_text(json.dumps(config), encoding="utf-8")

        code = main(["synthesize", "--config", str(path), "--out", str(tmp_path / "out")])

        assert code == EXIT_INVALID
        assert "smoothness" in capsys.readouterr().err
        assert not (tmp_path / "out" / "law.json").exists()

    def test_malformed_config(self, tmp_path: Path) -> None:
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"n": 2, "p": 1, "budgets": [1.0]}), encoding="utf-8")
        assert main(["synthesize", "--config", str(path), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_missing_config(self, tmp_path: Path) -> None:
        code = main(["synthesize", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == EXIT_IO


class TestSweepLambda:
    def test_bounds_decrease(self, worked_config_path: Path, tmp_path: Path) -> None:
        code = main(
            [
                "sweep-lambda",
                "--config",
                str(worked_config_path),
                "--lambdas",
                "1,2,4,6.5,10",
                "--out",
                str(tmp_path),
            ]
        )

        assert code == EXIT_OK
        rows = read_rows(tmp_path / "lambda_sweep.csv")
        assert [float(row["lambda"]) for row in rows] == [1.0, 2.0, 4.0, 6.5, 10.0]
        for column in ("u_bound_1", "u_bound_2"):
            values = [float(row[column]) for row in rows]
            assert all(b < a for a, b in zip(values, values[1:], strict=False))

    def test_lambda_below_one_rejected(self, worked_config_path: Path, tmp_path: Path) -> None:
        code = main(
            [
                "sweep-lambda",
                "--config",
                str(worked_config_path),
                "--lambdas",
                "0.5,2",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == EXIT_INVALID

    @pytest.mark.parametrize("command", ["synthesize", "sweep-lambda"])
    def test_unknown_policy(
        self,
        command: str,
        worked_config_path: Path,
        tmp_path: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        code = main(
            [command, "--config", str(worked_config_path), "--policy", "fastest", "--out", str(tmp_path)]
        )
        assert code == EXIT_INVALID
        assert "invalid choice" in capsys.readouterr().err


class TestSimulate:
    def test_origin(self, law_path: Path, tmp_path: Path) -> None:
        out = tmp_path / "sim"
        code = main(
            ["simulate", "--law", str(law_path), "--x0", "0,0,0", "--horizon", "1", "--out", str(out)]
        )

        assert code == EXIT_OK
        rows = read_rows(out / "trajectory.csv")
        assert list(rows[0]) == [
            "t", "x_1", "x_2", "x_3", "u", "du_1", "du_2", "z_1", "z_2", "z_3",
        ]
        assert len(rows) == 17
        for row in rows:
            assert all(float(row[name]) == 0.0 for name in row if name != "t")
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["budget_pass"] == [True, True, True]

    def test_dimension_mismatch(self, law_path: Path, tmp_path: Path) -> None:
        code = main(["simulate", "--law", str(law_path), "--x0", "1,2", "--out", str(tmp_path)])
        assert code == EXIT_INVALID

    def test_missing_x0(self, law_path: Path, tmp_path: Path) -> None:
        assert main(["simulate", "--law", str(law_path), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_missing_law(self, tmp_path: Path) -> None:
        code = main(
            ["simulate", "--law", str(tmp_path / "absent.json"), "--x0", "0,0,0", "--out", str(tmp_path)]
        )
        assert code == EXIT_IO

    def test_budget_violation(self, law_path: Path, tmp_path: Path) -> None:
        document = json.loads(law_path.read_text(encoding="utf-8"))
        document["budgets"] = [2.0, 1e-9, 1e-9]
        tight = tmp_path / "tight.json"
        tight.write_text(json.dumps(document), encoding="utf-8")

        code = main(
            ["simulate", "--law", str(tight), "--x0", "1,0,0", "--horizon", "5", "--out", str(tmp_path)]
        )

        assert code == EXIT_BUDGET
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["budget_pass"] == [True, False, False]

    def test_both_derivative_methods(self, law_path: Path, tmp_path: Path) -> None:
        code = main(
            [
                "simulate",
                "--law",
                str(law_path),
                "--x0",
                "1,0,0",
                "--horizon",
                "20",
                "--derivatives",
                "both",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert len(report["derivative_discrepancy"]) == 2


class TestVerify:
    def test_linear_state(
        self, law_path: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        capsys.readouterr()
        code = main(
            ["verify", "--law", str(law_path), "--x0", "1,0,0", "--horizon", "20", "--out", str(tmp_path)]
        )

        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["bound_soundness"] == [True, True]
        assert not (tmp_path / "trajectory.csv").exists()


class TestDemoCounterexample:
    def test_unknown_scenario(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = main(["demo-counterexample", "--scenario", "bogus", "--out", str(tmp_path)])
        assert code == EXIT_INVALID
        assert "invalid choice" in capsys.readouterr().err
        assert not (tmp_path / MANIFEST_FILE).exists()

    @pytest.mark.slow
    def test_growth_csv(self, tmp_path: Path) -> None:
        code = main(["demo-counterexample", "--scales", "10,100", "--out", str(tmp_path)])

        assert code == EXIT_OK
        rows = read_rows(tmp_path / "growth.csv")
        assert [float(row["initial_rate"]) for row in rows] == pytest.approx([8.0, 98.0])


@pytest.mark.slow
def test_battery_from_environment(
    law_path: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    """SATSTACK_BATTERY_RUNS sizes a battery requested without a count."""

    monkeypatch.setenv("SATSTACK_BATTERY_RUNS", "2")
    monkeypatch.setenv("SATSTACK_SEED", "5")

    code = main(["simulate", "--law", str(law_path), "--battery", "--out", str(tmp_path)])

    assert code == EXIT_OK
    battery = json.loads((tmp_path / "battery.json").read_text(encoding="utf-8"))
    assert battery["runs"] == 2
    assert battery["seed"] == 5
    assert battery["radius"] == 1000.0
    assert battery["within_budget"] == battery["sound"] == 2
    assert battery["settle_horizon"] > 0.0
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["seed"] == 5
