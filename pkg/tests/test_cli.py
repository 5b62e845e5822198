import json

import pytest

from workload_forecast.cli import main


def base_args(tmp_path):
    return ["--data-dir", str(tmp_path / "cohort"), "--seed", "3", "--n-subjects", "3",
            "--lag", "30,60,120", "--pred", "60", "--component", "overall"]


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("train:\n  max_epochs: 2\n")
    return ["--config", str(path)]


def test_synth_writes_csvs(tmp_path, quick_config):
    assert main(["synth", *base_args(tmp_path), *quick_config]) == 0
    files = sorted(p.name for p in (tmp_path / "cohort").iterdir())
    assert files == ["s00.csv", "s01.csv", "s02.csv"]
    assert (tmp_path / "cohort" / "s00.csv").read_text().startswith(
        "time_s,cognitive,visual,auditory,speech,gross_motor,fine_motor,tactile,overall\n")


def test_all_then_table_and_stats(tmp_path, quick_config, capsys):
    out = tmp_path / "results.json"
    assert main(["all", *base_args(tmp_path), *quick_config, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["cells"]) == 6
    assert out.with_suffix(".txt").exists()
    capsys.readouterr()

    assert main(["table", "--results", str(out), "--mode", "univariate", "--component", "overall"]) == 0
    table = capsys.readouterr().out
    assert table.startswith("univariate overall")
    assert main(["stats", "--results", str(out), "--out", str(tmp_path / "stats.txt")]) == 0
    assert "Friedman" in (tmp_path / "stats.txt").read_text()

    assert main(["run", *base_args(tmp_path), *quick_config, "--mode", "multivariate",
                 "--out", str(tmp_path / "r2.json")]) == 0
    assert len(json.loads((tmp_path / "r2.json").read_text())["cells"]) == 3


def test_exit_codes(tmp_path, quick_config):
    # validation error: horizon outside the standard grid
    assert main(["run", *base_args(tmp_path), *quick_config, "--lag", "45"]) == 1
    # runtime failure: results file missing
    assert main(["table", "--results", str(tmp_path / "none.json")]) == 2
    # validation: incomplete grid requested from a results file
    out = tmp_path / "r.json"
    assert main(["run", *base_args(tmp_path), *quick_config, "--out", str(out)]) == 0
    assert main(["table", "--results", str(out), "--mode", "univariate", "--component", "visual"]) == 1
