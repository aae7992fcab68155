import json

import pytest

from app.core.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE
from app.main import build_parser, main


@pytest.fixture
def config_file(tiny_experiment, tmp_path):
    path = tmp_path / "experiment.json"
    payload = tiny_experiment().model_dump(mode="json", by_alias=True)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("gen-data", "train", "grid-search", "evaluate", "loo-evaluate"):
        assert parser.parse_args([command]).command == command
    args = parser.parse_args(["explain", "--record", "1,2", "--target", "0"])
    assert args.record == "1,2"
    assert args.target == 0


def test_gen_data_then_train_succeeds(config_file, tmp_path, capsys):
    out = tmp_path / "cli-run"
    assert main(["gen-data", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    assert "400 records" in capsys.readouterr().out
    assert main(["train", "--config", str(config_file), "--out", str(out), "--set", "cf.epochs=1"]) == EXIT_OK
    assert (out / "models" / "cf_engine.json").is_file()


def test_missing_stage_output_exits_with_data_code(config_file, tmp_path, capsys):
    code = main(["explain", "--config", str(config_file), "--out", str(tmp_path / "empty"), "--record", "1,2,3,4,5"])
    assert code == EXIT_DATA
    assert "gen-data" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["unknown-command"],
        ["explain", "--record", "1,2", "--target", "5"],
        ["gen-data", "--config", "does-not-exist.json"],
        ["gen-data", "--set", "no_equals_sign"],
        ["gen-data", "--set", "classifier.hidden_size=8"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_malformed_config_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["gen-data", "--config", str(path)]) == EXIT_USAGE
