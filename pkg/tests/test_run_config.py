import pytest

from config.constants import DEFAULT_BACKGROUND_PLUS, OUTPUT_FORMATS
from config.run_config import RunConfig, apply_environment, load_run_config, validate_schema
from core.exceptions import ConfigError


def test_defaults():
    config = RunConfig.from_text("")
    assert config.scenario == "perturbed-2d"
    assert config.grid.n1 == 64
    assert config.iteration.s_list == [0, 2, 4]
    assert config.output.formats == list(OUTPUT_FORMATS)
    assert config.background.plus == list(DEFAULT_BACKGROUND_PLUS)


def test_preset_then_explicit_keys():
    config = RunConfig.from_text("scenario = planar\ngrid.n1 = 24\n")
    assert config.grid.n1 == 24
    assert config.grid.n3 == 8
    assert config.perturbation.amplitude == 0.0


def test_comments_quotes_and_lists():
    text = (
        "# 注释\n"
        "\n"
        "output.directory = \"/tmp/runs\"\n"
        "iteration.s_list = 0, 3\n"
        "background.minus = 1, 0, -0.2, 0, 0, 0.5, 1, -0.5\n"
    )
    config = RunConfig.from_text(text)
    assert config.output.directory == "/tmp/runs"
    assert config.iteration.s_list == [0, 3]
    assert config.background.minus[2] == pytest.approx(-0.2)


def test_text_round_trip():
    config = RunConfig.from_text("scenario = perturbed-3d\ntime.cfl = 0.3\n")
    again = RunConfig.from_text(config.to_text())
    assert again == config


@pytest.mark.parametrize("text", [
    "grid.unknown = 3\n",
    "nonsense = 1\n",
    "scenario = spiral\n",
    "grid.n1 64\n",
    "grid.n1 = many\n",
    "eos.gamma = 0.9\n",
    "output.formats = csv, xml\n",
])
def test_invalid_text_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_schema_lists_all_problems():
    data = RunConfig().to_dict()
    data["grid"]["n1"] = 0
    data["time"]["cfl"] = -1.0
    with pytest.raises(ConfigError) as excinfo:
        validate_schema(data)
    assert len(excinfo.value.details["问题"]) == 2


def test_load_and_save(tmp_path):
    path = tmp_path / "nested" / "run.cfg"
    RunConfig.from_text("scenario = planar\n").save(path)
    assert RunConfig.load(path).scenario == "planar"
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.cfg")


def test_environment_overrides_output_directory(monkeypatch, tmp_path):
    monkeypatch.setenv("CVS_MHD_OUT_DIR", str(tmp_path))
    config = apply_environment(RunConfig.from_text("output.directory = elsewhere\n"))
    assert config.output.directory == str(tmp_path)


def test_load_run_config_rejects_parallel_background(config_file):
    path = config_file(
        "background.plus = 1, 0, 0.2, 0, 0, 1, 0.5, 0\n"
        "background.minus = 1, 0, -0.2, 0, 0, 2, 1, 0\n"
    )
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_load_run_config_default_file():
    from pathlib import Path

    default = Path(__file__).resolve().parents[1] / "config" / "default.cfg"
    assert load_run_config(default) == load_run_config(None)
