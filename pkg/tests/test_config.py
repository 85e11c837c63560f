import pytest

from scripts.config import DEFAULT_LAMBDAS, load_settings, parse_float_list
from scripts.errors import ConfigError


def test_default_ini(monkeypatch):
    monkeypatch.delenv("STEREODC_JOBS", raising=False)
    monkeypatch.delenv("STEREODC_CONFIG", raising=False)
    settings = load_settings()
    assert settings.codec.qp_r == 8.0
    assert settings.codec.match.max_disparity == 64
    assert (settings.codec.match.sgm_p1, settings.codec.match.sgm_p2) == (200.0, 800.0)
    assert settings.codec.case == "full"
    assert settings.lambdas == DEFAULT_LAMBDAS
    assert settings.qp_grid[0] == 4.0 and settings.qp_grid[-1] == 48.0


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("STEREODC_JOBS", "3")
    assert load_settings().jobs == 3
    monkeypatch.setenv("STEREODC_JOBS", "trois")
    with pytest.raises(ConfigError):
        load_settings()


def test_missing_section(tmp_path):
    ini = tmp_path / "partial.ini"
    ini.write_text("[codec]\nqp_r = 4\n")
    with pytest.raises(ConfigError, match="Sections disponibles"):
        load_settings(ini)


def test_inconsistent_flags(tmp_path):
    ini = tmp_path / "flags.ini"
    ini.write_text("[codec]\nuse_prior = false\n[matching]\n[bench]\n")
    with pytest.raises(ConfigError):
        load_settings(ini)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_settings(tmp_path / "absent.ini")


def test_float_list():
    assert parse_float_list("4, 8,16") == (4.0, 8.0, 16.0)
    with pytest.raises(ConfigError):
        parse_float_list("4,huit")
