import pytest

from prover.config import ConfigurationError, ScheduleConfig, Settings, load_settings, settings_from_dict
from tests.helpers import write_json


def test_defaults_run_hermetically(monkeypatch):
    monkeypatch.delenv("DREAM_CONFIG", raising=False)
    settings = load_settings()
    assert settings == Settings()
    assert settings.gateway.kind == "stub"
    assert settings.verifier.kind == "mock"
    assert settings.schedule.diversify_at == frozenset({4, 7})
    assert settings.dataset.max_attempts == 60


def test_file_values_overlay_the_defaults(tmp_path):
    path = write_json(tmp_path / "dream.json", {
        "schedule": {"max_revisions": 6, "diversify_at": [3, 5], "m_range": [2, 4]},
        "decoding": {"temperatures": {"GenerateProof": 1.0}},
        "verifier": {"imports": ["import Mathlib", "import Aesop"]},
    })
    settings = load_settings(path)
    assert settings.schedule.diversify_at == frozenset({3, 5})
    assert settings.schedule.m_range == (2, 4)
    assert settings.verifier.imports == ("import Mathlib", "import Aesop")
    assert settings.decoding.temperatures["GenerateProof"] == 1.0
    assert settings.decoding.temperatures["AnnotateSubpropositions"] == 0.0
    assert settings.gateway == Settings().gateway


def test_config_location_from_the_environment(tmp_path, monkeypatch):
    path = write_json(tmp_path / "env.json", {"harness": {"parallel": 3}})
    monkeypatch.setenv("DREAM_CONFIG", str(path))
    assert load_settings().harness.parallel == 3


@pytest.mark.parametrize(
    "data",
    [
        {"gatewy": {}},
        {"gateway": {"modle": "x"}},
        {"schedule": []},
        {"schedule": {"diversify_at": [1]}},
        {"schedule": {"max_revisions": 5, "diversify_at": [7]}},
        {"schedule": {"m_range": [4, 2]}},
        {"schedule": {"selection": "best"}},
    ],
)
def test_invalid_configs_are_rejected(data):
    with pytest.raises(ConfigurationError):
        settings_from_dict(data)


def test_unreadable_config_files(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_settings(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        load_settings(broken)
    listing = write_json(tmp_path / "list.json", [1, 2])
    with pytest.raises(ConfigurationError, match="JSON object"):
        load_settings(listing)


def test_schedule_without_diversification_points():
    assert ScheduleConfig(diversify_at=frozenset()).diversify_at == frozenset()
