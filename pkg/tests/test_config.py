import json
import math
from fractions import Fraction

import pytest

from conftest import fixture_path
from relegation.config import RunConfig, canonical_json, load_config, loads_config
from relegation.errors import ConfigurationError

FIXTURE_NAMES = ["pendulum.toml", "pendulum_certified.toml", "nonresonant.toml", "resonant.toml", "empty.toml"]


def _pendulum_text():
    with open(fixture_path("pendulum.toml"), encoding="utf-8") as handle:
        return handle.read()


def _line_of(text, prefix):
    for number, line in enumerate(text.splitlines(), start=1):
        if line.startswith(prefix):
            return number
    raise AssertionError(prefix)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixtures_load_and_echo(name):
    config = load_config(fixture_path(name))
    assert RunConfig.from_dict(config.to_dict()) == config
    assert loads_config(json.dumps(config.to_dict()), "json") == config
    spec = config.build_spec()
    assert spec.r == config.algorithm.r
    assert spec.n1 == config.problem.n1


def test_pendulum_fixture_values():
    config = load_config(fixture_path("pendulum.toml"))
    assert config.problem.omega == (1,)
    assert config.problem.rational
    assert config.verify.orders == (1, 2, 3)
    assert config.verify.lam is None
    assert config.output.manifest == "manifest.json"
    spec = config.build_spec()
    assert spec.mu == pytest.approx(0.1)
    assert len(spec.H1) == 4
    assert spec.module.is_trivial


def test_unknown_key_names_its_line():
    text = _pendulum_text().replace("K = 2\n", "K = 2\nkappa = 3\n")
    with pytest.raises(ConfigurationError) as info:
        loads_config(text)
    assert info.value.field == "algorithm.kappa"
    assert info.value.line == _line_of(text, "kappa")
    assert info.value.column == 1


def test_zero_K_is_rejected():
    text = _pendulum_text().replace("K = 2\n", "K = 0\n")
    with pytest.raises(ConfigurationError) as info:
        loads_config(text)
    assert info.value.field == "algorithm.K"
    assert info.value.line == _line_of(text, "K = 0")
    assert "at least 1" in str(info.value)


def test_syntax_error_position():
    with pytest.raises(ConfigurationError) as info:
        loads_config("[problem]\nn1 = = 1\n")
    assert info.value.line == 2
    assert info.value.column is not None
    with pytest.raises(ConfigurationError) as info:
        loads_config('{"problem": ', "json")
    assert info.value.line == 1


def test_malformed_term_row():
    text = _pendulum_text().replace("f0 = [[0.5, 0.0, [0], [2], [], []]]", "f0 = [[0.5, [0], [2], [], []]]")
    with pytest.raises(ConfigurationError) as info:
        loads_config(text)
    assert info.value.field == "problem.f0"
    assert info.value.line == _line_of(text, "f0")


def test_unknown_table_and_missing_table():
    data = load_config(fixture_path("pendulum.toml")).to_dict()
    with pytest.raises(ConfigurationError, match="unknown table"):
        RunConfig.from_dict(dict(data, extras={}))
    del data["domain"]
    with pytest.raises(ConfigurationError, match="missing table"):
        RunConfig.from_dict(data)


def test_float_frequencies_need_a_basis():
    data = load_config(fixture_path("nonresonant.toml")).to_dict()
    del data["problem"]["resonance_basis"]
    config = RunConfig.from_dict(data)
    with pytest.raises(ConfigurationError) as info:
        config.build_spec()
    assert info.value.field == "problem.resonance_basis"

    data = load_config(fixture_path("pendulum.toml")).to_dict()
    data["problem"]["resonance_basis"] = []
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(data).build_spec()


def test_float_frequencies_from_omega_float():
    config = load_config(fixture_path("nonresonant.toml"))
    assert config.problem.omega is None
    assert config.problem.omega_float == (1.0, 1.618033988749895)
    assert not config.problem.rational
    assert "omega" not in config.to_dict()["problem"]
    data = json.loads(json.dumps(config.to_dict()))
    data["problem"]["omega_float"] = [1.0, 1.41421356]
    spec = loads_config(json.dumps(data), "json").build_spec()
    assert not spec.omega.exact
    assert spec.omega.omega == (1.0, 1.41421356)
    assert spec.module.is_trivial


def test_omega_and_omega_float_are_exclusive():
    text = _pendulum_text().replace("omega = [1]\n", "omega = [1]\nomega_float = [1.0]\n")
    with pytest.raises(ConfigurationError) as info:
        loads_config(text)
    assert info.value.field == "problem.omega_float"
    assert info.value.line == _line_of(text, "omega_float")
    with pytest.raises(ConfigurationError, match="omega_float") as info:
        loads_config(_pendulum_text().replace("omega = [1]\n", "omega = [1.0]\n"))
    assert info.value.field == "problem.omega"


def test_exact_rationals_from_strings():
    data = load_config(fixture_path("resonant.toml")).to_dict()
    data["problem"].update(omega=["1/2", "-1/2"], mu="1/20", epsilon="1/100", exact=True)
    config = RunConfig.from_dict(data)
    assert config.problem.omega == (Fraction(1, 2), Fraction(-1, 2))
    spec = config.build_spec()
    assert spec.exact
    assert spec.mu == Fraction(1, 20)
    assert RunConfig.from_dict(config.to_dict()) == config


def test_range_checks():
    data = load_config(fixture_path("pendulum.toml")).to_dict()
    bad = json.loads(json.dumps(data))
    bad["algorithm"]["d"] = 0.5
    with pytest.raises(ConfigurationError, match="algorithm.d"):
        RunConfig.from_dict(bad)
    bad = json.loads(json.dumps(data))
    bad["output"]["format"] = "yaml"
    with pytest.raises(ConfigurationError, match="output.format"):
        RunConfig.from_dict(bad)
    bad = json.loads(json.dumps(data))
    bad["verify"]["orders"] = [0]
    with pytest.raises(ConfigurationError, match="verify.orders"):
        RunConfig.from_dict(bad)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_canonical_json():
    text = canonical_json({"b": 1, "a": [math.inf, 0.5]})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": ["inf", 0.5], "b": 1}
    assert text.endswith("\n")
