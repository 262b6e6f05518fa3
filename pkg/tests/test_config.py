import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compdyn.config import (ConfigError, default_config, default_config_text, parse_config,
                            serialize_config, with_overrides)


def test_default_round_trip():
    cfg = default_config()
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_default_text_has_every_section():
    text = default_config_text()
    for section in ("[scenario]", "[cone]", "[pipeline]", "[run]"):
        assert section in text


@pytest.mark.parametrize("text", [
    "[cone]\nmatrix = [[1, 2, 3]]\n",
    "[cone]\nmatrix = \"orthant\"\n",
    "[pipeline]\ndepth_schedule = [4, 2]\n",
    "[pipeline]\nunknown_key = 1\n",
    "[extras]\nx = 1\n",
    "[run]\nseed = -1\n",
    "[pipeline]\nmap_time = not json\n",
    "[scenario]\nname = \"nope\"\n",
    "[pipeline]\ncell_targets = [[\"origin\", \"sideways\"]]\n",
])
def test_malformed_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_sections_take_defaults():
    assert parse_config("") == default_config().__class__()


def test_overrides():
    cfg = with_overrides(default_config(), seed=5, out="x", depth=7, theta=0.01)
    assert cfg.run.seed == 5 and cfg.run.out == "x"
    assert cfg.pipeline.depth_schedule == [2, 4, 6, 7]
    assert cfg.pipeline.theta == 0.01


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.floats(1e-3, 10), st.lists(st.integers(1, 9), min_size=1,
                                                                   max_size=4, unique=True))
def test_round_trip_property(seed, map_time, depths):
    cfg = default_config()
    cfg.run.seed = seed
    cfg.pipeline.map_time = map_time
    cfg.pipeline.depth_schedule = sorted(depths)
    assert parse_config(serialize_config(cfg)) == cfg
