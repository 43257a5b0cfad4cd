import pytest
from hypothesis import given
from hypothesis import strategies as st

from foldnoise.config import ConfigError, format_config, load_config, parse_config_text, resolve_config
from foldnoise.sde import FlowConfig


def test_empty_file_gives_defaults():
    cfg, threads = resolve_config(parse_config_text(""))
    assert cfg == FlowConfig()
    assert threads is None


def test_flags_win_over_file():
    cfg, _ = resolve_config(parse_config_text("sigma=0.25\n"), {"sigma": 0.5})
    assert cfg.sigma == 0.5


def test_unset_flags_do_not_override():
    cfg, threads = resolve_config(parse_config_text("sigma = 0.25  # noise\nthreads=4"), {"sigma": None, "dt": None})
    assert cfg.sigma == 0.25 and threads == 4


def test_sigma_change_refreshes_horizon():
    cfg, _ = resolve_config({}, {"sigma": 1.0})
    assert cfg.t_max == FlowConfig(sigma=1.0).t_max


def test_malformed_line_reports_line_number():
    with pytest.raises(ConfigError, match=r"cfg:3"):
        parse_config_text("sigma=0.1\n\nthis is wrong\n", source="cfg")


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError, match="valid keys are x_in, y_in"):
        parse_config_text("sgma=0.1")


def test_bad_value_and_missing_value():
    with pytest.raises(ConfigError, match="int"):
        parse_config_text("n_paths=1.5")
    with pytest.raises(ConfigError, match="missing"):
        parse_config_text("dt=")


def test_none_clears_optional():
    vals = parse_config_text("tube_h0=none\nseed=0x10")
    assert vals == {"tube_h0": None, "seed": 16}
    with pytest.raises(ConfigError):
        parse_config_text("sigma=none")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


@given(
    st.floats(0.0, 2.0),
    st.integers(100, 10**6),
    st.integers(0, 2**63),
    st.one_of(st.none(), st.integers(1, 64)),
)
def test_print_round_trip(sigma, n, seed, threads):
    cfg, _ = resolve_config({}, {"sigma": sigma, "n_paths": n, "seed": seed})
    text = format_config(cfg, threads)
    again, th = resolve_config(parse_config_text(text))
    assert again == cfg and th == threads
    assert format_config(again, th) == text
