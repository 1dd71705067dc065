import pytest

from photonchain.config import (
    config_hash,
    default_run_config,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
    save_run_config,
)
from photonchain.errors import ConfigError


def test_default_config_is_valid_and_round_trips(tmp_path):
    cfg = default_run_config()
    path = tmp_path / "cfg.json"
    save_run_config(cfg, path)
    back = load_run_config(path)
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_unknown_keys_rejected_with_field_path():
    with pytest.raises(ConfigError) as err:
        run_config_from_dict({"chain": {"bogus_knob": 1.0}})
    assert err.value.field_path == "chain.bogus_knob"

    with pytest.raises(ConfigError) as err:
        run_config_from_dict({"unknown_section": {}})
    assert err.value.field_path == "unknown_section"


def test_type_errors_carry_paths():
    with pytest.raises(ConfigError) as err:
        run_config_from_dict({"chain": {"g_jpa_db": "loud"}})
    assert err.value.field_path == "chain.g_jpa_db"

    with pytest.raises(ConfigError) as err:
        run_config_from_dict({"seed": "seven"})
    assert err.value.field_path == "seed"


def test_invariant_violations_become_config_errors():
    with pytest.raises(ConfigError) as err:
        run_config_from_dict({"protocol": {"kappa_khz": 300.0, "kappa_out_khz": 410.0}})
    assert err.value.field_path == "protocol"

    with pytest.raises(ConfigError):
        run_config_from_dict({"chain": {"g_jpa_db": 55.0}})

    with pytest.raises(ConfigError):
        run_config_from_dict({"tomography": {"assumption": "both"}})


def test_partial_overrides_merge_with_defaults():
    cfg = run_config_from_dict({"seed": 13, "chain": {"g_jpa_db": 25.0}})
    assert cfg.seed == 13
    assert cfg.chain.g_jpa_db == 25.0
    assert cfg.chain.n_jpa == default_run_config().chain.n_jpa
    round_tripped = run_config_from_dict(run_config_to_dict(cfg))
    assert round_tripped == cfg


def test_readout_intervals_accept_lists():
    cfg = run_config_from_dict(
        {"protocol": {"readout_intervals_us": [[1.0, 4.0], [24.0, 28.0]]}}
    )
    assert cfg.protocol.readout_intervals_us == ((1.0, 4.0), (24.0, 28.0))


def test_invalid_json_is_a_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_mode_parameters_round_trip(tmp_path):
    from photonchain.config import resolve_mode_params

    cfg = run_config_from_dict({"mode": {"decay_rate_khz": 500.0}})
    params = resolve_mode_params(cfg)
    assert params.decay_rate_khz == 500.0
    # unset fields fall back to the derived values
    derived = resolve_mode_params(default_run_config())
    assert params.rise_time_ns == derived.rise_time_ns
    assert params.jpa_bandwidth_mhz == derived.jpa_bandwidth_mhz

    path = tmp_path / "cfg.json"
    save_run_config(cfg, path)
    back = load_run_config(path)
    assert resolve_mode_params(back) == params
