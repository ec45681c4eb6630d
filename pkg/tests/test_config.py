import dataclasses

import pytest
from hypothesis import given, strategies as st

from qkdsim.config import (Config, ConfigError, LinkConfig, SecurityConfig,
                           SimConfig, SourceConfig, apply_overrides,
                           config_keys, config_to_text, parse_config_text,
                           validate_config)


def test_preset_passes_validation():
    source, link, security, sim = validate_config(
        SourceConfig(), LinkConfig(), SecurityConfig(), SimConfig())
    assert source.mu == 0.5
    assert source.nu1 == 0.1
    assert source.nu2 == 0.0007
    assert (source.p_mu, source.p_nu1, source.p_nu2) == (0.9883, 0.0078, 0.0039)
    assert link.loss_coefficient == 0.2
    assert link.fiber_length == 50.0
    assert link.detector_efficiency == 0.165
    assert link.dark_count_prob == 9e-6
    assert security.epsilon == 1e-7


def test_validation_is_idempotent():
    bundle = (SourceConfig(), LinkConfig(), SecurityConfig(), SimConfig())
    once = validate_config(*bundle)
    twice = validate_config(*once)
    assert once == twice == bundle


def test_intensity_ordering_violation():
    with pytest.raises(ConfigError, match="mu must exceed nu1"):
        validate_config(SourceConfig(mu=0.1, nu1=0.5),
                        LinkConfig(), SecurityConfig(), SimConfig())


def test_probability_normalization_violation():
    with pytest.raises(ConfigError, match="probabilities must sum to 1"):
        validate_config(SourceConfig(p_mu=0.5, p_nu1=0.5, p_nu2=0.5),
                        LinkConfig(), SecurityConfig(), SimConfig())


def test_one_diagnostic_per_violation():
    with pytest.raises(ConfigError) as exc:
        validate_config(SourceConfig(mu=0.1, nu1=0.5, p_mu=1.5),
                        LinkConfig(loss_coefficient=-1),
                        SecurityConfig(epsilon=2.0), SimConfig())
    problems = exc.value.problems
    assert any("mu must exceed nu1" in p for p in problems)
    assert any("p_mu" in p for p in problems)
    assert any("loss_coefficient" in p for p in problems)
    assert any("epsilon" in p for p in problems)


def test_background_yield_counts_both_detectors():
    link = LinkConfig()
    assert link.background_yield() == pytest.approx(1 - (1 - 9e-6) ** 2)


def test_config_file_round_trip():
    cfg = Config().validated()
    text = config_to_text(cfg)
    assert parse_config_text(text) == cfg


def test_config_file_defaults_and_overrides():
    cfg = parse_config_text("fiber_length = 25\nrng_seed = 9\n")
    assert cfg.link.fiber_length == 25.0
    assert cfg.sim.rng_seed == 9
    # untouched keys keep the preset defaults
    assert cfg.source.mu == 0.5


def test_unknown_key_is_error():
    with pytest.raises(ConfigError, match="unknown configuration key: fibre_len"):
        parse_config_text("fibre_len = 10\n")
    with pytest.raises(ConfigError, match="unknown configuration key"):
        apply_overrides(Config(), {"not_a_key": "1"})


def test_malformed_value_is_error():
    with pytest.raises(ConfigError, match="fiber_length"):
        parse_config_text("fiber_length = fifty\n")
    with pytest.raises(ConfigError, match="stabilization_enabled"):
        parse_config_text("stabilization_enabled = maybe\n")


def test_comments_and_blank_lines_ignored():
    cfg = parse_config_text("# a comment\n\nmu = 0.6  # trailing\n")
    assert cfg.source.mu == 0.6


def test_every_key_is_typed_and_defaulted():
    keys = dict((k, (d, t)) for k, d, t in config_keys())
    assert "mu" in keys and "duration" in keys and "epc_step" in keys
    for key, (default, typ) in keys.items():
        assert isinstance(default, typ), key


@given(mu=st.floats(0.2, 1.5), nu1=st.floats(0.01, 0.15))
def test_ordering_invariant_enforced(mu, nu1):
    source = SourceConfig(mu=mu, nu1=nu1)
    if mu > nu1:
        assert validate_config(source, LinkConfig(), SecurityConfig(),
                               SimConfig())[0] is source
    else:
        with pytest.raises(ConfigError):
            validate_config(source, LinkConfig(), SecurityConfig(), SimConfig())


def test_overrides_do_not_mutate():
    base = Config()
    updated = apply_overrides(base, {"mu": "0.7"})
    assert base.source.mu == 0.5
    assert updated.source.mu == 0.7
    assert dataclasses.replace(updated) == updated
