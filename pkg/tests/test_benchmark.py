"""Structural invariants of the standard benchmark (no simulation)."""
import numpy as np
import pytest

from stickslip.benchmark import (FIELDS, KICK_PERIOD_S, RESET_S, SCRIPTS,
                                 TEST_WELLS, TRAIN_WELLS, WELL_DURATION_S,
                                 WELLS, benchmark_assignment, benchmark_config,
                                 speed_profile, well_spec)
from stickslip.exceptions import ConfigError


def test_scripts_cover_every_well_exactly():
    assert set(SCRIPTS) == {wid for wid, _, _ in WELLS}
    for wid, script in SCRIPTS.items():
        assert sum(seconds for _, seconds in script) == WELL_DURATION_S, wid
        for _, seconds in script:
            assert seconds % 60 == 0


def test_speed_profiles_are_valid_step_functions():
    for wid in SCRIPTS:
        entries = speed_profile(SCRIPTS[wid])
        times = [t for t, _ in entries]
        assert times[0] == 0.0
        assert all(b > a for a, b in zip(times, times[1:])), wid
        assert all(0.0 < v <= 30.0 for _, v in entries), wid


def test_kicked_stage_alternates_every_period():
    entries = speed_profile((("calm", 360),))
    assert len(entries) == 360 / KICK_PERIOD_S
    values = [v for _, v in entries]
    assert values[0] == 13.0 and values[1] == 12.0
    assert values[:2] * 4 == values


def test_stage_validation():
    with pytest.raises(ConfigError):
        speed_profile((("calm", 90),))            # not a window multiple
    with pytest.raises(ConfigError):
        speed_profile((("quiet", 60),))
    with pytest.raises(ConfigError):
        speed_profile((("reset", RESET_S + 60),))


def test_well_specs_carry_field_measurement_chain():
    for wid, fid, seed in WELLS:
        spec = well_spec(wid)
        field = FIELDS[fid]
        assert spec.field_id == fid
        assert spec.seed == seed
        assert spec.torque_gain == field["torque_gain"]
        assert spec.torque_offset == field["torque_offset"]
        assert spec.noise_std["surface_torque"] == field["torque_noise"]
        assert spec.duration_s == WELL_DURATION_S
    seeds = [seed for _, _, seed in WELLS]
    assert len(set(seeds)) == len(seeds)
    with pytest.raises(ConfigError):
        well_spec("nope")


def test_unseen_fields_sit_outside_the_training_gain_envelope():
    train_fields = {fid for wid, fid, _ in WELLS if wid in TRAIN_WELLS}
    test_fields = {fid for wid, fid, _ in WELLS if wid in TEST_WELLS}
    assert not train_fields & test_fields
    train_gains = [FIELDS[f]["torque_gain"] for f in train_fields]
    for f in test_fields:
        gain = FIELDS[f]["torque_gain"]
        assert gain < min(train_gains) or gain > max(train_gains)
        offset = FIELDS[f]["torque_offset"]
        train_offsets = [FIELDS[g]["torque_offset"] for g in train_fields]
        assert offset < min(train_offsets) or offset > max(train_offsets)


def test_assignment_roles():
    assignment = benchmark_assignment()
    assert sorted(w for w, r in assignment.items() if r == "train") == \
        sorted(TRAIN_WELLS)
    assert sorted(w for w, r in assignment.items() if r == "test") == \
        sorted(TEST_WELLS)


def test_benchmark_configs_validate_and_share_architecture():
    configs = {kind: benchmark_config(kind) for kind in ("baseline", "adg", "irm")}
    shapes = set()
    for kind, config in configs.items():
        config.validate()
        assert config.kind == kind
        assert config.seeds == (0, 1, 2)
        shapes.add((config.hidden_layer_count, config.units))
    assert len(shapes) == 1
    assert configs["adg"].grl_lambda is not None
    assert configs["irm"].alpha is not None
    assert configs["baseline"].grl_lambda is None
