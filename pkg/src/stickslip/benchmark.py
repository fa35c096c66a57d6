"""Standard synthetic multi-field benchmark.

Nine 2-hour wells across six fields.  Training fields differ in their
surface-torque measurement chain (gain, offset, noise level); the two
test fields sit outside the training gain/offset range, so models that
anchor on absolute torque scale generalize poorly.

Each well follows a scripted sequence of operating stages built from a
calibrated palette:

* ``calm`` / ``mild`` / ``rough``: base rotation 12.5/13.0/13.5 rad/s
  with speed kicks of 1.0/2.0/3.0 rad/s every 45 s.  Fresh out of
  steady sliding these produce SSI bands of roughly 0.15-0.28,
  0.30-0.57, and 0.43-0.85 (severity classes 1-3).
* ``severe3`` / ``severe4`` / ``severe5``: steady slow rotation at
  3/4/5 rad/s drives the full stick-slip limit cycle (SSI 2.4-2.9,
  class 4).
* ``locked_*``: the same surface profiles as calm/mild/rough but
  entered while the string is already in the limit cycle.  The
  oscillation persists (SSI around 2, class 4) even though the surface
  speed looks mild: severity is then readable only from the torque
  channel.  This bistability is the hysteresis that makes stick-slip
  hard to diagnose from surface data.
* ``reset``: a high-speed wash (24 rad/s, where the limit cycle cannot
  sustain itself) followed by a staircase descent; the oscillation
  decays and the next stage starts from clean sliding.

All stage durations are multiples of the 60 s window so windows are
stage-pure apart from genuine transition dynamics.
"""
from __future__ import annotations

from typing import Dict, List

from .exceptions import ConfigError
from .simulate import WellRecord, WellSpec, simulate_well
from .training import TrainConfig
from .windowing import DatasetSplit, assemble_split

WELL_DURATION_S = 7200.0
KICK_PERIOD_S = 45.0

# surface-torque measurement chain per field; test fields E and F sit
# outside the training gain/offset envelope
FIELDS: Dict[str, dict] = {
    "A": {"torque_gain": 0.85, "torque_offset": -250.0, "torque_noise": 25.0},
    "B": {"torque_gain": 1.00, "torque_offset": 0.0, "torque_noise": 40.0},
    "C": {"torque_gain": 1.15, "torque_offset": 250.0, "torque_noise": 30.0},
    "D": {"torque_gain": 0.95, "torque_offset": 100.0, "torque_noise": 55.0},
    "E": {"torque_gain": 0.70, "torque_offset": -450.0, "torque_noise": 70.0},
    "F": {"torque_gain": 0.62, "torque_offset": 500.0, "torque_noise": 80.0},
}

SECONDARY_NOISE = {"surface_wob": 0.15, "rop": 0.25, "flow_rate": 12.0,
                   "total_rotation_speed": 0.2}

MECHANICS = {
    "string_stiffness": 600.0,
    "string_damping": 40.0,
    "bit_inertia": 400.0,
    "static_friction_torque": 6000.0,
    "kinetic_friction_torque": 3000.0,
    "velocity_weakening_rate": 0.2,
}

# kicked stages: (base speed, kick peak-to-peak); locked_* reuse the same
# profiles and rely on the preceding severe stage for their regime
KICKED = {
    "calm": (12.5, 1.0), "mild": (13.0, 2.0), "rough": (13.5, 3.0),
    "locked_calm": (12.5, 1.0), "locked_mild": (13.0, 2.0),
    "locked_rough": (13.5, 3.0),
}
STEADY = {"severe3": 3.0, "severe4": 4.0, "severe5": 5.0}

# wash + staircase descent; 480 s total
RESET_STEPS = ((0.0, 24.0), (240.0, 21.0), (270.0, 18.0), (300.0, 16.0),
               (330.0, 14.5), (360.0, 13.6), (390.0, 13.0), (420.0, 12.7),
               (450.0, 12.5))
RESET_S = 480.0

SCRIPTS: Dict[str, tuple] = {
    "a1": (("calm", 720), ("mild", 720), ("rough", 600), ("severe4", 240),
           ("locked_calm", 780), ("reset", 480), ("calm", 600), ("mild", 600),
           ("severe5", 240), ("locked_mild", 720), ("reset", 480),
           ("rough", 600), ("calm", 420)),
    "a2": (("rough", 720), ("calm", 600), ("mild", 660), ("severe3", 240),
           ("locked_mild", 720), ("reset", 480), ("mild", 660),
           ("rough", 540), ("severe5", 240), ("locked_rough", 660),
           ("reset", 480), ("calm", 600), ("mild", 600)),
    "b1": (("mild", 720), ("calm", 600), ("severe3", 300),
           ("locked_rough", 720), ("reset", 480), ("rough", 720),
           ("mild", 600), ("severe4", 240), ("locked_calm", 660),
           ("reset", 480), ("calm", 600), ("mild", 480), ("rough", 600)),
    "b2": (("rough", 600), ("mild", 720), ("calm", 720), ("severe5", 300),
           ("locked_mild", 780), ("reset", 480), ("mild", 600),
           ("rough", 600), ("severe4", 240), ("locked_rough", 600),
           ("reset", 480), ("calm", 660), ("mild", 420)),
    "c1": (("calm", 600), ("rough", 720), ("mild", 600), ("severe4", 300),
           ("locked_calm", 720), ("reset", 480), ("rough", 600),
           ("calm", 600), ("severe3", 240), ("locked_mild", 660),
           ("reset", 480), ("mild", 600), ("rough", 600)),
    "d1": (("mild", 600), ("calm", 720), ("rough", 660), ("severe5", 240),
           ("locked_rough", 720), ("reset", 480), ("calm", 720),
           ("mild", 540), ("severe4", 300), ("locked_calm", 600),
           ("reset", 480), ("rough", 540), ("calm", 600)),
    # test wells open with a short severe episode so their first windows
    # already span the full label range (the transfer adaptation segment)
    "t1": (("calm", 300), ("severe4", 180), ("locked_calm", 240),
           ("reset", 480), ("mild", 600), ("rough", 600), ("calm", 600),
           ("severe4", 240), ("locked_mild", 900), ("reset", 480),
           ("calm", 540), ("severe4", 240), ("locked_calm", 600),
           ("locked_rough", 1200)),
    "t2": (("calm", 300), ("severe5", 240), ("locked_mild", 240),
           ("reset", 480), ("rough", 600), ("mild", 600), ("severe3", 240),
           ("locked_mild", 900), ("reset", 480), ("mild", 600),
           ("severe4", 240), ("locked_rough", 660), ("reset", 480),
           ("calm", 540), ("rough", 600)),
    "t3": (("calm", 240), ("severe4", 300), ("locked_calm", 180),
           ("reset", 480), ("mild", 600), ("rough", 600), ("severe3", 240),
           ("locked_rough", 840), ("reset", 480), ("calm", 600),
           ("severe5", 240), ("locked_mild", 600), ("reset", 480),
           ("rough", 540), ("mild", 480), ("calm", 300)),
}

WELLS = (
    ("a1", "A", 101), ("a2", "A", 102), ("b1", "B", 103), ("b2", "B", 104),
    ("c1", "C", 105), ("d1", "D", 106),
    ("t1", "E", 201), ("t2", "E", 202), ("t3", "F", 203),
)

TRAIN_WELLS = ("a1", "a2", "b1", "b2", "c1", "d1")
TEST_WELLS = ("t1", "t2", "t3")

# start of t1's final locked-severe stretch; used by the
# signal-attenuation failure demonstration
T1_LOCKED_TAIL_START_S = 5400.0

EPOCHS = 40
TRANSFER_EPOCHS = 20
TRANSFER_LEARNING_RATE = 1e-4
TRANSFER_FRACTION = 0.10
BENCHMARK_SEEDS = (0, 1, 2)


def _kicked_entries(base: float, kick: float, t0: float,
                    duration: float) -> List[list]:
    entries = []
    t = t0
    high = True
    while t < t0 + duration - 1e-9:
        entries.append([t, base + (kick / 2 if high else -kick / 2)])
        high = not high
        t += KICK_PERIOD_S
    return entries


def speed_profile(script) -> List[list]:
    """Expand a stage script into a piecewise-constant speed profile."""
    entries: List[list] = []
    t0 = 0.0
    for stage, seconds in script:
        if seconds <= 0 or seconds % 60 != 0:
            raise ConfigError(
                f"stage {stage!r} duration must be a positive multiple of 60"
            )
        if stage in KICKED:
            base, kick = KICKED[stage]
            entries.extend(_kicked_entries(base, kick, t0, seconds))
        elif stage in STEADY:
            entries.append([t0, STEADY[stage]])
        elif stage == "reset":
            if seconds != RESET_S:
                raise ConfigError(f"reset stage must last {RESET_S:.0f} s")
            entries.extend([t0 + dt, v] for dt, v in RESET_STEPS)
        else:
            raise ConfigError(f"unknown stage {stage!r}")
        t0 += seconds
    return entries


def well_spec(well_id: str) -> WellSpec:
    by_id = {wid: (fid, seed) for wid, fid, seed in WELLS}
    if well_id not in by_id:
        raise ConfigError(f"unknown benchmark well {well_id!r}")
    field_id, seed = by_id[well_id]
    script = SCRIPTS[well_id]
    total = sum(seconds for _, seconds in script)
    if total != WELL_DURATION_S:
        raise ConfigError(
            f"well {well_id}: script covers {total} s, wants {WELL_DURATION_S}"
        )
    field = FIELDS[field_id]
    noise = dict(SECONDARY_NOISE)
    noise["surface_torque"] = field["torque_noise"]
    return WellSpec(
        well_id=well_id, field_id=field_id, trajectory="vertical",
        duration_s=WELL_DURATION_S,
        surface_speed_profile=speed_profile(script),
        wob_profile=[[0.0, 8.0]], flow_profile=[[0.0, 2000.0]],
        torque_gain=field["torque_gain"],
        torque_offset=field["torque_offset"],
        noise_std=noise, seed=seed, **MECHANICS,
    )


def benchmark_specs() -> List[WellSpec]:
    return [well_spec(wid) for wid, _, _ in WELLS]


def benchmark_assignment() -> dict:
    assignment = {wid: "train" for wid in TRAIN_WELLS}
    assignment.update({wid: "test" for wid in TEST_WELLS})
    return assignment


def simulate_benchmark() -> List[WellRecord]:
    return [simulate_well(spec) for spec in benchmark_specs()]


def benchmark_split(records=None) -> DatasetSplit:
    if records is None:
        records = simulate_benchmark()
    return assemble_split(records, benchmark_assignment())


def benchmark_config(kind: str) -> TrainConfig:
    """Desk-scale training configuration shared by the comparisons."""
    coefficient = {}
    if kind == "adg":
        coefficient["grl_lambda"] = 10.0
    elif kind == "irm":
        coefficient["alpha"] = 0.1
    return TrainConfig(
        kind=kind, epochs=EPOCHS, batch_size=256, learning_rate=1e-3,
        hidden_layer_count=4, units=64, regularization_coefficient=1e-4,
        seeds=BENCHMARK_SEEDS, validation_fraction=0.1, **coefficient,
    )
