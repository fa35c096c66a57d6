"""Synthetic multi-well drilling data from a two degree-of-freedom model.

The drill string is lumped into a surface node that imposes the top-drive
rotation and a bit node with inertia ``J`` coupled through torsional
stiffness ``k`` and damping ``c``:

    J * domega_b/dt = k*(theta_s - theta_b) + c*(omega_s - omega_b) - T_bit

The bit torque is velocity weakening, ``T_bit(w) = s*(Tk + (Ts-Tk)*exp(-r*w))``
with ``s = WOB / 10 kN``, and the bit sticks (speed exactly zero) while the
driving torque stays below the static threshold ``s*Ts``.  Weak damping plus
strong weakening produces the classic torsional limit cycle: the bit halts,
the string winds up, then the bit spins past the surface speed.

Integration is fixed-step semi-implicit Euler at 50 Hz with a fixed
arithmetic order, then block-averaged to 1 Hz, so a (spec, seed) pair
always produces bit-identical records.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ShapeError, SimulationDiverged

INTERNAL_RATE_HZ = 50
WOB_REFERENCE_KN = 10.0
ROP_GAIN = 0.05          # m/h per (kN * rad/s), see _derive_rop
ROP_SPEED_WINDOW_S = 60

SURFACE_CHANNELS = ("surface_torque", "surface_wob", "rop", "flow_rate",
                    "total_rotation_speed")
NOISE_CHANNELS = SURFACE_CHANNELS + ("bit_speed",)

_CSV_HEADER = ["t", "surface_torque", "surface_wob", "rop", "flow_rate",
               "total_rotation_speed", "bit_speed"]


@dataclass
class WellSpec:
    """Physical and operational description of one synthetic well."""

    well_id: str
    field_id: str
    trajectory: str                    # "vertical" or "lateral"
    duration_s: float
    string_stiffness: float            # N*m/rad
    string_damping: float              # N*m*s/rad
    bit_inertia: float                 # kg*m^2
    static_friction_torque: float      # N*m at reference WOB
    kinetic_friction_torque: float     # N*m at reference WOB
    velocity_weakening_rate: float     # 1/(rad/s)
    surface_speed_profile: list        # [[t_s, rad/s], ...] piecewise constant
    wob_profile: list                  # [[t_s, kN], ...]
    flow_profile: list                 # [[t_s, L/min], ...]
    torque_gain: float
    torque_offset: float
    noise_std: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError(f"well {self.well_id}: duration_s must be > 0")
        if self.trajectory not in ("vertical", "lateral"):
            raise ConfigError(
                f"well {self.well_id}: trajectory must be vertical or lateral"
            )
        if not (self.static_friction_torque >= self.kinetic_friction_torque > 0):
            raise ConfigError(
                f"well {self.well_id}: need static >= kinetic friction > 0"
            )
        if self.string_stiffness <= 0:
            raise ConfigError(f"well {self.well_id}: string_stiffness must be > 0")
        if self.bit_inertia <= 0:
            raise ConfigError(f"well {self.well_id}: bit_inertia must be > 0")
        if self.string_damping < 0:
            raise ConfigError(f"well {self.well_id}: string_damping must be >= 0")
        if self.velocity_weakening_rate < 0:
            raise ConfigError(
                f"well {self.well_id}: velocity_weakening_rate must be >= 0"
            )
        if self.torque_gain <= 0:
            raise ConfigError(f"well {self.well_id}: torque_gain must be > 0")
        for pname in ("surface_speed_profile", "wob_profile", "flow_profile"):
            profile = getattr(self, pname)
            _validate_profile(profile, f"well {self.well_id}: {pname}")
        for channel, std in self.noise_std.items():
            if channel not in NOISE_CHANNELS:
                raise ConfigError(
                    f"well {self.well_id}: unknown noise channel {channel!r}"
                )
            if std < 0 or not math.isfinite(std):
                raise ConfigError(
                    f"well {self.well_id}: noise_std[{channel!r}] must be finite >= 0"
                )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WellSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed well spec JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("well spec JSON must be an object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown well spec fields: {sorted(unknown)}")
        missing = known - set(raw) - {"noise_std", "seed"}
        if missing:
            raise ConfigError(f"missing well spec fields: {sorted(missing)}")
        spec = cls(**raw)
        spec.validate()
        return spec


def _validate_profile(profile, label: str) -> None:
    if not isinstance(profile, (list, tuple)) or len(profile) == 0:
        raise ConfigError(f"{label}: profile must be a non-empty list of [t, value]")
    last_t = None
    for entry in profile:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigError(f"{label}: entries must be [t, value] pairs")
        t, v = entry
        if not (math.isfinite(t) and math.isfinite(v)):
            raise ConfigError(f"{label}: non-finite profile entry {entry}")
        if last_t is None:
            if t != 0:
                raise ConfigError(f"{label}: first entry must start at t=0")
        elif t <= last_t:
            raise ConfigError(f"{label}: times must be strictly increasing")
        last_t = t


def _profile_steps(profile, times: np.ndarray) -> np.ndarray:
    """Piecewise-constant profile values at each time in ``times``."""
    knots = np.array([p[0] for p in profile], dtype=np.float64)
    values = np.array([p[1] for p in profile], dtype=np.float64)
    idx = np.searchsorted(knots, times, side="right") - 1
    return values[idx]


@dataclass
class WellRecord:
    """1 Hz channels for one well; bit_speed is the label source."""

    well_id: str
    field_id: str
    surface_torque: np.ndarray
    surface_wob: np.ndarray
    rop: np.ndarray
    flow_rate: np.ndarray
    total_rotation_speed: np.ndarray
    bit_speed: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        series = self.channel_arrays()
        lengths = {len(s) for s in series.values()}
        if len(lengths) != 1:
            raise ShapeError(f"well {self.well_id}: unequal channel lengths {lengths}")
        for name, s in series.items():
            if not np.all(np.isfinite(s)):
                raise ShapeError(f"well {self.well_id}: non-finite values in {name}")
        if self.sample_rate != 1.0:
            raise ShapeError(f"well {self.well_id}: sample_rate must be 1 Hz")

    def __len__(self) -> int:
        return len(self.bit_speed)

    def channel_arrays(self) -> dict:
        return {
            "surface_torque": self.surface_torque,
            "surface_wob": self.surface_wob,
            "rop": self.rop,
            "flow_rate": self.flow_rate,
            "total_rotation_speed": self.total_rotation_speed,
            "bit_speed": self.bit_speed,
        }

    def replace_channels(self, **channels) -> "WellRecord":
        data = self.channel_arrays()
        data.update(channels)
        return WellRecord(well_id=self.well_id, field_id=self.field_id, **data)


def _integrate_torsional(stiffness: float, damping: float,
                         inertia: float, static_torque: float,
                         kinetic_torque: float, weakening_rate: float,
                         omega_surface: np.ndarray, wob_scale: np.ndarray):
    """Core fixed-step integrator; returns 1 Hz (torque_raw, bit_speed).

    ``omega_surface`` and ``wob_scale`` are per-substep arrays.  The
    returned torque is the unscaled string torque ``k*dtheta + c*domega``
    sampled as a block average, like the bit speed.

    Arithmetic order inside the loop is part of the determinism
    contract; do not reorder.
    """
    dt = 1.0 / INTERNAL_RATE_HZ
    n_steps = omega_surface.shape[0]
    n_seconds = n_steps // INTERNAL_RATE_HZ

    k = float(stiffness)
    c = float(damping)
    inv_j = 1.0 / float(inertia)
    ts = float(static_torque)
    tk = float(kinetic_torque)
    rate = float(weakening_rate)
    exp = math.exp

    # Start at the torque balance for the initial operating point with a
    # 1% bit-speed deficit; stable wells relax, weakening wells wind up.
    om0 = float(omega_surface[0])
    s0 = float(wob_scale[0])
    if om0 > 0.0:
        omega_b = 0.99 * om0
        tf0 = s0 * (tk + (ts - tk) * exp(-rate * omega_b))
        dtheta = (tf0 - c * (om0 - omega_b)) / k
        stuck = False
    else:
        omega_b = 0.0
        dtheta = 0.0
        stuck = True
    theta_s = 0.0
    theta_b = -dtheta

    torque_1hz = np.empty(n_seconds)
    bit_1hz = np.empty(n_seconds)
    acc_tau = 0.0
    acc_bit = 0.0
    in_block = 0
    block = 0

    for i in range(n_steps):
        om = omega_surface[i]
        s = wob_scale[i]
        gap = theta_s - theta_b
        if stuck:
            drive = k * gap + c * om
            if abs(drive) >= ts * s:
                stuck = False
        if not stuck:
            drive = k * gap + c * (om - omega_b)
            friction = s * (tk + (ts - tk) * exp(-rate * omega_b))
            omega_b += dt * (drive - friction) * inv_j
            if omega_b <= 0.0:
                omega_b = 0.0
                stuck = True
            else:
                theta_b += omega_b * dt
        theta_s += om * dt
        if not (-1e9 < omega_b < 1e9):
            raise SimulationDiverged(i, i * dt)
        tau = k * (theta_s - theta_b) + c * (om - omega_b)
        acc_tau += tau
        acc_bit += omega_b
        in_block += 1
        if in_block == INTERNAL_RATE_HZ:
            torque_1hz[block] = acc_tau / INTERNAL_RATE_HZ
            bit_1hz[block] = acc_bit / INTERNAL_RATE_HZ
            acc_tau = 0.0
            acc_bit = 0.0
            in_block = 0
            block += 1
            if block == n_seconds:
                break

    return torque_1hz, bit_1hz


def _block_average(values: np.ndarray, n_seconds: int) -> np.ndarray:
    trimmed = values[: n_seconds * INTERNAL_RATE_HZ]
    return trimmed.reshape(n_seconds, INTERNAL_RATE_HZ).mean(axis=1)


def _trailing_mean(values: np.ndarray, width: int) -> np.ndarray:
    """Mean over the trailing ``width`` samples (shorter at the start)."""
    csum = np.concatenate([[0.0], np.cumsum(values)])
    n = values.shape[0]
    idx = np.arange(1, n + 1)
    lo = np.maximum(idx - width, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def simulate_well(spec: WellSpec) -> WellRecord:
    """Integrate one well and return its 1 Hz record.

    Deterministic: the same spec (including seed) always yields a
    bit-identical record.  Measurement noise is added to the 1 Hz
    channels in a fixed channel order.
    """
    spec.validate()
    n_seconds = int(math.floor(spec.duration_s))
    if n_seconds < 1:
        raise ConfigError(f"well {spec.well_id}: duration shorter than 1 s")
    n_steps = n_seconds * INTERNAL_RATE_HZ
    times = np.arange(n_steps, dtype=np.float64) / INTERNAL_RATE_HZ
    omega_surface = _profile_steps(spec.surface_speed_profile, times)
    wob = _profile_steps(spec.wob_profile, times)
    if np.any(wob <= 0):
        raise ConfigError(f"well {spec.well_id}: wob_profile must stay > 0")
    if np.any(omega_surface < 0):
        raise ConfigError(f"well {spec.well_id}: surface speed must stay >= 0")
    wob_scale = wob / WOB_REFERENCE_KN

    torque_raw, bit_speed = _integrate_torsional(
        spec.string_stiffness, spec.string_damping,
        spec.bit_inertia, spec.static_friction_torque,
        spec.kinetic_friction_torque, spec.velocity_weakening_rate,
        omega_surface, wob_scale,
    )

    surface_torque = spec.torque_gain * torque_raw + spec.torque_offset
    surface_wob = _block_average(wob, n_seconds)
    rotation_1hz = _block_average(omega_surface, n_seconds)
    flow = _profile_steps(spec.flow_profile, np.arange(n_seconds, dtype=np.float64))

    # ROP follows WOB times smoothed bit speed: monotone in both, and the
    # smoothing removes window-scale oscillation so the channel carries
    # almost no stick-slip signature.
    rop = ROP_GAIN * surface_wob * _trailing_mean(bit_speed, ROP_SPEED_WINDOW_S)

    rng = np.random.default_rng(spec.seed)
    channels = {
        "surface_torque": surface_torque,
        "surface_wob": surface_wob,
        "rop": rop,
        "flow_rate": flow,
        "total_rotation_speed": rotation_1hz,
        "bit_speed": bit_speed,
    }
    for name in NOISE_CHANNELS:  # fixed order, one draw per channel
        std = float(spec.noise_std.get(name, 0.0))
        noise = rng.normal(0.0, 1.0, n_seconds)
        if std > 0.0:
            channels[name] = channels[name] + std * noise

    return WellRecord(well_id=spec.well_id, field_id=spec.field_id, **channels)


def inject_jetlag(record: WellRecord, offset_s: int) -> WellRecord:
    """Shift the downhole stream by ``offset_s`` against the surface channels.

    Positive offsets drop the first ``offset_s`` downhole samples (the
    downhole clock lags), negative offsets the reverse; all channels are
    trimmed to the overlapping support.  The surface channels themselves
    are not modified.
    """
    offset = int(offset_s)
    if offset != offset_s:
        raise ConfigError("offset_s must be an integer number of seconds")
    n = len(record)
    if abs(offset) >= n:
        raise ConfigError(
            f"jet lag of {offset}s leaves no overlap on a {n}s record"
        )
    if offset == 0:
        return record.replace_channels()
    keep = n - abs(offset)
    channels = {}
    for name, series in record.channel_arrays().items():
        if name == "bit_speed":
            sl = series[offset:offset + keep] if offset > 0 else series[:keep]
        else:
            sl = series[:keep] if offset > 0 else series[-offset:-offset + keep]
        channels[name] = sl.copy()
    return record.replace_channels(**channels)


def _centered_mean(values: np.ndarray, half_width: int) -> np.ndarray:
    """Centered moving average, window truncated at the edges."""
    n = values.shape[0]
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(n)
    lo = np.maximum(idx - half_width, 0)
    hi = np.minimum(idx + half_width + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def inject_attenuation(record: WellRecord, horizontal_start_s: float,
                       gain: float) -> WellRecord:
    """Dampen the oscillatory surface-torque component after a given time.

    Past ``horizontal_start_s`` the deviation of surface torque from its
    60 s centered rolling mean is multiplied by ``gain``; the downhole
    channel is untouched, so true labels stay severe while the surface
    pattern fades.
    """
    if not 0.0 <= gain <= 1.0:
        raise ConfigError(f"attenuation gain must be in [0, 1], got {gain}")
    if horizontal_start_s < 0:
        raise ConfigError("horizontal_start_s must be >= 0")
    if gain == 1.0:
        return record.replace_channels()
    torque = record.surface_torque
    baseline = _centered_mean(torque, 30)
    start = int(math.floor(horizontal_start_s))
    out = torque.copy()
    if start < len(torque):
        out[start:] = baseline[start:] + gain * (torque[start:] - baseline[start:])
    return record.replace_channels(surface_torque=out)


def inject_label_spike(record: WellRecord, t_s: float, magnitude: float) -> WellRecord:
    """Add a short (two sample) transient to the downhole speed channel."""
    n = len(record)
    if not 0 <= t_s < n:
        raise ConfigError(f"spike time {t_s} outside record [0, {n})")
    if magnitude == 0.0:
        return record.replace_channels()
    idx = int(math.floor(t_s))
    bit = record.bit_speed.copy()
    bit[idx] += magnitude
    if idx + 1 < n:
        bit[idx + 1] += 0.5 * magnitude
    return record.replace_channels(bit_speed=bit)


def _format_value(x: float) -> str:
    # repr of a python float is the shortest round-trip form: stable bytes
    return repr(float(x))


def write_well_csv(record: WellRecord, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = record.channel_arrays()
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_HEADER)
        for t in range(len(record)):
            row = [str(t)] + [_format_value(arrays[name][t]) for name in _CSV_HEADER[1:]]
            writer.writerow(row)


def read_well_csv(path, well_id: str, field_id: str) -> WellRecord:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no well record at {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: empty record")
    try:
        data = np.array([[float(v) for v in row[1:]] for row in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row ({exc})") from exc
    channels = {name: np.ascontiguousarray(data[:, i])
                for i, name in enumerate(_CSV_HEADER[1:])}
    return WellRecord(well_id=well_id, field_id=field_id, **channels)
