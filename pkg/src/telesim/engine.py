"""Fixed-step closed-loop simulation of the teleoperator testbed.

One tick of the loop (default 1 kHz):

1. sample encoders (quantized angles) and estimate velocities by backward
   difference of the quantized angles;
2. evaluate the operator torque, the rendered environment torque and the
   transmission coupling;
3. advance both shafts with semi-implicit Euler
   (``w += dt * a``; ``theta += dt * w``);
4. log the state *before* the update together with the torques that
   produced the update, so ``torque[i]`` drives ``angle[i + 1]``.

Sensed torques are the true torques plus white Gaussian noise, then clipped
to the sensor range. The environment motor's rotor sits between the output
torque sensor and the rendered torque law, so the logged environment torque
is the torque crossing the sensor: rendered torque minus rotor friction and
rotor inertial torque.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .environments import (
    CustomEnvironment,
    EnvironmentSpec,
    FreeSpace,
    SpringDamperEnv,
    TorsionSpring,
    environment_torque,
    spring_energy,
)
from .exceptions import InvalidSpecError, SimulationDiverged, TelesimError
from .operators import OperatorSpec, TorqueStep, operator_torque
from .transmissions import (
    Electromechanical,
    Rigid,
    ShaftState,
    SpringDamper,
    TransmissionSpec,
    coupling_torques,
    rigid_constraint,
)

__all__ = [
    "SensorSpec",
    "SimConfig",
    "TimeSeriesLog",
    "LOG_COLUMNS",
    "LogSchemaError",
    "run_simulation",
    "encoder_quantize",
    "n_ticks",
    "mechanical_energy",
]

LOG_COLUMNS = (
    "time",
    "master_angle",
    "master_velocity",
    "slave_angle",
    "slave_velocity",
    "operator_torque",
    "sensed_master_torque",
    "environment_torque",
    "sensed_environment_torque",
    "master_angle_quantized",
    "slave_angle_quantized",
)


class LogSchemaError(TelesimError, ValueError):
    """A CSV file does not match the simulation log schema."""


@dataclass(frozen=True)
class SensorSpec:
    """Torque sensors and encoders.

    ``encoder_counts_per_rev`` defaults to 500 CPT decoded in quadrature.
    ``angle_from_quantized`` selects whether the environment renderer and the
    electromechanical PD loop read encoder counts (True) or the true state.
    """

    torque_saturation: float = 5.0
    torque_noise_std: float = 1e-3
    encoder_counts_per_rev: int = 2000
    angle_from_quantized: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.torque_saturation) and self.torque_saturation > 0.0):
            raise InvalidSpecError("torque_saturation must be > 0")
        if not (math.isfinite(self.torque_noise_std) and self.torque_noise_std >= 0.0):
            raise InvalidSpecError("torque_noise_std must be >= 0")
        if int(self.encoder_counts_per_rev) != self.encoder_counts_per_rev or self.encoder_counts_per_rev < 1:
            raise InvalidSpecError("encoder_counts_per_rev must be an integer >= 1")


@dataclass(frozen=True)
class SimConfig:
    duration: float = 10.0
    dt: float = 1e-3
    master_inertia: float = 2e-4
    slave_inertia: float = 2e-4
    transmission: TransmissionSpec = field(default_factory=Rigid)
    environment: EnvironmentSpec = field(default_factory=TorsionSpring)
    operator: OperatorSpec = field(default_factory=TorqueStep)
    sensors: SensorSpec = field(default_factory=SensorSpec)
    rng_seed: int = 0
    initial_master: ShaftState = ShaftState()
    initial_slave: ShaftState = ShaftState()
    render_delay: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidSpecError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.duration) and self.duration >= self.dt):
            raise InvalidSpecError(f"duration must be >= dt, got {self.duration!r}")
        for name in ("master_inertia", "slave_inertia"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidSpecError(f"{name} must be > 0, got {value!r}")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise InvalidSpecError(f"rng_seed must be a non-negative integer, got {self.rng_seed!r}")
        object.__setattr__(self, "initial_master", ShaftState(*self.initial_master))
        object.__setattr__(self, "initial_slave", ShaftState(*self.initial_slave))
        if not (self.initial_master.is_finite() and self.initial_slave.is_finite()):
            raise InvalidSpecError("initial shaft states must be finite")
        if isinstance(self.transmission, Rigid):
            rigid_constraint(self.initial_master, self.initial_slave)


@dataclass(frozen=True)
class TimeSeriesLog:
    """Per-tick record of one run. Arrays are read-only."""

    time: np.ndarray
    master_angle: np.ndarray
    master_velocity: np.ndarray
    slave_angle: np.ndarray
    slave_velocity: np.ndarray
    operator_torque: np.ndarray
    sensed_master_torque: np.ndarray
    environment_torque: np.ndarray
    sensed_environment_torque: np.ndarray
    master_angle_quantized: np.ndarray
    slave_angle_quantized: np.ndarray

    def __post_init__(self):
        lengths = set()
        for f in fields(self):
            arr = np.array(getattr(self, f.name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, f.name, arr)
            lengths.add(arr.shape)
        if len(lengths) != 1 or len(next(iter(lengths))) != 1:
            raise LogSchemaError(f"log columns must be 1-D and equal length, got shapes {lengths}")

    def __len__(self):
        return self.time.shape[0]

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0]) if len(self) > 1 else float("nan")

    def column(self, name) -> np.ndarray:
        if name not in LOG_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in LOG_COLUMNS])

    def equals(self, other: "TimeSeriesLog") -> bool:
        """Bit-identical comparison of every column."""
        return all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True) for c in LOG_COLUMNS
        )

    def to_csv(self, path=None) -> str:
        """Write the log as a headered CSV with round-trip float precision."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in self.as_array().tolist():
            writer.writerow([repr(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "TimeSeriesLog":
        if isinstance(path_or_text, Path) or (
            isinstance(path_or_text, str) and "\n" not in path_or_text
        ):
            try:
                text = Path(path_or_text).read_text(encoding="utf-8")
            except OSError as exc:
                raise LogSchemaError(f"cannot read log: {exc}") from exc
        else:
            text = path_or_text
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise LogSchemaError("empty log file")
        header = tuple(h.strip() for h in rows[0])
        if header != LOG_COLUMNS:
            raise LogSchemaError(f"unexpected header {header}; expected {LOG_COLUMNS}")
        body = [r for r in rows[1:] if r]
        if len(body) < 2:
            raise LogSchemaError("log has fewer than two samples")
        for lineno, r in enumerate(body, start=2):
            if len(r) != len(LOG_COLUMNS):
                raise LogSchemaError(
                    f"line {lineno}: expected {len(LOG_COLUMNS)} fields, got {len(r)}"
                )
        try:
            data = np.array(body, dtype=float)
        except ValueError as exc:
            raise LogSchemaError(f"non-numeric value in log: {exc}") from exc
        return cls(**{c: data[:, i] for i, c in enumerate(LOG_COLUMNS)})


def encoder_quantize(angle: float, counts_per_rev: int) -> float:
    """Angle reported by an incremental encoder, truncated toward -inf."""
    if counts_per_rev < 1:
        raise InvalidSpecError("counts_per_rev must be >= 1")
    count = 2.0 * math.pi / counts_per_rev
    return math.floor(angle / count) * count


def n_ticks(duration: float, dt: float) -> int:
    """Number of logged samples, ``floor(duration / dt) + 1``."""
    ratio = duration / dt
    nearest = round(ratio)
    # absorb representation error such as 10 / 1e-3 = 10000.000000000002
    if abs(ratio - nearest) <= 1e-9 * max(1.0, abs(ratio)):
        ratio = nearest
    return int(math.floor(ratio)) + 1


def run_simulation(config: SimConfig) -> TimeSeriesLog:
    """Integrate the closed loop described by ``config`` and return its log.

    Raises
    ------
    SimulationDiverged
        If any state becomes non-finite; ``tick`` names the first bad tick.
    """
    if not isinstance(config, SimConfig):
        raise InvalidSpecError(f"expected SimConfig, got {type(config).__name__}")
    n = n_ticks(config.duration, config.dt)
    dt = config.dt
    trans = config.transmission
    env = config.environment
    op = config.operator
    sensors = config.sensors
    cpr = int(sensors.encoder_counts_per_rev)
    count = 2.0 * math.pi / cpr
    quantized_ctrl = sensors.angle_from_quantized

    if not isinstance(env, (FreeSpace, TorsionSpring, SpringDamperEnv, CustomEnvironment)):
        raise InvalidSpecError(f"unknown environment spec: {env!r}")
    if not isinstance(trans, (Rigid, SpringDamper, Electromechanical)):
        raise InvalidSpecError(f"unknown transmission spec: {trans!r}")

    jm, js = config.master_inertia, config.slave_inertia
    je, be = env.rotor_inertia, env.rotor_damping
    rigid = isinstance(trans, Rigid)
    pd_from_sensors = isinstance(trans, Electromechanical) and quantized_ctrl

    rng = np.random.default_rng(config.rng_seed)
    if sensors.torque_noise_std > 0.0:
        noise = rng.normal(0.0, sensors.torque_noise_std, size=(2, n))
    else:
        noise = np.zeros((2, n))

    out = np.empty((n, len(LOG_COLUMNS)))
    thm, wm = config.initial_master
    ths, ws = config.initial_slave
    qm_prev = math.floor(thm / count) * count
    qs_prev = math.floor(ths / count) * count
    delayed_render = 0.0

    for i in range(n):
        t = i * dt
        qm = math.floor(thm / count) * count
        qs = math.floor(ths / count) * count
        master = ShaftState(thm, wm)
        slave = ShaftState(ths, ws)
        if quantized_ctrl:
            slave_seen = ShaftState(qs, (qs - qs_prev) / dt)
        else:
            slave_seen = slave

        tau_op = operator_torque(t, master, op)
        render = environment_torque(slave_seen, env)
        if config.render_delay:
            render, delayed_render = delayed_render, render

        if rigid:
            alpha = (tau_op + render - (trans.parasitic_damping + be) * wm) / (jm + js + je)
            tau_env = render - be * wm - je * alpha
            wm = wm + dt * alpha
            thm = thm + dt * wm
            ws, ths = wm, thm
        else:
            if pd_from_sensors:
                tau_cm, tau_cs = coupling_torques(
                    ShaftState(qm, (qm - qm_prev) / dt), slave_seen, trans
                )
            else:
                tau_cm, tau_cs = coupling_torques(master, slave, trans)
            alpha_m = (tau_op + tau_cm) / jm
            alpha_s = (tau_cs + render - be * ws) / (js + je)
            tau_env = render - be * ws - je * alpha_s
            wm = wm + dt * alpha_m
            thm = thm + dt * wm
            ws = ws + dt * alpha_s
            ths = ths + dt * ws

        row = out[i]
        row[0] = t
        row[1], row[2], row[3], row[4] = master.angle, master.velocity, slave.angle, slave.velocity
        row[5] = tau_op
        row[6] = tau_op + noise[0, i]
        row[7] = tau_env
        row[8] = tau_env + noise[1, i]
        row[9], row[10] = qm, qs
        qm_prev, qs_prev = qm, qs

        if not (math.isfinite(thm) and math.isfinite(wm) and math.isfinite(ths) and math.isfinite(ws)):
            raise SimulationDiverged(i + 1)
        if not (math.isfinite(tau_op) and math.isfinite(tau_env)):
            raise SimulationDiverged(i)

    sat = sensors.torque_saturation
    np.clip(out[:, 6], -sat, sat, out=out[:, 6])
    np.clip(out[:, 8], -sat, sat, out=out[:, 8])
    return TimeSeriesLog(**{c: out[:, j] for j, c in enumerate(LOG_COLUMNS)})


def mechanical_energy(log: TimeSeriesLog, config: SimConfig, staggered: bool = True) -> np.ndarray:
    """Total mechanical energy per tick: kinetic plus all spring potentials.

    With ``staggered=True`` the kinetic term is ``0.5*J*w[i]*w[i+1]``, the
    energy that semi-implicit Euler conserves exactly for undamped linear
    springs; the result then has one fewer sample than the log. With
    ``staggered=False`` the textbook ``0.5*J*w[i]**2`` is used, which
    oscillates by O(omega*dt) around the conserved value.
    """
    trans, env = config.transmission, config.environment
    jm, js = config.master_inertia, config.slave_inertia
    je = env.rotor_inertia
    wm, ws = np.asarray(log.master_velocity), np.asarray(log.slave_velocity)
    thm, ths = np.asarray(log.master_angle), np.asarray(log.slave_angle)

    if staggered:
        km = wm[:-1] * wm[1:]
        ks = ws[:-1] * ws[1:]
        thm, ths = thm[:-1], ths[:-1]
    else:
        km, ks = wm * wm, ws * ws

    if isinstance(trans, Rigid):
        kinetic = 0.5 * (jm + js + je) * km
        coupling = np.zeros_like(kinetic)
    else:
        kinetic = 0.5 * jm * km + 0.5 * (js + je) * ks
        if isinstance(trans, SpringDamper):
            k = trans.effective_stiffness
        elif isinstance(trans, Electromechanical):
            k = trans.kp
        coupling = 0.5 * k * (thm - ths) ** 2
    potential = np.array([spring_energy(a, env) for a in ths]) if not isinstance(env, FreeSpace) else 0.0
    return kinetic + coupling + potential
