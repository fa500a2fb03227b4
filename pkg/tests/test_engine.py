import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telesim.engine import (
    LOG_COLUMNS,
    LogSchemaError,
    SensorSpec,
    SimConfig,
    TimeSeriesLog,
    encoder_quantize,
    mechanical_energy,
    n_ticks,
    run_simulation,
)
from telesim.environments import FreeSpace, TorsionSpring
from telesim.exceptions import ConstraintViolationError, InvalidSpecError, SimulationDiverged
from telesim.operators import TorqueChirp, TorqueSine, TorqueStep
from telesim.transmissions import Electromechanical, Rigid, ShaftState, SpringDamper

from conftest import IDEAL_SENSORS

# 2*pi / 2000 and half of it, at 30 digits.
ONE_COUNT = 0.0031415926535897932
HALF_COUNT = 0.00157079632679489662


def test_free_space_equilibrium_is_all_zero():
    cfg = SimConfig(duration=1.0, environment=FreeSpace(), operator=TorqueStep(0.0),
                    sensors=SensorSpec(torque_noise_std=0.0))
    log = run_simulation(cfg)
    data = log.as_array()
    assert np.all(data[:, 1:] == 0.0)


def test_log_shape_and_time_axis():
    log = run_simulation(SimConfig(duration=0.5))
    assert len(log) == 501 == n_ticks(0.5, 1e-3)
    assert log.as_array().shape == (501, len(LOG_COLUMNS))
    assert log.dt == pytest.approx(1e-3)
    assert np.allclose(np.diff(log.time), 1e-3, rtol=0, atol=1e-15)


@pytest.mark.parametrize("duration, dt, expected", [(10.0, 1e-3, 10001), (1.0, 0.3, 4), (0.001, 1e-3, 2)])
def test_n_ticks(duration, dt, expected):
    assert n_ticks(duration, dt) == expected


def test_step_settles_at_amplitude_over_stiffness():
    k = 0.229183118052329283507
    cfg = SimConfig(duration=30.0, environment=TorsionSpring(stiffness=k), transmission=Rigid(0.005),
                    operator=TorqueStep(0.05, 0.1), sensors=IDEAL_SENSORS)
    log = run_simulation(cfg)
    assert log.slave_angle[-1] == pytest.approx(0.05 / k, rel=1e-4)


def test_same_seed_bit_identical_and_different_seed_differs():
    a = run_simulation(SimConfig(duration=1.0, rng_seed=7))
    b = run_simulation(SimConfig(duration=1.0, rng_seed=7))
    c = run_simulation(SimConfig(duration=1.0, rng_seed=8))
    assert a.equals(b)
    assert a.as_array().tobytes() == b.as_array().tobytes()
    assert not a.equals(c)


def test_encoder_examples():
    assert encoder_quantize(HALF_COUNT, 2000) == 0.0
    assert encoder_quantize(3 * ONE_COUNT, 2000) == pytest.approx(3 * ONE_COUNT, rel=1e-15)
    boundary = 5 * (2 * math.pi / 2000)
    assert encoder_quantize(boundary, 2000) == boundary
    assert encoder_quantize(-HALF_COUNT, 2000) == pytest.approx(-ONE_COUNT, rel=1e-15)
    with pytest.raises(InvalidSpecError):
        encoder_quantize(0.1, 0)


@given(st.floats(-100, 100), st.integers(1, 100000))
def test_quantization_error_within_one_count(angle, counts):
    q = encoder_quantize(angle, counts)
    count = 2 * math.pi / counts
    assert -1e-12 <= angle - q < count * (1 + 1e-12)


def _undamped_config(duration=10.0):
    return SimConfig(duration=duration, transmission=SpringDamper(damping=0.0),
                     environment=TorsionSpring(rotor_damping=0.0), operator=TorqueStep(0.0, 0.0),
                     sensors=IDEAL_SENSORS, initial_master=ShaftState(0.2, 0.0))


def test_zero_damping_conserves_energy():
    cfg = _undamped_config()
    energy = mechanical_energy(run_simulation(cfg), cfg)
    assert np.max(np.abs(energy - energy[0])) <= 1e-3 * energy[0]


def test_textbook_kinetic_energy_only_oscillates():
    # The unstaggered form wanders by O(omega*dt) but shows no secular drift.
    cfg = _undamped_config()
    energy = mechanical_energy(run_simulation(cfg), cfg, staggered=False)
    assert np.max(np.abs(energy - energy[0])) <= 0.1 * energy[0]
    first, last = energy[:1000].mean(), energy[-1000:].mean()
    assert last == pytest.approx(first, rel=1e-2)


@pytest.mark.parametrize("damping", [0.001, 0.01, 0.05])
def test_energy_audit_with_damping(damping):
    cfg = SimConfig(duration=10.0, transmission=SpringDamper(damping=damping), environment=TorsionSpring(),
                    operator=TorqueStep(0.0, 0.0), sensors=IDEAL_SENSORS,
                    initial_master=ShaftState(0.2, 0.0), initial_slave=ShaftState(-0.1, 1.0))
    energy = mechanical_energy(run_simulation(cfg), cfg)
    # local error bound of a first-order step: (omega_max * dt)**2 of the stored energy
    omega_max = math.sqrt((cfg.transmission.stiffness + cfg.environment.stiffness) / cfg.master_inertia)
    bound = (omega_max * cfg.dt) ** 2 * energy[0]
    assert np.max(np.diff(energy)) <= bound
    assert energy[-1] < 0.01 * energy[0]


def test_richardson_ratio_is_first_order():
    def final(dt):
        log = run_simulation(SimConfig(duration=1.0, dt=dt, sensors=IDEAL_SENSORS))
        return np.array([log.master_angle[-1], log.master_velocity[-1]])

    coarse, mid, fine = final(1e-3), final(5e-4), final(2.5e-4)
    ratio = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert 1.5 <= ratio <= 2.5


def test_rigid_matches_stiff_spring_damper():
    # k = 1e4 times the default coupling stiffness; stable only for omega*dt < 2, hence dt = 1e-4.
    stiff = SpringDamper().stiffness * 1e4
    kwargs = dict(duration=1.0, dt=1e-4, sensors=IDEAL_SENSORS, operator=TorqueStep(0.05, 0.1))
    rigid = run_simulation(SimConfig(transmission=Rigid(0.0), **kwargs))
    spring = run_simulation(SimConfig(transmission=SpringDamper(stiffness=stiff, damping=0.0), **kwargs))
    rms = np.sqrt(np.mean((rigid.slave_angle - spring.slave_angle) ** 2))
    assert rms <= 0.01 * np.sqrt(np.mean(rigid.slave_angle ** 2))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 20.0), st.integers(0, 2**31))
def test_sensed_torque_within_saturation(amplitude, seed):
    sensors = SensorSpec(torque_saturation=0.3, torque_noise_std=0.05)
    log = run_simulation(SimConfig(duration=0.5, operator=TorqueSine(amplitude, 3.0), sensors=sensors,
                                   rng_seed=seed))
    assert np.max(np.abs(log.sensed_master_torque)) <= 0.3
    assert np.max(np.abs(log.sensed_environment_torque)) <= 0.3


def test_quantized_columns_match_encoder():
    log = run_simulation(SimConfig(duration=0.5))
    expected = [encoder_quantize(a, 2000) for a in log.master_angle]
    assert np.array_equal(log.master_angle_quantized, expected)


def test_electromechanical_runs_from_sensors():
    cfg = SimConfig(duration=2.0, transmission=Electromechanical(), operator=TorqueStep(0.05, 0.1))
    log = run_simulation(cfg)
    assert np.all(np.isfinite(log.as_array()))
    assert log.slave_angle[-1] > 0.0


def test_divergence_reports_tick():
    cfg = SimConfig(duration=1.0, transmission=SpringDamper(stiffness=5000.0, damping=0.0),
                    operator=TorqueStep(0.05, 0.0), sensors=IDEAL_SENSORS)
    with pytest.raises(SimulationDiverged) as info:
        run_simulation(cfg)
    assert 0 < info.value.tick < 1001


@pytest.mark.parametrize("kwargs", [
    dict(dt=0.0), dict(dt=-1e-3), dict(duration=1e-4), dict(master_inertia=0.0),
    dict(slave_inertia=-1.0), dict(rng_seed=-1), dict(initial_master=ShaftState(math.nan, 0.0)),
])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidSpecError):
        SimConfig(**kwargs)


def test_rigid_rejects_split_initial_state():
    with pytest.raises(ConstraintViolationError):
        SimConfig(initial_master=ShaftState(0.1, 0.0))


def test_csv_round_trip(tmp_path):
    log = run_simulation(SimConfig(duration=0.2, operator=TorqueChirp(0.1, 1.0, 5.0, 0.2)))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    back = TimeSeriesLog.from_csv(path)
    assert back.equals(log)
    assert back.to_csv() == log.to_csv()


def test_truncated_csv_is_schema_error(tmp_path):
    text = run_simulation(SimConfig(duration=0.01)).to_csv()
    lines = text.splitlines()
    with pytest.raises(LogSchemaError):
        TimeSeriesLog.from_csv("\n".join(lines[:-1] + [lines[-1].rsplit(",", 3)[0]]))
    with pytest.raises(LogSchemaError):
        TimeSeriesLog.from_csv("time,master_angle\n0,0\n")


def test_log_is_read_only():
    log = run_simulation(SimConfig(duration=0.01))
    with pytest.raises(ValueError):
        log.master_angle[0] = 1.0
