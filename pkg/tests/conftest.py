import pytest

from telesim.engine import SensorSpec

# Noise off and encoders bypassed: the plant is exactly linear.
IDEAL_SENSORS = SensorSpec(torque_noise_std=0.0, angle_from_quantized=False)


@pytest.fixture
def ideal_sensors():
    return IDEAL_SENSORS


def engine_config_for(model, duration=10.0, operator=None):
    """Rigid loop whose participant admittance is exactly ``model``.

    Unit spring stiffness divided by the gain, total inertia 1/wn**2 and
    parasitic damping 2*zeta/wn, split evenly over the two shafts.
    """
    from telesim.engine import SimConfig
    from telesim.environments import TorsionSpring
    from telesim.operators import TorqueChirp
    from telesim.transmissions import Rigid

    stiffness = 1.0 / model.gain
    inertia = stiffness / model.natural_frequency**2
    damping = 2.0 * model.damping_ratio * stiffness / model.natural_frequency
    return SimConfig(
        duration=duration,
        master_inertia=inertia / 2,
        slave_inertia=inertia / 2,
        transmission=Rigid(parasitic_damping=damping),
        environment=TorsionSpring(stiffness=stiffness, rotor_inertia=0.0, rotor_damping=0.0),
        operator=operator if operator is not None else TorqueChirp(1.0 * stiffness, 0.1, 20.0, duration),
        sensors=IDEAL_SENSORS,
    )


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
