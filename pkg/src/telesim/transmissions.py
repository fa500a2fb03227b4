"""Master-slave transmissions of the 1-DoF teleoperator.

Three couplings can sit between the master (operator side) and slave
(environment side) shafts:

- ``Rigid``: a solid rod. Simulated as a kinematic constraint, so the two
  shafts become one inertia and only ``parasitic_damping`` remains.
- ``SpringDamper``: torsional spring and rotary damper in parallel, each of
  which can be disengaged.
- ``Electromechanical``: two motors under position-exchange PD control, with
  symmetric torque saturation on each motor.

None of the variants scale torque or position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

from .exceptions import ConstraintViolationError, InvalidSpecError, RigidVariantError

__all__ = [
    "ShaftState",
    "Rigid",
    "SpringDamper",
    "Electromechanical",
    "TransmissionSpec",
    "coupling_torques",
    "rigid_constraint",
]


class ShaftState(NamedTuple):
    """Angle [rad] and angular velocity [rad/s] of one rotational inertia."""

    angle: float = 0.0
    velocity: float = 0.0

    def is_finite(self) -> bool:
        return math.isfinite(self.angle) and math.isfinite(self.velocity)


def _require_nonnegative(name, value):
    if not (math.isfinite(value) and value >= 0.0):
        raise InvalidSpecError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class Rigid:
    """Rigid rod between master and slave.

    Parameters
    ----------
    parasitic_damping : float
        Viscous loss [N*m*s/rad] acting on the merged shaft velocity
        (bearings, capstans, sensor shafts).
    """

    parasitic_damping: float = 0.005

    def __post_init__(self):
        _require_nonnegative("parasitic_damping", self.parasitic_damping)


@dataclass(frozen=True)
class SpringDamper:
    """Torsional spring and rotary damper in parallel."""

    stiffness: float = 0.5
    damping: float = 0.01
    spring_engaged: bool = True
    damper_engaged: bool = True

    def __post_init__(self):
        _require_nonnegative("stiffness", self.stiffness)
        _require_nonnegative("damping", self.damping)

    @property
    def effective_stiffness(self) -> float:
        return self.stiffness if self.spring_engaged else 0.0

    @property
    def effective_damping(self) -> float:
        return self.damping if self.damper_engaged else 0.0


@dataclass(frozen=True)
class Electromechanical:
    """Position-exchange PD coupling between two back-drivable motors.

    Parameters
    ----------
    kp : float
        Proportional gain [N*m/rad] on the master-slave angle error.
    kd : float
        Derivative gain [N*m*s/rad] on the master-slave velocity error.
    motor_torque_limit : float
        Symmetric saturation [N*m] applied to each motor independently.
    """

    kp: float = 2.0
    kd: float = 0.02
    motor_torque_limit: float = 5.0

    def __post_init__(self):
        _require_nonnegative("kp", self.kp)
        _require_nonnegative("kd", self.kd)
        if not (math.isfinite(self.motor_torque_limit) and self.motor_torque_limit > 0.0):
            raise InvalidSpecError(
                f"motor_torque_limit must be finite and > 0, got {self.motor_torque_limit!r}"
            )


TransmissionSpec = Union[Rigid, SpringDamper, Electromechanical]


def _clamp(value, limit):
    return min(max(value, -limit), limit)


def coupling_torques(
    master: ShaftState, slave: ShaftState, spec: TransmissionSpec
) -> tuple[float, float]:
    """Torques the transmission applies to the master and slave shafts.

    The coupling torque is ``tau = k*(angle_m - angle_s) + b*(vel_m - vel_s)``
    and the pair ``(-tau, +tau)`` is returned. For the electromechanical
    variant each side is then clamped to the motor torque limit.

    Raises
    ------
    RigidVariantError
        For ``Rigid``; the engine handles it with :func:`rigid_constraint`.
    InvalidSpecError
        If ``spec`` is not a known transmission.
    """
    if isinstance(spec, SpringDamper):
        k, b = spec.effective_stiffness, spec.effective_damping
    elif isinstance(spec, Electromechanical):
        k, b = spec.kp, spec.kd
    elif isinstance(spec, Rigid):
        raise RigidVariantError(
            "rigid transmission has no coupling torque; simulate it as a merged inertia"
        )
    else:
        raise InvalidSpecError(f"unknown transmission spec: {spec!r}")

    tau = k * (master.angle - slave.angle) + b * (master.velocity - slave.velocity)
    on_master, on_slave = -tau, tau
    if isinstance(spec, Electromechanical):
        limit = spec.motor_torque_limit
        on_master, on_slave = _clamp(on_master, limit), _clamp(on_slave, limit)
    return on_master, on_slave


def rigid_constraint(master: ShaftState, slave: ShaftState) -> ShaftState:
    """Common state of two rigidly coupled shafts.

    The engine keeps both shafts coincident, so this only checks the
    constraint and hands back the shared state.
    """
    if master != slave:
        raise ConstraintViolationError(
            f"rigidly coupled shafts disagree: master={master}, slave={slave}"
        )
    return ShaftState(master.angle, master.velocity)
