"""Environments rendered at the free end of the slave shaft.

A virtual environment is a torque law evaluated by the environment motor.
The motor's own rotor (inertia and viscous friction) is carried on the spec
as well: it sits behind the output torque sensor, so the engine adds it to the
slave-side dynamics and the sensor reads the torque that crosses the shaft.
``FreeSpace`` means nothing is attached, so no rotor and zero torque.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from .exceptions import InvalidSpecError
from .transmissions import ShaftState

__all__ = [
    "FreeSpace",
    "TorsionSpring",
    "SpringDamperEnv",
    "CustomEnvironment",
    "EnvironmentSpec",
    "environment_torque",
    "mnm_per_deg_to_nm_per_rad",
    "DEFAULT_SPRING_STIFFNESS",
]


def mnm_per_deg_to_nm_per_rad(value: float) -> float:
    """Convert a stiffness in mN*m/deg to N*m/rad."""
    return value * 1e-3 * 180.0 / math.pi


# Virtual torsion spring used in the rigid-transmission identification runs.
DEFAULT_SPRING_STIFFNESS = mnm_per_deg_to_nm_per_rad(4.0)

# Rotor of the environment motor (RE50-class): inertia [kg*m^2] and viscous
# friction [N*m*s/rad]. Conventions, not measured values.
DEFAULT_ROTOR_INERTIA = 5.4e-5
DEFAULT_ROTOR_DAMPING = 5e-4


def _check_rotor(spec):
    for name in ("rotor_inertia", "rotor_damping"):
        value = getattr(spec, name)
        if not (math.isfinite(value) and value >= 0.0):
            raise InvalidSpecError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class FreeSpace:
    """Nothing attached to the output shaft."""

    @property
    def rotor_inertia(self) -> float:
        return 0.0

    @property
    def rotor_damping(self) -> float:
        return 0.0


@dataclass(frozen=True)
class TorsionSpring:
    """Virtual torsion spring ``tau = -stiffness * (angle - rest_angle)``."""

    stiffness: float = DEFAULT_SPRING_STIFFNESS
    rest_angle: float = 0.0
    rotor_inertia: float = DEFAULT_ROTOR_INERTIA
    rotor_damping: float = DEFAULT_ROTOR_DAMPING

    def __post_init__(self):
        if not (math.isfinite(self.stiffness) and self.stiffness >= 0.0):
            raise InvalidSpecError(f"stiffness must be finite and >= 0, got {self.stiffness!r}")
        if not math.isfinite(self.rest_angle):
            raise InvalidSpecError(f"rest_angle must be finite, got {self.rest_angle!r}")
        _check_rotor(self)


@dataclass(frozen=True)
class SpringDamperEnv:
    """Virtual spring plus viscous damper, also used for physical environments."""

    stiffness: float = DEFAULT_SPRING_STIFFNESS
    damping: float = 0.0
    rest_angle: float = 0.0
    rotor_inertia: float = DEFAULT_ROTOR_INERTIA
    rotor_damping: float = DEFAULT_ROTOR_DAMPING

    def __post_init__(self):
        if not (math.isfinite(self.stiffness) and self.stiffness >= 0.0):
            raise InvalidSpecError(f"stiffness must be finite and >= 0, got {self.stiffness!r}")
        if not (math.isfinite(self.damping) and self.damping >= 0.0):
            raise InvalidSpecError(f"damping must be finite and >= 0, got {self.damping!r}")
        if not math.isfinite(self.rest_angle):
            raise InvalidSpecError(f"rest_angle must be finite, got {self.rest_angle!r}")
        _check_rotor(self)


@dataclass(frozen=True)
class CustomEnvironment:
    """User-supplied torque law ``torque_fn(slave_state) -> torque``.

    Extension point only; the CLI cannot express it. ``torque_fn`` must be a
    pure function for runs to stay reproducible.
    """

    torque_fn: Callable[[ShaftState], float]
    rotor_inertia: float = 0.0
    rotor_damping: float = 0.0

    def __post_init__(self):
        _check_rotor(self)


EnvironmentSpec = Union[FreeSpace, TorsionSpring, SpringDamperEnv, CustomEnvironment]


def environment_torque(slave: ShaftState, spec: EnvironmentSpec) -> float:
    """Torque the rendered environment law applies to the slave shaft."""
    if isinstance(spec, FreeSpace):
        return 0.0
    if isinstance(spec, TorsionSpring):
        return -spec.stiffness * (slave.angle - spec.rest_angle)
    if isinstance(spec, SpringDamperEnv):
        return -spec.stiffness * (slave.angle - spec.rest_angle) - spec.damping * slave.velocity
    if isinstance(spec, CustomEnvironment):
        return float(spec.torque_fn(slave))
    raise InvalidSpecError(f"unknown environment spec: {spec!r}")


def spring_energy(angle: float, spec: EnvironmentSpec) -> float:
    """Potential energy stored in the environment spring at ``angle``."""
    if isinstance(spec, (TorsionSpring, SpringDamperEnv)):
        return 0.5 * spec.stiffness * (angle - spec.rest_angle) ** 2
    return 0.0
