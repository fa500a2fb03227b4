"""Reproducible torque sources standing in for the human operator.

Every operator is a pure function of ``(t, master_state, spec)``. The hand's
inertia is not modelled here; it is lumped into the master shaft inertia.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .exceptions import InvalidSpecError
from .transmissions import ShaftState

__all__ = [
    "TorqueStep",
    "TorqueSine",
    "TorqueChirp",
    "StepProfile",
    "SineProfile",
    "ImpedanceTracker",
    "OperatorSpec",
    "operator_torque",
]


def _finite(name, value):
    if not math.isfinite(value):
        raise InvalidSpecError(f"{name} must be finite, got {value!r}")


def _nonneg(name, value):
    if not (math.isfinite(value) and value >= 0.0):
        raise InvalidSpecError(f"{name} must be finite and >= 0, got {value!r}")


def _positive(name, value):
    if not (math.isfinite(value) and value > 0.0):
        raise InvalidSpecError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class TorqueStep:
    amplitude: float = 0.05
    onset: float = 0.1

    def __post_init__(self):
        _nonneg("amplitude", self.amplitude)
        _nonneg("onset", self.onset)


@dataclass(frozen=True)
class TorqueSine:
    amplitude: float = 0.05
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        _nonneg("amplitude", self.amplitude)
        _positive("frequency", self.frequency)
        _finite("phase", self.phase)


@dataclass(frozen=True)
class TorqueChirp:
    """Linear sine sweep from ``f0`` to ``f1`` over ``duration``, then held at ``f1``."""

    amplitude: float = 0.05
    f0: float = 0.1
    f1: float = 10.0
    duration: float = 10.0

    def __post_init__(self):
        _nonneg("amplitude", self.amplitude)
        _positive("f0", self.f0)
        _positive("f1", self.f1)
        _positive("duration", self.duration)
        if self.f1 < self.f0:
            raise InvalidSpecError(f"f1 ({self.f1}) must be >= f0 ({self.f0})")


@dataclass(frozen=True)
class StepProfile:
    """Reference angle that jumps from 0 to ``amplitude`` at ``onset``."""

    amplitude: float = 0.2
    onset: float = 0.1

    def __post_init__(self):
        _finite("amplitude", self.amplitude)
        _nonneg("onset", self.onset)

    def __call__(self, t):
        return self.amplitude if t >= self.onset else 0.0


@dataclass(frozen=True)
class SineProfile:
    amplitude: float = 0.2
    frequency: float = 0.5
    phase: float = 0.0

    def __post_init__(self):
        _finite("amplitude", self.amplitude)
        _positive("frequency", self.frequency)
        _finite("phase", self.phase)

    def __call__(self, t):
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class ImpedanceTracker:
    """Hand modelled as a spring-damper pulling the master toward a reference angle."""

    target_angle_profile: Union[StepProfile, SineProfile] = StepProfile()
    hand_stiffness: float = 0.5
    hand_damping: float = 0.005

    def __post_init__(self):
        if not isinstance(self.target_angle_profile, (StepProfile, SineProfile)):
            raise InvalidSpecError(
                f"target_angle_profile must be a StepProfile or SineProfile, "
                f"got {self.target_angle_profile!r}"
            )
        _nonneg("hand_stiffness", self.hand_stiffness)
        _nonneg("hand_damping", self.hand_damping)


OperatorSpec = Union[TorqueStep, TorqueSine, TorqueChirp, ImpedanceTracker]


def chirp_phase(t: float, spec: TorqueChirp) -> float:
    """Closed-form phase integral of the linear sweep."""
    if t <= spec.duration:
        return 2.0 * math.pi * (spec.f0 * t + (spec.f1 - spec.f0) * t * t / (2.0 * spec.duration))
    end = 2.0 * math.pi * (spec.f0 + spec.f1) * spec.duration / 2.0
    return end + 2.0 * math.pi * spec.f1 * (t - spec.duration)


def operator_torque(t: float, master: ShaftState, spec: OperatorSpec) -> float:
    """Torque [N*m] the simulated operator applies to the master shaft at time ``t``."""
    if t < 0.0:
        raise InvalidSpecError(f"t must be >= 0, got {t!r}")
    if isinstance(spec, TorqueStep):
        return spec.amplitude if t >= spec.onset else 0.0
    if isinstance(spec, TorqueSine):
        return spec.amplitude * math.sin(2.0 * math.pi * spec.frequency * t + spec.phase)
    if isinstance(spec, TorqueChirp):
        return spec.amplitude * math.sin(chirp_phase(t, spec))
    if isinstance(spec, ImpedanceTracker):
        error = spec.target_angle_profile(t) - master.angle
        return spec.hand_stiffness * error - spec.hand_damping * master.velocity
    raise InvalidSpecError(f"unknown operator spec: {spec!r}")
