"""YAML configuration files: parsing, validation and round-trip serialization.

Every section maps onto one dataclass. Unknown keys are errors, and every
error names the offending field and, where the YAML parser can tell, its
line. ``dump_*`` functions produce the fully resolved form written to run
manifests; loading that form again yields an equal object.

Simulation schema (all keys optional except ``duration``)::

    duration: 10.0            # s
    dt: 0.001                 # s
    master_inertia: 2.0e-4    # kg*m^2
    slave_inertia: 2.0e-4     # kg*m^2
    rng_seed: 0
    render_delay: false
    initial_master: {angle: 0.0, velocity: 0.0}
    initial_slave: {angle: 0.0, velocity: 0.0}
    transmission: {type: rigid | spring_damper | electromechanical, ...}
    environment: {type: free_space | torsion_spring | spring_damper, ...}
    operator: {type: step | sine | chirp | impedance_tracker, ...}
    sensors: {torque_saturation, torque_noise_std, encoder_counts_per_rev,
              angle_from_quantized}

Spring stiffness may be given as ``stiffness`` [N*m/rad] or
``stiffness_mnm_per_deg``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from pathlib import Path

import yaml

from . import environments as envs
from . import operators as ops
from . import transmissions as tx
from .engine import SensorSpec, SimConfig
from .exceptions import ConfigError, TelesimError

__all__ = [
    "load_document",
    "parse_sim_config",
    "dump_sim_config",
    "Section",
]

TRANSMISSIONS = {"rigid": tx.Rigid, "spring_damper": tx.SpringDamper, "electromechanical": tx.Electromechanical}
ENVIRONMENTS = {"free_space": envs.FreeSpace, "torsion_spring": envs.TorsionSpring, "spring_damper": envs.SpringDamperEnv}
OPERATORS = {"step": ops.TorqueStep, "sine": ops.TorqueSine, "chirp": ops.TorqueChirp,
             "impedance_tracker": ops.ImpedanceTracker}
PROFILES = {"step": ops.StepProfile, "sine": ops.SineProfile}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _line_index(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = path + (str(key_node.value),)
            out[child] = key_node.start_mark.line + 1
            _line_index(value_node, child, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out[path + (str(i),)] = item.start_mark.line + 1
            _line_index(item, path + (str(i),), out)
    return out


class Section:
    """A mapping from a config file plus where it came from, for diagnostics."""

    def __init__(self, data, path=(), lines=None):
        if not isinstance(data, dict):
            raise ConfigError("expected a mapping", field=".".join(path) or None,
                              line=(lines or {}).get(path))
        self.data = data
        self.path = path
        self.lines = lines or {}
        self._used = set()

    def _where(self, key=None):
        path = self.path + ((key,) if key is not None else ())
        return ".".join(path) or None, self.lines.get(path)

    def error(self, message, key=None):
        name, line = self._where(key)
        return ConfigError(message, field=name, line=line)

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None):
        self._used.add(key)
        return self.data.get(key, default)

    def required(self, key):
        if key not in self.data:
            raise self.error("missing required field", key)
        return self.raw(key)

    def number(self, key, default=None, required=False):
        value = self.required(key) if required else self.raw(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", key)
        value = float(value)
        if not math.isfinite(value):
            raise self.error(f"expected a finite number, got {value!r}", key)
        return value

    def integer(self, key, default=None, required=False):
        value = self.required(key) if required else self.raw(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(f"expected an integer, got {value!r}", key)
        return value

    def flag(self, key, default=None):
        value = self.raw(key, default)
        if not isinstance(value, bool):
            raise self.error(f"expected true or false, got {value!r}", key)
        return value

    def text(self, key, default=None, required=False):
        value = self.required(key) if required else self.raw(key, default)
        if not isinstance(value, str):
            raise self.error(f"expected a string, got {value!r}", key)
        return value

    def child(self, key, default=None):
        value = self.raw(key, default if default is not None else {})
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise self.error("expected a mapping", key)
        return Section(value, self.path + (key,), self.lines)

    def number_list(self, key, required=False):
        value = self.required(key) if required else self.raw(key, [])
        if not isinstance(value, list):
            raise self.error("expected a list of numbers", key)
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                name, _ = self._where(key)
                raise ConfigError(f"expected a number, got {v!r}", field=f"{name}[{i}]",
                                  line=self.lines.get(self.path + (key, str(i))))
            out.append(float(v))
        return out

    def finish(self):
        """Reject keys that were never read."""
        for key in self.data:
            if key not in self._used:
                raise self.error("unknown key", key)

    def build(self, cls, **kwargs):
        try:
            return cls(**kwargs)
        except TelesimError as exc:
            raise self.error(str(exc)) from None


def load_document(path):
    """Parse a YAML (or JSON) file into a root :class:`Section`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        node = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line=line) from None
    if data is None:
        data = {}
    lines = _line_index(node) if node is not None else {}
    return Section(data, (), lines)


def _variant(section, table, what):
    kind = section.text("type", required=True)
    if kind not in table:
        raise section.error(f"unknown {what} type {kind!r}; expected one of {sorted(table)}", "type")
    return kind, table[kind]


def _stiffness(section, default):
    if section.has("stiffness") and section.has("stiffness_mnm_per_deg"):
        raise section.error("give either stiffness or stiffness_mnm_per_deg, not both", "stiffness")
    if section.has("stiffness_mnm_per_deg"):
        return envs.mnm_per_deg_to_nm_per_rad(section.number("stiffness_mnm_per_deg"))
    return section.number("stiffness", default)


def _fields_from(section, cls, skip=()):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            kwargs[f.name] = section.flag(f.name, default)
        elif isinstance(default, int) and not isinstance(default, bool):
            kwargs[f.name] = section.integer(f.name, default)
        else:
            kwargs[f.name] = section.number(f.name, default)
    return kwargs


def parse_transmission(section):
    _, cls = _variant(section, TRANSMISSIONS, "transmission")
    spec = section.build(cls, **_fields_from(section, cls))
    section.finish()
    return spec


def parse_environment(section):
    kind, cls = _variant(section, ENVIRONMENTS, "environment")
    if cls is envs.FreeSpace:
        spec = envs.FreeSpace()
    else:
        kwargs = _fields_from(section, cls, skip=("stiffness",))
        kwargs["stiffness"] = _stiffness(section, envs.DEFAULT_SPRING_STIFFNESS)
        spec = section.build(cls, **kwargs)
    section.finish()
    return spec


def parse_operator(section):
    _, cls = _variant(section, OPERATORS, "operator")
    if cls is ops.ImpedanceTracker:
        target = section.child("target_angle_profile", {"type": "step"})
        _, pcls = _variant(target, PROFILES, "target_angle_profile")
        profile = target.build(pcls, **_fields_from(target, pcls))
        target.finish()
        kwargs = _fields_from(section, cls, skip=("target_angle_profile",))
        spec = section.build(cls, target_angle_profile=profile, **kwargs)
    else:
        spec = section.build(cls, **_fields_from(section, cls))
    section.finish()
    return spec


def _shaft(section):
    state = tx.ShaftState(section.number("angle", 0.0), section.number("velocity", 0.0))
    section.finish()
    return state


def parse_sim_config(section: Section, seed_override=None) -> SimConfig:
    """Build a :class:`SimConfig`; ``duration`` is the only required key."""
    sensors_sec = section.child("sensors")
    sensors = sensors_sec.build(SensorSpec, **_fields_from(sensors_sec, SensorSpec))
    sensors_sec.finish()
    kwargs = dict(
        duration=section.number("duration", required=True),
        dt=section.number("dt", 1e-3),
        master_inertia=section.number("master_inertia", 2e-4),
        slave_inertia=section.number("slave_inertia", 2e-4),
        rng_seed=section.integer("rng_seed", 0),
        render_delay=section.flag("render_delay", False),
        initial_master=_shaft(section.child("initial_master")),
        initial_slave=_shaft(section.child("initial_slave")),
        transmission=parse_transmission(section.child("transmission", {"type": "rigid"})),
        environment=parse_environment(section.child("environment", {"type": "torsion_spring"})),
        operator=parse_operator(section.child("operator", {"type": "step"})),
        sensors=sensors,
    )
    if seed_override is not None:
        kwargs["rng_seed"] = int(seed_override)
    config = section.build(SimConfig, **kwargs)
    section.finish()
    return config


def _tagged(obj, table):
    for name, cls in table.items():
        if type(obj) is cls:
            out = {"type": name}
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                out[f.name] = _tagged(value, PROFILES) if f.name == "target_angle_profile" else value
            return out
    raise ConfigError(f"cannot serialize {obj!r}")


def dump_sim_config(config: SimConfig) -> dict:
    """Fully resolved, JSON-safe dict; :func:`parse_sim_config` reads it back."""
    return {
        "duration": config.duration,
        "dt": config.dt,
        "master_inertia": config.master_inertia,
        "slave_inertia": config.slave_inertia,
        "rng_seed": int(config.rng_seed),
        "render_delay": config.render_delay,
        "initial_master": config.initial_master._asdict(),
        "initial_slave": config.initial_slave._asdict(),
        "transmission": _tagged(config.transmission, TRANSMISSIONS),
        "environment": _tagged(config.environment, ENVIRONMENTS),
        "operator": _tagged(config.operator, OPERATORS),
        "sensors": dataclasses.asdict(config.sensors),
    }


def dumps_json(data) -> str:
    """Deterministic JSON (sorted keys, round-trip floats)."""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"
