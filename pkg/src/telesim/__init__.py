"""Simulation, identification and psychophysics for a 1-DoF teleoperator testbed."""

__version__ = "0.1.0"

from .engine import SensorSpec, SimConfig, TimeSeriesLog, encoder_quantize, run_simulation  # noqa: E402
from .environments import (  # noqa: E402
    FreeSpace,
    SpringDamperEnv,
    TorsionSpring,
    environment_torque,
    mnm_per_deg_to_nm_per_rad,
)
from .operators import ImpedanceTracker, TorqueChirp, TorqueSine, TorqueStep, operator_torque  # noqa: E402
from .sysid import (  # noqa: E402
    FitReport,
    SecondOrderARX,
    SecondOrderModel,
    bode,
    final_prediction_error,
    fit_second_order,
    percent_fit,
    step_response,
)
from .transmissions import (  # noqa: E402
    Electromechanical,
    Rigid,
    ShaftState,
    SpringDamper,
    coupling_torques,
    rigid_constraint,
)
