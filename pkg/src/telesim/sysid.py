"""Second-order identification of torque-to-angle admittances.

The fit is a discrete ARX model

    y[t] + a1*y[t-1] + a2*y[t-2] = b1*u[t-1] + b2*u[t-2] + e[t]

solved by ordinary least squares on mean-removed records, then mapped to

    G(s) = gain * wn**2 / (s**2 + 2*zeta*wn*s + wn**2).

The default mapping inverts the semi-implicit Euler discretization the
engine uses, i.e. it reads the denominator as
``z**2 - (2 - 2*zeta*wn*dt - wn**2*dt**2)*z + (1 - 2*zeta*wn*dt)``.
Tustin and matched pole mappings are available for data that did not come
from the engine.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d, check_consistent_length

from .exceptions import (
    ConstantSignalError,
    DegenerateSampleError,
    InvalidSpecError,
    RankDeficientError,
    UnstableFitError,
)

__all__ = [
    "SecondOrderModel",
    "FitReport",
    "SecondOrderARX",
    "fit_second_order",
    "percent_fit",
    "final_prediction_error",
    "step_response",
    "bode",
    "write_key_values",
    "read_key_values",
]

N_PARAMS = 4
MIN_SAMPLES = 50


@dataclass(frozen=True)
class SecondOrderModel:
    """``gain * wn**2 / (s**2 + 2*zeta*wn*s + wn**2)``; gain in rad/(N*m)."""

    gain: float
    natural_frequency: float
    damping_ratio: float

    def __post_init__(self):
        if not math.isfinite(self.gain):
            raise InvalidSpecError(f"gain must be finite, got {self.gain!r}")
        if not (math.isfinite(self.natural_frequency) and self.natural_frequency > 0.0):
            raise InvalidSpecError(f"natural_frequency must be > 0, got {self.natural_frequency!r}")
        if not (math.isfinite(self.damping_ratio) and self.damping_ratio >= 0.0):
            raise InvalidSpecError(f"damping_ratio must be >= 0, got {self.damping_ratio!r}")

    @property
    def stiffness(self) -> float:
        """Static stiffness seen through the model, ``1 / gain`` [N*m/rad]."""
        return 1.0 / self.gain if self.gain != 0.0 else math.inf

    def tf(self):
        """Numerator and denominator polynomial coefficients in ``s``."""
        wn, z = self.natural_frequency, self.damping_ratio
        return np.array([self.gain * wn * wn]), np.array([1.0, 2.0 * z * wn, wn * wn])


@dataclass(frozen=True)
class FitReport:
    percent_fit: float
    fpe: float
    mse: float
    n_samples: int
    n_params: int


def percent_fit(measured, predicted) -> float:
    """NRMSE fit, ``100 * (1 - |y - yhat| / |y - mean(y)|)``."""
    y = np.asarray(measured, dtype=float).ravel()
    yhat = np.asarray(predicted, dtype=float).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise ValueError("measured and predicted must have the same nonzero length")
    denom = np.linalg.norm(y - y.mean())
    if denom == 0.0:
        raise ConstantSignalError("measured signal is constant; percent fit is undefined")
    return float(100.0 * (1.0 - np.linalg.norm(y - yhat) / denom))


def final_prediction_error(mse: float, n_params: int, n_samples: int) -> float:
    """Akaike's final prediction error."""
    if n_samples <= n_params:
        raise DegenerateSampleError(
            f"need more samples than parameters (n_samples={n_samples}, n_params={n_params})"
        )
    if n_params < 0 or mse < 0:
        raise ValueError("mse and n_params must be non-negative")
    ratio = n_params / n_samples
    return mse * (1.0 + ratio) / (1.0 - ratio)


def _time_grid(duration, dt):
    if not (dt > 0 and duration >= dt):
        raise ValueError("need duration >= dt > 0")
    n = int(math.floor(duration / dt + 1e-9)) + 1
    return np.arange(n) * dt


def step_response(model: SecondOrderModel, duration: float, dt: float):
    """Closed-form unit-step response sampled every ``dt``.

    Returns ``(t, y)``.
    """
    t = _time_grid(duration, dt)
    k, wn, z = model.gain, model.natural_frequency, model.damping_ratio
    if z < 1.0:
        wd = wn * math.sqrt(1.0 - z * z)
        envelope = np.exp(-z * wn * t)
        y = 1.0 - envelope * (np.cos(wd * t) + z / math.sqrt(1.0 - z * z) * np.sin(wd * t))
    elif z == 1.0:
        y = 1.0 - np.exp(-wn * t) * (1.0 + wn * t)
    else:
        root = math.sqrt(z * z - 1.0)
        s1, s2 = -wn * (z - root), -wn * (z + root)
        y = 1.0 + (s2 * np.exp(s1 * t) - s1 * np.exp(s2 * t)) / (s1 - s2)
    return t, k * y


def bode(model: SecondOrderModel, freqs):
    """Magnitude [dB] and phase [deg] at angular frequencies ``freqs`` [rad/s].

    Phase runs from 0 toward -180 deg; a negative gain shifts it by -180.
    """
    w = np.asarray(freqs, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError("all frequencies must be > 0")
    k, wn, z = model.gain, model.natural_frequency, model.damping_ratio
    real = wn * wn - w * w
    imag = 2.0 * z * wn * w
    mag = np.abs(k) * wn * wn / np.hypot(real, imag)
    phase = -np.degrees(np.arctan2(imag, real))
    if k < 0:
        phase = phase - 180.0
    return 20.0 * np.log10(mag), phase


def _continuous_from_poles(s1, s2):
    """(wn, zeta) from a pair of continuous-time poles."""
    if abs(s1.imag) > 0.0 or abs(s2.imag) > 0.0:
        wn = abs(s1)
        return wn, -s1.real / wn
    p1, p2 = -s1.real, -s2.real
    wn = math.sqrt(p1 * p2)
    return wn, (p1 + p2) / (2.0 * wn)


class SecondOrderARX(BaseEstimator):
    """Least-squares ARX(2, 2) identification of a second-order admittance.

    Parameters
    ----------
    dt : float
        Sample period [s].
    detrend : bool
        Remove the mean of input and output before fitting. Meant for
        records with a sensor offset; on records that start at rest it
        biases the fit, because the means of a transient do not satisfy the
        static gain relation.
    conversion : {"euler", "tustin", "zoh"}
        Discrete-to-continuous mapping. ``"euler"`` inverts the engine's
        semi-implicit Euler step exactly; ``"tustin"`` inverts the bilinear
        transform; ``"zoh"`` maps poles with ``s = log(z) / dt``.
    prediction : {"one_step", "simulation"}
        Which prediction the fit report is computed on.
    excitation_alpha : float or None
        Significance level of the F-test that the input terms explain any
        output variance. A fit whose input is statistically irrelevant is
        rejected as rank deficient. ``None`` disables the test.

    Attributes
    ----------
    coef_ : ndarray of shape (4,)
        ``[a1, a2, b1, b2]``.
    model_ : SecondOrderModel
    report_ : FitReport
    poles_ : ndarray of shape (2,)
        Discrete poles.
    """

    def __init__(self, dt=1e-3, detrend=False, conversion="euler", prediction="one_step",
                 excitation_alpha=1e-6):
        self.dt = dt
        self.detrend = detrend
        self.conversion = conversion
        self.prediction = prediction
        self.excitation_alpha = excitation_alpha

    def _validate(self, X, y):
        u = column_or_1d(np.asarray(X, dtype=float), warn=False)
        if y is None:
            return u, None
        out = column_or_1d(np.asarray(y, dtype=float), warn=False)
        check_consistent_length(u, out)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(out))):
            raise ValueError("input and output must be finite")
        return u, out

    def _centre(self, u, y):
        if not self.detrend:
            return u, y
        return u - self.input_mean_, (None if y is None else y - self.output_mean_)

    @staticmethod
    def _regressors(u, y):
        return np.column_stack([-y[1:-1], -y[:-2], u[1:-1], u[:-2]])

    def fit(self, X, y):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if self.conversion not in ("euler", "tustin", "zoh"):
            raise ValueError(f"unknown conversion {self.conversion!r}")
        if self.prediction not in ("one_step", "simulation"):
            raise ValueError(f"unknown prediction {self.prediction!r}")
        u, out = self._validate(X, y)
        if u.size < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {u.size}")
        if np.ptp(u) == 0.0:
            raise RankDeficientError("input is constant; the system is not excited")

        self.input_mean_ = float(u.mean()) if self.detrend else 0.0
        self.output_mean_ = float(out.mean()) if self.detrend else 0.0
        uc, yc = self._centre(u, out)
        phi = self._regressors(uc, yc)
        target = yc[2:]
        if np.linalg.matrix_rank(phi) < N_PARAMS:
            raise RankDeficientError("regressor matrix is rank deficient")
        theta, *_ = np.linalg.lstsq(phi, target, rcond=None)
        self._check_excitation(phi, target, theta)

        a1, a2, b1, b2 = (float(v) for v in theta)
        self.coef_ = theta
        self.poles_ = np.roots([1.0, a1, a2])
        if np.max(np.abs(self.poles_)) >= 1.0:
            raise UnstableFitError(
                f"identified discrete poles {self.poles_} lie on or outside the unit circle"
            )
        self.model_ = self._to_continuous(a1, a2, b1, b2)

        if self.prediction == "one_step":
            predicted = phi @ theta
        else:
            predicted = self._simulate(uc, yc[:2])[2:]
        residual = target - predicted
        mse = float(np.mean(residual**2))
        n = int(target.size)
        self.report_ = FitReport(
            percent_fit=percent_fit(target, predicted),
            fpe=final_prediction_error(mse, N_PARAMS, n),
            mse=mse,
            n_samples=n,
            n_params=N_PARAMS,
        )
        return self

    def _check_excitation(self, phi, target, theta):
        if not self.excitation_alpha:
            return
        n = target.size
        rss_full = float(np.sum((target - phi @ theta) ** 2))
        ar_only, *_ = np.linalg.lstsq(phi[:, :2], target, rcond=None)
        rss_ar = float(np.sum((target - phi[:, :2] @ ar_only) ** 2))
        dof = n - N_PARAMS
        if rss_full == 0.0:
            return
        f_stat = ((rss_ar - rss_full) / 2.0) / (rss_full / dof)
        p_value = stats.f.sf(f_stat, 2, dof)
        if p_value > self.excitation_alpha:
            raise RankDeficientError(
                f"input does not explain the output (F={f_stat:.3g}, p={p_value:.3g}); "
                "the system is not excited"
            )

    def _to_continuous(self, a1, a2, b1, b2):
        dt = self.dt
        gain = (b1 + b2) / (1.0 + a1 + a2)
        if self.conversion == "euler":
            wn = math.sqrt((1.0 + a1 + a2) / (dt * dt))
            zeta = (1.0 - a2) / dt / (2.0 * wn)
        else:
            z1, z2 = (complex(p) for p in self.poles_)
            if self.conversion == "tustin":
                s1, s2 = (2.0 / dt * (z - 1.0) / (z + 1.0) for z in (z1, z2))
            else:
                if z1.imag == 0.0 and z1.real <= 0.0 or z2.imag == 0.0 and z2.real <= 0.0:
                    raise UnstableFitError("a non-positive real pole has no matched continuous pole")
                s1, s2 = (np.log(z) / dt for z in (z1, z2))
            wn, zeta = _continuous_from_poles(complex(s1), complex(s2))
        return SecondOrderModel(gain=gain, natural_frequency=wn, damping_ratio=zeta)

    def _simulate(self, uc, y_init):
        a1, a2, b1, b2 = self.coef_
        b = np.array([0.0, b1, b2])
        a = np.array([1.0, a1, a2])
        y = np.empty(uc.size)
        y[:2] = y_init
        if uc.size > 2:
            zi = signal.lfiltic(b, a, y=[y_init[1], y_init[0]], x=[uc[1], uc[0]])
            y[2:], _ = signal.lfilter(b, a, uc[2:], zi=zi)
        return y

    def predict(self, X, y=None):
        """Predicted output.

        With ``y`` the one-step-ahead prediction is returned (the first two
        samples are copied from ``y``); without it the model free-runs from
        rest.
        """
        check_is_fitted(self, "coef_")
        u, out = self._validate(X, y)
        uc, yc = self._centre(u, out)
        if out is None:
            pred = self._simulate(uc, np.zeros(2))
        else:
            pred = np.empty_like(yc)
            pred[:2] = yc[:2]
            pred[2:] = self._regressors(uc, yc) @ self.coef_
        return pred + self.output_mean_

    def score(self, X, y):
        """Percent fit of this model on new data, using ``self.prediction``."""
        check_is_fitted(self, "coef_")
        u, out = self._validate(X, y)
        pred = self.predict(u, out if self.prediction == "one_step" else None)
        return percent_fit(out[2:], pred[2:])


def fit_second_order(input, output, dt, **kwargs):
    """Fit a second-order model; returns ``(SecondOrderModel, FitReport)``."""
    est = SecondOrderARX(dt=dt, **kwargs).fit(input, output)
    return est.model_, est.report_


def write_key_values(path, values: dict):
    """Write ``key = value`` lines; floats use round-trip ``repr``."""
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_key_values(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def model_to_dict(model: SecondOrderModel, report: FitReport | None = None, **extra) -> dict:
    values = dict(extra)
    values.update(asdict(model))
    if report is not None:
        values.update(asdict(report))
    return values


def model_from_file(path) -> tuple[str | None, SecondOrderModel]:
    """Read a model file written by the CLI; returns ``(system label, model)``."""
    values = read_key_values(path)
    try:
        model = SecondOrderModel(
            gain=float(values["gain"]),
            natural_frequency=float(values["natural_frequency"]),
            damping_ratio=float(values["damping_ratio"]),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc.args[0]!r}") from None
    return values.get("system"), model


# Input/output signals of the two identified systems. The environment input
# is the torque the teleoperator applies *to* the environment, the reaction
# of the logged torque on the slave, so both admittances have positive gain.
SYSTEMS = {
    "participant": ("sensed_master_torque", 1.0, "master_angle"),
    "environment": ("sensed_environment_torque", -1.0, "slave_angle"),
}


def identify_log(log, system: str, **kwargs):
    """Fit the named system (``"participant"`` or ``"environment"``) from a log."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {sorted(SYSTEMS)}")
    torque, sign, angle = SYSTEMS[system]
    return fit_second_order(sign * log.column(torque), log.column(angle), log.dt, **kwargs)
