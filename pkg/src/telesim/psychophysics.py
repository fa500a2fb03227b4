"""Psychophysical procedures run against simulated observers.

Two paradigms are provided: the method of constant stimuli and transformed
up/down staircases. Observers answer "is the comparison greater than the
reference?". The simplest observer draws its answer from a cumulative
Gaussian psychometric function; :class:`TeleoperatedObserver` first passes
both stimuli through the simulated teleoperator and judges the stiffness it
identifies on the operator side.

Randomness comes from ``numpy.random.Generator`` streams derived from one
seed, so a session replays bit-identically.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, ndtr, ndtri
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_consistent_length, check_is_fitted, column_or_1d

from .engine import SimConfig, run_simulation
from .environments import SpringDamperEnv, TorsionSpring
from .exceptions import DegenerateFitError, InsufficientReversalsError, InvalidSpecError
from .sysid import fit_second_order
from .transmissions import TransmissionSpec

__all__ = [
    "PsychometricFunction",
    "StaircaseState",
    "TrialRecord",
    "ResponseStream",
    "simulated_observer",
    "PsychometricObserver",
    "TeleoperatedObserver",
    "run_constant_stimuli",
    "staircase_update",
    "staircase_threshold",
    "run_staircase",
    "PsychometricFitter",
    "fit_psychometric",
    "stiffness_discrimination_session",
    "records_to_csv",
    "SIGMA_MIN",
]

SIGMA_MIN = 1e-6


@dataclass(frozen=True)
class PsychometricFunction:
    """Cumulative Gaussian with symmetric lapses.

    ``P(greater | x) = lapse + (1 - 2*lapse) * Phi((x - threshold_mu) / slope_sigma)``
    where ``x`` is comparison minus reference.
    """

    threshold_mu: float = 0.0
    slope_sigma: float = 1.0
    lapse_rate: float = 0.02

    def __post_init__(self):
        if not math.isfinite(self.threshold_mu):
            raise InvalidSpecError("threshold_mu must be finite")
        if not (math.isfinite(self.slope_sigma) and self.slope_sigma > 0.0):
            raise InvalidSpecError(f"slope_sigma must be > 0, got {self.slope_sigma!r}")
        if not (0.0 <= self.lapse_rate < 0.5):
            raise InvalidSpecError(f"lapse_rate must be in [0, 0.5), got {self.lapse_rate!r}")

    def probability(self, difference):
        z = (np.asarray(difference, dtype=float) - self.threshold_mu) / self.slope_sigma
        return self.lapse_rate + (1.0 - 2.0 * self.lapse_rate) * ndtr(z)

    def level_at(self, p: float) -> float:
        """Stimulus difference at which ``P(greater) == p``."""
        inner = (p - self.lapse_rate) / (1.0 - 2.0 * self.lapse_rate)
        if not 0.0 < inner < 1.0:
            raise ValueError(f"probability {p} is outside the function's range")
        return self.threshold_mu + self.slope_sigma * float(ndtri(inner))

    @property
    def jnd(self) -> float:
        return self.slope_sigma * float(ndtri(0.75))


class ResponseStream:
    """Uniform draws for observer decisions, with a running draw counter."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        return float(self._rng.random())


def simulated_observer(reference, comparison, pf: PsychometricFunction, rng: ResponseStream) -> bool:
    """True when the observer answers "comparison greater"."""
    p = float(pf.probability(comparison - reference))
    return rng.uniform() < p


@dataclass(frozen=True)
class PsychometricObserver:
    pf: PsychometricFunction

    def __call__(self, reference, comparison, rng):
        return simulated_observer(reference, comparison, self.pf, rng)


@lru_cache(maxsize=256)
def _perceived_stiffness(template: SimConfig, stiffness: float) -> float:
    env = template.environment
    if not isinstance(env, (TorsionSpring, SpringDamperEnv)):
        raise InvalidSpecError("stiffness discrimination needs a spring environment in the template")
    config = replace(template, environment=replace(env, stiffness=float(stiffness)))
    log = run_simulation(config)
    model, _ = fit_second_order(log.sensed_master_torque, log.master_angle, config.dt)
    return model.stiffness


@dataclass(frozen=True)
class TeleoperatedObserver:
    """Judges environment stiffness as felt through a transmission.

    Each stimulus (an environment stiffness) is rendered in an engine run
    driven by the template's probing operator; the stiffness identified from
    the operator side, ``1 / gain``, is what the psychometric function sees.
    Runs are cached per ``(template, stiffness)``.
    """

    template: SimConfig
    pf: PsychometricFunction
    transmission: Optional[TransmissionSpec] = None

    def __post_init__(self):
        if self.transmission is not None:
            object.__setattr__(self, "template", replace(self.template, transmission=self.transmission))

    def perceived(self, stiffness) -> float:
        return _perceived_stiffness(self.template, float(stiffness))

    def __call__(self, reference, comparison, rng):
        return simulated_observer(self.perceived(reference), self.perceived(comparison), self.pf, rng)


Observer = Callable[[float, float, ResponseStream], bool]


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    reference: float
    comparison: float
    response_greater: bool
    correct: bool
    rng_draw: int


def _correct(reference, comparison, response_greater):
    # ties count as "not greater"
    return response_greater == (comparison > reference)


def _trial(index, reference, comparison, observer, rng) -> TrialRecord:
    draw = rng.draws
    response = bool(observer(reference, comparison, rng))
    return TrialRecord(index, float(reference), float(comparison), response,
                       _correct(reference, comparison, response), draw)


def _streams(seed):
    order_seq, response_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(order_seq), ResponseStream(response_seq)


def run_constant_stimuli(levels: Sequence[float], trials_per_level: int, reference: float,
                         observer, seed: int) -> list[TrialRecord]:
    """Present every comparison level ``trials_per_level`` times in shuffled order.

    ``observer`` is a :class:`PsychometricFunction` or any callable
    ``(reference, comparison, rng) -> bool``.
    """
    levels = [float(v) for v in levels]
    if len(set(levels)) < 2:
        raise InvalidSpecError("constant stimuli need at least two distinct levels")
    if int(trials_per_level) != trials_per_level or trials_per_level < 1:
        raise InvalidSpecError("trials_per_level must be an integer >= 1")
    if isinstance(observer, PsychometricFunction):
        observer = PsychometricObserver(observer)
    order_rng, rng = _streams(seed)
    schedule = np.repeat(np.asarray(levels), int(trials_per_level))
    order_rng.shuffle(schedule)
    return [_trial(i, reference, c, observer, rng) for i, c in enumerate(schedule.tolist())]


@dataclass(frozen=True)
class StaircaseState:
    """Transformed up/down staircase.

    ``down_count`` consecutive correct answers lower the level by
    ``step_size``; ``up_count`` consecutive errors raise it. ``direction`` is
    the sign of the last move (0 before the first).
    """

    current_level: float
    step_size: float
    up_count: int = 1
    down_count: int = 2
    consecutive_correct: int = 0
    consecutive_incorrect: int = 0
    reversal_levels: tuple = ()
    trial_count: int = 0
    reversal_target: int = 12
    floor: Optional[float] = None
    max_trials: int = 1000
    direction: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0.0):
            raise InvalidSpecError(f"step_size must be > 0, got {self.step_size!r}")
        if self.up_count < 1 or self.down_count < 1:
            raise InvalidSpecError("up_count and down_count must be >= 1")
        if self.reversal_target < 1 or self.max_trials < 1:
            raise InvalidSpecError("reversal_target and max_trials must be >= 1")
        object.__setattr__(self, "reversal_levels", tuple(self.reversal_levels))

    @property
    def terminated(self) -> bool:
        return len(self.reversal_levels) >= self.reversal_target or self.trial_count >= self.max_trials


def staircase_update(state: StaircaseState, response_correct: bool) -> StaircaseState:
    """Apply one trial outcome to the staircase."""
    correct_run = state.consecutive_correct + 1 if response_correct else 0
    wrong_run = 0 if response_correct else state.consecutive_incorrect + 1
    move = 0
    if correct_run >= state.down_count:
        move, correct_run = -1, 0
    elif wrong_run >= state.up_count:
        move, wrong_run = 1, 0

    level = state.current_level
    reversals = state.reversal_levels
    direction = state.direction
    if move:
        if direction and move != direction:
            reversals = reversals + (level,)
        direction = move
        level = level + move * state.step_size
        if state.floor is not None:
            level = max(level, state.floor)
    return replace(
        state,
        current_level=level,
        consecutive_correct=correct_run,
        consecutive_incorrect=wrong_run,
        reversal_levels=reversals,
        trial_count=state.trial_count + 1,
        direction=direction,
    )


def staircase_threshold(state: StaircaseState, discard: int = 2) -> float:
    """Mean reversal level, skipping the first ``discard`` reversals."""
    if len(state.reversal_levels) < 4:
        raise InsufficientReversalsError(
            f"need at least 4 reversals, got {len(state.reversal_levels)}"
        )
    return float(np.mean(state.reversal_levels[discard:]))


def run_staircase(initial: StaircaseState, reference: float, observer, seed: int):
    """Run a staircase to termination.

    The staircase level is the comparison-minus-reference difference.
    Returns ``(records, final_state)``.
    """
    if isinstance(observer, PsychometricFunction):
        observer = PsychometricObserver(observer)
    _, rng = _streams(seed)
    state = initial
    records = []
    while not state.terminated:
        rec = _trial(state.trial_count, reference, reference + state.current_level, observer, rng)
        records.append(rec)
        state = staircase_update(state, rec.correct)
    return records, state


def _neg_log_likelihood(mu, sigma, x, k, n, lapse):
    z = (x - mu) / sigma
    if lapse == 0.0:
        log_p, log_q = log_ndtr(z), log_ndtr(-z)
    else:
        p = lapse + (1.0 - 2.0 * lapse) * ndtr(z)
        log_p, log_q = np.log(p), np.log1p(-p)
    return -float(np.sum(k * log_p + (n - k) * log_q))


def _golden(f, lo, hi, tol):
    res = optimize.minimize_scalar(f, bracket=(lo, hi), method="golden", tol=tol)
    return float(res.x), float(res.fun)


class PsychometricFitter(BaseEstimator):
    """Maximum-likelihood cumulative-Gaussian fit with a fixed lapse rate.

    ``X`` holds stimulus differences (comparison minus reference) and ``y``
    the binary "greater" responses. The fit alternates golden-section
    searches over ``mu`` and ``log(sigma)`` until the negative
    log-likelihood changes by less than ``tol``.
    """

    def __init__(self, lapse_rate=0.02, tol=1e-9, max_sweeps=500):
        self.lapse_rate = lapse_rate
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, X, y):
        x = column_or_1d(np.asarray(X, dtype=float), warn=False)
        r = column_or_1d(np.asarray(y, dtype=float), warn=False)
        check_consistent_length(x, r)
        if not np.all((r == 0) | (r == 1)):
            raise ValueError("responses must be 0/1")
        levels, inverse = np.unique(x, return_inverse=True)
        if levels.size < 2:
            raise InvalidSpecError("need at least two distinct stimulus levels")
        if r.min() == r.max():
            raise InvalidSpecError("need both response types present")
        n = np.bincount(inverse).astype(float)
        k = np.bincount(inverse, weights=r)
        self.levels_, self.n_trials_, self.n_greater_ = levels, n, k

        lapse = float(self.lapse_rate)
        span = float(levels[-1] - levels[0])
        separated = x[r == 0].max() < x[r == 1].min()

        def nll(mu, log_sigma):
            return _neg_log_likelihood(mu, max(math.exp(log_sigma), SIGMA_MIN), levels, k, n, lapse)

        mu = float(levels[np.argmin(np.abs(k / n - 0.5))])
        log_sigma = math.log(span / 4.0)
        best = nll(mu, log_sigma)
        sweeps = 0
        for sweeps in range(1, int(self.max_sweeps) + 1):
            mu, _ = _golden(lambda m: nll(m, log_sigma), mu - span / 8, mu + span / 8, 1e-12)
            log_sigma, value = _golden(lambda s: nll(mu, s), log_sigma - 0.5, log_sigma + 0.5, 1e-12)
            if log_sigma < math.log(SIGMA_MIN):
                log_sigma = math.log(SIGMA_MIN)
                value = nll(mu, log_sigma)
            converged = best - value < self.tol
            best = min(best, value)
            if converged:
                break
        self.n_sweeps_ = sweeps
        self.threshold_mu_ = mu
        self.slope_sigma_ = max(math.exp(log_sigma), SIGMA_MIN)
        self.neg_log_likelihood_ = best
        if separated:
            self.slope_sigma_ = SIGMA_MIN
            self.threshold_mu_ = 0.5 * (x[r == 0].max() + x[r == 1].min())
            raise DegenerateFitError(
                "responses are perfectly separated by stimulus level; slope clamped to "
                f"{SIGMA_MIN}", fit=self.function_,
            )
        return self

    @property
    def function_(self) -> PsychometricFunction:
        check_is_fitted(self, "slope_sigma_")
        return PsychometricFunction(self.threshold_mu_, self.slope_sigma_, self.lapse_rate)

    @property
    def jnd_(self) -> float:
        return self.function_.jnd

    def predict_proba(self, X):
        return self.function_.probability(X)

    def predict(self, X):
        return self.predict_proba(X) >= 0.5


def fit_psychometric(records: Sequence[TrialRecord], lapse_rate: float = 0.02) -> PsychometricFunction:
    """ML fit of ``(mu, sigma)`` to trial records in comparison-minus-reference units."""
    x = np.array([r.comparison - r.reference for r in records], dtype=float)
    y = np.array([r.response_greater for r in records], dtype=float)
    return PsychometricFitter(lapse_rate=lapse_rate).fit(x, y).function_


def stiffness_discrimination_session(template: SimConfig, transmission: TransmissionSpec,
                                     reference_k: float, comparison_k: float,
                                     pf: PsychometricFunction, seed: int,
                                     trial: int = 0) -> TrialRecord:
    """One stiffness-discrimination trial felt through ``transmission``."""
    observer = TeleoperatedObserver(template, pf, transmission)
    _, rng = _streams(seed)
    return _trial(trial, reference_k, comparison_k, observer, rng)


CSV_FIELDS = ("trial", "reference", "comparison", "response_greater", "correct", "rng_draw")


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([r.trial, repr(r.reference), repr(r.comparison),
                         int(r.response_greater), int(r.correct), r.rng_draw])
    return buf.getvalue()
