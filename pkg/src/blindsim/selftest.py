"""Detector self-testing protocols and their decision rules.

Three strategies certify that a detector still sees the receiver's own
light emitter:

* SALT: inject low-rate extra photons over a test interval and require a
  statistically significant excess of clicks.
* FLAG_PULSE: fire one short few-photon pulse and require a click within
  a fixed response window.
* SELF_BLIND: blind the detector locally for the test interval; the
  onset must click (flag) and the rest of the interval must stay silent.
  Clicks during self-blinding betray injected fake states; a missing
  flag betrays external blinding, including the case where a recovery
  transient would otherwise be hidden by the local blinding light.

Verdicts are a pure function of the plan and the observable click
timestamps.  Ground-truth cause labels on clicks are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from .detector import ClickRecord
from .errors import ConfigError, ValidationError
from .stats import Histogram, binomial_tail, poisson_tail
from .units import to_ps, to_seconds


class Strategy(str, Enum):
    SALT = "SALT"
    FLAG_PULSE = "FLAG_PULSE"
    SELF_BLIND = "SELF_BLIND"


class Decision(str, Enum):
    NORMAL = "NORMAL"
    NEGATIVE_MANIPULATION = "NEGATIVE_MANIPULATION"
    POSITIVE_MANIPULATION = "POSITIVE_MANIPULATION"
    BOTH = "BOTH"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class SelfTestPlan:
    """One scheduled self-test.

    ``test_duration`` is the counting interval T for SALT and SELF_BLIND
    and the pulse width for FLAG_PULSE.  The ``null_*`` fields describe
    the expected behavior of an unmanipulated detector and feed p-values;
    they are set by calibration and default to the reference operating
    point.
    """

    strategy: Strategy
    test_start: float = 0.0
    test_duration: float = 200e-6
    salt_rate: float = 0.0  # salt photon arrival rate during the interval
    response_window: float = 60e-9
    count_threshold: int = 50
    flag_photon_number: int | None = 5
    flag_pulse_energy: float = 1.0e-17
    self_blind_power: float = 1.0e-9
    null_mean: float | None = None  # salt-test count mean under normal operation
    null_distribution: Histogram | None = None  # simulated salt-test null
    null_response_prob: float = 0.934  # flag response of a healthy detector
    alt_response_prob: float = 0.003  # flag response of a manipulated detector
    null_onset_prob: float = 0.976  # self-blind onset click probability
    null_in_blind_mean: float = 1e-3  # expected noise clicks while self-blinded

    def validate(self) -> None:
        if self.test_start < 0:
            raise ValidationError("test_start", "must be >= 0")
        if self.test_duration <= 0:
            raise ValidationError("test_duration", "must be > 0")
        if self.salt_rate < 0:
            raise ValidationError("salt_rate", "must be >= 0")
        if self.response_window <= 0:
            raise ValidationError("response_window", "must be > 0")
        if self.count_threshold < 0:
            raise ValidationError("count_threshold", "must be >= 0")
        if self.null_mean is not None and self.count_threshold >= self.null_mean:
            raise ValidationError(
                "count_threshold", "must sit below the calibrated normal mean"
            )
        if self.flag_pulse_energy <= 0:
            raise ValidationError("flag_pulse_energy", "must be > 0")
        if self.self_blind_power <= 0:
            raise ValidationError("self_blind_power", "must be > 0")


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    observed_count: int
    flag_seen: bool | None = None
    in_blind_clicks: int | None = None
    p_value: float | None = None


def _count_between(clicks: Sequence[ClickRecord], a_ps: int, b_ps: int) -> int:
    return sum(1 for c in clicks if a_ps <= c.time_ps < b_ps)


def schedule_tests(
    trial_duration: float,
    duty_cycle: float,
    strategy: Strategy,
    rng: np.random.Generator,
    template: SelfTestPlan | None = None,
) -> list[SelfTestPlan]:
    """Randomly placed, non-overlapping test intervals.

    The number of intervals is duty_cycle * trial_duration / T; starts
    are uniform conditioned on non-overlap (sorted uniform draws plus
    fixed offsets).  Timing is unpredictable without the seed.
    """
    if duty_cycle < 0 or duty_cycle >= 1:
        raise ValidationError("duty_cycle", "must lie in [0, 1)")
    if trial_duration < 0:
        raise ValidationError("trial_duration", "must be >= 0")
    tmpl = template if template is not None else SelfTestPlan(strategy=strategy)
    if tmpl.strategy != strategy:
        tmpl = replace(tmpl, strategy=strategy)
    dur_ps = to_ps(trial_duration)
    span = to_ps(tmpl.test_duration)
    # a flag pulse owns at least its response window so windows never overlap
    occupancy = max(span, to_ps(tmpl.response_window))
    n = int(round(duty_cycle * dur_ps / span)) if span > 0 else 0
    if n == 0:
        return []
    if n * occupancy > dur_ps:
        raise ValidationError("duty_cycle", "intervals do not fit the trial")
    slack = dur_ps - n * occupancy
    starts = np.sort(rng.integers(0, slack + 1, size=n))
    plans = []
    for i, s in enumerate(starts):
        start_ps = int(s) + i * occupancy
        plans.append(replace(tmpl, test_start=to_seconds(start_ps)))
    return plans


def evaluate_salt(plan: SelfTestPlan, clicks: Sequence[ClickRecord]) -> Verdict:
    """Count clicks in the test interval and compare with the threshold.

    A count at or above the threshold certifies normal operation; below
    it the excess salt light is missing, i.e. a negative manipulation.
    The p-value is the lower tail of the calibrated normal-operation
    count distribution at the observed count (empirical when available,
    else Poisson at the calibrated mean).
    """
    if plan.strategy != Strategy.SALT:
        raise ConfigError(f"evaluate_salt needs a SALT plan, got {plan.strategy}")
    a = to_ps(plan.test_start)
    b = a + to_ps(plan.test_duration)
    count = _count_between(clicks, a, b)
    if plan.salt_rate <= 0:
        return Verdict(Decision.INCONCLUSIVE, count)
    decision = (
        Decision.NORMAL
        if count >= plan.count_threshold
        else Decision.NEGATIVE_MANIPULATION
    )
    if plan.null_distribution is not None:
        p = plan.null_distribution.lower_tail(count)
    elif plan.null_mean is not None:
        p = poisson_tail(plan.null_mean, count, "lower")
    else:
        p = None
    return Verdict(decision, count, p_value=p)


def evaluate_flag_pulse(plan: SelfTestPlan, clicks: Sequence[ClickRecord]) -> Verdict:
    """Single flag pulse: any click inside the response window passes."""
    if plan.strategy != Strategy.FLAG_PULSE:
        raise ConfigError(
            f"evaluate_flag_pulse needs a FLAG_PULSE plan, got {plan.strategy}"
        )
    a = to_ps(plan.test_start)
    b = a + to_ps(plan.response_window)
    count = _count_between(clicks, a, b)
    seen = count > 0
    decision = Decision.NORMAL if seen else Decision.NEGATIVE_MANIPULATION
    p = 1.0 if seen else max(0.0, 1.0 - plan.null_response_prob)
    return Verdict(decision, count, flag_seen=seen, p_value=p)


def evaluate_flag_pulse_batch(
    plans: Sequence[SelfTestPlan],
    clicks: Sequence[ClickRecord],
    response_threshold: int | None = None,
) -> Verdict:
    """Aggregate verdict over many flag pulses.

    Declares NEGATIVE_MANIPULATION when the number of responses falls
    below a count threshold; by default the threshold is chosen from the
    calibrated response probabilities to minimize the larger of the two
    decision error rates.
    """
    k = len(plans)
    if k == 0:
        return Verdict(Decision.INCONCLUSIVE, 0)
    responses = sum(
        1 for plan in plans if evaluate_flag_pulse(plan, clicks).flag_seen
    )
    tmpl = plans[0]
    if response_threshold is None:
        cal = DecisionCalibration(
            manipulated=BinomialCounts(k, tmpl.alt_response_prob),
            normal=BinomialCounts(k, tmpl.null_response_prob),
        )
        response_threshold = choose_threshold(cal, 0, k)
    decision = (
        Decision.NORMAL
        if responses >= response_threshold
        else Decision.NEGATIVE_MANIPULATION
    )
    p = binomial_tail(k, tmpl.null_response_prob, responses, "lower")
    return Verdict(decision, responses, flag_seen=responses > 0, p_value=p)


def evaluate_self_blind(plan: SelfTestPlan, clicks: Sequence[ClickRecord]) -> Verdict:
    """Combined onset-flag and silence check during self-blinding.

    flag and silence        -> NORMAL
    no flag and silence     -> NEGATIVE_MANIPULATION (external blinding;
                               also covers a suppressed recovery click)
    flag and later clicks   -> POSITIVE_MANIPULATION (fake states)
    no flag and later clicks-> BOTH
    """
    if plan.strategy != Strategy.SELF_BLIND:
        raise ConfigError(
            f"evaluate_self_blind needs a SELF_BLIND plan, got {plan.strategy}"
        )
    a = to_ps(plan.test_start)
    w = a + to_ps(plan.response_window)
    b = a + to_ps(plan.test_duration)
    flag_seen = _count_between(clicks, a, w) > 0
    in_blind = _count_between(clicks, w, b)
    if flag_seen and in_blind == 0:
        decision = Decision.NORMAL
    elif not flag_seen and in_blind == 0:
        decision = Decision.NEGATIVE_MANIPULATION
    elif flag_seen:
        decision = Decision.POSITIVE_MANIPULATION
    else:
        decision = Decision.BOTH
    p_flag = 1.0 if flag_seen else max(0.0, 1.0 - plan.null_onset_prob)
    p_blind = (
        poisson_tail(plan.null_in_blind_mean, in_blind, "upper")
        if in_blind > 0
        else 1.0
    )
    p = min(1.0, p_flag * p_blind)
    return Verdict(
        decision, in_blind, flag_seen=flag_seen, in_blind_clicks=in_blind, p_value=p
    )


class CountModel(Protocol):
    """Distribution of a decision statistic (a count)."""

    def tail_geq(self, k: int) -> float: ...

    def tail_lt(self, k: int) -> float: ...


@dataclass(frozen=True)
class PoissonCounts:
    mean: float

    def tail_geq(self, k: int) -> float:
        return poisson_tail(self.mean, k, "upper") if k > 0 else 1.0

    def tail_lt(self, k: int) -> float:
        return poisson_tail(self.mean, k - 1, "lower") if k > 0 else 0.0


@dataclass(frozen=True)
class BinomialCounts:
    n: int
    p: float

    def tail_geq(self, k: int) -> float:
        return binomial_tail(self.n, self.p, k, "upper") if k > 0 else 1.0

    def tail_lt(self, k: int) -> float:
        return binomial_tail(self.n, self.p, k - 1, "lower") if k > 0 else 0.0


@dataclass(frozen=True)
class EmpiricalCounts:
    histogram: Histogram

    def tail_geq(self, k: int) -> float:
        return 1.0 - self.histogram.lower_tail(k - 1)

    def tail_lt(self, k: int) -> float:
        return self.histogram.lower_tail(k - 1) if k > 0 else 0.0


@dataclass(frozen=True)
class DecisionCalibration:
    """Calibrated statistic distributions under the two hypotheses."""

    manipulated: CountModel
    normal: CountModel


def decision_error_rates(
    strategy: Strategy,
    calibration: DecisionCalibration | None,
    threshold: int,
) -> tuple[float, float]:
    """Exact error probabilities of the "count >= threshold" rule.

    The salt or flag stimulus is the signal being detected; seeing it
    certifies the detector.  ``false_alarm`` is the probability that a
    manipulated detector nevertheless reaches the threshold (the stimulus
    is falsely reported seen); ``miss`` is the probability that a healthy
    detector falls short of it (the stimulus is missed).
    """
    if calibration is None:
        raise ValidationError("calibration", "decision distributions not calibrated")
    if threshold < 0:
        raise ValidationError("threshold", "must be >= 0")
    false_alarm = calibration.manipulated.tail_geq(threshold)
    miss = calibration.normal.tail_lt(threshold)
    return false_alarm, miss


def choose_threshold(
    calibration: DecisionCalibration, lo: int, hi: int
) -> int:
    """Integer threshold in [lo, hi] minimizing max(false_alarm, miss).

    false_alarm is non-increasing and miss non-decreasing in the
    threshold, so max of the two is V-shaped; binary search finds the
    crossing and the neighbors decide.
    """
    if hi < lo:
        raise ValidationError("hi", "must be >= lo")

    def score(t: int) -> float:
        return max(
            calibration.manipulated.tail_geq(t), calibration.normal.tail_lt(t)
        )

    a, b = lo, hi
    while b - a > 2:
        m = (a + b) // 2
        if calibration.manipulated.tail_geq(m) > calibration.normal.tail_lt(m):
            a = m
        else:
            b = m
    candidates = range(max(lo, a - 1), min(hi, b + 1) + 1)
    return min(candidates, key=score)
