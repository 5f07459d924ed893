"""Reference operating point and bundled demonstration experiments.

The reference detector registers about 5e4 events per second, an order
of magnitude below its 5e5/s saturation rate, with a 7e3/s dark rate and
a 40 % afterpulse probability.  A counting window of 200 us then holds
about 10 events.  The attacker blinds with 500 pW of CW light and forces
clicks with 2 ns, 3 uW fake-state pulses
(energy 6 fJ, well above the 1 fJ forced-click threshold).

Dead time is tied to published response probabilities rather than set by
hand: the flag-pulse experiments ran at a 93.4 % armed fraction and the
self-blinding experiments at 97.6 %, so the corresponding presets
calibrate dead time to each target at the 5e4/s operating rate.  Source
rates are calibrated by deterministic pilot simulation and cached.
"""

from __future__ import annotations

from dataclasses import replace
from functools import lru_cache

from .detector import DetectorParams, calibrate_dead_time
from .errors import ConfigError
from .engine import ExperimentConfig, Scenario, calibrate_source_rate
from .optics import AttackScenario
from .selftest import SelfTestPlan, Strategy

CLICK_RATE = 5.0e4  # operating event rate, events/second
SALT_TEST_RATE = 5.0e5  # event rate during a salt test (mean 100 per window)
WINDOW = 200e-6  # counting window T
DARK_RATE = 7.0e3
AFTERPULSE_PROB = 0.4
MAX_RATE = 5.0e5
BLIND_POWER = 5.0e-10
FAKE_PEAK_POWER = 3.0e-6
FAKE_WIDTH = 2.0e-9
FLAG_WIDTH = 25e-9
RESPONSE_WINDOW = 60e-9
FLAG_ARMED_FRACTION = 0.934  # flag-pulse response probability of a healthy detector
ONSET_ARMED_FRACTION = 0.976  # self-blind onset response probability
SALT_THRESHOLD = 50
# Electrical noise tuned to ~8 residual clicks across 7608 self-blind windows.
SELF_BLIND_NOISE_RATE = 5.26


def reference_detector(
    armed_fraction: float = FLAG_ARMED_FRACTION, noise_rate: float = 0.0
) -> DetectorParams:
    """Detector at the reference operating point.

    ``armed_fraction`` fixes the dead time via the renewal identity at
    the 5e4/s click rate.
    """
    base = DetectorParams(noise_rate=noise_rate)
    dead = calibrate_dead_time(base, armed_fraction, rate=CLICK_RATE)
    return replace(base, dead_time=dead, noise_rate=noise_rate)


@lru_cache(maxsize=None)
def signal_rate_for(params: DetectorParams, target: float = CLICK_RATE) -> float:
    """Cached pilot-calibrated photon arrival rate for a target click rate."""
    return calibrate_source_rate(params, target)


@lru_cache(maxsize=None)
def salt_rate_for(params: DetectorParams) -> float:
    """Salt arrival rate lifting the in-test click rate to SALT_TEST_RATE.

    Signal and salt photons superpose into one Poisson stream, so the
    extra rate is the difference of two calibrated totals.
    """
    total = calibrate_source_rate(params, SALT_TEST_RATE, duration=0.1)
    return max(0.0, total - signal_rate_for(params))


def manipulation_attack(stop_blind_at: float | None = None) -> AttackScenario:
    """Blinding plus fake states mimicking the legitimate event rate."""
    return AttackScenario(
        blind_power_level=BLIND_POWER,
        fake_pulse_rate=CLICK_RATE,
        fake_peak_power=FAKE_PEAK_POWER,
        fake_width=FAKE_WIDTH,
        stop_blind_at=stop_blind_at,
    )


def salt_config(
    scenario: Scenario, trials: int, seed: int, trial_duration: float = 2 * WINDOW
) -> ExperimentConfig:
    detector = reference_detector(FLAG_ARMED_FRACTION)
    signal = signal_rate_for(detector)
    salt = salt_rate_for(detector)
    plan = SelfTestPlan(
        strategy=Strategy.SALT,
        test_duration=WINDOW,
        salt_rate=salt,
        count_threshold=SALT_THRESHOLD,
        null_mean=SALT_TEST_RATE * WINDOW,
    )
    attack = (
        manipulation_attack() if scenario == Scenario.MANIPULATED else AttackScenario()
    )
    return ExperimentConfig(
        detector=detector,
        attack=attack,
        plan=plan,
        signal_rate=signal,
        duty_cycle=WINDOW / trial_duration,
        trial_duration=trial_duration,
        trials=trials,
        seed=seed,
        scenario=scenario,
    )


def flag_pulse_config(
    scenario: Scenario, trials: int, seed: int, trial_duration: float = WINDOW
) -> ExperimentConfig:
    detector = reference_detector(FLAG_ARMED_FRACTION)
    plan = SelfTestPlan(
        strategy=Strategy.FLAG_PULSE,
        test_duration=FLAG_WIDTH,
        response_window=RESPONSE_WINDOW,
        null_response_prob=FLAG_ARMED_FRACTION,
    )
    attack = (
        manipulation_attack() if scenario == Scenario.MANIPULATED else AttackScenario()
    )
    return ExperimentConfig(
        detector=detector,
        attack=attack,
        plan=plan,
        signal_rate=signal_rate_for(detector),
        duty_cycle=FLAG_WIDTH / trial_duration,
        trial_duration=trial_duration,
        trials=trials,
        seed=seed,
        scenario=scenario,
    )


def self_blind_config(
    scenario: Scenario, trials: int, seed: int, trial_duration: float = 2 * WINDOW
) -> ExperimentConfig:
    detector = reference_detector(ONSET_ARMED_FRACTION, noise_rate=SELF_BLIND_NOISE_RATE)
    plan = SelfTestPlan(
        strategy=Strategy.SELF_BLIND,
        test_duration=WINDOW,
        response_window=RESPONSE_WINDOW,
        self_blind_power=2 * BLIND_POWER,
        null_onset_prob=ONSET_ARMED_FRACTION,
        null_in_blind_mean=SELF_BLIND_NOISE_RATE * (WINDOW - RESPONSE_WINDOW),
    )
    if scenario == Scenario.MANIPULATED:
        attack = manipulation_attack()
    elif scenario == Scenario.RECOVERY_ATTACK:
        # stop_blind_at is filled per trial, mid-interval
        attack = AttackScenario(blind_power_level=BLIND_POWER)
    else:
        attack = AttackScenario()
    return ExperimentConfig(
        detector=detector,
        attack=attack,
        plan=plan,
        signal_rate=signal_rate_for(detector),
        duty_cycle=WINDOW / trial_duration,
        trial_duration=trial_duration,
        trials=trials,
        seed=seed,
        scenario=scenario,
    )


def preset_config(
    scenario: Scenario, strategy: Strategy, trials: int, seed: int
) -> ExperimentConfig:
    if scenario == Scenario.RECOVERY_ATTACK and strategy != Strategy.SELF_BLIND:
        raise ConfigError(
            "the recovery scenario exercises the self-blind protocol; "
            "choose protocol self-blind or a custom config"
        )
    if strategy == Strategy.SALT:
        return salt_config(scenario, trials, seed)
    if strategy == Strategy.FLAG_PULSE:
        return flag_pulse_config(scenario, trials, seed)
    return self_blind_config(scenario, trials, seed)


# Trial counts of the bundled figure-reproduction experiments.
FIGURE_TRIALS = {
    "fig3b": (10_000,),
    "fig4": (7_432, 7_686),
    "fig5": (12_542, 12_380),
    "fig6": (7_608, 7_658),
}
