"""Deterministic experiment composition.

run_trial builds one trial end to end: schedule the self-tests, generate
legitimate light, attacker light, and light-emitter schedules, merge the
fragments, run the detector, and evaluate every scheduled test.  Each
trial derives its own random streams from (master seed, trial index,
module tag), so trials are reproducible in isolation, independent of
execution order, and safe to run concurrently.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from enum import Enum
from typing import Any

from .detector import DetectorParams, process_timeline
from .errors import ValidationError
from .optics import AttackScenario, gen_attack, gen_le_schedule, gen_signal_photons, merge_timelines
from .rng import stream
from .selftest import (
    Decision,
    SelfTestPlan,
    Strategy,
    Verdict,
    evaluate_flag_pulse,
    evaluate_salt,
    evaluate_self_blind,
    schedule_tests,
)
from .stats import Histogram
from .units import to_ps, to_seconds


class Scenario(str, Enum):
    NORMAL = "NORMAL"
    MANIPULATED = "MANIPULATED"
    RECOVERY_ATTACK = "RECOVERY_ATTACK"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class ExperimentConfig:
    detector: DetectorParams = field(default_factory=DetectorParams)
    attack: AttackScenario = field(default_factory=AttackScenario)
    plan: SelfTestPlan = field(default_factory=lambda: SelfTestPlan(strategy=Strategy.SALT))
    signal_rate: float = 5.5e4  # legitimate photon arrival rate at the detector
    duty_cycle: float = 0.5
    trial_duration: float = 4.0e-4
    trials: int = 100
    seed: int = 1
    scenario: Scenario = Scenario.NORMAL

    def validate(self) -> None:
        self.detector.validate()
        self.attack.validate()
        self.plan.validate()
        if self.signal_rate < 0:
            raise ValidationError("signal_rate", "must be >= 0")
        if not 0 <= self.duty_cycle < 1:
            raise ValidationError("duty_cycle", "must lie in [0, 1)")
        if self.trial_duration < 0:
            raise ValidationError("trial_duration", "must be >= 0")
        if self.trials < 1:
            raise ValidationError("trials", "must be >= 1")
        if self.scenario == Scenario.NORMAL and self.attack.blind_power_level > 0:
            raise ValidationError("scenario", "NORMAL scenario cannot carry an attack")
        if (
            self.plan.strategy == Strategy.SELF_BLIND
            and self.plan.self_blind_power < self.detector.blind_power
        ):
            raise ValidationError(
                "self_blind_power", "must reach the detector blinding threshold"
            )
        if self.plan.flag_pulse_energy >= self.detector.fake_energy:
            raise ValidationError(
                "flag_pulse_energy", "must stay below the fake-state energy threshold"
            )


@dataclass(frozen=True)
class TrialResult:
    index: int
    verdicts: tuple[Verdict, ...]
    cause_counts: tuple[tuple[str, int], ...]  # sorted (cause, count) pairs
    total_clicks: int
    response_offsets_ps: tuple[int, ...]  # click offsets after each test start
    seed_token: str

    def to_record(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "verdicts": [
                {
                    "decision": v.decision.value,
                    "observed_count": v.observed_count,
                    "flag_seen": v.flag_seen,
                    "in_blind_clicks": v.in_blind_clicks,
                    "p_value": v.p_value,
                }
                for v in self.verdicts
            ],
            "cause_counts": {k: v for k, v in self.cause_counts},
            "total_clicks": self.total_clicks,
            "response_offsets_ps": list(self.response_offsets_ps),
            "seed_token": self.seed_token,
        }


_EVALUATORS = {
    Strategy.SALT: evaluate_salt,
    Strategy.FLAG_PULSE: evaluate_flag_pulse,
    Strategy.SELF_BLIND: evaluate_self_blind,
}

# Offsets are collected over this window after each test start for
# time-resolved response histograms (10 ns bins downstream).
_OFFSET_SPAN = 200e-9


def expected_decisions(scenario: Scenario, strategy: Strategy) -> frozenset[Decision]:
    """Decisions counted as correct for a scenario/protocol pair."""
    if scenario == Scenario.NORMAL:
        return frozenset({Decision.NORMAL})
    if scenario == Scenario.MANIPULATED:
        if strategy == Strategy.SELF_BLIND:
            return frozenset({Decision.POSITIVE_MANIPULATION, Decision.BOTH})
        return frozenset({Decision.NEGATIVE_MANIPULATION})
    if scenario == Scenario.RECOVERY_ATTACK:
        if strategy == Strategy.SELF_BLIND:
            return frozenset({Decision.NEGATIVE_MANIPULATION, Decision.BOTH})
        return frozenset({Decision.NEGATIVE_MANIPULATION})
    return frozenset()


def build_trial_timeline(config: ExperimentConfig, trial_index: int):
    """Scheduled plans and the merged optical timeline of one trial.

    Exposed separately from run_trial so callers can inspect the exact
    stimuli and detector output behind a verdict.
    """
    config.validate()
    if trial_index < 0 or trial_index >= config.trials:
        raise ValidationError("trial_index", "outside configured trial range")
    seed = config.seed
    plans = schedule_tests(
        config.trial_duration,
        config.duty_cycle,
        config.plan.strategy,
        stream(seed, trial_index, "schedule"),
        template=config.plan,
    )
    attack = config.attack
    if (
        config.scenario == Scenario.RECOVERY_ATTACK
        and attack.stop_blind_at is None
        and plans
    ):
        # Worst case for the defender: the attacker releases its blinding
        # light in the middle of the self-test interval.
        attack = replace(
            attack, stop_blind_at=plans[0].test_start + plans[0].test_duration / 2
        )
    fragments = [
        gen_signal_photons(
            config.signal_rate, config.trial_duration, stream(seed, trial_index, "signal")
        ),
        gen_attack(attack, config.trial_duration, stream(seed, trial_index, "attack")),
    ]
    le_rng = stream(seed, trial_index, "le")
    for plan in plans:
        fragments.append(
            gen_le_schedule(
                plan,
                config.trial_duration,
                le_rng,
                fake_energy=config.detector.fake_energy,
            )
        )
    return plans, merge_timelines(*fragments)


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialResult:
    """One deterministic trial; reproducible from (config, trial_index)."""
    plans, timeline = build_trial_timeline(config, trial_index)
    seed = config.seed
    clicks = process_timeline(
        config.detector, timeline, stream(seed, trial_index, "detector")
    )

    evaluator = _EVALUATORS[config.plan.strategy]
    verdicts = tuple(evaluator(plan, clicks) for plan in plans)
    offsets: list[int] = []
    span_ps = to_ps(_OFFSET_SPAN)
    for plan in plans:
        a = to_ps(plan.test_start)
        offsets.extend(
            c.time_ps - a for c in clicks if a <= c.time_ps < a + span_ps
        )
    causes = Counter(c.cause.value for c in clicks)
    return TrialResult(
        index=trial_index,
        verdicts=verdicts,
        cause_counts=tuple(sorted(causes.items())),
        total_clicks=len(clicks),
        response_offsets_ps=tuple(offsets),
        seed_token=f"{seed}/{trial_index}",
    )


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    trials: tuple[TrialResult, ...]
    histograms: dict[str, Histogram]

    def decision_counts(self) -> Counter:
        counter: Counter = Counter()
        for tr in self.trials:
            for v in tr.verdicts:
                counter[v.decision.value] += 1
        return counter

    def accuracy(self) -> float:
        expected = expected_decisions(self.config.scenario, self.config.plan.strategy)
        if not expected:
            return float("nan")
        total = 0
        good = 0
        for tr in self.trials:
            for v in tr.verdicts:
                total += 1
                good += v.decision in expected
        return good / total if total else float("nan")

    def summary(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "scenario": self.config.scenario.value,
            "strategy": self.config.plan.strategy.value,
            "trials": len(self.trials),
            "decisions": dict(self.decision_counts()),
            "accuracy": self.accuracy(),
        }
        if "test_counts" in self.histograms:
            h = self.histograms["test_counts"]
            out["test_count_mean"] = h.mean()
            out["test_count_variance"] = h.variance()
        verdicts = [v for tr in self.trials for v in tr.verdicts]
        if self.config.plan.strategy in (Strategy.FLAG_PULSE, Strategy.SELF_BLIND):
            flags = [v.flag_seen for v in verdicts if v.flag_seen is not None]
            if flags:
                out["response_fraction"] = sum(flags) / len(flags)
        if self.config.plan.strategy == Strategy.SELF_BLIND:
            blinds = [v.in_blind_clicks for v in verdicts if v.in_blind_clicks is not None]
            if blinds:
                out["in_blind_total"] = int(sum(blinds))
                out["in_blind_nonzero_fraction"] = sum(
                    1 for b in blinds if b > 0
                ) / len(blinds)
        return out


def _build_histograms(config: ExperimentConfig, trials: tuple[TrialResult, ...]):
    hists: dict[str, Histogram] = {
        "clicks_per_trial": Histogram.from_event_counts(t.total_clicks for t in trials)
    }
    verdicts = [v for t in trials for v in t.verdicts]
    if config.plan.strategy == Strategy.SALT:
        hists["test_counts"] = Histogram.from_event_counts(
            v.observed_count for v in verdicts
        )
    if config.plan.strategy in (Strategy.FLAG_PULSE, Strategy.SELF_BLIND):
        offsets = [
            to_seconds(o) for t in trials for o in t.response_offsets_ps
        ]
        hists["response_offsets"] = Histogram.from_times(
            offsets, bin_width=10e-9, t0=0.0, t1=_OFFSET_SPAN
        )
        hists["onset_responses"] = Histogram.from_event_counts(
            int(bool(v.flag_seen)) for v in verdicts
        )
    if config.plan.strategy == Strategy.SELF_BLIND:
        hists["in_blind_counts"] = Histogram.from_event_counts(
            v.in_blind_clicks for v in verdicts if v.in_blind_clicks is not None
        )
    return hists


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run all trials and aggregate summary histograms.

    ``threads`` is an execution hint only; results are keyed by trial
    index and identical for any thread count.
    """
    config.validate()
    indices = range(config.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = tuple(pool.map(lambda i: run_trial(config, i), indices))
    else:
        trials = tuple(run_trial(config, i) for i in indices)
    trials = tuple(sorted(trials, key=lambda t: t.index))
    return ExperimentResult(
        config=config, trials=trials, histograms=_build_histograms(config, trials)
    )


def _replace_path(obj: Any, path: list[str], value: Any) -> Any:
    if not is_dataclass(obj):
        raise ValidationError("parameter", f"cannot descend into {type(obj).__name__}")
    name = path[0]
    if name not in {f.name for f in fields(obj)}:
        raise ValidationError("parameter", f"unknown field {name!r}")
    current = getattr(obj, name)
    if len(path) == 1:
        return replace(obj, **{name: value})
    return replace(obj, **{name: _replace_path(current, path[1:], value)})


def set_config_value(config: ExperimentConfig, path: str, value: Any) -> ExperimentConfig:
    """Return a config with the dotted-path field replaced."""
    parts = path.split(".")
    return _replace_path(config, parts, value)


@dataclass(frozen=True)
class SweepRow:
    value: float
    accuracy: float
    error_rate: float  # fraction of verdicts contradicting the scenario
    decisions: tuple[tuple[str, int], ...]
    summary: dict[str, Any]


def sweep(
    config: ExperimentConfig, parameter_path: str, values, threads: int = 1
) -> list[SweepRow]:
    """Run one experiment per parameter value and tabulate verdict metrics."""
    rows = []
    for value in values:
        cfg = set_config_value(config, parameter_path, value)
        result = run_experiment(cfg, threads=threads)
        accuracy = result.accuracy()
        rows.append(
            SweepRow(
                value=value,
                accuracy=accuracy,
                error_rate=1.0 - accuracy,
                decisions=tuple(sorted(result.decision_counts().items())),
                summary=result.summary(),
            )
        )
    return rows


def realized_click_rate(
    params: DetectorParams,
    arrival_rate: float,
    duration: float = 0.5,
    seed: int = 0xB11D,
) -> float:
    """Observed total click rate for a Poissonian source, by pilot simulation."""
    timeline = gen_signal_photons(arrival_rate, duration, stream(seed, "pilot-src"))
    clicks = process_timeline(params, timeline, stream(seed, "pilot-det"))
    return len(clicks) / duration


def calibrate_source_rate(
    params: DetectorParams,
    target_click_rate: float,
    duration: float = 0.5,
    tolerance: float = 0.01,
    seed: int = 0xB11D,
) -> float:
    """Photon arrival rate that yields the target total click rate.

    Deterministic bisection against pilot simulations with a fixed
    internal seed (common random numbers keep the response monotone).
    Accounts for dead-time losses, dark counts and the afterpulse
    cascade, which a closed form would have to approximate.
    """
    if target_click_rate <= 0:
        raise ValidationError("target_click_rate", "must be > 0")
    lo = 0.0
    hi = max(target_click_rate / max(params.efficiency, 1e-9), 1.0)
    for _ in range(40):
        if realized_click_rate(params, hi, duration, seed) >= target_click_rate:
            break
        hi *= 2
    else:
        raise ValidationError("target_click_rate", "unreachable at any source rate")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        rate = realized_click_rate(params, mid, duration, seed)
        if abs(rate - target_click_rate) <= tolerance * target_click_rate:
            return mid
        if rate < target_click_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
