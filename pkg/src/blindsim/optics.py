"""Optical stimulus timelines seen by the detector.

A timeline collects three kinds of stimuli over a fixed horizon:
discrete photon arrivals (legitimate signal or receiver-injected salt
light), piecewise-constant CW power contributions (attacker blinding
light or the receiver's local blinding emitter), and bright pulses
(attacker fake states or receiver flag pulses).  CW contributions
superpose: the detector reacts to the sum of all active segments.

Generators are pure functions of their random stream, so trials can run
in parallel with per-trial streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, TYPE_CHECKING

import numpy as np

from .errors import ValidationError
from .units import to_ps, to_seconds

if TYPE_CHECKING:
    from .selftest import SelfTestPlan


class PhotonSource(str, Enum):
    SIGNAL = "SIGNAL"
    SALT = "SALT"


class CwSource(str, Enum):
    ATTACK_BLIND = "ATTACK_BLIND"
    LE_BLIND = "LE_BLIND"


class PulseSource(str, Enum):
    FAKE = "FAKE"
    FLAG = "FLAG"


class Photon(NamedTuple):
    time_ps: int
    source: PhotonSource


class CwSegment(NamedTuple):
    start_ps: int
    stop_ps: int  # exclusive
    power: float  # watts
    source: CwSource


class BrightPulse(NamedTuple):
    time_ps: int
    width_ps: int
    peak_power: float  # watts
    source: PulseSource
    # Photon content controls the click probability of a sub-threshold
    # pulse on an armed detector: 1 - (1 - efficiency)**photon_number.
    # None means "macroscopic": an armed detector always clicks.
    photon_number: int | None = None

    @property
    def energy(self) -> float:
        """Pulse energy in joules (peak power times width)."""
        return self.peak_power * to_seconds(self.width_ps)


@dataclass(frozen=True)
class OpticalTimeline:
    duration_ps: int
    photons: tuple[Photon, ...] = ()
    cw_segments: tuple[CwSegment, ...] = ()
    pulses: tuple[BrightPulse, ...] = ()

    @property
    def duration(self) -> float:
        return to_seconds(self.duration_ps)

    def validate(self) -> None:
        if self.duration_ps < 0:
            raise ValidationError("duration", "must be >= 0")
        last = -1
        for p in self.photons:
            if p.time_ps < 0:
                raise ValidationError("photons", "negative timestamp")
            if p.time_ps < last:
                raise ValidationError("photons", "timestamps out of order")
            if p.time_ps >= self.duration_ps:
                raise ValidationError("photons", "timestamp beyond duration")
            last = p.time_ps
        for seg in self.cw_segments:
            if seg.start_ps < 0:
                raise ValidationError("cw_segments", "negative timestamp")
            if seg.stop_ps <= seg.start_ps:
                raise ValidationError("cw_segments", "empty or inverted segment")
            if seg.start_ps >= self.duration_ps or seg.stop_ps > self.duration_ps:
                raise ValidationError("cw_segments", "segment beyond duration")
            if seg.power < 0:
                raise ValidationError("cw_segments", "negative power")
        last = -1
        for pu in self.pulses:
            if pu.time_ps < 0:
                raise ValidationError("pulses", "negative timestamp")
            if pu.time_ps < last:
                raise ValidationError("pulses", "timestamps out of order")
            if pu.time_ps >= self.duration_ps:
                raise ValidationError("pulses", "timestamp beyond duration")
            if pu.width_ps <= 0:
                raise ValidationError("pulses", "width must be > 0")
            if pu.peak_power < 0:
                raise ValidationError("pulses", "negative peak power")
            if pu.photon_number is not None and pu.photon_number < 1:
                raise ValidationError("pulses", "photon_number must be >= 1")
            last = pu.time_ps


def empty_timeline(duration: float) -> OpticalTimeline:
    return OpticalTimeline(duration_ps=to_ps(duration))


@dataclass(frozen=True)
class AttackScenario:
    """Eavesdropper activity: CW blinding plus fake-state pulses.

    Fake states only make sense against a blinded detector; generating
    them without blinding must be requested explicitly via
    ``allow_fakes_without_blinding``.
    """

    blind_power_level: float = 0.0  # watts; 0 means no attack
    fake_pulse_rate: float = 0.0  # mean pulses/second
    fake_peak_power: float = 3.0e-6  # watts
    fake_width: float = 2.0e-9  # seconds
    stop_blind_at: float | None = None  # attacker ceases at this time
    allow_fakes_without_blinding: bool = False

    def validate(self) -> None:
        if self.blind_power_level < 0:
            raise ValidationError("blind_power_level", "must be >= 0")
        if self.fake_pulse_rate < 0:
            raise ValidationError("fake_pulse_rate", "must be >= 0")
        if self.fake_peak_power < 0:
            raise ValidationError("fake_peak_power", "must be >= 0")
        if self.fake_width <= 0:
            raise ValidationError("fake_width", "must be > 0")
        if self.stop_blind_at is not None and self.stop_blind_at < 0:
            raise ValidationError("stop_blind_at", "must be >= 0")
        if (
            self.fake_pulse_rate > 0
            and self.blind_power_level == 0
            and not self.allow_fakes_without_blinding
        ):
            raise ValidationError(
                "fake_pulse_rate",
                "fake states without blinding require allow_fakes_without_blinding",
            )


def _poisson_arrival_ps(
    rate: float, duration_ps: int, rng: np.random.Generator
) -> np.ndarray:
    """Homogeneous Poisson arrival times as sorted integer picoseconds."""
    if rate == 0 or duration_ps <= 0:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate * to_seconds(duration_ps))
    times = (np.sort(rng.random(n)) * duration_ps).astype(np.int64)
    # u < 1 can still scale up to duration_ps by round-to-even; keep the
    # half-open horizon exact
    return np.minimum(times, duration_ps - 1)


def gen_signal_photons(
    rate: float,
    duration: float,
    rng: np.random.Generator,
    source: PhotonSource = PhotonSource.SIGNAL,
) -> OpticalTimeline:
    """Poissonian photon arrivals at the given rate over the horizon."""
    if rate < 0:
        raise ValidationError("rate", "must be >= 0")
    duration_ps = to_ps(duration)
    times = _poisson_arrival_ps(rate, duration_ps, rng)
    photons = tuple(Photon(int(t), source) for t in times)
    return OpticalTimeline(duration_ps=duration_ps, photons=photons)


def gen_attack(
    scenario: AttackScenario, duration: float, rng: np.random.Generator
) -> OpticalTimeline:
    """Attacker timeline fragment: blinding segment plus fake pulses.

    Fake pulses are emitted while the attack is active, i.e. over
    [0, stop_blind_at) when the attacker ceases early.
    """
    scenario.validate()
    duration_ps = to_ps(duration)
    stop_ps = duration_ps
    if scenario.stop_blind_at is not None:
        stop_ps = min(duration_ps, to_ps(scenario.stop_blind_at))
    segments: tuple[CwSegment, ...] = ()
    if scenario.blind_power_level > 0 and stop_ps > 0:
        segments = (
            CwSegment(0, stop_ps, scenario.blind_power_level, CwSource.ATTACK_BLIND),
        )
    pulses: list[BrightPulse] = []
    if scenario.fake_pulse_rate > 0:
        width_ps = to_ps(scenario.fake_width)
        active_ps = duration_ps if scenario.allow_fakes_without_blinding else stop_ps
        for t in _poisson_arrival_ps(scenario.fake_pulse_rate, active_ps, rng):
            pulses.append(
                BrightPulse(int(t), width_ps, scenario.fake_peak_power, PulseSource.FAKE)
            )
    return OpticalTimeline(
        duration_ps=duration_ps, cw_segments=segments, pulses=tuple(pulses)
    )


def gen_le_schedule(
    plan: "SelfTestPlan",
    duration: float,
    rng: np.random.Generator,
    *,
    fake_energy: float | None = None,
) -> OpticalTimeline:
    """Light-emitter schedule implementing one scheduled self-test.

    SALT: salt photon arrivals at ``plan.salt_rate`` over the test
    interval.  FLAG_PULSE: a single few-photon pulse of width
    ``plan.test_duration``.  SELF_BLIND: a CW blinding segment covering
    the test interval whose onset edge doubles as a deterministic flag
    pulse.

    When ``fake_energy`` is given, a flag pulse whose energy would reach
    it is rejected: such a pulse would force clicks from a blinded
    detector and defeat the test.
    """
    from .selftest import Strategy

    duration_ps = to_ps(duration)
    start_ps = to_ps(plan.test_start)
    span_ps = to_ps(plan.test_duration)
    stop_ps = min(duration_ps, start_ps + span_ps)

    if plan.strategy == Strategy.SALT:
        if plan.salt_rate < 0:
            raise ValidationError("salt_rate", "must be >= 0")
        times = _poisson_arrival_ps(plan.salt_rate, stop_ps - start_ps, rng)
        photons = tuple(Photon(int(t) + start_ps, PhotonSource.SALT) for t in times)
        return OpticalTimeline(duration_ps=duration_ps, photons=photons)

    if plan.strategy == Strategy.FLAG_PULSE:
        width_ps = max(1, span_ps)
        peak = plan.flag_pulse_energy / to_seconds(width_ps)
        pulse = BrightPulse(
            start_ps, width_ps, peak, PulseSource.FLAG, plan.flag_photon_number
        )
        _check_flag_energy(pulse.energy, fake_energy)
        return OpticalTimeline(duration_ps=duration_ps, pulses=(pulse,))

    if plan.strategy == Strategy.SELF_BLIND:
        onset_width_ps = 1000  # 1 ns marker; intensity is carried by the CW segment
        peak = plan.flag_pulse_energy / to_seconds(onset_width_ps)
        onset = BrightPulse(start_ps, onset_width_ps, peak, PulseSource.FLAG, None)
        _check_flag_energy(onset.energy, fake_energy)
        segment = CwSegment(start_ps, stop_ps, plan.self_blind_power, CwSource.LE_BLIND)
        return OpticalTimeline(
            duration_ps=duration_ps, cw_segments=(segment,), pulses=(onset,)
        )

    raise ValidationError("strategy", f"unknown strategy {plan.strategy!r}")


def _check_flag_energy(energy: float, fake_energy: float | None) -> None:
    from .errors import ConfigError

    if fake_energy is not None and energy >= fake_energy:
        raise ConfigError(
            f"flag pulse energy {energy:.3g} J reaches the fake-state threshold "
            f"{fake_energy:.3g} J; the pulse would click even on a blinded detector"
        )


def merge_timelines(*fragments: OpticalTimeline) -> OpticalTimeline:
    """Time-ordered union of fragments sharing one horizon.

    CW contributions stay separate tagged segments; the detector sums
    them.  The merge is order-insensitive: fragments are combined and
    re-sorted on full event tuples.
    """
    if not fragments:
        raise ValidationError("fragments", "need at least one timeline")
    duration_ps = fragments[0].duration_ps
    for f in fragments[1:]:
        if f.duration_ps != duration_ps:
            raise ValidationError("fragments", "mismatched durations")
    photons: list[Photon] = []
    segments: list[CwSegment] = []
    pulses: list[BrightPulse] = []
    for f in fragments:
        photons.extend(f.photons)
        segments.extend(f.cw_segments)
        pulses.extend(f.pulses)
    photons.sort()
    segments.sort()
    # photon_number may be None; keep the key orderable
    pulses.sort(
        key=lambda p: (p.time_ps, p.width_ps, p.peak_power, p.source.value,
                       -1 if p.photon_number is None else p.photon_number)
    )
    return OpticalTimeline(
        duration_ps=duration_ps,
        photons=tuple(photons),
        cw_segments=tuple(segments),
        pulses=tuple(pulses),
    )
