"""Simulator of single-photon detector blinding attacks and the
self-testing countermeasures that expose them."""

from .detector import (
    ClickCause,
    ClickRecord,
    DetectorParams,
    DetectorState,
    Mode,
    calibrate_dead_time,
    process_timeline,
)
from .engine import (
    ExperimentConfig,
    ExperimentResult,
    Scenario,
    TrialResult,
    build_trial_timeline,
    run_experiment,
    run_trial,
    set_config_value,
    sweep,
)
from .errors import BlindsimError, ConfigError, ValidationError
from .optics import (
    AttackScenario,
    BrightPulse,
    CwSegment,
    CwSource,
    OpticalTimeline,
    Photon,
    PhotonSource,
    PulseSource,
    empty_timeline,
    gen_attack,
    gen_le_schedule,
    gen_signal_photons,
    merge_timelines,
)
from .rng import stream
from .selftest import (
    BinomialCounts,
    Decision,
    DecisionCalibration,
    EmpiricalCounts,
    PoissonCounts,
    SelfTestPlan,
    Strategy,
    Verdict,
    choose_threshold,
    decision_error_rates,
    evaluate_flag_pulse,
    evaluate_flag_pulse_batch,
    evaluate_salt,
    evaluate_self_blind,
    schedule_tests,
)
from .stats import (
    Histogram,
    binomial_tail,
    clopper_pearson_interval,
    count_distribution_oracle,
    poisson_tail,
)

__version__ = "0.1.0"
