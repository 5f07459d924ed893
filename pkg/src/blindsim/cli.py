"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration problem (the message
names the offending field), 2 I/O failure.  The environment variable
BLINDSIM_SEED overrides the config seed; --seed overrides both.
"""

from __future__ import annotations

import datetime as _dt
import os
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .engine import ExperimentConfig, Scenario, run_experiment, set_config_value, sweep
from .errors import BlindsimError
from .manifest import (
    RunManifest,
    config_to_flat,
    load_config_text,
    read_trial_records,
    sha256_file,
    write_histogram_csv,
    write_trials_jsonl,
)
from .presets import FIGURE_TRIALS, preset_config, reference_detector, signal_rate_for
from .rng import stream
from .selftest import Strategy
from .stats import clopper_pearson_interval, count_distribution_oracle

_SCENARIOS = {
    "normal": Scenario.NORMAL,
    "manipulated": Scenario.MANIPULATED,
    "recovery": Scenario.RECOVERY_ATTACK,
    "custom": Scenario.CUSTOM,
}
_PROTOCOLS = {
    "salt": Strategy.SALT,
    "flag": Strategy.FLAG_PULSE,
    "self-blind": Strategy.SELF_BLIND,
}


class _IOFailure(click.ClickException):
    exit_code = 2


def _fail_config(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _resolve_seed(cli_seed: int | None, config_seed: int) -> int:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("BLINDSIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise _fail_config(f"BLINDSIM_SEED: expected an integer, got {env!r}") from e
    return config_seed


def _build_config(
    config_path: str | None,
    scenario: str | None,
    protocol: str | None,
    trials: int | None,
    seed: int | None,
    overrides: tuple[str, ...],
) -> ExperimentConfig:
    try:
        if config_path is not None:
            try:
                text = Path(config_path).read_text()
            except OSError as e:
                raise _IOFailure(f"cannot read config: {e}") from e
            config = load_config_text(text)
            if scenario is not None:
                config = replace(config, scenario=_SCENARIOS[scenario])
            if protocol is not None:
                config = set_config_value(config, "plan.strategy", _PROTOCOLS[protocol])
        else:
            config = preset_config(
                _SCENARIOS[scenario or "normal"],
                _PROTOCOLS[protocol or "salt"],
                trials=trials if trials is not None else 1000,
                seed=seed if seed is not None else 1,
            )
        if trials is not None:
            config = replace(config, trials=trials)
        config = replace(config, seed=_resolve_seed(seed, config.seed))
        for item in overrides:
            if "=" not in item:
                raise _fail_config(f"--set expects dotted.path=value, got {item!r}")
            path, _, value = item.partition("=")
            current = _get_path(config, path.strip())
            parsed = _parse_like(current, value.strip(), path.strip())
            config = set_config_value(config, path.strip(), parsed)
        config.validate()
        return config
    except click.ClickException:
        raise
    except BlindsimError as e:
        raise _fail_config(str(e)) from e


def _get_path(config: ExperimentConfig, path: str):
    obj = config
    for part in path.split("."):
        try:
            obj = getattr(obj, part)
        except AttributeError as e:
            raise _fail_config(f"unknown parameter path {path!r}") from e
    return obj


def _parse_like(current, text: str, path: str):
    if current is None or isinstance(current, float):
        return None if text == "none" else float(text)
    if isinstance(current, bool):
        return text.lower() in ("true", "1", "yes")
    if isinstance(current, int):
        return int(float(text))
    if hasattr(type(current), "__members__"):  # Enum
        return type(current)(text.upper())
    return text


def _attach_salt_null(config: ExperimentConfig):
    """Simulate the salt-test null distribution and attach it to the plan."""
    if config.plan.strategy != Strategy.SALT or config.plan.null_distribution is not None:
        return config, None
    rng = stream(config.seed, "salt-null")
    null = count_distribution_oracle(
        config.detector,
        config.signal_rate + config.plan.salt_rate,
        config.plan.test_duration,
        n_trials=2000,
        rng=rng,
    )
    plan = replace(config.plan, null_distribution=null, null_mean=None)
    return replace(config, plan=plan), null


def _write_run(outdir: Path, config: ExperimentConfig, result, extra_hists, threads, started):
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        digests: dict[str, str] = {}
        trials_path = outdir / "trials.jsonl"
        write_trials_jsonl(trials_path, result.trials)
        digests["trials.jsonl"] = sha256_file(trials_path)
        hists = dict(result.histograms)
        hists.update(extra_hists)
        for name, hist in sorted(hists.items()):
            path = outdir / f"hist_{name}.csv"
            write_histogram_csv(path, hist)
            digests[path.name] = sha256_file(path)
        manifest = RunManifest(
            version=__version__,
            seed=config.seed,
            started_utc=started,
            finished_utc=_now(),
            threads=threads,
            config_flat=config_to_flat(config),
            digests=digests,
        )
        (outdir / "manifest.txt").write_text(manifest.dumps())
    except OSError as e:
        raise _IOFailure(f"cannot write results: {e}") from e


@click.group()
@click.version_option(version=__version__)
def main():
    """Simulate detector blinding attacks and self-testing countermeasures."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Flat key=value config file (or a manifest to re-run).")
@click.option("--seed", type=int, default=None, help="Master seed override.")
@click.option("--trials", type=int, default=None, help="Trial count override.")
@click.option("--scenario", type=click.Choice(sorted(_SCENARIOS)), default=None)
@click.option("--protocol", type=click.Choice(sorted(_PROTOCOLS)), default=None)
@click.option("--out", "outdir", type=click.Path(), default="out",
              help="Output directory.")
@click.option("--threads", type=int, default=1, help="Worker thread hint.")
@click.option("--set", "overrides", multiple=True, metavar="PATH=VALUE",
              help="Override a config field by dotted path.")
def simulate(config_path, seed, trials, scenario, protocol, outdir, threads, overrides):
    """Run an experiment and persist trials, histograms, and a manifest."""
    started = _now()
    config = _build_config(config_path, scenario, protocol, trials, seed, overrides)
    try:
        run_config, null_hist = _attach_salt_null(config)
        result = run_experiment(run_config, threads=threads)
    except BlindsimError as e:
        raise _fail_config(str(e)) from e
    extra = {"salt_null": null_hist} if null_hist is not None else {}
    _write_run(Path(outdir), config, result, extra, threads, started)
    summary = result.summary()
    for key in sorted(summary):
        click.echo(f"{key} = {summary[key]}")


@main.command()
@click.argument("name")
@click.option("--out", "outdir", type=click.Path(), default="out")
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None,
              help="Override the preset trial counts (all arms).")
@click.option("--threads", type=int, default=1)
def figure(name, outdir, seed, trials, threads):
    """Reproduce a bundled demonstration data set (fig3b, fig4, fig5, fig6)."""
    if name not in FIGURE_TRIALS:
        raise _fail_config(
            f"unknown figure {name!r}; choose from {', '.join(sorted(FIGURE_TRIALS))}"
        )
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise _IOFailure(f"cannot create output directory: {e}") from e
    seed = _resolve_seed(seed, 1)
    try:
        if name == "fig3b":
            n = trials or FIGURE_TRIALS[name][0]
            detector = reference_detector()
            hist = count_distribution_oracle(
                detector,
                signal_rate_for(detector),
                200e-6,
                n_trials=n,
                rng=stream(seed, "fig3b"),
            )
            write_histogram_csv(out / "hist_fig3b_counts.csv", hist)
            click.echo(f"trials = {n}")
            click.echo(f"mean = {hist.mean():.4f}")
            click.echo(f"variance = {hist.variance():.4f}")
            return
        strategy = {"fig4": Strategy.SALT, "fig5": Strategy.FLAG_PULSE,
                    "fig6": Strategy.SELF_BLIND}[name]
        n_normal, n_manip = FIGURE_TRIALS[name]
        for scenario, n, label in (
            (Scenario.NORMAL, trials or n_normal, "normal"),
            (Scenario.MANIPULATED, trials or n_manip, "manipulated"),
        ):
            config = preset_config(scenario, strategy, trials=n, seed=seed)
            result = run_experiment(config, threads=threads)
            for hist_name, hist in sorted(result.histograms.items()):
                write_histogram_csv(out / f"hist_{name}_{label}_{hist_name}.csv", hist)
            summary = result.summary()
            for key in sorted(summary):
                click.echo(f"{label}.{key} = {summary[key]}")
    except BlindsimError as e:
        raise _fail_config(str(e)) from e
    except OSError as e:
        raise _IOFailure(f"cannot write results: {e}") from e


@main.command()
@click.argument("results_dir", type=click.Path())
def analyze(results_dir):
    """Verdict accuracy and decision error estimates for a stored run."""
    root = Path(results_dir)
    manifest_path = root / "manifest.txt"
    if not manifest_path.exists():
        raise _IOFailure(f"missing manifest: {manifest_path}")
    try:
        manifest = RunManifest.loads(manifest_path.read_text())
        config = manifest.config()
        records = read_trial_records(root / "trials.jsonl")
    except (OSError, BlindsimError, ValueError, KeyError) as e:
        raise _IOFailure(f"corrupt results directory: {e}") from e

    from .engine import expected_decisions

    expected = expected_decisions(config.scenario, config.plan.strategy)
    decisions: dict[str, int] = {}
    correct = 0
    total = 0
    for rec in records:
        for v in rec["verdicts"]:
            d = v["decision"]
            decisions[d] = decisions.get(d, 0) + 1
            total += 1
            if expected and d in {e.value for e in expected}:
                correct += 1
    click.echo(f"scenario = {config.scenario.value}")
    click.echo(f"strategy = {config.plan.strategy.value}")
    click.echo(f"trials = {len(records)}")
    click.echo(f"verdicts = {total}")
    for d in sorted(decisions):
        click.echo(f"decision.{d} = {decisions[d]}")
    if expected and total:
        click.echo(f"accuracy = {correct / total:.6f}")
        wrong = total - correct
        low, high = clopper_pearson_interval(wrong, total)
        if config.scenario == Scenario.NORMAL:
            label = "miss_rate"  # healthy detector failing its own self-test
        else:
            label = "undetected_rate"  # manipulation passing as normal
        click.echo(f"{label} = {wrong / total:.6g} ci95 = [{low:.6g}, {high:.6g}]")


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--scenario", type=click.Choice(sorted(_SCENARIOS)), default=None)
@click.option("--protocol", type=click.Choice(sorted(_PROTOCOLS)), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--param", required=True, help="Dotted path of the swept field.")
@click.option("--values", required=True,
              help="Comma list (a,b,c) or range (start:stop:step).")
@click.option("--out", "outdir", type=click.Path(), default="out")
@click.option("--threads", type=int, default=1)
def sweep_cmd(config_path, scenario, protocol, seed, trials, param, values, outdir, threads):
    """Re-run the experiment across parameter values and tabulate metrics."""
    config = _build_config(config_path, scenario, protocol, trials, seed, ())
    try:
        parsed = _parse_values(values)
        current = _get_path(config, param)
        typed = [_parse_like(current, str(v), param) for v in parsed]
        rows = sweep(config, param, typed, threads=threads)
    except BlindsimError as e:
        raise _fail_config(str(e)) from e
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lines = ["value,accuracy,error_rate,verdicts"]
        for row in rows:
            verdicts = ";".join(f"{k}:{v}" for k, v in row.decisions)
            lines.append(f"{row.value!r},{row.accuracy!r},{row.error_rate!r},{verdicts}")
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise _IOFailure(f"cannot write results: {e}") from e
    for row in rows:
        click.echo(f"{param} = {row.value}: accuracy = {row.accuracy}")


def _parse_values(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise _fail_config("range values need start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise _fail_config("range step must be > 0")
        out = []
        v = start
        while v <= stop + 1e-12:
            out.append(v)
            v += step
        return out
    return [float(p) for p in text.split(",") if p.strip()]


if __name__ == "__main__":
    main()
