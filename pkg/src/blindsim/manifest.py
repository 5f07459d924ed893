"""Flat-text configuration files, run manifests, and result writers.

Configs are ``dotted.path = value`` lines, one scalar per line, with the
same dotted paths the sweep command addresses.  All durations are
seconds, powers watts, energies joules; scientific notation is allowed.
A run manifest is the same format with ``config.`` prefixed entries plus
run metadata and SHA-256 digests of every output file, which is enough
to bit-reproduce the run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

from .engine import ExperimentConfig
from .errors import ConfigError
from .stats import Histogram

# Runtime-only fields never serialized into configs or manifests.
_SKIP_FIELDS = {"null_distribution"}


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_flat(config: ExperimentConfig) -> dict[str, str]:
    """Flatten a config into dotted-path keys with text values."""

    out: dict[str, str] = {}

    def walk(obj: Any, prefix: str) -> None:
        for f in fields(obj):
            if f.name in _SKIP_FIELDS:
                continue
            value = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if is_dataclass(value) and not isinstance(value, Enum):
                walk(value, key + ".")
            else:
                out[key] = _format_value(value)

    walk(config, "")
    return out


def _parse_scalar(text: str, annotation: Any, key: str) -> Any:
    origin = get_origin(annotation)
    args = [a for a in get_args(annotation) if a is not type(None)]
    optional = origin is not None and type(None) in get_args(annotation)
    target = args[0] if optional and args else annotation
    if text == "none":
        if optional:
            return None
        raise ConfigError(f"{key}: 'none' not allowed here")
    if isinstance(target, type) and issubclass(target, Enum):
        try:
            return target(text.upper())
        except ValueError as e:
            raise ConfigError(f"{key}: unknown value {text!r}") from e
    if target is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if target is int:
        try:
            return int(text)
        except ValueError:
            try:
                f = float(text)
            except ValueError as e:
                raise ConfigError(f"{key}: expected an integer, got {text!r}") from e
            if f != int(f):
                raise ConfigError(f"{key}: expected an integer, got {text!r}")
            return int(f)
    if target is float:
        try:
            return float(text)
        except ValueError as e:
            raise ConfigError(f"{key}: expected a number, got {text!r}") from e
    if target is str:
        return text
    raise ConfigError(f"{key}: unsupported field type {annotation!r}")


def config_from_flat(flat: dict[str, str]) -> ExperimentConfig:
    """Rebuild a config from dotted-path text values; unknown keys fail."""

    def build(cls, prefix: str):
        hints = get_type_hints(cls)
        kwargs = {}
        for f in fields(cls):
            if f.name in _SKIP_FIELDS:
                continue
            key = f"{prefix}{f.name}"
            ann = hints[f.name]
            if is_dataclass(ann) and not (isinstance(ann, type) and issubclass(ann, Enum)):
                sub_prefix = key + "."
                if any(k.startswith(sub_prefix) for k in flat):
                    kwargs[f.name] = build(ann, sub_prefix)
            elif key in flat:
                kwargs[f.name] = _parse_scalar(flat[key], ann, key)
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"{prefix or 'config'}: {e}") from e

    known: set[str] = set()

    def collect(cls, prefix: str) -> None:
        hints = get_type_hints(cls)
        for f in fields(cls):
            if f.name in _SKIP_FIELDS:
                continue
            key = f"{prefix}{f.name}"
            ann = hints[f.name]
            if is_dataclass(ann) and not (isinstance(ann, type) and issubclass(ann, Enum)):
                collect(ann, key + ".")
            else:
                known.add(key)

    collect(ExperimentConfig, "")
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return build(ExperimentConfig, "")


def dumps_flat(mapping: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def parse_flat(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_config_text(text: str) -> ExperimentConfig:
    """Load a config from plain config text or from a manifest."""
    flat = parse_flat(text)
    if any(k.startswith("config.") for k in flat):
        flat = {
            k[len("config."):]: v for k, v in flat.items() if k.startswith("config.")
        }
    return config_from_flat(flat)


@dataclass(frozen=True)
class RunManifest:
    version: str
    seed: int
    started_utc: str
    finished_utc: str
    threads: int
    config_flat: dict[str, str]
    digests: dict[str, str]

    def dumps(self) -> str:
        lines = {
            "blindsim.version": self.version,
            "run.master_seed": str(self.seed),
            "run.started_utc": self.started_utc,
            "run.finished_utc": self.finished_utc,
            "run.threads": str(self.threads),
        }
        for k, v in self.config_flat.items():
            lines[f"config.{k}"] = v
        for name, digest in sorted(self.digests.items()):
            lines[f"digest.{name}"] = digest
        return dumps_flat(lines)

    @classmethod
    def loads(cls, text: str) -> "RunManifest":
        flat = parse_flat(text)
        try:
            version = flat["blindsim.version"]
            seed = int(flat["run.master_seed"])
            started = flat["run.started_utc"]
            finished = flat["run.finished_utc"]
            threads = int(flat.get("run.threads", "1"))
        except KeyError as e:
            raise ConfigError(f"manifest missing field {e.args[0]!r}") from e
        config_flat = {
            k[len("config."):]: v for k, v in flat.items() if k.startswith("config.")
        }
        if not config_flat:
            raise ConfigError("manifest carries no config snapshot")
        digests = {
            k[len("digest."):]: v for k, v in flat.items() if k.startswith("digest.")
        }
        return cls(version, seed, started, finished, threads, config_flat, digests)

    def config(self) -> ExperimentConfig:
        return config_from_flat(self.config_flat)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_histogram_csv(path: Path, hist: Histogram) -> None:
    rows = ["bin_low,bin_high,count"]
    rows.extend(f"{low!r},{high!r},{count}" for low, high, count in hist.to_csv_rows())
    path.write_text("\n".join(rows) + "\n")


def read_histogram_csv(path: Path) -> Histogram:
    lines = path.read_text().strip().splitlines()
    edges: list[float] = []
    counts: list[int] = []
    for line in lines[1:]:
        low, high, count = line.split(",")
        if not edges:
            edges.append(float(low))
        edges.append(float(high))
        counts.append(int(count))
    return Histogram(
        bin_edges=tuple(edges), counts=tuple(counts), n_samples=sum(counts)
    )


def write_trials_jsonl(path: Path, trials) -> None:
    with path.open("w") as fh:
        for t in trials:
            fh.write(json.dumps(t.to_record(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_trial_records(path: Path) -> list[dict[str, Any]]:
    records = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
