"""Experiment configuration: TOML file, then command-line overrides."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .orchestrate import RerankJob, RerankStrategy, WindowConfig
from .sampler import SamplerConfig, SamplingMode

PROVIDERS = ("synthetic", "replay", "remote")


@dataclass(frozen=True)
class EngineConfig:
    strategy: str = "perm_assign"
    provider: str = "synthetic"
    k: int | None = None
    sampling_mode: str = "constrained"
    window: int = 20
    step_size: int = 10
    top_k: int = 100
    seed: int = 0
    jobs: int = 1
    template_id: str = "default"
    gain: str = "exp"
    max_words: int | None = None
    remote_url: str | None = None
    timeout: float = 30.0
    replay_file: str | None = None
    corpus: str | None = None
    queries: str | None = None
    candidates: str | None = None
    oracle: str | None = None
    oracle_overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for enum_type, value in ((RerankStrategy, self.strategy), (SamplingMode, self.sampling_mode)):
            try:
                enum_type(value)
            except ValueError:
                choices = [m.value for m in enum_type]
                raise ValidationError(f"{value!r} is not one of {choices}") from None
        if self.provider not in PROVIDERS:
            raise ValidationError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.gain not in ("exp", "linear"):
            raise ValidationError(f"gain must be 'exp' or 'linear', got {self.gain!r}")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        self.job()  # cross-field checks

    def job(self) -> RerankJob:
        strategy = RerankStrategy(self.strategy)
        sampler = None
        if strategy is RerankStrategy.PERM_SAMP:
            if self.k is None:
                raise ValidationError("perm_samp needs k (sampling steps)")
            sampler = SamplerConfig(self.k, SamplingMode(self.sampling_mode))
        elif self.k is not None:
            raise ValidationError(f"k only applies to perm_samp, not {strategy.value}")
        return RerankJob(
            strategy,
            sampler,
            WindowConfig(self.window, self.step_size, self.top_k),
            self.template_id,
            self.seed,
        )

    @property
    def resolved_remote_url(self) -> str | None:
        return self.remote_url or os.environ.get("DIFFURANK_REMOTE_URL")


def _flatten(raw: Mapping[str, Any], base: Path) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        if key == "data" and isinstance(value, Mapping):
            for k2, v2 in value.items():
                out[k2] = str((base / v2).resolve()) if isinstance(v2, str) else v2
        elif key == "oracle" and isinstance(value, Mapping):
            value = dict(value)
            path = value.pop("path", None)
            if path is not None:
                out["oracle"] = str((base / path).resolve())
            out["oracle_overrides"] = value
        else:
            out[key.replace("-", "_")] = value
    if "replay_file" in out and isinstance(out["replay_file"], str):
        out["replay_file"] = str((base / out["replay_file"]).resolve())
    return out


def load_config(path: str | os.PathLike | None, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    """Read ``path`` (if given) and apply non-None ``overrides`` on top."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        with p.open("rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ValidationError(f"{p}: {exc}") from None
        values = _flatten(raw, p.parent)
    known = {f.name for f in fields(EngineConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return EngineConfig(**values)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None

