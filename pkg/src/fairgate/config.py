"""Service configuration: data directory, thresholds, windows, flag rules.

Config is a single JSON document; every field has a default so an empty file
(or none at all) yields a working local service.  FAIRGATE_DATA_DIR and
FAIRGATE_LISTEN override the data directory and listen address.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .drift import DriftThresholds
from .errors import ConfigError
from .hitl import DEFAULT_FLAG_DELTA, FlagRule
from .metrics import DEFAULT_MIN_COUNT, DEFAULT_WINDOW_SIZE
from .rollout import DEFAULT_STAGE_FRACTIONS


def default_flag_rules() -> list[FlagRule]:
    return [FlagRule(metric="f1", delta=DEFAULT_FLAG_DELTA)]


@dataclass
class ServiceConfig:
    data_dir: Path = Path("data")
    host: str = "127.0.0.1"
    port: int = 8800
    window_size: int = DEFAULT_WINDOW_SIZE
    min_count: int = DEFAULT_MIN_COUNT
    thresholds: DriftThresholds = field(default_factory=DriftThresholds)
    default_stage_fractions: tuple[float, ...] = DEFAULT_STAGE_FRACTIONS
    flag_rules: list[FlagRule] = field(default_factory=default_flag_rules)
    cors_allow_origins: list[str] = field(default_factory=list)
    bearer_token: Optional[str] = None
    max_pending_ingest: int = 64
    scenario_dir: Optional[Path] = None

    def validate(self) -> "ServiceConfig":
        if self.window_size < 1:
            raise ConfigError(f"window_size must be >= 1, got {self.window_size}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        if self.max_pending_ingest < 1:
            raise ConfigError("max_pending_ingest must be >= 1")
        if not (0 <= self.thresholds.psi_watch <= self.thresholds.psi_alert):
            raise ConfigError("psi thresholds must satisfy 0 <= watch <= alert")
        if not (0 <= self.thresholds.ks_watch <= self.thresholds.ks_alert <= 1):
            raise ConfigError("ks thresholds must satisfy 0 <= watch <= alert <= 1")
        fractions = self.default_stage_fractions
        if not fractions or fractions[-1] != 1.0 or any(
            b <= a for a, b in zip(fractions, fractions[1:])
        ):
            raise ConfigError(
                f"default_stage_fractions must increase strictly to 1.0, got {fractions}"
            )
        return self

    def to_dict(self) -> dict:
        return {
            "data_dir": str(self.data_dir),
            "host": self.host,
            "port": self.port,
            "window_size": self.window_size,
            "min_count": self.min_count,
            "thresholds": self.thresholds.to_dict(),
            "default_stage_fractions": list(self.default_stage_fractions),
            "flag_rules": [r.to_dict() for r in self.flag_rules],
            "cors_allow_origins": list(self.cors_allow_origins),
            "bearer_token": self.bearer_token,
            "max_pending_ingest": self.max_pending_ingest,
            "scenario_dir": str(self.scenario_dir) if self.scenario_dir else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ServiceConfig":
        base = cls()
        try:
            thresholds = DriftThresholds(
                **{**base.thresholds.to_dict(), **dict(d.get("thresholds") or {})}
            )
            config = cls(
                data_dir=Path(str(d.get("data_dir", base.data_dir))),
                host=str(d.get("host", base.host)),
                port=int(d.get("port", base.port)),  # type: ignore[arg-type]
                window_size=int(d.get("window_size", base.window_size)),  # type: ignore[arg-type]
                min_count=int(d.get("min_count", base.min_count)),  # type: ignore[arg-type]
                thresholds=thresholds,
                default_stage_fractions=tuple(
                    float(f) for f in (d.get("default_stage_fractions") or DEFAULT_STAGE_FRACTIONS)
                ),
                flag_rules=(
                    [FlagRule.from_dict(r) for r in d["flag_rules"]]  # type: ignore[union-attr]
                    if d.get("flag_rules") is not None
                    else default_flag_rules()
                ),
                cors_allow_origins=[str(o) for o in (d.get("cors_allow_origins") or [])],
                bearer_token=(
                    str(d["bearer_token"]) if d.get("bearer_token") is not None else None
                ),
                max_pending_ingest=int(d.get("max_pending_ingest", base.max_pending_ingest)),  # type: ignore[arg-type]
                scenario_dir=(
                    Path(str(d["scenario_dir"])) if d.get("scenario_dir") else None
                ),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return config._apply_env().validate()

    def _apply_env(self) -> "ServiceConfig":
        data_dir = os.environ.get("FAIRGATE_DATA_DIR")
        if data_dir:
            self.data_dir = Path(data_dir)
        listen = os.environ.get("FAIRGATE_LISTEN")
        if listen:
            host, _, port = listen.rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"FAIRGATE_LISTEN must be host:port, got {listen!r}")
            self.host, self.port = host, int(port)
        return self

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "ServiceConfig":
        if path is None:
            return cls.from_dict({})
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(raw)
