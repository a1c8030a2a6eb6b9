"""Append-only JSON-lines persistence with crash-tolerant recovery.

A process killed mid-append leaves at most one torn final line; recovery
keeps every complete line and reports the torn one as a CorruptLog finding.
A malformed line anywhere else means real corruption and raises.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable

from .errors import CorruptLog


def append_jsonl(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
        fh.flush()


def read_jsonl(path: Path) -> tuple[list[dict], list[CorruptLog]]:
    """Parse a JSON-lines file, tolerating only a torn final line."""
    if not path.exists():
        return [], []
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    payloads: list[dict] = []
    issues: list[CorruptLog] = []
    for number, line in enumerate(lines, start=1):
        try:
            payload = json.loads(line)
            if not isinstance(payload, dict):
                raise ValueError("line is not a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            issue = CorruptLog(
                f"{path}:{number}: {exc}", path=str(path), line_number=number
            )
            if number == len(lines):
                issues.append(issue)
                break
            raise issue from None
        payloads.append(payload)
    return payloads, issues


def read_lines(path: Path) -> list[str]:
    if not path.exists():
        return []
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_json_atomic(path: Path, payload: dict) -> None:
    """Whole-document write via tmp + rename so readers never see a torn file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    os.replace(tmp, path)


def rewrite_jsonl(path: Path, payloads: Iterable[dict]) -> None:
    """Atomic full rewrite of a log (used when a simulated run is registered)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for payload in payloads:
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
    os.replace(tmp, path)
