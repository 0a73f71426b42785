"""Result persistence: atomic CSV/JSON writers and the experiment manifest."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

__all__ = [
    "CheckResult",
    "ExperimentManifest",
    "atomic_write_bytes",
    "write_csv",
    "write_json",
]


def atomic_write_bytes(path: str, data: bytes) -> str:
    """Write via a temporary file and rename; returns the content hash."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return hashlib.sha256(data).hexdigest()


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_csv(path: str, header: list[str], rows: list) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    return atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_json(path: str, payload) -> str:
    data = json.dumps(payload, indent=2, sort_keys=True, default=str).encode("utf-8")
    return atomic_write_bytes(path, data)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: object = None
    tolerance: object = None
    details: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" value={self.value}" if self.value is not None else ""
        tol = f" tolerance={self.tolerance}" if self.tolerance is not None else ""
        return f"[{status}] {self.name}{extra}{tol}  {self.details}".rstrip()


@dataclass
class ExperimentManifest:
    command: str
    config: dict
    config_hash: str
    code_version: str
    started: float = field(default_factory=time.time)
    wall_clock_s: float = 0.0
    truncation: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def add_warning(self, msg: str) -> None:
        if msg not in self.warnings:
            self.warnings.append(msg)

    def add_check(self, check: CheckResult) -> None:
        self.checks.append(asdict(check))

    def register_output(self, path: str, sha256: str) -> None:
        self.outputs.append({"path": path, "sha256": sha256})

    def finalize(self) -> None:
        self.wall_clock_s = time.time() - self.started

    def save(self, path: str) -> str:
        self.finalize()
        payload = {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "wall_clock_s": self.wall_clock_s,
            "truncation": self.truncation,
            "warnings": self.warnings,
            "checks": self.checks,
            "outputs": self.outputs,
        }
        return write_json(path, payload)

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.checks)
