#!/usr/bin/env python3
"""Run manifests: what produced an output file, and how to reproduce it."""

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance of one CLI command.

    The case hash, seed, scheme and config snapshot determine the ledger
    bit for bit; timestamps and platform are informational.
    """

    command: str
    case_path: str = ""
    case_sha256: str = ""
    seed: Optional[int] = None
    scheme: Optional[list[int]] = None
    config: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    started: str = field(default_factory=_now)
    finished: str = ""

    @classmethod
    def for_case(cls, command: str, case_path: Optional[Path], **kwargs) -> "RunManifest":
        if case_path is None:
            return cls(command=command, **kwargs)
        case_path = Path(case_path)
        return cls(command=command, case_path=str(case_path), case_sha256=sha256_file(case_path), **kwargs)

    def add_output(self, path: Path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, directory: Path, name: str = MANIFEST_NAME) -> Path:
        """Stamp the finish time and write the manifest into ``directory``."""
        self.finished = _now()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / name
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path


def load_manifest(path: Path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    known = RunManifest.__dataclass_fields__
    return RunManifest(**{key: value for key, value in data.items() if key in known})
