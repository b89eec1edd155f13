"""Run manifests: resolved config, seeds, timings and hashes of every output."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .io import dump_json, sha256

MANIFEST_SUFFIX = ".manifest.json"


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seeds: dict
    version: str
    started: str
    finished: str = ""
    wall_seconds: float = 0.0
    out_option: str = ""
    out_value: str = ""
    outputs: dict[str, str] = field(default_factory=dict)

    def add_outputs(self, paths, root: Path) -> None:
        """Hash each file, keyed by its path relative to ``root``."""
        for p in paths:
            p = Path(p)
            self.outputs[str(p.resolve().relative_to(root.resolve()))] = sha256(p)

    def to_dict(self) -> dict:
        return {
            "command": self.command, "argv": self.argv, "config": self.config,
            "seeds": self.seeds, "version": self.version,
            "started": self.started, "finished": self.finished,
            "wall_seconds": self.wall_seconds,
            "out_option": self.out_option, "out_value": self.out_value,
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write(self, path: str | Path) -> None:
        dump_json(path, self.to_dict())

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**d)


def compare_outputs(expected: dict[str, str], root: Path) -> dict[str, bool]:
    """Per-file hash match of the files under ``root`` against a manifest."""
    result = {}
    for rel, digest in expected.items():
        p = root / rel
        result[rel] = p.is_file() and sha256(p) == digest
    return result
