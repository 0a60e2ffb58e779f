"""Pipeline configuration, its content hash, and artifact sidecars."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import AnionForgeError, ConfigMismatchError

META_SUFFIX = ".meta.json"

# settings that change what an artifact contains; paths and switches such as --force do not
HASHED_FIELDS = (
    "seed", "beam", "threshold", "permutations", "alpha", "contractions", "format",
    "epochs", "learning_rate", "smoothing", "sample_size", "split",
    "external_scorer", "external_generator", "synthetic",
)


@dataclass
class PipelineConfig:
    kg: str | None = None
    anion: str | None = None
    cues: str | None = None
    labels: str | None = None
    out: str | None = None
    seed: int | None = None
    beam: int = 10
    threshold: float = 0.7
    permutations: int = 10_000
    alpha: float = 0.05
    format: str = "jsonl"
    contractions: bool = False
    epochs: int = 5
    learning_rate: float = 0.5
    smoothing: float = 0.1
    sample_size: int | None = None
    split: str = "test"
    external_scorer: str | None = None
    external_generator: str | None = None
    synthetic: dict | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha {self.alpha} outside (0, 1)")
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if self.format not in ("jsonl", "tsv"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.split not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {self.split!r}")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise AnionForgeError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise AnionForgeError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        known = {k: v for k, v in data.items() if k in names}
        extra = {k: v for k, v in data.items() if k not in names}
        return cls(**known, extra=extra)

    def override(self, **flags: Any) -> "PipelineConfig":
        """Copy with every non-``None`` flag applied."""
        changes = {k: v for k, v in flags.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def hashed(self) -> dict:
        return {k: getattr(self, k) for k in HASHED_FIELDS}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def meta_path(artifact) -> Path:
    return Path(str(artifact) + META_SUFFIX)


def write_meta(artifact, config: PipelineConfig, stage: str, **details) -> None:
    body = {"config_hash": config.hash, "stage": stage, **details}
    meta_path(artifact).write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_meta(artifact) -> dict | None:
    p = meta_path(artifact)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))


def check_hashes(config: PipelineConfig, artifacts, force: bool = False) -> list[str]:
    """Compare the sidecar hash of each artifact with ``config``.

    Returns descriptions of mismatches; raises :class:`ConfigMismatchError`
    unless ``force``. Artifacts without a sidecar are not checked.
    """
    problems = []
    for a in artifacts:
        meta = read_meta(a)
        if meta is not None and meta.get("config_hash") != config.hash:
            problems.append(f"{a}: produced with config {meta.get('config_hash')}, current is {config.hash}")
    if problems and not force:
        raise ConfigMismatchError("; ".join(problems) + " (use --force to evaluate anyway)")
    return problems
