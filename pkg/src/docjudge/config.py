from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .scoring import DimensionBudget, ScoringConfig, SeverityWeights
from .verdicts import Dimension, Severity

API_KEY_ENV = "DOCJUDGE_API_KEY"


class Ablation(str, enum.Enum):
    FULL = "full"
    NO_DEDUP = "no_dedup"
    SINGLE_JUDGE = "single_judge"
    ACCURACY_ONLY = "accuracy_only"


@dataclass
class RunConfig:
    model_id: str = "gemini-2.5-pro"
    backend: str = "scripted"  # "live" | "scripted"
    endpoint: str | None = None
    api_key: str | None = field(default=None, repr=False)
    fixture_dir: str | None = None
    weights: SeverityWeights = field(default_factory=SeverityWeights)
    budget: DimensionBudget = field(default_factory=DimensionBudget)
    checkpoint_severity: Severity = Severity.MAJOR
    temperature: float = 0.0
    tie_threshold: float = 0.05
    spa_permutations: int = 1000
    spa_seed: int = 0
    ablation: Ablation = Ablation.FULL
    max_inflight: int = 4
    parse_retries: int = 2
    transport_retries: int = 3
    output_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = SeverityWeights(**self.weights)
        if isinstance(self.budget, dict):
            self.budget = DimensionBudget(**self.budget)
        self.checkpoint_severity = Severity(self.checkpoint_severity)
        self.ablation = Ablation(self.ablation)
        if self.backend not in {"live", "scripted"}:
            raise ValueError(f"backend must be 'live' or 'scripted', not {self.backend!r}")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")

    @classmethod
    def from_dict(cls, data: dict | None) -> RunConfig:
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path | None) -> RunConfig:
        data = {}
        if path is not None:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
            base = Path(path).parent
            if data.get("fixture_dir") and not Path(data["fixture_dir"]).is_absolute():
                data["fixture_dir"] = str(base / data["fixture_dir"])
        cfg = cls.from_dict(data)
        if os.environ.get(API_KEY_ENV):
            cfg.api_key = os.environ[API_KEY_ENV]
        return cfg

    def scoring(self) -> ScoringConfig:
        dims = ((Dimension.ACCURACY,) if self.ablation is Ablation.ACCURACY_ONLY
                else (Dimension.ACCURACY, Dimension.FLUENCY, Dimension.APPROPRIATENESS))
        return ScoringConfig(self.weights, self.budget, self.checkpoint_severity, dims)

    def echo(self) -> dict:
        """Config as written into reports; credentials and local paths excluded."""
        d = asdict(self)
        for key in ("api_key", "fixture_dir", "output_dir"):
            d.pop(key)
        d["checkpoint_severity"] = self.checkpoint_severity.value
        d["ablation"] = self.ablation.value
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
