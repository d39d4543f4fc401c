"""Pipeline configuration (JSON file, validated on load; unknown keys are errors)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .embedding import TrainConfig
from .evolution import GaConfig
from .scoring import ScoreWeights


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WeightsConfig(_Strict):
    avg: float = Field(0.75, ge=0)
    std: float = Field(0.10, ge=0)
    neg_rate: float = Field(0.15, ge=0)

    def build(self) -> ScoreWeights:
        return ScoreWeights(self.avg, self.std, self.neg_rate)


class SynergyConfig(_Strict):
    search_budget: int = Field(500, ge=1)
    beam_width: int = Field(8, ge=1)
    branch: int = Field(3, ge=1)
    epsilon: float = Field(0.2, ge=0, le=1)


class CandidatesConfig(_Strict):
    k_top: int = Field(100, ge=1)
    histogram_bins: int = Field(20, ge=1)


class EmbeddingConfig(_Strict):
    hidden: int = Field(64, ge=1)
    embed_dim: int = Field(32, ge=1)
    proj_dim: int = Field(16, ge=1)
    lr: float = Field(1e-2, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(100, ge=0)
    tau: float = Field(1.0, gt=0)
    variants: int = Field(1, ge=1)
    proj_init_scale: float = Field(0.1, gt=0)

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(**self.model_dump(), seed=seed)


class ClusteringConfig(_Strict):
    k: int = Field(100, ge=1)
    min_cluster_size: int = Field(5, ge=1)
    restarts: int = Field(10, ge=1)
    max_iter: int = Field(300, ge=1)
    sweep_min: int = Field(2, ge=2)
    sweep_max: int = Field(15, ge=2)


class EvolutionConfig(_Strict):
    population_size: int = Field(25, ge=4)
    generations: int = Field(50, ge=0)
    seed_fraction: float = Field(0.5, ge=0, le=1)
    crossover_rate: float = Field(0.9, ge=0, le=1)
    mutation_rate: float = Field(0.2, ge=0, le=1)
    elitism: int = Field(2, ge=0)
    tournament: int = Field(3, ge=1)
    init_min_len: int = Field(1, ge=1)
    init_max_len: int = Field(20, ge=1)

    def build(self, seed: int, max_len: int) -> GaConfig:
        return GaConfig(**self.model_dump(), max_len=max_len, rng_seed=seed)


class DeploymentConfig(_Strict):
    refine: list[str] = Field(default_factory=list)
    local_ga_population: int = Field(16, ge=4)
    local_ga_generations: int = Field(10, ge=0)


class PipelineConfig(_Strict):
    backend: Literal["sim", "llvm"] = "sim"
    fixture: str = "sim12"
    train_manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    passes_file: Optional[str] = None
    opt_bin: Optional[str] = None
    timeout: float = Field(60.0, gt=0)
    max_len: int = Field(60, ge=1)
    seed: int = Field(7, ge=0)
    jobs: int = Field(1, ge=1)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    synergy: SynergyConfig = Field(default_factory=SynergyConfig)
    candidates: CandidatesConfig = Field(default_factory=CandidatesConfig)
    embedding: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    clustering: ClusteringConfig = Field(default_factory=ClusteringConfig)
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    deployment: DeploymentConfig = Field(default_factory=DeploymentConfig)

    def with_overrides(self, **kw) -> "PipelineConfig":
        """Copy with top-level overrides (``None`` values are ignored), revalidated."""
        data = self.model_dump()
        data.update({k: v for k, v in kw.items() if v is not None})
        return parse_config(data)


def parse_config(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first["loc"])
        raise ConfigError(f"config error at {loc}: {first['msg']}") from exc
    if base_dir is not None:
        # relative paths in a config file are resolved against the file's directory
        for key in ("train_manifest", "test_manifest", "passes_file"):
            val = getattr(cfg, key)
            if val and not Path(val).is_absolute():
                setattr(cfg, key, str(base_dir / val))
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return parse_config(data, path.parent)
