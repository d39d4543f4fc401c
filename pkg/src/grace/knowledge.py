"""Single-file JSON knowledge base holding every stage's artifacts."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, ValidationError

VERSION = "grace-kb/1"
STAGES = ("synergy", "candidates", "embed", "cluster", "evolve")
SECTION = {"synergy": "synergy", "candidates": "candidates", "embed": "embedding",
           "cluster": "clustering", "evolve": "coreset"}
REQUIRES = {"synergy": (), "candidates": ("synergy",), "embed": (),
            "cluster": ("embedding",), "evolve": ("candidates", "clustering")}


class KnowledgeBaseError(ValueError):
    pass


class MissingArtifact(KnowledgeBaseError):
    pass


class _M(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _Edge(_M):
    a: str
    b: str
    support: int


class _Synergy(_M):
    nodes: list[str]
    edges: list[_Edge]
    self_loops: list[str]
    per_program: dict[str, list[list[str]]]


class _Stats(_M):
    avg: float
    std: float
    neg_rate: float


class _Ranked(_M):
    sequence: list[str]
    stats: _Stats
    score: float


class _Candidates(_M):
    high_performing: dict[str, list[str]]
    ranked: list[_Ranked]
    k_top: int
    c_seq: list[list[str]]
    pool: list[str]


class _Layer(_M):
    weight: list[list[float]]
    bias: list[float]
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class _Params(_M):
    encoder: list[dict[str, Any]]
    projection: list[dict[str, Any]]
    mean: list[float]
    scale: list[float]


class _Embedding(_M):
    feature_names: list[str]
    params: _Params
    epoch_losses: list[float]
    train_config: dict[str, Any]


class _Clustering(_M):
    k: int
    k_requested: int
    centroids: list[list[float]]
    assignment: dict[str, int]
    objective: float
    embeddings: dict[str, list[float]]


class _Entry(_M):
    cluster_index: int
    sequence: list[str]
    fitness: float
    stats: _Stats
    members: list[str]


class _Coreset(_M):
    entries: list[_Entry]
    ga_config: dict[str, Any]


class _KB(_M):
    version: str
    backend: dict[str, Any]
    config: dict[str, Any]
    provenance: list[dict[str, Any]]
    synergy: Optional[_Synergy] = None
    candidates: Optional[_Candidates] = None
    embedding: Optional[_Embedding] = None
    clustering: Optional[_Clustering] = None
    coreset: Optional[_Coreset] = None


def _loc(err: dict) -> str:
    out = ""
    for part in err["loc"]:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


class KnowledgeBase:
    """Thin wrapper over the JSON document; the dict is the canonical form."""

    def __init__(self, data: dict | None = None):
        self.data = data if data is not None else {
            "version": VERSION, "backend": {}, "config": {}, "provenance": []}

    def __contains__(self, section: str) -> bool:
        return self.data.get(section) is not None

    def __getitem__(self, section: str) -> dict:
        if section not in self:
            raise MissingArtifact(f"knowledge base has no '{section}' artifact")
        return self.data[section]

    def set(self, section: str, value: dict):
        self.data[section] = value

    def drop(self, section: str):
        self.data.pop(section, None)

    def require(self, stage: str):
        missing = [sec for sec in REQUIRES[stage] if sec not in self]
        if missing:
            names = ", ".join(f"'{m}'" for m in missing)
            raise MissingArtifact(f"stage '{stage}' needs missing artifact(s) {names}; run the producing stage first")

    def dumps(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=True) + "\n"

    def save(self, path: str | Path):
        """Atomic write: temp file in the same directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            os.chmod(tmp, 0o644)
            with os.fdopen(fd, "w") as fh:
                fh.write(self.dumps())
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise KnowledgeBaseError(f"{path}: not valid JSON ({exc})") from exc
        kb = cls(data)
        kb.validate()
        return kb

    @classmethod
    def load_or_new(cls, path: str | Path) -> "KnowledgeBase":
        return cls.load(path) if Path(path).exists() else cls()

    def validate(self):
        try:
            _KB.model_validate(self.data)
        except ValidationError as exc:
            err = exc.errors()[0]
            raise KnowledgeBaseError(f"{_loc(err)}: {err['msg']}") from exc
        d = self.data
        if d["version"] != VERSION:
            raise KnowledgeBaseError(f"version: unsupported '{d['version']}'")
        universe = set(d["backend"].get("passes", []))
        if "candidates" in self and universe:
            for i, p in enumerate(d["candidates"]["pool"]):
                if p not in universe:
                    raise KnowledgeBaseError(f"candidates.pool[{i}]: '{p}' is not in the pass universe")
        if "synergy" in self:
            nodes = set(d["synergy"]["nodes"])
            for i, e in enumerate(d["synergy"]["edges"]):
                if e["support"] < 1:
                    raise KnowledgeBaseError(f"synergy.edges[{i}].support: must be >= 1")
                if e["a"] not in nodes or e["b"] not in nodes:
                    raise KnowledgeBaseError(f"synergy.edges[{i}]: endpoint missing from nodes")
        if "embedding" in self:
            emb = d["embedding"]
            dim = len(emb["feature_names"])
            if len(emb["params"]["mean"]) != dim or emb["params"]["encoder"][0]["in"] != dim:
                raise KnowledgeBaseError("embedding.params: encoder input dim does not match feature dim")
        if "clustering" in self:
            cl = d["clustering"]
            if len(cl["centroids"]) != cl["k"]:
                raise KnowledgeBaseError("clustering.centroids: expected k centroids")
        if "coreset" in self and "clustering" in self:
            if len(d["coreset"]["entries"]) != d["clustering"]["k"]:
                raise KnowledgeBaseError("coreset.entries: length differs from clustering.k")
