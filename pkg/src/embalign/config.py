"""Run configuration: JSON file + CLI overrides -> one explicit RunConfig.

Defaults follow the pinned method constants: softmax temperature 0.02,
false-negative margin beta 0.01, k=8 training negatives, pool size 50,
mined floor 10, cycle interval 5, rerank depth 10. The similarity ceiling
delta has *no* default: every config file must state it, which keeps runs
from silently diverging on the one constant the method leaves open.

fingerprint(config) is the sha256 of the canonical config JSON (seed
included); artifacts carry it and stages refuse mismatched inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .aligner import AlignConfig
from .datagen import LatentCorpusSpec
from .miner import MinerConfig
from .reranker import RerankTrainConfig

JUDGE_ENDPOINT_ENV = "EMBALIGN_JUDGE_URL"


class ConfigError(Exception):
    """Missing, malformed, or contradictory configuration."""


@dataclass(frozen=True)
class EncoderConfig:
    hidden_dim: int = 64
    embed_dim: int = 32


@dataclass(frozen=True)
class JudgeConfig:
    kind: str = "oracle"  # "oracle" | "remote"
    noise: float = 0.0
    retries: int = 3
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("oracle", "remote"):
            raise ConfigError(f"judge kind must be 'oracle' or 'remote', got {self.kind!r}")


@dataclass(frozen=True)
class BaselineConfig:
    """Warm-up of the frozen pool-construction encoder (random negatives only)."""

    warmup_steps: int = 300
    lr: float = 0.01
    batch_size: int = 32
    n_random_negatives: int = 8


@dataclass(frozen=True)
class EvalConfig:
    eval_fraction: float = 0.2
    recall_ks: tuple[int, ...] = (1, 5, 10)
    rerank_depth: int = 10

    def __post_init__(self):
        if not (0.0 < self.eval_fraction < 1.0):
            raise ConfigError(f"eval_fraction must lie in (0,1), got {self.eval_fraction}")
        if self.rerank_depth < 1:
            raise ConfigError("rerank_depth must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    data: LatentCorpusSpec
    miner: MinerConfig
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    rerank: RerankTrainConfig = field(default_factory=RerankTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    threads: int = 1

    def to_json(self) -> dict:
        payload = asdict(self)
        payload["eval"]["recall_ks"] = list(self.eval.recall_ks)
        return payload


def fingerprint(config: RunConfig) -> str:
    """sha256 of the canonical config JSON.

    threads is excluded: it may not change any numeric result, so two runs
    differing only in thread count must produce byte-identical reports.
    """
    payload = config.to_json()
    payload.pop("threads", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_SECTIONS = {
    "data": LatentCorpusSpec,
    "encoder": EncoderConfig,
    "judge": JudgeConfig,
    "baseline": BaselineConfig,
    "miner": MinerConfig,
    "align": AlignConfig,
    "rerank": RerankTrainConfig,
    "eval": EvalConfig,
}


def _build_section(name: str, cls, payload: dict):
    known = cls.__dataclass_fields__
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}") from exc


def parse_config(payload: dict, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON object plus flat CLI overrides.

    Override keys: seed, threads, tau, k_negatives, delta, beta,
    rerank_depth. Values of None are ignored.
    """
    payload = json.loads(json.dumps(payload))  # defensive deep copy
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    if "seed" in overrides:
        payload["seed"] = int(overrides["seed"])
    if "threads" in overrides:
        payload["threads"] = int(overrides["threads"])
    section_overrides = {
        "tau": ("align", "tau", float),
        "k_negatives": ("align", "k_negatives", int),
        "delta": ("miner", "delta", float),
        "beta": ("miner", "beta", float),
        "rerank_depth": ("eval", "rerank_depth", float),
    }
    for key, (section, fieldname, cast) in section_overrides.items():
        if key in overrides:
            payload.setdefault(section, {})[fieldname] = cast(overrides[key])
    if "rerank_depth" in (payload.get("eval") or {}):
        payload["eval"]["rerank_depth"] = int(payload["eval"]["rerank_depth"])

    if "seed" not in payload:
        raise ConfigError("config must state a seed")
    if "data" not in payload:
        raise ConfigError("config must have a data section")
    if "miner" not in payload or "delta" not in payload["miner"]:
        raise ConfigError("config must state miner.delta explicitly (no default for the similarity ceiling)")

    data_payload = dict(payload["data"])
    data_payload.setdefault("seed", int(payload["seed"]))
    if "recall_ks" in (payload.get("eval") or {}):
        payload["eval"]["recall_ks"] = tuple(int(k) for k in payload["eval"]["recall_ks"])

    sections = {}
    for name, cls in _SECTIONS.items():
        body = data_payload if name == "data" else payload.get(name, {})
        sections[name] = _build_section(name, cls, dict(body))

    known_top = set(_SECTIONS) | {"seed", "threads"}
    unknown_top = set(payload) - known_top
    if unknown_top:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown_top)}")

    cfg = RunConfig(
        seed=int(payload["seed"]),
        threads=int(payload.get("threads", 1)),
        **sections,
    )
    if cfg.align.k_negatives > cfg.miner.mined_size:
        raise ConfigError(
            f"align.k_negatives={cfg.align.k_negatives} exceeds miner.mined_size={cfg.miner.mined_size}"
        )
    if cfg.rerank.x_list > cfg.miner.mined_size:
        raise ConfigError(
            f"rerank.x_list={cfg.rerank.x_list} exceeds miner.mined_size={cfg.miner.mined_size}"
        )
    if cfg.data.raw_dim < 1:
        raise ConfigError("data.raw_dim must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return parse_config(payload, overrides)
