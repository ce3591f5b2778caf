"""Pipeline configuration: defaults, config-file parsing, flag overrides.

Config files are flat key = value text; '#' starts a comment. Every tunable
(thresholds, label lists, sampling sizes) lives here so nothing is
hard-coded in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .embedding import DEFAULT_FILTERED_LABELS, DEFAULT_LABELS
from .evaluation import DEFAULT_GT_DISTANCE, DEFAULT_RECALL_NS
from .graph import DEFAULT_COSINE_THRESHOLD, DEFAULT_RERANK_M, DEFAULT_TAU
from .sampling import DEFAULT_K, DEFAULT_MIN_CLUSTER_SIZE
from .vocabulary import DEFAULT_MAX_ITERS, DEFAULT_TOL, DEFAULT_V, NORM_MODES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    labels: tuple[str, ...] = DEFAULT_LABELS
    filtered_labels: tuple[str, ...] = tuple(sorted(DEFAULT_FILTERED_LABELS))
    filtering: bool = True
    k: int = DEFAULT_K
    v: int = DEFAULT_V
    kmeans_max_iters: int = DEFAULT_MAX_ITERS
    kmeans_tol: float = DEFAULT_TOL
    min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE
    norm_mode: str = "l1"
    cosine_threshold: float = DEFAULT_COSINE_THRESHOLD
    tau: float = DEFAULT_TAU
    seed: int = 0
    gt_distance: float = DEFAULT_GT_DISTANCE
    recall_ns: tuple[int, ...] = DEFAULT_RECALL_NS
    rerank_m: int = DEFAULT_RERANK_M
    workers: int = 1

    def __post_init__(self):
        if len(self.labels) < 2 or len(set(self.labels)) != len(self.labels):
            raise ConfigError("labels must be at least 2 unique strings")
        unknown = set(self.filtered_labels) - set(self.labels)
        if unknown:
            raise ConfigError(f"filtered labels not in label list: {sorted(unknown)}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.v < 2:
            raise ConfigError(f"v must be >= 2, got {self.v}")
        if self.kmeans_max_iters < 1:
            raise ConfigError(f"kmeans_max_iters must be >= 1, got {self.kmeans_max_iters}")
        if self.kmeans_tol < 0:
            raise ConfigError(f"kmeans_tol must be >= 0, got {self.kmeans_tol}")
        if self.min_cluster_size < 1:
            raise ConfigError(f"min_cluster_size must be >= 1, got {self.min_cluster_size}")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if not (0 < self.cosine_threshold <= 1):
            raise ConfigError(f"cosine_threshold must lie in (0, 1], got {self.cosine_threshold}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if self.gt_distance <= 0:
            raise ConfigError(f"gt_distance must be positive, got {self.gt_distance}")
        if not self.recall_ns or any(n < 1 for n in self.recall_ns):
            raise ConfigError(f"recall_ns must be positive, got {self.recall_ns}")
        if self.rerank_m < 1:
            raise ConfigError(f"rerank_m must be >= 1, got {self.rerank_m}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def effective_filtered_labels(self) -> frozenset[str]:
        return frozenset(self.filtered_labels) if self.filtering else frozenset()


_LIST_FIELDS = {"labels", "filtered_labels", "recall_ns"}
_BOOL_FIELDS = {"filtering"}


def _parse_value(name: str, raw: str, target_type: type):
    raw = raw.strip()
    if name in _LIST_FIELDS:
        items = [part.strip() for part in raw.split(",") if part.strip()]
        if name == "recall_ns":
            try:
                return tuple(int(i) for i in items)
            except ValueError:
                raise ConfigError(f"{name}: expected comma-separated integers, got {raw!r}") from None
        return tuple(items)
    if name in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {target_type.__name__}, got {raw!r}") from None
    return raw


def parse_config_text(text: str, base: PipelineConfig | None = None, source: str = "<config>") -> PipelineConfig:
    base = base or PipelineConfig()
    known = {f.name: f for f in fields(PipelineConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        name, raw = (part.strip() for part in stripped.split("=", 1))
        if name not in known:
            raise ConfigError(f"{source}:{lineno}: unknown option {name!r}")
        target_type = type(getattr(base, name))
        updates[name] = _parse_value(name, raw, target_type)
    try:
        return replace(base, **updates)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), base=base, source=str(path))
