"""Run configuration, key=value config files and the output fingerprint."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, fields
from pathlib import Path

# Paths are left out of the fingerprint so identical analyses written to
# different directories stay comparable.
PATH_FIELDS = {"metadata", "out"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    epsilon_good: float = 0.05
    relative_good: bool = False
    spearman_floor: float = 0.3
    duplicate_rho: float = 0.95
    boundary_threshold: float = 0.7
    restarts: int = 30
    candidate_cap: int = 1000
    k_clusters: int | None = None
    n_trees: int = 100
    n_folds: int = 5
    alpha_radius: float | None = None
    epsilon_scale: str = "area"
    metadata: str | None = None
    out: str = "isa_out"

    def __post_init__(self):
        checks = [
            (self.epsilon_good >= 0, "epsilon_good must be >= 0"),
            (0 <= self.spearman_floor <= 1, "spearman_floor must be in [0, 1]"),
            (0 < self.duplicate_rho <= 1, "duplicate_rho must be in (0, 1]"),
            (0 < self.boundary_threshold <= 1, "boundary_threshold must be in (0, 1]"),
            (self.restarts >= 1, "restarts must be >= 1"),
            (self.candidate_cap >= 1, "candidate_cap must be >= 1"),
            (self.k_clusters is None or self.k_clusters >= 2, "k_clusters must be >= 2"),
            (self.n_trees >= 1, "n_trees must be >= 1"),
            (self.n_folds >= 2, "n_folds must be >= 2"),
            (self.alpha_radius is None or self.alpha_radius > 0, "alpha_radius must be > 0"),
            (self.epsilon_scale in ("area", "length"), "epsilon_scale must be 'area' or 'length'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def analysis_values(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in PATH_FIELDS}

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.analysis_values(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, raw):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
        if raw.lower() in ("", "none", "null") and "None" in str(ftype):
            return None
    try:
        if ftype.startswith("bool"):
            if isinstance(raw, bool):
                return raw
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return str(raw)


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment, dashes in keys map to underscores."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def build_config(file_values=None, **overrides) -> RunConfig:
    values = dict(file_values or {})
    for k, v in overrides.items():
        if v is not None:
            values[k] = _coerce(k, v) if isinstance(v, str) else v
    return RunConfig(**values)


_FP_RE = re.compile(r"config_fingerprint\"?\s*[=:]\s*\"?([0-9a-f]{16})")


def read_fingerprint(path) -> str | None:
    """Fingerprint stamped into an output file, or None if absent."""
    with Path(path).open(encoding="utf-8") as fh:
        head = fh.read(4096)
    m = _FP_RE.search(head)
    return m.group(1) if m else None
