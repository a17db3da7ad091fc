"""Meta-data model: instances, feature matrix, performance matrix and goodness labels."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_PREFIX = "feature_"
ALGO_PREFIX = "algo_"
TIE_TOL = 1e-9


class MetadataError(ValueError):
    """Raised when a metadata file or matrix violates the data model."""


@dataclass(frozen=True)
class Metadata:
    instance_ids: list[str]
    feature_names: list[str]
    technique_names: list[str]
    F: np.ndarray  # features x instances
    Y: np.ndarray  # techniques x instances
    source_labels: list[str] | None = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if F.ndim != 2 or Y.ndim != 2:
            raise MetadataError("F and Y must be 2-D")
        n_inst = len(self.instance_ids)
        if F.shape != (len(self.feature_names), n_inst):
            raise MetadataError(f"F has shape {F.shape}, expected {(len(self.feature_names), n_inst)}")
        if Y.shape != (len(self.technique_names), n_inst):
            raise MetadataError(f"Y has shape {Y.shape}, expected {(len(self.technique_names), n_inst)}")
        if not self.feature_names:
            raise MetadataError("no feature columns")
        if not self.technique_names:
            raise MetadataError("no technique columns")
        for label, names in (("instance id", self.instance_ids),
                             ("feature name", self.feature_names),
                             ("technique name", self.technique_names)):
            dup = _first_duplicate(names)
            if dup is not None:
                raise MetadataError(f"duplicate {label}: {dup!r}")
        if not np.all(np.isfinite(F)):
            raise MetadataError("F contains non-finite values")
        if not np.all(np.isfinite(Y)) or np.any(Y < 0) or np.any(Y > 1):
            raise MetadataError("Y entries must lie in [0, 1]")
        if self.source_labels is not None and len(self.source_labels) != n_inst:
            raise MetadataError("source_labels length differs from instance count")
        F.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Y", Y)

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    def feature(self, name: str) -> np.ndarray:
        try:
            return self.F[self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown feature {name!r}; valid: {', '.join(self.feature_names)}") from None

    def performance(self, name: str) -> np.ndarray:
        try:
            return self.Y[self.technique_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown technique {name!r}; valid: {', '.join(self.technique_names)}") from None

    def replace(self, **changes) -> "Metadata":
        fields = dict(instance_ids=self.instance_ids, feature_names=self.feature_names,
                      technique_names=self.technique_names, F=self.F, Y=self.Y,
                      source_labels=self.source_labels)
        fields.update(changes)
        return Metadata(**fields)


@dataclass(frozen=True)
class GoodnessMatrix:
    good: np.ndarray  # techniques x instances, bool
    best: np.ndarray
    epsilon_good: float = 0.05
    relative: bool = False
    technique_names: list[str] = field(default_factory=list)

    def rates(self) -> np.ndarray:
        """Fraction of instances on which each technique is good."""
        return self.good.mean(axis=1)


def _first_duplicate(names):
    seen = set()
    for n in names:
        if n in seen:
            return n
        seen.add(n)
    return None


def _strip_comments(lines):
    for line in lines:
        if not line.startswith("#"):
            yield line


def load_metadata(path) -> Metadata:
    """Read a metadata CSV.

    Columns: ``instance``, optional ``source``, ``feature_*`` and ``algo_*``.
    Lines starting with ``#`` are ignored so stamped outputs can be re-read.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"metadata file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_metadata(fh.read(), name=str(path))


def parse_metadata(text: str, name: str = "<string>") -> Metadata:
    reader = csv.reader(_strip_comments(io.StringIO(text)))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MetadataError(f"{name}: empty file, header row missing") from None
    if not header or header[0] != "instance":
        raise MetadataError(f"{name}: first column must be 'instance'")
    feat_cols = [j for j, h in enumerate(header) if h.startswith(FEATURE_PREFIX)]
    algo_cols = [j for j, h in enumerate(header) if h.startswith(ALGO_PREFIX)]
    src_col = header.index("source") if "source" in header else None
    if not feat_cols:
        raise MetadataError(f"{name}: no '{FEATURE_PREFIX}*' columns")
    if not algo_cols:
        raise MetadataError(f"{name}: no '{ALGO_PREFIX}*' columns")

    ids, sources, frows, yrows, problems = [], [], [], [], []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            problems.append(f"row {rownum}: expected {len(header)} cells, got {len(row)}")
            continue
        bad = False
        fvals, yvals = [], []
        for cols, out in ((feat_cols, fvals), (algo_cols, yvals)):
            for j in cols:
                cell = row[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    problems.append(f"row {rownum}, column {header[j]!r}: unparsable or missing value {cell!r}")
                    bad = True
                    continue
                if cols is algo_cols and not 0.0 <= v <= 1.0:
                    problems.append(f"row {rownum}, column {header[j]!r}: coverage {v} outside [0, 1]")
                    bad = True
                out.append(v)
        if bad:
            continue
        ids.append(row[0].strip())
        sources.append(row[src_col].strip() if src_col is not None else "")
        frows.append(fvals)
        yrows.append(yvals)

    if problems:
        raise MetadataError(f"{name}: rejected rows:\n  " + "\n  ".join(problems))
    if not ids:
        raise MetadataError(f"{name}: no instance rows")
    dup = _first_duplicate(ids)
    if dup is not None:
        raise MetadataError(f"{name}: duplicate instance id {dup!r}")
    return Metadata(
        instance_ids=ids,
        feature_names=[header[j][len(FEATURE_PREFIX):] for j in feat_cols],
        technique_names=[header[j][len(ALGO_PREFIX):] for j in algo_cols],
        F=np.array(frows, dtype=float).T,
        Y=np.array(yrows, dtype=float).T,
        source_labels=sources if src_col is not None else None,
    )


def format_metadata(md: Metadata, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = ["instance"]
    if md.source_labels is not None:
        cols.append("source")
    cols += [FEATURE_PREFIX + n for n in md.feature_names]
    cols += [ALGO_PREFIX + n for n in md.technique_names]
    w.writerow(cols)
    for j, iid in enumerate(md.instance_ids):
        row = [iid]
        if md.source_labels is not None:
            row.append(md.source_labels[j])
        row += [repr(float(v)) for v in md.F[:, j]]
        row += [repr(float(v)) for v in md.Y[:, j]]
        w.writerow(row)
    return buf.getvalue()


def write_metadata(md: Metadata, path, header_lines=()) -> None:
    Path(path).write_text(format_metadata(md, header_lines), encoding="utf-8")


def compute_goodness(md: Metadata, epsilon_good: float = 0.05, relative: bool = False) -> GoodnessMatrix:
    """Label each (technique, instance) as good/best relative to the best technique.

    With ``relative=False`` a technique is good when its coverage is within
    ``epsilon_good`` coverage units of the per-instance maximum; with
    ``relative=True`` the gap is measured as a fraction of that maximum.
    """
    if epsilon_good < 0:
        raise ValueError("epsilon_good must be >= 0")
    Y = md.Y
    m = Y.max(axis=0)
    gap = m[None, :] - Y
    best = gap <= TIE_TOL
    if relative:
        good = gap <= epsilon_good * m[None, :] + TIE_TOL
    else:
        good = gap <= epsilon_good + TIE_TOL
    good = good | best
    good.setflags(write=False)
    best.setflags(write=False)
    return GoodnessMatrix(good=good, best=best, epsilon_good=float(epsilon_good),
                          relative=relative, technique_names=list(md.technique_names))
