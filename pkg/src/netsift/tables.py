"""Feature tables, CSV interchange, fold splitting and data-role rules.

A table is an immutable bundle of named float64 columns plus a binary
label vector. Every table carries a schema hash (derived from its
column names) so downstream stages can refuse mismatched inputs, and a
data-role tag restricting which pipeline stage may read it. The role
rules are the leakage guard for the whole pipeline: test-role tables
are only ever readable by final evaluation.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class TableError(Exception):
    pass


class SchemaHashMismatch(TableError):
    pass


class SchemaHashMissing(TableError):
    pass


class MissingLabelColumn(TableError):
    pass


class EmptyTable(TableError):
    pass


class ClassTooSmall(TableError):
    pass


class UnknownFeature(TableError):
    pass


class RoleViolation(TableError):
    """A table reached a pipeline stage its role forbids."""


class DataRole(str, Enum):
    TRAIN_CV = "train_cv"
    HPO = "hpo"
    VALIDATION = "validation"
    SESSION_TEST = "session_test"
    DATASET_TEST = "dataset_test"


class PipelineStage(str, Enum):
    ELIMINATION = "elimination"
    SELECTION = "selection"
    EVALUATION = "evaluation"


# Which roles each stage may read. Feature elimination measures
# per-feature reliability across train/HPO/validation scenarios; the
# selection GA fits on train and scores on validation only; final
# evaluation alone may touch the test roles.
STAGE_ROLES: dict[PipelineStage, frozenset[DataRole]] = {
    PipelineStage.ELIMINATION: frozenset(
        {DataRole.TRAIN_CV, DataRole.HPO, DataRole.VALIDATION}
    ),
    PipelineStage.SELECTION: frozenset({DataRole.TRAIN_CV, DataRole.VALIDATION}),
    PipelineStage.EVALUATION: frozenset(DataRole),
}

_AUTO = "__auto__"


def hash_names(names) -> str:
    """Schema hash over the ordered feature-name list."""
    payload = "netsift-schema/1\n" + "\n".join(names)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureTable:
    names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    schema_hash: str | None = _AUTO
    role: DataRole | None = None
    source: str = ""
    dropped_rows: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise TableError(f"X must be 2-D, got shape {X.shape}")
        y = np.asarray(self.y)
        if y.shape != (X.shape[0],):
            raise TableError("y length must match row count")
        if y.size and not np.isin(y, (0, 1)).all():
            raise TableError("labels must be binary {0, 1}")
        y = y.astype(np.uint8)
        if len(self.names) != X.shape[1]:
            raise TableError(
                f"{len(self.names)} names for {X.shape[1]} columns"
            )
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.schema_hash == _AUTO:
            object.__setattr__(self, "schema_hash", hash_names(self.names))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def positive_rate(self) -> float:
        return float(self.y.mean()) if self.y.size else 0.0

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise UnknownFeature(f"feature {name!r} not in table") from None
        return self.X[:, j]

    def select(self, names) -> "FeatureTable":
        """New table restricted to the given columns, keeping row order."""
        names = tuple(names)
        idx = []
        for name in names:
            if name not in self.names:
                raise UnknownFeature(f"feature {name!r} not in table")
            idx.append(self.names.index(name))
        return FeatureTable(
            names=names,
            X=self.X[:, idx],
            y=self.y,
            role=self.role,
            source=self.source,
            meta=dict(self.meta),
        )

    def with_role(self, role: DataRole | None) -> "FeatureTable":
        return FeatureTable(
            names=self.names,
            X=self.X,
            y=self.y,
            schema_hash=self.schema_hash,
            role=role,
            source=self.source,
            dropped_rows=self.dropped_rows,
            meta=dict(self.meta),
        )


def save_csv(table: FeatureTable, path: str | Path) -> None:
    """Write header + rows with the schema hash on a leading comment line.

    Floats are written with shortest round-trip repr, so identical
    tables serialize to identical bytes.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema_hash={table.schema_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(table.names) + ["label"])
        for i in range(table.n_rows):
            row = [repr(float(v)) for v in table.X[i]]
            row.append(str(int(table.y[i])))
            writer.writerow(row)


def load_csv(
    path: str | Path,
    role: DataRole | None = None,
    expected_schema_hash: str | None = None,
) -> FeatureTable:
    """Load and validate a feature-table CSV.

    Rows containing non-finite values are dropped and counted in
    ``dropped_rows``. The label column may appear anywhere but must be
    named ``label``.
    """
    path = Path(path)
    file_hash: str | None = None
    with path.open(newline="") as fh:
        rows = []
        header: list[str] | None = None
        for line in fh:
            if line.startswith("#"):
                stripped = line[1:].strip()
                if stripped.startswith("schema_hash="):
                    file_hash = stripped.split("=", 1)[1]
                continue
            for parsed in csv.reader([line]):
                if header is None:
                    header = parsed
                elif parsed:
                    rows.append(parsed)
    if header is None:
        raise EmptyTable(f"{path}: no header row")
    if "label" not in header:
        raise MissingLabelColumn(f"{path}: no 'label' column")
    label_pos = header.index("label")
    names = tuple(h for i, h in enumerate(header) if i != label_pos)

    if expected_schema_hash is not None:
        found = file_hash if file_hash is not None else hash_names(names)
        if found != expected_schema_hash:
            raise SchemaHashMismatch(
                f"{path}: schema hash {found} != expected {expected_schema_hash}"
            )

    kept_X: list[list[float]] = []
    kept_y: list[int] = []
    dropped = 0
    for parsed in rows:
        if len(parsed) != len(header):
            dropped += 1
            continue
        try:
            values = [float(v) for v in parsed]
        except ValueError:
            dropped += 1
            continue
        if not all(math.isfinite(v) for v in values):
            dropped += 1
            continue
        label = values.pop(label_pos)
        if label not in (0.0, 1.0):
            dropped += 1
            continue
        kept_X.append(values)
        kept_y.append(int(label))
    if not kept_X:
        raise EmptyTable(f"{path}: no valid data rows")

    return FeatureTable(
        names=names,
        X=np.array(kept_X, dtype=np.float64),
        y=np.array(kept_y, dtype=np.uint8),
        schema_hash=file_hash if file_hash is not None else _AUTO,
        role=role,
        source=str(path),
        dropped_rows=dropped,
    )


def stratified_kfold(table: FeatureTable, k: int = 10, seed: int = 0):
    """k disjoint (train_idx, test_idx) splits with per-fold class ratio
    within one row of the global ratio. Deterministic under the seed.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    pos = np.flatnonzero(table.y == 1)
    neg = np.flatnonzero(table.y == 0)
    if len(pos) < k or len(neg) < k:
        raise ClassTooSmall(
            f"need >= {k} rows per class, have {len(pos)} positive / {len(neg)} negative"
        )
    rng = np.random.default_rng(seed)
    pos = pos[rng.permutation(len(pos))]
    neg = neg[rng.permutation(len(neg))]
    folds = []
    all_idx = np.arange(table.n_rows)
    for f in range(k):
        test = np.sort(np.concatenate([pos[f::k], neg[f::k]]))
        mask = np.ones(table.n_rows, dtype=bool)
        mask[test] = False
        folds.append((all_idx[mask], test))
    return folds


def enforce_roles(stage: PipelineStage, tables) -> list[FeatureTable]:
    """Return the tables unchanged if every role is permitted for the stage.

    Any table carrying a role the stage may not read (or no role at
    all) raises RoleViolation naming the offender. This is the hard
    leakage guard: test data can never influence training, feature
    selection or tuning.
    """
    allowed = STAGE_ROLES[stage]
    tables = list(tables)
    for t in tables:
        if t.role is None:
            raise RoleViolation(
                f"{stage.value} stage received an untagged table"
                f" ({t.source or 'in-memory'}); every table must carry a data role"
            )
        if t.role not in allowed:
            raise RoleViolation(
                f"{stage.value} stage may not read a {t.role.value} table"
                f" ({t.source or 'in-memory'}); allowed roles:"
                f" {sorted(r.value for r in allowed)} (leakage guard)"
            )
    return tables
