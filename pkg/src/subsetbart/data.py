"""Datasets with continuous, categorical and network-structured predictors.

Continuous predictors are min-max rescaled to ``[0, 1]`` at load time and
the observed ranges are kept so that new data can be put on the same scale.
Categorical values are stored as integer positions into each column's
declared level universe.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

Kind = Literal["continuous", "categorical", "network"]


class SchemaError(ValueError):
    """Schema violation: unknown level, missing column, bad schema file."""


class DataParseError(ValueError):
    """A cell could not be parsed as the declared type."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: Kind
    levels: tuple[str, ...] | None = None
    cutpoints: tuple[float, ...] | None = None
    network: str | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical", "network"):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind != "continuous":
            if not self.levels:
                raise SchemaError(f"column {self.name!r}: categorical columns need a level list")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"column {self.name!r}: duplicate levels")
        if self.kind == "network" and not self.network:
            raise SchemaError(f"column {self.name!r}: network columns need a network id")
        if self.cutpoints is not None:
            cp = tuple(float(c) for c in self.cutpoints)
            if list(cp) != sorted(cp):
                raise SchemaError(f"column {self.name!r}: cutpoint grid must be sorted")
            object.__setattr__(self, "cutpoints", cp)


@dataclass(frozen=True)
class PredictorSchema:
    """Ordered predictor columns plus the outcome column name."""

    columns: tuple[ColumnSpec, ...]
    outcome: str = "y"

    @property
    def continuous(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.kind == "continuous")

    @property
    def categorical(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.kind != "continuous")

    @property
    def p_cont(self) -> int:
        return len(self.continuous)

    @property
    def p_cat(self) -> int:
        return len(self.categorical)

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def n_levels(self) -> tuple[int, ...]:
        return tuple(len(c.levels) for c in self.categorical)

    def variable(self, j: int) -> ColumnSpec:
        """Column for the sampler's variable index (continuous first, then categorical)."""
        pc = self.p_cont
        return self.continuous[j] if j < pc else self.categorical[j - pc]

    def to_json(self) -> dict:
        cols = []
        for c in self.columns:
            d: dict = {"name": c.name, "kind": c.kind}
            if c.levels is not None:
                d["levels"] = list(c.levels)
            if c.cutpoints is not None:
                d["cutpoints"] = list(c.cutpoints)
            if c.network is not None:
                d["network"] = c.network
            cols.append(d)
        return {"outcome": self.outcome, "columns": cols}

    @classmethod
    def from_json(cls, obj: dict) -> "PredictorSchema":
        if not isinstance(obj, dict) or not isinstance(obj.get("columns"), list):
            raise SchemaError("schema must be an object with a 'columns' list")
        cols = []
        for c in obj["columns"]:
            try:
                cols.append(
                    ColumnSpec(
                        name=str(c["name"]),
                        kind=c["kind"],
                        levels=tuple(str(v) for v in c["levels"]) if c.get("levels") else None,
                        cutpoints=tuple(c["cutpoints"]) if c.get("cutpoints") else None,
                        network=c.get("network"),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"schema column missing field {exc}") from None
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        return cls(tuple(cols), str(obj.get("outcome", "y")))


def load_schema(path: str | Path) -> PredictorSchema:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return PredictorSchema.from_json(obj)


@dataclass(frozen=True)
class Dataset:
    """Predictors and outcome ready for the sampler.

    ``cont_min``/``cont_max`` hold the raw ranges used for rescaling, and
    ``degenerate`` flags continuous columns whose training range was empty
    (such columns are stored as constant zero and never split on).
    """

    x_cont: np.ndarray
    x_cat: np.ndarray
    y: np.ndarray | None
    schema: PredictorSchema
    cont_min: np.ndarray = field(default=None)
    cont_max: np.ndarray = field(default=None)
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.x_cont.shape[0]
        if self.x_cat.shape[0] != n:
            raise SchemaError("continuous and categorical blocks disagree on n")
        if self.x_cont.shape[1] != self.schema.p_cont or self.x_cat.shape[1] != self.schema.p_cat:
            raise SchemaError("predictor matrices do not match the schema")
        if self.y is not None and self.y.shape != (n,):
            raise SchemaError("outcome length does not match predictors")
        for c, k in enumerate(self.schema.n_levels):
            col = self.x_cat[:, c]
            if col.size and (col.min() < 0 or col.max() >= k):
                raise SchemaError(f"column {self.schema.categorical[c].name!r}: level index out of range")
        if self.cont_min is None:
            object.__setattr__(self, "cont_min", np.zeros(self.schema.p_cont))
            object.__setattr__(self, "cont_max", np.ones(self.schema.p_cont))
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(self.schema.p_cont, dtype=bool))

    @property
    def n(self) -> int:
        return self.x_cont.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            x_cont=self.x_cont[idx],
            x_cat=self.x_cat[idx],
            y=None if self.y is None else self.y[idx],
        )

    def with_outcome(self, y) -> "Dataset":
        return replace(self, y=np.asarray(y, dtype=float))


@dataclass(frozen=True)
class OutcomeScaling:
    """Affine map of the outcome onto ``[-0.5, 0.5]``."""

    center: float
    half_range: float

    def __post_init__(self):
        if not self.half_range > 0:
            raise ValueError("half_range must be positive")

    @classmethod
    def from_outcome(cls, y: np.ndarray) -> "OutcomeScaling":
        lo, hi = float(np.min(y)), float(np.max(y))
        half = (hi - lo) / 2.0
        return cls((hi + lo) / 2.0, half if half > 0 else 1.0)

    @classmethod
    def identity(cls) -> "OutcomeScaling":
        return cls(0.0, 0.5)

    def apply(self, y):
        return (np.asarray(y, dtype=float) - self.center) / (2.0 * self.half_range)

    def invert(self, z):
        return np.asarray(z, dtype=float) * (2.0 * self.half_range) + self.center


def rescale_columns(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-max rescale with clamping; degenerate ranges map to constant 0."""
    width = hi - lo
    degenerate = ~(width > 0)
    safe = np.where(degenerate, 1.0, width)
    out = np.clip((raw - lo) / safe, 0.0, 1.0)
    out[:, degenerate] = 0.0
    return out, degenerate


def _parse_float(cell: str, col: str, row: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataParseError(f"row {row}, column {col!r}: {cell!r} is not numeric") from None
    if math.isnan(v):
        raise DataParseError(f"row {row}, column {col!r}: missing value")
    return v


def load_dataset(
    csv_path: str | Path,
    schema_path: str | Path | PredictorSchema,
    *,
    reference: Dataset | None = None,
    require_outcome: bool = True,
) -> Dataset:
    """Read a CSV against a schema.

    When ``reference`` is given its continuous ranges are reused (values
    outside them are clamped to ``[0, 1]``); otherwise ranges come from this
    file.
    """
    schema = schema_path if isinstance(schema_path, PredictorSchema) else load_schema(schema_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file") from None
        rows = [r for r in reader if r]
    pos = {name: i for i, name in enumerate(header)}
    for c in schema.columns:
        if c.name not in pos:
            raise SchemaError(f"{csv_path}: missing column {c.name!r}")
    has_y = schema.outcome in pos
    if require_outcome and not has_y:
        raise SchemaError(f"{csv_path}: missing outcome column {schema.outcome!r}")
    if not rows:
        raise SchemaError(f"{csv_path}: no data rows")

    n = len(rows)
    raw = np.empty((n, schema.p_cont))
    xk = np.empty((n, schema.p_cat), dtype=np.int64)
    lookups = [{lv: k for k, lv in enumerate(c.levels)} for c in schema.categorical]
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataParseError(f"row {i}: expected {len(header)} cells, got {len(r)}")
        for j, c in enumerate(schema.continuous):
            raw[i - 2, j] = _parse_float(r[pos[c.name]], c.name, i)
        for j, c in enumerate(schema.categorical):
            cell = r[pos[c.name]]
            try:
                xk[i - 2, j] = lookups[j][cell]
            except KeyError:
                raise SchemaError(
                    f"row {i}, column {c.name!r}: level {cell!r} not in the declared universe"
                ) from None
    y = None
    if has_y:
        y = np.array([_parse_float(r[pos[schema.outcome]], schema.outcome, i) for i, r in enumerate(rows, 2)])

    if reference is not None:
        lo, hi = reference.cont_min, reference.cont_max
    else:
        lo, hi = raw.min(axis=0), raw.max(axis=0)
    xc, degenerate = rescale_columns(raw, lo, hi)
    if reference is not None:
        degenerate = reference.degenerate.copy()
        xc[:, degenerate] = 0.0
    return Dataset(xc, xk, y, schema, lo.copy(), hi.copy(), degenerate)


def write_dataset(ds: Dataset, csv_path: str | Path, schema_path: str | Path | None = None) -> None:
    """Write the (rescaled) dataset; floats use shortest round-trip repr."""
    schema = ds.schema
    cont_pos = {c.name: j for j, c in enumerate(schema.continuous)}
    cat_pos = {c.name: j for j, c in enumerate(schema.categorical)}
    header = [c.name for c in schema.columns] + ([schema.outcome] if ds.y is not None else [])
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = []
            for c in schema.columns:
                if c.name in cont_pos:
                    row.append(repr(float(ds.x_cont[i, cont_pos[c.name]])))
                else:
                    row.append(c.levels[ds.x_cat[i, cat_pos[c.name]]])
            if ds.y is not None:
                row.append(repr(float(ds.y[i])))
            w.writerow(row)
    if schema_path is not None:
        Path(schema_path).write_text(json.dumps(schema.to_json(), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# baseline encodings


def one_hot_encode(ds: Dataset) -> Dataset:
    """Replace every categorical column by one 0/1 indicator per level."""
    schema = ds.schema
    if schema.p_cat == 0:
        return ds
    blocks = [ds.x_cont]
    cols = list(schema.continuous)
    for c, spec in enumerate(schema.categorical):
        k = len(spec.levels)
        blocks.append((ds.x_cat[:, c][:, None] == np.arange(k)[None, :]).astype(float))
        cols.extend(ColumnSpec(f"{spec.name}={lv}", "continuous") for lv in spec.levels)
    x = np.hstack(blocks)
    new_schema = PredictorSchema(tuple(cols), schema.outcome)
    p_ind = x.shape[1] - schema.p_cont
    return Dataset(
        x,
        np.empty((ds.n, 0), dtype=np.int64),
        ds.y,
        new_schema,
        np.concatenate([ds.cont_min, np.zeros(p_ind)]),
        np.concatenate([ds.cont_max, np.ones(p_ind)]),
        np.concatenate([ds.degenerate, np.zeros(p_ind, dtype=bool)]),
    )


def target_means(levels: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Per-level mean outcome; unseen levels get the global mean."""
    sums = np.bincount(levels, weights=y, minlength=k)
    counts = np.bincount(levels, minlength=k)
    means = np.full(k, float(np.mean(y)))
    seen = counts > 0
    means[seen] = sums[seen] / counts[seen]
    return means


def target_encode(ds_train: Dataset, ds_apply: Dataset) -> Dataset:
    """Replace categorical columns by their training-set level means, rescaled to [0, 1].

    The rescaling range is the encoded range over the training rows, so
    training and held-out data share one scale.
    """
    schema = ds_train.schema
    if ds_train.y is None:
        raise ValueError("target encoding needs training outcomes")
    if ds_apply.schema.categorical != schema.categorical:
        raise SchemaError("datasets do not share a schema")
    if schema.p_cat == 0:
        return ds_apply
    enc_train = np.empty((ds_train.n, schema.p_cat))
    enc_apply = np.empty((ds_apply.n, schema.p_cat))
    cols = list(schema.continuous)
    for c, spec in enumerate(schema.categorical):
        means = target_means(ds_train.x_cat[:, c], ds_train.y, len(spec.levels))
        enc_train[:, c] = means[ds_train.x_cat[:, c]]
        enc_apply[:, c] = means[ds_apply.x_cat[:, c]]
        cols.append(ColumnSpec(f"{spec.name}:target", "continuous"))
    lo, hi = enc_train.min(axis=0), enc_train.max(axis=0)
    scaled, degenerate = rescale_columns(enc_apply, lo, hi)
    return Dataset(
        np.hstack([ds_apply.x_cont, scaled]),
        np.empty((ds_apply.n, 0), dtype=np.int64),
        ds_apply.y,
        PredictorSchema(tuple(cols), schema.outcome),
        np.concatenate([ds_apply.cont_min, lo]),
        np.concatenate([ds_apply.cont_max, hi]),
        np.concatenate([ds_apply.degenerate, degenerate]),
    )


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class RandomSplit:
    train_frac: float


@dataclass(frozen=True)
class LeaveOneLevelOut:
    codes: np.ndarray
    n_levels: int


Fold = tuple[np.ndarray, np.ndarray]


def make_folds(n: int, scheme: RandomSplit | LeaveOneLevelOut, seed: int) -> list[Fold]:
    """Train/test index pairs; each pair is disjoint and covers ``0..n-1``."""
    if isinstance(scheme, RandomSplit):
        if not 0 < scheme.train_frac < 1:
            raise ValueError("train_frac must lie strictly between 0 and 1")
        n_train = int(math.floor(scheme.train_frac * n + 1e-9))
        perm = np.random.default_rng(seed).permutation(n)
        folds = [(np.sort(perm[:n_train]), np.sort(perm[n_train:]))]
    else:
        codes = np.asarray(scheme.codes)
        if codes.shape != (n,):
            raise ValueError("level codes must have length n")
        folds = [
            (np.flatnonzero(codes != k), np.flatnonzero(codes == k)) for k in range(scheme.n_levels)
        ]
    for f, (tr, te) in enumerate(folds):
        if tr.size == 0 or te.size == 0:
            side = "train" if tr.size == 0 else "test"
            raise ValueError(f"fold {f} has an empty {side} set")
    return folds
