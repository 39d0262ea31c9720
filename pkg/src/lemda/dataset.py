"""Typed flow-record tables, CSV ingestion and fold planning."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LabelError, ParseError, SchemaError

NORMAL = 0
ATTACK = 1


class Kind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    LABEL = "label"
    IDENTIFIER = "identifier"
    TIMESTAMP = "timestamp"


FEATURE_KINDS = (Kind.NUMERIC, Kind.CATEGORICAL)


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: Kind

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise SchemaError("column names must be non-empty strings")
        object.__setattr__(self, "kind", Kind(self.kind))


def validate_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate column names: {', '.join(dupes)}")
    n_labels = sum(c.kind is Kind.LABEL for c in schema)
    if n_labels != 1:
        raise SchemaError(f"schema needs exactly one label column, found {n_labels}")
    return schema


def read_schema(path) -> tuple[ColumnSchema, ...]:
    """Parse a schema file of ``name=kind`` lines (``#`` comments allowed)."""
    cols = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, kind = line.rpartition("=")
        if not sep:
            raise SchemaError(f"{path}:{lineno}: expected name=kind, got {raw!r}")
        try:
            cols.append(ColumnSchema(name.strip(), Kind(kind.strip())))
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return validate_schema(cols)


def format_schema(schema: Iterable[ColumnSchema]) -> str:
    return "".join(f"{c.name}={c.kind.value}\n" for c in schema)


def write_schema(schema: Iterable[ColumnSchema], path) -> None:
    Path(path).write_text(format_schema(schema), encoding="utf-8")


def intern_codes(values: Iterable) -> tuple[np.ndarray, tuple[str, ...]]:
    """Map strings to integer codes in first-appearance order."""
    table: dict[str, int] = {}
    codes = []
    for v in values:
        v = str(v)
        code = table.get(v)
        if code is None:
            code = table[v] = len(table)
        codes.append(code)
    return np.asarray(codes, dtype=np.int64), tuple(table)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column table with one binary label column.

    Numeric columns hold float64. Categorical columns hold int64 codes into
    ``code_tables[name]`` once encoded; a freshly constructed dataset may
    carry raw string values until :func:`encode_categories` runs.
    Identifier and timestamp columns are kept as strings.
    """

    schema: tuple[ColumnSchema, ...]
    columns: Mapping[str, np.ndarray]
    labels: np.ndarray
    code_tables: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def from_columns(cls, schema, data: Mapping[str, Sequence], code_tables=None):
        schema = validate_schema(schema)
        code_tables = dict(code_tables or {})
        label_name = next(c.name for c in schema if c.kind is Kind.LABEL)
        missing = [c.name for c in schema if c.name not in data]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")

        labels = np.asarray(data[label_name])
        if labels.ndim != 1:
            raise ValueError("label column must be one-dimensional")
        if labels.size and not np.isin(labels, (NORMAL, ATTACK)).all():
            raise LabelError("labels must be 0 (normal) or 1 (attack)")
        labels = labels.astype(np.int8)
        n = labels.size

        cols = {}
        for c in schema:
            if c.kind is Kind.LABEL:
                continue
            raw = data[c.name]
            if c.kind is Kind.NUMERIC:
                arr = np.asarray(raw, dtype=np.float64)
            elif c.kind is Kind.CATEGORICAL and c.name in code_tables:
                arr = np.asarray(raw, dtype=np.int64)
                table = code_tables[c.name] = tuple(code_tables[c.name])
                if arr.size and (arr.min() < 0 or arr.max() >= len(table)):
                    raise SchemaError(f"column {c.name!r} has codes outside its table")
                if len(set(table)) != len(table):
                    raise SchemaError(f"column {c.name!r} code table has duplicate strings")
            else:
                arr = np.asarray([str(v) for v in raw], dtype=object)
            if arr.shape != (n,):
                raise SchemaError(
                    f"column {c.name!r} has length {arr.shape[0] if arr.ndim else 0}, expected {n}"
                )
            cols[c.name] = _frozen(arr)

        stray = set(code_tables) - {c.name for c in schema if c.kind is Kind.CATEGORICAL}
        for name in stray:
            code_tables.pop(name)
        return cls(schema, MappingProxyType(cols), _frozen(labels), MappingProxyType(code_tables))

    # -- shape -----------------------------------------------------------
    @property
    def rows(self) -> int:
        return int(self.labels.size)

    def __len__(self):
        return self.rows

    @property
    def label_name(self) -> str:
        return next(c.name for c in self.schema if c.kind is Kind.LABEL)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def kind(self, name: str) -> Kind:
        for c in self.schema:
            if c.name == name:
                return c.kind
        raise KeyError(name)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind in FEATURE_KINDS]

    def is_encoded(self, name: str | None = None) -> bool:
        names = [name] if name else [c.name for c in self.schema if c.kind is Kind.CATEGORICAL]
        return all(n in self.code_tables for n in names)

    def __getitem__(self, name: str) -> np.ndarray:
        if name == self.label_name:
            return self.labels
        return self.columns[name]

    # -- views -----------------------------------------------------------
    def feature_matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.feature_names if names is None else list(names)
        if not self.is_encoded():
            raise ValueError("categorical columns must be encoded first")
        if not names:
            return np.zeros((self.rows, 0))
        return np.column_stack([self.columns[n].astype(np.float64) for n in names])

    def categorical_mask(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.feature_names if names is None else list(names)
        return np.array([self.kind(n) is Kind.CATEGORICAL for n in names], dtype=bool)

    def decode(self, name: str) -> np.ndarray:
        """Original string values of a categorical column."""
        col = self.columns[name]
        if name not in self.code_tables:
            return col
        table = np.asarray(self.code_tables[name], dtype=object)
        return table[col] if col.size else np.asarray([], dtype=object)

    # -- transforms (all return new datasets) ------------------------------
    def _rebuild(self, schema, columns, labels=None, code_tables=None) -> "Dataset":
        data = dict(columns)
        label = next(c.name for c in schema if c.kind is Kind.LABEL)
        data[label] = self.labels if labels is None else labels
        tables = dict(self.code_tables if code_tables is None else code_tables)
        return Dataset.from_columns(schema, data, tables)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        cols = {k: v[rows] for k, v in self.columns.items()}
        return self._rebuild(self.schema, cols, self.labels[rows])

    def select(self, names: Sequence[str]) -> "Dataset":
        """Keep the named columns (plus the label), in the given order."""
        keep = list(dict.fromkeys(names))
        unknown = [n for n in keep if n not in self.names]
        if unknown:
            raise SchemaError(f"unknown columns: {', '.join(unknown)}")
        keep = [n for n in keep if n != self.label_name]
        by_name = {c.name: c for c in self.schema}
        schema = [by_name[n] for n in keep] + [by_name[self.label_name]]
        return self._rebuild(schema, {n: self.columns[n] for n in keep})

    def drop(self, names: Iterable[str]) -> "Dataset":
        drop = set(names)
        return self.select([n for n in self.names if n not in drop])

    def with_column(self, column: ColumnSchema, values, position: int | None = None,
                    code_table=None) -> "Dataset":
        if column.name in self.names:
            raise SchemaError(f"column {column.name!r} already exists")
        schema = list(self.schema)
        schema.insert(len(schema) if position is None else position, column)
        cols = dict(self.columns)
        cols[column.name] = values
        tables = dict(self.code_tables)
        if code_table is not None:
            tables[column.name] = tuple(code_table)
        return self._rebuild(schema, cols, code_tables=tables)


def drop_identifiers(d: Dataset) -> Dataset:
    return d.drop(c.name for c in d.schema if c.kind is Kind.IDENTIFIER)


def encode_categories(d: Dataset) -> Dataset:
    """Intern raw categorical strings as first-appearance integer codes.

    Already-encoded columns are left alone, so the operation is idempotent.
    """
    if d.is_encoded():
        return d
    cols = dict(d.columns)
    tables = dict(d.code_tables)
    for c in d.schema:
        if c.kind is Kind.CATEGORICAL and c.name not in tables:
            cols[c.name], tables[c.name] = intern_codes(d.columns[c.name])
    return d._rebuild(d.schema, cols, code_tables=tables)


# -- CSV -------------------------------------------------------------------

def load_csv(path, schema: Sequence[ColumnSchema], normal_label: str = "0",
             attack_label: str = "1") -> Dataset:
    """Read a header-first UTF-8 CSV into an encoded :class:`Dataset`.

    The header must contain exactly the schema's column names, in any order.
    Label cells are mapped with the ``normal_label``/``attack_label`` pair.
    """
    schema = validate_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        return _read_csv(fh, schema, normal_label, attack_label, str(path))


def read_csv_text(text: str, schema, normal_label="0", attack_label="1") -> Dataset:
    return _read_csv(io.StringIO(text), validate_schema(schema), normal_label, attack_label, "<text>")


def _read_csv(fh, schema, normal_label, attack_label, source) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{source}: empty file") from None
    declared = [c.name for c in schema]
    missing = [n for n in declared if n not in header]
    if missing:
        raise SchemaError(f"{source}: missing declared column(s): {', '.join(missing)}")
    extra = [h for h in header if h not in declared]
    if extra:
        raise SchemaError(f"{source}: undeclared column(s): {', '.join(extra)}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{source}: duplicate header names")

    position = {name: header.index(name) for name in declared}
    raw: dict[str, list] = {name: [] for name in declared}
    width = len(header)
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"{source}: line {rowno} has {len(row)} fields, expected {width}",
                             row=rowno)
        for name in declared:
            raw[name].append(row[position[name]])

    data: dict[str, object] = {}
    tables = {}
    for c in schema:
        cells = raw[c.name]
        if c.kind is Kind.NUMERIC:
            data[c.name] = _parse_numeric(cells, c.name, source)
        elif c.kind is Kind.CATEGORICAL:
            data[c.name], tables[c.name] = intern_codes(s.strip() for s in cells)
        elif c.kind is Kind.LABEL:
            data[c.name] = _parse_labels(cells, c.name, normal_label, attack_label, source)
        else:
            data[c.name] = [s.strip() for s in cells]
    return Dataset.from_columns(schema, data, tables)


def _parse_numeric(cells, name, source) -> np.ndarray:
    out = np.empty(len(cells), dtype=np.float64)
    for i, s in enumerate(cells):
        try:
            v = float(s)
        except ValueError:
            raise ParseError(f"{source}: line {i + 2}, column {name!r}: cannot parse {s!r} as a number",
                             row=i + 2, column=name) from None
        if not math.isfinite(v):
            raise ParseError(f"{source}: line {i + 2}, column {name!r}: missing or non-finite value {s!r}",
                             row=i + 2, column=name)
        out[i] = v
    return out


def _parse_labels(cells, name, normal_label, attack_label, source) -> np.ndarray:
    mapping = {str(normal_label): NORMAL, str(attack_label): ATTACK}
    out = np.empty(len(cells), dtype=np.int8)
    for i, s in enumerate(cells):
        try:
            out[i] = mapping[s.strip()]
        except KeyError:
            raise LabelError(
                f"{source}: line {i + 2}, column {name!r}: unknown label {s!r} "
                f"(normal={normal_label!r}, attack={attack_label!r})"
            ) from None
    return out


def format_number(v: float) -> str:
    # repr round-trips exactly; integral values print without the trailing .0
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_csv(d: Dataset, path_or_file, normal_label: str = "0", attack_label: str = "1") -> None:
    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            _write_csv(d, fh, normal_label, attack_label)
    else:
        _write_csv(d, path_or_file, normal_label, attack_label)


def _write_csv(d: Dataset, fh, normal_label, attack_label) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(d.names)
    label_text = np.array([normal_label, attack_label], dtype=object)
    cols = []
    for c in d.schema:
        if c.kind is Kind.LABEL:
            cols.append(label_text[d.labels.astype(np.int64)])
        elif c.kind is Kind.NUMERIC:
            cols.append([format_number(v) for v in d.columns[c.name]])
        elif c.kind is Kind.CATEGORICAL:
            cols.append(d.decode(c.name))
        else:
            cols.append(d.columns[c.name])
    writer.writerows(zip(*cols))


# -- folds -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    mode: str = "stratified"

    @property
    def rows(self) -> int:
        return int(self.assignments.size)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "mode": self.mode,
                "fold_sizes": self.fold_sizes().tolist()}


def split_folds(d: Dataset | np.ndarray, k: int, seed: int = 0, mode: str = "stratified") -> FoldPlan:
    """Assign every row to one of ``k`` folds.

    ``stratified`` shuffles each class under ``seed`` and deals rows
    round-robin, continuing the deal across classes so fold sizes stay
    within one of each other. ``block`` cuts the rows, in order, into ``k``
    contiguous blocks; this keeps temporal order for sequential features.
    """
    labels = d.labels if isinstance(d, Dataset) else np.asarray(d)
    n = int(labels.size)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds row count {n}")
    assignments = np.empty(n, dtype=np.int64)
    if mode == "block":
        bounds = (np.arange(k + 1) * n) // k
        for fold in range(k):
            assignments[bounds[fold]:bounds[fold + 1]] = fold
    elif mode == "stratified":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
        offset = 0
        for cls in (NORMAL, ATTACK):
            members = rng.permutation(np.flatnonzero(labels == cls))
            assignments[members] = (offset + np.arange(members.size)) % k
            offset += members.size
    else:
        raise ValueError(f"unknown fold mode {mode!r}")
    assignments.flags.writeable = False
    return FoldPlan(k=k, assignments=assignments, seed=int(seed), mode=mode)
