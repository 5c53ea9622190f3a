"""Tabular dataset model: CSV ingestion, schema inference, preprocessing, EDA.

A :class:`Dataset` is an immutable numeric matrix plus per-column schema.
Categorical cells are stored as integer codes with the label mapping kept on
the column schema, so the matrix stays purely numeric while decode remains
lossless. Missing cells are NaN in ``values`` and True in ``mask``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CsvParseError,
    EmptyInputError,
    EmptyOutputError,
    InvalidSpecError,
    SchemaError,
)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

# Cells equal to one of these (case-insensitive, after stripping) are missing.
MISSING_SENTINELS = frozenset({"", "na", "nan"})

# Numeric columns whose values are all integer-like with at most this many
# distinct values are reclassified as categorical by infer_schema.
CATEGORICAL_THRESHOLD = 20


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str  # CONTINUOUS or CATEGORICAL
    missing_count: int = 0
    distinct_count: int = 0
    categories: tuple[str, ...] | None = None  # code i <-> categories[i]

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"unknown column kind {self.kind!r}")
        if self.kind == CATEGORICAL and self.categories is None:
            raise SchemaError(f"categorical column {self.name!r} needs a code mapping")


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar table with a missingness mask and lineage."""

    columns: tuple[ColumnSchema, ...]
    values: np.ndarray  # (n, d) float64, NaN where missing
    mask: np.ndarray  # (n, d) bool, True where missing
    lineage: tuple[dict, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise SchemaError("values and mask must be matching 2-d arrays")
        if values.shape[1] != len(self.columns):
            raise SchemaError(
                f"{len(self.columns)} columns declared but matrix has {values.shape[1]}"
            )
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        for j, col in enumerate(self.columns):
            if int(mask[:, j].sum()) > values.shape[0]:
                raise SchemaError("missing_count exceeds row count")
            if col.kind == CATEGORICAL:
                codes = values[~mask[:, j], j]
                if codes.size and (
                    np.any(codes != np.round(codes))
                    or codes.min() < 0
                    or codes.max() >= len(col.categories)
                ):
                    raise SchemaError(f"column {col.name!r} holds invalid category codes")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "lineage", tuple(self.lineage))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def col_index(self, name: str) -> int:
        for j, c in enumerate(self.columns):
            if c.name == name:
                return j
        raise SchemaError(f"no column named {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.col_index(name)]

    def is_complete(self) -> bool:
        return not bool(self.mask.any())

    def all_continuous(self) -> bool:
        return all(c.kind == CONTINUOUS for c in self.columns)

    def decode_cell(self, i: int, j: int) -> str | float | None:
        """Cell value as written to CSV: label, float, or None when missing."""
        if self.mask[i, j]:
            return None
        v = self.values[i, j]
        col = self.columns[j]
        if col.kind == CATEGORICAL:
            return col.categories[int(v)]
        return float(v)


@dataclass(frozen=True)
class PreprocessPlan:
    impute: str = "mean"  # mean | median | mode | drop-rows
    drop_column_missing_frac: float = 1.0
    drop_row_missing_frac: float = 1.0
    encode: str = "integer-codes"  # integer-codes | one-hot
    scaler: str = "none"  # zscore | robust | minmax | none

    def __post_init__(self):
        if self.impute not in ("mean", "median", "mode", "drop-rows"):
            raise InvalidSpecError(f"unknown impute strategy {self.impute!r}")
        for name in ("drop_column_missing_frac", "drop_row_missing_frac"):
            frac = getattr(self, name)
            if not (0.0 <= frac <= 1.0):
                raise InvalidSpecError(f"{name} must lie in [0, 1], got {frac}")
        if self.encode not in ("integer-codes", "one-hot"):
            raise InvalidSpecError(f"unknown encode scheme {self.encode!r}")
        if self.scaler not in ("zscore", "robust", "minmax", "none"):
            raise InvalidSpecError(f"unknown scaler {self.scaler!r}")

    def to_dict(self) -> dict:
        return {
            "impute": self.impute,
            "drop_column_missing_frac": self.drop_column_missing_frac,
            "drop_row_missing_frac": self.drop_row_missing_frac,
            "encode": self.encode,
            "scaler": self.scaler,
        }


@dataclass(frozen=True)
class ColumnStats:
    mean: float | None
    std: float | None
    median: float | None
    mad: float | None
    min: float | None
    max: float | None
    q25: float | None
    q75: float | None
    missing_frac: float


@dataclass(frozen=True)
class EdaSummary:
    stats: dict[str, ColumnStats]
    correlation: np.ndarray  # (d, d), NaN where undefined
    histograms: dict[str, tuple[np.ndarray, np.ndarray]]  # name -> (edges, counts)
    columns: tuple[str, ...] = field(default_factory=tuple)


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_SENTINELS


def _parse_float(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(data: bytes, hints: dict[str, str] | None = None) -> Dataset:
    """Parse an RFC-4180 CSV (UTF-8, header row) into a Dataset.

    Empty cells and the sentinels "NA"/"NaN" (case-insensitive) are missing.
    Columns where every non-missing cell parses as a number load as
    continuous, everything else as categorical; ``hints`` overrides per
    column. Category labels map to codes in lexicographic label order.
    """
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise CsvParseError(f"input is not valid UTF-8: {e}") from None
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        rows = list(reader)
    except csv.Error as e:
        raise CsvParseError(str(e), line=reader.line_num) from None
    if not rows:
        raise EmptyInputError("no header row")
    header, *body = rows
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(f"duplicate header names: {dupes}")
    cells: list[list[str]] = []
    for k, row in enumerate(body, start=2):
        if not row:  # blank line
            continue
        if len(row) != len(header):
            raise CsvParseError(
                f"expected {len(header)} fields, found {len(row)}", line=k
            )
        cells.append(row)
    if not cells:
        raise EmptyInputError("CSV has a header but no data rows")

    hints = dict(hints or {})
    unknown = sorted(set(hints) - set(header))
    if unknown:
        raise SchemaError(f"kind hints for unknown columns: {unknown}")

    n, d = len(cells), len(header)
    values = np.full((n, d), np.nan)
    mask = np.zeros((n, d), dtype=bool)
    columns = []
    for j, name in enumerate(header):
        raw = [cells[i][j] for i in range(n)]
        present = [(i, c) for i, c in enumerate(raw) if not _is_missing(c)]
        parsed = [(i, _parse_float(c)) for i, c in present]
        numeric = all(v is not None for _, v in parsed) and bool(parsed)
        kind = hints.get(name) or (CONTINUOUS if numeric else CATEGORICAL)
        if kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"hint for {name!r} must be continuous or categorical")
        categories = None
        if kind == CONTINUOUS:
            if not numeric:
                bad = next(i for (i, v), (_, c) in zip(parsed, present) if v is None)
                raise SchemaError(
                    f"column {name!r} forced continuous but row {bad + 1} is not numeric"
                )
            for (i, v), _ in zip(parsed, present):
                values[i, j] = v
        else:
            labels = sorted({c.strip() for _, c in present})
            code = {lab: k for k, lab in enumerate(labels)}
            categories = tuple(labels)
            for i, c in present:
                values[i, j] = code[c.strip()]
        for i in range(n):
            if _is_missing(raw[i]):
                mask[i, j] = True
        distinct = len({c.strip() for _, c in present})
        columns.append(
            ColumnSchema(
                name=name,
                kind=kind,
                missing_count=n - len(present),
                distinct_count=distinct,
                categories=categories,
            )
        )
    lineage = (
        {
            "stage": "load_csv",
            "rows": n,
            "columns": d,
            "kind_rule": "numeric-parse",
            "hints": hints,
        },
    )
    return Dataset(tuple(columns), values, mask, lineage)


def infer_schema(
    ds: Dataset, categorical_threshold: int = CATEGORICAL_THRESHOLD
) -> tuple[ColumnSchema, ...]:
    """Re-derive column kinds from the data.

    A column is continuous when at least 99% of its non-missing cells parse
    numerically, unless every parsed value is integer-like and the column has
    at most ``categorical_threshold`` distinct values (a coded factor).
    """
    if ds.n == 0:
        raise EmptyInputError("cannot infer a schema from an empty dataset")
    out = []
    for j, col in enumerate(ds.columns):
        present = ~ds.mask[:, j]
        n_present = int(present.sum())
        if n_present == 0:
            out.append(replace(col, missing_count=ds.n, distinct_count=0))
            continue
        if col.kind == CATEGORICAL:
            labels = [col.categories[int(v)] for v in ds.values[present, j]]
            parsed = [_parse_float(lab) for lab in labels]
            numeric_frac = sum(v is not None for v in parsed) / n_present
            numeric_vals = [v for v in parsed if v is not None]
            distinct = len(set(labels))
        else:
            numeric_frac = 1.0
            numeric_vals = list(ds.values[present, j])
            distinct = len(set(numeric_vals))
        integer_like = bool(numeric_vals) and all(
            float(v).is_integer() for v in numeric_vals
        )
        continuous = numeric_frac >= 0.99 and not (
            integer_like and distinct <= categorical_threshold
        )
        if continuous:
            out.append(
                ColumnSchema(col.name, CONTINUOUS, ds.n - n_present, distinct, None)
            )
        else:
            if col.kind == CATEGORICAL:
                categories = col.categories
            else:
                # numeric column reclassified as a coded factor
                labels = sorted({_format_number(v) for v in numeric_vals})
                categories = tuple(labels)
            out.append(
                ColumnSchema(
                    col.name, CATEGORICAL, ds.n - n_present, distinct, categories
                )
            )
    return tuple(out)


def _format_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def preprocess(ds: Dataset, plan: PreprocessPlan) -> Dataset:
    """Run the fixed pipeline: drop columns -> drop rows -> impute -> encode -> scale.

    The output has no missing cells. Each stage appends one lineage
    descriptor, so the lineage fully determines the transformation. Scalers
    apply to continuous columns only; categorical code columns keep their
    codes so the label mapping stays valid. Constant columns that a scaler
    cannot standardize are left unscaled and flagged in the descriptor.
    """
    columns = list(ds.columns)
    values = np.array(ds.values)
    mask = np.array(ds.mask)
    lineage = list(ds.lineage)
    n = values.shape[0]

    # drop sparse columns
    keep, dropped = [], []
    for j, col in enumerate(columns):
        frac = mask[:, j].mean() if n else 0.0
        (dropped if frac > plan.drop_column_missing_frac else keep).append(j)
    dropped_names = [columns[j].name for j in dropped]
    columns = [columns[j] for j in keep]
    values = values[:, keep]
    mask = mask[:, keep]
    lineage.append(
        {
            "stage": "drop_columns",
            "threshold": plan.drop_column_missing_frac,
            "dropped": dropped_names,
        }
    )

    # drop sparse rows
    if values.shape[1]:
        row_frac = mask.mean(axis=1)
    else:
        row_frac = np.zeros(n)
    keep_rows = row_frac <= plan.drop_row_missing_frac
    n_dropped = int((~keep_rows).sum())
    values = values[keep_rows]
    mask = mask[keep_rows]
    lineage.append(
        {
            "stage": "drop_rows",
            "threshold": plan.drop_row_missing_frac,
            "dropped_count": n_dropped,
        }
    )

    # impute
    filled: dict[str, int] = {}
    if plan.impute == "drop-rows":
        complete = ~mask.any(axis=1)
        filled["dropped_rows"] = int((~complete).sum())
        values = values[complete]
        mask = mask[complete]
    else:
        for j, col in enumerate(columns):
            miss = mask[:, j]
            if not miss.any():
                continue
            present = values[~miss, j]
            if present.size == 0:
                raise EmptyOutputError(
                    f"column {col.name!r} has no observed values to impute from"
                )
            if col.kind == CATEGORICAL or plan.impute == "mode":
                uniq, counts = np.unique(present, return_counts=True)
                fill = float(uniq[np.argmax(counts)])
            elif plan.impute == "mean":
                fill = float(present.mean())
            else:
                fill = float(np.median(present))
            values[miss, j] = fill
            mask[miss, j] = False
            filled[col.name] = int(miss.sum())
    lineage.append({"stage": "impute", "strategy": plan.impute, "filled": filled})
    if values.shape[0] == 0:
        raise EmptyOutputError("preprocessing dropped every row")
    columns = [
        replace(c, missing_count=0, distinct_count=len(np.unique(values[:, j])))
        for j, c in enumerate(columns)
    ]

    # encode
    if plan.encode == "one-hot":
        new_cols, new_vals = [], []
        expanded: dict[str, list[str]] = {}
        used = {c.name for c in columns}
        for j, col in enumerate(columns):
            if col.kind != CATEGORICAL:
                new_cols.append(col)
                new_vals.append(values[:, j])
                continue
            names = []
            for k, label in enumerate(col.categories):
                name = f"{col.name}={label}"
                while name in used:
                    name += "_"
                used.add(name)
                names.append(name)
                ind = (values[:, j] == k).astype(float)
                new_cols.append(
                    ColumnSchema(name, CONTINUOUS, 0, len(np.unique(ind)), None)
                )
                new_vals.append(ind)
            expanded[col.name] = names
        columns = new_cols
        values = np.column_stack(new_vals) if new_vals else values[:, :0]
        mask = np.zeros_like(values, dtype=bool)
        lineage.append({"stage": "encode", "scheme": "one-hot", "expanded": expanded})
    else:
        lineage.append({"stage": "encode", "scheme": "integer-codes", "expanded": {}})

    # scale
    skipped: list[str] = []
    scaled: list[str] = []
    if plan.scaler != "none":
        for j, col in enumerate(columns):
            if col.kind != CONTINUOUS:
                continue
            x = values[:, j]
            if plan.scaler == "zscore":
                mu, sigma = x.mean(), x.std()
                if sigma == 0:
                    skipped.append(col.name)
                    continue
                values[:, j] = (x - mu) / sigma
            elif plan.scaler == "minmax":
                lo, hi = x.min(), x.max()
                if hi == lo:
                    skipped.append(col.name)
                    continue
                values[:, j] = (x - lo) / (hi - lo)
            else:  # robust
                med = np.median(x)
                iqr = np.percentile(x, 75) - np.percentile(x, 25)
                if iqr == 0:
                    skipped.append(col.name)
                    continue
                values[:, j] = (x - med) / iqr
            scaled.append(col.name)
    lineage.append(
        {
            "stage": "scale",
            "scaler": plan.scaler,
            "scaled": scaled,
            "skipped_constant": skipped,
        }
    )
    return Dataset(tuple(columns), values, mask, tuple(lineage))


def describe(ds: Dataset) -> EdaSummary:
    """Descriptive statistics, pairwise-complete correlations, and histograms.

    Histogram bin edges use the Freedman-Diaconis rule, falling back to 10
    equal bins when the IQR is degenerate; categorical columns get one bin per
    code. Columns with every cell missing report None for all statistics.
    """
    if ds.n == 0:
        raise EmptyInputError("cannot describe an empty dataset")
    stats: dict[str, ColumnStats] = {}
    hists: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for j, col in enumerate(ds.columns):
        x = ds.values[~ds.mask[:, j], j]
        missing_frac = float(ds.mask[:, j].mean())
        if x.size == 0:
            stats[col.name] = ColumnStats(*([None] * 8), missing_frac=missing_frac)
            hists[col.name] = (np.array([]), np.array([]))
            continue
        med = float(np.median(x))
        stats[col.name] = ColumnStats(
            mean=float(x.mean()),
            std=float(x.std()),
            median=med,
            mad=float(np.median(np.abs(x - med))),
            min=float(x.min()),
            max=float(x.max()),
            q25=float(np.percentile(x, 25)),
            q75=float(np.percentile(x, 75)),
            missing_frac=missing_frac,
        )
        hists[col.name] = _histogram(x, col)
    corr = _pairwise_correlation(ds)
    return EdaSummary(
        stats=stats, correlation=corr, histograms=hists, columns=tuple(ds.column_names)
    )


def _histogram(x: np.ndarray, col: ColumnSchema) -> tuple[np.ndarray, np.ndarray]:
    if col.kind == CATEGORICAL:
        k = len(col.categories)
        edges = np.arange(k + 1) - 0.5
        counts, _ = np.histogram(x, bins=edges)
        return edges, counts
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        edges = np.array([lo - 0.5, lo + 0.5])
        return edges, np.array([x.size])
    iqr = np.percentile(x, 75) - np.percentile(x, 25)
    width = 2.0 * iqr / x.size ** (1.0 / 3.0)
    if width <= 0:
        edges = np.linspace(lo, hi, 11)
    else:
        nbins = max(1, int(math.ceil((hi - lo) / width)))
        edges = np.linspace(lo, hi, nbins + 1)
    counts, _ = np.histogram(x, bins=edges)
    return edges, counts


def _pairwise_correlation(ds: Dataset) -> np.ndarray:
    d = ds.d
    corr = np.full((d, d), np.nan)
    for i in range(d):
        xi_ok = ~ds.mask[:, i]
        si = ds.values[xi_ok, i].std() if xi_ok.any() else 0.0
        corr[i, i] = 1.0 if si > 0 else np.nan
        for j in range(i + 1, d):
            both = xi_ok & ~ds.mask[:, j]
            if both.sum() < 2:
                continue
            a, b = ds.values[both, i], ds.values[both, j]
            sa, sb = a.std(), b.std()
            if sa == 0 or sb == 0:
                continue
            r = float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))
            corr[i, j] = corr[j, i] = r
    return corr


def to_csv_bytes(ds: Dataset) -> bytes:
    """Export as RFC-4180 CSV: header row, CRLF, missing cells empty,
    categorical cells decoded to labels. Floats use shortest round-trip repr,
    so load(export(ds)) reproduces the numeric values exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(ds.column_names)
    for i in range(ds.n):
        row = []
        for j in range(ds.d):
            cell = ds.decode_cell(i, j)
            if cell is None:
                row.append("")
            elif isinstance(cell, float):
                row.append(_format_number(cell))
            else:
                row.append(cell)
        w.writerow(row)
    return buf.getvalue().encode("utf-8")


def schema_json(ds: Dataset) -> str:
    """Schema + lineage sidecar used to reconstruct a Dataset exactly."""
    payload = {
        "columns": [
            {
                "name": c.name,
                "kind": c.kind,
                "missing_count": c.missing_count,
                "distinct_count": c.distinct_count,
                "categories": list(c.categories) if c.categories is not None else None,
            }
            for c in ds.columns
        ],
        "lineage": list(ds.lineage),
    }
    return json.dumps(payload, sort_keys=True)


def from_artifacts(csv_bytes: bytes, schema: str) -> Dataset:
    """Rebuild a Dataset from its CSV export plus the schema sidecar."""
    meta = json.loads(schema)
    hints = {c["name"]: c["kind"] for c in meta["columns"]}
    ds = load_csv(csv_bytes, hints=hints)
    columns = []
    for c in meta["columns"]:
        categories = tuple(c["categories"]) if c["categories"] is not None else None
        columns.append(
            ColumnSchema(
                c["name"], c["kind"], c["missing_count"], c["distinct_count"], categories
            )
        )
    values = np.array(ds.values)
    for j, (col, loaded) in enumerate(zip(columns, ds.columns)):
        if col.kind == CATEGORICAL and loaded.categories != col.categories:
            recode = {
                k: col.categories.index(lab) for k, lab in enumerate(loaded.categories)
            }
            present = ~ds.mask[:, j]
            values[present, j] = [recode[int(v)] for v in values[present, j]]
    return Dataset(
        tuple(columns), values, np.array(ds.mask), tuple(json.loads(schema)["lineage"])
    )
