"""Sequence/feature ingestion, preprocessing, a small feature bank, and metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column!r}" if column is not None else "") + ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column


class LabelError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class InsufficientLengthError(ValueError):
    pass


CONTINUOUS = "continuous"
ONEHOT = "onehot"
MIN_SEQUENCE_LENGTH = 4
CATEGORICAL_MAX_UNIQUE = 10
CLIP_PERCENTILES = (1.0, 99.0)


def sort_classes(tokens) -> list[str]:
    tokens = sorted(set(tokens))
    try:
        return sorted(tokens, key=float)
    except ValueError:
        return tokens


def encode_labels(tokens, classes=None):
    """Map label tokens to class IDs; ``classes`` fixes the mapping when given."""
    tokens = [str(t) for t in tokens]
    if classes is None:
        classes = sort_classes(tokens)
    index = {c: i for i, c in enumerate(classes)}
    try:
        labels = np.array([index[t] for t in tokens], dtype=np.int64)
    except KeyError as exc:
        raise LabelError(f"unknown label token {exc.args[0]!r}; known classes {classes}") from None
    return labels, list(classes)


@dataclass
class SequenceDataset:
    sequences: np.ndarray  # (n, length)
    labels: np.ndarray
    classes: list[str]
    split: list[str] | None = None

    def __len__(self):
        return len(self.labels)


@dataclass
class Column:
    name: str
    kind: str = CONTINUOUS
    group: str | None = None  # source column of a one-hot member

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "group": self.group}


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (n, n_columns)
    columns: list[Column]
    labels: np.ndarray
    classes: list[str]
    scaling: "Preprocessor | None" = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise SchemaError("values must be (n_samples, n_columns)")
        if len(self.labels) != self.values.shape[0]:
            raise SchemaError("one label per row required")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def subset(self, rows) -> "FeatureMatrix":
        return replace(self, values=self.values[rows], labels=self.labels[rows])

    def nan_columns(self) -> list[str]:
        return [c.name for c, bad in zip(self.columns, np.isnan(self.values).any(axis=0)) if bad]


# --------------------------------------------------------------------------
# loading


def load_sequences(path, format: str = "auto", classes=None) -> SequenceDataset:
    """Load UCR-style text: one sample per line, label first, then the values.

    ``format`` is ``"tsv-label-first"`` (whitespace), ``"delimited"`` (comma)
    or ``"auto"`` (comma if the first line has one).
    """
    rows, tokens = [], []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    sep = None
    if format == "delimited" or (format == "auto" and lines and "," in lines[0]):
        sep = ","
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in (line.split(sep) if sep else line.split())]
        label, raw = parts[0], parts[1:]
        try:
            values = [float(v) for v in raw]
        except ValueError:
            bad = next(v for v in raw if not _is_float(v))
            raise DataFormatError(f"non-numeric value {bad!r}", line=lineno) from None
        if any(math.isnan(v) for v in values):
            raise DataFormatError("missing value", line=lineno)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DataFormatError(f"ragged row: {len(values)} values, expected {width}", line=lineno)
        if _is_float(label) and float(label) == int(float(label)):
            label = str(int(float(label)))
        rows.append(values)
        tokens.append(label)
    if not rows:
        raise EmptyDatasetError(f"{path}: no samples")
    labels, classes = encode_labels(tokens, classes)
    return SequenceDataset(np.array(rows, dtype=np.float64), labels, classes)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


_NAN_TOKENS = {"", "nan", "NaN", "NAN", "na", "NA"}


def load_feature_csv(path, classes=None, label_column: str = "label") -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise SchemaError(f"duplicate column names: {dupes}")
        if label_column not in header:
            raise SchemaError(f"missing {label_column!r} column")
        li = header.index(label_column)
        names = [h for i, h in enumerate(header) if i != li]
        rows, tokens = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"{len(rec)} cells, expected {len(header)}", line=lineno)
            row = []
            for i, cell in enumerate(rec):
                if i == li:
                    continue
                cell = cell.strip()
                if cell in _NAN_TOKENS:
                    row.append(math.nan)
                    continue
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DataFormatError(f"non-numeric cell {cell!r}", line=lineno,
                                          column=header[i]) from None
            rows.append(row)
            label = rec[li].strip()
            if _is_float(label) and float(label) == int(float(label)):
                label = str(int(float(label)))
            tokens.append(label)
    if not rows:
        raise EmptyDatasetError(f"{path}: no samples")
    labels, classes = encode_labels(tokens, classes)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return FeatureMatrix(values, [Column(n) for n in names], labels, classes)


def save_feature_csv(fm: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fm.names + ["label"])
        for row, lab in zip(fm.values, fm.labels):
            w.writerow([repr(float(v)) for v in row] + [fm.classes[lab]])


# --------------------------------------------------------------------------
# feature bank

FEATURE_NAMES = (
    "mean", "std", "min", "max", "median", "iqr",
    "acf_lag1", "acf_lag2", "acf_lag3", "zero_crossing_rate",
    "trend_slope", "mean_abs_diff", "n_local_maxima", "spectral_centroid",
)


def _lag_corr(x: np.ndarray, lag: int) -> float:
    u, v = x[:-lag], x[lag:]
    du, dv = u - u.mean(), v - v.mean()
    denom = math.sqrt(float((du * du).sum() * (dv * dv).sum()))
    if denom == 0.0:
        return 0.0
    return float((du * dv).sum() / denom)


def sequence_features(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < MIN_SEQUENCE_LENGTH:
        raise InsufficientLengthError(f"sequence length {n} < {MIN_SEQUENCE_LENGTH}")
    centered = x - x.mean()
    q1, q3 = np.percentile(x, [25, 75])
    crossings = np.count_nonzero(centered[:-1] * centered[1:] < 0)
    t = np.arange(n, dtype=np.float64)
    tc = t - t.mean()
    slope = float((tc * centered).sum() / (tc * tc).sum())
    maxima = np.count_nonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:]))
    mag = np.abs(np.fft.rfft(centered))
    freqs = np.fft.rfftfreq(n)
    total = mag.sum()
    centroid = float((freqs * mag).sum() / total) if total > 1e-12 * max(1.0, np.abs(x).max()) else 0.0
    return np.array([
        x.mean(), x.std(), x.min(), x.max(), np.median(x), q3 - q1,
        _lag_corr(x, 1), _lag_corr(x, 2), _lag_corr(x, 3),
        crossings / (n - 1), slope, np.abs(np.diff(x)).mean(), maxima, centroid,
    ])


def extract_basic_features(ds: SequenceDataset) -> FeatureMatrix:
    """Fourteen summary statistics per sequence (see ``FEATURE_NAMES``)."""
    if len(ds) == 0:
        raise EmptyDatasetError("no sequences")
    values = np.array([sequence_features(s) for s in ds.sequences])
    return FeatureMatrix(values, [Column(n) for n in FEATURE_NAMES], ds.labels.copy(), list(ds.classes))


# --------------------------------------------------------------------------
# preprocessing


@dataclass
class Preprocessor:
    """Fitted preprocessing parameters; everything is learned from the training split."""

    source_columns: list[str]
    onehot: dict[str, list[float]] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)  # clip lo, hi
    passthrough: dict[str, Column] = field(default_factory=dict)  # already one-hot inputs

    @property
    def output_columns(self) -> list[Column]:
        cols = []
        for name in self.source_columns:
            if name in self.passthrough:
                cols.append(self.passthrough[name])
            elif name in self.onehot:
                cols.extend(Column(f"{name}={_fmt(v)}", ONEHOT, name) for v in self.onehot[name])
            else:
                cols.append(Column(name, CONTINUOUS))
        return cols

    def transform(self, fm: FeatureMatrix) -> FeatureMatrix:
        index = {n: i for i, n in enumerate(fm.names)}
        missing = [n for n in self.source_columns if n not in index]
        if missing:
            raise SchemaError(f"columns missing from input: {missing}")
        out = []
        for name in self.source_columns:
            col = fm.values[:, index[name]]
            if name in self.passthrough:
                out.append(col[:, None])
            elif name in self.onehot:
                cats = np.array(self.onehot[name])
                out.append((col[:, None] == cats[None, :]).astype(np.float64))
            else:
                lo, hi = self.bounds[name]
                scaled = (np.clip(col, lo, hi) - lo) / (hi - lo)
                out.append(np.clip(scaled, 0.0, 1.0)[:, None])
        values = np.hstack(out) if out else np.zeros((len(fm.labels), 0))
        return FeatureMatrix(values, self.output_columns, fm.labels.copy(), list(fm.classes), self)

    def to_dict(self) -> dict:
        return {
            "source_columns": list(self.source_columns),
            "onehot": {k: [float(v) for v in vs] for k, vs in self.onehot.items()},
            "bounds": {k: [float(lo), float(hi)] for k, (lo, hi) in self.bounds.items()},
            "passthrough": {k: c.to_dict() for k, c in self.passthrough.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls(
            source_columns=list(d["source_columns"]),
            onehot={k: list(v) for k, v in d["onehot"].items()},
            bounds={k: (float(v[0]), float(v[1])) for k, v in d["bounds"].items()},
            passthrough={k: Column(**c) for k, c in d.get("passthrough", {}).items()},
        )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def fit_preprocessor(train: FeatureMatrix, test: FeatureMatrix | None = None,
                     categorical_max_unique: int = CATEGORICAL_MAX_UNIQUE):
    """Fit on ``train``; returns ``(preprocessor, deduplicated train rows)``."""
    if test is not None and test.names != train.names:
        raise SchemaError("train and test column names differ")
    # (1) columns with NaN in either split
    nan_cols = set(train.nan_columns()) | (set(test.nan_columns()) if test is not None else set())
    keep = [i for i, n in enumerate(train.names) if n not in nan_cols]
    # (2) duplicate training rows, then train-constant columns
    joined = np.column_stack([train.values[:, keep], train.labels])
    _, first = np.unique(joined, axis=0, return_index=True)
    rows = np.sort(first)
    vals = train.values[rows]
    keep = [i for i in keep if not np.all(vals[:, i] == vals[0, i])]
    if not keep:
        raise EmptyDatasetError("no feature columns left after preprocessing")
    pre = Preprocessor([train.names[i] for i in keep])
    lo_q, hi_q = CLIP_PERCENTILES
    for i in keep:
        col, name = vals[:, i], train.names[i]
        if train.columns[i].kind == ONEHOT:
            pre.passthrough[name] = train.columns[i]
            continue
        uniq = np.unique(col)
        # (3) low-cardinality columns become one-hot groups
        if len(uniq) <= categorical_max_unique:
            pre.onehot[name] = uniq.tolist()
            continue
        # (4) clip to training percentiles, min-max scale
        lo, hi = np.percentile(col, [lo_q, hi_q])
        if not hi > lo:
            lo, hi = col.min(), col.max()
        pre.bounds[name] = (float(lo), float(hi))
    return pre, rows


def preprocess(train: FeatureMatrix, test: FeatureMatrix,
               categorical_max_unique: int = CATEGORICAL_MAX_UNIQUE):
    """Drop NaN columns, dedupe, drop constants, one-hot low-cardinality columns, clip and scale.

    Parameters are fitted on ``train`` only; ``test`` is transformed with them.
    """
    pre, rows = fit_preprocessor(train, test, categorical_max_unique)
    return pre.transform(train.subset(rows)), pre.transform(test)


# --------------------------------------------------------------------------
# metrics


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean per-class recall over the classes present in ``y_true``."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("balanced accuracy of an empty sample")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred lengths differ")
    recalls = [np.mean(y_pred[y_true == c] == c) for c in np.unique(y_true)]
    return float(np.mean(recalls))


def best_at_k(accuracies, k: int) -> float:
    """Expected maximum of ``k`` values drawn without replacement from ``accuracies``."""
    x = np.sort(np.asarray(accuracies, dtype=np.float64))
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    total = math.comb(n, k)
    return float(sum(math.comb(i - 1, k - 1) / total * x[i - 1] for i in range(k, n + 1)))

