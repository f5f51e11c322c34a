"""Tabular dataset container, CSV I/O, preprocessing and fold plans.

Nominal values are stored as category indices in a float matrix; missing
values are ``NaN``. Every transform returns a new :class:`Dataset`.
"""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SchemaError

NUMERIC = "numeric"
NOMINAL = "nominal"

DEFAULT_CLASS_COLUMN = "class of diagnosis"
MISSING_TOKEN = "?"

# Attributes recorded only after the diagnosis was confirmed.
POST_DIAGNOSIS = ("diagnosis method", "type of MM", "keep side", "dead or not")
ALWAYS_EXCLUDED = ("dead or not",)


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str = NUMERIC
    categories: tuple[str, ...] = ()
    role: str = "predictor"
    source: str | None = None
    shadow: bool = False

    def __post_init__(self):
        if self.kind not in (NUMERIC, NOMINAL):
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ("predictor", "class", "excluded"):
            raise SchemaError(f"attribute {self.name!r}: unknown role {self.role!r}")
        if self.kind == NOMINAL and len(self.categories) < 2:
            raise SchemaError(f"nominal attribute {self.name!r} needs >= 2 categories")
        if self.kind == NUMERIC and self.categories:
            raise SchemaError(f"numeric attribute {self.name!r} cannot have categories")

    @property
    def is_nominal(self) -> bool:
        return self.kind == NOMINAL


class Dataset:
    """Immutable n x p predictor grid plus a binary class column.

    Parameters
    ----------
    attributes : sequence of AttributeSpec
        One spec per predictor column.
    X : array_like, shape (n, p)
        Numeric values or category indices; ``NaN`` marks missing.
    y : array_like, shape (n,)
        Class index (0 or 1) into ``class_attribute.categories``.
    class_attribute : AttributeSpec
        Nominal spec with exactly two categories.
    """

    __slots__ = ("attributes", "X", "y", "class_attribute", "_index")

    def __init__(self, attributes, X, y, class_attribute):
        attributes = tuple(attributes)
        X = np.array(X, dtype=np.float64, copy=True)
        if X.ndim == 1 and len(attributes) == 0:
            X = X.reshape(-1, 0)
        if X.ndim != 2:
            raise SchemaError("predictor grid must be two-dimensional")
        y = np.array(y, dtype=np.int8, copy=True).reshape(-1)
        if X.shape[1] != len(attributes):
            raise SchemaError(
                f"{X.shape[1]} columns but {len(attributes)} attribute specs"
            )
        if X.shape[0] != y.shape[0]:
            raise SchemaError(f"{X.shape[0]} rows but {y.shape[0]} class labels")
        if class_attribute.kind != NOMINAL or len(class_attribute.categories) != 2:
            raise SchemaError("class attribute must be nominal with exactly 2 classes")
        if y.size and (y.min() < 0 or y.max() > 1):
            raise SchemaError("class labels must be 0 or 1")
        for j, a in enumerate(attributes):
            if a.is_nominal:
                col = X[:, j]
                ok = np.isnan(col) | ((col >= 0) & (col < len(a.categories)) & (col == np.floor(col)))
                if not ok.all():
                    raise SchemaError(f"nominal column {a.name!r} has an invalid category index")
        names = [a.name for a in attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "class_attribute", class_attribute)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def class_names(self) -> tuple[str, str]:
        return self.class_attribute.categories

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def attribute(self, name: str) -> AttributeSpec:
        return self.attributes[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.index(name)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=2)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.attributes, self.X[rows], self.y[rows], self.class_attribute)

    def select(self, names: Iterable[str]) -> "Dataset":
        idx = [self.index(n) for n in names]
        return Dataset([self.attributes[i] for i in idx], self.X[:, idx], self.y, self.class_attribute)

    def drop(self, names: Iterable[str]) -> "Dataset":
        gone = set(names)
        return self.select([n for n in self.names if n not in gone])

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.attributes == other.attributes
            and self.class_attribute == other.class_attribute
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, classes={self.class_names})"


# ---------------------------------------------------------------- names


def normalize_name(name: str) -> str:
    return re.sub(r"[^0-9a-z]", "", name.lower())


def _name_keys(name: str) -> set[str]:
    keys = {normalize_name(name)}
    m = re.match(r"^(.*?)\(([^)]*)\)\s*$", name.strip())
    if m:
        keys.add(normalize_name(m.group(1)))
        keys.add(normalize_name(m.group(2)))
    keys.discard("")
    return keys


def find_attribute(names: Sequence[str], query: str) -> str | None:
    """Resolve ``query`` against ``names`` ignoring case, punctuation and
    parenthesised abbreviations (``"CRP"`` matches ``"C reactive protein (CRP)"``)."""
    if query in names:
        return query
    qkeys = _name_keys(query)
    for n in names:
        if qkeys & _name_keys(n):
            return n
    return None


# ---------------------------------------------------------------- CSV I/O


def _natural_key(value: str):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_table(
    path,
    class_column: str = DEFAULT_CLASS_COLUMN,
    missing: str = MISSING_TOKEN,
    nominal: Iterable[str] = (),
    numeric: Iterable[str] = (),
) -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    Columns whose non-missing values all parse as numbers are numeric
    unless listed in ``nominal``. Category order is natural sort order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", row=lineno)

    cls_name = find_attribute(header, class_column)
    if cls_name is None:
        raise SchemaError(f"class column {class_column!r} not found")
    cls_idx = header.index(cls_name)

    nominal_names = {find_attribute(header, q) or q for q in nominal}
    numeric_names = {find_attribute(header, q) or q for q in numeric}
    cells = [[c.strip() for c in r] for r in body]

    attrs: list[AttributeSpec] = []
    columns: list[np.ndarray] = []
    for j, name in enumerate(header):
        if j == cls_idx:
            continue
        raw = [r[j] for r in cells]
        present = [v for v in raw if v != missing]
        if name in numeric_names:
            is_num = True
        elif name in nominal_names:
            is_num = False
        else:
            is_num = all(_is_number(v) for v in present)
        if is_num:
            col = np.empty(len(raw))
            for i, v in enumerate(raw):
                if v == missing:
                    col[i] = np.nan
                else:
                    try:
                        col[i] = float(v)
                    except ValueError:
                        raise ParseError(f"column {name!r}: {v!r} is not numeric", row=i + 2) from None
            attrs.append(AttributeSpec(name, NUMERIC))
        else:
            cats = tuple(sorted(set(present), key=_natural_key))
            # a nominal attribute always carries two or more levels
            for filler in ("<other>", "<other2>"):
                if len(cats) < 2:
                    cats = cats + (filler,)
            lookup = {c: k for k, c in enumerate(cats)}
            col = np.array([np.nan if v == missing else lookup[v] for v in raw], dtype=np.float64)
            attrs.append(AttributeSpec(name, NOMINAL, cats))
        columns.append(col)

    labels = [r[cls_idx] for r in cells]
    for i, v in enumerate(labels):
        if v == missing or v == "":
            raise ParseError("missing class label", row=i + 2)
    classes = sorted(set(labels), key=_natural_key)
    if len(classes) < 2:
        raise SchemaError("single-class dataset")
    if len(classes) > 2:
        raise SchemaError(f"expected a binary class, found {len(classes)} classes")
    y = np.array([classes.index(v) for v in labels], dtype=np.int8)
    X = np.column_stack(columns) if columns else np.empty((len(labels), 0))
    return Dataset(attrs, X, y, AttributeSpec(cls_name, NOMINAL, tuple(classes), role="class"))


def _format_value(v: float, attr: AttributeSpec, missing: str) -> str:
    if math.isnan(v):
        return missing
    if attr.is_nominal:
        return attr.categories[int(v)]
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_table(d: Dataset, path, missing: str = MISSING_TOKEN) -> None:
    """Write ``d`` as CSV; :func:`load_table` reads it back value-for-value."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names + [d.class_attribute.name])
        for i in range(d.n):
            row = [_format_value(d.X[i, j], a, missing) for j, a in enumerate(d.attributes)]
            row.append(d.class_names[d.y[i]])
            w.writerow(row)


# ---------------------------------------------------------------- transforms


def impute_missing(d: Dataset) -> Dataset:
    """Replace missing numeric values by the column mean, nominal by the mode."""
    mask = np.isnan(d.X)
    if not mask.any():
        return d
    X = d.X.copy()
    for j, a in enumerate(d.attributes):
        m = mask[:, j]
        if not m.any():
            continue
        if m.all():
            raise SchemaError(f"attribute {a.name!r} is entirely missing")
        present = X[~m, j]
        if a.is_nominal:
            counts = np.bincount(present.astype(np.intp), minlength=len(a.categories))
            X[m, j] = float(np.argmax(counts))
        else:
            X[m, j] = present.mean()
    return Dataset(d.attributes, X, d.y, d.class_attribute)


def one_hot_encode(d: Dataset) -> Dataset:
    """Expand each nominal predictor into one indicator column per category."""
    if not any(a.is_nominal for a in d.attributes):
        return d
    attrs, cols = [], []
    for j, a in enumerate(d.attributes):
        col = d.X[:, j]
        if not a.is_nominal:
            attrs.append(a)
            cols.append(col)
            continue
        miss = np.isnan(col)
        for k, cat in enumerate(a.categories):
            ind = (col == k).astype(np.float64)
            ind[miss] = np.nan
            attrs.append(AttributeSpec(f"{a.name}={cat}", NUMERIC, source=a.name, shadow=a.shadow))
            cols.append(ind)
    X = np.column_stack(cols) if cols else np.empty((d.n, 0))
    return Dataset(attrs, X, d.y, d.class_attribute)


@dataclass(frozen=True)
class Scaling:
    """Per-column (mean, sd) learned by :func:`standardize`."""

    names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    warnings: tuple[str, ...] = ()

    def apply(self, d: Dataset) -> Dataset:
        if tuple(d.names) != self.names:
            raise SchemaError("dataset columns do not match the fitted scaling")
        X = (d.X - self.mean) / self.sd
        return Dataset(d.attributes, X, d.y, d.class_attribute)


def standardize(d: Dataset) -> tuple[Dataset, Scaling]:
    """Scale numeric columns to sample mean 0 and sample sd 1.

    Constant columns are left untouched and reported in ``Scaling.warnings``.
    Nominal columns are never scaled.
    """
    p = d.p
    mean = np.zeros(p)
    sd = np.ones(p)
    notes = []
    for j, a in enumerate(d.attributes):
        if a.is_nominal:
            continue
        col = d.X[:, j]
        col = col[~np.isnan(col)]
        if col.size < 2:
            notes.append(f"{a.name}: too few values to scale")
            continue
        s = col.std(ddof=1)
        if not s > 0:
            notes.append(f"{a.name}: constant column left unscaled")
            continue
        mean[j] = col.mean()
        sd[j] = s
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    scaling = Scaling(tuple(d.names), mean, sd, tuple(notes))
    return scaling.apply(d), scaling


# ---------------------------------------------------------------- folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray = field(repr=False)
    seed: int = 0

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def splits(self):
        for f in range(self.k):
            yield f, self.train_indices(f), self.test_indices(f)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def __eq__(self, other):
        if not isinstance(other, FoldPlan):
            return NotImplemented
        return self.k == other.k and self.seed == other.seed and np.array_equal(self.assignment, other.assignment)

    __hash__ = None


def stratified_folds(d: Dataset, k: int, seed: int) -> FoldPlan:
    """Seeded stratified k-fold assignment.

    Members of each class are shuffled and dealt round-robin, continuing
    the deal across classes, so fold sizes and per-class fold counts each
    differ by at most one.
    """
    if k < 2:
        raise SchemaError("k must be >= 2")
    counts = d.class_counts()
    for c, cnt in enumerate(counts):
        if cnt < k:
            raise SchemaError(
                f"class {d.class_names[c]!r} has {cnt} members, fewer than k={k}"
            )
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(d.y == c)) for c in (0, 1)])
    assignment = np.empty(d.n, dtype=np.intp)
    assignment[order] = np.arange(d.n) % k
    assignment.setflags(write=False)
    return FoldPlan(k, assignment, seed)


# ---------------------------------------------------------------- phases


def _resolve(d: Dataset, names: Iterable[str]) -> list[str]:
    out = []
    for q in names:
        hit = find_attribute(d.names, q)
        if hit is not None:
            out.append(hit)
    return out


def select_phase(d: Dataset, phase, feature_whitelist: Iterable[str] | None = None) -> Dataset:
    """Restrict predictors to the phase-1 or phase-2 input set.

    Phase 1 keeps everything but "dead or not". Phase 2 also drops the
    post-diagnosis attributes and, when given, keeps only whitelisted names.
    """
    phase = str(phase).lower().replace("phase", "").strip()
    if phase not in ("1", "2"):
        raise SchemaError(f"unknown phase {phase!r}")
    drop = ALWAYS_EXCLUDED if phase == "1" else POST_DIAGNOSIS
    out = d.drop(_resolve(d, drop))
    if feature_whitelist is not None:
        keep = []
        for q in feature_whitelist:
            hit = find_attribute(d.names, q)
            if hit is None:
                raise SchemaError(f"unknown attribute {q!r} in whitelist")
            if hit in out._index and hit not in keep:
                keep.append(hit)
        out = out.select([n for n in out.names if n in keep])
    return out


# ---------------------------------------------------------------- profiling


@dataclass(frozen=True)
class ProfileRow:
    name: str
    mean: float | None
    deviation: float | None
    association: float


@dataclass(frozen=True)
class ProfileReport:
    rows: tuple[ProfileRow, ...]

    def __getitem__(self, name) -> ProfileRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["Predictor", "Mean", "Deviation", "Association"])
            for r in self.rows:
                w.writerow([
                    r.name,
                    "-" if r.mean is None else f"{r.mean:.4f}",
                    "-" if r.deviation is None else f"{r.deviation:.4f}",
                    f"{r.association:.4f}",
                ])


def point_biserial(x: np.ndarray, y: np.ndarray) -> float:
    ok = ~np.isnan(x)
    x, y = x[ok], y[ok].astype(np.float64)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    xc, yc = x - x.mean(), y - y.mean()
    r = float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))
    return min(abs(r), 1.0)


def cramers_v(codes: np.ndarray, y: np.ndarray) -> float:
    ok = ~np.isnan(codes)
    codes, y = codes[ok].astype(np.intp), y[ok].astype(np.intp)
    if codes.size == 0:
        return 0.0
    table = np.zeros((codes.max() + 1, 2))
    np.add.at(table, (codes, y), 1.0)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if min(r, c) < 2:
        return 0.0
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return min(math.sqrt(chi2 / (n * (min(r, c) - 1))), 1.0)


def profile(d: Dataset) -> ProfileReport:
    """Mean, sample deviation and class association per predictor.

    Association is |point-biserial r| for numeric and Cramer's V for
    nominal predictors, both in [0, 1].
    """
    rows = []
    for j, a in enumerate(d.attributes):
        col = d.X[:, j]
        if a.is_nominal:
            rows.append(ProfileRow(a.name, None, None, cramers_v(col, d.y)))
        else:
            vals = col[~np.isnan(col)]
            mean = float(vals.mean()) if vals.size else float("nan")
            dev = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
            rows.append(ProfileRow(a.name, mean, dev, point_biserial(col, d.y)))
    return ProfileReport(tuple(rows))
