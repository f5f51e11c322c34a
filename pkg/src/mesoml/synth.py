"""Synthetic clinical-style datasets drawn from a per-column schema.

A schema row gives a column's kind and marginal parameters plus an
``effect``: the shift applied to class-1 rows (in standard deviations for
numeric and integer columns, on the logit scale for binary and nominal
ones). A ``leak`` column copies the class label.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import DEFAULT_CLASS_COLUMN, NOMINAL, NUMERIC, AttributeSpec, Dataset
from .errors import SchemaError

KINDS = ("numeric", "integer", "binary", "nominal", "leak")
CLASS_VALUES = ("1", "2")
DEFAULT_PREVALENCE = 96 / 324  # share of class "2"
BUILTIN = "builtin"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    mean: float = 0.0
    deviation: float = 1.0
    floor: float | None = None
    categories: tuple[str, ...] = ()
    effect: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise SchemaError("schema column without a name")
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind in ("numeric", "integer") and not self.deviation >= 0:
            raise SchemaError(f"{self.name}: deviation must be >= 0")
        if self.kind == "binary" and not 0.0 <= self.mean <= 1.0:
            raise SchemaError(f"{self.name}: binary mean must lie in [0, 1]")
        if self.kind == "nominal" and len(self.categories) < 2:
            raise SchemaError(f"{self.name}: nominal column needs >= 2 categories")


def _float(cell: str, default, name, field):
    cell = cell.strip()
    if cell == "":
        return default
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(f"{name}: {field} {cell!r} is not a number") from None


def load_schema(path) -> tuple[ColumnSchema, ...]:
    """Read a schema CSV (name, kind, mean, deviation, floor, categories, effect).

    ``path`` may be ``"builtin"`` for the packaged clinical schema.
    """
    if str(path) == BUILTIN:
        text = resources.files("mesoml").joinpath("data/mesothelioma_schema.csv").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise SchemaError(f"cannot read schema {path}: {exc}") from None
    rows = list(csv.DictReader(text.splitlines()))
    need = {"name", "kind"}
    if not rows or not need <= set(rows[0]):
        raise SchemaError("schema needs at least the columns 'name' and 'kind'")
    out = []
    for r in rows:
        name = (r.get("name") or "").strip()
        cats = tuple(c.strip() for c in (r.get("categories") or "").split("|") if c.strip())
        out.append(ColumnSchema(
            name=name,
            kind=(r.get("kind") or "").strip().lower(),
            mean=_float(r.get("mean") or "", 0.0, name, "mean"),
            deviation=_float(r.get("deviation") or "", 1.0, name, "deviation"),
            floor=_float(r.get("floor") or "", None, name, "floor"),
            categories=cats,
            effect=_float(r.get("effect") or "", 0.0, name, "effect"),
        ))
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    return tuple(out)


def _logit(p):
    p = min(max(p, 1e-9), 1 - 1e-9)
    return math.log(p / (1 - p))


def _column(c: ColumnSchema, y: np.ndarray, rng, leak: bool):
    n = y.size
    shift = c.effect * y
    if c.kind in ("numeric", "integer"):
        v = rng.normal(c.mean, c.deviation, n) + shift * c.deviation
        if c.kind == "integer":
            v = np.rint(v)
        if c.floor is not None:
            v = np.maximum(v, c.floor)
        return AttributeSpec(c.name, NUMERIC), v
    if c.kind == "binary":
        p = 1.0 / (1.0 + np.exp(-(_logit(c.mean) + shift)))
        return AttributeSpec(c.name, NUMERIC), (rng.random(n) < p).astype(np.float64)
    if c.kind == "nominal":
        k = len(c.categories)
        u = rng.random(n)
        # class-1 rows favour the first category by ``effect`` on the logit scale
        p0 = 1.0 / (1.0 + np.exp(-(_logit(1.0 / k) + shift)))
        rest = rng.integers(1, k, n) if k > 1 else np.zeros(n, dtype=np.int64)
        return AttributeSpec(c.name, NOMINAL, c.categories), np.where(u < p0, 0, rest).astype(np.float64)
    if not leak:
        return None
    return AttributeSpec(c.name, NOMINAL, CLASS_VALUES), y.astype(np.float64)


def generate_synthetic(schema=BUILTIN, n: int = 324, seed: int = 0,
                       prevalence: float = DEFAULT_PREVALENCE, leak: bool = True) -> Dataset:
    """Draw ``n`` rows; exactly ``round(n * prevalence)`` belong to class "2".

    Rows are shuffled so that class order carries no information.
    """
    if n < 20:
        raise ValueError("n must be >= 20")
    if not 0.0 < prevalence < 1.0:
        raise ValueError("prevalence must lie in (0, 1)")
    cols = load_schema(schema) if isinstance(schema, (str, Path)) else tuple(schema)
    if not cols:
        raise SchemaError("empty schema")
    n_pos = int(round(n * prevalence))
    n_pos = min(max(n_pos, 1), n - 1)
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=np.int8)
    y[rng.permutation(n)[:n_pos]] = 1
    attrs, data = [], []
    for c in cols:
        made = _column(c, y, rng, leak)
        if made is not None:
            attrs.append(made[0])
            data.append(made[1])
    cls = AttributeSpec(DEFAULT_CLASS_COLUMN, NOMINAL, CLASS_VALUES, role="class")
    X = np.column_stack(data) if data else np.empty((n, 0))
    return Dataset(attrs, X, y, cls)


def informative_dataset(n: int = 500, effects=(1.0, 0.9, 0.8, 0.7, 0.6), n_noise: int = 15,
                        seed: int = 0) -> Dataset:
    """Balanced labels; column j < len(effects) is N(effects[j] * y, 1), the rest N(0, 1)."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n).astype(np.int8)
    p = len(effects) + n_noise
    X = rng.normal(size=(n, p))
    X[:, : len(effects)] += np.outer(y, effects)
    attrs = [AttributeSpec(f"signal{j + 1}") for j in range(len(effects))]
    attrs += [AttributeSpec(f"noise{j + 1}") for j in range(n_noise)]
    return Dataset(attrs, X, y, AttributeSpec("class", NOMINAL, ("0", "1"), role="class"))
