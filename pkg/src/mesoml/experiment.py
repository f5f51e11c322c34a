"""Two-phase experiment runner and report writer.

A run loads a CSV, imputes, restricts the predictors to one phase,
optionally selects features with Boruta, cross-validates every learner on
a shared fold plan and compares learners pairwise with the corrected
paired t-test on per-fold accuracy.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, _kernels
from .boruta import BorutaConfig, BorutaResult, boruta_run
from .dataset import (
    DEFAULT_CLASS_COLUMN, Dataset, impute_missing, load_table, select_phase, stratified_folds,
)
from .errors import StageError
from .evaluation import EvalReport, TTestResult, corrected_paired_ttest, cross_validate, cv_sizes
from .learners import ROSTER, make_learner
from .trees import ForestConfig

METRIC_LABELS = {
    "accuracy": "Classification accuracy (%)",
    "f_measure": "f-measure",
    "recall": "Recall",
    "precision": "Precision",
    "roc_auc": "ROC",
    "prc_auc": "PRC",
    "rmse": "RMSE",
}

_BOOL_TRUE = ("1", "true", "yes", "on")


@dataclass(frozen=True)
class ExperimentConfig:
    data: str | None = None
    phase: str = "phase1"
    models: tuple[str, ...] = ROSTER
    k: int = 10
    seed: int = 0
    alpha: float = 0.05
    out: str | None = None
    per_fold_selection: bool = False
    class_column: str = DEFAULT_CLASS_COLUMN
    boruta_max_iter: int = 100
    boruta_p_value: float = 0.01
    boruta_trees: int = 100
    workers: int = 1
    overrides: tuple[tuple[str, str, str], ...] = ()  # (model, parameter, raw value)

    def __post_init__(self):
        phase = str(self.phase).lower().replace("phase", "").strip()
        if phase not in ("1", "2"):
            raise ValueError(f"phase must be phase1 or phase2, got {self.phase!r}")
        object.__setattr__(self, "phase", "phase" + phase)
        models = tuple(self.models)
        if not models:
            raise ValueError("model roster is empty")
        for m in models:
            if m not in ROSTER:
                raise ValueError(f"unknown model {m!r}; choose from {', '.join(ROSTER)}")
        if len(set(models)) != len(models):
            raise ValueError("model roster has duplicates")
        object.__setattr__(self, "models", models)
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "overrides", tuple(sorted(tuple(o) for o in self.overrides)))

    def model_overrides(self, model: str) -> dict[str, str]:
        return {p: v for m, p, v in self.overrides if m == model}

    def canonical(self) -> str:
        """One ``key=value`` line per field, in declaration order."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "models":
                v = ",".join(v)
            elif f.name == "overrides":
                v = ";".join(f"{m}.{p}={x}" for m, p, x in v)
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_SCALAR_KEYS = {f.name for f in fields(ExperimentConfig)} - {"overrides"}


def _convert(key: str, raw: str):
    if key in ("k", "seed", "boruta_max_iter", "boruta_trees", "workers"):
        return int(raw)
    if key in ("alpha", "boruta_p_value"):
        return float(raw)
    if key == "per_fold_selection":
        return raw.strip().lower() in _BOOL_TRUE
    if key == "models":
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    return raw


def parse_assignments(pairs, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key=value`` strings to ``base``.

    Plain keys set config fields (dashes and underscores are equivalent);
    ``model.param=value`` sets a learner hyperparameter, e.g.
    ``mlp.hidden=8`` or ``klr.lam=1e-4``.
    """
    kw: dict[str, Any] = {}
    over = {(m, p): v for m, p, v in (base.overrides if base else ())}
    for raw in pairs:
        if "=" not in raw:
            raise ValueError(f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in raw.split("=", 1))
        key = key.replace("-", "_")
        if "." in key:
            model, param = key.split(".", 1)
            if model == "boruta":
                key = f"boruta_{param}"
            else:
                if model not in ROSTER:
                    raise ValueError(f"unknown model {model!r} in {raw!r}")
                over[(model, param)] = value
                continue
        if key not in _SCALAR_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        kw[key] = _convert(key, value)
    kw["overrides"] = tuple((m, p, v) for (m, p), v in over.items())
    return replace(base, **kw) if base else ExperimentConfig(**kw)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a plain-text ``key=value`` config file (``#`` starts a comment)."""
    lines = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return parse_assignments(lines, base)


# ---------------------------------------------------------------- run


@dataclass(frozen=True)
class SelectedModel:
    """Model trained on a column subset of the caller's schema."""

    columns: tuple[int, ...]
    model: Any

    def predict_distribution(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.model.predict_distribution(X[..., list(self.columns)])


@dataclass(frozen=True)
class RunReport:
    config: ExperimentConfig
    reports: tuple[EvalReport, ...]
    ttests: dict = field(repr=False)  # (model_a, model_b) -> TTestResult
    features: tuple[str, ...] = ()
    boruta: BorutaResult | None = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(r.model for r in self.reports)

    def report(self, model: str) -> EvalReport:
        for r in self.reports:
            if r.model == model:
                return r
        raise KeyError(model)


def _boruta_config(cfg: ExperimentConfig) -> BorutaConfig:
    return BorutaConfig(
        max_iter=cfg.boruta_max_iter, p_value=cfg.boruta_p_value,
        forest=ForestConfig(n_trees=cfg.boruta_trees), seed=cfg.seed,
    )


def _whitelist(res: BorutaResult) -> list[str]:
    """Confirmed features; Tentative ones are added only if none is Confirmed."""
    keep = res.confirmed() or res.tentative()
    if not keep:
        raise ValueError("Boruta rejected every predictor")
    return keep


def _per_fold_selection(learner, bcfg: BorutaConfig):
    def fit(d: Dataset):
        keep = _whitelist(boruta_run(d, bcfg))
        cols = tuple(d.index(n) for n in keep)
        return SelectedModel(cols, learner(d.select(keep)))
    return fit


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None) -> RunReport:
    """Run the configured protocol; any failure raises :class:`StageError`."""
    if data is None:
        if not cfg.data:
            raise StageError("load", "no data path configured")
        data = StageError.wrap("load", load_table, cfg.data, cfg.class_column)
    d = StageError.wrap("impute", impute_missing, data)
    d = StageError.wrap("select_phase", select_phase, d, cfg.phase)
    bres = None
    bcfg = _boruta_config(cfg)
    if cfg.phase == "phase2" and not cfg.per_fold_selection:
        bres = StageError.wrap("boruta", boruta_run, d, bcfg)
        keep = StageError.wrap("boruta", _whitelist, bres)
        d = d.select(keep)
    plan = StageError.wrap("folds", stratified_folds, d, cfg.k, cfg.seed)

    reports = []
    for name in cfg.models:
        learner = StageError.wrap(f"train:{name}", make_learner, name, cfg.model_overrides(name), cfg.seed)
        if cfg.phase == "phase2" and cfg.per_fold_selection:
            learner = _per_fold_selection(learner, bcfg)
        reports.append(StageError.wrap(f"cv:{name}", cross_validate, learner, d, plan, name, 0, cfg.workers))

    n_train, n_test = cv_sizes(d.n, cfg.k)
    ttests = {}
    for a in reports:
        for b in reports:
            ttests[(a.model, b.model)] = StageError.wrap(
                "ttest", corrected_paired_ttest, a.fold_accuracy, b.fold_accuracy, n_train, n_test, cfg.alpha)

    provenance = {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "backend": _kernels.BACKEND,
        "rows": d.n,
        "predictors": d.p,
    }
    return RunReport(cfg, tuple(reports), ttests, tuple(d.names), bres, provenance)


# ---------------------------------------------------------------- reports


def _fmt(metric: str, v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "-"
    return f"{100 * v:.2f}" if metric == "accuracy" else f"{v:.3f}"


def _stars(t: TTestResult) -> str:
    return "*" if t.significant else ""


def markdown_report(r: RunReport) -> str:
    models = r.models
    out = [f"# Results ({r.config.phase}, {r.config.k}-fold CV, seed {r.config.seed})", ""]
    out.append("| Metric | " + " | ".join(models) + " |")
    out.append("|---" * (len(models) + 1) + "|")
    for m in EvalReport.METRICS:
        vals = [_fmt(m, getattr(rep, m)) for rep in r.reports]
        out.append(f"| {METRIC_LABELS[m]} | " + " | ".join(vals) + " |")
    out += ["", f"## Corrected paired t-test on fold accuracy (alpha = {r.config.alpha})", ""]
    out.append("Cells give t for row minus column; * marks p < alpha.")
    out.append("")
    out.append("| | " + " | ".join(models) + " |")
    out.append("|---" * (len(models) + 1) + "|")
    for a in models:
        cells = []
        for b in models:
            t = r.ttests[(a, b)]
            cells.append(f"{t.t:.3f}{_stars(t)}" if math.isfinite(t.t) else f"{t.t}{_stars(t)}")
        out.append(f"| {a} | " + " | ".join(cells) + " |")
    if r.config.phase == "phase2":
        out += ["", "## Predictors used", "", ", ".join(r.features) or "(none)"]
    return "\n".join(out) + "\n"


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(r: RunReport, out_dir, formats=("markdown", "csv")) -> list[Path]:
    """Write report.md, report.csv, ttest.csv, boruta.csv and provenance.txt.

    Floats in the CSV files use ``repr`` so they parse back exactly.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("report", f"cannot create {out}: {exc}") from None
    written = []
    try:
        if "markdown" in formats:
            (out / "report.md").write_text(markdown_report(r))
            written.append(out / "report.md")
        if "csv" in formats:
            rows = [[rep.model, m, repr(float(getattr(rep, m)))] for rep in r.reports for m in EvalReport.METRICS]
            _write_csv(out / "report.csv", ["model", "metric", "value"], rows)
            trow = []
            for (a, b), t in r.ttests.items():
                trow.append([a, b, repr(t.mean_difference), repr(t.t), repr(t.p_value), int(t.significant), _stars(t)])
            _write_csv(out / "ttest.csv", ["model_a", "model_b", "mean_difference", "t", "p_value", "significant", "star"], trow)
            written += [out / "report.csv", out / "ttest.csv"]
        bpath = out / "boruta.csv"
        if r.boruta is not None:
            r.boruta.to_csv(bpath)
        else:
            _write_csv(bpath, ["name", "decision", "median_z", "hits", "trials"], [])
        written.append(bpath)
        prov = out / "provenance.txt"
        lines = [f"{k}={v}" for k, v in r.provenance.items()]
        lines.append("features=" + ",".join(r.features))
        prov.write_text("\n".join(lines) + "\n\n# config\n" + r.config.canonical())
        written.append(prov)
    except OSError as exc:
        raise StageError("report", f"cannot write to {out}: {exc}") from None
    return written


def read_report_csv(path) -> dict[tuple[str, str], float]:
    with Path(path).open(newline="") as fh:
        return {(row["model"], row["metric"]): float(row["value"]) for row in csv.DictReader(fh)}
