"""Experiment orchestration: the horizon grid, LOSO training, aggregation, reports.

Results file (JSON, UTF-8, ``sort_keys``, 2-space indent, non-finite numbers
written as ``null``)::

    {"format": "workload-forecast-results", "version": 1,
     "config": {...ExperimentConfig without data_dir/workers...},
     "cells": [{"mode", "component", "lag_s", "pred_s", "mean_rho", "sd_rho",
                "n_subjects", "per_subject_rho": {id: rho},
                "dropped_subjects": [id, ...],
                "subjects": {id: {"fold_rho": [rho | null, ...],
                                  "epochs_run", "best_val_loss",
                                  "audit": {...}}}}, ...],
     "lag_analysis": [{"mode", "component", "pred_s", "lags_s", "subjects",
                       "friedman": {"chi2", "df", "n_subjects", "p", "kendalls_w"},
                       "pairwise": {"<lag_a>-<lag_b>": {"w_statistic", "n_effective", "p",
                                    "method", "cohens_d", "rank_sum_pos",
                                    "rank_sum_neg", "tied"}}}, ...]}

Pairwise tests compare the longer lag against the shorter one, so a positive
Cohen's d means the longer lag horizon scored higher. Cells are ordered
mode, component, lag, pred in configuration order.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .data import SubjectSeries, WorkloadComponent, read_cohort, validate_series, write_cohort
from .errors import (
    ConfigError,
    ConstantInput,
    IncompleteGrid,
    InsufficientColumns,
    IoFailure,
    AllZeroDifferences,
)
from .mlp import TrainConfig, predict_batch, train_early_stopping
from .seeding import derive_seed
from .stats import (
    FriedmanResult,
    WilcoxonResult,
    friedman_test,
    spearman_rho,
    wilcoxon_signed_rank,
)
from .synth import SynthParams, load_default_config, synthesize_cohort
from .windows import (
    LAG_GRID_S,
    PRED_GRID_S,
    ForecastMode,
    HorizonConfig,
    ModeKind,
    WindowBatch,
    build_window_batch,
    plan_loso_cv,
)

log = logging.getLogger(__name__)

RESULTS_FORMAT = "workload-forecast-results"
RESULTS_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: str = "cohort"
    modes: tuple[ModeKind, ...] = (ModeKind.UNIVARIATE, ModeKind.MULTIVARIATE)
    components: tuple[WorkloadComponent, ...] = (WorkloadComponent.OVERALL,)
    lag_grid_s: tuple[int, ...] = LAG_GRID_S
    pred_grid_s: tuple[int, ...] = PRED_GRID_S
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthParams | None = None
    n_subjects: int = 16
    seed: int = 0
    min_windows_per_fold: int = 24
    n_folds: int = 5
    workers: int = 1
    allow_nonstandard_grid: bool = False

    def __post_init__(self):
        if not (self.modes and self.components and self.lag_grid_s and self.pred_grid_s):
            raise ConfigError("modes, components and both horizon grids must be non-empty")
        if not self.allow_nonstandard_grid:
            bad = sorted(set(self.lag_grid_s) - set(LAG_GRID_S)) + sorted(set(self.pred_grid_s) - set(PRED_GRID_S))
            if bad:
                raise ConfigError(f"horizons {bad} are outside the standard grid; "
                                  "set allow_nonstandard_grid to use them")
        if self.workers < 1 or self.n_folds < 1 or self.min_windows_per_fold < 1 or self.n_subjects < 1:
            raise ConfigError("workers, n_folds, min_windows_per_fold and n_subjects must be >= 1")
        for lag in self.lag_grid_s:
            for pred in self.pred_grid_s:
                HorizonConfig(lag, pred)

    def cells(self) -> list[tuple[ModeKind, WorkloadComponent, int, int]]:
        return list(itertools.product(self.modes, self.components, self.lag_grid_s, self.pred_grid_s))

    def echo(self) -> dict:
        """Configuration as recorded in results; omits fields that must not change the output."""
        return {
            "modes": [m.value for m in self.modes],
            "components": [c.value for c in self.components],
            "lag_grid_s": list(self.lag_grid_s),
            "pred_grid_s": list(self.pred_grid_s),
            "train": asdict(self.train),
            "synth": None if self.synth is None else _synth_doc(self.synth),
            "n_subjects": self.n_subjects,
            "seed": self.seed,
            "min_windows_per_fold": self.min_windows_per_fold,
            "n_folds": self.n_folds,
        }


def _synth_doc(p: SynthParams) -> dict:
    return {
        "segment_duration_s": p.segment_duration_s,
        "sample_period_s": p.sample_period_s,
        "ar1_coefficient": p.ar1_coefficient,
        "noise_sd": p.noise_sd,
        "transition_ramp_s": p.transition_ramp_s,
        "seed": p.seed,
        "base_levels": {lvl.value: {c.value: v for c, v in comps.items()} for lvl, comps in p.base_levels.items()},
    }


def _merge(base: dict, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_mapping(doc: Mapping) -> ExperimentConfig:
    try:
        train_doc = dict(doc.get("train") or {})
        train_doc.pop("seed", None)
        synth_doc = doc.get("synth")
        synth = None
        n_subjects = 16
        if synth_doc:
            synth_doc = dict(synth_doc)
            n_subjects = int(synth_doc.pop("n_subjects", n_subjects))
            synth_doc.setdefault("seed", int(doc.get("seed", 0)))
            synth = SynthParams.from_mapping(synth_doc)
        return ExperimentConfig(
            data_dir=str(doc.get("data_dir", "cohort")),
            modes=tuple(ModeKind(str(m).lower()) for m in _as_list(doc.get("modes", ["univariate", "multivariate"]))),
            components=tuple(WorkloadComponent.parse(str(c)) for c in _as_list(doc.get("components", ["overall"]))),
            lag_grid_s=tuple(int(v) for v in _as_list(doc.get("lag_grid_s", LAG_GRID_S))),
            pred_grid_s=tuple(int(v) for v in _as_list(doc.get("pred_grid_s", PRED_GRID_S))),
            train=TrainConfig(**train_doc),
            synth=synth,
            n_subjects=n_subjects,
            seed=int(doc.get("seed", 0)),
            min_windows_per_fold=int(doc.get("min_windows_per_fold", 24)),
            n_folds=int(doc.get("n_folds", 5)),
            workers=int(doc.get("workers", 1)),
            allow_nonstandard_grid=bool(doc.get("allow_nonstandard_grid", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def _as_list(v) -> list:
    if isinstance(v, (str, int)):
        return [v]
    return list(v)


def load_config(path: str | os.PathLike | None = None, overrides: Mapping | None = None) -> ExperimentConfig:
    """Defaults, then the YAML/JSON file at ``path``, then ``overrides``."""
    doc = load_default_config()
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(user, Mapping):
            raise ConfigError(f"config {path} must hold a mapping")
        doc = _merge(doc, user)
    if overrides:
        doc = _merge(doc, overrides)
    return config_from_mapping(doc)


# -- results ------------------------------------------------------------------

@dataclass
class SubjectOutcome:
    fold_rho: list[float | None]
    epochs_run: int
    best_val_loss: float
    audit: dict

    @property
    def score(self) -> float | None:
        valid = [r for r in self.fold_rho if r is not None]
        return float(np.mean(valid)) if valid else None


@dataclass
class CellResult:
    mode: ModeKind
    component: WorkloadComponent
    lag_s: int
    pred_s: int
    per_subject_rho: dict[str, float]
    mean_rho: float
    sd_rho: float
    subjects: dict[str, SubjectOutcome] = field(default_factory=dict)
    dropped_subjects: list[str] = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return (self.mode, self.component, self.lag_s, self.pred_s)


def aggregate(per_subject_rho: Mapping[str, float]) -> tuple[float, float]:
    """(mean, sample sd) of per-subject scores; nan where undefined."""
    vals = np.array([per_subject_rho[k] for k in sorted(per_subject_rho)], dtype=np.float64)
    mean = float(vals.mean()) if len(vals) else math.nan
    sd = float(vals.std(ddof=1)) if len(vals) > 1 else math.nan
    return mean, sd


@dataclass(frozen=True)
class _Task:
    cell: tuple[ModeKind, WorkloadComponent, int, int]
    test_subject: str
    train_subjects: tuple[str, ...]
    blocks: tuple[tuple[int, int], ...]
    train: TrainConfig


_COHORT: dict[str, SubjectSeries] = {}


def _init_worker(cohort: Mapping[str, SubjectSeries]):
    global _COHORT
    _COHORT = dict(cohort)


def _run_task(task: _Task) -> SubjectOutcome:
    with threadpool_limits(limits=1):
        return evaluate_subject(task, _COHORT)


def evaluate_subject(task: _Task, cohort: Mapping[str, SubjectSeries]) -> SubjectOutcome:
    """Train on the task's training subjects, score each blocked fold of the test subject."""
    mode_kind, comp, lag, pred = task.cell
    mode = ForecastMode(mode_kind, comp)
    hcfg = HorizonConfig(lag, pred)
    train = WindowBatch.concat(build_window_batch(cohort[s], hcfg, mode) for s in task.train_subjects)
    model, report = train_early_stopping(train, task.train, train.features.shape[1])

    test = cohort[task.test_subject]
    fold_rho: list[float | None] = []
    folds = []
    for start, stop in task.blocks:
        wb = build_window_batch(test, hcfg, mode, (start, stop))
        pred_y = predict_batch(model, wb.features)
        try:
            fold_rho.append(spearman_rho(pred_y, wb.targets).rho)
        except ConstantInput:
            fold_rho.append(None)
        folds.append({
            "block": [start, stop],
            "n_windows": len(wb),
            "first_input_index": int(wb.target_index.min()) - hcfg.span + 1,
            "last_target_index": int(wb.target_index.max()),
            "subjects": sorted(set(wb.subject_ids)),
        })
    audit = {
        "test_subject": task.test_subject,
        "train_subjects": sorted(set(train.subject_ids)),
        "n_train_windows": len(train),
        "n_train_windows_from_test_subject": sum(1 for s in train.subject_ids if s == task.test_subject),
        "folds": folds,
    }
    return SubjectOutcome(fold_rho, report.epochs_run, report.best_val_loss, audit)


def prepare_cohort(cfg: ExperimentConfig) -> list[SubjectSeries]:
    """Load the cohort from ``data_dir``; synthesize it there first if it is empty and synth params exist."""
    root = Path(cfg.data_dir)
    if not (root.is_dir() and any(root.glob("*.csv"))):
        if cfg.synth is None:
            raise IoFailure(f"no series CSV files in {root} and no synth parameters given")
        write_cohort(synthesize_cohort(cfg.n_subjects, cfg.synth), root)
    return read_cohort(root)


def plan_tasks(cfg: ExperimentConfig, cohort: Sequence[SubjectSeries]) -> list[_Task]:
    metas = [validate_series(s) for s in cohort]
    tasks = []
    for cell in cfg.cells():
        mode_kind, comp, lag, pred = cell
        hcfg = HorizonConfig(lag, pred)
        for cv in plan_loso_cv(metas, hcfg, ForecastMode(mode_kind, comp), cfg.n_folds, cfg.min_windows_per_fold):
            seed = derive_seed(cfg.seed, mode_kind.value, comp.value, lag, pred, cv.test_subject)
            tasks.append(_Task(cell, cv.test_subject, tuple(sorted(cv.train_subjects)),
                               tuple(cv.fold_plan.blocks()), replace(cfg.train, seed=seed)))
    return tasks


def run_experiment(cfg: ExperimentConfig, cohort: Sequence[SubjectSeries] | None = None,
                   workers: int | None = None) -> list[CellResult]:
    if cohort is None:
        cohort = prepare_cohort(cfg)
    workers = cfg.workers if workers is None else workers
    by_id = {s.subject_id: s for s in cohort}
    tasks = plan_tasks(cfg, cohort)
    log.info("%d cells, %d training tasks, %d worker(s)", len(cfg.cells()), len(tasks), workers)

    if workers <= 1:
        with threadpool_limits(limits=1):
            outcomes = [evaluate_subject(t, by_id) for t in tasks]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                                 initializer=_init_worker, initargs=(by_id,)) as pool:
            outcomes = list(pool.map(_run_task, tasks))

    grouped: dict[tuple, dict[str, SubjectOutcome]] = {cell: {} for cell in cfg.cells()}
    for task, outcome in zip(tasks, outcomes):
        grouped[task.cell][task.test_subject] = outcome

    results = []
    for cell in cfg.cells():
        subjects = dict(sorted(grouped[cell].items()))
        per_subject, dropped = {}, []
        for sid, outcome in subjects.items():
            score = outcome.score
            if score is None:
                log.warning("cell %s: dropping %s, every fold had constant predictions or truth", cell, sid)
                dropped.append(sid)
            else:
                per_subject[sid] = score
        mean, sd = aggregate(per_subject)
        results.append(CellResult(*cell, per_subject, mean, sd, subjects, dropped))
    return results


# -- lag analysis ---------------------------------------------------------------

@dataclass
class LagAnalysis:
    mode: ModeKind
    component: WorkloadComponent
    pred_s: int
    lags_s: tuple[int, ...]
    subjects: tuple[str, ...]
    friedman: FriedmanResult
    # None marks a pair whose differences are all zero
    pairwise: dict[tuple[int, int], WilcoxonResult | None]


def analyze_lag_horizons(results: Sequence[CellResult]) -> list[LagAnalysis]:
    groups: dict[tuple, dict[int, CellResult]] = {}
    for r in results:
        groups.setdefault((r.mode, r.component, r.pred_s), {})[r.lag_s] = r
    out = []
    for (mode, comp, pred), by_lag in groups.items():
        lags = tuple(sorted(by_lag))
        common = set.intersection(*(set(by_lag[l].per_subject_rho) for l in lags)) if lags else set()
        subjects = tuple(sorted(common))
        if len(lags) < 3 or len(subjects) < 2:
            raise InsufficientColumns(
                f"{mode.value}/{comp.value}/pred {pred} s: {len(lags)} lag column(s) sharing "
                f"{len(subjects)} subject(s); need 3 columns and 2 subjects")
        matrix = np.array([[by_lag[l].per_subject_rho[s] for l in lags] for s in subjects])
        pairwise = {}
        for i, j in itertools.combinations(range(len(lags)), 2):
            try:
                pairwise[(lags[i], lags[j])] = wilcoxon_signed_rank(matrix[:, j], matrix[:, i])
            except AllZeroDifferences:
                pairwise[(lags[i], lags[j])] = None
        out.append(LagAnalysis(mode, comp, pred, lags, subjects, friedman_test(matrix), pairwise))
    return out


# -- rendering ------------------------------------------------------------------

def format_cell(mean: float, sd: float) -> str:
    return f"{mean:.2f} ({sd:.2f})"


def render_table(results: Sequence[CellResult], mode: ModeKind, component: WorkloadComponent) -> str:
    """Prediction horizons as rows, lag horizons as columns, ``mean (sd)`` cells."""
    cells = {(r.lag_s, r.pred_s): r for r in results if r.mode is mode and r.component is component}
    lags = sorted({l for l, _ in cells})
    preds = sorted({p for _, p in cells})
    missing = [(l, p) for l in lags for p in preds if (l, p) not in cells]
    if not cells or missing:
        raise IncompleteGrid(f"{mode.value}/{component.value}: missing (lag, pred) cells {missing or 'all'}")
    width = 13
    lines = [f"{mode.value} {component.value}: Spearman rho, mean (sd) over subjects",
             "pred \\ lag".ljust(12) + "".join(f"{l} s".rjust(width) for l in lags)]
    for p in preds:
        lines.append(f"{p} s".ljust(12) + "".join(format_cell(cells[l, p].mean_rho, cells[l, p].sd_rho).rjust(width)
                                                   for l in lags))
    return "\n".join(lines) + "\n"


def render_tables(results: Sequence[CellResult]) -> str:
    seen = []
    for r in results:
        if (r.mode, r.component) not in seen:
            seen.append((r.mode, r.component))
    return "\n".join(render_table(results, m, c) for m, c in seen)


def render_analysis(analyses: Iterable[LagAnalysis]) -> str:
    lines = []
    for a in analyses:
        lines.append(f"{a.mode.value} {a.component.value}, pred {a.pred_s} s, lags {list(a.lags_s)} s, "
                     f"n = {len(a.subjects)}")
        lines.append(f"  Friedman: {a.friedman.format()}")
        for (la, lb), w in a.pairwise.items():
            if w is None:
                lines.append(f"  Wilcoxon {lb} s vs {la} s: all differences zero (tied)")
            else:
                lines.append(f"  Wilcoxon {lb} s vs {la} s: W = {w.w_statistic:.1f}, n = {w.n_effective}, "
                             f"p = {w.p:.4f} ({w.method.value}), d = {w.cohens_d:.2f}")
    return "\n".join(lines) + "\n"


# -- persistence ------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _cell_doc(r: CellResult) -> dict:
    return {
        "mode": r.mode.value,
        "component": r.component.value,
        "lag_s": r.lag_s,
        "pred_s": r.pred_s,
        "mean_rho": _num(r.mean_rho),
        "sd_rho": _num(r.sd_rho),
        "n_subjects": len(r.per_subject_rho),
        "per_subject_rho": {k: _num(v) for k, v in r.per_subject_rho.items()},
        "dropped_subjects": list(r.dropped_subjects),
        "subjects": {sid: {"fold_rho": [_num(v) for v in o.fold_rho], "epochs_run": o.epochs_run,
                           "best_val_loss": _num(o.best_val_loss), "audit": o.audit}
                     for sid, o in r.subjects.items()},
    }


def _analysis_doc(a: LagAnalysis) -> dict:
    f = a.friedman
    pairs = {}
    for (la, lb), w in a.pairwise.items():
        if w is None:
            pairs[f"{la}-{lb}"] = {"tied": True}
        else:
            pairs[f"{la}-{lb}"] = {"tied": False, "w_statistic": _num(w.w_statistic), "n_effective": w.n_effective,
                                   "p": _num(w.p), "method": w.method.value, "cohens_d": _num(w.cohens_d),
                                   "rank_sum_pos": _num(w.rank_sum_pos), "rank_sum_neg": _num(w.rank_sum_neg)}
    return {"mode": a.mode.value, "component": a.component.value, "pred_s": a.pred_s,
            "lags_s": list(a.lags_s), "subjects": list(a.subjects),
            "friedman": {"chi2": _num(f.chi2), "df": f.df, "n_subjects": f.n_subjects,
                         "p": _num(f.p), "kendalls_w": _num(f.kendalls_w)},
            "pairwise": pairs}


def results_document(results: Sequence[CellResult], analyses: Sequence[LagAnalysis],
                     cfg: ExperimentConfig | None = None) -> dict:
    return {"format": RESULTS_FORMAT, "version": RESULTS_VERSION,
            "config": None if cfg is None else cfg.echo(),
            "cells": [_cell_doc(r) for r in results],
            "lag_analysis": [_analysis_doc(a) for a in analyses]}


def dump_results(doc: Mapping) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_results(results: Sequence[CellResult], analyses: Sequence[LagAnalysis], path,
                  cfg: ExperimentConfig | None = None) -> Path:
    path = Path(path)
    text = dump_results(results_document(results, analyses, cfg))
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read results {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not a results file: {exc}") from exc
    if doc.get("format") != RESULTS_FORMAT:
        raise ConfigError(f"{path} is not a results file")
    return doc


def cells_from_document(doc: Mapping) -> list[CellResult]:
    out = []
    for c in doc["cells"]:
        per = {k: float(v) for k, v in c["per_subject_rho"].items()}
        subjects = {sid: SubjectOutcome(s["fold_rho"], s["epochs_run"],
                                        math.nan if s["best_val_loss"] is None else s["best_val_loss"], s["audit"])
                    for sid, s in c.get("subjects", {}).items()}
        out.append(CellResult(ModeKind(c["mode"]), WorkloadComponent(c["component"]), c["lag_s"], c["pred_s"],
                              per, math.nan if c["mean_rho"] is None else c["mean_rho"],
                              math.nan if c["sd_rho"] is None else c["sd_rho"],
                              subjects, list(c.get("dropped_subjects", []))))
    return out


def audit_cv(doc: Mapping) -> list[str]:
    """Leakage and fold-straddle violations recorded in a results document (empty when clean)."""
    problems = []
    for c in doc["cells"]:
        tag = f"{c['mode']}/{c['component']}/{c['lag_s']}/{c['pred_s']}"
        for sid, s in c["subjects"].items():
            a = s["audit"]
            if a["test_subject"] != sid or sid in a["train_subjects"] or a["n_train_windows_from_test_subject"]:
                problems.append(f"{tag}: training data of {sid} includes the test subject")
            for f in a["folds"]:
                start, stop = f["block"]
                if f["first_input_index"] < start or f["last_target_index"] >= stop:
                    problems.append(f"{tag}: {sid} evaluation window straddles block [{start}, {stop})")
                if f["subjects"] != [sid]:
                    problems.append(f"{tag}: {sid} evaluation block holds windows of {f['subjects']}")
    return problems
