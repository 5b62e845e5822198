"""Command line entry point: ``workload-forecast {synth,run,table,stats,all}``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import WorkloadComponent, write_cohort
from .errors import ValidationError
from .runner import (
    analyze_lag_horizons,
    cells_from_document,
    load_config,
    prepare_cohort,
    read_results,
    render_analysis,
    render_table,
    render_tables,
    run_experiment,
    write_results,
)
from .synth import synthesize_cohort
from .windows import ModeKind

log = logging.getLogger("workload_forecast")


def _split(values):
    if not values:
        return None
    out = []
    for v in values:
        out.extend(p for p in v.split(",") if p)
    return out


def _overrides(args) -> dict:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.data_dir is not None:
        over["data_dir"] = args.data_dir
    if args.workers is not None:
        over["workers"] = args.workers
    if _split(args.mode):
        over["modes"] = _split(args.mode)
    if _split(args.component):
        over["components"] = _split(args.component)
    if _split(args.lag):
        over["lag_grid_s"] = [int(v) for v in _split(args.lag)]
    if _split(args.pred):
        over["pred_grid_s"] = [int(v) for v in _split(args.pred)]
    if args.allow_nonstandard_grid:
        over["allow_nonstandard_grid"] = True
    if getattr(args, "n_subjects", None) is not None:
        over.setdefault("synth", {})["n_subjects"] = args.n_subjects
    if args.seed is not None:
        over.setdefault("synth", {})["seed"] = args.seed
    return over


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config merged over the defaults")
    common.add_argument("--seed", type=int)
    common.add_argument("--data-dir")
    common.add_argument("--out", help="output path (results JSON for run/all, text for table/stats)")
    common.add_argument("--results", default="results.json", help="results file read by table/stats")
    common.add_argument("--mode", action="append", help="univariate and/or multivariate (repeat or comma-separate)")
    common.add_argument("--component", action="append", help="workload component(s)")
    common.add_argument("--lag", action="append", help="lag horizon(s) in seconds")
    common.add_argument("--pred", action="append", help="prediction horizon(s) in seconds")
    common.add_argument("--workers", type=int)
    common.add_argument("--n-subjects", type=int, help="synthetic cohort size")
    common.add_argument("--allow-nonstandard-grid", action="store_true")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="workload-forecast",
                                     description="Lag-horizon study for workload forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic cohort into --data-dir")
    sub.add_parser("run", parents=[common], help="train and evaluate the full grid, write results")
    sub.add_parser("table", parents=[common], help="render mean (sd) tables from a results file")
    sub.add_parser("stats", parents=[common], help="Friedman/Wilcoxon lag analysis of a results file")
    sub.add_parser("all", parents=[common], help="synth + run + table + stats")
    return parser


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_synth(args, cfg):
    if cfg.synth is None:
        raise ValidationError("config has no synth section")
    paths = write_cohort(synthesize_cohort(cfg.n_subjects, cfg.synth), cfg.data_dir)
    log.info("wrote %d series to %s", len(paths), cfg.data_dir)


def _run(args, cfg, out_default="results.json"):
    results = run_experiment(cfg)
    analyses = analyze_lag_horizons(results) if len(cfg.lag_grid_s) >= 3 else []
    out = Path(args.out or out_default)
    write_results(results, analyses, out, cfg)
    log.info("wrote %s", out)
    return results, analyses, out


def _selected(results, args):
    modes = {ModeKind(m.lower()) for m in _split(args.mode) or []}
    comps = {WorkloadComponent.parse(c) for c in _split(args.component) or []}
    return [r for r in results if (not modes or r.mode in modes) and (not comps or r.component in comps)]


def _cmd_table(args, cfg):
    results = _selected(cells_from_document(read_results(args.results)), args)
    if args.mode and args.component and len(_split(args.mode)) == 1 and len(_split(args.component)) == 1:
        text = render_table(results, ModeKind(_split(args.mode)[0].lower()),
                            WorkloadComponent.parse(_split(args.component)[0]))
    else:
        text = render_tables(results)
    _emit(text, args.out)


def _cmd_stats(args, cfg):
    results = _selected(cells_from_document(read_results(args.results)), args)
    _emit(render_analysis(analyze_lag_horizons(results)), args.out)


def _cmd_all(args, cfg):
    # regenerate so the cohort always matches the config
    if cfg.synth is not None:
        write_cohort(synthesize_cohort(cfg.n_subjects, cfg.synth), cfg.data_dir)
    else:
        prepare_cohort(cfg)
    results, analyses, out = _run(args, cfg)
    report = render_tables(results) + "\n" + (render_analysis(analyses) if analyses else "")
    out.with_suffix(".txt").write_text(report, encoding="utf-8")
    sys.stdout.write(report)


COMMANDS = {"synth": _cmd_synth, "run": lambda a, c: _run(a, c), "table": _cmd_table,
            "stats": _cmd_stats, "all": _cmd_all}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
