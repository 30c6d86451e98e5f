"""Config-driven command line for offline experiments.

Usage::

    rtcsp synth config.json --out data/
    rtcsp evaluate config.json --out results/
    rtcsp tune | curve | mvr | align-inspect config.json

Every command reads one JSON config (see :class:`ExperimentConfig`); flags
only control output. Exit codes: 0 success, 2 config error, 3 total
experiment failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .alignment import align_subject
from .data_io import SynthConfig, load_dataset, save_dataset, subsample_training, synth_generate
from .errors import ConfigError, FormatError, IoError, RtcspError

log = logging.getLogger("rtcsp")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4


class ExperimentFailed(RtcspError):
    """Every cell or run of an experiment failed."""


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Exactly one of ``dataset`` (path to a manifest, relative to the working
    directory) and ``synth`` (a :class:`~rtcsp.data_io.SynthConfig` mapping)
    selects the data, except for ``synth`` runs which need only ``synth``.
    """

    dataset: str | None = None
    synth: dict | None = None
    methods: list[str] = field(default_factory=lambda: list(ev.METHOD_NAMES))
    n_pairs: int = 3
    mvr_n_pairs: int = 1
    target_fraction: float = 1.0
    fractions: list[float] = field(default_factory=lambda: [round(0.10 + 0.05 * i, 2) for i in range(19)])
    window: int | None = None
    mvr_fractions: list[float] = field(default_factory=lambda: [0.2])
    runs: int = 50
    alpha: float = ev.DEFAULT_ALPHA
    seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])
    lambda_grid: list[float] = field(default_factory=lambda: list(ev.DEFAULT_LAMBDA_GRID))
    cv_scheme: str = "kfold"
    cv_folds: int = 10
    ccsp_lambda: float | None = None
    source: str | None = None
    target: str | None = None
    output_dir: str = "."

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self):
        if self.dataset is not None and self.synth is not None:
            raise ConfigError("give either 'dataset' or 'synth', not both")
        if self.synth is not None:
            SynthConfig.from_dict(self.synth)
        bad = [m for m in self.methods if m not in ev.METHOD_NAMES]
        if bad or not self.methods or len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"methods must be distinct names from {ev.METHOD_NAMES}, got {self.methods}")
        for name in ("n_pairs", "mvr_n_pairs", "runs", "cv_folds"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if self.cv_scheme not in ("kfold", "loocv"):
            raise ConfigError("cv_scheme must be 'kfold' or 'loocv'")
        for name in ("fractions", "mvr_fractions"):
            fr = getattr(self, name)
            if not fr or any(not 0 < p <= 1 for p in fr) or list(fr) != sorted(fr):
                raise ConfigError(f"{name} must be ascending values in (0, 1]")
        if not 0 < self.target_fraction <= 1:
            raise ConfigError("target_fraction must lie in (0, 1]")
        if not self.lambda_grid or any(not 0 <= v <= 1 for v in self.lambda_grid):
            raise ConfigError("lambda_grid must be non-empty with values in [0, 1]")
        if self.ccsp_lambda is not None and not 0 <= self.ccsp_lambda <= 1:
            raise ConfigError("ccsp_lambda must lie in [0, 1]")
        if self.window is not None and (not isinstance(self.window, int) or self.window < 1):
            raise ConfigError("window must be a positive integer")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")


def load_config(path, seed_override=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(raw)
    if seed_override is not None:
        cfg.seed = seed_override
        cfg.seeds = [seed_override]
        if cfg.synth is not None:
            cfg.synth = {**cfg.synth, "seed": seed_override}
    return cfg


def load_subjects(cfg: ExperimentConfig):
    if cfg.dataset is not None:
        return Path(cfg.dataset).stem, load_dataset(cfg.dataset)
    if cfg.synth is None:
        raise ConfigError("config needs 'dataset' or 'synth'")
    return "synthetic", synth_generate(SynthConfig.from_dict(cfg.synth))


def method_factories(cfg: ExperimentConfig, n_pairs=None):
    n_pairs = cfg.n_pairs if n_pairs is None else n_pairs
    ccsp = dict(lam=cfg.ccsp_lambda, grid=tuple(cfg.lambda_grid), scheme=cfg.cv_scheme, k=cfg.cv_folds, seed=cfg.seed)
    return {m: ev.make_method(m, n_pairs, **(ccsp if m == "cCSP" else {})) for m in cfg.methods}


def _subject_index(subjects, sid, default):
    if sid is None:
        return default
    ids = [s.subject_id for s in subjects]
    if sid not in ids:
        raise ConfigError(f"unknown subject {sid!r}; available: {ids}")
    return ids.index(sid)


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------
def _out_dir(args, cfg):
    out = Path(args.out if args.out is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _plot(args, fn, *a):
    if args.no_plot:
        return
    from . import plots

    try:
        getattr(plots, fn)(*a)
    except ImportError:
        log.warning("matplotlib not installed; skipping plot")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_synth(cfg, args):
    if cfg.synth is None:
        raise ConfigError("synth command needs a 'synth' section")
    scfg = SynthConfig.from_dict(cfg.synth)
    subjects = synth_generate(scfg)
    out = _out_dir(args, cfg)
    path = save_dataset(subjects, out, "synthetic", scfg.fs)
    n_train = sum(len(s.train) for s in subjects)
    n_test = sum(len(s.test) for s in subjects)
    print(f"wrote {len(subjects)} subjects, {n_train} train + {n_test} test = {n_train + n_test} trials -> {path}")
    return EXIT_OK


def cmd_evaluate(cfg, args):
    name, subjects = load_subjects(cfg)
    table = ev.evaluate_methods(method_factories(cfg), subjects, name, cfg.target_fraction, cfg.seed, args.threads)
    out = _out_dir(args, cfg)
    _write_text(out / "accuracy.csv", table.to_csv())
    _write_json(out / "evaluate.json", {"config": asdict(cfg), **table.summary()})
    if table.n_failed == len(table.cells):
        raise ExperimentFailed("every evaluation cell failed")
    _plot(args, "accuracy_bars", table, out / "accuracy.svg")
    for m in table.methods:
        print(f"{m:8s} mean accuracy {table.mean(m) if table.mean(m) is not None else float('nan'):6.2f}%")
    return EXIT_OK


def cmd_tune(cfg, args):
    _, subjects = load_subjects(cfg)
    targets = range(len(subjects)) if cfg.target is None else [_subject_index(subjects, cfg.target, 0)]
    rows, chosen, failed = [], {}, {}
    for k in targets:
        s = subjects[k]
        train = s.train if cfg.target_fraction >= 1 else subsample_training(s.train, cfg.target_fraction, cfg.seed)
        sources = [o.train for j, o in enumerate(subjects) if j != k]
        try:
            lam, scores = ev.tune_lambda(
                sources, train, cfg.cv_scheme, cfg.lambda_grid, cfg.cv_folds, cfg.seed, cfg.n_pairs, return_scores=True
            )
        except RtcspError as exc:
            failed[s.subject_id] = f"{type(exc).__name__}: {exc}"
            continue
        chosen[s.subject_id] = lam
        rows += [(s.subject_id, repr(float(g)), repr(float(e))) for g, e in scores.items()]
        print(f"{s.subject_id}: lambda = {lam}")
    out = _out_dir(args, cfg)
    _write_csv(out / "tune.csv", ["subject", "lambda", "mean_validation_error"], rows)
    _write_json(out / "tune.json", {"config": asdict(cfg), "chosen": chosen, "failed": failed})
    if not chosen:
        raise ExperimentFailed("lambda tuning failed for every target")
    return EXIT_OK


def cmd_curve(cfg, args):
    _, subjects = load_subjects(cfg)
    curve = ev.learning_curve(method_factories(cfg), subjects, cfg.fractions, cfg.seeds, cfg.window, args.threads)
    out = _out_dir(args, cfg)
    _write_text(out / "curve.csv", curve.to_csv())
    _write_json(
        out / "curve.json",
        {"config": asdict(cfg), "window": curve.window, "skipped_fractions": curve.skipped, "fractions": curve.fractions},
    )
    if all(np.all(np.isnan(curve.accuracy[m])) for m in curve.methods):
        raise ExperimentFailed("every learning-curve point failed")
    _plot(args, "curve_lines", curve, out / "curve.svg")
    return EXIT_OK


def cmd_mvr(cfg, args):
    _, subjects = load_subjects(cfg)
    reports = [
        ev.mvr_experiment(subjects, p, cfg.runs, cfg.seed, cfg.alpha, cfg.mvr_n_pairs, args.threads) for p in cfg.mvr_fractions
    ]
    rows = [(repr(r.fraction), i, repr(b), repr(t)) for r in reports for i, b, t in r.rows()]
    out = _out_dir(args, cfg)
    _write_csv(out / "mvr.csv", ["fraction", "run", "mvr_base", "mvr_rt"], rows)
    _write_json(out / "mvr.json", {"config": asdict(cfg), "reports": [r.summary() for r in reports]})
    if all(r.runs == 0 for r in reports):
        raise ExperimentFailed("every MVR run failed")
    _plot(args, "mvr_bars", reports, out / "mvr.svg")
    for r in reports:
        print(f"p={r.fraction:g}: MVR base {r.mean_base:.4f}, RT {r.mean_rt:.4f}, p-value {r.p_value:.3g}")
    return EXIT_OK


def cmd_align_inspect(cfg, args):
    _, subjects = load_subjects(cfg)
    si = _subject_index(subjects, cfg.source, 0)
    ti = _subject_index(subjects, cfg.target, 1 if si == 0 else 0)
    if si == ti:
        raise ConfigError("source and target must differ")
    src, tgt = subjects[si].train, subjects[ti].train
    _, maps = align_subject(src.covariances, src.y, tgt.covariances, tgt.y)
    doc = {"source": src.subject_id, "target": tgt.subject_id, "maps": [maps[c].to_dict() for c in sorted(maps)]}
    out = _out_dir(args, cfg)
    path = out / f"align_{src.subject_id}_{tgt.subject_id}.json"
    _write_json(path, doc)
    print(f"wrote {len(maps)} class maps -> {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "curve": cmd_curve,
    "mvr": cmd_mvr,
    "align-inspect": cmd_align_inspect,
}


def build_parser():
    p = argparse.ArgumentParser(prog="rtcsp", description="Riemannian transfer CSP experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--no-plot", action="store_true", help="skip SVG output")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        sp.add_argument("--seed-override", type=int, help="replace every seed in the config")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.seed_override)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RtcspError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
