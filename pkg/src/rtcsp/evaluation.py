"""Experiment harness: accuracy tables, lambda tuning, learning curves, MVR study."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats
from sklearn.model_selection import KFold, LeaveOneOut

from .csp import SpatialFilter
from .data_io import subsample_training
from .errors import DegenerateInput, InvalidInput, RtcspError
from .signal import as_array
from .transfer import (
    accuracy,
    composite_csp,
    csp_baseline,
    predict,
    rtcsp_combine,
    rtcsp_ensemble,
    rtcsp_ssf,
)

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_ALPHA = 0.05 / 9
METHOD_NAMES = ("CSP", "SSF", "COMBINE", "ENS", "cCSP")


# --------------------------------------------------------------------------
# method factories
# --------------------------------------------------------------------------
def _ccsp(sources, target, n_pairs, lam=None, grid=DEFAULT_LAMBDA_GRID, scheme="kfold", k=10, seed=0):
    if lam is None:
        lam = tune_lambda(sources, target, scheme=scheme, grid=grid, k=k, seed=seed, n_pairs=n_pairs)
    return composite_csp(sources, target, lam, n_pairs)


def make_method(name, n_pairs=3, **ccsp_options):
    """Return ``fit(sources, target) -> TransferModel`` for a method name.

    ``ccsp_options`` (``lam``, ``grid``, ``scheme``, ``k``, ``seed``) only
    apply to ``"cCSP"``; without ``lam`` the weight is tuned per target.
    """
    if name == "CSP":
        return lambda sources, target: csp_baseline(target, n_pairs)
    if name == "SSF":
        return partial(rtcsp_ssf, n_pairs=n_pairs)
    if name == "COMBINE":
        return partial(rtcsp_combine, n_pairs=n_pairs)
    if name == "ENS":
        return partial(rtcsp_ensemble, n_pairs=n_pairs)
    if name == "cCSP":
        return partial(_ccsp, n_pairs=n_pairs, **ccsp_options)
    raise InvalidInput(f"unknown method {name!r}; choose from {METHOD_NAMES}")


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# --------------------------------------------------------------------------
# accuracy tables
# --------------------------------------------------------------------------
@dataclass
class AccuracyTable:
    """Per-subject test accuracy (%) for each method; failed cells are ``None``."""

    dataset: str
    subjects: list[str]
    methods: list[str]
    cells: dict = field(default_factory=dict)  # (subject, method) -> float | None
    errors: dict = field(default_factory=dict)  # (subject, method) -> message

    def column(self, method):
        return [self.cells.get((s, method)) for s in self.subjects]

    def mean(self, method):
        vals = [v for v in self.column(method) if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def n_failed(self):
        return sum(v is None for v in self.cells.values())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject", *self.methods])
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        for s in self.subjects:
            w.writerow([s, *(fmt(self.cells.get((s, m))) for m in self.methods)])
        w.writerow(["Mean", *(fmt(self.mean(m)) for m in self.methods)])
        return buf.getvalue()

    def summary(self):
        return {
            "dataset": self.dataset,
            "subjects": self.subjects,
            "methods": self.methods,
            "means": {m: self.mean(m) for m in self.methods},
            "failed_cells": [{"subject": s, "method": m, "error": e} for (s, m), e in sorted(self.errors.items())],
        }


def _split_sources(subjects, k):
    return [s.train for j, s in enumerate(subjects) if j != k]


def evaluate_method(fit, subjects, fraction=1.0, seed=0, threads=1):
    """Leave-one-subject-in evaluation of one method.

    Each subject in turn is the target; every other subject contributes its
    full training partition as a source. The target's training partition is
    subsampled to ``fraction`` (stratified, seeded) before training.

    Returns
    -------
    accuracies : dict
        ``subject_id -> accuracy in %`` or ``None`` for a failed cell.
    errors : dict
        ``subject_id -> error message`` for failed cells.
    """

    def one(k):
        target = subjects[k]
        try:
            train = target.train if fraction >= 1.0 else subsample_training(target.train, fraction, _cell_seed(seed, k))
            model = fit(_split_sources(subjects, k), train)
            return accuracy(model, target.test), None
        except (RtcspError, np.linalg.LinAlgError) as exc:
            log.warning("subject %s failed: %s", target.subject_id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    results = _map(one, range(len(subjects)), threads)
    accs = {s.subject_id: r[0] for s, r in zip(subjects, results)}
    errs = {s.subject_id: r[1] for s, r in zip(subjects, results) if r[1] is not None}
    return accs, errs


def _cell_seed(seed, k):
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def evaluate_methods(methods, subjects, dataset="dataset", fraction=1.0, seed=0, threads=1):
    """Accuracy table for ``methods`` (a mapping ``name -> fit``)."""
    table = AccuracyTable(dataset, [s.subject_id for s in subjects], list(methods))
    for name, fit in methods.items():
        accs, errs = evaluate_method(fit, subjects, fraction, seed, threads)
        for sid, acc in accs.items():
            table.cells[(sid, name)] = acc
        for sid, msg in errs.items():
            table.errors[(sid, name)] = msg
    return table


# --------------------------------------------------------------------------
# lambda tuning
# --------------------------------------------------------------------------
def tune_lambda(sources, target, scheme="kfold", grid=DEFAULT_LAMBDA_GRID, k=10, seed=0, n_pairs=3, return_scores=False):
    """Pick the Composite CSP source weight by cross-validation on target training data.

    Sources are used in full for every split. ``scheme`` is ``"kfold"``
    (shuffled, seeded, ``k`` folds) or ``"loocv"``. Folds whose training
    part lacks a class are skipped. Ties go to the smaller lambda.
    """
    grid = list(grid)
    if not grid:
        raise InvalidInput("lambda grid is empty")
    if scheme == "kfold":
        splitter = KFold(n_splits=min(k, len(target)), shuffle=True, random_state=seed)
    elif scheme == "loocv":
        splitter = LeaveOneOut()
    else:
        raise InvalidInput(f"unknown CV scheme {scheme!r}")
    if len(grid) == 1:
        return (grid[0], {grid[0]: float("nan")}) if return_scores else grid[0]

    n_classes = len(np.unique(target.y))
    folds = []
    for train_idx, val_idx in splitter.split(np.zeros(len(target))):
        if len(np.unique(target.y[train_idx])) < n_classes:
            warnings.warn("skipping a CV fold whose training part lacks a class", RuntimeWarning, stacklevel=2)
            continue
        folds.append((target.subset(train_idx), target.subset(val_idx)))
    if not folds:
        raise InvalidInput("every CV fold was skipped; not enough target training data")

    scores = {}
    for lam in grid:
        errs = []
        for tr, va in folds:
            labels, _ = predict(composite_csp(sources, tr, lam, n_pairs), va)
            errs.append(np.mean(labels != va.y))
        scores[lam] = float(np.mean(errs))
    best = min(grid, key=lambda lam: (round(scores[lam], 12), lam))
    return (best, scores) if return_scores else best


# --------------------------------------------------------------------------
# learning curves
# --------------------------------------------------------------------------
def moving_average(series, window=None):
    """Centred moving average with shrinking windows at the edges.

    The default window is ``round(len(series) / 10)`` (at least 1). For even
    windows the extra sample is taken on the right.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if window is None:
        window = max(1, round(n / 10))
    if window < 1 or window > n:
        raise InvalidInput(f"window must lie in [1, {n}], got {window}")
    left, right = (window - 1) // 2, window // 2
    return np.array([x[max(i - left, 0) : i + right + 1].mean() for i in range(n)])


@dataclass
class CurveResult:
    fractions: list[float]
    methods: list[str]
    accuracy: dict  # method -> list of mean accuracies (nan if skipped)
    smoothed: dict
    window: int
    skipped: list[float] = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "fraction", "accuracy", "smoothed"])
        for m in self.methods:
            for i, p in enumerate(self.fractions):
                w.writerow([m, repr(float(p)), repr(float(self.accuracy[m][i])), repr(float(self.smoothed[m][i]))])
        return buf.getvalue()


def learning_curve(methods, subjects, fractions, seeds=(0,), window=None, threads=1):
    """Accuracy versus fraction of target training data.

    For every fraction and seed each subject is evaluated as target (sources
    at full size); accuracies are averaged over subjects, then over seeds.
    Fractions whose subsample is degenerate for any subject are dropped with
    a warning.
    """
    fractions = [float(p) for p in fractions]
    if any(not 0 < p <= 1 for p in fractions) or fractions != sorted(fractions):
        raise InvalidInput("fractions must be ascending values in (0, 1]")
    kept, skipped = [], []
    acc = {m: [] for m in methods}
    for p in fractions:
        try:
            for seed in seeds:
                for k, s in enumerate(subjects):
                    subsample_training(s.train, p, _cell_seed(seed, k)) if p < 1 else None
        except DegenerateInput as exc:
            warnings.warn(f"skipping fraction {p}: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(p)
            continue
        kept.append(p)
        for name, fit in methods.items():
            per_seed = []
            for seed in seeds:
                accs, _ = evaluate_method(fit, subjects, p, seed, threads)
                vals = [v for v in accs.values() if v is not None]
                per_seed.append(np.mean(vals) if vals else np.nan)
            acc[name].append(float(np.mean(per_seed)))
    if not kept:
        raise InvalidInput("no usable fractions")
    if window is None:
        window = max(1, round(len(kept) / 10))
    smoothed = {m: moving_average(acc[m], min(window, len(kept))).tolist() for m in methods}
    return CurveResult(kept, list(methods), acc, smoothed, window, skipped)


# --------------------------------------------------------------------------
# mean-variance ratio study
# --------------------------------------------------------------------------
def _single_pair_filter(filt):
    if isinstance(filt, SpatialFilter):
        return filt
    raise InvalidInput("expected a SpatialFilter")


def mvr_trial(filt: SpatialFilter, trial):
    """Ratio of larger to smaller variance of a trial projected on one filter pair."""
    filt = _single_pair_filter(filt)
    if filt.n_pairs != 1:
        raise InvalidInput(f"MVR needs exactly one filter pair, got {filt.n_pairs}")
    X = as_array(trial)
    return float(_variance_ratios(filt, X[None])[0])


def _variance_ratios(filt, X):
    v = np.var(np.einsum("ci,nct->nit", filt.W, X), axis=-1)
    if np.any(v <= 0):
        raise DegenerateInput("projected channel with zero variance")
    return v.max(axis=1) / v.min(axis=1)


def mvr_subject(filt: SpatialFilter, X):
    """Average variance ratio over the trials ``X`` of one subject."""
    if filt.n_pairs != 1:
        raise InvalidInput(f"MVR needs exactly one filter pair, got {filt.n_pairs}")
    return float(np.mean(_variance_ratios(filt, np.asarray(X, dtype=float))))


def paired_one_sided_test(treatment, control):
    """One-sided paired t-test of ``treatment > control`` plus a sign test.

    Returns ``(t_statistic, p_value, sign_test_p)``. Identical arms give
    ``t = 0`` and ``p = 0.5``.
    """
    a, b = np.asarray(treatment, dtype=float), np.asarray(control, dtype=float)
    d = a - b
    if len(d) < 2:
        return float("nan"), float("nan"), float("nan")
    sd = d.std(ddof=1)
    if sd == 0:
        mean = d.mean()
        t, p = (0.0, 0.5) if mean == 0 else (math.copysign(math.inf, mean), 0.0 if mean > 0 else 1.0)
    else:
        res = stats.ttest_rel(a, b, alternative="greater")
        t, p = float(res.statistic), float(res.pvalue)
    pos, nonzero = int(np.sum(d > 0)), int(np.sum(d != 0))
    sign_p = float(stats.binomtest(pos, nonzero, 0.5, alternative="greater").pvalue) if nonzero else 1.0
    return t, p, sign_p


@dataclass
class MvrReport:
    fraction: float
    mvr_base: list[float]
    mvr_rt: list[float]
    failed_runs: list[int]
    t_statistic: float
    p_value: float
    sign_test_p: float
    alpha: float = DEFAULT_ALPHA

    @property
    def runs(self):
        return len(self.mvr_base)

    @property
    def mean_base(self):
        return float(np.mean(self.mvr_base))

    @property
    def mean_rt(self):
        return float(np.mean(self.mvr_rt))

    @property
    def sem_base(self):
        return float(stats.sem(self.mvr_base)) if self.runs > 1 else float("nan")

    @property
    def sem_rt(self):
        return float(stats.sem(self.mvr_rt)) if self.runs > 1 else float("nan")

    @property
    def significant(self):
        return bool(self.p_value < self.alpha)

    def rows(self):
        return [(i, b, r) for i, (b, r) in enumerate(zip(self.mvr_base, self.mvr_rt))]

    def summary(self):
        return {
            "fraction": self.fraction,
            "runs": self.runs,
            "failed_runs": self.failed_runs,
            "mean_mvr_base": self.mean_base,
            "mean_mvr_rt": self.mean_rt,
            "sem_mvr_base": self.sem_base,
            "sem_mvr_rt": self.sem_rt,
            "t_statistic": self.t_statistic,
            "p_value": self.p_value,
            "sign_test_p": self.sign_test_p,
            "alpha": self.alpha,
            "significant": self.significant,
        }


def mvr_run(subjects, fraction, run_seed, n_pairs=1, threads=1):
    """One run of the MVR study: ``(MVR(W_base), MVR(W_RT))`` averaged over subjects."""

    def one(k):
        target = subjects[k]
        train = subsample_training(target.train, fraction, _cell_seed(run_seed, k))
        base = csp_baseline(train, n_pairs).members[0].tasks
        rt = rtcsp_ssf(_split_sources(subjects, k), train, n_pairs).members[0].tasks
        if len(base) != 1:
            raise InvalidInput("the MVR study is defined for two-class data")
        X = target.test.X
        return mvr_subject(base[0].filter, X), mvr_subject(rt[0].filter, X)

    vals = np.array(_map(one, range(len(subjects)), threads))
    return float(vals[:, 0].mean()), float(vals[:, 1].mean())


def mvr_experiment(subjects, fraction, runs=50, seed=0, alpha=DEFAULT_ALPHA, n_pairs=1, threads=1):
    """Repeated MVR comparison of standard CSP and RTCSP-SSF at one training fraction.

    Sources are always used in full; each run reseeds only the target
    subsample. Failed runs are excluded and listed.
    """
    base, rt, failed = [], [], []
    for r in range(runs):
        try:
            b, t = mvr_run(subjects, fraction, _cell_seed(seed, 10_000 + r), n_pairs, threads)
        except (RtcspError, np.linalg.LinAlgError) as exc:
            log.warning("MVR run %d failed: %s", r, exc)
            failed.append(r)
            continue
        base.append(b)
        rt.append(t)
    t_stat, p, sign_p = paired_one_sided_test(rt, base)
    return MvrReport(float(fraction), base, rt, failed, t_stat, p, sign_p, alpha)
