"""Multi-subject transfer strategies (SSF, Combine, Ensemble) and CSP baselines.

Every strategy returns a :class:`TransferModel`. A model holds one or more
*members*; each member holds one binary task per CSP problem (a single task
for two classes, one-vs-rest tasks otherwise), and each task pairs the
spatial filter used at test time with its LDA. Only the ensemble has more
than one member; its target-subject member is always last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit

from .alignment import align_subject
from .classify import LdaModel, lda_fit, majority_vote
from .csp import DEFAULT_N_PAIRS, SpatialFilter, class_mean_covariance, csp_filters, features_from_scatter, fit_csp
from .errors import FormatError, InvalidInput
from .signal import as_array, estimate_covariances

MODEL_SCHEMA = "rtcsp-model/1"

SSF = "SSF"
COMBINE = "COMBINE"
ENSEMBLE = "ENSEMBLE"
CSP_BASELINE = "CSP_BASELINE"
COMPOSITE_CSP = "COMPOSITE_CSP"
STRATEGIES = (SSF, COMBINE, ENSEMBLE, CSP_BASELINE, COMPOSITE_CSP)


@dataclass(frozen=True, eq=False)
class SubjectData:
    """Labelled trials of one subject (one partition: train or test).

    ``X`` has shape (n_trials, C, T). Covariances are computed on first
    access with ``estimator`` unless passed in explicitly.
    """

    subject_id: str
    X: np.ndarray
    y: np.ndarray
    fs: float | None = None
    estimator: str = "plain"
    precomputed_covariances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 3:
            raise InvalidInput(f"subject {self.subject_id}: trials must be (n, C, T), got {X.shape}")
        if len(y) != len(X):
            raise InvalidInput(f"subject {self.subject_id}: {len(X)} trials but {len(y)} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def n_channels(self):
        return self.X.shape[1]

    @property
    def classes(self):
        return np.unique(self.y)

    @cached_property
    def covariances(self):
        if self.precomputed_covariances is not None:
            return np.asarray(self.precomputed_covariances, dtype=float)
        return estimate_covariances(self.X, self.estimator)

    @cached_property
    def scatter(self):
        """Unnormalised ``X X'`` per trial, used for log-variance features."""
        return self.X @ np.swapaxes(self.X, -1, -2)

    def subset(self, idx):
        idx = np.asarray(idx)
        covs = None
        if self.precomputed_covariances is not None or "covariances" in self.__dict__:
            covs = self.covariances[idx]
        return SubjectData(self.subject_id, self.X[idx], self.y[idx], self.fs, self.estimator, covs)

    def with_labels(self, y):
        return SubjectData(self.subject_id, self.X, y, self.fs, self.estimator, self.precomputed_covariances)


@dataclass(frozen=True)
class BinaryTask:
    positive_class: object
    filter: SpatialFilter
    lda: LdaModel


@dataclass(frozen=True)
class Member:
    tasks: tuple[BinaryTask, ...]


@dataclass(frozen=True)
class TransferModel:
    strategy: str
    classes: tuple
    members: tuple[Member, ...]
    n_pairs: int
    info: dict = field(default_factory=dict, compare=False)

    @property
    def test_filters(self):
        """Test-time filters: per task for one member, per member otherwise."""
        if len(self.members) == 1:
            return [t.filter for t in self.members[0].tasks]
        return [[t.filter for t in m.tasks] for m in self.members]

    @property
    def n_channels(self):
        return self.members[0].tasks[0].filter.n_channels


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------
def _task_classes(classes):
    classes = list(classes)
    if len(classes) < 2:
        raise InvalidInput("at least two classes are required")
    return classes[1:] if len(classes) == 2 else classes


def _binarize(y, positive):
    return np.where(np.asarray(y) == positive, 1, -1)


def _check_inputs(sources, target):
    if len(target.classes) < 2:
        raise InvalidInput(f"target {target.subject_id} has fewer than two classes")
    for s in sources:
        if s.n_channels != target.n_channels:
            raise InvalidInput(
                f"source {s.subject_id} has {s.n_channels} channels, target has {target.n_channels}"
            )


def _native(c):
    return c.item() if hasattr(c, "item") else c


def _aligned_sources(sources, target, normalize=True):
    return [
        align_subject(s.covariances, s.y, target.covariances, target.y, normalize=normalize)[0] for s in sources
    ]


def _ssf_filters(target, aligned, sources, positives, n_pairs):
    pooled = np.concatenate([target.covariances, *aligned]) if aligned else target.covariances
    pooled_y = np.concatenate([target.y, *(s.y for s in sources)]) if aligned else target.y
    filters = {c: fit_csp(pooled, _binarize(pooled_y, c), n_pairs) for c in positives}
    return filters, pooled, pooled_y


def _single_member_model(strategy, target, filters, ldas, n_pairs, info):
    tasks = tuple(BinaryTask(_native(c), filters[c], ldas[c]) for c in filters)
    return TransferModel(strategy, tuple(_native(c) for c in target.classes), (Member(tasks),), n_pairs, info)


def _target_lda(filt, target, positive, **lda_kw):
    return lda_fit(features_from_scatter(filt, target.scatter), _binarize(target.y, positive), **lda_kw)


# --------------------------------------------------------------------------
# strategies
# --------------------------------------------------------------------------
def csp_baseline(target: SubjectData, n_pairs=DEFAULT_N_PAIRS, **lda_kw) -> TransferModel:
    """Standard CSP + LDA trained on the target subject only."""
    _check_inputs([], target)
    positives = _task_classes(target.classes)
    filters = {c: fit_csp(target.covariances, _binarize(target.y, c), n_pairs) for c in positives}
    ldas = {c: _target_lda(filters[c], target, c, **lda_kw) for c in positives}
    return _single_member_model(CSP_BASELINE, target, filters, ldas, n_pairs, {"lda_train_size": len(target)})


def rtcsp_ssf(
    sources: Sequence[SubjectData],
    target: SubjectData,
    n_pairs=DEFAULT_N_PAIRS,
    normalize=True,
    pooled_lda=False,
    **lda_kw,
) -> TransferModel:
    """Single spatial filter from the target plus all aligned sources.

    The LDA is trained on target training features only. ``pooled_lda``
    instead trains it on features of every pooled covariance (target and
    aligned sources), computed from the trace-normalised covariances.
    """
    _check_inputs(sources, target)
    positives = _task_classes(target.classes)
    aligned = _aligned_sources(sources, target, normalize)
    filters, pooled, pooled_y = _ssf_filters(target, aligned, sources, positives, n_pairs)
    if pooled_lda:
        ldas = {c: lda_fit(features_from_scatter(filters[c], pooled), _binarize(pooled_y, c), **lda_kw) for c in positives}
        train_size = len(pooled)
    else:
        ldas = {c: _target_lda(filters[c], target, c, **lda_kw) for c in positives}
        train_size = len(target)
    info = {"n_sources": len(sources), "n_pooled": len(pooled), "lda_train_size": train_size}
    return _single_member_model(SSF, target, filters, ldas, n_pairs, info)


def _per_source_filters(sources, aligned, target, positives, n_pairs):
    """Filters from each aligned source alone, followed by the target's own filters."""
    per_source = [
        {c: fit_csp(al, _binarize(s.y, c), n_pairs) for c in positives} for s, al in zip(sources, aligned)
    ]
    own = {c: fit_csp(target.covariances, _binarize(target.y, c), n_pairs) for c in positives}
    return per_source + [own]


def rtcsp_combine(sources, target, n_pairs=DEFAULT_N_PAIRS, normalize=True, **lda_kw) -> TransferModel:
    """One LDA trained on target features from every per-source filter.

    Each aligned source yields its own filter, which is applied to the
    target training trials; together with the target's own filter this
    gives ``M (K + 1)`` feature rows of length ``2 n_pairs``. At test time
    the SSF filter is used.
    """
    _check_inputs(sources, target)
    positives = _task_classes(target.classes)
    aligned = _aligned_sources(sources, target, normalize)
    test_filters, pooled, _ = _ssf_filters(target, aligned, sources, positives, n_pairs)
    train_filters = _per_source_filters(sources, aligned, target, positives, n_pairs)
    ldas = {}
    for c in positives:
        feats = np.concatenate([features_from_scatter(f[c], target.scatter) for f in train_filters])
        labels = np.tile(_binarize(target.y, c), len(train_filters))
        ldas[c] = lda_fit(feats, labels, **lda_kw)
    info = {
        "n_sources": len(sources),
        "n_pooled": len(pooled),
        "lda_train_size": len(target) * len(train_filters),
    }
    return _single_member_model(COMBINE, target, test_filters, ldas, n_pairs, info)


def rtcsp_ensemble(sources, target, n_pairs=DEFAULT_N_PAIRS, normalize=True, **lda_kw) -> TransferModel:
    """Majority-vote ensemble of one CSP+LDA member per source plus the target."""
    _check_inputs(sources, target)
    positives = _task_classes(target.classes)
    aligned = _aligned_sources(sources, target, normalize)
    members = []
    for filters in _per_source_filters(sources, aligned, target, positives, n_pairs):
        tasks = tuple(BinaryTask(_native(c), filters[c], _target_lda(filters[c], target, c, **lda_kw)) for c in positives)
        members.append(Member(tasks))
    info = {"n_sources": len(sources), "lda_train_size": len(target)}
    return TransferModel(ENSEMBLE, tuple(_native(c) for c in target.classes), tuple(members), n_pairs, info)


def composite_covariances(sources, target, positive, lam):
    """Class covariances ``(1 - lam) * target + lam * mean over sources``."""
    out = []
    for sign in (-1, 1):
        cov_t = class_mean_covariance(target.covariances, _binarize(target.y, positive), sign)
        if not sources:
            out.append(cov_t)
            continue
        cov_s = np.mean(
            [class_mean_covariance(s.covariances, _binarize(s.y, positive), sign) for s in sources], axis=0
        )
        out.append((1.0 - lam) * cov_t + lam * cov_s)
    return out


def composite_csp(sources, target, lam, n_pairs=DEFAULT_N_PAIRS, **lda_kw) -> TransferModel:
    """Composite CSP: filters from a convex mix of target and source class means.

    ``lam`` is the weight of the (equally weighted) sources.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidInput(f"lambda must lie in [0, 1], got {lam}")
    _check_inputs(sources, target)
    positives = _task_classes(target.classes)
    filters = {c: csp_filters(*composite_covariances(sources, target, c, lam), n_pairs) for c in positives}
    ldas = {c: _target_lda(filters[c], target, c, **lda_kw) for c in positives}
    info = {"n_sources": len(sources), "lambda": lam, "lda_train_size": len(target)}
    return _single_member_model(COMPOSITE_CSP, target, filters, ldas, n_pairs, info)


# --------------------------------------------------------------------------
# prediction
# --------------------------------------------------------------------------
def _scatter_of(trials):
    if isinstance(trials, SubjectData):
        return trials.scatter
    X = as_array(trials)
    if X.ndim == 2:
        X = X[None]
    return X @ np.swapaxes(X, -1, -2)


def _member_predict(member: Member, classes, scatter):
    """Labels (as indices into ``classes``) and per-class scores of one member."""
    dec = np.column_stack([t.lda.decision_function(features_from_scatter(t.filter, scatter)) for t in member.tasks])
    post = expit(dec)
    if len(classes) == 2:
        return (dec[:, 0] > 0).astype(int), np.column_stack([1.0 - post[:, 0], post[:, 0]])
    return np.argmax(post, axis=1), post


def predict(model: TransferModel, trials):
    """Predict labels for one trial ``(C, T)`` or a batch ``(n, C, T)``.

    Returns
    -------
    labels : ndarray, shape (n,)
    scores : ndarray, shape (n, n_classes)
        LDA posteriors for single-member models (each in [0, 1]); vote
        fractions for the ensemble.
    """
    scatter = _scatter_of(trials)
    if scatter.shape[-1] != model.n_channels:
        raise InvalidInput(f"trials have {scatter.shape[-1]} channels, model expects {model.n_channels}")
    classes = np.asarray(model.classes)
    if len(model.members) == 1:
        idx, scores = _member_predict(model.members[0], classes, scatter)
        return classes[idx], scores
    votes = np.column_stack([_member_predict(m, classes, scatter)[0] for m in model.members])
    final = np.array([majority_vote(row, tie_breaker=row[-1]) for row in votes])
    scores = np.stack([(votes == k).mean(axis=1) for k in range(len(classes))], axis=1)
    return classes[final], scores


def accuracy(model, test: SubjectData):
    labels, _ = predict(model, test)
    return float(np.mean(labels == test.y) * 100.0)


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------
def model_to_dict(model: TransferModel):
    return {
        "schema": MODEL_SCHEMA,
        "strategy": model.strategy,
        "classes": list(model.classes),
        "n_pairs": model.n_pairs,
        "info": model.info,
        "members": [
            [{"positive_class": t.positive_class, "filter": t.filter.to_dict(), "lda": t.lda.to_dict()} for t in m.tasks]
            for m in model.members
        ],
    }


def model_from_dict(d) -> TransferModel:
    if d.get("schema") != MODEL_SCHEMA:
        raise FormatError(f"unsupported model schema {d.get('schema')!r}; expected {MODEL_SCHEMA!r}")
    if d["strategy"] not in STRATEGIES:
        raise FormatError(f"unknown strategy {d['strategy']!r}")
    members = tuple(
        Member(tuple(BinaryTask(t["positive_class"], SpatialFilter.from_dict(t["filter"]), LdaModel.from_dict(t["lda"])) for t in m))
        for m in d["members"]
    )
    return TransferModel(d["strategy"], tuple(d["classes"]), members, int(d["n_pairs"]), dict(d.get("info", {})))


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
