"""Dataset container format, subsampling, and a synthetic multi-subject generator.

On-disk layout
--------------
A dataset is a JSON manifest (schema ``rtcsp-dataset/1``) next to raw
trial files. Each trial file holds little-endian float64 values, row-major
``(C, T)`` per trial, trials concatenated; the trial count comes from the
matching label file, which has one integer label per line.

Example manifest::

    {
      "schema": "rtcsp-dataset/1",
      "name": "bcic-iv-2a",
      "fs": 250.0,
      "n_channels": 22,
      "n_samples": 500,
      "channel_names": null,
      "channel_subset": null,
      "window": [125, 625],
      "bandpass": {"low_hz": 8, "high_hz": 30, "order": 5, "zero_phase": true},
      "covariance_estimator": "plain",
      "label_alphabet": [1, 2, 3, 4],
      "subjects": [
        {"subject_id": "A01", "train_file": "A01T.f64", "train_labels": "A01T.txt",
         "test_file": "A01E.f64", "test_labels": "A01E.txt"}
      ]
    }

``n_samples`` is the stored trial length; ``window`` optionally crops it to
``[start, stop)`` samples before filtering. ``channel_subset`` is a list of
channel indices kept (in that order) from the stored channels.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, DegenerateInput, FormatError, InvalidInput, IoError
from .signal import ESTIMATORS, BandpassSpec, bandpass
from .transfer import SubjectData

DATASET_SCHEMA = "rtcsp-dataset/1"
_DTYPE = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class Subject:
    subject_id: str
    train: SubjectData
    test: SubjectData


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------
@dataclass
class SubjectEntry:
    subject_id: str
    train_file: str
    train_labels: str
    test_file: str
    test_labels: str


@dataclass
class DatasetManifest:
    name: str
    fs: float
    n_channels: int
    n_samples: int
    subjects: list[SubjectEntry]
    label_alphabet: list[int]
    channel_names: list[str] | None = None
    channel_subset: list[int] | None = None
    window: list[int] | None = None
    bandpass: dict | None = None
    covariance_estimator: str = "plain"
    schema: str = DATASET_SCHEMA
    root: Path = field(default=Path("."), repr=False, compare=False)

    @classmethod
    def from_dict(cls, d, root=Path(".")):
        if not isinstance(d, dict):
            raise ConfigError("manifest must be a JSON object")
        known = {f.name for f in fields(cls)} - {"root"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
        if d.get("schema") != DATASET_SCHEMA:
            raise ConfigError(f"manifest schema must be {DATASET_SCHEMA!r}, got {d.get('schema')!r}")
        missing = {"name", "fs", "n_channels", "n_samples", "subjects", "label_alphabet"} - set(d)
        if missing:
            raise ConfigError(f"manifest is missing keys: {sorted(missing)}")
        subjects = []
        for s in d["subjects"]:
            try:
                subjects.append(SubjectEntry(**s))
            except TypeError as exc:
                raise ConfigError(f"bad subject entry {s!r}: {exc}") from None
        m = cls(**{**d, "subjects": subjects}, root=Path(root))
        m.validate()
        return m

    def to_dict(self):
        d = asdict(self)
        d.pop("root")
        return d

    def validate(self):
        if self.fs <= 0 or self.n_channels < 2 or self.n_samples < 2:
            raise ConfigError("fs, n_channels and n_samples must be positive (>= 2 channels)")
        if self.covariance_estimator not in ESTIMATORS:
            raise ConfigError(f"covariance_estimator must be one of {sorted(ESTIMATORS)}")
        if self.channel_names is not None and len(self.channel_names) != self.n_channels:
            raise ConfigError("channel_names length does not match n_channels")
        if self.channel_subset is not None:
            if len(self.channel_subset) < 2 or any(not 0 <= i < self.n_channels for i in self.channel_subset):
                raise ConfigError(f"channel_subset indices must lie in [0, {self.n_channels})")
        if self.window is not None:
            start, stop = self.window
            if not 0 <= start < stop <= self.n_samples:
                raise ConfigError(f"window {self.window} outside [0, {self.n_samples}]")
        if self.bandpass is not None:
            try:
                BandpassSpec(**self.bandpass).validate(self.fs)
            except (TypeError, InvalidInput) as exc:
                raise ConfigError(f"invalid bandpass: {exc}") from None
        if len({s.subject_id for s in self.subjects}) != len(self.subjects) or not self.subjects:
            raise ConfigError("subject ids must be unique and non-empty")
        for s in self.subjects:
            for f in (s.train_file, s.train_labels, s.test_file, s.test_labels):
                if not (self.root / f).is_file():
                    raise IoError(f"referenced file does not exist: {self.root / f}")


def read_labels(path, alphabet=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IoError(f"label file not found: {path}") from None
    labels = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            labels.append(int(line))
        except ValueError:
            raise FormatError(f"{path}: line {lineno} is not an integer label: {line!r}") from None
    labels = np.asarray(labels, dtype=int)
    if alphabet is not None:
        bad = set(labels.tolist()) - set(alphabet)
        if bad:
            raise FormatError(f"{path}: labels {sorted(bad)} not in declared alphabet {alphabet}")
    return labels


def read_trials(path, n_trials, n_channels, n_samples):
    """Read ``n_trials`` trials of shape (C, T) from a raw float64 file."""
    path = Path(path)
    expected = n_trials * n_channels * n_samples * _DTYPE.itemsize
    try:
        size = path.stat().st_size
    except FileNotFoundError:
        raise IoError(f"trial file not found: {path}") from None
    if size != expected:
        trial_bytes = n_channels * n_samples * _DTYPE.itemsize
        offset = min(size, expected)
        raise FormatError(
            f"{path}: size {size} bytes, expected {expected} for {n_trials} trials of "
            f"{n_channels}x{n_samples}; mismatch at byte offset {offset} (trial {offset // trial_bytes})"
        )
    return np.fromfile(path, dtype=_DTYPE).reshape(n_trials, n_channels, n_samples).astype(float)


def write_trials(path, X):
    np.ascontiguousarray(X, dtype=_DTYPE).tofile(path)


def write_labels(path, y):
    Path(path).write_text("".join(f"{int(v)}\n" for v in y), encoding="utf-8")


def save_dataset(subjects, directory, name, fs, channel_names=None, bandpass_spec=None, estimator="plain"):
    """Write subjects and a manifest into ``directory``; return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in subjects:
        sid = s.subject_id
        entry = SubjectEntry(sid, f"{sid}_train.f64", f"{sid}_train_labels.txt", f"{sid}_test.f64", f"{sid}_test_labels.txt")
        write_trials(directory / entry.train_file, s.train.X)
        write_labels(directory / entry.train_labels, s.train.y)
        write_trials(directory / entry.test_file, s.test.X)
        write_labels(directory / entry.test_labels, s.test.y)
        entries.append(entry)
    first = subjects[0].train.X
    alphabet = sorted({int(v) for s in subjects for v in np.concatenate([s.train.y, s.test.y])})
    manifest = DatasetManifest(
        name=name,
        fs=float(fs),
        n_channels=int(first.shape[1]),
        n_samples=int(first.shape[2]),
        subjects=entries,
        label_alphabet=alphabet,
        channel_names=list(channel_names) if channel_names is not None else None,
        bandpass=asdict(bandpass_spec) if bandpass_spec is not None else None,
        covariance_estimator=estimator,
    )
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(manifest_path):
    manifest_path = Path(manifest_path)
    try:
        d = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IoError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}: invalid JSON: {exc}") from None
    return DatasetManifest.from_dict(d, root=manifest_path.parent)


def _preprocess(X, m: DatasetManifest):
    if m.channel_subset is not None:
        X = X[:, m.channel_subset, :]
    if m.window is not None:
        X = X[:, :, m.window[0]:m.window[1]]
    if m.bandpass is not None:
        X = bandpass(X, m.fs, BandpassSpec(**m.bandpass))
    return X


def load_dataset(manifest_path, preprocess=True):
    """Load every subject listed in a manifest.

    Channel subset, window and bandpass are applied in that order when
    ``preprocess`` is true. Covariances use the manifest's estimator and are
    computed lazily.

    Returns
    -------
    list of Subject
        In manifest order.
    """
    m = read_manifest(manifest_path)
    out = []
    for s in m.subjects:
        parts = {}
        for part, data_file, label_file in (("train", s.train_file, s.train_labels), ("test", s.test_file, s.test_labels)):
            y = read_labels(m.root / label_file, m.label_alphabet)
            X = read_trials(m.root / data_file, len(y), m.n_channels, m.n_samples)
            if preprocess:
                X = _preprocess(X, m)
            parts[part] = SubjectData(s.subject_id, X, y, m.fs, m.covariance_estimator)
        out.append(Subject(s.subject_id, parts["train"], parts["test"]))
    return out


# --------------------------------------------------------------------------
# subsampling
# --------------------------------------------------------------------------
def subsample_indices(y, fraction, seed):
    """Stratified ``ceil(fraction * N_c)`` indices per class, in original order."""
    if not 0 < fraction <= 1:
        raise InvalidInput(f"fraction must lie in (0, 1], got {fraction}")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    keep = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        k = math.ceil(round(fraction * len(idx), 9))
        if k < 2:
            raise DegenerateInput(f"fraction {fraction} leaves {k} trial(s) of class {c}")
        keep.append(rng.permutation(idx)[:k])
    return np.sort(np.concatenate(keep))


def subsample_training(subject: SubjectData, fraction, seed) -> SubjectData:
    """Seeded, class-stratified subset of a subject's training trials."""
    return subject.subset(subsample_indices(subject.y, fraction, seed))


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------
@dataclass
class SynthConfig:
    """Linear-mixing model of several subjects sharing class-dependent sources.

    Each latent source is band-limited Gaussian noise whose variance depends
    on the class (``source_variance_profiles[class][source]``) and is jittered
    per trial by a log-normal factor. Subject ``s`` observes
    ``D_s (A + e * E_s) z + noise`` where ``A`` is a shared random
    orthogonal mixing, ``E_s`` a Gaussian perturbation of scale ``e`` and
    ``D_s`` a diagonal channel gain ``exp(scale_jitter * N(0, 1))``.

    With probability ``artifact_rate`` a trial also receives a transient
    component along a random channel-space direction whose power is
    ``artifact_power`` times the trial's mean channel power.
    """

    n_subjects: int = 6
    n_classes: int = 2
    n_channels: int = 8
    n_samples: int = 250
    fs: float = 125.0
    trials_per_class: int = 50
    test_trials_per_class: int = 50
    source_variance_profiles: list[list[float]] | None = None
    mixing_perturbation_scale: float = 0.3
    scale_jitter: float = 0.2
    noise_level: float = 0.1
    trial_variability: float = 0.3
    artifact_rate: float = 0.0
    artifact_power: float = 10.0
    band: tuple[float, float] = (8.0, 30.0)
    seed: int = 0

    def validate(self):
        counts = (self.n_subjects, self.n_classes, self.n_channels, self.n_samples, self.trials_per_class, self.test_trials_per_class)
        if any(int(c) != c or c < 1 for c in counts):
            raise ConfigError("all counts must be positive integers")
        if self.n_classes < 2 or self.n_channels < 2:
            raise ConfigError("need at least two classes and two channels")
        nonneg = (self.noise_level, self.mixing_perturbation_scale, self.scale_jitter, self.trial_variability, self.artifact_power)
        if any(v < 0 for v in nonneg):
            raise ConfigError("noise_level, perturbation, jitter, variability and artifact_power must be >= 0")
        if not 0 <= self.artifact_rate <= 1:
            raise ConfigError("artifact_rate must lie in [0, 1]")
        if not 0 < self.band[0] < self.band[1] < self.fs / 2:
            raise ConfigError(f"band {self.band} must lie inside (0, fs/2)")
        profiles = self.variance_profiles()
        if profiles.shape != (self.n_classes, self.n_channels) or np.any(profiles <= 0):
            raise ConfigError(
                f"source_variance_profiles must be {self.n_classes} x {self.n_channels} positive values"
            )

    def variance_profiles(self):
        if self.source_variance_profiles is not None:
            return np.asarray(self.source_variance_profiles, dtype=float)
        prof = np.ones((self.n_classes, self.n_channels))
        for k in range(self.n_classes):
            prof[k, k % self.n_channels] = 2.0
        return prof

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if isinstance(cfg.band, list):
            cfg.band = tuple(cfg.band)
        cfg.validate()
        return cfg

    def to_dict(self):
        d = asdict(self)
        d["band"] = list(self.band)
        return d


def _bandlimited_noise(rng, shape, sos, burn_in):
    white = rng.standard_normal(shape[:-1] + (shape[-1] + burn_in,))
    return sps.sosfilt(sos, white, axis=-1)[..., burn_in:]


def _synth_trials(rng, cfg, mixing, n_per_class, profiles, sos, burn_in):
    C, T = cfg.n_channels, cfg.n_samples
    y = np.repeat(np.arange(1, cfg.n_classes + 1), n_per_class)
    y = y[rng.permutation(len(y))]
    src = _bandlimited_noise(rng, (len(y), C, T), sos, burn_in)
    power = profiles[y - 1] * np.exp(cfg.trial_variability * rng.standard_normal((len(y), C)))
    src *= np.sqrt(power)[:, :, None]
    noise = _bandlimited_noise(rng, (len(y), C, T), sos, burn_in)
    X = mixing @ src + cfg.noise_level * noise
    # artifacts: one extra component with a random scalp direction on a random subset of trials
    hit = rng.random(len(y)) < cfg.artifact_rate
    direction = rng.standard_normal((len(y), C, 1))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    burst = _bandlimited_noise(rng, (len(y), 1, T), sos, burn_in)
    level = np.sqrt(cfg.artifact_power * np.mean(X**2, axis=(1, 2)))
    X = X + (hit * level)[:, None, None] * direction * burst / burst.std(axis=-1, keepdims=True)
    return X, y


def synth_generate(config: SynthConfig):
    """Generate ``config.n_subjects`` subjects with train and test partitions.

    Labels are ``1 .. n_classes``. Output is a pure function of the config.
    """
    config.validate()
    C = config.n_channels
    profiles = config.variance_profiles()
    sos = sps.butter(4, list(config.band), btype="bandpass", fs=config.fs, output="sos")
    burn_in = int(4 * config.fs / config.band[0])
    root = np.random.SeedSequence(config.seed)
    base_seq, *subject_seqs = root.spawn(config.n_subjects + 1)
    base_rng = np.random.default_rng(base_seq)
    base, _ = np.linalg.qr(base_rng.standard_normal((C, C)))
    subjects = []
    width = max(2, len(str(config.n_subjects)))
    for i, seq in enumerate(subject_seqs):
        rng = np.random.default_rng(seq)
        perturb = rng.standard_normal((C, C)) / np.sqrt(C)
        gains = np.exp(config.scale_jitter * rng.standard_normal(C))
        mixing = gains[:, None] * (base + config.mixing_perturbation_scale * perturb)
        sid = f"S{i + 1:0{width}d}"
        Xtr, ytr = _synth_trials(rng, config, mixing, config.trials_per_class, profiles, sos, burn_in)
        Xte, yte = _synth_trials(rng, config, mixing, config.test_trials_per_class, profiles, sos, burn_in)
        subjects.append(
            Subject(sid, SubjectData(sid, Xtr, ytr, config.fs), SubjectData(sid, Xte, yte, config.fs))
        )
    return subjects
