"""
Signal ingestion, synthesis, normalisation, windowing and partitioning.

All functions are pure given their inputs and seed.
"""
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .conf import default_sample_rate
from .exceptions import (
    EmptySignal,
    InvalidConfig,
    InvalidLength,
    OddByteCount,
    ParseError,
    SignalNotFound,
    SignalTooShort,
    TooFewPairs,
    ZeroVariance,
)

logger = logging.getLogger(__name__)

# 2 * 16.384 mV spread over 2**16 codes
DEFAULT_LSB_MV = 2 * 16.384 / 2 ** 16


@dataclass(frozen=True, eq=False)
class Signal:
    """A uniformly sampled univariate sequence, amplitudes in mV."""

    samples: np.ndarray
    sample_rate_hz: float = 1000.0
    source_id: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'samples', np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate_hz <= 0:
            raise InvalidConfig("must be positive", key='sample_rate_hz')

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class NormalizationStats:
    mean: float = 0.0
    std: float = 1.0

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        std = float(values.std())
        if not std > 0:
            raise ZeroVariance("signal has zero variance; cannot normalise")
        return cls(mean=float(values.mean()), std=std)


@dataclass(frozen=True, eq=False)
class WindowPair:
    features: np.ndarray
    target: np.ndarray
    origin_index: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Windowed (features, target) pairs.

    ``features`` is (n, F) and ``targets`` is (n, T); ``origins`` holds each
    pair's sample offset into its parent signal and ``sources`` the parent
    signal's id, so pairs coming from several files stay distinguishable.
    """

    features: np.ndarray
    targets: np.ndarray
    origins: np.ndarray
    feature_len: int
    target_len: int
    normalization_stats: NormalizationStats = field(default_factory=NormalizationStats)
    sources: tuple = ()

    def __post_init__(self):
        if self.normalization_stats.std <= 0:
            raise ZeroVariance("normalization std must be positive")
        if not self.sources:
            object.__setattr__(self, 'sources', ('',) * len(self.origins))

    def __len__(self):
        return len(self.origins)

    @property
    def pairs(self):
        return [self.pair(index) for index in range(len(self))]

    def pair(self, index):
        return WindowPair(
            features=self.features[index],
            target=self.targets[index],
            origin_index=int(self.origins[index]),
        )

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[indices],
            targets=self.targets[indices],
            origins=self.origins[indices],
            sources=tuple(self.sources[i] for i in indices),
        )

    def normalized(self, stats):
        """Apply ``stats`` to raw-unit pairs; the result remembers the stats."""
        return replace(
            self,
            features=stats.apply(self.features),
            targets=stats.apply(self.targets),
            normalization_stats=stats,
        )

    def fit_normalization(self):
        return NormalizationStats.fit(np.concatenate([self.features.ravel(), self.targets.ravel()]))

    @classmethod
    def concatenate(cls, datasets):
        """Join datasets in order; all must share window sizes and stats."""
        datasets = list(datasets)
        if not datasets:
            raise TooFewPairs("nothing to concatenate")
        first = datasets[0]
        for other in datasets[1:]:
            if (other.feature_len, other.target_len) != (first.feature_len, first.target_len):
                raise InvalidConfig("datasets differ in window sizes", key='feature_len')
        return replace(
            first,
            features=np.concatenate([d.features for d in datasets]),
            targets=np.concatenate([d.targets for d in datasets]),
            origins=np.concatenate([d.origins for d in datasets]),
            sources=sum((d.sources for d in datasets), ()),
        )

    def segments(self):
        """
        Rebuild the contiguous signal stretches covered by the pairs.

        Returns a list of 1-D arrays, one per gap-free stretch, in pair order
        per source.
        """
        span = self.feature_len + self.target_len
        stretches = []
        for source in dict.fromkeys(self.sources):
            members = [i for i, s in enumerate(self.sources) if s == source]
            origins = self.origins[members]
            start, stop = int(origins.min()), int(origins.max()) + span
            buffer = np.full(stop - start, np.nan)
            for i in members:
                offset = int(self.origins[i]) - start
                buffer[offset:offset + self.feature_len] = self.features[i]
                buffer[offset + self.feature_len:offset + span] = self.targets[i]
            covered = ~np.isnan(buffer)
            # split on uncovered gaps
            edges = np.flatnonzero(np.diff(np.concatenate([[0], covered.astype(np.int8), [0]])))
            for begin, end in zip(edges[::2], edges[1::2]):
                stretches.append(buffer[begin:end])
        return stretches

    def dictionary_windows(self, length, hop):
        """Length-``length`` sub-windows of the covered signal, ``hop`` apart."""
        windows = [
            sliding_window_view(stretch, length)[::hop]
            for stretch in self.segments()
            if len(stretch) >= length
        ]
        if not windows:
            return np.empty((0, length))
        return np.concatenate(windows)


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_count: int
    assignment: np.ndarray

    def test_indices(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.fold_count)


def load_csv(path, column=0, sample_rate_hz=None):
    """
    Read one column of a CSV file, one sample per row.

    A single header row is skipped when its cell does not parse as a number.
    """
    path = Path(path)
    if not path.is_file():
        raise SignalNotFound(f"signal file not found: {path}")

    samples = []
    seen_row = False
    with path.open(newline='') as handle:
        for row_number, row in enumerate(csv.reader(handle)):
            if not row or all(not cell.strip() for cell in row):
                continue
            first_row, seen_row = not seen_row, True
            if column >= len(row):
                raise ParseError(f"row has only {len(row)} column(s)", row=row_number, column=column)
            cell = row[column].strip()
            try:
                value = float(cell)
            except ValueError:
                if first_row:
                    logger.debug(f"Skipping header row in {path}: {row!r}")
                    continue
                raise ParseError(f"not a number: {cell!r}", row=row_number, column=column)
            if not math.isfinite(value):
                raise ParseError(f"non-finite sample {cell!r}", row=row_number, column=column)
            samples.append(value)

    if not samples:
        raise EmptySignal(f"{path} holds no samples")
    return Signal(
        samples=np.array(samples, dtype=np.float64),
        sample_rate_hz=sample_rate_hz or default_sample_rate(),
        source_id=str(path),
    )


def load_raw_i16(path, lsb_mv=DEFAULT_LSB_MV, channels=1, channel=0, sample_rate_hz=None):
    """
    Read signed 16-bit little-endian samples, optionally de-interleaving a
    multiplexed record and keeping only ``channel``.
    """
    path = Path(path)
    if not path.is_file():
        raise SignalNotFound(f"signal file not found: {path}")
    if not 0 <= channel < channels:
        raise InvalidConfig(f"channel {channel} outside 0..{channels - 1}", key='raw_channel')

    size = path.stat().st_size
    if size % (2 * channels):
        raise OddByteCount(f"{path} is {size} bytes, not a multiple of {2 * channels}")
    codes = np.fromfile(path, dtype='<i2')
    if codes.size == 0:
        raise EmptySignal(f"{path} holds no samples")
    codes = codes.reshape(-1, channels)[:, channel]
    return Signal(
        samples=codes.astype(np.float64) * lsb_mv,
        sample_rate_hz=sample_rate_hz or default_sample_rate(),
        source_id=f"{path}#{channel}" if channels > 1 else str(path),
    )


def load_signal(path, config):
    """Pick a loader from the file suffix: ``.csv``/``.txt`` or raw 16-bit."""
    path = Path(path)
    if path.suffix.lower() in ('.csv', '.txt'):
        return load_csv(path, column=config.csv_column, sample_rate_hz=config.sample_rate_hz)
    return load_raw_i16(
        path,
        lsb_mv=config.lsb_mv,
        channels=config.raw_channels,
        channel=config.raw_channel,
        sample_rate_hz=config.sample_rate_hz,
    )


def generate_synthetic(length, components, noise_std=0.0, seed=0, sample_rate_hz=1000.0):
    """Sum of sinusoids plus seeded gaussian noise."""
    if length <= 0:
        raise InvalidLength("must be positive", key='synth_length')
    if noise_std < 0:
        raise InvalidConfig("must be non-negative", key='noise_std')

    t = np.arange(length, dtype=np.float64) / sample_rate_hz
    samples = np.zeros(length, dtype=np.float64)
    for amplitude, frequency_hz, phase in components:
        samples += amplitude * np.sin(2 * np.pi * frequency_hz * t + phase)
    if noise_std > 0:
        samples += np.random.default_rng(seed).normal(0.0, noise_std, size=length)
    return Signal(samples=samples, sample_rate_hz=sample_rate_hz, source_id=f"synthetic:{seed}")


def normalize(signal):
    """Z-score a signal; returns the normalised signal and the stats used."""
    stats = NormalizationStats.fit(signal.samples)
    return replace(signal, samples=stats.apply(signal.samples)), stats


def make_windows(signal, feature_len, target_len, stride=None, stats=None):
    """
    Cut (features, target) pairs at origins 0, stride, 2*stride, ...

    ``stride`` defaults to ``target_len`` so targets never overlap.
    """
    if stride is None:
        stride = target_len
    if feature_len < 1 or target_len < 1:
        raise InvalidConfig("window lengths must be positive", key='feature_len')
    if stride < 1:
        raise InvalidConfig("must be at least 1", key='stride')
    span = feature_len + target_len
    if len(signal) < span:
        raise SignalTooShort(
            f"signal of {len(signal)} samples is shorter than feature_len + target_len = {span}"
        )

    windows = sliding_window_view(signal.samples, span)[::stride]
    origins = np.arange(len(windows), dtype=np.int64) * stride
    return Dataset(
        features=np.array(windows[:, :feature_len]),
        targets=np.array(windows[:, feature_len:]),
        origins=origins,
        feature_len=feature_len,
        target_len=target_len,
        normalization_stats=stats or NormalizationStats(),
        sources=(signal.source_id,) * len(origins),
    )


def kfold_split(dataset, k_folds, seed=0):
    """Seeded shuffle, then round-robin fold assignment."""
    n = len(dataset)
    if k_folds < 2:
        raise InvalidConfig("must be at least 2", key='k_folds')
    if n < k_folds:
        raise TooFewPairs(f"{n} pairs cannot fill {k_folds} folds")

    order = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % k_folds
    return FoldAssignment(fold_count=k_folds, assignment=assignment)


def partition_generations(dataset, generations):
    """
    Contiguous, time-ordered slices of near-equal size; earlier slices take
    the remainder.
    """
    n = len(dataset)
    if generations < 1:
        raise InvalidConfig("must be at least 1", key='generations')
    if n < generations:
        raise TooFewPairs(f"{n} pairs cannot fill {generations} generations")
    return [dataset.subset(chunk) for chunk in np.array_split(np.arange(n), generations)]


def sub_windows(signal, length, hop=None):
    """Length-``length`` windows of a whole signal, ``hop`` samples apart."""
    hop = hop or length
    if len(signal) < length:
        raise SignalTooShort(f"signal of {len(signal)} samples is shorter than window length {length}")
    return np.array(sliding_window_view(signal.samples, length)[::hop])
