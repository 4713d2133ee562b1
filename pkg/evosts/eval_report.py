"""
Metrics, cross-validation of first- versus final-generation weights, and
report / plot output.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.template.loader import render_to_string
from PIL import Image, ImageDraw
from sklearn.metrics import mean_squared_error, r2_score

from . import serializers
from .evolution import evosts, improvement_summary
from .exceptions import DimensionMismatch, EmptyInput, ReportIoError, TooFewPairs, ZeroVariance
from .lstm_forecaster import predict_batch
from .signal_io import kfold_split

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['partition', 'r2_random', 'r2_optimized', 'rmse_random', 'rmse_optimized']
METRIC_FIELDS = REPORT_COLUMNS[1:]


def _flattened(pred, actual):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise DimensionMismatch(f"predictions {pred.shape} vs actual {actual.shape}")
    if actual.size == 0:
        raise EmptyInput("no values to score")
    return pred.ravel(), actual.ravel()


def rmse(pred, actual):
    pred, actual = _flattened(pred, actual)
    return float(np.sqrt(mean_squared_error(actual, pred)))


def r2(pred, actual):
    """Coefficient of determination over all flattened values; may be very negative."""
    pred, actual = _flattened(pred, actual)
    if not np.var(actual) > 0:
        raise ZeroVariance("actual values have zero variance; R2 undefined")
    return float(r2_score(actual, pred))


@dataclass(frozen=True)
class FoldReportRow:
    partition_id: object
    r2_random: float
    r2_optimized: float
    rmse_random: float
    rmse_optimized: float


@dataclass
class CvReport:
    rows: list
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)
    trend: list = field(default_factory=list)

    @property
    def means(self):
        if not self.rows:
            raise EmptyInput("report has no rows")
        return FoldReportRow(
            partition_id='mean',
            **{name: float(np.mean([getattr(row, name) for row in self.rows])) for name in METRIC_FIELDS},
        )


def _fold_metrics(weights, test, stats):
    predictions = stats.invert(predict_batch(weights, test.features))
    actual = stats.invert(test.targets)
    return r2(predictions, actual), rmse(predictions, actual)


def _run_fold(fold, dataset, folds, evo_cfg, normalize):
    train_idx, test_idx = folds.train_indices(fold), folds.test_indices(fold)
    if set(train_idx.tolist()) & set(test_idx.tolist()):
        raise AssertionError(f"fold {fold} leaks test pairs into training")

    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    if normalize:
        stats = train.fit_normalization()
        train, test = train.normalized(stats), test.normalized(stats)
    stats = train.normalization_stats

    run = evosts(train, evo_cfg)
    r2_random, rmse_random = _fold_metrics(run.first_generation_best, test, stats)
    r2_optimized, rmse_optimized = _fold_metrics(run.final_generation_best, test, stats)
    trend = improvement_summary(run)
    logger.info(
        f"Fold {fold}: rmse {rmse_random:.4g} -> {rmse_optimized:.4g}, "
        f"r2 {r2_random:.4g} -> {r2_optimized:.4g}, "
        f"score {trend['first_generation_best_score']:.4g} -> {trend['final_generation_best_score']:.4g}"
    )
    row = FoldReportRow(
        partition_id=fold + 1,
        r2_random=r2_random,
        r2_optimized=r2_optimized,
        rmse_random=rmse_random,
        rmse_optimized=rmse_optimized,
    )
    checksums = {
        'first_generation_best': run.first_generation_best.checksum(),
        'final_generation_best': run.final_generation_best.checksum(),
    }
    return row, trend, checksums


def cross_validate(dataset, evo_cfg, k_folds=10, seed=0, normalize=True):
    """
    k-fold comparison of the first- and final-generation best weights on each
    held-out fold, in the dataset's original units.

    With ``evo_cfg.threads > 1`` folds run concurrently and each fold's
    children run serially; rows come back in fold order either way.
    """
    folds = kfold_split(dataset, k_folds, seed)
    smallest_train = len(dataset) - int(folds.sizes().max())
    if smallest_train < evo_cfg.generations:
        raise TooFewPairs(
            f"training portion of {smallest_train} pairs cannot fill {evo_cfg.generations} generations"
        )

    if evo_cfg.threads > 1:
        fold_cfg = replace(evo_cfg, threads=1)
        with ThreadPoolExecutor(max_workers=evo_cfg.threads) as executor:
            futures = [
                executor.submit(_run_fold, fold, dataset, folds, fold_cfg, normalize)
                for fold in range(k_folds)
            ]
            outcomes = [future.result() for future in futures]
    else:
        outcomes = [_run_fold(fold, dataset, folds, evo_cfg, normalize) for fold in range(k_folds)]

    improved = sum(trend['improved'] for _, trend, _ in outcomes)
    logger.info(f"Final-generation score no worse than first in {improved} of {k_folds} folds")
    return CvReport(
        rows=[row for row, _, _ in outcomes],
        config={**evo_cfg.snapshot(), 'k_folds': k_folds, 'normalize': normalize},
        seeds={'master_seed': evo_cfg.master_seed, 'fold_seed': seed},
        checksums={str(row.partition_id): sums for (row, _, sums) in outcomes},
        trend=[trend for _, trend, _ in outcomes],
    )


def _format(value):
    return value if isinstance(value, str) else f"{value:.6g}"


def write_report(report, path):
    """CSV table (one row per fold plus a ``mean`` row) and a JSON manifest beside it."""
    if not report.rows:
        raise ReportIoError("refusing to write an empty report")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(REPORT_COLUMNS)
            for row in [*report.rows, report.means]:
                writer.writerow([row.partition_id, *(_format(getattr(row, name)) for name in METRIC_FIELDS)])
    except OSError as e:
        raise ReportIoError(f"cannot write {path}: {e}") from e

    serializers.write_json(serializers.sidecar_path(path), {
        'schema_version': serializers.SCHEMA_VERSION,
        'columns': REPORT_COLUMNS,
        'config': report.config,
        'seeds': report.seeds,
        'checksums': report.checksums,
        'improvement': report.trend,
    })
    return path


def read_report(path):
    """Parse a CSV written by write_report; the ``mean`` row is recomputed, not read."""
    path = Path(path)
    try:
        with path.open(newline='') as handle:
            records = list(csv.DictReader(handle))
    except OSError as e:
        raise ReportIoError(f"cannot read {path}: {e}") from e
    rows = [
        FoldReportRow(
            partition_id=int(record['partition']),
            **{name: float(record[name]) for name in METRIC_FIELDS},
        )
        for record in records
        if record['partition'] != 'mean'
    ]
    return CvReport(rows=rows)


# Plotting

PLOT_WIDTH = 800
PLOT_HEIGHT = 320
PLOT_MARGIN = {'left': 64, 'right': 16, 'top': 16, 'bottom': 40}
PLOT_COLORS = ['#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd', '#8c564b']
TICK_COUNT = 5


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    label: str
    values: np.ndarray
    # index of values[0] on the shared x axis
    offset: int = 0


def _as_series(label, series):
    if isinstance(series, LabeledSeries):
        return series
    if hasattr(series, 'samples'):
        return LabeledSeries(label=label or series.source_id or 'signal', values=series.samples)
    return LabeledSeries(label=label, values=np.asarray(series, dtype=np.float64))


def _plot_layout(series):
    x_max = max(s.offset + len(s.values) - 1 for s in series)
    x_min = min(s.offset for s in series)
    values = np.concatenate([s.values for s in series])
    y_min, y_max = float(values.min()), float(values.max())
    if y_min == y_max:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    if x_min == x_max:
        x_max = x_min + 1

    left, top = PLOT_MARGIN['left'], PLOT_MARGIN['top']
    width = PLOT_WIDTH - PLOT_MARGIN['left'] - PLOT_MARGIN['right']
    height = PLOT_HEIGHT - PLOT_MARGIN['top'] - PLOT_MARGIN['bottom']

    def x_pixel(x):
        return left + (x - x_min) / (x_max - x_min) * width

    def y_pixel(y):
        return top + (y_max - y) / (y_max - y_min) * height

    lines = [
        {
            'label': s.label,
            'color': PLOT_COLORS[i % len(PLOT_COLORS)],
            'points': [
                (x_pixel(s.offset + j), y_pixel(v)) for j, v in enumerate(s.values)
            ],
        }
        for i, s in enumerate(series)
    ]
    x_ticks = [
        {'position': x_pixel(x), 'label': x}
        for x in np.linspace(x_min, x_max, TICK_COUNT)
    ]
    y_ticks = [
        {'position': y_pixel(y), 'label': y}
        for y in np.linspace(y_min, y_max, TICK_COUNT)
    ]
    return {
        'width': PLOT_WIDTH,
        'height': PLOT_HEIGHT,
        'left': left,
        'top': top,
        'right': left + width,
        'bottom': top + height,
        'lines': lines,
        'x_ticks': x_ticks,
        'y_ticks': y_ticks,
    }


def render_png(layout, path):
    """Rasterise a plot layout with Pillow."""
    image = Image.new('RGB', (layout['width'], layout['height']), 'white')
    draw = ImageDraw.Draw(image)
    draw.rectangle(
        [layout['left'], layout['top'], layout['right'], layout['bottom']],
        outline='black',
    )
    for line in layout['lines']:
        points = [(round(x, 2), round(y, 2)) for x, y in line['points']]
        if len(points) > 1:
            draw.line(points, fill=line['color'], width=2)
        else:
            draw.point(points, fill=line['color'])
    for index, line in enumerate(layout['lines']):
        y = layout['top'] + 8 + 14 * index
        draw.line([(layout['right'] - 120, y), (layout['right'] - 100, y)], fill=line['color'], width=2)
        draw.text((layout['right'] - 96, y - 6), line['label'], fill='black')
    image.save(path, format='PNG')
    return path


def plot_signal(actual, predictions, path, png_path=None):
    """
    Standalone SVG of ``actual`` (a Signal, array or LabeledSeries) with each
    labelled prediction series over it; ``predictions`` maps labels to
    arrays or is a sequence of LabeledSeries.
    """
    series = [_as_series('actual', actual)]
    if isinstance(predictions, dict):
        series += [_as_series(label, values) for label, values in predictions.items()]
    else:
        series += [_as_series(getattr(p, 'label', ''), p) for p in predictions]
    if any(len(s.values) == 0 for s in series):
        raise EmptyInput("cannot plot an empty series")
    if not all(np.all(np.isfinite(s.values)) for s in series):
        raise EmptyInput("cannot plot non-finite values")

    layout = _plot_layout(series)
    svg = render_to_string('evosts/plot.svg', layout)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg)
        if png_path:
            render_png(layout, png_path)
    except OSError as e:
        raise ReportIoError(f"cannot write plot {path}: {e}") from e
    logger.info(f"Wrote plot with {len(series)} series to {path}")
    return path
