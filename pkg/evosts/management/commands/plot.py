import numpy as np

from ...eval_report import LabeledSeries, plot_signal
from ...exceptions import DimensionMismatch, TooFewPairs
from ...lstm_forecaster import load_checkpoint, predict_batch
from ..base import EvoStsCommand

# target lengths of feature context drawn before the target
CONTEXT_TARGETS = 4


class Command(EvoStsCommand):
    help = 'Draw one window of a signal and, optionally, a checkpoint\'s prediction for it as SVG'

    def add_command_arguments(self, parser):
        parser.add_argument('signal', help='Signal file')
        parser.add_argument('--out', required=True, help='Destination SVG file')
        parser.add_argument('--checkpoint', help='Weight checkpoint (.bin) whose prediction is drawn')
        parser.add_argument('--window', type=int, default=0, help='Index of the window to draw')
        parser.add_argument('--png', help='Also rasterise the plot to this PNG file')

    def run(self, config, **options):
        dataset = self.load_dataset(config, [options['signal']])
        stats = dataset.fit_normalization() if config.normalize else dataset.normalization_stats
        index = options['window']
        if not 0 <= index < len(dataset):
            raise TooFewPairs(f"window {index} outside 0..{len(dataset) - 1}")

        context = min(dataset.feature_len, CONTEXT_TARGETS * dataset.target_len)
        pair = dataset.pair(index)
        actual = LabeledSeries(
            label='actual',
            values=np.concatenate([pair.features[-context:], pair.target]),
        )
        predictions = []
        if options.get('checkpoint'):
            weights, meta = load_checkpoint(options['checkpoint'])
            if weights.dims.input_dim != dataset.feature_len or weights.dims.output_dim != dataset.target_len:
                raise DimensionMismatch(f"checkpoint dims {weights.dims} do not match the configured windows")
            normalized = stats.apply(pair.features[None, :])
            predicted = stats.invert(predict_batch(weights, normalized))[0]
            label = f"prediction (epoch {meta.get('epoch')})"
            predictions.append(LabeledSeries(label=label, values=predicted, offset=context))

        path = plot_signal(actual, predictions, options['out'], png_path=options.get('png'))
        self.stdout.write(self.style.SUCCESS(f'Wrote plot to {path}'))
