from pathlib import Path

import numpy as np

from ...exceptions import ReportIoError
from ...signal_io import generate_synthetic
from ..base import EvoStsCommand


class Command(EvoStsCommand):
    help = 'Generate a synthetic sum-of-sinusoids signal and write it as a one-column CSV'

    def add_command_arguments(self, parser):
        parser.add_argument('out', help='Destination CSV file')

    def run(self, config, **options):
        signal = generate_synthetic(
            length=config.synth_length,
            components=config.synth_components,
            noise_std=config.noise_std,
            seed=config.seed,
            sample_rate_hz=config.sample_rate_hz,
        )
        out = Path(options['out'])
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            np.savetxt(out, signal.samples, fmt='%.17g')
        except OSError as e:
            raise ReportIoError(f"cannot write {out}: {e}") from e

        self.stdout.write(self.style.SUCCESS(f'Wrote {len(signal)} samples to {out}'))
