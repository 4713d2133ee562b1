from pathlib import Path

from ...evolution import evosts, improvement_summary, write_run
from ...exceptions import DimensionMismatch
from ...sparse_coding import load_dictionary
from ..base import EvoStsCommand


class Command(EvoStsCommand):
    help = 'Run the evolutionary forecasting loop and write a run manifest with checkpoints'

    def add_command_arguments(self, parser):
        parser.add_argument('signals', nargs='+', help='One or more signal files')
        parser.add_argument('--out-dir', required=True, help='Directory for manifest.json and checkpoints')
        parser.add_argument('--dictionary', help='Use this learned dictionary for every generation')

    def run(self, config, **options):
        dataset = self.load_dataset(config, options['signals'])
        stats = dataset.fit_normalization() if config.normalize else dataset.normalization_stats
        if config.normalize:
            dataset = dataset.normalized(stats)

        dictionary = None
        if options.get('dictionary'):
            dictionary, _ = load_dictionary(options['dictionary'])
            if dictionary.atom_len != config.target_len:
                raise DimensionMismatch(
                    f"dictionary atom length {dictionary.atom_len} != target_len {config.target_len}"
                )

        run = evosts(dataset, config.evo_config(), dictionary=dictionary)
        manifest = write_run(run, options['out_dir'], extra={
            'run_config': config.snapshot(),
            'inputs': [Path(path).name for path in options['signals']],
            'normalization': {'mean': stats.mean, 'std': stats.std},
            'pairs': len(dataset),
        })

        summary = improvement_summary(run)
        self.stdout.write(
            f"Best score {summary['first_generation_best_score']:.6g} (first generation) -> "
            f"{summary['final_generation_best_score']:.6g} (generation {len(run.generations)})"
        )
        self.stdout.write(self.style.SUCCESS(f'Wrote run manifest to {manifest}'))
