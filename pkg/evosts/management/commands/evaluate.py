from ...eval_report import cross_validate, write_report
from ..base import EvoStsCommand


class Command(EvoStsCommand):
    help = 'Cross-validate first- versus final-generation weights and write the report CSV'

    def add_command_arguments(self, parser):
        parser.add_argument('signals', nargs='+', help='One or more signal files')
        parser.add_argument('--out', required=True, help='Destination report CSV (JSON manifest beside it)')

    def run(self, config, **options):
        dataset = self.load_dataset(config, options['signals'])
        report = cross_validate(
            dataset,
            config.evo_config(),
            k_folds=config.k_folds,
            seed=config.seed,
            normalize=config.normalize,
        )
        report.config['run_config'] = config.snapshot()
        path = write_report(report, options['out'])

        means = report.means
        self.stdout.write(
            f'Mean RMSE {means.rmse_random:.6g} -> {means.rmse_optimized:.6g}, '
            f'mean R2 {means.r2_random:.6g} -> {means.r2_optimized:.6g}'
        )
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(report.rows)}-fold report to {path}'))
