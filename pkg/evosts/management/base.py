import argparse
import logging

from django import forms
from django.core.management.base import BaseCommand, CommandError

from ..exceptions import EvoStsError
from ..forms import RunConfigForm, load_run_config
from ..signal_io import Dataset, load_signal, make_windows

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO}


class EvoStsCommand(BaseCommand):
    """
    Base for the pipeline commands.

    Adds ``--config`` plus one flag per configuration key, resolves and
    validates the configuration, and turns pipeline errors into
    ``CommandError`` with the error's exit code.
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON configuration document; flags override its keys')
        for name, field in RunConfigForm.base_fields.items():
            flag = '--' + name.replace('_', '-')
            if isinstance(field, forms.BooleanField):
                parser.add_argument(
                    flag, dest=name, default=None,
                    action=argparse.BooleanOptionalAction, help=field.help_text,
                )
            else:
                parser.add_argument(flag, dest=name, default=None, help=field.help_text)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # usage errors raise CommandError (exit 1) instead of the argparse exit status 2
        parser.called_from_command_line = False
        return parser

    def handle(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options.get('verbosity', 1), logging.DEBUG)
        logging.getLogger('evosts').setLevel(level)
        try:
            overrides = {name: options.get(name) for name in RunConfigForm.base_fields}
            config = load_run_config(options.get('config'), overrides)
            options.pop('config', None)
            self.run(config, **options)
        except EvoStsError as e:
            raise CommandError(str(e), returncode=e.exit_code) from e

    def run(self, config, **options):
        raise NotImplementedError('subclasses of EvoStsCommand must provide a run() method')

    def load_dataset(self, config, paths):
        """Window each input file separately and join them in argument order."""
        datasets = [
            make_windows(load_signal(path, config), config.feature_len, config.target_len, config.stride)
            for path in paths
        ]
        return Dataset.concatenate(datasets)

