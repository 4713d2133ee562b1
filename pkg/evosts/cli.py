"""
Standalone ``evosts`` entry point.

Runs the package's management commands without a Django project by
configuring minimal settings first:

    evosts synth signal.csv --synth-length 4000
    evosts learn-dict signal.csv atoms.bin
    evosts evolve signal.csv --out-dir run/ --threads 4
    evosts evaluate signal.csv --out report.csv
    evosts plot signal.csv --checkpoint run/gamma_final.bin --out plot.svg
"""
import sys

import django
from django.conf import settings
from django.core.management import load_command_class
from django.core.management.base import CommandError

from .conf import STANDALONE_SETTINGS

COMMANDS = {
    'synth': 'synth',
    'learn-dict': 'learn_dict',
    'evolve': 'evolve',
    'evaluate': 'evaluate',
    'plot': 'plot',
}


def setup():
    if not settings.configured:
        settings.configure(**STANDALONE_SETTINGS)
    django.setup()


def usage():
    return "usage: evosts {" + ",".join(COMMANDS) + "} [options]\n"


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ('-h', '--help'):
        sys.stdout.write(usage())
        return 0 if argv else 1

    name = argv[0]
    if name not in COMMANDS:
        sys.stderr.write(f"evosts: unknown command {name!r}\n" + usage())
        return 1

    setup()
    command = load_command_class('evosts', COMMANDS[name])
    try:
        command.run_from_argv(['evosts', name, *argv[1:]])
    except CommandError as e:
        sys.stderr.write(f"{e}\n")
        return e.returncode
    except SystemExit as e:
        # run_from_argv exits with CommandError.returncode on failure
        return e.code if isinstance(e.code, int) else 1
    return 0
