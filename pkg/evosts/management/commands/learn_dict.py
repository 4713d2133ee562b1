from ... import serializers
from ...evolution import DICTIONARY_STREAM, derive_seed
from ...signal_io import load_signal, normalize, sub_windows
from ...sparse_coding import learn_dictionary, save_dictionary
from ..base import EvoStsCommand


class Command(EvoStsCommand):
    help = 'Learn a sparse dictionary of target-length atoms from a signal'

    def add_command_arguments(self, parser):
        parser.add_argument('signal', help='Signal file (.csv/.txt, otherwise raw 16-bit)')
        parser.add_argument('out', help='Destination dictionary file (.bin, JSON sidecar beside it)')

    def run(self, config, **options):
        signal = load_signal(options['signal'], config)
        if config.normalize:
            signal, _ = normalize(signal)
        windows = sub_windows(signal, config.target_len, config.dict_hop or config.target_len)

        seed = derive_seed(config.seed, DICTIONARY_STREAM, 0)
        sparse = config.sparse_config()
        dictionary = learn_dictionary(
            windows,
            n_atoms=config.n_atoms or 2 * config.target_len,
            cfg=sparse,
            outer_iters=config.outer_iters,
            seed=seed,
        )
        path = save_dictionary(
            dictionary, options['out'], cfg=sparse, seed=seed,
            data_checksum=serializers.checksum(signal.samples),
        )
        self.stdout.write(self.style.SUCCESS(
            f'Wrote {dictionary.n_atoms} atoms of length {dictionary.atom_len} to {path} '
            f'(checksum {dictionary.checksum()[:12]})'
        ))
