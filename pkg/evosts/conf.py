"""
Defaults, presets and settings lookup.

Projects override any of these through Django settings:

    EVOSTS_PRESET = 'desk'
    EVOSTS_DEFAULTS = {'sparse_lambda': 0.05}
    EVOSTS_SAMPLE_RATE_HZ = 1000
"""
from django.conf import settings


DEFAULTS = {
    'preset': 'desk',
    # signal_io
    'sample_rate_hz': 1000.0,
    'feature_len': 256,
    'target_len': 32,
    'stride': None,
    'normalize': True,
    'lsb_mv': 0.0005,
    'csv_column': 0,
    'raw_channels': 1,
    'raw_channel': 0,
    'synth_length': 20000,
    'synth_components': [[1.0, 5.0, 0.0]],
    'noise_std': 0.05,
    # sparse_coding
    'sparse_lambda': 0.1,
    'max_iter': 200,
    'tol': 1e-6,
    'step_size': None,
    'random_init': False,
    'n_atoms': None,
    'outer_iters': 30,
    'dict_hop': None,
    # lstm_forecaster
    'hidden_dim': 16,
    'epochs': 30,
    'batch_size': 32,
    'learning_rate': 0.01,
    'momentum': 0.9,
    'early_stop_patience': 5,
    'val_fraction': 0.2,
    # evolution
    'generations': 3,
    'children': 4,
    'epochs_per_generation': 1,
    'child_training': 'epochs',
    'relearn_dictionary_per_partition': True,
    'score_on_holdout': False,
    # eval_report
    'k_folds': 10,
    # run
    'seed': 0,
    'threads': 1,
}

PRESETS = {
    'desk': {
        'feature_len': 256,
        'target_len': 32,
        'hidden_dim': 16,
        'generations': 3,
        'children': 4,
    },
    # Hidden size 100 is the only value giving 2,600,400 LSTM and 12,928 dense
    # parameters for 6400 features and 128 targets.
    'paper': {
        'feature_len': 6400,
        'target_len': 128,
        'hidden_dim': 100,
    },
}

# Used by the standalone ``evosts`` entry point when no project settings exist
STANDALONE_SETTINGS = {
    'INSTALLED_APPS': ['evosts'],
    'USE_I18N': False,
    'USE_TZ': True,
    'TEMPLATES': [
        {
            'BACKEND': 'django.template.backends.django.DjangoTemplates',
            'APP_DIRS': True,
            'OPTIONS': {'autoescape': True},
        },
    ],
    'LOGGING': {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'plain': {'format': '%(levelname)s %(name)s: %(message)s'},
        },
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'formatter': 'plain',
            },
        },
        'loggers': {
            'evosts': {
                'handlers': ['console'],
                'level': 'INFO',
                'propagate': False,
            },
        },
    },
}


def get_setting(name, default=None):
    """Read ``EVOSTS_<name>`` from Django settings with a fallback."""
    return getattr(settings, f'EVOSTS_{name}', default)


def default_sample_rate():
    return float(get_setting('SAMPLE_RATE_HZ', DEFAULTS['sample_rate_hz']))


def resolve_defaults(preset=None):
    """
    Build the default layer for a run: built-ins, then the preset, then
    ``EVOSTS_DEFAULTS`` from project settings.

    Returns a new dict; callers may mutate it.
    """
    preset = preset or get_setting('PRESET', DEFAULTS['preset'])
    values = dict(DEFAULTS)
    values.update(PRESETS.get(preset, {}))
    values.update(get_setting('DEFAULTS', {}) or {})
    values['preset'] = preset
    return values
