import numpy as np

from evosts.evolution import EvoConfig
from evosts.lstm_forecaster import TrainConfig
from evosts.signal_io import generate_synthetic, make_windows
from evosts.sparse_coding import SparseConfig

# Small enough for the whole suite to run in seconds
FAST_OPTIONS = {
    'feature_len': 16,
    'target_len': 4,
    'hidden_dim': 3,
    'generations': 2,
    'children': 2,
    'outer_iters': 2,
    'max_iter': 30,
    'batch_size': 16,
    'k_folds': 3,
    'synth_length': 400,
    'verbosity': 0,
}


def sine_signal(length=600, noise_std=0.05, seed=0):
    return generate_synthetic(length, [[1.0, 5.0, 0.0]], noise_std=noise_std, seed=seed)


def sine_dataset(length=600, feature_len=16, target_len=4, seed=0):
    return make_windows(sine_signal(length, seed=seed), feature_len, target_len)


def small_evo_config(**overrides):
    values = {
        'generations': 3,
        'children': 4,
        'hidden_dim': 3,
        'sparse': SparseConfig(lam=0.1, max_iter=50),
        'train': TrainConfig(batch_size=16, learning_rate=0.05),
        'outer_iters': 3,
        'master_seed': 0,
    }
    values.update(overrides)
    return EvoConfig(**values)


def write_csv(path, samples):
    np.savetxt(path, np.asarray(samples, dtype=np.float64), fmt='%.17g')
    return path
