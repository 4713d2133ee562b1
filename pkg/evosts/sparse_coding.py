"""
Sparse coding with ISTA and alternating-minimisation dictionary learning.

Vectors are rows: batches of signals are (m, atom_len) arrays and batches of
codes are (m, n_atoms) arrays. A dictionary's atoms are the columns of its
(atom_len, n_atoms) matrix.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import serializers
from .exceptions import (
    DegenerateDictionary,
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidConfig,
)

logger = logging.getLogger(__name__)

POWER_ITER_TOL = 1e-6
POWER_ITER_MAX = 1000
GRAM_EPS = 1e-12
MAX_BACKTRACKS = 10


@dataclass(frozen=True, eq=False)
class Dictionary:
    atoms: np.ndarray
    energy_history: tuple = ()

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms[:, np.newaxis]
        if atoms.ndim != 2 or atoms.size == 0:
            raise DimensionMismatch(f"dictionary must be a non-empty matrix, got shape {atoms.shape}")
        if np.any(np.linalg.norm(atoms, axis=0) == 0):
            raise DegenerateDictionary("dictionary has a zero atom")
        object.__setattr__(self, 'atoms', atoms)

    @property
    def atom_len(self):
        return self.atoms.shape[0]

    @property
    def n_atoms(self):
        return self.atoms.shape[1]

    def checksum(self):
        return serializers.checksum(self.atoms.T)


@dataclass(frozen=True)
class SparseConfig:
    lam: float = 0.1
    max_iter: int = 200
    tol: float = 1e-6
    # None selects 1/L from the dictionary
    step_size: float | None = None
    random_init: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidConfig("must be non-negative", key='sparse_lambda')
        if self.max_iter < 1:
            raise InvalidConfig("must be at least 1", key='max_iter')
        if not self.tol > 0:
            raise InvalidConfig("must be positive", key='tol')
        if self.step_size is not None and not self.step_size > 0:
            raise InvalidConfig("must be positive", key='step_size')


@dataclass(frozen=True, eq=False)
class SparseCode:
    coefficients: np.ndarray
    iterations_used: int
    converged: bool
    objective_trace: tuple = ()
    energy_trace: tuple = ()


def _atoms(dictionary):
    if isinstance(dictionary, Dictionary):
        return dictionary.atoms
    atoms = np.asarray(dictionary, dtype=np.float64)
    return atoms[:, np.newaxis] if atoms.ndim == 1 else atoms


def _coefficients(code):
    if isinstance(code, SparseCode):
        return code.coefficients
    return np.asarray(code, dtype=np.float64)


def soft_threshold(v, theta):
    """sign(v) * max(|v| - theta, 0), elementwise."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def largest_eigenvalue(gram):
    """Power iteration on a symmetric PSD matrix from a fixed start vector."""
    gram = np.atleast_2d(np.asarray(gram, dtype=np.float64))
    vector = np.random.default_rng(0).standard_normal(gram.shape[0])
    vector /= np.linalg.norm(vector)
    value = 0.0
    for _ in range(POWER_ITER_MAX):
        image = gram @ vector
        norm = np.linalg.norm(image)
        if norm == 0:
            return 0.0
        estimate = float(vector @ image)
        vector = image / norm
        if abs(estimate - value) <= POWER_ITER_TOL * abs(estimate):
            return estimate
        value = estimate
    return value


def lipschitz_step(dictionary):
    """1/L with L the largest eigenvalue of D^T D."""
    atoms = _atoms(dictionary)
    if atoms.size == 0 or not np.any(atoms):
        raise DegenerateDictionary("dictionary is all zeros")
    lipschitz = largest_eigenvalue(atoms.T @ atoms)
    if not lipschitz > 0:
        raise DegenerateDictionary("dictionary has no positive singular value")
    return 1.0 / lipschitz


def energy(dictionary, x, code, lam):
    """||x - D a||_2 + lam * ||a||_1"""
    atoms = _atoms(dictionary)
    x = np.asarray(x, dtype=np.float64)
    a = _coefficients(code)
    _check_dims(atoms, x, a)
    return float(np.linalg.norm(x - atoms @ a) + lam * np.abs(a).sum())


def objective(dictionary, x, code, lam):
    """0.5 * ||x - D a||_2^2 + lam * ||a||_1, the function ISTA descends."""
    atoms = _atoms(dictionary)
    x = np.asarray(x, dtype=np.float64)
    a = _coefficients(code)
    _check_dims(atoms, x, a)
    residual = x - atoms @ a
    return float(0.5 * residual @ residual + lam * np.abs(a).sum())


def _check_dims(atoms, x, a):
    if x.shape != (atoms.shape[0],):
        raise DimensionMismatch(f"signal length {x.shape} does not match atom length {atoms.shape[0]}")
    if a.shape != (atoms.shape[1],):
        raise DimensionMismatch(f"code length {a.shape} does not match {atoms.shape[1]} atoms")


def ista_encode_batch(dictionary, signals, cfg, track=False):
    """
    Encode every row of ``signals``. Each row stops iterating on its own
    convergence test, so a row's code does not depend on its batch mates.

    Returns (codes, iterations, converged) and, with ``track``, the
    per-iteration (objective, energy) arrays of shape (iterations + 1, m).
    """
    atoms = _atoms(dictionary)
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2 or signals.shape[1] != atoms.shape[0]:
        raise DimensionMismatch(
            f"signals of shape {signals.shape} do not match atom length {atoms.shape[0]}"
        )

    m = signals.shape[0]
    step = cfg.step_size or lipschitz_step(atoms)
    theta = step * cfg.lam
    if cfg.random_init:
        # one seeded start shared by every row
        start = np.random.default_rng(cfg.seed).standard_normal(atoms.shape[1]) * 0.01
        codes = np.tile(start, (m, 1))
    else:
        codes = np.zeros((m, atoms.shape[1]))
    active = np.ones(m, dtype=bool)
    iterations = np.zeros(m, dtype=np.int64)

    objectives, energies = [], []

    def record():
        residual = signals - codes @ atoms.T
        norms = np.linalg.norm(residual, axis=1)
        l1 = cfg.lam * np.abs(codes).sum(axis=1)
        objectives.append(0.5 * norms ** 2 + l1)
        energies.append(norms + l1)

    if track:
        record()
    for _ in range(cfg.max_iter):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        current = codes[rows]
        residual = signals[rows] - current @ atoms.T
        updated = soft_threshold(current + step * (residual @ atoms), theta)
        change = np.max(np.abs(updated - current), axis=1)
        codes[rows] = updated
        iterations[rows] += 1
        active[rows[change < cfg.tol]] = False
        if track:
            record()

    if not np.all(np.isfinite(codes)):
        raise DegenerateDictionary("sparse codes diverged; step size too large for the dictionary")
    converged = ~active
    if track:
        return codes, iterations, converged, np.array(objectives), np.array(energies)
    return codes, iterations, converged


def ista_encode(dictionary, x, cfg, track=False):
    x = np.asarray(x, dtype=np.float64)
    atoms = _atoms(dictionary)
    if x.shape != (atoms.shape[0],):
        raise DimensionMismatch(f"signal length {x.shape} does not match atom length {atoms.shape[0]}")
    result = ista_encode_batch(atoms, x[np.newaxis, :], cfg, track=track)
    codes, iterations, converged = result[:3]
    traces = {}
    if track:
        traces = {
            'objective_trace': tuple(result[3][:, 0].tolist()),
            'energy_trace': tuple(result[4][:, 0].tolist()),
        }
    return SparseCode(
        coefficients=codes[0],
        iterations_used=int(iterations[0]),
        converged=bool(converged[0]),
        **traces,
    )


def reconstruction_losses(dictionary, signals, cfg):
    """||y - D a||_2 for every row y, without the sparsity penalty."""
    atoms = _atoms(dictionary)
    signals = np.asarray(signals, dtype=np.float64)
    codes = ista_encode_batch(atoms, signals, cfg)[0]
    return np.linalg.norm(signals - codes @ atoms.T, axis=1)


def reconstruction_loss(dictionary, y, cfg):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (_atoms(dictionary).shape[0],):
        raise DimensionMismatch(f"signal length {y.shape} does not match atom length")
    return float(reconstruction_losses(dictionary, y[np.newaxis, :], cfg)[0])


def _mean_energy(atoms, windows, codes, lam):
    residual = windows - codes @ atoms.T
    return float(np.mean(np.linalg.norm(residual, axis=1) + lam * np.abs(codes).sum(axis=1)))


def _normalize_columns(atoms, windows, rng):
    norms = np.linalg.norm(atoms, axis=0)
    dead = np.flatnonzero(norms == 0)
    for column in dead:
        logger.warning(f"Atom {column} collapsed to zero; re-seeding from a training window")
        atoms[:, column] = windows[rng.integers(len(windows))]
        norms[column] = np.linalg.norm(atoms[:, column])
        if norms[column] == 0:
            atoms[:, column] = rng.standard_normal(atoms.shape[0])
            norms[column] = np.linalg.norm(atoms[:, column])
    return atoms / norms


def _initial_atoms(windows, n_atoms, rng):
    m = len(windows)
    chosen = rng.choice(m, size=n_atoms, replace=m < n_atoms)
    atoms = windows[chosen].T.copy()
    if m < n_atoms:
        # duplicated windows would give identical atoms
        atoms += rng.normal(scale=1e-3, size=atoms.shape)
    return _normalize_columns(atoms, windows, rng)


def learn_dictionary(windows, n_atoms, cfg, outer_iters=30, seed=0, init=None):
    """
    Alternate ISTA encoding of every window with one gradient step on the
    atoms followed by column renormalisation.

    A step is kept only if the mean window energy does not rise; otherwise the
    step is halved (at most MAX_BACKTRACKS times) and, failing that, the
    previous dictionary stands and learning stops.
    """
    try:
        windows = np.asarray(windows, dtype=np.float64)
    except ValueError as e:
        raise DimensionMismatch(f"training windows differ in length: {e}") from e
    if windows.ndim != 2 or len(windows) == 0:
        raise EmptyTrainingSet("dictionary learning needs at least one window")
    if n_atoms < 1:
        raise InvalidConfig("must be at least 1", key='n_atoms')
    if not np.all(np.isfinite(windows)):
        raise DimensionMismatch("training windows hold non-finite values")

    rng = np.random.default_rng(seed)
    m, atom_len = windows.shape
    if m < n_atoms:
        logger.warning(f"Learning {n_atoms} atoms from only {m} windows")

    if init is None:
        atoms = _initial_atoms(windows, n_atoms, rng)
    else:
        atoms = _atoms(init).copy()
        if atoms.shape != (atom_len, n_atoms):
            raise DimensionMismatch(f"initial dictionary shape {atoms.shape} != {(atom_len, n_atoms)}")
        atoms = _normalize_columns(atoms, windows, rng)

    codes = ista_encode_batch(atoms, windows, cfg)[0]
    current = _mean_energy(atoms, windows, codes, cfg.lam)
    history = [current]

    for iteration in range(outer_iters):
        residual = windows - codes @ atoms.T
        direction = residual.T @ codes
        step = 1.0 / (largest_eigenvalue(codes.T @ codes) + GRAM_EPS)

        for _ in range(MAX_BACKTRACKS + 1):
            candidate = _normalize_columns(atoms + step * direction, windows, rng)
            candidate_codes = ista_encode_batch(candidate, windows, cfg)[0]
            candidate_energy = _mean_energy(candidate, windows, candidate_codes, cfg.lam)
            if candidate_energy <= current:
                break
            step /= 2
        else:
            logger.debug(f"Dictionary update {iteration} rejected; stopping at energy {current:.6g}")
            break

        atoms, codes, current = candidate, candidate_codes, candidate_energy
        history.append(current)
        logger.debug(f"Dictionary iteration {iteration}: mean energy {current:.6g}")

    logger.info(f"Learned {n_atoms} atoms of length {atom_len} from {m} windows (mean energy {current:.6g})")
    return Dictionary(atoms=atoms, energy_history=tuple(history))


def save_dictionary(dictionary, path, cfg=None, seed=None, data_checksum=None):
    """Atoms as float64 little-endian, one atom after another, plus a JSON sidecar."""
    path = Path(path)
    serializers.write_array(path, dictionary.atoms.T)
    serializers.write_json(serializers.sidecar_path(path), {
        'schema_version': serializers.SCHEMA_VERSION,
        'atom_len': dictionary.atom_len,
        'n_atoms': dictionary.n_atoms,
        'lambda': cfg.lam if cfg else None,
        'seed': seed,
        'data_checksum': data_checksum,
        'checksum': dictionary.checksum(),
    })
    return path


def load_dictionary(path):
    path = Path(path)
    meta = serializers.read_json(serializers.sidecar_path(path))
    values = serializers.read_array(path, count=meta['atom_len'] * meta['n_atoms'])
    return Dictionary(atoms=values.reshape(meta['n_atoms'], meta['atom_len']).T), meta
