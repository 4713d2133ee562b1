"""
The generational loop: spawn children from the current best weights, train
each with its own shuffle stream, score each by how well a sparse dictionary
reconstructs its predictions, and carry the best one forward.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import serializers
from .exceptions import DimensionMismatch, EmptyPartition, InvalidConfig, NonFiniteInput
from .lstm_forecaster import (
    LstmDims,
    SgdMomentum,
    TrainConfig,
    dataset_loss,
    init_weights,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
    train,
    train_epoch,
)
from .signal_io import partition_generations
from .sparse_coding import SparseConfig, learn_dictionary, reconstruction_losses

logger = logging.getLogger(__name__)

# Stream tags keep derived seeds for different purposes apart
DICTIONARY_STREAM = 1
CHILD_STREAM = 2
HOLDOUT_FRACTION = 0.2
# "epochs" runs epochs_per_generation plain epochs; "early_stopping" runs the
# full trainer with its own validation holdout and patience
CHILD_TRAINING_MODES = ('epochs', 'early_stopping')


@dataclass(frozen=True)
class EvoConfig:
    generations: int = 3
    children: int = 4
    hidden_dim: int = 16
    sparse: SparseConfig = field(default_factory=SparseConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    epochs_per_generation: int = 1
    child_training: str = 'epochs'
    master_seed: int = 0
    relearn_dictionary_per_partition: bool = True
    score_on_holdout: bool = False
    # None picks 2 * target_len atoms and a hop of target_len
    n_atoms: int | None = None
    outer_iters: int = 30
    dict_hop: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.generations < 1:
            raise InvalidConfig("must be at least 1", key='generations')
        if self.children < 1:
            raise InvalidConfig("must be at least 1", key='children')
        if self.epochs_per_generation < 1:
            raise InvalidConfig("must be at least 1", key='epochs_per_generation')
        if self.child_training not in CHILD_TRAINING_MODES:
            raise InvalidConfig(f"must be one of {CHILD_TRAINING_MODES}", key='child_training')
        if self.threads < 1:
            raise InvalidConfig("must be at least 1", key='threads')

    def atoms_for(self, target_len):
        return self.n_atoms or 2 * target_len

    def hop_for(self, target_len):
        return self.dict_hop or target_len

    def snapshot(self):
        # thread count never changes results, so it stays out of manifests
        values = asdict(self)
        values.pop('threads')
        return values


@dataclass(eq=False)
class Child:
    index: int
    weights: object
    rng: np.random.Generator


@dataclass(eq=False)
class ChildResult:
    child_index: int
    weights: object
    score: float
    train_history: list = field(default_factory=list)


@dataclass(eq=False)
class GenerationResult:
    generation_index: int
    partition_id: int
    dictionary_checksum: str
    children: list
    best_index: int

    @property
    def best(self):
        return self.children[self.best_index]

    @property
    def scores(self):
        return [child.score for child in self.children]


@dataclass(eq=False)
class EvoRun:
    config: EvoConfig
    generations: list
    first_generation_best: object
    final_generation_best: object
    initial_weights: object = None


def derive_seed(master_seed, *keys):
    """A 32-bit seed derived from the master seed and integer keys."""
    return int(np.random.SeedSequence([master_seed, *keys]).generate_state(1)[0])


def child_stream(master_seed, generation_index, child_index):
    """Counter-based generator keyed by (master seed, generation, child)."""
    sequence = np.random.SeedSequence([master_seed, CHILD_STREAM, generation_index, child_index])
    return np.random.Generator(np.random.Philox(sequence))


def spawn_children(gamma, k, master_seed=0, generation_index=0):
    if k < 1:
        raise InvalidConfig("must be at least 1", key='children')
    return [
        Child(index=i, weights=gamma.copy(), rng=child_stream(master_seed, generation_index, i))
        for i in range(k)
    ]


def select_best(scores):
    """First index of the minimum score."""
    return int(np.argmin(np.asarray(scores, dtype=np.float64)))


def evaluate_child(weights, dictionary, features, cfg):
    """Mean reconstruction loss of the model's predictions for ``features``."""
    if dictionary.atom_len != weights.dims.output_dim:
        raise DimensionMismatch(
            f"dictionary atoms have length {dictionary.atom_len}, model predicts {weights.dims.output_dim}"
        )
    predictions = predict_batch(weights, features)
    if len(predictions) == 0:
        raise EmptyPartition("no windows to score")
    score = float(np.mean(reconstruction_losses(dictionary, predictions, cfg)))
    if not math.isfinite(score):
        raise NonFiniteInput("child score is not finite")
    return score


def _split_for_scoring(partition, cfg):
    if not cfg.score_on_holdout or len(partition) < 2:
        return partition, partition
    n = len(partition)
    n_hold = min(max(1, math.ceil(HOLDOUT_FRACTION * n)), n - 1)
    return partition.subset(np.arange(n - n_hold)), partition.subset(np.arange(n - n_hold, n))


def _run_child(child, train_part, score_part, dictionary, cfg):
    if cfg.child_training == 'early_stopping':
        weights, train_history = train(child.weights, train_part, cfg.train, rng=child.rng)
        history = list(train_history.train_loss)
    else:
        optimizer = SgdMomentum(cfg.train.learning_rate, cfg.train.momentum)
        weights = child.weights
        history = []
        for _ in range(cfg.epochs_per_generation):
            weights = train_epoch(weights, train_part, cfg.train, child.rng, optimizer)
            history.append(dataset_loss(weights, train_part))
    score = evaluate_child(weights, dictionary, score_part.features, cfg.sparse)
    logger.debug(f"Child {child.index}: score {score:.6g}, train loss {history[-1]:.6g}")
    return ChildResult(child_index=child.index, weights=weights, score=score, train_history=history)


def run_generation(gamma, partition, dictionary, cfg, generation_index=0, partition_id=None, executor=None):
    """
    Spawn, train and score ``cfg.children`` children. Results are collected
    in child order, so an executor only changes wall time.
    """
    if len(partition) == 0:
        raise EmptyPartition(f"generation {generation_index} has an empty partition")

    train_part, score_part = _split_for_scoring(partition, cfg)
    children = spawn_children(gamma, cfg.children, cfg.master_seed, generation_index)
    if executor is None:
        results = [_run_child(child, train_part, score_part, dictionary, cfg) for child in children]
    else:
        futures = [
            executor.submit(_run_child, child, train_part, score_part, dictionary, cfg)
            for child in children
        ]
        results = [future.result() for future in futures]

    best_index = select_best([result.score for result in results])
    logger.info(
        f"Generation {generation_index}: best child {best_index} "
        f"score {results[best_index].score:.6g} of {[round(r.score, 6) for r in results]}"
    )
    return GenerationResult(
        generation_index=generation_index,
        partition_id=generation_index if partition_id is None else partition_id,
        dictionary_checksum=dictionary.checksum(),
        children=results,
        best_index=best_index,
    )


def dictionary_for(dataset, cfg, seed_key):
    target_len = dataset.target_len
    windows = dataset.dictionary_windows(target_len, cfg.hop_for(target_len))
    return learn_dictionary(
        windows,
        n_atoms=cfg.atoms_for(target_len),
        cfg=cfg.sparse,
        outer_iters=cfg.outer_iters,
        seed=derive_seed(cfg.master_seed, DICTIONARY_STREAM, seed_key),
    )


def evosts(dataset, cfg, dictionary=None):
    """
    Run exactly ``cfg.generations`` generations over contiguous partitions of
    ``dataset``. ``dictionary`` fixes a run-wide dictionary; otherwise one is
    learned per partition, or once for the whole dataset when
    ``relearn_dictionary_per_partition`` is off.
    """
    partitions = partition_generations(dataset, cfg.generations)
    dims = LstmDims(dataset.feature_len, cfg.hidden_dim, dataset.target_len)
    gamma = init_weights(dims, cfg.master_seed)
    initial = gamma.copy()

    if dictionary is None and not cfg.relearn_dictionary_per_partition:
        dictionary = dictionary_for(dataset, cfg, seed_key=cfg.generations)

    records = []
    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for generation_index, partition in enumerate(partitions):
            partition_dictionary = (
                dictionary if dictionary is not None
                else dictionary_for(partition, cfg, seed_key=generation_index)
            )
            result = run_generation(
                gamma, partition, partition_dictionary, cfg,
                generation_index=generation_index, executor=executor,
            )
            records.append(result)
            gamma = result.best.weights
    finally:
        if executor is not None:
            executor.shutdown()

    return EvoRun(
        config=cfg,
        generations=records,
        first_generation_best=records[0].best.weights,
        final_generation_best=records[-1].best.weights,
        initial_weights=initial,
    )


def improvement_summary(run):
    first = run.generations[0].best.score
    final = run.generations[-1].best.score
    return {
        'first_generation_best_score': first,
        'final_generation_best_score': final,
        'improved': final <= first,
    }


def run_manifest(run, extra=None):
    """JSON-ready description of a run; holds no timestamps so reruns match."""
    manifest = {
        'schema_version': serializers.SCHEMA_VERSION,
        'config': run.config.snapshot(),
        'seeds': {'master_seed': run.config.master_seed},
        'dims': asdict(run.first_generation_best.dims),
        'generations': [
            {
                'generation_index': record.generation_index,
                'partition_id': record.partition_id,
                'dictionary_checksum': record.dictionary_checksum,
                'best_index': record.best_index,
                'scores': record.scores,
                'train_history': [child.train_history for child in record.children],
                'weights_checksums': [child.weights.checksum() for child in record.children],
            }
            for record in run.generations
        ],
        'improvement': improvement_summary(run),
        'checkpoints': {
            'first_generation_best': {
                'file': 'gamma_first.bin',
                'checksum': run.first_generation_best.checksum(),
            },
            'final_generation_best': {
                'file': 'gamma_final.bin',
                'checksum': run.final_generation_best.checksum(),
            },
        },
    }
    manifest.update(extra or {})
    return manifest


def write_run(run, out_dir, extra=None):
    out_dir = Path(out_dir)
    seed = run.config.master_seed
    save_checkpoint(run.first_generation_best, out_dir / 'gamma_first.bin', seed=seed, epoch=0)
    save_checkpoint(
        run.final_generation_best, out_dir / 'gamma_final.bin',
        seed=seed, epoch=len(run.generations) - 1,
    )
    return serializers.write_json(out_dir / 'manifest.json', run_manifest(run, extra))


def read_manifest(out_dir):
    """Load a written run: the manifest dict plus both checkpoints."""
    out_dir = Path(out_dir)
    manifest = serializers.read_json(out_dir / 'manifest.json')
    first, _ = load_checkpoint(out_dir / 'gamma_first.bin')
    final, _ = load_checkpoint(out_dir / 'gamma_final.bin')
    return manifest, first, final
