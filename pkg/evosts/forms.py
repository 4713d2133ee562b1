import json
from dataclasses import asdict, dataclass
from pathlib import Path

from django import forms

from .conf import PRESETS, resolve_defaults
from .evolution import CHILD_TRAINING_MODES, EvoConfig
from .exceptions import InvalidConfig
from .lstm_forecaster import TrainConfig
from .sparse_coding import SparseConfig


class RunConfigForm(forms.Form):
    """
    Validates a merged run configuration. Field names are the JSON keys;
    each one is also exposed as a ``--kebab-case`` command flag.
    """

    preset = forms.ChoiceField(choices=[(name, name) for name in PRESETS], help_text="Named preset applied first")

    # Signal handling
    sample_rate_hz = forms.FloatField(help_text="Sampling rate in Hz")
    feature_len = forms.IntegerField(min_value=1, help_text="Feature window length F")
    target_len = forms.IntegerField(min_value=1, help_text="Target window length T")
    stride = forms.IntegerField(min_value=1, required=False, help_text="Window stride (default: target_len)")
    normalize = forms.BooleanField(required=False, help_text="Z-score with training statistics")
    lsb_mv = forms.FloatField(help_text="Millivolts per raw 16-bit code")
    csv_column = forms.IntegerField(min_value=0, help_text="CSV column holding the samples")
    raw_channels = forms.IntegerField(min_value=1, help_text="Interleaved channels in raw records")
    raw_channel = forms.IntegerField(min_value=0, help_text="Channel kept from raw records")
    synth_length = forms.IntegerField(min_value=1, help_text="Synthetic signal length in samples")
    synth_components = forms.JSONField(help_text='Sinusoids as JSON [[amplitude, frequency_hz, phase], ...]')
    noise_std = forms.FloatField(min_value=0, help_text="Synthetic gaussian noise std")

    # Sparse coding
    sparse_lambda = forms.FloatField(min_value=0, help_text="Sparsity weight lambda")
    max_iter = forms.IntegerField(min_value=1, help_text="ISTA iteration cap")
    tol = forms.FloatField(help_text="ISTA convergence threshold")
    step_size = forms.FloatField(required=False, help_text="Fixed ISTA step (default: 1/L)")
    random_init = forms.BooleanField(required=False, help_text="Start ISTA from a seeded random code")
    n_atoms = forms.IntegerField(min_value=1, required=False, help_text="Dictionary atoms (default: 2 * target_len)")
    outer_iters = forms.IntegerField(min_value=0, help_text="Dictionary learning iterations")
    dict_hop = forms.IntegerField(min_value=1, required=False, help_text="Hop between dictionary training windows")

    # LSTM
    hidden_dim = forms.IntegerField(min_value=1, help_text="LSTM hidden size H")
    epochs = forms.IntegerField(min_value=1, help_text="Epoch cap for early-stopping child training")
    batch_size = forms.IntegerField(min_value=1, help_text="Minibatch size")
    learning_rate = forms.FloatField(min_value=0, help_text="SGD learning rate")
    momentum = forms.FloatField(min_value=0, help_text="SGD momentum")
    early_stop_patience = forms.IntegerField(min_value=1, help_text="Epochs without validation improvement")
    val_fraction = forms.FloatField(help_text="Validation holdout fraction")

    # Evolution
    generations = forms.IntegerField(min_value=1, help_text="Generations l")
    children = forms.IntegerField(min_value=1, help_text="Children per generation k")
    epochs_per_generation = forms.IntegerField(min_value=1, help_text="Training epochs per child")
    child_training = forms.ChoiceField(
        choices=[(mode, mode) for mode in CHILD_TRAINING_MODES],
        help_text="Child training: plain epochs or the early-stopping trainer",
    )
    relearn_dictionary_per_partition = forms.BooleanField(required=False, help_text="Learn a dictionary per partition")
    score_on_holdout = forms.BooleanField(required=False, help_text="Score children on held-out windows")

    # Evaluation and run
    k_folds = forms.IntegerField(min_value=2, help_text="Cross-validation folds")
    seed = forms.IntegerField(min_value=0, help_text="Master seed")
    threads = forms.IntegerField(min_value=1, help_text="Worker threads for children / folds")

    def clean_sample_rate_hz(self):
        value = self.cleaned_data['sample_rate_hz']
        if not value > 0:
            raise forms.ValidationError("must be positive")
        return value

    def clean_lsb_mv(self):
        value = self.cleaned_data['lsb_mv']
        if not value > 0:
            raise forms.ValidationError("must be positive")
        return value

    def clean_tol(self):
        value = self.cleaned_data['tol']
        if not value > 0:
            raise forms.ValidationError("must be positive")
        return value

    def clean_step_size(self):
        value = self.cleaned_data.get('step_size')
        if value is not None and not value > 0:
            raise forms.ValidationError("must be positive")
        return value

    def clean_momentum(self):
        value = self.cleaned_data['momentum']
        if value >= 1:
            raise forms.ValidationError("must be below 1")
        return value

    def clean_val_fraction(self):
        value = self.cleaned_data['val_fraction']
        if not 0 < value < 1:
            raise forms.ValidationError("must be between 0 and 1")
        return value

    def clean_synth_components(self):
        value = self.cleaned_data['synth_components']
        if not isinstance(value, list) or not value:
            raise forms.ValidationError("must be a non-empty list of [amplitude, frequency_hz, phase]")
        components = []
        for item in value:
            if (
                not isinstance(item, (list, tuple)) or len(item) != 3
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)
            ):
                raise forms.ValidationError(f"bad component {item!r}; expected [amplitude, frequency_hz, phase]")
            components.append([float(x) for x in item])
        return components

    def clean(self):
        cleaned = super().clean()
        channels, channel = cleaned.get('raw_channels'), cleaned.get('raw_channel')
        if channels is not None and channel is not None and channel >= channels:
            self.add_error('raw_channel', f"must be below raw_channels ({channels})")
        return cleaned


@dataclass(frozen=True)
class RunConfig:
    preset: str
    sample_rate_hz: float
    feature_len: int
    target_len: int
    stride: int | None
    normalize: bool
    lsb_mv: float
    csv_column: int
    raw_channels: int
    raw_channel: int
    synth_length: int
    synth_components: list
    noise_std: float
    sparse_lambda: float
    max_iter: int
    tol: float
    step_size: float | None
    random_init: bool
    n_atoms: int | None
    outer_iters: int
    dict_hop: int | None
    hidden_dim: int
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float
    early_stop_patience: int
    val_fraction: float
    generations: int
    children: int
    epochs_per_generation: int
    child_training: str
    relearn_dictionary_per_partition: bool
    score_on_holdout: bool
    k_folds: int
    seed: int
    threads: int

    def sparse_config(self):
        return SparseConfig(
            lam=self.sparse_lambda,
            max_iter=self.max_iter,
            tol=self.tol,
            step_size=self.step_size,
            random_init=self.random_init,
            seed=self.seed,
        )

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            early_stop_patience=self.early_stop_patience,
            val_fraction=self.val_fraction,
            seed=self.seed,
        )

    def evo_config(self):
        return EvoConfig(
            generations=self.generations,
            children=self.children,
            hidden_dim=self.hidden_dim,
            sparse=self.sparse_config(),
            train=self.train_config(),
            epochs_per_generation=self.epochs_per_generation,
            child_training=self.child_training,
            master_seed=self.seed,
            relearn_dictionary_per_partition=self.relearn_dictionary_per_partition,
            score_on_holdout=self.score_on_holdout,
            n_atoms=self.n_atoms,
            outer_iters=self.outer_iters,
            dict_hop=self.dict_hop,
            threads=self.threads,
        )

    def snapshot(self):
        values = asdict(self)
        values.pop('threads')
        return values


def _read_config_file(path):
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}", key='config')
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfig(f"cannot read {path}: {e}", key='config')
    if not isinstance(document, dict):
        raise InvalidConfig("config document must be a JSON object", key='config')
    return document


def _reject_unknown(values, source):
    unknown = sorted(set(values) - set(RunConfigForm.base_fields))
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {source}", key=", ".join(unknown))


def load_run_config(path=None, overrides=None):
    """
    Merge defaults, preset, project settings, the JSON document at ``path``
    and ``overrides`` (None values are ignored), then validate.
    """
    document = _read_config_file(path) if path else {}
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    _reject_unknown(document, 'config file')
    _reject_unknown(overrides, 'overrides')

    values = resolve_defaults(overrides.get('preset') or document.get('preset'))
    values.update(document)
    values.update(overrides)

    form = RunConfigForm(data=values)
    if not form.is_valid():
        problems = "; ".join(
            f"{key}: {' '.join(messages)}" for key, messages in form.errors.items()
        )
        raise InvalidConfig(f"invalid configuration ({problems})", key=next(iter(form.errors)))
    return RunConfig(**form.cleaned_data)
