"""Flat key=value run configuration shared by all CLI subcommands.

One file configures corpus synthesis, the model, and training; dotted
prefixes keep the namespace flat but grouped. Unknown keys are rejected so
typos fail fast, before any output is written.
"""

from dataclasses import dataclass, fields

from .corpus import DEFAULT_PHONES, SynthConfig, seeded_duration_scales
from .errors import InputError


def _parse_scalar(text):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


@dataclass(eq=False)
class RunConfig:
    seed: int = 0
    threads: int = 1
    out_dir: str = "runs"
    corpus_dir: str = "corpus"

    synth_n_subjects: int = 3
    synth_n_sentences: int = 120
    synth_channels: int = 6
    synth_phones: str = ",".join(DEFAULT_PHONES)
    synth_fast_amplitude_scale: float = 0.8
    synth_slow_amplitude_scale: float = 1.15
    synth_fast_scale_min: float = 0.45
    synth_fast_scale_max: float = 0.65
    synth_slow_scale_min: float = 1.7
    synth_slow_scale_max: float = 2.1

    model_enc_hidden: int = 32
    model_dec_hidden: int = 64
    model_prenet_units: int = 32
    model_attn_dim: int = 32
    model_location_filters: int = 8
    model_location_kernel_width: int = 15
    model_stop_threshold: float = 0.5
    model_max_steps_factor: float = 1.2

    train_epochs: int = 60
    train_batch_size: int = 1
    train_learning_rate: float = 1e-3
    train_lr_decay: float = 0.98
    train_grad_clip_norm: float = 1.0
    train_stop_target_positive_weight: float = 5.0
    train_prenet_dropout: float = 0.5
    train_finetune_epochs: int = 20
    train_folds: int = 4

    def synth_config(self):
        phones = tuple(p for p in self.synth_phones.split(",") if p)
        fast, slow = seeded_duration_scales(
            phones, self.seed,
            fast_range=(self.synth_fast_scale_min, self.synth_fast_scale_max),
            slow_range=(self.synth_slow_scale_min, self.synth_slow_scale_max),
        )
        return SynthConfig(
            n_subjects=self.synth_n_subjects,
            n_sentences=self.synth_n_sentences,
            phone_inventory=phones,
            channels=self.synth_channels,
            seed=self.seed,
            fast_duration_scale=fast,
            slow_duration_scale=slow,
            fast_amplitude_scale=self.synth_fast_amplitude_scale,
            slow_amplitude_scale=self.synth_slow_amplitude_scale,
        )

    def model_kwargs(self):
        return dict(
            enc_hidden=self.model_enc_hidden,
            dec_hidden=self.model_dec_hidden,
            prenet_units=self.model_prenet_units,
            attn_dim=self.model_attn_dim,
            location_filters=self.model_location_filters,
            location_kernel_width=self.model_location_kernel_width,
            stop_threshold=self.model_stop_threshold,
            max_steps_factor=self.model_max_steps_factor,
        )

    def train_kwargs(self, finetune=False):
        return dict(
            epochs=self.train_finetune_epochs if finetune else self.train_epochs,
            batch_size=self.train_batch_size,
            learning_rate=self.train_learning_rate,
            lr_decay=self.train_lr_decay,
            grad_clip_norm=self.train_grad_clip_norm,
            stop_target_positive_weight=self.train_stop_target_positive_weight,
            prenet_dropout=self.train_prenet_dropout,
        )


_FIELD_BY_KEY = {f.name.replace("_", ".", 1) if f.name.startswith(("synth_", "model_", "train_"))
                 else f.name: f.name for f in fields(RunConfig)}


def known_keys():
    return sorted(_FIELD_BY_KEY)


def parse_config_text(text, base=None):
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"config line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        if key not in _FIELD_BY_KEY:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, _FIELD_BY_KEY[key], _parse_scalar(value))
    _validate_types(cfg)
    return cfg


def _validate_types(cfg):
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.type is int and not isinstance(value, int):
            raise InputError(f"config key {f.name!r} must be an integer, got {value!r}")
        if f.type is float and not isinstance(value, (int, float)):
            raise InputError(f"config key {f.name!r} must be a number, got {value!r}")
        if f.type is str and not isinstance(value, str):
            raise InputError(f"config key {f.name!r} must be a string, got {value!r}")


def load_config(path=None, overrides=None):
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read config file {path!r}: {exc}") from exc
        cfg = parse_config_text(text, cfg)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    _validate_types(cfg)
    return cfg


def config_echo(cfg):
    lines = []
    for key in known_keys():
        lines.append(f"{key}={getattr(cfg, _FIELD_BY_KEY[key])}")
    return "\n".join(lines) + "\n"
