"""Experiment configuration: INI files parsed into frozen dataclasses.

Every key has a default matching the reference setup, so an empty file is a
valid config. Unknown sections or keys are rejected with the offending
``section.key`` in the error.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, replace

from . import neuralnet as nn
from .ae import BitConfig, LossWeights, TrainConfig
from .baselines import CONSTELLATIONS
from .channel import FadingConfig
from .errors import ConfigError
from .quantizer import KINDS

RECIPES = ("train", "eval", "baseline", "quantizer", "constellation",
           "figure3", "figure4", "figure5", "figure6")

QUICK_EPOCHS = 2000
QUICK_TEST = 10**5
QUICK_SEEDS = 3


@dataclass(frozen=True)
class QuantizerSettings:
    kinds: tuple = ("uniform", "lloyd_max")
    levels: tuple = (4, 16)
    # source std per real component; None designs each user's codebook for its own sigma_h
    sigma: float | None = None
    tol: float = 1e-7
    max_iters: int = 1000
    n_samples: int = 10**6

    def __post_init__(self):
        for k in self.kinds:
            if k not in KINDS:
                raise ConfigError(f"unknown quantizer kind {k!r}", "quantizer.kinds")
        for m in self.levels:
            if int(m) != m or m < 2:
                raise ConfigError("level counts must be integers >= 2", "quantizer.levels")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("must be positive", "quantizer.sigma")


@dataclass(frozen=True)
class EvalSettings:
    snr_grid: tuple = tuple(float(s) for s in range(0, 21, 2))
    n_test: int = 400_000
    seeds: tuple = (0, 1, 2, 3, 4)
    power: float = 1.0
    checkpoints: tuple = ()

    def __post_init__(self):
        if not self.snr_grid:
            raise ConfigError("empty SNR grid", "eval.snr_grid")
        if self.n_test < 10**4:
            raise ConfigError("use at least 1e4 test samples", "eval.n_test")
        if not self.seeds:
            raise ConfigError("need at least one seed", "eval.seeds")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds", "eval.seeds")
        if not self.power > 0:
            raise ConfigError("must be positive", "eval.power")


@dataclass(frozen=True)
class BaselineSettings:
    alpha: float = 0.7
    const1: str = "QPSK"
    const2: str = "QPSK"
    n_trials: int = 10**6
    # UE1 power fraction for the mixed bit-length baselines
    mixed_alpha: float = 0.9

    def __post_init__(self):
        for name in ("alpha", "mixed_alpha"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError("must lie in (0, 1)", f"baseline.{name}")
        for name in ("const1", "const2"):
            if getattr(self, name) not in CONSTELLATIONS:
                raise ConfigError(f"unknown constellation {getattr(self, name)!r}", f"baseline.{name}")
        if self.n_trials < 1:
            raise ConfigError("must be positive", "baseline.n_trials")


@dataclass(frozen=True)
class ConstellationSettings:
    channels: tuple = ((1 + 0j, 2 + 0j), (1 + 0j, 2 + 2j))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "train"
    fading: FadingConfig = FadingConfig()
    train: TrainConfig = TrainConfig()
    bits: BitConfig = BitConfig()
    loss: LossWeights = LossWeights()
    snr_unit: str = "db"
    quantizer: QuantizerSettings = QuantizerSettings()
    eval: EvalSettings = EvalSettings()
    baseline: BaselineSettings = BaselineSettings()
    constellation: ConstellationSettings = ConstellationSettings()
    output_dir: str = "runs"

    def __post_init__(self):
        if self.experiment not in RECIPES:
            raise ConfigError(f"unknown experiment {self.experiment!r}", "experiment.name")
        if self.snr_unit not in ("db", "linear"):
            raise ConfigError("must be 'db' or 'linear'", "loss.snr_unit")

    def fingerprint(self):
        """Hash of every setting except the output directory."""
        blob = json.dumps(_plain(asdict(self) | {"output_dir": None}), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def quick(self):
        return replace(self, train=replace(self.train, n_epochs=QUICK_EPOCHS),
                       eval=replace(self.eval, n_test=QUICK_TEST, seeds=self.eval.seeds[:QUICK_SEEDS]))

    def with_seeds(self, seeds):
        return replace(self, eval=replace(self.eval, seeds=tuple(seeds)))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- parsing ----------------------------------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text):
    return tuple(text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _channels(text):
    # "h1:h2, h1:h2" with Python complex literals
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        a, b = item.split(":")
        pairs.append((complex(a.strip().replace(" ", "")), complex(b.strip().replace(" ", ""))))
    return tuple(pairs)


# section -> key -> (target, parser); target is "<object>.<field>"
SCHEMA = {
    "experiment": {"name": ("experiment", str), "output_dir": ("output_dir", str)},
    "fading": {"sigma_h1": ("fading.sigma_h1", float), "sigma_h2": ("fading.sigma_h2", float)},
    "bits": {"l1": ("bits.l1", int), "l2": ("bits.l2", int)},
    "train": {
        "n_train": ("train.n_train", int), "n_epochs": ("train.n_epochs", int),
        "train_snr_db": ("train.train_snr_db", float), "batch_size": ("train.batch_size", int),
        "steps_per_epoch": ("train.steps_per_epoch", int), "mode": ("train.mode", str),
        "lr0": ("schedule.lr0", float), "decay_factor": ("schedule.decay_factor", float),
        "decay_every": ("schedule.decay_every", int),
    },
    "loss": {"w": ("loss.w", float), "snr_set": ("loss.snr_set", _floats), "snr_unit": ("snr_unit", str)},
    "quantizer": {
        "kinds": ("quantizer.kinds", _words), "levels": ("quantizer.levels", _ints),
        "sigma": ("quantizer.sigma", _opt_float), "tol": ("quantizer.tol", float),
        "max_iters": ("quantizer.max_iters", int), "n_samples": ("quantizer.n_samples", int),
    },
    "eval": {
        "snr_grid": ("eval.snr_grid", _floats), "n_test": ("eval.n_test", int),
        "seeds": ("eval.seeds", _ints), "power": ("eval.power", float),
        "checkpoints": ("eval.checkpoints", _words),
    },
    "baseline": {
        "alpha": ("baseline.alpha", float), "const1": ("baseline.const1", str),
        "const2": ("baseline.const2", str), "n_trials": ("baseline.n_trials", int),
        "mixed_alpha": ("baseline.mixed_alpha", float),
    },
    "constellation": {"channels": ("constellation.channels", _channels)},
}


def parse_config(text, recipe=None):
    """Parse INI text into an :class:`ExperimentConfig`.

    ``recipe`` (from the command line) fills ``[experiment] name`` when the
    file leaves it out and must agree with it otherwise.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section)
        for key, raw in cp.items(section):
            name = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {name}", name)
            target, conv = SCHEMA[section][key]
            try:
                values[target] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"cannot parse {raw!r} ({exc})", name) from exc
    if recipe is not None:
        if "experiment" in values and values["experiment"] != recipe:
            raise ConfigError(f"config is for {values['experiment']!r}, command asked for {recipe!r}",
                              "experiment.name")
        values["experiment"] = recipe
    return _build(values)


def _group(values, prefix):
    return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}


def _make(cls, kwargs, section):
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.field is None:
            fld = section
        elif "." in str(exc.field):
            fld = exc.field
        else:
            fld = f"{section}.{exc.field}"
        raise ConfigError(exc.message, fld) from exc
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}", section) from exc


def _build(values):
    base = TrainConfig().schedule
    sched = _make(nn.TrainSchedule, asdict(base) | _group(values, "schedule"), "train")
    train = _make(TrainConfig, _group(values, "train") | {"schedule": sched}, "train")
    top = {k: values[k] for k in ("experiment", "snr_unit", "output_dir") if k in values}
    parts = dict(
        fading=_make(FadingConfig, _group(values, "fading"), "fading"),
        train=train,
        bits=_make(BitConfig, _group(values, "bits"), "bits"),
        loss=_make(LossWeights, _group(values, "loss"), "loss"),
        quantizer=_make(QuantizerSettings, _group(values, "quantizer"), "quantizer"),
        eval=_make(EvalSettings, _group(values, "eval"), "eval"),
        baseline=_make(BaselineSettings, _group(values, "baseline"), "baseline"),
        constellation=_make(ConstellationSettings, _group(values, "constellation"), "constellation"),
    )
    return _make(ExperimentConfig, top | parts, "experiment")


def load_config(path, recipe=None):
    with open(path) as fh:
        return parse_config(fh.read(), recipe)


def config_fields():
    """Every accepted ``section.key``."""
    return sorted(f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys)
