"""Run configuration: an INI file of flat ``key = value`` sections.

Every key has a default; unknown sections or keys are rejected so typos do not
silently fall back to defaults. :func:`dump` writes the fully resolved
configuration, which is enough to reproduce a run.
"""

import configparser
from dataclasses import dataclass, field

from .datapipe import AugmentConfig, DatasetConfig, Modality
from .errors import ConfigError
from .network import FCSpec, PyramidSpec
from .parallel import default_num_threads
from .train import Schedule

DEFAULTS = {
    "run": {"seed": "0", "threads": "", "out": "out"},
    "arch": {"input_channels": "1", "num_classes": "2", "filter_size": "7",
             "layers": "pyramid:16, fc:25:tanh, pyramid:32, fc:45:tanh, pyramid:64, fc:classes:softmax"},
    "data": {"train_inputs": "", "train_labels": ""},
    "preprocess": {"modalities": "", "output": "", "gaussian_size": "31", "gaussian_sigma": "5.0",
                   "clahe_tile": "16", "clahe_clip": "2.0"},
    "augment": {"rotate_z": "false", "flip_x": "false", "flip_y": "false", "flip_z": "false"},
    "schedule": {"stages": "300@16x16x8, 200@32x32x12, 100@48x48x16", "checkpoint_every": "50"},
    "predict": {"input": "", "checkpoint": "", "tile": "", "overlap": "0.5", "sigma_frac": "0.25",
                "output_probs": "", "output_labels": ""},
    "evaluate": {"prediction": "", "reference": "", "classes": "", "spacing": "1, 1, 1",
                 "foreground": "1", "per_slice": "false", "output": ""},
    "bench": {"dims": "128x128x16", "channels": "1", "threads": "1, 2, 4, 8", "repeats": "1",
              "dtype": "float64"},
}

# per-modality keys in [preprocess]: <name>, <name>.original, <name>.preprocessed
_MODALITY_SUFFIXES = ("", ".original", ".preprocessed")


def _list(s):
    return [t.strip() for t in s.split(",") if t.strip()]


def _dims(s, field_name):
    try:
        dims = tuple(int(v) for v in s.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad dimensions {s!r} (expected WxHxD)", field=field_name) from None
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"bad dimensions {s!r} (expected WxHxD)", field=field_name)
    return dims


@dataclass
class RunConfig:
    raw: configparser.ConfigParser
    seed: int = 0
    threads: int = 1
    out: str = "out"
    input_channels: int = 1
    num_classes: int = 2
    layers: list = field(default_factory=list)
    train_inputs: list = field(default_factory=list)
    train_labels: list = field(default_factory=list)
    dataset: DatasetConfig = None
    modality_paths: dict = field(default_factory=dict)
    schedule: Schedule = None
    checkpoint_every: int = 0

    def get(self, section, key):
        return self.raw.get(section, key)

    def getfloat(self, section, key):
        try:
            return self.raw.getfloat(section, key)
        except ValueError:
            raise ConfigError(f"not a number: {self.raw.get(section, key)!r}",
                              field=f"{section}.{key}") from None

    def getint(self, section, key):
        try:
            return self.raw.getint(section, key)
        except ValueError:
            raise ConfigError(f"not an integer: {self.raw.get(section, key)!r}",
                              field=f"{section}.{key}") from None

    def getbool(self, section, key):
        try:
            return self.raw.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"not a boolean: {self.raw.get(section, key)!r}",
                              field=f"{section}.{key}") from None

    def dims(self, section, key):
        return _dims(self.raw.get(section, key), f"{section}.{key}")


def parse_layers(text, num_classes, filter_size):
    specs = []
    for tok in _list(text):
        parts = tok.split(":")
        try:
            if parts[0] == "pyramid" and len(parts) in (2, 3):
                k = int(parts[2]) if len(parts) == 3 else filter_size
                specs.append(PyramidSpec(int(parts[1]), k))
            elif parts[0] == "fc" and len(parts) in (2, 3):
                units = num_classes if parts[1] == "classes" else int(parts[1])
                specs.append(FCSpec(units, parts[2] if len(parts) == 3 else "tanh"))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"bad layer {tok!r} (use pyramid:H[:K] or fc:U[:tanh|softmax])",
                              field="arch.layers") from None
        last = specs[-1]
        if isinstance(last, PyramidSpec) and (last.hidden < 1 or last.filter_size % 2 == 0):
            raise ConfigError(f"bad layer {tok!r}: hidden >= 1 and odd filter size required",
                              field="arch.layers")
        if isinstance(last, FCSpec) and (last.units < 1 or last.activation not in ("tanh", "softmax")):
            raise ConfigError(f"bad layer {tok!r}", field="arch.layers")
    if not specs:
        raise ConfigError("no layers given", field="arch.layers")
    return specs


def parse_schedule(text):
    stages = []
    for tok in _list(text):
        try:
            epochs, dims = tok.split("@")
            stages.append((int(epochs), _dims(dims, "schedule.stages")))
        except ValueError:
            raise ConfigError(f"bad stage {tok!r} (use EPOCHS@WxHxD)", field="schedule.stages") from None
    if not stages:
        raise ConfigError("no stages given", field="schedule.stages")
    return Schedule(stages)


def load(path=None, overrides=None):
    """Parse and validate a config file (or defaults only when ``path`` is None)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path is not None:
        user = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                user.read_file(f)
        except FileNotFoundError:
            raise ConfigError(f"no such config file: {path}", field="config") from None
        except configparser.Error as e:
            raise ConfigError(f"unparseable config: {e}", field="config") from None
        modalities = _list(user.get("preprocess", "modalities", fallback=""))
        for section in user.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown section [{section}]", field=section)
            for key in user[section]:
                known = key in DEFAULTS[section] or (
                    section == "preprocess"
                    and any(key == m + suf for m in modalities for suf in _MODALITY_SUFFIXES))
                if not known:
                    raise ConfigError(f"unknown key {key!r}", field=f"{section}.{key}")
                cp.set(section, key, user.get(section, key))
    for (section, key), value in (overrides or {}).items():
        cp.set(section, key, str(value))
    return resolve(cp)


def resolve(cp):
    cfg = RunConfig(raw=cp)
    cfg.seed = cfg.getint("run", "seed")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0", field="run.seed")
    threads = cp.get("run", "threads").strip()
    cfg.threads = default_num_threads() if not threads else cfg.getint("run", "threads")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1", field="run.threads")
    cp.set("run", "threads", str(cfg.threads))
    cfg.out = cp.get("run", "out")

    cfg.input_channels = cfg.getint("arch", "input_channels")
    cfg.num_classes = cfg.getint("arch", "num_classes")
    if cfg.input_channels < 1:
        raise ConfigError("input_channels must be >= 1", field="arch.input_channels")
    if not 1 <= cfg.num_classes <= 256:
        raise ConfigError("num_classes must be in [1, 256]", field="arch.num_classes")
    cfg.layers = parse_layers(cp.get("arch", "layers"), cfg.num_classes,
                              cfg.getint("arch", "filter_size"))

    cfg.train_inputs = _list(cp.get("data", "train_inputs"))
    cfg.train_labels = _list(cp.get("data", "train_labels"))
    if len(cfg.train_inputs) != len(cfg.train_labels):
        raise ConfigError("train_inputs and train_labels must have the same length",
                          field="data.train_labels")

    names = _list(cp.get("preprocess", "modalities"))
    mods = []
    for m in names:
        try:
            orig = cp.getboolean("preprocess", m + ".original", fallback=True)
            pre = cp.getboolean("preprocess", m + ".preprocessed", fallback=False)
        except ValueError:
            raise ConfigError(f"flags of modality {m!r} must be booleans",
                              field=f"preprocess.{m}") from None
        mods.append(Modality(m, orig, pre))
        cfg.modality_paths[m] = cp.get("preprocess", m, fallback="")
    augment = AugmentConfig(*(cfg.getbool("augment", k)
                              for k in ("rotate_z", "flip_x", "flip_y", "flip_z")))
    cfg.dataset = DatasetConfig(
        modalities=tuple(mods), num_classes=cfg.num_classes, augment=augment,
        overlap=cfg.getfloat("predict", "overlap"), sigma_frac=cfg.getfloat("predict", "sigma_frac"),
        gaussian_size=cfg.getint("preprocess", "gaussian_size"),
        gaussian_sigma=cfg.getfloat("preprocess", "gaussian_sigma"),
        clahe_tile=cfg.getint("preprocess", "clahe_tile"),
        clahe_clip=cfg.getfloat("preprocess", "clahe_clip"))
    if not 0.0 <= cfg.dataset.overlap < 1.0:
        raise ConfigError("overlap must be in [0, 1)", field="predict.overlap")
    if cfg.dataset.sigma_frac <= 0:
        raise ConfigError("sigma_frac must be > 0", field="predict.sigma_frac")

    cfg.schedule = parse_schedule(cp.get("schedule", "stages"))
    cfg.checkpoint_every = cfg.getint("schedule", "checkpoint_every")
    return cfg


def dump(cfg, path):
    with open(path, "w") as f:
        cfg.raw.write(f)
