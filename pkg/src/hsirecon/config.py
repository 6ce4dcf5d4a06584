"""Pipeline configuration: INI sections, ``SECTION_KEY`` environment overrides, typed accessors."""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .ga import GaConfig
from .nets import ARCHITECTURES, ModelSpec, default_spec
from .synth import SceneConfig
from .training import TrainConfig

DEFAULTS = {
    "paths": {"out_dir": "hsirecon_out"},
    "synth": {"n_scenes": "60", "height": "64", "width": "64", "bands": "31", "noise_sd": "0.003", "seed": "0"},
    "segment": {"wl_a": "602", "wl_b": "452", "threshold": "", "largest_only": "true"},
    "split": {"ratios": "0.6 0.2 0.2", "seed": "0"},
    "ga": {
        "population_size": "50", "generations": "100", "tournament_size": "3",
        "mutation_rate": "0.03", "elitism_rate": "0.5", "min_bands": "7", "max_bands": "7",
        "cv_folds": "5", "max_lv": "10", "seed": "0",
    },
    "plsr": {"max_lv": "10"},
    "recon": {"architectures": "HSCNN_D HRNET MST_PP"},
    "train": {
        "epochs": "20", "iters_per_epoch": "50", "batch_size": "8", "patch_size": "32",
        "stride": "8", "lr": "0.002", "lr_decay": "0.99", "seed": "0",
    },
    "map": {"sample": "", "range": ""},
    "report": {"timing": "false"},
}

# built-in per-network training defaults; used only where neither [train] nor
# the architecture section sets the key explicitly
ARCH_TRAIN_DEFAULTS = {
    "HRNET": {"iters_per_epoch": "100", "lr": "0.001"},
    "MST_PP": {"iters_per_epoch": "100"},
}

SEED_KEYS = (("synth", "seed"), ("split", "seed"), ("ga", "seed"), ("train", "seed"))


class PipelineConfig:
    """Typed view over an INI file.

    Precedence, lowest first: built-in defaults, the file, environment
    variables named ``SECTION_KEY`` (upper case, e.g. ``TRAIN_EPOCHS``), then
    explicit overrides such as ``--seed``. Architecture sections (``HSCNN_D``,
    ``HRNET``, ``MST_PP``) may override any :class:`~hsirecon.nets.ModelSpec`
    field, and any ``[train]`` key when it is prefixed with ``train_``.
    """

    def __init__(self, path=None, env=None, seed=None, out_dir=None):
        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.read_dict(DEFAULTS)
        for arch in ARCHITECTURES:
            if not self.parser.has_section(arch):
                self.parser.add_section(arch)
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"config file not found: {path}")
            user = configparser.ConfigParser(interpolation=None)
            user.read(path)
            self.parser.read_dict(user)
            self.explicit = {(sec, key) for sec in user.sections() for key in user[sec]}
        else:
            self.explicit = set()
        env = os.environ if env is None else env
        for section in self.parser.sections():
            for key in list(self.parser[section]) + self._spec_keys(section):
                name = f"{section}_{key}".upper()
                if name in env:
                    self.parser[section][key] = env[name]
                    self.explicit.add((section, key))
        if seed is not None:
            for section, key in SEED_KEYS:
                self.parser[section][key] = str(int(seed))
                self.explicit.add((section, key))
        if out_dir is not None:
            self.parser["paths"]["out_dir"] = str(out_dir)

    @staticmethod
    def _spec_keys(section):
        if section in ARCHITECTURES:
            return ["base_channels", "depth", "growth", "heads", "ffn_mult"] + [
                f"train_{k}" for k in DEFAULTS["train"]]
        return []

    # raw access

    def get(self, section, key):
        return self.parser[section][key]

    def getint(self, section, key):
        return self.parser.getint(section, key)

    def getfloat(self, section, key):
        return self.parser.getfloat(section, key)

    def getbool(self, section, key):
        return self.parser.getboolean(section, key)

    def optional_float(self, section, key):
        raw = self.parser[section].get(key, "").strip()
        return float(raw) if raw else None

    # derived settings

    @property
    def out_dir(self):
        return Path(self.get("paths", "out_dir"))

    def scene_config(self):
        return SceneConfig(
            height=self.getint("synth", "height"),
            width=self.getint("synth", "width"),
            bands=self.getint("synth", "bands"),
            noise_sd=self.getfloat("synth", "noise_sd"),
        )

    def split_ratios(self):
        ratios = tuple(float(v) for v in self.get("split", "ratios").replace(",", " ").split())
        if len(ratios) != 3:
            raise ValueError("split.ratios needs three numbers")
        return ratios

    def ga_config(self):
        ints = ("population_size", "generations", "tournament_size", "min_bands", "max_bands",
                "cv_folds", "max_lv", "seed")
        kwargs = {k: self.getint("ga", k) for k in ints}
        kwargs.update(mutation_rate=self.getfloat("ga", "mutation_rate"),
                      elitism_rate=self.getfloat("ga", "elitism_rate"))
        return GaConfig(**kwargs)

    def architectures(self):
        archs = self.get("recon", "architectures").replace(",", " ").split()
        unknown = [a for a in archs if a not in ARCHITECTURES]
        if unknown:
            raise ValueError(f"unknown architectures {unknown}; choose from {ARCHITECTURES}")
        return archs

    def model_spec(self, architecture, out_bands):
        base = default_spec(architecture, out_bands).to_dict()
        for key, value in self.parser[architecture].items():
            if key in base and key != "architecture":
                base[key] = int(value)
        return ModelSpec(**base)

    def train_value(self, architecture, key):
        """Training setting for one network.

        Order of preference: ``train_<key>`` in the architecture section, an
        explicit ``[train]`` value, the built-in per-network default, then
        the built-in ``[train]`` default.
        """
        own = self.parser[architecture].get(f"train_{key}", "").strip()
        if own:
            return own
        builtin = ARCH_TRAIN_DEFAULTS.get(architecture, {}).get(key)
        if builtin is not None and ("train", key) not in self.explicit:
            return builtin
        return self.get("train", key)

    def train_config(self, architecture):
        ints = ("epochs", "iters_per_epoch", "batch_size", "patch_size", "stride", "seed")
        kwargs = {k: int(self.train_value(architecture, k)) for k in ints}
        kwargs.update({k: float(self.train_value(architecture, k)) for k in ("lr", "lr_decay")})
        return TrainConfig.for_architecture(architecture, **kwargs)

    def map_range(self):
        raw = self.get("map", "range").replace(",", " ").split()
        if not raw:
            return None
        if len(raw) != 2:
            raise ValueError("map.range needs two numbers: lo hi")
        return float(raw[0]), float(raw[1])

    def write(self, path):
        with open(path, "w") as fh:
            self.parser.write(fh)
