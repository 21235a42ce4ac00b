import sys
import logging

import click_log

from .constants import (
    INTERFACES,
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
    REWARD_SPARSE,
    REWARD_MODES,
    DEFAULT_STEP_PENALTY,
)
from .tasks import CapRule
from .teachers import TEACHERS

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("config")
click_log.basic_config(logger)


class ConfigError(ValueError):
    """A config file or override holds an unknown key or an unusable value."""


# Hyperparameter sets searched by `run_sweep`:
SWEEP_GRID = {
    INTERFACE_BUBBLE_INSERTION: {
        "learning_rate": [1e-4, 1e-5], "gamma": [0.99, 0.999], "entropy_weight": [0.0, 1e-3],
        "n_steps": [80, 160, 320],
    },
    INTERFACE_QUICK_SORT: {
        "learning_rate": [1e-4, 1e-5], "gamma": [0.99, 0.999], "entropy_weight": [0.0, 1e-3],
        "n_steps": [80, 160, 320],
    },
    INTERFACE_FULL_VIEW: {
        "learning_rate": [1e-4, 1e-5], "gamma": [0.9, 0.99], "entropy_weight": [0.0, 1e-3], "n_steps": [50],
    },
    INTERFACE_SEARCH: {
        "learning_rate": [1e-4, 1e-5], "gamma": [0.9, 0.99], "entropy_weight": [0.0, 1e-3], "n_steps": [50],
    },
    INTERFACE_KNAPSACK: {
        "learning_rate": [1e-4, 1e-5], "gamma": [0.9, 0.99], "entropy_weight": [0.0, 1e-3], "n_steps": [50],
    },
}

INTERFACE_DEFAULTS = {
    INTERFACE_BUBBLE_INSERTION: dict(gamma=0.99, n_steps=160, episode_cap="400", sizes=(10, 20), teacher="insertion"),
    INTERFACE_QUICK_SORT: dict(gamma=0.99, n_steps=320, episode_cap="2500", sizes=(30, 50), teacher="quicksort"),
    INTERFACE_FULL_VIEW: dict(gamma=0.9, n_steps=50, episode_cap="n2", sizes=(10, 20), teacher="selection"),
    INTERFACE_SEARCH: dict(gamma=0.9, n_steps=50, episode_cap="4n", sizes=(30, 50), teacher="binary"),
    INTERFACE_KNAPSACK: dict(gamma=0.9, n_steps=50, episode_cap="200", sizes=(4, 8), teacher="dfs"),
}


def parse_sizes(text):
    """`lo-hi`, or a single size."""
    if isinstance(text, (tuple, list)):
        lo, hi = text
    else:
        parts = str(text).strip().split("-")
        if len(parts) == 1:
            lo = hi = parts[0]
        elif len(parts) == 2:
            lo, hi = parts
        else:
            raise ValueError(f"expected lo-hi, got {text!r}")
    lo, hi = int(lo), int(hi)
    if lo < 1 or hi < lo:
        raise ValueError(f"size range must satisfy 1 <= lo <= hi, got {lo}-{hi}")
    return lo, hi


def parse_size_list(text):
    """`5,10,20`; each entry may itself be a `lo-hi` range."""
    sizes = []
    for part in str(text).split(","):
        if not part.strip():
            continue
        lo, hi = parse_sizes(part)
        sizes.extend(range(lo, hi + 1))
    if not sizes:
        raise ValueError(f"no sizes in {text!r}")
    return sorted(set(sizes))


def parse_bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_seed(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    seed = int(text)
    if seed < 0:
        raise ValueError(f"seeds are non-negative, got {seed}")
    return seed


def parse_cap(text):
    CapRule.parse(text)
    return str(text).strip()


def parse_config_text(text):
    """Flat `key = value` lines; `#` starts a comment. Returns an ordered dict of strings."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        entries[key] = value
    return entries


class TrainConfig:
    """Every training hyperparameter, with class-level defaults.

    Per-interface defaults (discount, n-step horizon, caps, sizes, teacher)
    are applied on top of the class defaults; explicit values win."""

    INTERFACE = INTERFACE_BUBBLE_INSERTION
    TEACHER = "insertion"
    LEARNING_RATE = 1e-4
    BC_LEARNING_RATE = 1e-3
    GAMMA = 0.99
    ENTROPY_WEIGHT = 1e-3
    N_STEPS = 160
    BASELINE_WEIGHT = 1e-3
    IMITATION_WEIGHT = 1e-3
    IMITATION = True
    REWARD_MODE = REWARD_SPARSE
    STEP_PENALTY = DEFAULT_STEP_PENALTY
    SIZES = (10, 20)
    EPISODE_CAP = "400"
    NUM_ACTORS = 16
    UPDATES = 1000
    BC_EPOCHS = 20
    BC_EPISODES = 50
    BATCH_SIZE = 256
    EVAL_INTERVAL = 50
    EVAL_EPISODES = 20
    SEED = None

    FIELDS = {
        "interface": str,
        "teacher": str,
        "learning_rate": float,
        "bc_learning_rate": float,
        "gamma": float,
        "entropy_weight": float,
        "n_steps": int,
        "baseline_weight": float,
        "imitation_weight": float,
        "imitation": parse_bool,
        "reward_mode": str,
        "step_penalty": float,
        "sizes": parse_sizes,
        "episode_cap": parse_cap,
        "num_actors": int,
        "updates": int,
        "bc_epochs": int,
        "bc_episodes": int,
        "batch_size": int,
        "eval_interval": int,
        "eval_episodes": int,
        "seed": parse_seed,
    }

    def __init__(self, interface=INTERFACE, **overrides):
        for key in self.FIELDS:
            setattr(self, key, getattr(self, key.upper()))
        self.set("interface", interface)
        if self.interface not in INTERFACES:
            raise ConfigError(f"Unknown interface: {self.interface}")
        for key, value in INTERFACE_DEFAULTS[self.interface].items():
            setattr(self, key, value)
        for key, value in overrides.items():
            self.set(key, value)
        self.validate()

    def set(self, key, value):
        if key not in self.FIELDS:
            raise ConfigError(f"Unknown config key: {key}")
        try:
            setattr(self, key, self.FIELDS[key](value))
        except (TypeError, ValueError) as ex:
            raise ConfigError(f"Bad value for {key}: {value!r} ({ex})") from ex

    def validate(self):
        if self.interface not in INTERFACES:
            raise ConfigError(f"Unknown interface: {self.interface}")
        if self.teacher not in TEACHERS:
            raise ConfigError(f"Unknown teacher: {self.teacher}")
        if TEACHERS[self.teacher].interface != self.interface:
            raise ConfigError(f"Teacher {self.teacher} does not run on the {self.interface} interface")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"Unknown reward mode: {self.reward_mode}")
        if self.learning_rate <= 0 or self.bc_learning_rate <= 0:
            raise ConfigError("Learning rates must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"Discount must lie in [0, 1], got {self.gamma}")
        for key in ("n_steps", "num_actors", "batch_size", "eval_interval", "eval_episodes", "bc_episodes"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1, got {getattr(self, key)}")
        for key in ("updates", "bc_epochs"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)}")
        for key in ("entropy_weight", "baseline_weight", "imitation_weight", "step_penalty"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)}")

    @property
    def cap_rule(self):
        return CapRule.parse(self.episode_cap)

    def to_dict(self):
        out = {key: getattr(self, key) for key in self.FIELDS}
        out["sizes"] = list(self.sizes)
        return out

    def to_config_text(self):
        lines = ["# stepwise training configuration"]
        for key in self.FIELDS:
            value = getattr(self, key)
            if key == "sizes":
                value = f"{value[0]}-{value[1]}"
            elif key == "imitation":
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def copy(self, **overrides):
        values = self.to_dict()
        values.update(overrides)
        interface = values.pop("interface")
        return TrainConfig(interface, **values)

    @staticmethod
    def from_text(text, **overrides):
        """Build from config-file text; non-None `overrides` (command-line values) win."""
        entries = parse_config_text(text)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        interface = overrides.pop("interface", None) or entries.pop("interface", TrainConfig.INTERFACE)
        entries.pop("interface", None)

        unknown = [k for k in list(entries) + list(overrides) if k not in TrainConfig.FIELDS]
        if unknown:
            raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")
        if interface not in INTERFACES:
            raise ConfigError(f"Unknown interface: {interface}")

        values = dict(entries)
        values.update(overrides)
        return TrainConfig(interface, **values)

    @staticmethod
    def from_config_file(path, **overrides):
        try:
            with open(path, "r") as f:
                text = f.read()
        except OSError as ex:
            raise ConfigError(f"Cannot read config file {path}: {ex}") from ex
        return TrainConfig.from_text(text, **overrides)

    @staticmethod
    def load(path=None, **overrides):
        """Config file (if any), then non-None command-line overrides."""
        if path is None:
            return TrainConfig.from_text("", **overrides)
        return TrainConfig.from_config_file(path, **overrides)

    def __repr__(self):
        return f"TrainConfig({', '.join(f'{k}={getattr(self, k)!r}' for k in self.FIELDS)})"
