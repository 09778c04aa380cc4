"""INI-style run configuration: sections of ``key = value`` lines.

Recognised sections and keys::

    [data]   dataset, param, n, seed, csv, x_columns, y_columns
    [method] name
    [train]  epochs, lr, batch_size, weight_decay, lam, alpha, variant, m_target, n_gamma_perms, val_every
    [split]  train_frac, val_frac, test_frac, seed
    [test]   n_perm, alpha, seed
    [sweep]  methods, m_grid, n_train_grid, n_runs, n_tests, n_perm, alpha, val_frac, seed

Lists are comma separated. Unknown sections or keys are rejected so typos
surface as configuration errors instead of silently using defaults.
"""

import configparser

from .errors import ConfigError
from .harness import SweepConfig
from .testing import RunConfig, SplitSpec, TrainConfig

__all__ = ["load_config", "parse_config", "run_config", "sweep_config", "data_settings"]

_INT, _FLOAT, _STR = int, float, str


def _ints(v):
    return tuple(int(t) for t in v.split(",") if t.strip())


def _strs(v):
    return tuple(t.strip() for t in v.split(",") if t.strip())


def _opt_int(v):
    return None if v.strip().lower() in ("", "none") else int(v)


def _opt_str(v):
    return None if v.strip().lower() in ("", "none") else v.strip()


SCHEMA = {
    "data": {
        "dataset": _STR,
        "param": _INT,
        "n": _INT,
        "seed": _INT,
        "csv": _STR,
        "x_columns": _strs,
        "y_columns": _strs,
    },
    "method": {"name": _STR},
    "train": {
        "epochs": _INT,
        "lr": _FLOAT,
        "batch_size": _INT,
        "weight_decay": _FLOAT,
        "lam": _FLOAT,
        "alpha": _FLOAT,
        "variant": _opt_str,
        "m_target": _opt_int,
        "n_gamma_perms": _INT,
        "val_every": _INT,
    },
    "split": {"train_frac": _FLOAT, "val_frac": _FLOAT, "test_frac": _FLOAT, "seed": _INT},
    "test": {"n_perm": _INT, "alpha": _FLOAT, "seed": _INT},
    "sweep": {
        "methods": _strs,
        "m_grid": _ints,
        "n_train_grid": _ints,
        "n_runs": _INT,
        "n_tests": _INT,
        "n_perm": _INT,
        "alpha": _FLOAT,
        "val_frac": _FLOAT,
        "seed": _INT,
    },
}


def parse_config(text):
    """Parse INI text into ``{section: {key: typed value}}``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in cp.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                out[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return out


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _train(cfg):
    return TrainConfig(**cfg.get("train", {}))


def run_config(cfg):
    test = cfg.get("test", {})
    return RunConfig(
        method=cfg.get("method", {}).get("name", "hsic-m"),
        split=SplitSpec(**cfg.get("split", {})),
        train=_train(cfg),
        n_perm=test.get("n_perm", 500),
        alpha=test.get("alpha", 0.05),
        seed=test.get("seed", 0),
    )


def sweep_config(cfg):
    data = cfg.get("data", {})
    kw = dict(cfg.get("sweep", {}))
    if "dataset" in data:
        kw["dataset"] = data["dataset"]
    if "param" in data:
        kw["dataset_param"] = data["param"]
    return SweepConfig(train=_train(cfg), **kw)


def data_settings(cfg):
    return dict(cfg.get("data", {}))
