"""Synthetic paired-data generators, null shuffling and CSV ingestion."""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SchemaError

logger = logging.getLogger(__name__)

__all__ = [
    "PairedSample",
    "sample_hdgm",
    "sample_sinusoid",
    "shuffle_to_null",
    "load_paired_csv",
    "write_paired_csv",
    "make_sampler",
]


@dataclass
class PairedSample:
    x: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError(f"x has {self.x.shape[0]} rows but y has {self.y.shape[0]}")

    def __len__(self):
        return self.x.shape[0]

    @property
    def m(self):
        return self.x.shape[0]

    def subset(self, idx):
        return PairedSample(self.x[idx], self.y[idx], dict(self.provenance))


def _hdgm_slots(d):
    """Columns of the d-vector feeding X_1..X_{d/2} and Y_1..Y_{d/2}.

    The vector reads [X_1, Y_{d/2}, X_2, Y_{d/2-1}, ..., X_{d/2}, Y_1], so the
    correlated coordinates 0 and 1 land in X_1 and Y_{d/2}.
    """
    x_cols = list(range(0, d, 2))
    y_cols = list(range(d - 1, 0, -2))
    return x_cols, y_cols


def sample_hdgm(d, n, rng, return_component=False):
    """High-dimensional Gaussian mixture with one dependent (X_1, Y_{d/2}) pair.

    Each point picks component i in {1, 2} with probability 1/2 and draws a
    d-vector from N(0, S_i) with S_i the identity except
    ``S_i[0, 1] = S_i[1, 0] = 0.5 (-1)^i``.
    """
    if d % 2 or d < 4:
        raise ConfigError(f"HDGM needs an even dimension >= 4, got {d}")
    comp = rng.integers(1, 3, size=n)
    z = rng.standard_normal((n, d))
    rho = 0.5 * np.where(comp == 1, -1.0, 1.0)
    # correlate coordinates 0 and 1 with a 2x2 Cholesky factor
    z[:, 1] = rho * z[:, 0] + np.sqrt(1.0 - rho**2) * z[:, 1]
    x_cols, y_cols = _hdgm_slots(d)
    x = z[:, x_cols]
    y = z[:, y_cols]
    sample = PairedSample(x, y, {"generator": "hdgm", "d": d, "n": n})
    return (sample, comp) if return_component else sample


def sample_sinusoid(freq, n, rng):
    """Rejection sampler for density proportional to 1 + sin(l x) sin(l y) on [-pi, pi]^2."""
    if int(freq) != freq or freq < 1:
        raise ConfigError(f"sinusoid frequency must be a positive integer, got {freq}")
    xs, ys = [], []
    have = 0
    while have < n:
        k = max(2 * (n - have) + 16, 64)
        u = rng.uniform(-math.pi, math.pi, size=(k, 2))
        acc = rng.uniform(size=k) < 0.5 * (1.0 + np.sin(freq * u[:, 0]) * np.sin(freq * u[:, 1]))
        xs.append(u[acc, 0])
        ys.append(u[acc, 1])
        have += int(acc.sum())
    x = np.concatenate(xs)[:n]
    y = np.concatenate(ys)[:n]
    return PairedSample(x, y, {"generator": "sinusoid", "freq": int(freq), "n": n})


def shuffle_to_null(sample, rng):
    """Permute the y rows uniformly at random, breaking any dependence."""
    if sample.m < 2:
        return PairedSample(sample.x.copy(), sample.y.copy(), dict(sample.provenance))
    perm = rng.permutation(sample.m)
    prov = dict(sample.provenance, shuffled=True)
    return PairedSample(sample.x.copy(), sample.y[perm], prov)


def make_sampler(dataset, param):
    """Return ``sampler(n, rng) -> PairedSample`` for ``hdgm`` (param d) or ``sinusoid`` (param freq)."""
    name = dataset.lower()
    if name == "hdgm":
        d = int(param)
        if d % 2 or d < 4:
            raise ConfigError(f"HDGM needs an even dimension >= 4, got {d}")
        return lambda n, rng: sample_hdgm(d, n, rng)
    if name == "sinusoid":
        freq = int(param)
        if freq < 1:
            raise ConfigError(f"sinusoid frequency must be >= 1, got {freq}")
        return lambda n, rng: sample_sinusoid(freq, n, rng)
    raise ConfigError(f"unknown dataset {dataset!r}")


def write_paired_csv(path, sample, x_names=None, y_names=None):
    x_names = x_names or [f"x{j + 1}" for j in range(sample.x.shape[1])]
    y_names = y_names or [f"y{j + 1}" for j in range(sample.y.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(x_names) + list(y_names))
        for xr, yr in zip(sample.x, sample.y):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])
    return list(x_names), list(y_names)


def load_paired_csv(path, x_columns, y_columns):
    """Load selected columns of a headed, comma-separated UTF-8 file.

    Rows with a missing or non-numeric selected field are dropped; the count
    is logged and stored as ``provenance["dropped_rows"]``.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        missing = [c for c in list(x_columns) + list(y_columns) if c not in header]
        if missing:
            raise SchemaError(f"columns not found in {path}: {missing}")
        xi = [header.index(c) for c in x_columns]
        yi = [header.index(c) for c in y_columns]
        xs, ys, dropped = [], [], 0
        for row in reader:
            if not row:
                continue
            try:
                xr = [float(row[i]) for i in xi]
                yr = [float(row[i]) for i in yi]
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in xr + yr):
                dropped += 1
                continue
            xs.append(xr)
            ys.append(yr)
    if dropped:
        logger.warning("dropped %d malformed rows from %s", dropped, path)
    if not xs:
        raise DataError(f"no usable rows in {path}")
    prov = {"generator": "csv", "path": str(path), "dropped_rows": dropped}
    return PairedSample(np.array(xs), np.array(ys), prov)
