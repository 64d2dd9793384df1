"""Additive uniform-noise augmentation for tabular rows.

Each noisy copy adds ``U ~ Uniform[0, sigma_f]`` to every cell, where
``sigma_f`` is the population standard deviation of feature ``f`` over the
training rows. The noise is one-sided, so copies only move upward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ProcessedDataset
from .errors import ConfigError


@dataclass
class AugmentConfig:
    copies_per_row: int = 31
    include_originals: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.copies_per_row < 0:
            raise ConfigError("copies_per_row must be >= 0")
        if self.copies_per_row == 0 and not self.include_originals:
            raise ConfigError("zero copies without originals would produce an empty dataset")


def feature_std(values) -> float:
    """Population standard deviation (divides by N)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("feature_std needs at least 2 values")
    return float(np.sqrt(np.mean((v - v.mean()) ** 2)))


def feature_stds(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([feature_std(X[:, j]) for j in range(X.shape[1])])


def _row_noise(seed: int, row: int, copies: int, sigma: np.ndarray) -> np.ndarray:
    # one substream per source row keeps output independent of processing order
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, row])))
    return sigma * rng.random((copies, sigma.size))


def augment(dataset: ProcessedDataset, config: AugmentConfig) -> ProcessedDataset:
    """Grow the training split with noisy copies; test rows pass through untouched.

    Output order: every input row kept (test rows always, training rows when
    ``include_originals``), followed by the copies grouped by source row.
    ``source_row`` records the input index each output row came from.
    """
    train_idx = np.flatnonzero(dataset.train_mask)
    if train_idx.size < 2:
        raise ValueError("augmentation needs at least 2 training rows to estimate feature spread")
    sigma = feature_stds(dataset.X[train_idx])
    keep = np.ones(len(dataset), dtype=bool) if config.include_originals else dataset.is_test.copy()
    kept_idx = np.flatnonzero(keep)
    c = config.copies_per_row
    p = dataset.X.shape[1]
    copies = np.empty((train_idx.size * c, p))
    for k, i in enumerate(train_idx):
        copies[k * c:(k + 1) * c] = dataset.X[i] + _row_noise(config.seed, int(i), c, sigma)
    src_copies = np.repeat(train_idx, c)
    source = np.concatenate([kept_idx, src_copies])
    if source.size == 0:
        raise ValueError("augmentation produced no rows")
    out = dataset.subset(source)
    out.X = np.vstack([dataset.X[kept_idx], copies])
    out.source_row = source if dataset.source_row is None else dataset.source_row[source]
    out.meta = dict(dataset.meta)
    out.meta["augmentation"] = {
        "copies_per_row": c,
        "include_originals": config.include_originals,
        "seed": config.seed,
        "sigma": sigma.tolist(),
    }
    return out
