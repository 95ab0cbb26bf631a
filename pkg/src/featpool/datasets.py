"""Seeded synthetic series bundled for examples, the CLI and tests."""

from __future__ import annotations

import numpy as np

from .core import TimeSeries


def regime_switching(seed: int = 0, length: int = 600, block: int = 150, sds=(1.0, 3.0)) -> TimeSeries:
    """Zero-mean Gaussian noise whose sd alternates between ``sds`` every ``block`` points."""
    rng = np.random.default_rng(seed)
    n_blocks = -(-length // block)
    sd = np.tile(np.asarray(sds, dtype=float), n_blocks)[:n_blocks].repeat(block)[:length]
    return TimeSeries(f"regime_{seed}", rng.normal(size=length) * sd)


def regime_sd(length: int = 600, block: int = 150, sds=(1.0, 3.0)) -> np.ndarray:
    """The true sd path used by :func:`regime_switching`."""
    n_blocks = -(-length // block)
    return np.tile(np.asarray(sds, dtype=float), n_blocks)[:n_blocks].repeat(block)[:length]


def short_panel(seed: int = 0, n_series: int = 3, length: int = 60) -> list:
    """Short trending series with AR(1) noise, in the spirit of yearly/monthly panels."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_series):
        level = 100.0 + 20.0 * rng.random()
        slope = rng.normal(0.5, 0.5)
        phi = rng.uniform(0.0, 0.8)
        e = rng.normal(0.0, 1.0 + rng.random(), size=length)
        noise = np.empty(length)
        noise[0] = e[0]
        for t in range(1, length):
            noise[t] = phi * noise[t - 1] + e[t]
        out.append(TimeSeries(f"panel_{seed}_{i}", level + slope * np.arange(length) + noise))
    return out


BUILTIN = {
    "synthetic:regime": lambda seed: [regime_switching(seed)],
    "synthetic:panel": lambda seed: short_panel(seed),
}


def builtin(name: str, seed: int = 0) -> list:
    if name not in BUILTIN:
        raise KeyError(f"unknown bundled dataset {name!r}; expected one of {sorted(BUILTIN)}")
    return BUILTIN[name](seed)
