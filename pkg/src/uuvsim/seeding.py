"""Labeled random streams derived from one master seed.

Each subsystem draws from its own stream so adding draws in one module
never perturbs another.  Streams are keyed by (master seed, label,
counter), which keeps replans and Monte Carlo trials reproducible.
"""

from __future__ import annotations

import numpy as np

# Stable stream labels; values must never change once results are published.
ENV = 1
NETWORK = 2
DE_GLOBAL = 3
DE_LOCAL = 4
MISSION = 5


def stream(seed: int, label: int, *counters: int) -> np.random.Generator:
    """Return the generator for (seed, label, counters...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(label), *map(int, counters)]))
