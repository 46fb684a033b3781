"""Synthetic price histories for tests and desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .data import PriceSeries


def random_walk_prices(n, seed=0, start=100.0, vol=0.01, drift=0.0) -> PriceSeries:
    """Geometric random walk; forward returns carry no information."""
    rng = np.random.default_rng(seed)
    log_p = np.log(start) + np.cumsum(drift + vol * rng.standard_normal(n))
    return PriceSeries.from_closes(np.exp(log_p))


def ar_prices(n, seed=0, start=100.0, phi=0.7, vol=0.01, walk_vol=0.0, drift=0.0002) -> PriceSeries:
    """Log price = trend + AR(1) deviation (+ optional random-walk component).

    The AR(1) deviation mean-reverts with coefficient ``phi``, so the distance
    of the price from its long moving average predicts the next few returns.
    A nonzero ``walk_vol`` makes ``x1`` drift and washes most of that out.
    """
    rng = np.random.default_rng(seed)
    u = np.empty(n)
    u[0] = 0.0
    shocks = vol * rng.standard_normal(n)
    for t in range(1, n):
        u[t] = phi * u[t - 1] + shocks[t]
    walk = np.cumsum(walk_vol * rng.standard_normal(n))
    log_p = np.log(start) + drift * np.arange(n) + walk + u
    return PriceSeries.from_closes(np.exp(log_p))
