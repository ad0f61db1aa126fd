"""Age penalty functions."""
from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

COST_CLIP = 1e300


class CostFunction:
    """Non-decreasing map from age (integer >= 1) to a non-negative cost."""

    name = "cost"

    def __call__(self, delta):
        raise NotImplementedError


class LinearCost(CostFunction):
    name = "linear"

    def __call__(self, delta):
        return np.asarray(delta, dtype=float)


class ExponentialCost(CostFunction):
    """``eta ** delta``, clipped at 1e300 to stay finite."""

    def __init__(self, eta: float):
        if eta < 1.0:
            raise ValueError("eta must be >= 1 for a non-decreasing penalty")
        self.eta = float(eta)
        self.name = f"exp:{eta!r}"

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        logc = delta * np.log(self.eta)
        limit = np.log(COST_CLIP)
        over = logc > limit
        if np.any(over):
            log.warning("exponential cost clipped at %g for ages above %d",
                        COST_CLIP, int(limit / np.log(self.eta)))
        with np.errstate(over="ignore"):
            return np.where(over, COST_CLIP, np.power(self.eta, np.where(over, 0.0, delta)))


def parse_cost(spec: str) -> CostFunction:
    """Parse ``"linear"`` or ``"exp:<eta>"``."""
    if spec == "linear":
        return LinearCost()
    if spec.startswith("exp:"):
        return ExponentialCost(float(spec[4:]))
    raise ValueError(f"unknown cost {spec!r}; expected 'linear' or 'exp:<eta>'")
