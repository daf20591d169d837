"""Piecewise-linear link cost: the maximum over a family of linear functions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

DEFAULT_BREAKPOINTS = (0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class LinearCostFunction:
    """y(U) = a * U - b."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("slope must be non-negative")

    def __call__(self, utilization: float) -> float:
        return self.a * utilization - self.b


@dataclass(frozen=True)
class CostFunctionSet:
    functions: tuple[LinearCostFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if not self.functions:
            raise ValueError("cost function set is empty")
        if not any(f.a == 0 and f.b == 0 for f in self.functions):
            raise ValueError("cost function set must contain the zero function")
        object.__setattr__(self, "_a", np.array([f.a for f in self.functions]))
        object.__setattr__(self, "_b", np.array([f.b for f in self.functions]))

    def __hash__(self):
        return hash(self.functions)

    def cost(self, utilization: float) -> float:
        return max(f(utilization) for f in self.functions)

    def cost_array(self, utilization: np.ndarray) -> np.ndarray:
        """Elementwise link cost of an array of utilizations."""
        u = np.asarray(utilization, dtype=float)
        out = np.zeros_like(u)
        for a, b in zip(self._a, self._b):
            if a == 0 and b == 0:
                continue
            np.maximum(out, a * u - b, out=out)
        return out

    def to_json(self) -> str:
        return json.dumps([{"a": f.a, "b": f.b} for f in self.functions])

    @classmethod
    def from_json(cls, text: str) -> "CostFunctionSet":
        return cls(tuple(LinearCostFunction(float(r["a"]), float(r["b"])) for r in json.loads(text)))


def exponential_curve(u: float) -> float:
    """Normalised exponential ramp: 0 at 60% utilization, 1 at 100%."""
    return (math.exp(10 * (u - 0.6)) - 1) / (math.exp(4) - 1)


def default_cost_set() -> CostFunctionSet:
    """Zero function plus the secants of the exponential ramp on 0.6..1.0."""
    funcs = [LinearCostFunction(0.0, 0.0)]
    for lo, hi in zip(DEFAULT_BREAKPOINTS, DEFAULT_BREAKPOINTS[1:]):
        slope = (exponential_curve(hi) - exponential_curve(lo)) / (hi - lo)
        funcs.append(LinearCostFunction(slope, slope * lo - exponential_curve(lo)))
    return CostFunctionSet(tuple(funcs))


def link_cost(cost_set: CostFunctionSet, utilization: float) -> float:
    if utilization < 0:
        raise ValueError("utilization must be non-negative")
    return cost_set.cost(utilization)


def total_network_cost(net, cost_set: CostFunctionSet, per_link_load: Mapping | np.ndarray) -> float:
    """Sum of link costs. ``per_link_load`` is an array over ``net.links`` or a
    mapping from link id (or index) to Mbps; missing links carry no load."""
    caps = net.capacities()
    if isinstance(per_link_load, np.ndarray):
        loads = per_link_load
    else:
        loads = np.zeros(len(net.links))
        ids = {link.id: i for i, link in enumerate(net.links)}
        for key, mbps in per_link_load.items():
            i = key if isinstance(key, (int, np.integer)) else ids.get(key)
            if i is None:
                raise KeyError(f"unknown link {key!r}")
            loads[i] += mbps
    return float(cost_set.cost_array(loads / caps).sum())
