"""Exhaustive ground truth for small settlement batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mbo_core import bit_matrix, bitstring, bitstring_index
from .settlement import SettlementInstance, check, feasible_mask

MAX_TRANSACTIONS = 20


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OracleResult:
    """``feasible[k]`` and ``objective[k]`` describe basis index ``k`` (bitstring ``bitstring(k, n)``)."""

    n: int
    optimum: float
    optimal: tuple[str, ...]
    feasible: np.ndarray
    objective: np.ndarray

    def table(self) -> list[dict]:
        return [
            {"bitstring": bitstring(k, self.n), "feasible": bool(self.feasible[k]), "objective": float(self.objective[k])}
            for k in range(self.objective.size)
        ]

    def lookup(self, bits: str) -> tuple[bool, float]:
        k = bitstring_index(bits)
        return bool(self.feasible[k]), float(self.objective[k])

    def to_dict(self) -> dict:
        return {"n": self.n, "optimum": self.optimum, "optimal": list(self.optimal), "table": self.table()}


def enumerate_solutions(instance: SettlementInstance, tol: float = 1e-9) -> OracleResult:
    """Score all ``2**I`` subsets of the batch and collect every feasible maximizer, in index order."""
    check(instance)
    n = instance.n_transactions
    if n > MAX_TRANSACTIONS:
        raise InstanceTooLarge(f"{n} transactions exceed the enumeration limit of {MAX_TRANSACTIONS}")
    X = bit_matrix(n)
    if n == 0:
        feasible = np.ones(1, dtype=bool)
        objective = np.zeros(1)
    else:
        feasible = feasible_mask(instance, X)
        objective = X @ instance.weights
    if not feasible.any():
        # cannot happen when balances meet the fixed limits, but keep the result well defined
        return OracleResult(n, float("-inf"), (), feasible, objective)
    best = float(objective[feasible].max())
    winners = np.flatnonzero(feasible & (objective >= best - tol))
    return OracleResult(n, best, tuple(bitstring(int(k), n) for k in winners), feasible, objective)


enumerate = enumerate_solutions  # noqa: A001  (public name used by callers)
