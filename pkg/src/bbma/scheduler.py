"""Symbol-class scheduling.

At each symbol-time every terminal must sit in the class that carries the
symbol it is about to receive. Classes and symbols are both indexed
``1..M``; ``symbol_of_class`` is a bijection between them.

Static assignment keeps the bijection fixed and moves every mismatched
terminal. Dynamic assignment first picks the bijection that keeps the most
terminals in place, which is a linear assignment on the M x M table of
"class c members demanding symbol s" counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_MAX_M = 6

__all__ = [
    "ClassState",
    "Move",
    "MovePlan",
    "PlanError",
    "initial_state",
    "kept_counts",
    "static_assign",
    "dynamic_assign",
    "apply",
    "table1_example",
]


class PlanError(ValueError):
    """A move plan does not match the state it is applied to."""


@dataclass(frozen=True)
class ClassState:
    """Partition of terminals into classes plus the class -> symbol map."""

    M: int
    membership: Mapping[int, int]
    symbol_of_class: Mapping[int, int]

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError(f"need at least two symbols, got M={self.M}")
        classes = set(range(1, self.M + 1))
        if set(self.symbol_of_class) != classes or set(self.symbol_of_class.values()) != classes:
            raise ValueError("symbol_of_class must be a bijection on 1..M")
        bad = {t: c for t, c in self.membership.items() if c not in classes}
        if bad:
            raise ValueError(f"class index out of range: {bad}")
        object.__setattr__(self, "membership", dict(self.membership))
        object.__setattr__(self, "symbol_of_class", dict(self.symbol_of_class))

    @property
    def class_of_symbol(self) -> dict[int, int]:
        return {s: c for c, s in self.symbol_of_class.items()}

    def members(self, c: int) -> list[int]:
        return sorted(t for t, k in self.membership.items() if k == c)

    def class_sizes(self) -> dict[int, int]:
        return {c: len(self.members(c)) for c in range(1, self.M + 1)}

    def symbol_of(self, terminal: int) -> int:
        return self.symbol_of_class[self.membership[terminal]]


@dataclass(frozen=True)
class Move:
    terminal: int
    src: int
    dst: int


@dataclass(frozen=True)
class MovePlan:
    moves: tuple[Move, ...]
    new_symbol_of_class: Mapping[int, int]
    base: ClassState = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.moves)


def initial_state(M: int, membership: Mapping[int, int]) -> ClassState:
    """State with the identity mapping ``S_c -> Class_c``."""
    return ClassState(M, membership, {c: c for c in range(1, M + 1)})


def _check_demand(state: ClassState, demand: Mapping[int, int]) -> None:
    if set(demand) != set(state.membership):
        raise ValueError("demand must cover exactly the active terminals")
    bad = {t: s for t, s in demand.items() if not 1 <= s <= state.M}
    if bad:
        raise ValueError(f"demanded symbol out of range: {bad}")


def kept_counts(state: ClassState, demand: Mapping[int, int]) -> np.ndarray:
    """``K[c-1, s-1]`` = members of class c that demand symbol s."""
    K = np.zeros((state.M, state.M), dtype=int)
    for t, c in state.membership.items():
        K[c - 1, demand[t] - 1] += 1
    return K


def _plan(state: ClassState, demand: Mapping[int, int], mapping: dict[int, int]) -> MovePlan:
    owner = {s: c for c, s in mapping.items()}
    moves = tuple(
        Move(t, c, owner[demand[t]])
        for t, c in sorted(state.membership.items())
        if mapping[c] != demand[t]
    )
    return MovePlan(moves, mapping, state)


def static_assign(state: ClassState, demand: Mapping[int, int]) -> MovePlan:
    """Keep the symbol map and move every terminal to its symbol's class."""
    _check_demand(state, demand)
    return _plan(state, demand, dict(state.symbol_of_class))


def _best_mapping(state: ClassState, K: np.ndarray) -> dict[int, int]:
    M = state.M
    current = tuple(state.symbol_of_class[c] - 1 for c in range(1, M + 1))
    if M <= EXHAUSTIVE_MAX_M:
        best = current
        best_kept = sum(K[c, s] for c, s in enumerate(current))
        # strict improvement only, so ties keep the current map
        for perm in itertools.permutations(range(M)):
            kept = sum(K[c, s] for c, s in enumerate(perm))
            if kept > best_kept:
                best, best_kept = perm, kept
    else:
        rows, cols = linear_sum_assignment(K, maximize=True)
        best = tuple(int(s) for s in cols[np.argsort(rows)])
        if K[np.arange(M), list(best)].sum() == K[np.arange(M), list(current)].sum():
            best = current
    return {c + 1: s + 1 for c, s in enumerate(best)}


def dynamic_assign(state: ClassState, demand: Mapping[int, int]) -> MovePlan:
    """Choose the symbol map that minimises moved terminals, then plan the moves."""
    _check_demand(state, demand)
    mapping = _best_mapping(state, kept_counts(state, demand))
    return _plan(state, demand, mapping)


def apply(state: ClassState, plan: MovePlan) -> ClassState:
    """Execute a plan produced from ``state``.

    Raises
    ------
    PlanError
        If the plan was made from a different state (including re-applying
        a plan to its own result) or a move's source class is wrong.
    """
    if plan.base != state:
        raise PlanError("plan was not produced from this state")
    membership = dict(state.membership)
    for mv in plan.moves:
        if membership.get(mv.terminal) != mv.src:
            raise PlanError(f"terminal {mv.terminal} is not in class {mv.src}")
        membership[mv.terminal] = mv.dst
    return ClassState(state.M, membership, dict(plan.new_symbol_of_class))


def table1_example() -> tuple[ClassState, dict[int, int]]:
    """Worked two-class example: 11 terminals, identity map, next-symbol demands."""
    class1 = {1: 2, 4: 1, 5: 2, 7: 2, 10: 1, 11: 2}
    class2 = {2: 1, 3: 2, 6: 2, 8: 1, 9: 1}
    membership = {t: 1 for t in class1} | {t: 2 for t in class2}
    demand = class1 | class2
    return initial_state(2, membership), demand
