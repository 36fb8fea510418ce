"""Downlink SINR, power allocation and ergodic capacity.

Two allocation rules share the same SINR model

    gamma_i = P_i G_i / (G_i * sum_{j != i} P_j alpha_ij + sigma^2)

* conventional: every terminal gets ``P_i = sigma^2 * target / G_i``;
* BBMA: every symbol class gets the power its weakest member needs,
  ``P_c = sigma^2 * target / min_{n in c} G_n``.

In per-class mode the interferers of terminal ``i`` are the other classes
and ``alpha`` is indexed by (terminal, class), e.g. the measured beam
leakage ``|w_c^H a_i|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .scheduler import ClassState

PER_TERMINAL = "per_terminal"
PER_CLASS = "per_class"

__all__ = [
    "PowerAllocation",
    "OrthogonalityModel",
    "SinrReport",
    "sinr",
    "conventional_alloc",
    "bbma_alloc",
    "feasibility",
    "ergodic_capacity",
    "bpsk_ber",
]


@dataclass(frozen=True)
class PowerAllocation:
    mode: str
    powers: Mapping[int, float]
    p_max_w: float

    def __post_init__(self) -> None:
        if self.mode not in (PER_TERMINAL, PER_CLASS):
            raise ValueError(f"unknown allocation mode {self.mode!r}")
        if any(p < 0 for p in self.powers.values()):
            raise ValueError("powers must be non-negative")

    @property
    def total_w(self) -> float:
        return math.fsum(self.powers.values())

    @property
    def feasible(self) -> bool:
        return self.total_w <= self.p_max_w


@dataclass(frozen=True)
class OrthogonalityModel:
    """Cross-interference factors.

    Either a constant applied to every interferer, or an explicit matrix
    whose row order follows the terminal order of the gains mapping and
    whose columns are terminals (per-terminal mode) or classes ``1..M``
    (per-class mode).
    """

    constant: float = 0.0
    matrix: np.ndarray | None = field(default=None, compare=False)

    def factors(self, n_rows: int, n_cols: int) -> np.ndarray:
        if self.matrix is None:
            return np.full((n_rows, n_cols), float(self.constant))
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (n_rows, n_cols):
            raise ValueError(f"alpha matrix shape {m.shape}, expected {(n_rows, n_cols)}")
        return m


@dataclass(frozen=True)
class SinrReport:
    sinr_linear: Mapping[int, float]
    target_linear: float = 0.0

    @property
    def all_meet_target(self) -> bool:
        return all(g >= self.target_linear for g in self.sinr_linear.values())

    def values(self) -> np.ndarray:
        return np.fromiter(self.sinr_linear.values(), dtype=float, count=len(self.sinr_linear))


def sinr(
    allocation: PowerAllocation,
    gains: Mapping[int, float],
    noise_w: float,
    alpha: OrthogonalityModel | float = 0.0,
    classes: ClassState | None = None,
    target_linear: float = 0.0,
) -> SinrReport:
    """Evaluate the SINR of every terminal in ``gains``.

    ``classes`` is required in per-class mode to find each terminal's own
    class power and the interfering classes.
    """
    if not isinstance(alpha, OrthogonalityModel):
        alpha = OrthogonalityModel(constant=float(alpha))
    ids = list(gains)
    G = np.array([gains[i] for i in ids], dtype=float)

    if allocation.mode == PER_TERMINAL:
        missing = [i for i in ids if i not in allocation.powers]
        if missing:
            raise KeyError(f"no power for terminals {missing}")
        P = np.array([allocation.powers[i] for i in ids], dtype=float)
        a = alpha.factors(len(ids), len(ids)).copy()
        np.fill_diagonal(a, 0.0)
        own = P
        interference = a @ P
    else:
        if classes is None:
            raise ValueError("per-class SINR needs the class state")
        M = classes.M
        Pc = np.array([allocation.powers.get(c, 0.0) for c in range(1, M + 1)])
        cls = np.array([classes.membership[i] for i in ids]) - 1
        a = alpha.factors(len(ids), M).copy()
        a[np.arange(len(ids)), cls] = 0.0
        own = Pc[cls]
        interference = a @ Pc

    gamma = own * G / (G * interference + noise_w)
    return SinrReport(dict(zip(ids, gamma.tolist())), target_linear)


def conventional_alloc(
    gains: Mapping[int, float],
    target_linear: float,
    noise_w: float,
    p_max_w: float,
) -> PowerAllocation:
    """Per-terminal power reaching the target on orthogonal channels."""
    if any(g <= 0 for g in gains.values()):
        raise ValueError("gains must be positive")
    powers = {i: noise_w * target_linear / g for i, g in gains.items()}
    return PowerAllocation(PER_TERMINAL, powers, p_max_w)


def bbma_alloc(
    classes: ClassState,
    gains: Mapping[int, float],
    target_linear: float,
    noise_w: float,
    p_max_w: float,
) -> PowerAllocation:
    """One power per symbol class, set by the class member with the lowest gain."""
    worst: dict[int, float] = {}
    for t, c in classes.membership.items():
        g = gains[t]
        if g <= 0:
            raise ValueError("gains must be positive")
        worst[c] = min(worst.get(c, math.inf), g)
    powers = {
        c: (noise_w * target_linear / worst[c] if c in worst else 0.0)
        for c in range(1, classes.M + 1)
    }
    return PowerAllocation(PER_CLASS, powers, p_max_w)


def feasibility(
    allocation: PowerAllocation,
    sinr_trials: Sequence[SinrReport],
    target_linear: float,
) -> bool:
    """Budget holds and every terminal's Monte Carlo mean SINR reaches the target."""
    if not sinr_trials:
        raise ValueError("need at least one trial")
    if not allocation.feasible:
        return False
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for report in sinr_trials:
        for t, g in report.sinr_linear.items():
            sums[t] = sums.get(t, 0.0) + g
            counts[t] = counts.get(t, 0) + 1
    return all(sums[t] / counts[t] >= target_linear for t in sums)


def ergodic_capacity(trials: Sequence[SinrReport]) -> float:
    """Monte Carlo mean of the sum rate ``sum_i log2(1 + gamma_i)`` in b/s/Hz."""
    if not trials:
        raise ValueError("need at least one trial")
    return float(np.mean([np.sum(np.log2(1.0 + r.values())) for r in trials]))


def bpsk_ber(sinr_linear):
    """Antipodal bit error probability ``Q(sqrt(2 * sinr))``."""
    return ndtr(-np.sqrt(2.0 * np.asarray(sinr_linear, dtype=float)))
