"""Null-steering weights for symbol classes.

For a steering matrix ``A`` (s x N, one column per terminal) and a 0/1
selector row ``D`` the weights satisfy ``w^H = D (A^H A)^{-1} A^H`` so that
``w^H a_n = 1`` for selected terminals and ``0`` for the rest.

Two solver paths are provided:

``explicit_inverse``
    forms ``(A^H A)^{-1}`` with a general inverse. It loses roughly
    ``cond(A^H A) * eps`` of accuracy and is kept on purpose to reproduce the
    numerical degradation seen with many terminals.
``orthogonal_factorization``
    uses the QR factorisation ``A = QR`` and two triangular solves; error
    scales with ``cond(A)`` instead of its square.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .channel import ArrayGeometry, Terminal, steering_vectors

EXPLICIT_INVERSE = "explicit_inverse"
ORTHOGONAL_FACTORIZATION = "orthogonal_factorization"
SOLVERS = (EXPLICIT_INVERSE, ORTHOGONAL_FACTORIZATION)

DEFAULT_CONDITION_CEILING = 1e12

__all__ = [
    "SOLVERS",
    "EXPLICIT_INVERSE",
    "ORTHOGONAL_FACTORIZATION",
    "RankError",
    "IllConditionedError",
    "NullDiagnostics",
    "build_steering_matrix",
    "gram_condition",
    "compute_weights",
    "response",
    "diagnostics",
    "check_partition",
]


class RankError(ValueError):
    """More terminals than antennas: the null constraints cannot all hold."""


class IllConditionedError(ArithmeticError):
    """``cond(A^H A)`` exceeds the configured ceiling."""

    def __init__(self, condition: float, ceiling: float) -> None:
        super().__init__(f"cond(A^H A) = {condition:.3e} exceeds ceiling {ceiling:.3e}")
        self.condition = condition
        self.ceiling = ceiling


@dataclass(frozen=True)
class NullDiagnostics:
    condition_number: float
    max_in_class_error: float
    max_null_residual: float


def build_steering_matrix(array: ArrayGeometry, terminals: Sequence[Terminal]) -> np.ndarray:
    """Stack steering vectors column-wise in the order of ``terminals``."""
    if len(terminals) < 1:
        raise ValueError("need at least one terminal")
    directions = np.array([t.direction for t in terminals])
    return steering_vectors(array, directions)


def gram_condition(A: np.ndarray) -> float:
    """2-norm condition number of ``A^H A`` from the singular values of ``A``.

    Returns ``inf`` for an exactly singular matrix.
    """
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] == 0.0:
        return float("inf")
    return float((sv[0] / sv[-1]) ** 2)


def _selectors(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return D[None, :] if D.ndim == 1 else D


def _solve_explicit(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # rhs: (k, N) rows; returns rows of w^H, shape (k, s)
    gram_inv = np.linalg.inv(A.conj().T @ A)
    return rhs @ gram_inv @ A.conj().T


def _solve_factorized(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # w^H = D R^{-1} Q^H  <=>  w = Q R^{-H} D^H
    Q, R = np.linalg.qr(A)
    z = sla.solve_triangular(R, rhs.conj().T.astype(complex), trans="C", lower=False)
    return (Q @ z).conj().T


def compute_weights(
    A: np.ndarray,
    D,
    solver: str = ORTHOGONAL_FACTORIZATION,
    condition_ceiling: float = DEFAULT_CONDITION_CEILING,
    refine: bool = False,
    condition: float | None = None,
) -> np.ndarray:
    """Null-steering weights for one or several selector rows.

    Parameters
    ----------
    A : ndarray, shape (s, N)
        Steering matrix.
    D : array_like, shape (N,) or (k, N)
        Selector row(s); a 2-D input computes k weight vectors at once.
    solver : str
        ``"explicit_inverse"`` or ``"orthogonal_factorization"``.
    condition_ceiling : float
        Largest accepted ``cond(A^H A)``.
    refine : bool
        Apply one step of iterative refinement on the constraint residual.
    condition : float, optional
        Precomputed ``cond(A^H A)``; computed from ``A`` when omitted.

    Returns
    -------
    ndarray
        Weight vector of shape (s,) for a 1-D selector, else (s, k).
    """
    A = np.asarray(A)
    s, n = A.shape
    if n > s:
        raise RankError(f"{n} terminals exceed {s} antennas")
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    rows = _selectors(D)
    if rows.shape[1] != n:
        raise ValueError(f"selector length {rows.shape[1]} != {n} terminals")

    cond = gram_condition(A) if condition is None else condition
    if not cond <= condition_ceiling:
        raise IllConditionedError(cond, condition_ceiling)

    solve = _solve_explicit if solver == EXPLICIT_INVERSE else _solve_factorized
    wh = solve(A, rows)
    if refine:
        wh = wh + solve(A, rows - wh @ A)

    w = wh.conj().T
    return w[:, 0] if np.ndim(D) == 1 else w


def response(w: np.ndarray, a: np.ndarray) -> complex:
    """Beam response ``w^H a``."""
    w = np.asarray(w)
    a = np.asarray(a)
    if w.shape != a.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {a.shape}")
    return complex(np.vdot(w, a))


def check_partition(selectors: Sequence) -> None:
    """Raise unless the selector rows form a 0/1 partition of the terminals."""
    rows = np.asarray(selectors, dtype=float)
    if rows.ndim != 2:
        raise ValueError("selectors must be a list of rows")
    if not np.isin(rows, (0.0, 1.0)).all():
        raise ValueError("selector entries must be 0 or 1")
    if not np.array_equal(rows.sum(axis=0), np.ones(rows.shape[1])):
        raise ValueError("every terminal must belong to exactly one class")


def diagnostics(
    A: np.ndarray,
    weights: Sequence[np.ndarray],
    selectors: Sequence,
    condition: float | None = None,
) -> NullDiagnostics:
    """Condition number and worst constraint violations of a weight set."""
    if len(weights) != len(selectors):
        raise ValueError("one selector per weight vector expected")
    in_class = 0.0
    null = 0.0
    for w, d in zip(weights, selectors):
        d = np.asarray(d, dtype=bool)
        r = np.asarray(w).conj() @ A
        if d.any():
            in_class = max(in_class, float(np.max(np.abs(r[d] - 1.0))))
        if (~d).any():
            null = max(null, float(np.max(np.abs(r[~d]))))
    cond = gram_condition(A) if condition is None else condition
    return NullDiagnostics(cond, in_class, null)
