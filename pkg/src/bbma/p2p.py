"""Point-to-point bit-parallel link.

One word of ``N_bits`` bits is sent per symbol-time to a receiver with one
antenna per bit. The transmitter forms two null-steering beams: the beam for
the 0-bits class carries ``-sqrt(Es)``, the beam for the 1-bits class
carries ``+sqrt(Es)``. Antenna k sees its own class beam with unit gain
and the other beam nulled; the bit is the sign of the real part.

Because ``w^H = D (A^H A)^{-1} A^H`` is linear in the selector row ``D``,
the responses of every class beam at every receive antenna follow from the
single N x N matrix ``(A^H A)^{-1} A^H A`` computed once per geometry with
the chosen solver. Monte Carlo runs use that matrix; ``simulate_word``
walks the full per-word weight computation and is the reference for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .channel import ArrayGeometry, Terminal
from .null_steering import (
    DEFAULT_CONDITION_CEILING,
    ORTHOGONAL_FACTORIZATION,
    build_steering_matrix,
    compute_weights,
    gram_condition,
)

__all__ = [
    "BitClassSplit",
    "P2PGeometry",
    "WordResult",
    "parse_word",
    "split_word",
    "grid_geometry",
    "response_matrix",
    "simulate_word",
    "simulate_bits",
    "mpsk_ser",
    "mpsk_monte_carlo",
    "word_error_curve",
]


def parse_word(word) -> tuple[int, ...]:
    """Accept ``"11010100"`` or a sequence of 0/1 ints."""
    bits = tuple(int(b) for b in word)
    if not bits:
        raise ValueError("word must contain at least one bit")
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"not a bit string: {word!r}")
    return bits


@dataclass(frozen=True)
class BitClassSplit:
    """1-based bit positions holding 0 (class 1) and 1 (class 2)."""

    class1_indices: frozenset[int]
    class2_indices: frozenset[int]
    n_bits: int

    def word(self) -> str:
        return "".join("1" if k in self.class2_indices else "0" for k in range(1, self.n_bits + 1))

    def selectors(self) -> np.ndarray:
        """Selector rows, shape (2, n_bits): row 0 for class 1, row 1 for class 2."""
        rows = np.zeros((2, self.n_bits))
        rows[0, [k - 1 for k in self.class1_indices]] = 1.0
        rows[1, [k - 1 for k in self.class2_indices]] = 1.0
        return rows


def split_word(word) -> BitClassSplit:
    bits = parse_word(word)
    zeros = frozenset(k for k, b in enumerate(bits, start=1) if b == 0)
    ones = frozenset(k for k, b in enumerate(bits, start=1) if b == 1)
    return BitClassSplit(zeros, ones, len(bits))


@dataclass(frozen=True)
class P2PGeometry:
    tx_array: ArrayGeometry
    rx_positions: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        if self.tx_array.size < len(self.rx_positions):
            raise ValueError(
                f"{len(self.rx_positions)} receive antennas need at least as many "
                f"transmit antennas, array has {self.tx_array.size}"
            )

    @property
    def n_bits(self) -> int:
        return len(self.rx_positions)

    def steering_matrix(self) -> np.ndarray:
        rx = [Terminal(k, p) for k, p in enumerate(self.rx_positions)]
        return build_steering_matrix(self.tx_array, rx)


def grid_geometry(n_bits: int, tx_array: ArrayGeometry, range_m: float = 100.0) -> P2PGeometry:
    """Receive antennas on distinct beams of the transmit array's DFT grid.

    Direction cosines are ``(kx / (nx d), ky / (ny d))`` with ``d`` the
    element spacing in wavelengths, so the steering columns are mutually
    orthogonal. Antennas fill the grid outward from broadside, keeping
    visible directions only.
    """
    if n_bits < 1:
        raise ValueError("n_bits must be positive")
    nx, ny, d = tx_array.nx, tx_array.ny, tx_array.spacing_wavelengths
    cands = []
    for kx in range(-(nx // 2), nx - nx // 2):
        for ky in range(-(ny // 2), ny - ny // 2):
            ux, uy = kx / (nx * d), ky / (ny * d)
            if ux * ux + uy * uy < 1.0:
                cands.append((ux * ux + uy * uy, kx, ky, ux, uy))
    cands.sort()
    if len(cands) < n_bits:
        raise ValueError(f"array has only {len(cands)} orthogonal visible beams, need {n_bits}")
    positions = []
    for _, _, _, ux, uy in cands[:n_bits]:
        uz = -math.sqrt(1.0 - ux * ux - uy * uy)
        positions.append((range_m * ux, range_m * uy, range_m * uz))
    return P2PGeometry(tx_array, tuple(positions))


def response_matrix(
    A: np.ndarray,
    solver: str = ORTHOGONAL_FACTORIZATION,
    condition_ceiling: float = DEFAULT_CONDITION_CEILING,
) -> np.ndarray:
    """``R[n, k]`` = response at antenna k of the beam that selects only antenna n.

    A class beam's response row is the selector row times ``R``.
    """
    n = A.shape[1]
    W = compute_weights(A, np.eye(n), solver, condition_ceiling)
    return W.conj().T @ A


@dataclass(frozen=True)
class WordResult:
    detected: tuple[int, ...]
    bit_errors: int
    word_error: bool


def _detect(rng: np.random.Generator, resp: np.ndarray, bits: np.ndarray, es: float, n0: float):
    # resp: (T, N) class-combined complex gains; bits: (T, N) 0/1
    amp = math.sqrt(es)
    y = amp * resp
    if n0 > 0:
        sd = math.sqrt(n0 / 2.0)
        y = y + sd * (rng.standard_normal(bits.shape) + 1j * rng.standard_normal(bits.shape))
    return (y.real > 0).astype(np.int8)


def simulate_word(
    rng: np.random.Generator,
    word,
    geom: P2PGeometry,
    es_joules: float,
    n0: float,
    solver: str = ORTHOGONAL_FACTORIZATION,
    condition_ceiling: float = DEFAULT_CONDITION_CEILING,
) -> WordResult:
    """Send one word through the two-beam link and detect it."""
    split = split_word(word)
    if split.n_bits != geom.n_bits:
        raise ValueError(f"word has {split.n_bits} bits, geometry has {geom.n_bits} antennas")
    A = geom.steering_matrix()
    sel = split.selectors()
    active = [c for c in range(2) if sel[c].any()]
    W = compute_weights(A, sel[active], solver, condition_ceiling)
    symbols = np.array([-1.0, 1.0])[active]
    # received amplitude at each antenna per unit sqrt(Es)
    resp = (symbols[:, None] * (W.conj().T @ A)).sum(axis=0)
    bits = np.array(parse_word(word), dtype=np.int8)
    detected = _detect(rng, resp[None, :], bits[None, :], es_joules, n0)[0]
    errors = int(np.count_nonzero(detected != bits))
    return WordResult(tuple(int(b) for b in detected), errors, errors > 0)


def simulate_bits(
    rng: np.random.Generator,
    R: np.ndarray,
    n_words: int,
    es_joules: float,
    n0: float,
) -> tuple[int, int]:
    """Random words through a precomputed response matrix.

    Returns ``(bit_errors, word_errors)``.
    """
    n = R.shape[0]
    bits = rng.integers(0, 2, size=(n_words, n), dtype=np.int8)
    amplitude = 2.0 * bits - 1.0
    resp = amplitude @ R
    detected = _detect(rng, resp, bits, es_joules, n0)
    wrong = detected != bits
    return int(wrong.sum()), int(wrong.any(axis=1).sum())


def mpsk_ser(M: int, es_n0: float) -> float:
    """M-PSK symbol error probability in AWGN.

    Exact for M = 2; the usual nearest-neighbour bound
    ``2 Q(sqrt(2 Es/N0) sin(pi/M))`` for M >= 4.
    """
    if M < 2 or M & (M - 1):
        raise ValueError(f"M must be a power of two >= 2, got {M}")
    if es_n0 < 0:
        raise ValueError("es_n0 must be non-negative")
    if M == 2:
        return float(ndtr(-math.sqrt(2.0 * es_n0)))
    return float(2.0 * ndtr(-math.sqrt(2.0 * es_n0) * math.sin(math.pi / M)))


def mpsk_monte_carlo(rng: np.random.Generator, M: int, es_n0: float, n_symbols: int) -> tuple[int, int]:
    """Simulated M-PSK symbol errors with nearest-phase detection.

    Returns ``(symbol_errors, n_symbols)``.
    """
    k = rng.integers(0, M, size=n_symbols)
    x = np.exp(2j * np.pi * k / M)
    sd = math.sqrt(1.0 / (2.0 * es_n0))
    y = x + sd * (rng.standard_normal(n_symbols) + 1j * rng.standard_normal(n_symbols))
    k_hat = np.mod(np.rint(np.angle(y) * M / (2 * np.pi)), M).astype(int)
    return int(np.count_nonzero(k_hat != k)), n_symbols


def word_error_curve(
    seed,
    n_bits_list: Sequence[int],
    es_joules: float,
    n0: float,
    trials: int,
    tx_array: ArrayGeometry = ArrayGeometry(16, 16),
    range_m: float = 100.0,
    solver: str = ORTHOGONAL_FACTORIZATION,
    chunk_words: int = 100_000,
) -> list[dict]:
    """Per-bit and per-word error rates against the number of parallel bits.

    ``trials`` words are sent for every entry of ``n_bits_list`` in chunks of
    ``chunk_words``. ``seed`` is either an int or a callable
    ``seed(n_bits, chunk_index) -> int``; chunk streams are independent of
    each other, so results do not depend on evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if callable(seed):
        seed_for = seed
    else:
        def seed_for(n, j):
            return np.random.SeedSequence((int(seed), n, j))

    rows = []
    for n in n_bits_list:
        geom = grid_geometry(n, tx_array, range_m)
        A = geom.steering_matrix()
        W = compute_weights(A, np.eye(n), solver)
        R = W.conj().T @ A
        bit_err = word_err = 0
        done = chunk = 0
        while done < trials:
            m = min(chunk_words, trials - done)
            b, w = simulate_bits(np.random.default_rng(seed_for(n, chunk)), R, m, es_joules, n0)
            bit_err += b
            word_err += w
            done += m
            chunk += 1
        n_sim = trials * n
        p = bit_err / n_sim
        # mean over uniform random words of Es * sum_c ||w_c||^2
        gram = (W.conj().T @ W).real
        radiated = es_joules * (np.trace(gram) + 0.5 * (gram.sum() - np.trace(gram)))
        rows.append(
            {
                "n_bits": n,
                "spectral_efficiency": float(n),
                "words": trials,
                "bits": n_sim,
                "bit_errors": bit_err,
                "per_bit_error": p,
                "per_bit_stderr": math.sqrt(p * (1 - p) / n_sim),
                "word_error": word_err / trials,
                "condition_number": gram_condition(A),
                "radiated_energy_j": float(radiated),
            }
        )
    return rows
