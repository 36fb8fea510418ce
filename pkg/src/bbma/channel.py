"""Cell geometry, terminal drops, large-scale gains, thermal noise and
planar-array steering vectors.

Geometry: the access point sits at the origin with a horizontal planar
array facing down; terminals live on the ground plane ``z = -ap_height_m``
inside a square cell centred under the AP. All phases are far-field plane
wave phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0  # kT at 290 K

__all__ = [
    "CellConfig",
    "Terminal",
    "ArrayGeometry",
    "drop_terminals",
    "drop_clustered_terminals",
    "mean_path_gain",
    "mean_channel_gain",
    "shadowing_mean_factor",
    "channel_gain",
    "noise_power",
    "steering_vector",
    "steering_vectors",
    "db2lin",
    "lin2db",
]


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class CellConfig:
    """Radio and geometry parameters of a single square cell.

    Defaults follow the simulated scenario: 1 km x 1 km cell, 10 MHz,
    noise figure 10 dB, 15 dB target SINR and 8 dB log-normal shadowing.
    The log-distance path loss (38.5 dB at 1 m, exponent 2.717) gives
    120 dB at 1 km.
    """

    side_m: float = 1000.0
    carrier_hz: float = 2.0e9
    bandwidth_hz: float = 10.0e6
    pathloss_ref_db: float = 38.5
    pathloss_exponent: float = 2.717
    shadowing_sigma_db: float = 8.0
    noise_figure_db: float = 10.0
    target_sinr_db: float = 15.0
    min_distance_m: float = 10.0
    ap_height_m: float = 25.0
    p_max_dbm: float = 43.0

    def __post_init__(self) -> None:
        checks = {
            "side_m": self.side_m > 0,
            "carrier_hz": self.carrier_hz > 0,
            "bandwidth_hz": self.bandwidth_hz > 0,
            "min_distance_m": self.min_distance_m > 0,
            "pathloss_exponent": self.pathloss_exponent >= 2,
            "shadowing_sigma_db": self.shadowing_sigma_db >= 0,
            "ap_height_m": self.ap_height_m >= 0,
        }
        for key, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {key}: {getattr(self, key)!r}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def target_sinr(self) -> float:
        return float(db2lin(self.target_sinr_db))

    @property
    def p_max_w(self) -> float:
        return float(db2lin(self.p_max_dbm - 30.0))


@dataclass(frozen=True)
class Terminal:
    id: int
    position: tuple[float, float, float]
    shadowing_db: float = 0.0

    @property
    def distance(self) -> float:
        return math.sqrt(sum(c * c for c in self.position))

    @property
    def direction(self) -> np.ndarray:
        p = np.asarray(self.position, dtype=float)
        return p / np.linalg.norm(p)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array of ``nx`` by ``ny`` elements in the xy-plane."""

    nx: int = 64
    ny: int = 64
    spacing_wavelengths: float = 0.5

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"array needs at least one element per axis, got {self.nx}x{self.ny}")
        if self.spacing_wavelengths <= 0:
            raise ValueError("spacing_wavelengths must be positive")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def element_offsets(self) -> np.ndarray:
        """Element positions in wavelengths relative to element 0, shape (s, 3).

        Element order is x-major: index ``ix * ny + iy``.
        """
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        offsets = np.zeros((self.size, 3))
        offsets[:, 0] = ix.ravel() * self.spacing_wavelengths
        offsets[:, 1] = iy.ravel() * self.spacing_wavelengths
        return offsets


def _sample_positions(rng: np.random.Generator, n: int, cell: CellConfig) -> np.ndarray:
    half = cell.side_m / 2.0
    out = np.empty((0, 3))
    while len(out) < n:
        xy = rng.uniform(-half, half, size=(n - len(out), 2))
        pos = np.column_stack([xy, np.full(len(xy), -cell.ap_height_m)])
        keep = np.linalg.norm(pos, axis=1) >= cell.min_distance_m
        out = np.vstack([out, pos[keep]])
    return out


def _make_terminals(positions: np.ndarray, shadowing: np.ndarray) -> list[Terminal]:
    return [
        Terminal(i, (float(p[0]), float(p[1]), float(p[2])), float(s))
        for i, (p, s) in enumerate(zip(positions, shadowing))
    ]


def drop_terminals(rng: np.random.Generator, n: int, cell: CellConfig) -> list[Terminal]:
    """Drop ``n`` terminals uniformly over the cell, outside the min-distance disk.

    Shadowing values are i.i.d. normal with the cell's standard deviation (dB).
    """
    if n < 1:
        raise ValueError(f"need at least one terminal, got n={n}")
    positions = _sample_positions(rng, n, cell)
    shadowing = rng.normal(0.0, cell.shadowing_sigma_db, size=n)
    return _make_terminals(positions, shadowing)


def drop_clustered_terminals(
    rng: np.random.Generator,
    n: int,
    n_groups: int,
    cell: CellConfig,
    radius_m: float = 2.0,
) -> list[Terminal]:
    """Drop ``n`` terminals in ``n_groups`` tight groups of radius ``radius_m``.

    Group centres are uniform over the cell (kept one radius inside the
    border); members are assigned round-robin so groups have equal size
    up to one. Used to provoke ill-conditioned steering matrices.
    """
    if n < 1 or n_groups < 1:
        raise ValueError("n and n_groups must be positive")
    inner = CellConfig(
        side_m=cell.side_m - 2 * radius_m,
        min_distance_m=cell.min_distance_m + radius_m,
        ap_height_m=cell.ap_height_m,
    )
    centres = _sample_positions(rng, n_groups, inner)
    group = np.arange(n) % n_groups
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    r = radius_m * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    positions = centres[group].copy()
    positions[:, 0] += r * np.cos(angle)
    positions[:, 1] += r * np.sin(angle)
    shadowing = rng.normal(0.0, cell.shadowing_sigma_db, size=n)
    return _make_terminals(positions, shadowing)


def mean_path_gain(cell: CellConfig, distance_m):
    """Log-distance path gain (linear). Accepts scalars or arrays."""
    d = np.asarray(distance_m, dtype=float)
    # small tolerance: positions are stored as floats
    if np.any(d < cell.min_distance_m * (1 - 1e-12)):
        raise ValueError(f"distance below minimum {cell.min_distance_m} m: {np.min(d)}")
    gain = db2lin(-(cell.pathloss_ref_db + 10.0 * cell.pathloss_exponent * np.log10(d)))
    return float(gain) if gain.ndim == 0 else gain


def shadowing_mean_factor(cell: CellConfig) -> float:
    """E[10^(X/10)] for X ~ N(0, sigma^2) in dB."""
    s = cell.shadowing_sigma_db * math.log(10.0) / 10.0
    return math.exp(s * s / 2.0)


def mean_channel_gain(cell: CellConfig, distance_m):
    """Expected channel gain at a distance, averaged over shadowing.

    The log-normal mean sits above the median path gain by
    ``shadowing_mean_factor``; with zero shadowing both coincide.
    """
    return mean_path_gain(cell, distance_m) * shadowing_mean_factor(cell)


def channel_gain(cell: CellConfig, terminal: Terminal) -> float:
    """Path gain times the terminal's frozen shadowing draw."""
    return mean_path_gain(cell, terminal.distance) * 10.0 ** (terminal.shadowing_db / 10.0)


def noise_power(cell: CellConfig) -> float:
    """Thermal noise power over the system bandwidth including noise figure, in watts."""
    dbm = THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(cell.bandwidth_hz) + cell.noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


def steering_vector(array: ArrayGeometry, direction: Sequence[float]) -> np.ndarray:
    """Far-field steering vector toward a unit ``direction``.

    Element x has phase ``2*pi * (r_x . u)`` with ``r_x`` in wavelengths, so
    element 0 is always exactly 1.
    """
    u = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return steering_vectors(array, u[None, :])[:, 0]


def steering_vectors(array: ArrayGeometry, directions: np.ndarray) -> np.ndarray:
    """Steering vectors for a batch of unit directions, shape (s, N)."""
    u = np.atleast_2d(np.asarray(directions, dtype=float))
    phase = 2.0 * np.pi * (array.element_offsets() @ u.T)
    return np.exp(1j * phase)
