"""Monte Carlo runs behind the three figures.

* ``fig3_power_vs_n``: required downlink power, per-terminal vs per-class.
* ``fig4_ber_vs_n``: BER caused by imperfect nulls, uniform sweep plus a
  clustered stress set, for both weight solvers.
* ``fig5_error_vs_spectral_eff``: point-to-point bit error vs bits per
  symbol-time, next to the M-PSK reference.

Every trial draws from its own generator seeded by
``derive_trial_seed(master_seed, tag, index)``; trials can therefore run in
any order or on any number of workers and give the same numbers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .channel import (
    ArrayGeometry,
    CellConfig,
    Terminal,
    channel_gain,
    drop_clustered_terminals,
    drop_terminals,
    mean_channel_gain,
    noise_power,
)
from .null_steering import (
    EXPLICIT_INVERSE,
    ORTHOGONAL_FACTORIZATION,
    SOLVERS,
    IllConditionedError,
    RankError,
    build_steering_matrix,
    compute_weights,
    diagnostics,
    gram_condition,
)
from .p2p import mpsk_ser, word_error_curve
from .power import OrthogonalityModel, bbma_alloc, bpsk_ber, conventional_alloc, sinr
from .scheduler import ClassState, apply, dynamic_assign, initial_state

PROFILES = {
    "paper": ArrayGeometry(64, 64, 0.5),
    "desk": ArrayGeometry(16, 16, 0.5),
}
GAIN_MODES = ("mean", "shadowed")

__all__ = [
    "PROFILES",
    "Fig3Config",
    "Fig4Config",
    "Fig5Config",
    "ExperimentConfig",
    "TrialRecord",
    "derive_trial_seed",
    "worker_count",
    "allocation_gains",
    "random_classes",
    "evaluate_drop",
    "fig3_power_vs_n",
    "fig4_ber_vs_n",
    "fig4_stress_set",
    "stress_statistics",
    "fig5_error_vs_spectral_eff",
    "write_csv",
    "to_csv_text",
]


@dataclass
class Fig3Config:
    n_values: list[int] = field(default_factory=lambda: [10, 25, 50, 100, 150, 200, 250, 300])
    trials: int = 50


@dataclass
class Fig4Config:
    n_values: list[int] = field(default_factory=lambda: [10, 25, 50, 100, 150, 200, 250, 300])
    trials: int = 50
    # no ceiling by default: the point is to watch the solvers degrade
    condition_ceiling: float = math.inf
    stress_n: int = 50
    stress_drops: int = 30
    stress_groups_min: int = 2
    stress_groups_max: int = 16
    cluster_radius_m: float = 2.0


@dataclass
class Fig5Config:
    n_bits_values: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    bits_per_point: int = 1_000_000
    es_joules: float = 1.0
    es_n0: float = 10.0
    rx_range_m: float = 100.0
    chunk_words: int = 100_000


@dataclass
class ExperimentConfig:
    seed: int = 1
    profile: str = "desk"
    cell: CellConfig = field(default_factory=CellConfig)
    array: ArrayGeometry = field(default_factory=lambda: PROFILES["desk"])
    solver: str = ORTHOGONAL_FACTORIZATION
    condition_ceiling: float = 1e12
    refine: bool = False
    allocation_gain: str = "mean"
    check_n: int = 100
    check_seeds: int = 30
    fig3: Fig3Config = field(default_factory=Fig3Config)
    fig4: Fig4Config = field(default_factory=Fig4Config)
    fig5: Fig5Config = field(default_factory=Fig5Config)

    def __post_init__(self) -> None:
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {sorted(PROFILES)}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.allocation_gain not in GAIN_MODES:
            raise ValueError(f"allocation_gain must be one of {GAIN_MODES}")
        for name, sub in (("fig3", self.fig3), ("fig4", self.fig4)):
            if sub.trials < 1 or not sub.n_values or min(sub.n_values) < 1:
                raise ValueError(f"{name}: trials >= 1 and a non-empty list of positive N required")
        if self.fig5.bits_per_point < 1 or not self.fig5.n_bits_values:
            raise ValueError("fig5: bits_per_point >= 1 and non-empty n_bits_values required")
        if not 1 <= self.fig4.stress_groups_min <= self.fig4.stress_groups_max:
            raise ValueError("fig4: need 1 <= stress_groups_min <= stress_groups_max")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrialRecord:
    experiment: str
    trial: int
    seed: int
    n: int
    drop_kind: str = "uniform"
    solver: str = ""
    conventional_total_w: float = math.nan
    bbma_total_w: float = math.nan
    condition_number: float = math.nan
    max_in_class_error: float = math.nan
    max_null_residual: float = math.nan
    ber: float = math.nan
    capacity_bps_hz: float = math.nan
    capacity_ideal_bps_hz: float = math.nan
    flag: str = ""


def derive_trial_seed(master_seed: int, tag: str, index: int) -> int:
    """64-bit seed from a keyed hash of ``(master_seed, tag, index)``."""
    msg = f"{int(master_seed)}\x1f{tag}\x1f{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def worker_count() -> int:
    """Worker threads from ``BBMA_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("BBMA_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("BBMA_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _run_trials(fn: Callable[[int], list], count: int) -> list:
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        chunks = list(pool.map(fn, range(count)))
    return [rec for chunk in chunks for rec in chunk]


def allocation_gains(cell: CellConfig, terminals: Sequence[Terminal], mode: str = "mean") -> dict[int, float]:
    """Gains the transmitter allocates power against.

    ``mean`` uses the expected gain over shadowing at each terminal's
    distance; ``shadowed`` uses the terminal's frozen shadowing draw.
    """
    if mode == "mean":
        return {t.id: float(mean_channel_gain(cell, t.distance)) for t in terminals}
    if mode == "shadowed":
        return {t.id: channel_gain(cell, t) for t in terminals}
    raise ValueError(f"unknown gain mode {mode!r}")


def random_classes(rng: np.random.Generator, ids: Sequence[int], M: int = 2) -> ClassState:
    """One symbol-time of the scheduler: random previous classes, random demands."""
    prev = initial_state(M, {i: int(c) for i, c in zip(ids, rng.integers(1, M + 1, len(ids)))})
    demand = {i: int(s) for i, s in zip(ids, rng.integers(1, M + 1, len(ids)))}
    return apply(prev, dynamic_assign(prev, demand))


def _selectors(classes: ClassState, ids: Sequence[int]) -> np.ndarray:
    rows = np.zeros((classes.M, len(ids)))
    for k, t in enumerate(ids):
        rows[classes.membership[t] - 1, k] = 1.0
    return rows


def evaluate_drop(
    cell: CellConfig,
    array: ArrayGeometry,
    terminals: Sequence[Terminal],
    classes: ClassState,
    gains: dict[int, float],
    solver: str,
    condition_ceiling: float,
    A: np.ndarray | None = None,
    condition: float | None = None,
    refine: bool = False,
) -> dict:
    """Null-steering weights, leakage-wired SINR, BER and capacity for one drop.

    Returns a dict with keys ``condition_number``, ``max_in_class_error``,
    ``max_null_residual``, ``ber``, ``capacity_bps_hz`` (measured leakage),
    ``capacity_ideal_bps_hz`` (perfect nulls) and ``flag``.
    """
    ids = [t.id for t in terminals]
    if A is None:
        A = build_steering_matrix(array, terminals)
    out = {"condition_number": math.nan, "flag": ""}
    if A.shape[1] > A.shape[0]:
        out["flag"] = "rank"
        return out
    cond = gram_condition(A) if condition is None else condition
    out["condition_number"] = cond
    noise = noise_power(cell)
    target = cell.target_sinr
    alloc = bbma_alloc(classes, gains, target, noise, cell.p_max_w)

    rows = _selectors(classes, ids)
    active = [c for c in range(classes.M) if rows[c].any()]
    try:
        W = compute_weights(A, rows[active], solver, condition_ceiling, refine=refine, condition=cond)
    except IllConditionedError:
        out["flag"] = "ceiling"
        return out
    except RankError:
        out["flag"] = "rank"
        return out

    diag = diagnostics(A, list(W.T), list(rows[active]), condition=cond)
    leakage = np.zeros((len(ids), classes.M))
    leakage[:, active] = (np.abs(W.conj().T @ A) ** 2).T
    wired = sinr(alloc, gains, noise, OrthogonalityModel(matrix=leakage), classes, target)
    ideal = sinr(alloc, gains, noise, 0.0, classes, target)
    g = wired.values()
    out.update(
        max_in_class_error=diag.max_in_class_error,
        max_null_residual=diag.max_null_residual,
        ber=float(np.mean(bpsk_ber(g))),
        capacity_bps_hz=float(np.sum(np.log2(1.0 + g))),
        capacity_ideal_bps_hz=float(np.sum(np.log2(1.0 + ideal.values()))),
    )
    return out


def _mean_std_se(x) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return math.nan, math.nan, math.nan
    std = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return float(np.mean(x)), std, std / math.sqrt(len(x))


def fig3_power_vs_n(cfg: ExperimentConfig) -> tuple[list[dict], list[TrialRecord]]:
    """Mean required power against the number of terminals.

    Conventional: per-terminal power on perfectly orthogonal channels.
    BBMA: two symbol classes, each powered for its weakest member.
    """
    cell = cfg.cell
    noise = noise_power(cell)
    target = cell.target_sinr
    rows, records = [], []
    for n in cfg.fig3.n_values:
        tag = f"fig3/N={n}"

        def trial(t: int, n=n, tag=tag) -> list[TrialRecord]:
            seed = derive_trial_seed(cfg.seed, tag, t)
            rng = np.random.default_rng(seed)
            terminals = drop_terminals(rng, n, cell)
            classes = random_classes(rng, [x.id for x in terminals])
            gains = allocation_gains(cell, terminals, cfg.allocation_gain)
            conv = conventional_alloc(gains, target, noise, cell.p_max_w)
            bb = bbma_alloc(classes, gains, target, noise, cell.p_max_w)
            return [TrialRecord("fig3", t, seed, n, conventional_total_w=conv.total_w, bbma_total_w=bb.total_w)]

        recs = _run_trials(trial, cfg.fig3.trials)
        records.extend(recs)
        conv = [r.conventional_total_w for r in recs]
        bb = [r.bbma_total_w for r in recs]
        mc, sc, ec = _mean_std_se(conv)
        mb, sb, eb = _mean_std_se(bb)
        rows.append(
            {
                "N": n,
                "trials": len(recs),
                "mean_conv_power_w": mc,
                "mean_bbma_power_w": mb,
                "std_conv": sc,
                "std_bbma": sb,
                "stderr_conv": ec,
                "stderr_bbma": eb,
                "conv_within_budget": float(np.mean([p <= cell.p_max_w for p in conv])),
                "bbma_within_budget": float(np.mean([p <= cell.p_max_w for p in bb])),
            }
        )
    return rows, records


def _fig4_trial(cfg: ExperimentConfig, tag: str, t: int, terminals_fn, kind: str, ceiling: float) -> list[TrialRecord]:
    seed = derive_trial_seed(cfg.seed, tag, t)
    rng = np.random.default_rng(seed)
    terminals = terminals_fn(rng)
    n = len(terminals)
    classes = random_classes(rng, [x.id for x in terminals])
    gains = allocation_gains(cfg.cell, terminals, cfg.allocation_gain)
    A = build_steering_matrix(cfg.array, terminals)
    cond = gram_condition(A) if n <= A.shape[0] else math.nan
    out = []
    for solver in SOLVERS:
        res = evaluate_drop(cfg.cell, cfg.array, terminals, classes, gains, solver, ceiling,
                            A=A, condition=cond, refine=cfg.refine)
        out.append(TrialRecord("fig4", t, seed, n, drop_kind=kind, solver=solver, **res))
    return out


def _fig4_rows(records: list[TrialRecord], kind: str, n: int) -> list[dict]:
    rows = []
    for solver in SOLVERS:
        recs = [r for r in records if r.solver == solver]
        ok = [r for r in recs if not r.flag]
        mber, _, eber = _mean_std_se([r.ber for r in ok])
        conds = [r.condition_number for r in ok]
        finite = [c for c in conds if math.isfinite(c)]
        rows.append(
            {
                "drop_kind": kind,
                "solver": solver,
                "N": n,
                "trials": len(recs),
                "flagged": len(recs) - len(ok),
                "mean_condition_number": float(np.mean(conds)) if conds else math.nan,
                "mean_log10_condition": float(np.mean(np.log10(finite))) if finite else math.nan,
                "mean_max_residual": _mean_std_se([r.max_null_residual for r in ok])[0],
                "mean_ber": mber,
                "stderr_ber": eber,
                "mean_capacity_bps_hz": _mean_std_se([r.capacity_bps_hz for r in ok])[0],
            }
        )
    return rows


def fig4_stress_set(cfg: ExperimentConfig) -> list[TrialRecord]:
    """Clustered drops: ``stress_n`` terminals in a random number of 2 m groups."""
    f4 = cfg.fig4

    def trial(t: int) -> list[TrialRecord]:
        def terminals_fn(rng):
            groups = int(rng.integers(f4.stress_groups_min, f4.stress_groups_max + 1))
            return drop_clustered_terminals(rng, f4.stress_n, groups, cfg.cell, f4.cluster_radius_m)

        return _fig4_trial(cfg, "fig4/stress", t, terminals_fn, "clustered", f4.condition_ceiling)

    return _run_trials(trial, f4.stress_drops)


def fig4_ber_vs_n(cfg: ExperimentConfig) -> tuple[list[dict], list[TrialRecord]]:
    """Mean BER from null residuals for uniform drops over N, then the stress set."""
    rows, records = [], []
    for n in cfg.fig4.n_values:
        def trial(t: int, n=n) -> list[TrialRecord]:
            return _fig4_trial(cfg, f"fig4/N={n}", t, lambda rng: drop_terminals(rng, n, cfg.cell),
                               "uniform", cfg.fig4.condition_ceiling)

        recs = _run_trials(trial, cfg.fig4.trials)
        records.extend(recs)
        rows.extend(_fig4_rows(recs, "uniform", n))
    stress = fig4_stress_set(cfg)
    records.extend(stress)
    rows.extend(_fig4_rows(stress, "clustered", cfg.fig4.stress_n))
    return rows, records


def stress_statistics(records: Sequence[TrialRecord], solver: str = EXPLICIT_INVERSE) -> dict:
    """Rank correlation of BER with conditioning, and paired solver comparison."""
    by_solver = {s: {r.trial: r for r in records if r.solver == s and not r.flag} for s in SOLVERS}
    sel = sorted(by_solver[solver].values(), key=lambda r: r.trial)
    rho = spearmanr([r.condition_number for r in sel], [r.ber for r in sel]).statistic
    common = sorted(set(by_solver[EXPLICIT_INVERSE]) & set(by_solver[ORTHOGONAL_FACTORIZATION]))
    wins = sum(
        by_solver[EXPLICIT_INVERSE][t].ber >= by_solver[ORTHOGONAL_FACTORIZATION][t].ber for t in common
    )
    return {
        "drops": len(sel),
        "spearman_ber_condition": float(rho),
        "paired": len(common),
        "explicit_ge_factorized_fraction": wins / len(common) if common else math.nan,
    }


def fig5_error_vs_spectral_eff(cfg: ExperimentConfig) -> list[dict]:
    """Point-to-point error rates against bits per symbol-time."""
    f5 = cfg.fig5
    n0 = f5.es_joules / f5.es_n0
    rows = []

    def point(n: int) -> dict:
        words = math.ceil(f5.bits_per_point / n)
        r = word_error_curve(
            lambda nb, j: derive_trial_seed(cfg.seed, f"fig5/nbits={nb}", j),
            [n], f5.es_joules, n0, words, cfg.array, f5.rx_range_m, cfg.solver, f5.chunk_words,
        )[0]
        return r

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        points = list(pool.map(point, f5.n_bits_values))
    for n, r in zip(f5.n_bits_values, points):
        rows.append(
            {
                "bits_per_symbol": n,
                "mpsk_ser_analytic": mpsk_ser(2 ** n, f5.es_n0),
                "bbma_bit_error": r["per_bit_error"],
                "bbma_bit_stderr": r["per_bit_stderr"],
                "bbma_word_error": r["word_error"],
                "bits_simulated": r["bits"],
                "words_simulated": r["words"],
                "radiated_energy_j": r["radiated_energy_j"],
            }
        )
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv_text(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in header])
    return buf.getvalue()


def records_to_rows(records: Sequence[TrialRecord]) -> list[dict]:
    return [{f.name: getattr(r, f.name) for f in fields(TrialRecord)} for r in records]


def write_csv(path: str | os.PathLike, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(to_csv_text(rows))
