"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are
also collected into a summary section at the end of the pytest run.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from bbma.channel import CellConfig, drop_terminals, mean_path_gain, noise_power
from bbma.cli import _format_table1, main
from bbma.experiments import (
    PROFILES,
    ExperimentConfig,
    fig3_power_vs_n,
    fig4_ber_vs_n,
    fig5_error_vs_spectral_eff,
    stress_statistics,
)
from bbma.null_steering import ORTHOGONAL_FACTORIZATION, build_steering_matrix, compute_weights
from bbma.p2p import mpsk_monte_carlo, mpsk_ser
from bbma.power import SinrReport, conventional_alloc, ergodic_capacity
from bbma.scheduler import ClassState, dynamic_assign

pytestmark = pytest.mark.acceptance


def q_quad(x: float) -> float:
    val, _ = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), x, math.inf)
    return val


@pytest.fixture(scope="module")
def fig4_run():
    t0 = time.perf_counter()
    rows, recs = fig4_ber_vs_n(ExperimentConfig())
    return rows, recs, time.perf_counter() - t0


def test_criterion_1_table1(criterion):
    t0 = time.perf_counter()
    text, _ = _format_table1()
    elapsed = time.perf_counter() - t0
    expected = [
        "dynamic: S2->Class1, S1->Class2",
        "  move (T4, T10) from Class1 to Class2",
        "  move (T3, T6) from Class2 to Class1",
        "  total moves: 4",
    ]
    lines = text.splitlines()
    start = next(i for i, s in enumerate(lines) if s.startswith("dynamic:"))
    ok = lines[start:start + 4] == expected and elapsed < 1.0
    criterion(1, "class-scheduling example", ok, f"{len(expected)} lines exact, {elapsed * 1e3:.1f} ms")


def test_criterion_2_single_terminal_power(criterion):
    t0 = time.perf_counter()
    cell = CellConfig(bandwidth_hz=5e6, noise_figure_db=5.0, target_sinr_db=15.0)
    g = mean_path_gain(cell, 1000.0)
    one = conventional_alloc({0: g}, cell.target_sinr, noise_power(cell), cell.p_max_w).total_w
    fifty = conventional_alloc({i: g for i in range(50)}, cell.target_sinr, noise_power(cell), cell.p_max_w).total_w
    elapsed = time.perf_counter() - t0
    ok = abs(one - 2.0) <= 0.1 and abs(fifty - 100.0) <= 5.0 and elapsed < 1.0
    criterion(2, "edge terminal power", ok, f"1 terminal {one:.3f} W, 50 terminals {fifty:.2f} W")


def test_criterion_3_fig3_shape(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(profile="desk")
    assert cfg.fig3.n_values == [10, 25, 50, 100, 150, 200, 250, 300] and cfg.fig3.trials == 50
    rows, _ = fig3_power_vs_n(cfg)
    elapsed = time.perf_counter() - t0
    n = np.array([r["N"] for r in rows], dtype=float)
    conv = np.array([r["mean_conv_power_w"] for r in rows])
    bb = np.array([r["mean_bbma_power_w"] for r in rows])
    slope, icept = np.polyfit(n, conv, 1)
    resid = conv - (slope * n + icept)
    r2 = 1 - np.sum(resid**2) / np.sum((conv - conv.mean()) ** 2)
    at = {int(k): i for i, k in enumerate(n)}
    conv_ratio = conv[at[200]] / conv[at[10]]
    bb_ratio = bb[at[200]] / bb[at[10]]
    ok = r2 >= 0.99 and 15 <= conv_ratio <= 25 and bb_ratio <= 3 and elapsed <= 120
    criterion(3, "power vs N shape", ok,
              f"R2 {r2:.4f}, conv ratio {conv_ratio:.2f}, BBMA ratio {bb_ratio:.2f}, {elapsed:.1f} s")


def test_criterion_4_null_constraints(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(profile="paper", array=PROFILES["paper"])
    assert cfg.array.size == 4096
    worst = 0.0
    runs = 0
    for n in (10, 50, 100):
        for k in range(30):
            rng = np.random.default_rng([cfg.seed, n, k])
            ts = drop_terminals(rng, n, cfg.cell)
            A = build_steering_matrix(cfg.array, ts)
            D = (rng.integers(0, 2, n)).astype(float)
            rows = np.array([D, 1 - D])
            rows = rows[rows.any(axis=1)]
            W = compute_weights(A, rows, ORTHOGONAL_FACTORIZATION)
            worst = max(worst, float(np.max(np.abs(W.conj().T @ A - rows))))
            runs += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed <= 120
    criterion(4, "null-steering constraints, s=4096", ok,
              f"max |w^H a - D| = {worst:.2e} over {runs} drops (N in 10/50/100 x 30 seeds), {elapsed:.1f} s")


def test_criterion_5_conditioning(criterion, fig4_run):
    rows, recs, elapsed = fig4_run
    stats = stress_statistics([r for r in recs if r.drop_kind == "clustered"])
    n50 = [r for r in rows if r["drop_kind"] == "uniform" and r["N"] == 50]
    ber50 = max(r["mean_ber"] for r in n50)
    flagged50 = sum(r["flagged"] for r in n50)
    rho = stats["spearman_ber_condition"]
    frac = stats["explicit_ge_factorized_fraction"]
    ok = rho > 0.8 and frac >= 0.9 and ber50 <= 1e-5 and flagged50 == 0 and elapsed <= 300
    criterion(5, "BER vs conditioning", ok,
              f"(a) Spearman {rho:.3f}, (b) explicit >= factorized on {frac:.0%} of {stats['paired']} pairs, "
              f"(c) N=50 mean BER {ber50:.2e}, {elapsed:.1f} s")


def _brute_min_moves(state, demand):
    best = None
    for perm in itertools.permutations(range(1, state.M + 1)):
        mapping = dict(zip(range(1, state.M + 1), perm))
        moves = sum(1 for t, c in state.membership.items() if mapping[c] != demand[t])
        best = moves if best is None else min(best, moves)
    return best


def test_criterion_6_scheduler_optimality(criterion):
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        M = int(rng.integers(2, 4))
        n = int(rng.integers(1, 13))
        membership = {t: int(rng.integers(1, M + 1)) for t in range(n)}
        perm = rng.permutation(np.arange(1, M + 1))
        state = ClassState(M, membership, {c: int(s) for c, s in zip(range(1, M + 1), perm)})
        demand = {t: int(rng.integers(1, M + 1)) for t in range(n)}
        if len(dynamic_assign(state, demand)) != _brute_min_moves(state, demand):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    criterion(6, "dynamic assignment optimal", ok, f"{mismatches} mismatches in 1000 instances, {elapsed:.2f} s")


def test_criterion_7_fig5_shape(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    f5 = cfg.fig5
    assert f5.es_n0 == 10.0 and f5.bits_per_point >= 1_000_000
    assert f5.n_bits_values == [1, 2, 4, 8, 16, 32]
    rows = fig5_error_vs_spectral_eff(cfg)

    ser = [r["mpsk_ser_analytic"] for r in rows]
    increasing = all(b > a for a, b in zip(ser, ser[1:]))

    mc_ok = []
    for M in (2, 4):
        errs, n = mpsk_monte_carlo(np.random.default_rng([cfg.seed, M]), M, f5.es_n0, 1_000_000)
        p = mpsk_ser(M, f5.es_n0)
        mc_ok.append(abs(errs / n - p) <= 3 * math.sqrt(p * (1 - p) / n))

    errs = np.array([r["bbma_bit_error"] * r["bits_simulated"] for r in rows])
    bits = np.array([r["bits_simulated"] for r in rows], dtype=float)
    pooled = errs.sum() / bits.sum()
    se = np.sqrt(pooled * (1 - pooled) / bits)
    flat = bool(np.all(np.abs(errs / bits - pooled) <= 3 * se))

    q20 = q_quad(math.sqrt(20.0))
    p1 = rows[0]["bbma_bit_error"]
    se1 = math.sqrt(q20 * (1 - q20) / rows[0]["bits_simulated"])
    at_q = abs(p1 - q20) <= 3 * se1
    elapsed = time.perf_counter() - t0
    ok = increasing and all(mc_ok) and flat and at_q and elapsed <= 180
    criterion(7, "error vs bits per symbol", ok,
              f"SER increasing {increasing}, PSK MC M=2/4 {mc_ok}, pooled p {pooled:.2e} flat {flat}, "
              f"p(1 bit) {p1:.2e} vs Q(sqrt 20) {q20:.2e}, {elapsed:.1f} s")


def test_criterion_8_determinism(criterion, tmp_path):
    volatile = ("started_at", "finished_at", "elapsed_s")
    runs = {
        "fig3": [],
        "fig4": [],
        "fig5": [],
        "check-weights": ["--profile", "paper"],
        "table1-demo": [],
    }
    identical = {}
    for cmd, extra in runs.items():
        out = tmp_path / f"{cmd}.csv"
        snaps = []
        for _ in range(2):
            code = main([cmd, "--seed", "1", "--out", str(out), "--raw", *extra])
            manifest = json.loads(out.with_suffix(".manifest.json").read_text())
            for key in volatile:
                manifest.pop(key)
            raw = tmp_path / f"{cmd}_raw.csv"
            snaps.append((code, out.read_bytes(), out.with_suffix(".meta").read_bytes(),
                          raw.read_bytes() if raw.exists() else b"", manifest))
        identical[cmd] = snaps[0] == snaps[1] and snaps[0][0] == 0
    ok = all(identical.values())
    criterion(8, "repeat runs identical", ok, ", ".join(f"{k} {'same' if v else 'DIFF'}" for k, v in identical.items()))


def test_criterion_9_capacity(criterion, fig4_run):
    t0 = time.perf_counter()
    gamma = 10 ** 1.5
    worst_gap = 0.0
    for n in (1, 7, 50, 300):
        reports = [SinrReport({i: gamma for i in range(n)}) for _ in range(5)]
        worst_gap = max(worst_gap, abs(ergodic_capacity(reports) - n * math.log2(1 + gamma)))
    _, recs, _ = fig4_run
    drops = [r for r in recs if not r.flag]
    violations = sum(r.capacity_bps_hz > r.capacity_ideal_bps_hz for r in drops)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-9 and violations == 0 and len(drops) > 0 and elapsed < 30
    criterion(9, "ergodic capacity", ok,
              f"equal-SINR gap {worst_gap:.1e}, leakage > ideal on {violations} of {len(drops)} drops")
