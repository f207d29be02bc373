"""
Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary, so
``pytest tests/test_acceptance.py`` shows all ten verdicts together.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracles as orc
from regression_cases import FIXTURE, package_values
from eigenprep import bounds, experiments
from eigenprep.config import load_config, offset_for_fraction
from eigenprep.evolution import Propagator, measure_rte_error
from eigenprep.hamiltonian import (
    PauliSum,
    basis_state,
    derive_params,
    diagonalize,
    format_pauli_sum,
    parse_pauli_sum,
    random_pauli_sum,
    spectral_overlaps,
    synth_spectrum,
)
from eigenprep.noise import DensityMatrix, NoiseModel, plateau, run_noisy_prep
from eigenprep.prep import PE, PrepConfig, build_schedule, run_postselected, run_sampled

VERDICTS: list[str] = []
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def report(number: int, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    ok = ok and elapsed < limit
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.2f}s / {limit:g}s]"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def random_synthetic(rng: np.random.Generator, seed: int):
    gap = float(rng.uniform(0.05, 1.0))
    ratio = float(np.exp(rng.uniform(0, math.log(500))))
    n = int(rng.integers(2, 65))
    if rng.random() < 0.5:
        return synth_spectrum(n, gap, gap * ratio, "exponential", rng_seed=seed,
                              target_weight=float(rng.uniform(0.01, 0.9)))
    return synth_spectrum(n, gap, gap * ratio, rng_seed=seed, target_weight=float(rng.uniform(0.01, 0.9)))


# --------------------------------------------------------------------- 1


def test_criterion_01_schedule_period():
    build_schedule(0.075, 9.753)  # warm-up
    runs = []
    for _ in range(20):
        t0 = time.perf_counter()
        s = build_schedule(0.075, 9.753)
        runs.append(time.perf_counter() - t0)
    elapsed = min(runs)
    report(1, s.period == 9, f"N = {s.period} for gap 0.075, E_max 9.753", elapsed, 1e-3)


# --------------------------------------------------------------------- 2


def test_criterion_02_gamma_quarter():
    rng = np.random.default_rng(2)
    pairs = [(1.0, 8.0)]
    for _ in range(199):
        gap = float(np.exp(rng.uniform(math.log(1e-3), math.log(10.0))))
        pairs.append((gap, gap * float(np.exp(rng.uniform(0, math.log(1e3))))))
    t0 = time.perf_counter()
    worst = max(bounds.gamma_numeric(build_schedule(g, e)) for g, e in pairs)
    elapsed = time.perf_counter() - t0
    report(2, worst <= 0.25 + 1e-6, f"max gamma over {len(pairs)} pairs = {worst:.6f}", elapsed, 30)


# --------------------------------------------------------------------- 3


def _equivalence_instance(rng: np.random.Generator):
    """Random Pauli sum and state whose target level is separated by at least 1e-3."""
    while True:
        n = int(rng.integers(1, 7))
        h = random_pauli_sum(n, int(rng.integers(1, min(2 * n + 3, 4**n))), rng)
        spec = diagonalize(h)
        psi = rng.normal(size=spec.dim) + 1j * rng.normal(size=spec.dim)
        psi /= np.linalg.norm(psi)
        ss = spectral_overlaps(spec, psi)
        try:
            params = derive_params(ss)
        except Exception:
            continue
        if params.gap >= 1e-3:
            return h, spec, psi, ss, params


def test_criterion_03_oracle_equivalence():
    rng = np.random.default_rng(3)
    worst_oracle = worst_variant = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        h, spec, psi, ss, params = _equivalence_instance(rng)
        N = build_schedule(params.gap, params.e_max).period
        cfg = PrepConfig(params, stop="never", max_iterations=3 * N)
        times = cfg.schedule.prefix(3 * N)
        ofid, oP = orc.spectral_product(ss.weights, ss.energies, params.E_tilde, times)
        traces = {}
        for variant in ("cosine", PE):
            cfg_v = PrepConfig(params, variant=variant, stop="never", max_iterations=3 * N)
            tr = run_postselected(psi, h, cfg_v, Propagator.exact(spec)).trace
            traces[variant] = tr
            worst_oracle = max(worst_oracle, np.max(np.abs(tr.fidelity[1:] - ofid)), np.max(np.abs(tr.P[1:] - oP)))
        a, b = traces["cosine"], traces[PE]
        worst_variant = max(worst_variant, np.max(np.abs(a.fidelity - b.fidelity)), np.max(np.abs(a.P - b.P)))
    elapsed = time.perf_counter() - t0
    ok = worst_oracle <= 1e-10 and worst_variant <= 1e-10
    report(3, ok, f"circuit vs product {worst_oracle:.1e}, C vs PE {worst_variant:.1e}", elapsed, 120)


# --------------------------------------------------------------------- 4


def test_criterion_04_exact_bound_validity():
    rng = np.random.default_rng(4)
    violations = 0
    worst_margin = -np.inf
    t0 = time.perf_counter()
    for i in range(100):
        ss = random_synthetic(rng, 1000 + i)
        params = derive_params(ss)
        c = ss.target_weight
        for eps in (1e-4, 1e-8):
            N = build_schedule(params.gap, params.e_max).period
            k_bar = bounds.k_bar_exact(c, eps, N)
            cfg = PrepConfig(params, target_infidelity=eps, stop="never", max_iterations=max(k_bar, 1))
            tr = run_postselected(None, ss, cfg).trace
            floor = np.array([bounds.fidelity_floor_exact(k, c, N) for k in tr.k])
            violations += int(np.sum(tr.fidelity < floor - 1e-12))
            inf_at_kbar = 1.0 - tr.fidelity[k_bar]
            worst_margin = max(worst_margin, inf_at_kbar / eps)
            violations += int(inf_at_kbar > eps)
    elapsed = time.perf_counter() - t0
    report(4, violations == 0, f"{violations} violations; max infidelity(k_bar)/eps = {worst_margin:.2e}",
           elapsed, 300)


# --------------------------------------------------------------------- 5


def test_criterion_05_approx_bound_validity():
    rng = np.random.default_rng(5)
    below = above = 0
    t0 = time.perf_counter()
    for i in range(100):
        ss = random_synthetic(rng, 2000 + i)
        delta = offset_for_fraction(ss, 1 / 3)
        params = derive_params(ss, ss.target_energy + delta)
        c = ss.target_weight
        N = build_schedule(params.gap, params.e_max).period
        k_max = max(bounds.k_bar_approx(c, 1e-8, N, params.delta, params.gap), 3 * N)
        cfg = PrepConfig(params, stop="never", max_iterations=k_max)
        tr = run_postselected(None, ss, cfg).trace
        for k, fid in zip(tr.k, tr.fidelity):
            fa = bounds.fidelity_floor_approx(k, c, params.delta, params.gap, N)
            below += int(fid < fa - 1e-12)
            if k > 0:
                above += int(fa > bounds.fidelity_floor_exact(k, c, N))
    elapsed = time.perf_counter() - t0
    report(5, below == 0 and above == 0,
           f"delta = gap/3: {below} floor violations, {above} points with approx floor above exact",
           elapsed, 300)


# --------------------------------------------------------------------- 6


def test_criterion_06_cost_model():
    t0 = time.perf_counter()
    ss = synth_spectrum(4, 1.0, 3.0, rng_seed=6, target_weight=0.5)
    cfg = PrepConfig(derive_params(ss), target_infidelity=1e-3, stop="guarantee", mode="sampled")
    ref = run_postselected(None, ss, cfg)
    rng = np.random.default_rng(6)
    totals = np.array([run_sampled(None, ss, cfg, rng=rng, reference=ref).trace.total_sim_time
                       for _ in range(100_000)])
    recursion = bounds.cost_recursion(ref.trace.p, ref.trace.t)
    rel = abs(totals.mean() - recursion) / recursion

    dominated = 0
    gen = np.random.default_rng(60)
    for i in range(20):
        ss_i = random_synthetic(gen, 3000 + i)
        params = derive_params(ss_i)
        N = build_schedule(params.gap, params.e_max).period
        k_bar = bounds.k_bar_exact(ss_i.target_weight, 1e-6, N)
        tr = run_postselected(None, ss_i, PrepConfig(params, stop="never", max_iterations=max(k_bar, 1))).trace
        T = bounds.cost_recursion(tr.p[:k_bar], tr.t[:k_bar])
        Tbar = bounds.cost_bound(k_bar, ss_i.target_weight, N, params.gap)
        dominated += int(Tbar >= T)
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.05 and dominated == 20
    report(6, ok, f"MC mean {totals.mean():.4f} vs recursion {recursion:.4f} ({rel:.2%}); "
                  f"bound >= recursion on {dominated}/20", elapsed, 300)


# --------------------------------------------------------------------- 7

TROTTER_H = "0.8 Z0 Z1\n1.1 Z1 Z2\n0.9 X0\n0.7 X1\n1.2 X2\n0.2 Z0"
TROTTER_SLICES_PER_TIME = 16.0


def test_criterion_07_trotter_ceiling():
    t0 = time.perf_counter()
    h = parse_pauli_sum(TROTTER_H)
    spec = diagonalize(h)
    psi0 = np.ones(8, dtype=complex) / math.sqrt(8)
    params = derive_params(spectral_overlaps(spec, psi0))
    N = build_schedule(params.gap, params.e_max).period
    K = 12 * N
    cfg = PrepConfig(params, stop="never", max_iterations=K)
    prop = Propagator.trotter(h, TROTTER_SLICES_PER_TIME)
    trot = run_postselected(psi0, spec, cfg, prop).trace.infidelity
    exact = run_postselected(psi0, spec, cfg).trace.infidelity
    eps_rte = measure_rte_error(h, prop, params.E_tilde, cfg.schedule.times).epsilon_rte
    tail = float(np.mean(trot[-2 * N:]))
    plateaued = tail <= 10 * float(np.min(trot[1:]))
    separated = exact[K] * 100 <= trot[K]
    elapsed = time.perf_counter() - t0
    report(7, plateaued and separated,
           f"eps_RTE {eps_rte:.2e}; trotter tail mean {tail:.2e} (min {np.min(trot[1:]):.2e}); "
           f"exact at k={K}: {exact[K]:.2e}", elapsed, 120)


# --------------------------------------------------------------------- 8

NOISE_H = "0.4 Z0\n0.3 Z1\n0.2 Z0 Z1\n0.25 X0 X1\n0.1 Y0 Y1"


def test_criterion_08_noise_plateau():
    t0 = time.perf_counter()
    h = parse_pauli_sum(NOISE_H)
    psi0 = basis_state("01")
    spec = diagonalize(h)
    params = derive_params(spectral_overlaps(spec, psi0))
    N = build_schedule(params.gap, params.e_max).period
    n_trott = 10.0
    prop = Propagator.trotter(h, n_trott)
    cfg = PrepConfig(params, stop="never", max_iterations=10 * N)
    pure = run_postselected(psi0, h, cfg, prop).trace
    zero = run_noisy_prep(DensityMatrix.pure(psi0), h, cfg, prop, NoiseModel(0.0))
    match = float(np.max(np.abs(zero.fidelity - pure.fidelity)))
    levels, ratios = [], []
    for lam in (1e-5, 1e-4):
        tr = run_noisy_prep(DensityMatrix.pure(psi0), h, cfg, prop, NoiseModel(lam))
        level = plateau(tr, N)
        est = bounds.noisy_fidelity_estimate(lam, h.term_count, n_trott, params.gap)
        levels.append(level)
        ratios.append(level / est)
    monotone = levels[0] > levels[1]
    within = all(0.5 <= r <= 2.0 for r in ratios)
    elapsed = time.perf_counter() - t0
    report(8, monotone and within and match <= 1e-8,
           f"plateaus {levels[0]:.4f} > {levels[1]:.4f}; plateau/estimate {ratios[0]:.3f}, {ratios[1]:.3f}; "
           f"lambda=0 vs pure {match:.1e}", elapsed, 600)


# --------------------------------------------------------------------- 9


def transverse_ising(n: int, seed: int) -> PauliSum:
    """Open-chain ZZ couplings, transverse X fields and weak longitudinal Z fields."""
    rng = np.random.default_rng(seed)
    terms = {}
    for j in range(n - 1):
        terms["I" * j + "ZZ" + "I" * (n - j - 2)] = float(rng.uniform(0.5, 1.5))
    for j in range(n):
        terms["I" * j + "X" + "I" * (n - j - 1)] = float(rng.uniform(0.5, 1.5))
        terms["I" * j + "Z" + "I" * (n - j - 1)] = float(rng.uniform(-0.3, 0.3))
    return PauliSum.from_dict(terms)


def _low_overlap_bitstring(h: PauliSum) -> tuple[str, float]:
    ground = np.abs(diagonalize(h).eigenvectors[:, 0]) ** 2
    candidates = [i for i in np.argsort(-ground) if ground[i] < 1e-2]
    i = int(candidates[0])
    return format(i, f"0{h.n_qubits}b"), float(ground[i])


# primary instance first, then the documented alternates
MORPH_INSTANCES = [(5, 2), (5, 0), (5, 5), (5, 4)]


def test_criterion_09_morph_sweep(tmp_path):
    t0 = time.perf_counter()
    tried = []
    for n, seed in MORPH_INSTANCES:
        h = transverse_ising(n, seed)
        bits, overlap = _low_overlap_bitstring(h)
        (tmp_path / "h.txt").write_text(format_pauli_sum(h))
        (tmp_path / "run.yaml").write_text(
            f"hamiltonian: h.txt\nmorph: {{bitstring: '{bits}'}}\ntarget_infidelity: 1.0e-8\n"
            f"max_iterations: 20000\noutput_dir: {tmp_path / f'out_{n}_{seed}'}\n"
        )
        result = experiments.cmd_morph_sweep(load_config(tmp_path / "run.yaml"))
        ok_points = [p for p in result.points if p.status == "ok"]
        n_below = sum(p.cost < result.baseline_cost for p in ok_points)
        n_above = sum(p.cost > result.baseline_cost for p in ok_points)
        last = result.points[-1]
        identical = last.alpha == 1.0 and last.cost == result.baseline_cost
        tried.append(f"{n}q seed {seed} |{bits}> overlap {overlap:.2e}: {n_below} below, {n_above} above")
        if overlap < 1e-2 and n_below and n_above and identical:
            break
    elapsed = time.perf_counter() - t0
    ok = overlap < 1e-2 and n_below > 0 and n_above > 0 and identical and len(result.points) == 201
    report(9, ok, "; ".join(tried) + f"; alpha=1 bit-identical: {identical}", elapsed, 900)


# --------------------------------------------------------------------- 10


def test_criterion_10_regression_constants():
    t0 = time.perf_counter()
    frozen = json.loads((FIXTURES / FIXTURE).read_text())
    fresh = package_values()
    bad = []
    for key, expected in frozen.items():
        got = np.asarray(fresh.get(key, []), dtype=float)
        expected = np.asarray(expected, dtype=float)
        scale = max(float(np.max(np.abs(expected))), 1e-300)
        # relative to the largest entry, so exact zeros compare sensibly
        if got.shape != expected.shape or np.max(np.abs(got - expected)) > 1e-9 * scale:
            bad.append(key)
    missing = sorted(set(fresh) - set(frozen))
    elapsed = time.perf_counter() - t0
    report(10, not bad and not missing,
           f"{len(frozen) - len(bad)}/{len(frozen)} constants within 1e-9 relative"
           + (f"; mismatched {bad}" if bad else "") + (f"; unfrozen {missing}" if missing else ""),
           elapsed, 120)
