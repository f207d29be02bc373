"""
Experiment drivers behind the CLI subcommands.

Each driver takes an :class:`~eigenprep.config.ExperimentConfig`, writes
plot-ready CSV/JSON into ``cfg.output_dir`` and returns the in-memory result.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bounds
from .config import ExperimentConfig, System, load_hamiltonian, resolve_n_trott, resolve_params, resolve_system
from .errors import ConfigError, NumericalError
from .evolution import Propagator, measure_rte_error
from .hamiltonian import (
    DENSE_CAP,
    PauliSum,
    basis_state,
    build_h_init,
    derive_params,
    diagonalize,
    format_pauli_sum,
    morph,
    random_pauli_sum,
    spectral_overlaps,
    synth_spectrum,
)
from .noise import DM_CAP, DensityMatrix, NoiseModel, plateau, run_noisy_prep
from .prep import PrepConfig, PrepTrace, build_schedule, iterate_once, run_postselected, run_sampled

__all__ = [
    "cmd_converge",
    "cmd_bounds",
    "cmd_noise_sweep",
    "cmd_morph_sweep",
    "cmd_gen",
    "cmd_rte_error",
    "MorphPoint",
    "MorphSweepResult",
    "morph_cost",
]

log = logging.getLogger(__name__)
GAP_FLOOR = 1e-9


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _prep_config(cfg: ExperimentConfig, params) -> PrepConfig:
    try:
        return PrepConfig(
            params,
            variant=cfg.variant,
            target_infidelity=cfg.target_infidelity,
            max_iterations=cfg.max_iterations,
            rng_seed=cfg.seed,
            stop=cfg.stop,
            target_index=cfg.target_index,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# converge


def _floor_rows(regime: str, trace: PrepTrace, params, c_sq: float, N: int, eps_rte: float):
    rows = []
    for rec in trace.records[::N]:
        k = rec.k
        if regime == "exact":
            floor = bounds.fidelity_floor_exact(k, c_sq, N)
        elif regime == "approx":
            floor = bounds.fidelity_floor_approx(k, c_sq, params.delta, params.gap, N)
        else:
            zeta = bounds.zeta_sq_floor(k, params.delta, params.gap, N)
            xi = bounds.xi_sq_bound(k, c_sq, N, 0.25)
            try:
                floor = bounds.fidelity_floor_rte(k, c_sq, zeta, xi, eps_rte)
            except NumericalError:
                floor = None
        rows.append((k, rec.fidelity, floor))
    return rows


def cmd_converge(cfg: ExperimentConfig) -> dict[str, PrepTrace]:
    """Convergence traces per regime plus bound curves sampled every N iterations."""
    system = resolve_system(cfg)
    out = _out(cfg)
    c_sq = system.state.target_weight
    traces: dict[str, PrepTrace] = {}
    for regime in cfg.regimes:
        params = resolve_params(cfg, system, regime)
        pcfg = _prep_config(cfg, params)
        N = pcfg.schedule.period
        extra: dict = {}
        if regime == "trotter":
            if system.hamiltonian is None:
                raise ConfigError("the trotter regime needs a hamiltonian file")
            prop = Propagator.trotter(system.hamiltonian, resolve_n_trott(cfg, params))
            if system.hamiltonian.n_qubits <= 10:
                rep = measure_rte_error(system.hamiltonian, prop, params.E_tilde, pcfg.schedule.times)
                extra["epsilon_rte"] = rep.epsilon_rte
            extra["n_trott"] = prop.n_trott
        else:
            prop = system.exact_propagator()
        result = run_postselected(system.psi0, system.spectrum, pcfg, prop)
        trace = result.trace
        trace.config = {**trace.config, "regime": regime, "c_sq": c_sq, **extra}
        (out / f"trace_{regime}.csv").write_text(trace.to_csv())
        (out / f"trace_{regime}.json").write_text(trace.sidecar())
        _write_rows(
            out / f"bounds_{regime}.csv",
            ("k", "fidelity", "floor"),
            _floor_rows(regime, trace, params, c_sq, N, cfg.eps_rte_bound),
        )
        if cfg.sampled_trials > 0:
            rng = np.random.default_rng(cfg.seed)
            rows = []
            for i in range(cfg.sampled_trials):
                s = run_sampled(system.psi0, system.spectrum, pcfg, prop, rng, reference=result)
                rows.append((i, s.trace.total_sim_time, s.trace.restarts))
            _write_rows(out / f"sampled_{regime}.csv", ("trial", "total_sim_time", "restarts"), rows)
            summary = {
                "trials": cfg.sampled_trials,
                "mean_total_sim_time": float(np.mean([r[1] for r in rows])),
                "cost_recursion": bounds.cost_recursion(trace.p, trace.t),
            }
            (out / f"sampled_{regime}.json").write_text(json.dumps(summary, indent=1))
        log.info("%s: %d iterations, final infidelity %.3e", regime, len(trace.records) - 1,
                 1 - trace.records[-1].fidelity)
        traces[regime] = trace
    return traces


# --------------------------------------------------------------------------
# bounds


def cmd_bounds(cfg: ExperimentConfig) -> bounds.BoundsReport:
    opts = dict(cfg.bounds)
    trace = None
    if "trace" in opts:
        p = cfg.path(opts.pop("trace"))
        side = p.with_suffix(".json")
        trace = PrepTrace.from_csv(p.read_text(), side.read_text() if side.exists() else None)
    if not {"gap", "e_max", "c_sq"} <= set(opts):
        system = resolve_system(cfg)
        params = resolve_params(cfg, system, "approx" if opts.get("delta") else "exact")
        opts.setdefault("gap", params.gap)
        opts.setdefault("e_max", params.e_max)
        opts.setdefault("c_sq", system.state.target_weight)
        if system.hamiltonian is not None:
            opts.setdefault("term_count", system.hamiltonian.term_count)
    eps = float(opts.pop("eps", cfg.target_infidelity))
    try:
        report = bounds.bounds_report(
            float(opts.pop("gap")),
            float(opts.pop("e_max")),
            float(opts.pop("c_sq")),
            eps,
            float(opts.pop("delta", 0.0)),
            trace=trace,
            lam=opts.pop("lam", None),
            term_count=opts.pop("term_count", None),
            n_trott=opts.pop("n_trott", None),
            grid_points=int(opts.pop("grid_points", 100_000)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if opts:
        raise ConfigError(f"bounds: unknown keys {sorted(opts)}")
    (_out(cfg) / "bounds.json").write_text(report.to_json())
    return report


# --------------------------------------------------------------------------
# noise sweep


def _noise_job(args):
    h, psi0, pcfg, n_trott, lam = args
    prop = Propagator.trotter(h, n_trott)
    return run_noisy_prep(DensityMatrix.pure(psi0), h, pcfg, prop, NoiseModel(lam))


def _map(fn, jobs: list, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_noise_sweep(cfg: ExperimentConfig) -> dict:
    system = resolve_system(cfg)
    h = system.hamiltonian
    if h is None:
        raise ConfigError("noise-sweep needs a hamiltonian file")
    if h.n_qubits > DM_CAP:
        raise ConfigError(f"noise-sweep: {h.n_qubits} qubits exceeds the density-matrix cap of {DM_CAP}")
    if not cfg.lambdas:
        raise ConfigError("noise-sweep needs a non-empty lambdas list")
    params = resolve_params(cfg, system, "exact")
    n_trott = resolve_n_trott(cfg, params)
    N = build_schedule(params.gap, params.e_max).period
    pcfg = replace(_prep_config(cfg, params), stop="never", max_iterations=cfg.noise_periods * N)
    lambdas = sorted(float(x) for x in cfg.lambdas)
    traces = _map(_noise_job, [(h, system.psi0, pcfg, n_trott, lam) for lam in lambdas], cfg.jobs)
    out = _out(cfg)
    entries = []
    for i, (lam, tr) in enumerate(zip(lambdas, traces)):
        name = f"noise_{i:02d}.csv"
        (out / name).write_text(tr.to_csv())
        entries.append(
            {
                "lambda": lam,
                "file": name,
                "plateau": plateau(tr, N),
                "estimate": bounds.noisy_fidelity_estimate(lam, h.term_count, n_trott, params.gap),
                "n_pauli": bounds.n_pauli(h.term_count, n_trott, params.gap),
                "final_fidelity": float(tr.records[-1].fidelity),
            }
        )
    manifest = {"period": N, "n_trott": n_trott, "iterations": pcfg.max_iterations, "runs": entries}
    (out / "sweep.json").write_text(json.dumps(manifest, indent=1))
    _write_rows(
        out / "sweep.csv",
        ("lambda", "plateau", "estimate", "n_pauli"),
        [(e["lambda"], e["plateau"], e["estimate"], e["n_pauli"]) for e in entries],
    )
    return manifest


# --------------------------------------------------------------------------
# morphing Hamiltonian


@dataclass
class MorphPoint:
    alpha: float
    gap: float | None
    e_max: float | None
    period: int | None
    morph_steps: int
    total_steps: int
    cost: float
    status: str = "ok"


@dataclass
class MorphSweepResult:
    points: list[MorphPoint]
    baseline_cost: float
    advantage_regions: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "baseline_cost": self.baseline_cost,
                "advantage_regions": self.advantage_regions,
                "points": [asdict(p) for p in self.points],
            },
            indent=1,
        )


def _filter_phase(psi, h_alpha: PauliSum, n_steps: int | None, eps: float | None, max_iter: int,
                  threshold: float):
    """Run one fixed-Hamiltonian phase from ``psi`` towards the ground state of ``h_alpha``.

    With ``eps`` set, iterate until the ground-state fidelity reaches
    1 - eps; otherwise run ``n_steps`` iterations (default: one schedule
    period).  Returns (state, p list, t list, info).
    """
    spec = diagonalize(h_alpha)
    ss = spectral_overlaps(spec, psi / np.linalg.norm(psi), 0, threshold)
    occupied = [j for j in range(1, spec.dim) if ss.weights[j] > threshold]
    if not occupied:
        return psi, [], [], {"gap": None, "e_max": None, "period": None}
    gap = float(np.min(spec.energies[occupied] - spec.energies[0]))
    if gap < GAP_FLOOR:
        raise NumericalError(f"gapless Hamiltonian (gap {gap:.2e})")
    params = derive_params(ss, float(spec.energies[0]), threshold)
    schedule = build_schedule(params.gap, params.e_max)
    prop = Propagator.exact(spec)
    target = spec.eigenvectors[:, 0]
    steps = schedule.period if n_steps is None else n_steps
    p_seq, t_seq = [], []
    k = 0
    while True:
        if eps is not None:
            if 1.0 - abs(np.vdot(target, psi)) ** 2 <= eps:
                break
            if k >= max_iter:
                raise NumericalError(f"target infidelity not reached in {max_iter} iterations")
        elif k >= steps:
            break
        k += 1
        t = schedule.time(k)
        psi, p = iterate_once(psi, t, params, prop)
        p_seq.append(p)
        t_seq.append(t)
    return psi, p_seq, t_seq, {"gap": params.gap, "e_max": params.e_max, "period": schedule.period}


def morph_cost(h_init: PauliSum, h: PauliSum, psi0, alphas, eps: float, max_iter: int = 100_000,
               threshold: float = 0.0, steps_per_alpha: int | None = None) -> tuple[float, dict]:
    """Mean total simulation time of a staged preparation through ``alphas``.

    At each intermediate alpha the ground state of H(alpha) is filtered for
    one schedule period (or ``steps_per_alpha`` iterations), then the
    target H is filtered to infidelity ``eps``.  The cost uses full-restart
    semantics over the concatenated success probabilities.  Stages at
    alpha = 1 merge into the final stage.
    """
    psi = np.asarray(psi0, dtype=complex)
    p_all, t_all = [], []
    info: dict = {"stages": []}
    for alpha in alphas:
        if alpha == 1.0:
            continue
        psi, p_seq, t_seq, meta = _filter_phase(psi, morph(h_init, h, alpha), steps_per_alpha,
                                                None, max_iter, threshold)
        p_all += p_seq
        t_all += t_seq
        info["stages"].append({"alpha": alpha, **meta, "steps": len(p_seq)})
    psi, p_seq, t_seq, meta = _filter_phase(psi, h, None, eps, max_iter, threshold)
    p_all += p_seq
    t_all += t_seq
    info["stages"].append({"alpha": 1.0, **meta, "steps": len(p_seq)})
    info["total_steps"] = len(p_all)
    return bounds.cost_recursion(p_all, t_all), info


def _morph_job(args) -> MorphPoint:
    h_init, h, psi0, alpha, eps, max_iter, threshold, steps = args
    try:
        cost, info = morph_cost(h_init, h, psi0, [alpha], eps, max_iter, threshold, steps)
    except NumericalError as exc:
        status = "gapless" if "gapless" in str(exc) else f"failed: {exc}"
        return MorphPoint(alpha, None, None, None, 0, 0, float("nan"), status)
    first = info["stages"][0]
    morph_steps = first["steps"] if alpha != 1.0 else 0
    return MorphPoint(alpha, first["gap"], first["e_max"], first["period"], morph_steps,
                      info["total_steps"], cost)


def _regions(points: list[MorphPoint], baseline: float) -> list[tuple[float, float]]:
    regions = []
    start = prev = None
    for p in points:
        good = p.status == "ok" and p.cost < baseline
        if good and start is None:
            start = p.alpha
        if not good and start is not None:
            regions.append((start, prev))
            start = None
        prev = p.alpha
    if start is not None:
        regions.append((start, prev))
    return regions


def alpha_grid(spec) -> np.ndarray:
    if spec is None:
        return np.linspace(0.0, 1.0, 201)
    if isinstance(spec, dict):
        return np.linspace(float(spec.get("start", 0.0)), 1.0, int(spec.get("num", 201)))
    return np.asarray(spec, dtype=float)


def cmd_morph_sweep(cfg: ExperimentConfig) -> MorphSweepResult:
    if not cfg.morph:
        raise ConfigError("morph-sweep needs a morph section")
    if not cfg.hamiltonian:
        raise ConfigError("morph-sweep needs a hamiltonian file")
    m = dict(cfg.morph)
    h = load_hamiltonian(cfg.path(cfg.hamiltonian))
    if h.n_qubits > DENSE_CAP:
        raise ConfigError("register too large")
    bits = m.get("bitstring") or (cfg.initial_state if isinstance(cfg.initial_state, str) else None)
    if bits is None:
        raise ConfigError("morph.bitstring (the initial basis state) is required")
    psi0 = basis_state(str(bits))
    if "h_init" in m:
        h_init = load_hamiltonian(cfg.path(m["h_init"]))
    else:
        energies = diagonalize(h).energies
        gap = float(m.get("gap", energies[1] - energies[0]))
        h_init = build_h_init(str(bits), gap)
    grid = alpha_grid(m.get("alpha_grid"))
    eps = cfg.target_infidelity
    steps = m.get("steps_per_alpha")
    steps = None if steps in (None, "N") else int(steps)
    thr = cfg.occupancy_threshold
    baseline, _ = morph_cost(h_init, h, psi0, [], eps, cfg.max_iterations, thr)
    jobs = [(h_init, h, psi0, float(a), eps, cfg.max_iterations, thr, steps) for a in grid]
    points = sorted(_map(_morph_job, jobs, cfg.jobs), key=lambda p: p.alpha)
    result = MorphSweepResult(points, baseline, _regions(points, baseline))
    out = _out(cfg)
    _write_rows(
        out / "morph.csv",
        ("alpha", "gap", "e_max", "period", "morph_steps", "total_steps", "cost", "baseline", "status"),
        [(p.alpha, p.gap, p.e_max, p.period, p.morph_steps, p.total_steps, p.cost, baseline, p.status)
         for p in points],
    )
    (out / "morph.json").write_text(result.to_json())
    (out / "h_init.txt").write_text(format_pauli_sum(h_init))
    return result


# --------------------------------------------------------------------------
# gen, rte-error


def cmd_gen(cfg: ExperimentConfig) -> Path:
    g = dict(cfg.gen)
    kind = g.pop("kind", None)
    out = _out(cfg)
    try:
        if kind == "spectrum":
            ss = synth_spectrum(
                int(g.pop("n_levels")),
                float(g.pop("gap")),
                float(g.pop("e_max")),
                g.pop("weights", "uniform"),
                int(g.pop("seed", cfg.seed)),
                g.pop("target_weight", None),
            )
            path = out / g.pop("file", "spectrum.json")
            text = ss.to_json()
        elif kind == "h-init":
            h = build_h_init(str(g.pop("bitstring")), float(g.pop("gap")))
            path = out / g.pop("file", "h_init.txt")
            text = format_pauli_sum(h)
        elif kind == "pauli":
            h = random_pauli_sum(int(g.pop("n_qubits")), int(g.pop("n_terms")),
                                 int(g.pop("seed", cfg.seed)), float(g.pop("scale", 1.0)))
            path = out / g.pop("file", "hamiltonian.txt")
            text = format_pauli_sum(h)
        else:
            raise ConfigError(f"gen.kind must be spectrum, h-init or pauli, got {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"gen: missing key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"gen: {exc}") from exc
    if g:
        raise ConfigError(f"gen: unknown keys {sorted(g)}")
    path.write_text(text)
    return path


def cmd_rte_error(cfg: ExperimentConfig):
    system = resolve_system(cfg)
    if system.hamiltonian is None:
        raise ConfigError("rte-error needs a hamiltonian file")
    params = resolve_params(cfg, system, "exact")
    n_trott = resolve_n_trott(cfg, params)
    schedule = build_schedule(params.gap, params.e_max)
    prop = Propagator.trotter(system.hamiltonian, n_trott)
    report = measure_rte_error(system.hamiltonian, prop, params.E_tilde, schedule.times)
    payload = {**report.to_dict(), "n_trott": n_trott, "slices_shortest": prop.slices(schedule.times[-1])}
    (_out(cfg) / "rte_error.json").write_text(json.dumps(payload, indent=1))
    return report
