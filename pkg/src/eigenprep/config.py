"""Experiment configuration: a YAML mapping validated into :class:`ExperimentConfig`."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy.optimize import brentq

from .errors import ConfigError
from .evolution import Propagator
from .hamiltonian import (
    PauliSum,
    SpectralParams,
    SpectralState,
    Spectrum,
    basis_state,
    derive_params,
    diagonalize,
    exp_tail_amplitudes,
    parse_pauli_sum,
    spectral_overlaps,
    synth_spectrum,
)

__all__ = ["ExperimentConfig", "System", "load_config", "resolve_system", "load_hamiltonian"]

REGIMES = ("exact", "approx", "trotter")


@dataclass
class ExperimentConfig:
    hamiltonian: str | None = None
    spectrum: str | None = None
    synthetic: dict | None = None
    initial_state: Any = None
    target_index: int = 0
    params: Any = "derive"
    occupancy_threshold: float = 0.0
    delta: float | None = None
    delta_fraction: float | None = None
    regimes: list = field(default_factory=lambda: ["exact"])
    variant: str = "cosine"
    n_trott: float | None = None
    trotter_slices: int | None = None
    target_infidelity: float = 1e-8
    max_iterations: int = 2000
    stop: str = "fidelity"
    sampled_trials: int = 0
    eps_rte_bound: float = 1e-8
    lambdas: list = field(default_factory=list)
    noise_periods: int = 10
    morph: dict | None = None
    bounds: dict = field(default_factory=dict)
    gen: dict = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    base_dir: str = "."

    def validate(self) -> "ExperimentConfig":
        sources = [s for s in ("hamiltonian", "spectrum", "synthetic") if getattr(self, s)]
        if len(sources) > 1:
            raise ConfigError(f"exactly one Hamiltonian source allowed, got {sources}")
        for regime in self.regimes:
            if regime not in REGIMES:
                raise ConfigError(f"regimes: unknown regime {regime!r}")
        if not 0 < self.target_infidelity < 1:
            raise ConfigError("target_infidelity must lie in (0, 1)")
        if self.delta is not None and self.delta_fraction is not None:
            raise ConfigError("give delta or delta_fraction, not both")
        if self.delta_fraction is not None and not 0 <= self.delta_fraction < 1:
            raise ConfigError("delta_fraction must lie in [0, 1)")
        if self.n_trott is not None and self.trotter_slices is not None:
            raise ConfigError("give n_trott or trotter_slices, not both")
        for lam in self.lambdas:
            if not 0 <= float(lam) < 1:
                raise ConfigError(f"lambdas: {lam!r} outside [0, 1)")
        if self.morph is not None:
            grid = self.morph.get("alpha_grid")
            if isinstance(grid, list):
                arr = np.asarray(grid, dtype=float)
                if np.any(arr < 0) or np.any(arr > 1) or np.any(np.diff(arr) <= 0) or arr[-1] != 1.0:
                    raise ConfigError("morph.alpha_grid must ascend within [0, 1] and end at 1")
        return self

    def path(self, name: str | None) -> Path | None:
        if name is None:
            return None
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    data: dict = {}
    base = "."
    if path is not None:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        base = str(path.parent)
    data = {**data, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.setdefault("base_dir", base)
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_hamiltonian(path: Path) -> PauliSum:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"hamiltonian: cannot read {path}: {exc}") from exc
    return parse_pauli_sum(text)


@dataclass
class System:
    """Everything a run needs, resolved from the config."""

    psi0: np.ndarray
    spectrum: Spectrum
    state: SpectralState
    hamiltonian: PauliSum | None = None

    @property
    def target(self) -> np.ndarray:
        return self.spectrum.eigenvectors[:, self.state.target_index]

    def exact_propagator(self) -> Propagator:
        return Propagator.exact(self.spectrum)


def _load_state_vector(cfg: ExperimentConfig, spec: Spectrum, n_qubits: int | None) -> np.ndarray:
    init = cfg.initial_state
    if init is None or init == "exp-tail" or (isinstance(init, dict) and init.get("profile") == "exp-tail"):
        weight = init.get("ground_weight", 0.2) if isinstance(init, dict) else 0.2
        amps = exp_tail_amplitudes(spec.energies, weight)
        return spec.eigenvectors @ amps
    if isinstance(init, str):
        init = {"bitstring": init}
    if not isinstance(init, dict):
        raise ConfigError("initial_state must be a bitstring, 'exp-tail' or a mapping")
    if "bitstring" in init:
        bits = str(init["bitstring"])
        if n_qubits is not None and len(bits) != n_qubits:
            raise ConfigError(f"initial_state.bitstring has {len(bits)} bits, register has {n_qubits}")
        try:
            return basis_state(bits)
        except ValueError as exc:
            raise ConfigError(f"initial_state.bitstring: {exc}") from exc
    if "file" in init:
        p = cfg.path(init["file"])
        try:
            if p.suffix == ".npy":
                psi = np.load(p).astype(complex)
            else:
                raw = json.loads(p.read_text())
                psi = np.array([complex(re, im) for re, im in raw["amplitudes"]])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"initial_state.file: {exc}") from exc
        if len(psi) != spec.dim:
            raise ConfigError("initial_state.file has the wrong dimension")
        return psi / np.linalg.norm(psi)
    raise ConfigError(f"initial_state: unrecognized mapping {sorted(init)}")


def resolve_system(cfg: ExperimentConfig) -> System:
    if cfg.hamiltonian:
        h = load_hamiltonian(cfg.path(cfg.hamiltonian))
        spec = diagonalize(h)
        psi0 = _load_state_vector(cfg, spec, h.n_qubits)
        ss = spectral_overlaps(spec, psi0, cfg.target_index, cfg.occupancy_threshold)
        return System(psi0, spec, ss, h)
    if cfg.spectrum:
        try:
            ss = SpectralState.from_json(cfg.path(cfg.spectrum).read_text())
        except OSError as exc:
            raise ConfigError(f"spectrum: {exc}") from exc
    elif cfg.synthetic:
        opts = dict(cfg.synthetic)
        try:
            ss = synth_spectrum(
                int(opts.pop("n_levels")),
                float(opts.pop("gap")),
                float(opts.pop("e_max")),
                opts.pop("weights", "uniform"),
                int(opts.pop("seed", cfg.seed)),
                opts.pop("target_weight", None),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"synthetic: {exc}") from exc
        if opts:
            raise ConfigError(f"synthetic: unknown keys {sorted(opts)}")
    else:
        raise ConfigError("no Hamiltonian source: set hamiltonian, spectrum or synthetic")
    ss = SpectralState(ss.energies, ss.amplitudes, cfg.target_index, cfg.occupancy_threshold)
    spec = ss.spectrum()
    return System(ss.amplitudes.copy(), spec, ss, None)


def offset_for_fraction(ss: SpectralState, fraction: float, threshold: float = 0.0) -> float:
    """delta > 0 with delta = fraction * gap(E_nu + delta), gap measured from the estimate."""
    if fraction == 0:
        return 0.0
    e_nu = ss.target_energy
    occupied = [j for j in range(len(ss.energies)) if j != ss.target_index and ss.weights[j] > threshold]
    levels = ss.energies[occupied]

    def excess(d: float) -> float:
        return d - fraction * np.min(np.abs(e_nu + d - levels))

    upper = np.min(np.abs(e_nu - levels))
    return float(brentq(excess, 0.0, upper))


def resolve_params(cfg: ExperimentConfig, system: System, regime: str = "exact") -> SpectralParams:
    if isinstance(cfg.params, dict):
        try:
            return SpectralParams(**{k: float(v) for k, v in cfg.params.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"params: {exc}") from exc
    if cfg.params != "derive":
        raise ConfigError("params must be 'derive' or a mapping")
    ss = system.state
    delta = 0.0
    try:
        if regime == "approx":
            if cfg.delta is not None:
                delta = float(cfg.delta)
            else:
                fraction = 1 / 3 if cfg.delta_fraction is None else cfg.delta_fraction
                delta = offset_for_fraction(ss, fraction, cfg.occupancy_threshold)
        return derive_params(ss, ss.target_energy + delta, cfg.occupancy_threshold)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def resolve_n_trott(cfg: ExperimentConfig, params: SpectralParams) -> float:
    from .prep import build_schedule

    if cfg.n_trott is not None:
        return float(cfg.n_trott)
    if cfg.trotter_slices is not None:
        shortest = build_schedule(params.gap, params.e_max).times[-1]
        return cfg.trotter_slices / shortest
    raise ConfigError("trotter evolution needs n_trott or trotter_slices")
