"""
Repeated single-ancilla filtering towards a Hamiltonian eigenstate.

One iteration with evolution time t maps each eigencomponent
c_j |phi_j>  ->  c_j cos((E_j - E_tilde) t) |phi_j>   (ancilla outcome 0).

Two circuit variants are simulated:

``cosine``
    H . R_z(-2 E_tilde t) . exp(-i t H (x) Z_anc) . H on the ancilla.
    Outcome-0 amplitude of an eigenstate: cos((E_j - E_tilde) t).
``pe``
    Single-bit phase estimation: H . controlled-U(2t) . P(2 E_tilde t) . H.
    Outcome-0 amplitude: exp(-i (E_j - E_tilde) t) cos((E_j - E_tilde) t).

Both variants charge t of simulation time per iteration.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds
from .errors import NumericalError, SuppressionError
from .evolution import Propagator, controlled_evolve, coupled_evolve
from .hamiltonian import PauliSum, SpectralParams, SpectralState, Spectrum, diagonalize

__all__ = [
    "Schedule",
    "PrepConfig",
    "IterationRecord",
    "PrepTrace",
    "PrepResult",
    "build_schedule",
    "iterate_once",
    "analytic_state",
    "analytic_trace",
    "run_postselected",
    "run_sampled",
    "sample_total_time",
    "variant_equivalence_check",
]

COSINE = "cosine"
PE = "pe"
VARIANTS = (COSINE, PE)
SUPPRESSION_FLOOR = 1e-14


@dataclass(frozen=True)
class Schedule:
    period: int
    times: np.ndarray
    gap: float
    e_max: float

    def time(self, step: int) -> float:
        """Duration of iteration ``step`` (1-based)."""
        return float(self.times[(step - 1) % self.period])

    def prefix(self, k: int) -> np.ndarray:
        """Durations of iterations 1..k."""
        return np.array([self.time(step) for step in range(1, k + 1)])


def build_schedule(gap: float, e_max: float) -> Schedule:
    """Halving schedule t_l = pi / (2**(l+1) gap), l = 0..N-1, longest first."""
    if not gap > 0:
        raise ValueError("gap must be positive")
    if e_max < gap:
        raise ValueError("e_max must be at least gap")
    ratio = math.log2(e_max / gap)
    period = math.ceil(ratio - 1e-12) + 1
    times = np.array([math.pi / (2 ** (l + 1) * gap) for l in range(period)])
    return Schedule(period, times, float(gap), float(e_max))


@dataclass(frozen=True)
class PrepConfig:
    """
    Parameters
    ----------
    stop : {"fidelity", "guarantee", "never"}
        ``fidelity`` stops once the true fidelity reaches 1 - eps (needs the
        target eigenvector, a simulation privilege); ``guarantee`` runs the
        bounded iteration count k_bar; ``never`` runs ``max_iterations``.
    """

    params: SpectralParams
    variant: str = COSINE
    mode: str = "postselect"
    target_infidelity: float = 1e-8
    max_iterations: int = 10_000
    rng_seed: int = 0
    stop: str = "fidelity"
    target_index: int = 0
    max_restarts: int = 10_000_000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.mode not in ("postselect", "sampled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 < self.target_infidelity < 1:
            raise ValueError("target_infidelity must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stop not in ("fidelity", "guarantee", "never"):
            raise ValueError(f"unknown stop rule {self.stop!r}")

    @property
    def schedule(self) -> Schedule:
        return build_schedule(self.params.gap, self.params.e_max)

    def echo(self) -> dict:
        out = asdict(self)
        out["params"] = asdict(self.params)
        return out


@dataclass(frozen=True)
class IterationRecord:
    k: int
    t: float
    p_k: float
    P_k: float
    fidelity: float
    cum_sim_time: float


CSV_FIELDS = ("k", "t", "p_k", "P_k", "fidelity", "cum_sim_time")


@dataclass
class PrepTrace:
    records: list[IterationRecord] = field(default_factory=list)
    restarts: int = 0
    total_sim_time: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def k(self) -> np.ndarray:
        return np.array([r.k for r in self.records])

    @property
    def fidelity(self) -> np.ndarray:
        return np.array([r.fidelity for r in self.records])

    @property
    def infidelity(self) -> np.ndarray:
        return 1.0 - self.fidelity

    @property
    def P(self) -> np.ndarray:
        return np.array([r.P_k for r in self.records])

    @property
    def p(self) -> np.ndarray:
        """Conditional success probabilities of iterations 1..k."""
        return np.array([r.p_k for r in self.records[1:]])

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.records[1:]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.records:
            w.writerow([r.k] + [repr(float(getattr(r, f))) for f in CSV_FIELDS[1:]])
        return buf.getvalue()

    def sidecar(self) -> str:
        return json.dumps(
            {"restarts": self.restarts, "total_sim_time": self.total_sim_time, "config": self.config},
            indent=1,
        )

    @classmethod
    def from_csv(cls, text: str, sidecar: str | None = None) -> "PrepTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and tuple(rows[0].keys()) != CSV_FIELDS:
            raise ValueError(f"unexpected trace header {tuple(rows[0].keys())}")
        records = [
            IterationRecord(int(r["k"]), *(float(r[f]) for f in CSV_FIELDS[1:])) for r in rows
        ]
        trace = cls(records)
        if sidecar is not None:
            meta = json.loads(sidecar)
            trace.restarts = int(meta["restarts"])
            trace.total_sim_time = float(meta["total_sim_time"])
            trace.config = meta.get("config", {})
        return trace


@dataclass
class PrepResult:
    trace: PrepTrace
    state: np.ndarray


def iterate_once(
    state: np.ndarray,
    t: float,
    params: SpectralParams,
    prop: Propagator,
    variant: str = COSINE,
) -> tuple[np.ndarray, float]:
    """Apply one circuit with the ancilla starting in |0>; keep outcome 0.

    Returns the renormalized system state and the outcome-0 probability.
    """
    psi = np.asarray(state, dtype=complex)
    # ancilla Hadamard on |0>
    joint = np.stack([psi, psi], axis=1) / math.sqrt(2)
    if variant == COSINE:
        # R_z(theta) = diag(e^{-i theta/2}, e^{i theta/2}), theta = -2 E_tilde t
        theta = -2.0 * params.E_tilde * t
        joint = joint * np.array([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
        joint = coupled_evolve(prop, joint, t)
    elif variant == PE:
        joint = controlled_evolve(prop, joint, 2.0 * t)
        # phase shift P(phi) = diag(1, e^{i phi}), phi = 2 E_tilde t
        joint[:, 1] *= np.exp(2j * params.E_tilde * t)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    kept = (joint[:, 0] + joint[:, 1]) / math.sqrt(2)
    p = float(np.vdot(kept, kept).real)
    if p < SUPPRESSION_FLOOR:
        raise SuppressionError(f"outcome-0 probability {p:.3e} at t={t!r}")
    return kept / math.sqrt(p), p


def analytic_trace(
    ss: SpectralState, times, params: SpectralParams
) -> tuple[np.ndarray, np.ndarray]:
    """Fidelity and P_k for k = 0..len(times) from the cosine-product formula."""
    shifted = ss.energies - params.E_tilde
    times = np.asarray(times, dtype=float)
    factors = np.cos(np.outer(times, shifted)) ** 2  # (k, levels)
    cum = np.vstack([np.ones(len(shifted)), np.cumprod(factors, axis=0)])
    weighted = cum * ss.weights
    P = weighted.sum(axis=1)
    fid = weighted[:, ss.target_index] / P
    return fid, P


def analytic_state(
    ss: SpectralState, times, params: SpectralParams
) -> tuple[np.ndarray, float]:
    """Normalized eigenbasis amplitudes after postselecting on ``times``, and P_k."""
    shifted = ss.energies - params.E_tilde
    amps = ss.amplitudes * np.prod(np.cos(np.outer(np.asarray(times, float), shifted)), axis=0)
    P = float(np.sum(np.abs(amps) ** 2))
    if P < SUPPRESSION_FLOOR:
        raise SuppressionError("all amplitudes suppressed")
    return amps / math.sqrt(P), P


def _resolve_system(psi0, system, config: PrepConfig, prop: Propagator | None):
    """Return (psi0, target vector, propagator, spectral state) for a run."""
    nu = config.target_index
    if isinstance(system, SpectralState):
        spec = system.spectrum()
        if psi0 is None:
            psi0 = system.amplitudes
        target = spec.eigenvectors[:, system.target_index]
        ss = system
    else:
        if isinstance(system, PauliSum):
            spec = diagonalize(system)
        elif isinstance(system, Spectrum):
            spec = system
        else:
            raise TypeError(f"cannot run on {type(system).__name__}")
        if psi0 is None:
            raise ValueError("psi0 is required for a Hamiltonian or spectrum")
        target = spec.eigenvectors[:, nu]
        c = spec.eigenvectors.conj().T @ np.asarray(psi0, dtype=complex)
        ss = SpectralState(spec.energies, c / np.linalg.norm(c), nu)
    if prop is None:
        prop = Propagator.exact(spec)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state is not normalized")
    return psi0, target, prop, ss


def guaranteed_iterations(config: PrepConfig, c_sq: float) -> int:
    p = config.params
    N = config.schedule.period
    if p.delta == 0:
        return bounds.k_bar_exact(c_sq, config.target_infidelity, N)
    return bounds.k_bar_approx(c_sq, config.target_infidelity, N, p.delta, p.gap)


def run_postselected(
    psi0, system, config: PrepConfig, prop: Propagator | None = None
) -> PrepResult:
    """Iterate, always keeping ancilla outcome 0.

    ``system`` is a SpectralState (simulated in its own eigenbasis; ``psi0``
    may be None), a Spectrum or a PauliSum.  Fidelity is measured against
    eigenvector ``config.target_index``.
    """
    psi, target, prop, ss = _resolve_system(psi0, system, config, prop)
    schedule = config.schedule
    eps = config.target_infidelity
    n_steps = config.max_iterations
    if config.stop == "guarantee":
        n_steps = min(n_steps, guaranteed_iterations(config, ss.target_weight))

    fid = float(abs(np.vdot(target, psi)) ** 2)
    records = [IterationRecord(0, 0.0, 1.0, 1.0, fid, 0.0)]
    P, cum = 1.0, 0.0
    for k in range(1, n_steps + 1):
        if config.stop == "fidelity" and 1.0 - fid <= eps:
            break
        t = schedule.time(k)
        psi, p = iterate_once(psi, t, config.params, prop, config.variant)
        P *= p
        cum += t
        fid = float(abs(np.vdot(target, psi)) ** 2)
        records.append(IterationRecord(k, t, p, P, fid, cum))
    trace = PrepTrace(records, 0, cum, config.echo())
    return PrepResult(trace, psi)


def sample_total_time(
    p_seq, t_seq, rng: np.random.Generator, max_restarts: int = 10_000_000
) -> tuple[float, int]:
    """One full-restart attempt sequence: returns (total time, restarts).

    Step k succeeds with probability ``p_seq[k]``; a failure sends the run
    back to step 1, and the time already spent stays on the bill.
    """
    p_seq = np.asarray(p_seq, dtype=float)
    t_seq = np.asarray(t_seq, dtype=float)
    total, restarts, k = 0.0, 0, 0
    n = len(p_seq)
    while k < n:
        total += t_seq[k]
        if rng.random() < p_seq[k]:
            k += 1
        else:
            restarts += 1
            if restarts > max_restarts:
                raise NumericalError(f"restart budget of {max_restarts} exhausted")
            k = 0
    return float(total), restarts


def run_sampled(
    psi0,
    system,
    config: PrepConfig,
    prop: Propagator | None = None,
    rng: np.random.Generator | None = None,
    reference: PrepResult | None = None,
) -> PrepResult:
    """Draw ancilla outcomes; any outcome 1 restarts from psi0.

    The state after k consecutive successes does not depend on the draws, so
    the postselected run (``reference``, computed if missing) supplies the
    conditional probabilities and the final state; only the outcome draws and
    the time bookkeeping happen here.
    """
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if reference is None:
        reference = run_postselected(psi0, system, config, prop)
    ref = reference.trace
    total, restarts = sample_total_time(ref.p, ref.t, rng, config.max_restarts)
    trace = PrepTrace(list(ref.records), restarts, total, config.echo())
    return PrepResult(trace, reference.state)


def variant_equivalence_check(
    psi0, ss: SpectralState, times, params: SpectralParams, prop: Propagator | None = None
) -> float:
    """max_k of |fidelity_C - fidelity_PE| and |P_k^C - P_k^PE| along ``times``.

    Without ``prop`` the run happens in the eigenbasis of ``ss`` and ``psi0``
    (default: the amplitudes of ``ss``) is read in that basis.
    """
    if prop is None:
        prop = Propagator.exact(ss.spectrum())
    if psi0 is None:
        psi0 = ss.amplitudes
    target = prop.spectrum.eigenvectors[:, ss.target_index]
    a = b = np.asarray(psi0, dtype=complex)
    Pa = Pb = 1.0
    worst = 0.0
    for t in times:
        a, pa = iterate_once(a, t, params, prop, COSINE)
        b, pb = iterate_once(b, t, params, prop, PE)
        Pa *= pa
        Pb *= pb
        fa = abs(np.vdot(target, a)) ** 2
        fb = abs(np.vdot(target, b)) ** 2
        worst = max(worst, abs(fa - fb), abs(Pa - Pb))
    return float(worst)
