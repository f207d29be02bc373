"""
Density-matrix simulation of the cosine circuit under depolarizing gate noise.

Every gate (ancilla Hadamard, ancilla z-rotation, ancilla-coupled Pauli
gadget) is followed by a single-qubit depolarizing channel on every qubit of
the register, ancilla included.  Qubit ordering matches the statevector
path: system qubits 0..n-1 (most significant first), ancilla last.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SuppressionError
from .evolution import TROTTER, Propagator
from .hamiltonian import PauliSum, SpectralParams, diagonalize, pauli_action
from .prep import PrepConfig

__all__ = [
    "DM_CAP",
    "DensityMatrix",
    "NoiseModel",
    "Gate",
    "depolarize",
    "apply_unitary_gate",
    "noisy_gate",
    "iteration_gates",
    "NoisyRecord",
    "NoisyTrace",
    "run_noisy_prep",
    "plateau",
]

DM_CAP = 7


@dataclass(frozen=True)
class NoiseModel:
    lam: float

    def __post_init__(self):
        if not 0 <= self.lam < 1:
            raise ValueError("lambda must lie in [0, 1)")


@dataclass
class DensityMatrix:
    data: np.ndarray

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.dim)))

    @classmethod
    def pure(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def fidelity(self, phi: np.ndarray) -> float:
        """<phi| rho |phi>."""
        return float(np.vdot(phi, self.data @ phi).real)

    def check(self, atol: float = 1e-12, min_eig: float = -1e-9) -> None:
        if abs(self.trace() - 1.0) > atol:
            raise ValueError(f"trace {self.trace()!r} != 1")
        if np.max(np.abs(self.data - self.data.conj().T)) > atol:
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(self.data).min() < min_eig:
            raise ValueError("density matrix has a negative eigenvalue")


def _split(rho: np.ndarray, qubit: int, n: int) -> np.ndarray:
    left, right = 2**qubit, 2 ** (n - qubit - 1)
    return rho.reshape(left, 2, right, left, 2, right)


def depolarize(rho: np.ndarray, qubit: int, lam: float, n_qubits: int | None = None) -> np.ndarray:
    """(1 - lam) rho + lam/3 (X rho X + Y rho Y + Z rho Z) on one qubit.

    Acting on the 2x2 block structure of ``qubit``: populations relax towards
    each other by 2 lam / 3, coherences shrink by a factor 1 - 4 lam / 3.
    """
    n = n_qubits if n_qubits is not None else int(round(math.log2(rho.shape[0])))
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} outside register of {n}")
    if lam == 0:
        return rho
    t = _split(rho, qubit, n).copy()
    a = t[:, 0, :, :, 0, :].copy()
    d = t[:, 1, :, :, 1, :].copy()
    mix = 2.0 * lam / 3.0
    t[:, 0, :, :, 0, :] = (1 - mix) * a + mix * d
    t[:, 1, :, :, 1, :] = (1 - mix) * d + mix * a
    shrink = 1.0 - 4.0 * lam / 3.0
    t[:, 0, :, :, 1, :] *= shrink
    t[:, 1, :, :, 0, :] *= shrink
    return t.reshape(rho.shape)


@dataclass(frozen=True)
class Gate:
    """kind: ``hadamard`` | ``ancilla-rotation`` | ``pauli-gadget`` | ``controlled-gadget``.

    ``ops`` is the Pauli string on the system qubits; a controlled gadget
    appends Z on the ancilla.  Rotation and gadget angles follow
    exp(-i theta/2 G).
    """

    kind: str
    qubit: int = -1
    ops: str = ""
    theta: float = 0.0


def _apply_pauli_rows(ops: str, rho: np.ndarray) -> np.ndarray:
    perm, phase = pauli_action(ops)
    return phase[:, None] * rho[perm]


def _apply_pauli_cols(ops: str, rho: np.ndarray) -> np.ndarray:
    """rho @ Q for a Pauli string Q."""
    perm, phase = pauli_action(ops)
    return rho[:, perm] * phase[perm][None, :]


def apply_unitary_gate(rho: np.ndarray, gate: Gate, n_total: int) -> np.ndarray:
    if gate.kind == "hadamard":
        t = _split(rho, gate.qubit, n_total)
        h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
        t = np.einsum("ab,lbrmcs,dc->larmds", h, t, h)
        return t.reshape(rho.shape)
    if gate.kind == "ancilla-rotation":
        phases = np.array([np.exp(-0.5j * gate.theta), np.exp(0.5j * gate.theta)])
        diag = np.tile(phases, rho.shape[0] // 2)
        return diag[:, None] * rho * diag.conj()[None, :]
    if gate.kind in ("pauli-gadget", "controlled-gadget"):
        ops = gate.ops + ("Z" if gate.kind == "controlled-gadget" else "I")
        if len(ops) != n_total:
            raise ValueError("gadget string does not match the register")
        c, s = math.cos(gate.theta / 2), math.sin(gate.theta / 2)
        q_rho = _apply_pauli_rows(ops, rho)
        rho_q = _apply_pauli_cols(ops, rho)
        q_rho_q = _apply_pauli_cols(ops, q_rho)
        return c * c * rho + s * s * q_rho_q + 1j * c * s * (rho_q - q_rho)
    raise ValueError(f"unknown gate kind {gate.kind!r}")


def noisy_gate(rho: np.ndarray, gate: Gate, noise: NoiseModel, n_total: int) -> np.ndarray:
    """Unitary conjugation, then depolarizing noise on every register qubit."""
    out = apply_unitary_gate(rho, gate, n_total)
    if noise.lam > 0:
        for q in range(n_total):
            out = depolarize(out, q, noise.lam, n_total)
    return out


def iteration_gates(h: PauliSum, t: float, params: SpectralParams, prop: Propagator) -> list[Gate]:
    """Gate list of one cosine-circuit iteration with Trotterized evolution."""
    anc = h.n_qubits
    gates = [Gate("hadamard", anc), Gate("ancilla-rotation", anc, theta=-2.0 * params.E_tilde * t)]
    s = prop.slices(t)
    for _ in range(s):
        for term in h.terms:
            gates.append(Gate("controlled-gadget", ops=term.ops, theta=2.0 * term.coefficient * t / s))
    gates.append(Gate("hadamard", anc))
    return gates


@dataclass(frozen=True)
class NoisyRecord:
    k: int
    fidelity: float
    P_k: float


@dataclass
class NoisyTrace:
    records: list[NoisyRecord] = field(default_factory=list)
    lam: float = 0.0

    @property
    def fidelity(self) -> np.ndarray:
        return np.array([r.fidelity for r in self.records])

    @property
    def P(self) -> np.ndarray:
        return np.array([r.P_k for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k", "fidelity", "P_k"))
        for r in self.records:
            w.writerow((r.k, repr(r.fidelity), repr(r.P_k)))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, lam: float = 0.0) -> "NoisyTrace":
        rows = csv.DictReader(io.StringIO(text))
        return cls([NoisyRecord(int(r["k"]), float(r["fidelity"]), float(r["P_k"])) for r in rows], lam)


def run_noisy_prep(
    rho0: np.ndarray | DensityMatrix,
    h: PauliSum,
    config: PrepConfig,
    prop: Propagator,
    noise: NoiseModel,
    target: np.ndarray | None = None,
    check_every: int = 0,
) -> NoisyTrace:
    """Postselected density-matrix run for ``config.max_iterations`` iterations.

    Each iteration tensors a fresh ancilla |0><0| onto the system, applies
    the noisy gate list, projects the ancilla onto 0 and renormalizes.
    Fidelity is taken against the noiseless eigenvector ``target`` (default:
    eigenvector ``config.target_index`` of ``h``).
    """
    if h.n_qubits > DM_CAP:
        raise ConfigError(f"{h.n_qubits} qubits exceeds the density-matrix cap of {DM_CAP}")
    if prop.kind != TROTTER:
        raise ValueError("the noisy run is gate based and needs a trotter propagator")
    rho = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    if target is None:
        target = diagonalize(h).eigenvectors[:, config.target_index]
    schedule = config.schedule
    n_total = h.n_qubits + 1
    anc0 = np.array([[1, 0], [0, 0]], dtype=complex)
    fid = float(np.vdot(target, rho @ target).real)
    records = [NoisyRecord(0, fid, 1.0)]
    P = 1.0
    for k in range(1, config.max_iterations + 1):
        t = schedule.time(k)
        joint = np.kron(rho, anc0)
        for gate in iteration_gates(h, t, config.params, prop):
            joint = noisy_gate(joint, gate, noise, n_total)
        kept = joint[0::2, 0::2]
        p = float(np.trace(kept).real)
        if p < 1e-14:
            raise SuppressionError(f"trace collapsed to {p:.3e} at iteration {k}")
        rho = kept / p
        P *= p
        fid = float(np.vdot(target, rho @ target).real)
        records.append(NoisyRecord(k, fid, P))
        if check_every and k % check_every == 0:
            DensityMatrix(rho).check()
    return NoisyTrace(records, noise.lam)


def plateau(trace, period: int, window_periods: int = 2) -> float:
    """Mean fidelity over the last ``window_periods * period`` iterations."""
    fid = np.asarray(trace.fidelity if hasattr(trace, "fidelity") else trace)
    w = window_periods * period
    return float(np.mean(fid[-w:]))
