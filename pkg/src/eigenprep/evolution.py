"""
Real-time evolution U(t) = exp(-iHt): exact (spectral) and first-order Trotter.

Joint register layout: a statevector on system + ancilla is stored as an
array of shape ``(2**n, 2)``; column ``a`` holds the system branch with the
ancilla in ``|a>``.  Flattened, the ancilla is the least significant qubit.

Two ancilla-conditioned evolutions are provided:

* :func:`controlled_evolve` -- identity on the ancilla-0 branch, U(t) on the
  ancilla-1 branch.
* :func:`coupled_evolve` -- exp(-i t H (x) Z_anc): U(t) on branch 0 and U(-t)
  on branch 1.  Trotterized, every factor is a single Pauli gadget on n+1
  qubits (the term's string with a Z appended on the ancilla).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .hamiltonian import DENSE_CAP, PauliSum, PauliTerm, Spectrum, apply_pauli, diagonalize, to_dense

__all__ = [
    "Propagator",
    "RteErrorReport",
    "exact_evolve",
    "apply_pauli_gadget",
    "apply_coupled_gadget",
    "trotter_evolve",
    "controlled_evolve",
    "coupled_evolve",
    "propagator_matrix",
    "measure_rte_error",
]

EXACT = "exact-spectral"
TROTTER = "trotter-first-order"


@dataclass(frozen=True)
class Propagator:
    kind: str
    spectrum: Spectrum | None = None
    hamiltonian: PauliSum | None = None
    n_trott: float | None = None

    def __post_init__(self):
        if self.kind == EXACT:
            if self.spectrum is None or self.spectrum.eigenvectors is None:
                raise ValueError("exact propagator needs a spectrum with eigenvectors")
        elif self.kind == TROTTER:
            if self.hamiltonian is None:
                raise ValueError("trotter propagator needs a PauliSum")
            if self.n_trott is None or not self.n_trott > 0:
                raise ValueError("trotter propagator needs positive slices per unit time")
        else:
            raise ValueError(f"unknown propagator kind {self.kind!r}")

    @classmethod
    def exact(cls, source: Spectrum | PauliSum) -> "Propagator":
        spec = diagonalize(source) if isinstance(source, PauliSum) else source
        return cls(EXACT, spectrum=spec)

    @classmethod
    def trotter(cls, h: PauliSum, n_trott: float) -> "Propagator":
        return cls(TROTTER, hamiltonian=h, n_trott=float(n_trott))

    @property
    def dim(self) -> int:
        if self.kind == EXACT:
            return self.spectrum.dim
        return self.hamiltonian.dim

    def slices(self, t: float) -> int:
        """ceil(|t| * n_trott), at least 1."""
        x = abs(t) * self.n_trott
        # absorb round-off from t = pi / (2**l * gap) style products
        return max(1, math.ceil(x - 1e-9 * max(1.0, x)))

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.kind == EXACT:
            return exact_evolve(self.spectrum, psi, t)
        return trotter_evolve(self.hamiltonian, psi, t, self)


@dataclass(frozen=True)
class RteErrorReport:
    epsilon_rte: float
    worst_time: float
    per_time_errors: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "epsilon_rte": self.epsilon_rte,
            "worst_time": self.worst_time,
            "per_time_errors": [{"t": t, "error": e} for t, e in self.per_time_errors],
        }


def exact_evolve(spec: Spectrum, psi: np.ndarray, t: float) -> np.ndarray:
    """V diag(exp(-i E t)) V^dagger psi; psi may carry trailing batch axes."""
    if spec.eigenvectors is None:
        raise ValueError("spectrum carries no eigenvectors")
    v = spec.eigenvectors
    phases = np.exp(-1j * spec.energies * t)
    coeffs = v.conj().T @ psi
    shape = (-1,) + (1,) * (np.ndim(psi) - 1)
    return v @ (phases.reshape(shape) * coeffs)


def apply_pauli_gadget(psi: np.ndarray, term: PauliTerm | str, theta: float) -> np.ndarray:
    """exp(-i theta/2 P) psi = cos(theta/2) psi - i sin(theta/2) P psi.

    Only the Pauli string of ``term`` is used; its coefficient is ignored.
    """
    ops = term.ops if isinstance(term, PauliTerm) else term
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return c * psi - 1j * s * apply_pauli(ops, psi)


def apply_coupled_gadget(joint: np.ndarray, term: PauliTerm | str, theta: float) -> np.ndarray:
    """exp(-i theta/2 P (x) Z_anc) on a ``(2**n, 2)`` joint state."""
    ops = term.ops if isinstance(term, PauliTerm) else term
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    z = np.array([1.0, -1.0])
    return c * joint - 1j * s * apply_pauli(ops, joint) * z


def trotter_evolve(h: PauliSum, psi: np.ndarray, t: float, prop: Propagator) -> np.ndarray:
    """First-order product formula in the PauliSum's own term order.

    Each of the ``prop.slices(t)`` slices applies, term by term,
    exp(-i c P t/s) as a gadget with angle 2 c t / s.
    """
    if prop.kind != TROTTER:
        raise ValueError("trotter_evolve needs a trotter propagator")
    s = prop.slices(t)
    out = np.array(psi, dtype=complex)
    for _ in range(s):
        for term in h.terms:
            out = apply_pauli_gadget(out, term, 2.0 * term.coefficient * t / s)
    return out


def _as_joint(joint: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(joint, dtype=complex)
    if arr.ndim == 1:
        return arr.reshape(-1, 2), True
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("joint state must have shape (2**n, 2) or (2**(n+1),)")
    return arr, False


def controlled_evolve(prop: Propagator, joint: np.ndarray, t: float) -> np.ndarray:
    """Identity on the ancilla-0 branch, U(t) on the ancilla-1 branch.

    The Trotter kind is the same product of gadgets applied to the ancilla-1
    branch only, i.e. each gadget controlled on the ancilla.
    """
    arr, flat = _as_joint(joint)
    out = arr.copy()
    out[:, 1] = prop.evolve(arr[:, 1], t)
    return out.reshape(-1) if flat else out


def coupled_evolve(prop: Propagator, joint: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t H (x) Z_anc): U(t) on branch 0, U(-t) on branch 1."""
    arr, flat = _as_joint(joint)
    if prop.kind == EXACT:
        out = np.empty_like(arr)
        out[:, 0] = exact_evolve(prop.spectrum, arr[:, 0], t)
        out[:, 1] = exact_evolve(prop.spectrum, arr[:, 1], -t)
    else:
        h = prop.hamiltonian
        s = prop.slices(t)
        out = arr.copy()
        for _ in range(s):
            for term in h.terms:
                out = apply_coupled_gadget(out, term, 2.0 * term.coefficient * t / s)
    return out.reshape(-1) if flat else out


def propagator_matrix(prop: Propagator, t: float) -> np.ndarray:
    """Dense unitary realized by ``prop``, built column by column from basis states."""
    d = prop.dim
    if d > 2**DENSE_CAP:
        raise ConfigError("register too large for a dense unitary")
    return prop.evolve(np.eye(d, dtype=complex), t)


def measure_rte_error(
    h: PauliSum, prop: Propagator, E_tilde: float, times
) -> RteErrorReport:
    """max_t || U(t) e^{i E_tilde t} - exp(-i (H - E_tilde) t) || in operator norm."""
    spec = diagonalize(to_dense(h))
    per_time = []
    for t in times:
        t = float(t)
        realized = propagator_matrix(prop, t) * np.exp(1j * E_tilde * t)
        ideal = exact_evolve(spec, np.eye(spec.dim, dtype=complex), t) * np.exp(1j * E_tilde * t)
        err = float(np.linalg.norm(realized - ideal, ord=2))
        per_time.append((t, err))
    if not per_time:
        raise ValueError("no times given")
    worst_t, worst = max(per_time, key=lambda x: x[1])
    return RteErrorReport(worst, worst_t, per_time)
