"""
Pauli-sum Hamiltonians and the spectral data the preparation loop consumes.

A Hamiltonian is a real-weighted sum of Pauli strings

    H = sum_i c_i P_i,    P_i = sigma_0 (x) sigma_1 (x) ... (x) sigma_{n-1}

Bit convention: qubit 0 is the leftmost character of a bitstring / operator
string and the most significant bit of a statevector index.

Text format (one term per line)::

    # comment
    qubits: 3
    -0.25            <- identity term
    0.5 X0 Z2
    0.1 Y1
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, NumericalError

__all__ = [
    "DENSE_CAP",
    "ParseError",
    "PauliTerm",
    "PauliSum",
    "Spectrum",
    "SpectralState",
    "SpectralParams",
    "parse_pauli_sum",
    "format_pauli_sum",
    "to_dense",
    "diagonalize",
    "spectral_overlaps",
    "derive_params",
    "morph",
    "build_h_init",
    "synth_spectrum",
    "exp_tail_amplitudes",
    "random_pauli_sum",
    "basis_state",
]

DENSE_CAP = 14
PAULI_LETTERS = "IXYZ"


class ParseError(ConfigError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    ops: str

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError(f"non-finite coefficient {self.coefficient!r}")
        if any(c not in PAULI_LETTERS for c in self.ops):
            raise ValueError(f"invalid Pauli string {self.ops!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.ops)

    @property
    def is_identity(self) -> bool:
        return set(self.ops) <= {"I"}

    def label(self) -> str:
        parts = [f"{p}{q}" for q, p in enumerate(self.ops) if p != "I"]
        return " ".join(parts)


@dataclass(frozen=True)
class PauliSum:
    n_qubits: int
    terms: tuple[PauliTerm, ...]
    metadata: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if len(self.terms) < 1:
            raise ValueError("a PauliSum needs at least one term")
        for term in self.terms:
            if term.n_qubits != self.n_qubits:
                raise ValueError(
                    f"term {term.ops!r} acts on {term.n_qubits} qubits, expected {self.n_qubits}"
                )

    @classmethod
    def from_dict(cls, terms: Mapping[str, float]) -> "PauliSum":
        """Build from ``{"XZI": 0.5, ...}``; term order follows the mapping."""
        items = [PauliTerm(float(c), s) for s, c in terms.items()]
        if not items:
            raise ValueError("empty term mapping")
        return cls(items[0].n_qubits, tuple(items))

    @property
    def term_count(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def coefficient_norm(self) -> float:
        """Sum of absolute coefficients, an upper bound on the operator norm."""
        return float(sum(abs(t.coefficient) for t in self.terms))


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    @classmethod
    def from_energies(cls, energies: Sequence[float]) -> "Spectrum":
        """A diagonal spectrum: eigenvectors are the standard basis.

        Used to simulate a bare (energy, amplitude) list in its own eigenbasis.
        """
        e = np.asarray(energies, dtype=float)
        order = np.argsort(e, kind="stable")
        if np.any(order != np.arange(len(e))):
            raise ValueError("energies must be sorted ascending")
        return cls(e, np.eye(len(e), dtype=complex))


@dataclass(frozen=True)
class SpectralState:
    energies: np.ndarray
    amplitudes: np.ndarray
    target_index: int = 0
    occupancy_threshold: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        c = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "amplitudes", c)
        if e.shape != c.shape or e.ndim != 1:
            raise ValueError("energies and amplitudes must be 1-d arrays of equal length")
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"amplitudes are not normalized (sum |c|^2 = {norm!r})")
        if not 0 <= self.target_index < len(e):
            raise ValueError(f"target_index {self.target_index} out of range")
        if abs(c[self.target_index]) == 0:
            raise ValueError("initial state has no overlap with the target")

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def target_weight(self) -> float:
        return float(self.weights[self.target_index])

    @property
    def target_energy(self) -> float:
        return float(self.energies[self.target_index])

    def spectrum(self) -> Spectrum:
        return Spectrum.from_energies(self.energies)

    def to_json(self) -> str:
        entries = [
            {"energy": float(e), "re": float(c.real), "im": float(c.imag)}
            for e, c in zip(self.energies, self.amplitudes)
        ]
        return json.dumps(
            {
                "entries": entries,
                "target_index": self.target_index,
                "occupancy_threshold": self.occupancy_threshold,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "SpectralState":
        try:
            data = json.loads(text)
            entries = data["entries"]
            energies = [float(x["energy"]) for x in entries]
            amps = [complex(float(x["re"]), float(x.get("im", 0.0))) for x in entries]
            target = int(data.get("target_index", 0))
            thr = float(data.get("occupancy_threshold", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed spectral-state JSON: {exc}") from exc
        try:
            return cls(np.array(energies), np.array(amps), target, thr)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SpectralParams:
    """Prior knowledge handed to the algorithm.

    ``E_tilde`` estimates the target energy to within ``delta``; ``gap`` and
    ``e_max`` bound the distance from ``E_tilde`` to every occupied
    off-target level from below and above.
    """

    E_tilde: float
    delta: float
    gap: float
    e_max: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not self.gap > 0:
            raise ValueError(f"gap must be positive, got {self.gap!r}")
        if self.e_max < self.gap:
            raise ValueError(f"e_max ({self.e_max}) is below gap ({self.gap})")
        if self.delta >= self.gap:
            raise ValueError(f"delta ({self.delta}) must be smaller than gap ({self.gap})")


# --------------------------------------------------------------------------
# parsing


def _parse_coefficient(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        pass
    try:
        z = complex(tok.replace("i", "j"))
    except ValueError:
        raise ParseError(lineno, f"cannot parse coefficient {tok!r}") from None
    if z.imag != 0:
        raise ParseError(lineno, f"non-real coefficient {tok!r}")
    return z.real


def parse_pauli_sum(text: str, n_qubits: int | None = None) -> PauliSum:
    """Parse the line-oriented Pauli-sum format.

    The register size comes from ``n_qubits``, else a ``qubits: <n>`` header,
    else the largest qubit index seen plus one.
    """
    header_n = None
    raw: list[tuple[int, float, dict[int, str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.lower().startswith("qubits"):
            key, _, value = stripped.partition(":")
            if key.strip().lower() != "qubits":
                raise ParseError(lineno, f"unexpected header {stripped!r}")
            try:
                header_n = int(value)
            except ValueError:
                raise ParseError(lineno, f"bad qubit count {value.strip()!r}") from None
            if header_n < 1:
                raise ParseError(lineno, "qubit count must be positive")
            continue
        toks = stripped.split()
        coeff = _parse_coefficient(toks[0], lineno)
        if not math.isfinite(coeff):
            raise ParseError(lineno, "coefficient must be finite")
        ops: dict[int, str] = {}
        for tok in toks[1:]:
            letter, index = tok[:1].upper(), tok[1:]
            if letter not in "IXYZ" or not index.isdigit():
                raise ParseError(lineno, f"invalid operator {tok!r}")
            q = int(index)
            if q in ops:
                raise ParseError(lineno, f"duplicate qubit index {q}")
            ops[q] = letter
        raw.append((lineno, coeff, ops))

    if not raw:
        raise ParseError(0, "no terms found")
    n = n_qubits if n_qubits is not None else header_n
    if n is None:
        n = 1 + max((max(ops) for _, _, ops in raw if ops), default=0)
    terms = []
    for lineno, coeff, ops in raw:
        if ops and max(ops) >= n:
            raise ParseError(lineno, f"qubit index {max(ops)} >= n_qubits ({n})")
        s = ["I"] * n
        for q, letter in ops.items():
            s[q] = letter
        terms.append(PauliTerm(coeff, "".join(s)))
    return PauliSum(n, tuple(terms))


def format_pauli_sum(h: PauliSum) -> str:
    lines = [f"qubits: {h.n_qubits}"]
    for term in h.terms:
        label = term.label()
        lines.append(f"{term.coefficient!r} {label}".rstrip())
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Pauli action kernels


@lru_cache(maxsize=4096)
def pauli_action(ops: str) -> tuple[np.ndarray, np.ndarray]:
    """Index map and phases such that ``(P @ psi)[y] = phase[y] * psi[perm[y]]``.

    Uses P = i^{#Y} X^x Z^z, with the X and Z masks read off the string.
    """
    n = len(ops)
    xmask = zmask = 0
    n_y = 0
    for q, p in enumerate(ops):
        bit = 1 << (n - 1 - q)
        if p in "XY":
            xmask |= bit
        if p in "ZY":
            zmask |= bit
        n_y += p == "Y"
    idx = np.arange(2**n, dtype=np.int64)
    perm = idx ^ xmask
    # parity of popcount(perm & zmask)
    masked = perm & zmask
    parity = np.zeros(len(idx), dtype=np.int64)
    while np.any(masked):
        parity ^= masked & 1
        masked >>= 1
    phase = (1j**n_y) * (1 - 2 * parity).astype(complex)
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


def apply_pauli(ops: str, psi: np.ndarray) -> np.ndarray:
    """P @ psi along axis 0 (extra trailing axes are carried along)."""
    perm, phase = pauli_action(ops)
    shape = (-1,) + (1,) * (psi.ndim - 1)
    return phase.reshape(shape) * psi[perm]


def to_dense(h: PauliSum, cap: int = DENSE_CAP) -> np.ndarray:
    if h.n_qubits > cap:
        raise ConfigError(f"{h.n_qubits} qubits exceeds the dense cap of {cap}")
    d = h.dim
    mat = np.zeros((d, d), dtype=complex)
    rows = np.arange(d)
    for term in h.terms:
        perm, phase = pauli_action(term.ops)
        mat[rows, perm] += term.coefficient * phase
    return mat


def diagonalize(h: PauliSum | np.ndarray) -> Spectrum:
    mat = to_dense(h) if isinstance(h, PauliSum) else np.asarray(h)
    try:
        energies, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return Spectrum(energies, vecs)


def spectral_overlaps(
    spec: Spectrum, psi0: np.ndarray, target_index: int = 0, occupancy_threshold: float = 0.0
) -> SpectralState:
    if spec.eigenvectors is None:
        raise ValueError("spectrum carries no eigenvectors")
    psi0 = np.asarray(psi0, dtype=complex)
    norm = float(np.vdot(psi0, psi0).real)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"initial state is not normalized (norm^2 = {norm!r})")
    c = spec.eigenvectors.conj().T @ psi0
    return SpectralState(spec.energies.copy(), c, target_index, occupancy_threshold)


def derive_params(
    ss: SpectralState,
    E_tilde: float | None = None,
    occupancy_threshold: float | None = None,
    *,
    gap: float | None = None,
    e_max: float | None = None,
) -> SpectralParams:
    """Read (E_tilde, delta, gap, e_max) off a known spectral state.

    Distances are measured from ``E_tilde`` (not from the true target energy)
    so that the schedule's suppression interval is exactly [gap, e_max].
    Explicit ``gap`` / ``e_max`` override the derived values.
    """
    if E_tilde is None:
        E_tilde = ss.target_energy
    thr = ss.occupancy_threshold if occupancy_threshold is None else occupancy_threshold
    occupied = [
        j for j in range(len(ss.energies)) if j != ss.target_index and ss.weights[j] > thr
    ]
    dist = np.abs(E_tilde - ss.energies[occupied])
    if len(dist) == 0 and (gap is None or e_max is None):
        raise NumericalError("no occupied off-target levels; supply gap and e_max explicitly")
    g = float(dist.min()) if gap is None else float(gap)
    em = float(dist.max()) if e_max is None else float(e_max)
    delta = abs(E_tilde - ss.target_energy)
    if g <= 0:
        raise NumericalError("degenerate target level (zero gap)")
    return SpectralParams(float(E_tilde), delta, g, em)


def morph(h_init: PauliSum, h: PauliSum, alpha: float) -> PauliSum:
    """(1 - alpha) * h_init + alpha * h, as a concatenated term list.

    At the endpoints the zero-weighted side is dropped, so ``alpha == 1``
    returns a PauliSum equal to ``h``.
    """
    if h_init.n_qubits != h.n_qubits:
        raise ValueError("register sizes differ")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    if alpha == 1.0:
        return h
    if alpha == 0.0:
        return h_init
    terms = [PauliTerm((1.0 - alpha) * t.coefficient, t.ops) for t in h_init.terms]
    terms += [PauliTerm(alpha * t.coefficient, t.ops) for t in h.terms]
    return PauliSum(h.n_qubits, tuple(terms), {"alpha": alpha})


def basis_state(bitstring: str) -> np.ndarray:
    if not bitstring or set(bitstring) - {"0", "1"}:
        raise ValueError(f"invalid bitstring {bitstring!r}")
    psi = np.zeros(2 ** len(bitstring), dtype=complex)
    psi[int(bitstring, 2)] = 1.0
    return psi


def build_h_init(bitstring: str, gap: float) -> PauliSum:
    """gap * sum_j (2 b_j - 1) Z_j, whose unique ground state is |bitstring>.

    The lowest excitation flips one spin and costs 2 * gap; the value found by
    diagonalizing is stored as ``metadata["measured_gap"]``.
    """
    if not bitstring:
        raise ValueError("empty bitstring")
    if set(bitstring) - {"0", "1"}:
        raise ValueError(f"invalid bitstring {bitstring!r}")
    if not gap > 0:
        raise ValueError("gap must be positive")
    n = len(bitstring)
    terms = []
    for j, b in enumerate(bitstring):
        ops = "I" * j + "Z" + "I" * (n - j - 1)
        terms.append(PauliTerm(gap * (2 * int(b) - 1), ops))
    h = PauliSum(n, tuple(terms))
    # Z-only sum: the dense matrix is diagonal
    diag = np.sort(_z_diagonal(h))
    ground = int(np.argmin(_z_diagonal(h)))
    meta = {
        "nominal_gap": float(gap),
        "measured_gap": float(diag[1] - diag[0]) if len(diag) > 1 else float("nan"),
        "ground_state": format(ground, f"0{n}b"),
    }
    return PauliSum(n, h.terms, meta)


def _z_diagonal(h: PauliSum) -> np.ndarray:
    diag = np.zeros(h.dim)
    for term in h.terms:
        _, phase = pauli_action(term.ops)
        diag += term.coefficient * phase.real
    return diag


def exp_tail_amplitudes(energies: np.ndarray, ground_weight: float = 0.2) -> np.ndarray:
    """Ground amplitude sqrt(ground_weight); excited amplitudes proportional to exp(-(E_j - E_0))."""
    e = np.asarray(energies, dtype=float)
    tail = np.exp(-(e[1:] - e[0]))
    tail *= math.sqrt(1.0 - ground_weight) / np.linalg.norm(tail)
    return np.concatenate([[math.sqrt(ground_weight)], tail]).astype(complex)


def synth_spectrum(
    n_levels: int,
    gap: float,
    e_max: float,
    weights: str | Sequence[float] = "uniform",
    rng_seed: int | None = None,
    target_weight: float | None = None,
) -> SpectralState:
    """Synthetic spectral state with the target (index 0) at energy 0.

    Off-target energies lie in [gap, e_max]; with three or more levels the
    endpoints are always present so that gap and e_max are attained.

    weights
        ``"uniform"`` (equal weights), ``"exponential"`` (ground amplitude
        ``sqrt(target_weight or 0.2)``, excited amplitudes decaying as
        ``exp(-E_j)``), or an explicit sequence of probabilities.
    """
    if n_levels < 2:
        raise ValueError("need at least two levels")
    if gap > e_max:
        raise ValueError("gap exceeds e_max")
    if not gap > 0:
        raise ValueError("gap must be positive")
    rng = np.random.default_rng(rng_seed)
    m = n_levels - 1
    if m == 1:
        excited = np.array([gap])
    else:
        inner = np.sort(rng.uniform(gap, e_max, size=m - 2))
        excited = np.concatenate([[gap], inner, [e_max]])
    energies = np.concatenate([[0.0], excited])

    if isinstance(weights, str):
        if weights == "uniform":
            w = np.full(n_levels, 1.0 / n_levels)
            if target_weight is not None:
                w[0] = target_weight
                w[1:] = (1.0 - target_weight) / m
            amps = np.sqrt(w).astype(complex)
        elif weights == "exponential":
            amps = exp_tail_amplitudes(energies, 0.2 if target_weight is None else target_weight)
        else:
            raise ValueError(f"unknown weight rule {weights!r}")
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n_levels,) or np.any(w < 0):
            raise ValueError("explicit weights must be n_levels non-negative numbers")
        amps = np.sqrt(w / w.sum()).astype(complex)
    return SpectralState(energies, amps, 0, 0.0)


def random_pauli_sum(
    n_qubits: int, n_terms: int, rng: np.random.Generator | int | None = None, scale: float = 1.0
) -> PauliSum:
    """Random sum of distinct non-identity Pauli strings, coefficients in [-scale, scale]."""
    rng = np.random.default_rng(rng)
    seen: dict[str, float] = {}
    if n_terms > 4**n_qubits - 1:
        raise ValueError("more terms requested than distinct Pauli strings")
    while len(seen) < n_terms:
        ops = "".join(rng.choice(list("IXYZ"), size=n_qubits))
        if set(ops) == {"I"} or ops in seen:
            continue
        seen[ops] = float(rng.uniform(-scale, scale))
    return PauliSum(n_qubits, tuple(PauliTerm(c, s) for s, c in seen.items()))
