"""
Closed-form guarantees for the halving schedule.

Notation: ``c_sq`` is the initial target weight |c_nu|^2, ``N`` the schedule
period, ``gap``/``delta`` the gap bound and the target-energy uncertainty.
Exponentials in the iteration count are evaluated in log space so that very
small infidelity targets do not underflow.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, VacuousBoundError

__all__ = [
    "BoundsReport",
    "gamma_numeric",
    "xi_sq_bound",
    "fidelity_floor_exact",
    "k_bar_exact",
    "k_bar_guaranteed",
    "cost_recursion",
    "cost_bound",
    "zeta_sq_floor",
    "fidelity_floor_approx",
    "k_bar_approx",
    "fidelity_floor_rte",
    "n_pauli",
    "noisy_fidelity_estimate",
    "bounds_report",
]

LOG4 = math.log(4.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _cos_product(energies: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.prod(np.cos(np.outer(energies, times)) ** 2, axis=1)


def gamma_numeric(schedule, grid_points: int = 100_000, tol: float = 1e-9) -> float:
    """Largest value of prod_l cos^2(E t_l) for E in [gap, e_max].

    Uniform grid scan, then golden-section refinement between the neighbours
    of the best grid point.
    """
    if grid_points < 1000:
        raise ValueError("grid_points must be at least 1000")
    times = np.asarray(schedule.times, dtype=float)
    lo, hi = schedule.gap, schedule.e_max
    if hi == lo:
        return float(_cos_product(np.array([lo]), times)[0])
    grid = np.linspace(lo, hi, grid_points)
    values = _cos_product(grid, times)
    i = int(np.argmax(values))
    best = float(values[i])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]

    def f(x: float) -> float:
        return float(_cos_product(np.array([x]), times)[0])

    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return max(best, fc, fd)


def xi_sq_bound(k: int, c_sq: float, N: int, gamma: float) -> float:
    """Residual off-target weight bound (1 - c_sq) * gamma**floor(k/N)."""
    if not 0 < c_sq <= 1:
        raise ValueError("c_sq must lie in (0, 1]")
    return (1.0 - c_sq) * gamma ** (k // N)


def _inv_one_plus_exp(log_x: float) -> float:
    """1 / (1 + exp(log_x)) without overflow."""
    if log_x > 700:
        return math.exp(-log_x)
    return 1.0 / (1.0 + math.exp(log_x))


def fidelity_floor_exact(k: int, c_sq: float, N: int) -> float:
    if not 0 < c_sq <= 1:
        raise ValueError("c_sq must lie in (0, 1]")
    if c_sq == 1:
        return 1.0
    log_ratio = math.log((1.0 - c_sq) / c_sq) - (k // N) * LOG4
    return _inv_one_plus_exp(log_ratio)


def _log_target(c_sq: float, eps: float) -> float:
    """log2( c_sq * eps / ((1 - eps) (1 - c_sq)) )."""
    return math.log2(c_sq * eps / ((1.0 - eps) * (1.0 - c_sq)))


def k_bar_exact(c_sq: float, eps: float, N: int) -> int:
    """Closed-form iteration count ceil(-(N/2) log2(c eps / ((1-eps)(1-c)))), clamped at 0.

    The closed form treats k/N as continuous; the floored fidelity bound may
    need up to N - 1 further iterations (see :func:`k_bar_guaranteed`).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if c_sq >= 1.0 or 1.0 - c_sq <= eps:
        return 0
    return max(0, math.ceil(-(N / 2.0) * _log_target(c_sq, eps)))


def _approx_base(delta: float, gap: float) -> float:
    if delta >= gap:
        raise ValueError("delta must be smaller than gap")
    base = 1.0 - math.pi**2 * delta**2 / (3.0 * gap**2)
    if base <= 0:
        raise ValueError("pi^2 delta^2 / (3 gap^2) >= 1: no guarantee")
    return base


def k_bar_guaranteed(c_sq: float, eps: float, N: int, delta: float = 0.0, gap: float = 1.0) -> int:
    """Smallest k at which the floored fidelity bound reaches 1 - eps.

    Always a multiple of N.
    """
    if c_sq >= 1.0 or 1.0 - c_sq <= eps:
        return 0
    rate = 2.0 + (math.log2(_approx_base(delta, gap)) if delta > 0 else 0.0)
    if rate <= 0:
        raise ValueError("convergence rate is not positive")
    m = max(0, math.ceil(-_log_target(c_sq, eps) / rate))

    def floor_at(k: int) -> float:
        if delta > 0:
            return fidelity_floor_approx(k, c_sq, delta, gap, N)
        return fidelity_floor_exact(k, c_sq, N)

    # settle round-off at the boundary
    while m > 0 and floor_at((m - 1) * N) >= 1.0 - eps:
        m -= 1
    while floor_at(m * N) < 1.0 - eps:
        m += 1
    return m * N


def cost_recursion(p_seq, t_seq) -> float:
    """T(k) = (T(k-1) + t_k) / p_k with T(0) = 0."""
    p_seq = list(p_seq)
    t_seq = list(t_seq)
    if len(p_seq) != len(t_seq):
        raise ValueError("p_seq and t_seq differ in length")
    T = 0.0
    for p, t in zip(p_seq, t_seq):
        if not 0 < p <= 1:
            raise ValueError(f"success probability {p!r} outside (0, 1]")
        T = (T + t) / p
    return T


def _p_bar(k: int, c_sq: float, N: int, base: float | None) -> float:
    m = k // N
    q = 4.0 ** (-m)
    if base is None:
        return (c_sq + (1.0 - c_sq) * q) / (c_sq + (1.0 - c_sq) * 4.0 * q)
    up = -(-k // N)
    return (c_sq * base**up + (1.0 - c_sq) * q) / (c_sq * base ** (up + 1) + (1.0 - c_sq) * 4.0 * q)


def cost_bound(
    k: int, c_sq: float, N: int, gap: float, regime: str = "exact-energy", delta: float = 0.0
) -> float:
    """Period-strided cost bound: Tbar(k) = (Tbar(k - N) + pi/gap) / pbar_k, Tbar(k <= 0) = 0."""
    if regime == "exact-energy":
        base = None
    elif regime == "approx-energy":
        base = _approx_base(delta, gap)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    if k <= 0:
        return 0.0
    steps = []
    while k > 0:
        steps.append(k)
        k -= N
    T = 0.0
    for kk in reversed(steps):
        T = (T + math.pi / gap) / _p_bar(kk, c_sq, N, base)
    return T


def zeta_sq_floor(k: int, delta: float, gap: float, N: int) -> float:
    """(1 - pi^2 delta^2 / (3 gap^2)) ** ceil(k/N): retained target weight factor.

    Past delta / gap = sqrt(3) / pi the base turns negative and the floor is
    clamped to the trivial value 0.
    """
    if delta >= gap:
        raise ValueError("delta must be smaller than gap")
    if delta == 0:
        return 1.0
    base = 1.0 - math.pi**2 * delta**2 / (3.0 * gap**2)
    if math.pi * delta / (2.0 * gap) >= 1.0 or base <= 0:
        warnings.warn("t*delta is not small; the quadratic expansion is unreliable", stacklevel=2)
    return max(base, 0.0) ** (-(-k // N))


def fidelity_floor_approx(k: int, c_sq: float, delta: float, gap: float, N: int) -> float:
    if not 0 < c_sq <= 1:
        raise ValueError("c_sq must lie in (0, 1]")
    if c_sq == 1:
        return 1.0
    if delta == 0:
        return fidelity_floor_exact(k, c_sq, N)
    base = _approx_base(delta, gap)
    log_ratio = (
        math.log((1.0 - c_sq) / c_sq) - (k // N) * LOG4 - (-(-k // N)) * math.log(base)
    )
    return _inv_one_plus_exp(log_ratio)


def k_bar_approx(c_sq: float, eps: float, N: int, delta: float, gap: float) -> int:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if delta == 0:
        return k_bar_exact(c_sq, eps, N)
    denom = 2.0 + math.log2(_approx_base(delta, gap))
    if denom <= 0:
        raise ValueError("delta too large: the convergence rate is not positive")
    if c_sq >= 1.0 or 1.0 - c_sq <= eps:
        return 0
    return max(0, math.ceil(-N * _log_target(c_sq, eps) / denom))


def fidelity_floor_rte(k: int, c_sq: float, zeta_sq: float, xi_sq: float, eps_rte: float) -> float:
    """First-order fidelity floor under an RTE error of size eps_rte."""
    if eps_rte < 0:
        raise ValueError("eps_rte must be non-negative")
    kept = zeta_sq * c_sq
    num = kept - 2 * k * eps_rte
    if num <= 0:
        raise VacuousBoundError(f"bound is vacuous at k={k}")
    return num / (kept + xi_sq + 2 * k * eps_rte)


def n_pauli(term_count: int, n_trott: float, gap: float) -> int:
    """Gadgets needed for one schedule period: ceil(pi L N_Trott / gap)."""
    return math.ceil(math.pi * term_count * n_trott / gap)


def noisy_fidelity_estimate(lam: float, term_count: int, n_trott: float, gap: float) -> float:
    if not 0 <= lam < 1:
        raise ValueError("lambda must lie in [0, 1)")
    return (1.0 - lam) ** n_pauli(term_count, n_trott, gap)


@dataclass
class BoundsReport:
    gamma: float
    period: int
    k_bar: int
    k_bar_guaranteed: int
    k_bar_approx: int | None
    fidelity_floor: list[tuple[int, float]]
    cost_expected: float | None
    cost_bound: float
    regime: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BoundsReport":
        data = json.loads(text)
        data["fidelity_floor"] = [tuple(x) for x in data["fidelity_floor"]]
        return cls(**data)

    def table(self) -> str:
        rows = [
            ("regime", self.regime),
            ("period N", self.period),
            ("gamma", f"{self.gamma:.6g}"),
            ("k_bar (closed form)", self.k_bar),
            ("k_bar (floored bound)", self.k_bar_guaranteed),
        ]
        if self.k_bar_approx is not None:
            rows.append(("k_bar (approx energy)", self.k_bar_approx))
        rows.append(("cost bound", f"{self.cost_bound:.6g}"))
        if self.cost_expected is not None:
            rows.append(("cost (recursion)", f"{self.cost_expected:.6g}"))
        for key, value in self.extra.items():
            rows.append((key, f"{value:.6g}" if isinstance(value, float) else value))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def bounds_report(
    gap: float,
    e_max: float,
    c_sq: float,
    eps: float,
    delta: float = 0.0,
    *,
    trace=None,
    lam: float | None = None,
    term_count: int | None = None,
    n_trott: float | None = None,
    grid_points: int = 100_000,
) -> BoundsReport:
    """Collect every closed-form quantity for one parameter set."""
    from .prep import build_schedule

    if delta < 0 or delta >= gap:
        raise ConfigError("delta must satisfy 0 <= delta < gap")
    schedule = build_schedule(gap, e_max)
    N = schedule.period
    regime = "exact-energy" if delta == 0 else "approx-energy"
    try:
        kb_approx = k_bar_approx(c_sq, eps, N, delta, gap) if delta > 0 else k_bar_exact(c_sq, eps, N)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    kb = k_bar_exact(c_sq, eps, N)
    kb_for_regime = kb if delta == 0 else kb_approx
    floor = []
    for k in range(0, max(kb_for_regime, N) + 1, N):
        if delta == 0:
            floor.append((k, fidelity_floor_exact(k, c_sq, N)))
        else:
            floor.append((k, fidelity_floor_approx(k, c_sq, delta, gap, N)))
    cost_expected = None
    if trace is not None:
        cost_expected = cost_recursion(trace.p, trace.t)
    extra: dict = {"gap": gap, "e_max": e_max, "c_sq": c_sq, "eps": eps, "delta": delta}
    if lam is not None:
        if term_count is None or n_trott is None:
            raise ConfigError("the noise estimate needs lambda, term_count and n_trott")
        extra["n_pauli"] = n_pauli(term_count, n_trott, gap)
        extra["noisy_fidelity_estimate"] = noisy_fidelity_estimate(lam, term_count, n_trott, gap)
    return BoundsReport(
        gamma=gamma_numeric(schedule, grid_points),
        period=N,
        k_bar=kb,
        k_bar_guaranteed=k_bar_guaranteed(c_sq, eps, N, delta, gap),
        k_bar_approx=kb_approx,
        fidelity_floor=floor,
        cost_expected=cost_expected,
        cost_bound=cost_bound(kb_for_regime, c_sq, N, gap, regime, delta),
        regime=regime,
        extra=extra,
    )
