"""Trajectory-level checks: energy identity, sign structure, lower bound,
envelope and truncation convergence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import HypothesisViolation, UnsupportedKindError
from .galerkin import VISCOUS, IntegratorConfig, Trajectory, integrate, truncate_or_pad
from .model import ModelParams, compute_constants, envelope, mode_numbers

# relative slack when comparing a user constant with its closed-form maximum
_CONST_SLACK = 1e-12


def check_tolerance(traj: Trajectory) -> float:
    """tol = 100 rel_tol ||a||, separating integrator error from violations."""
    return 100.0 * traj.config.rel_tol * traj.data_norm


def _require_viscous(traj, what):
    if traj.kind != VISCOUS:
        raise UnsupportedKindError(f"{what} needs a viscous trajectory, got {traj.kind}")


def _root(traj, col, lo, hi, level=0.0):
    f = lambda t: float(traj(t)[col]) - level  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0 or np.sign(flo) == np.sign(fhi):
        return hi
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-15)


# energy ---------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    identity_residual: np.ndarray
    slack: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.identity_residual))

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack))

    @property
    def dissipation_monotone(self) -> bool:
        return bool(np.all(np.diff(self.dissipation) >= 0))

    @property
    def max_energy_excess(self) -> float:
        """max_t E(t) - E(0); the l2 bound says this is <= 0."""
        return float(np.max(self.energy) - self.energy[0])

    def rows(self):
        return np.column_stack(
            [self.times, self.energy, self.dissipation, self.identity_residual, self.slack]
        )

    header = ("t", "energy", "dissipation", "identity_residual", "slack")


def energy_report(traj: Trajectory) -> EnergyReport:
    """E(t), D(t) = 2 sum_n int_0^t lam^(2n) u_n^2, and the identity E(t) - E(0) + D(t) = 0."""
    _require_viscous(traj, "energy_report")
    w = 2.0 * traj.params.lam ** (2 * mode_numbers(traj.n_modes))
    E = np.sum(traj.states**2, axis=1)
    D = traj.cumulative_integral(lambda s: np.sum(w * s * s, axis=-1))
    D = np.maximum.accumulate(D)
    diff = E - E[0] + D
    return EnergyReport(
        times=np.array(traj.times),
        energy=E,
        dissipation=D,
        identity_residual=np.abs(diff),
        slack=-diff,
    )


def partial_energy_monotone(traj: Trajectory, first_mode: int, tol: float | None = None) -> bool:
    """E_n(t) nonincreasing on dense samples for every n >= first_mode."""
    tol = check_tolerance(traj) if tol is None else tol
    t = traj.sample_times()
    En = np.cumsum(traj(t) ** 2, axis=1)[:, first_mode - 1 :]
    return bool(np.all(np.diff(En, axis=0) <= tol * max(traj.data_norm, 1.0)))


# sign structure -------------------------------------------------------------

NONNEGATIVE = "nonnegative preserved"
NEGATIVE_THROUGHOUT = "negative throughout"
SINGLE_CROSSING = "single crossing"
VIOLATED = "violated"


@dataclass(frozen=True)
class ModeSign:
    mode: int
    initial: float
    verdict: str
    tau: float | None
    crossings: int
    returns: int
    min_value: float

    @property
    def ok(self) -> bool:
        return self.verdict != VIOLATED


@dataclass(frozen=True)
class SignReport:
    tol: float
    modes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(m.ok for m in self.modes)

    @property
    def violations(self) -> int:
        return sum(not m.ok for m in self.modes)

    def mode(self, n) -> ModeSign:
        return self.modes[n - 1]


def _count_transitions(x, tol):
    """Crossings from below -tol to above tol, and returns the other way."""
    state = np.where(x > tol, 1, np.where(x < -tol, -1, 0))
    state = state[state != 0]
    d = np.diff(state)
    return int(np.sum(d > 0)), int(np.sum(d < 0))


def check_sign_structure(traj: Trajectory, tol: float | None = None) -> SignReport:
    """Nonnegative modes stay nonnegative; negative modes cross zero at most once."""
    _require_viscous(traj, "check_sign_structure")
    tol = check_tolerance(traj) if tol is None else tol
    t = traj.sample_times()
    U = traj(t)
    a = traj.initial
    out = []
    for i in range(traj.n_modes):
        x = U[:, i]
        ups, downs = _count_transitions(x, tol)
        xmin = float(np.min(x))
        if a[i] >= 0:
            verdict = NONNEGATIVE if xmin >= -tol else VIOLATED
            out.append(ModeSign(i + 1, float(a[i]), verdict, None, ups, downs, xmin))
            continue
        nonneg = np.flatnonzero(x >= 0)
        if nonneg.size == 0:
            out.append(ModeSign(i + 1, float(a[i]), NEGATIVE_THROUGHOUT, None, 0, 0, xmin))
            continue
        j = int(nonneg[0])
        tau = _root(traj, i, t[j - 1], t[j])
        before_ok = bool(np.all(x[:j] <= tol))
        after_ok = bool(np.all(x[j:] >= -tol))
        verdict = SINGLE_CROSSING if (before_ok and after_ok and downs == 0) else VIOLATED
        out.append(ModeSign(i + 1, float(a[i]), verdict, float(tau), ups, downs, xmin))
    return SignReport(tol=tol, modes=out)


# lower bound and envelope ---------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    name: str
    K: int
    eps: float
    tol: float
    t_valid: float
    violations: int
    worst_margin: float
    positivity_violations: int = 0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.positivity_violations == 0


def _check_K(traj, K):
    if not 1 <= K <= traj.n_modes:
        raise HypothesisViolation(f"K={K} outside 1..{traj.n_modes}")


def check_lower_bound(traj: Trajectory, eps2: float, K: int, tol: float | None = None) -> BoundReport:
    """u_n(t) >= -eps2 lam^((2-beta)n) for n >= K, given the same at t = 0."""
    _require_viscous(traj, "check_lower_bound")
    _check_K(traj, K)
    p = traj.params
    lam2 = p.lam**-2.0
    if eps2 > lam2 * (1 + _CONST_SLACK):
        raise HypothesisViolation(f"eps2={eps2!r} exceeds lambda^-2={lam2!r}")
    tol = check_tolerance(traj) if tol is None else tol
    env = envelope(p, traj.n_modes, eps2)
    a = traj.initial
    k0 = K - 1
    bad = np.flatnonzero(a[k0:] < -env[k0:] * (1 + _CONST_SLACK))
    if bad.size:
        raise HypothesisViolation(f"initial data below -eps2 envelope at mode {int(bad[0]) + K}")
    t = traj.sample_times()
    U = traj(t)
    margin = U[:, k0:] + env[k0:]
    violations = int(np.sum(margin < -tol))
    # lam^(2n) + lam^(beta(n+1)) u_{n+1} >= lam^(2n)(1 - eps2 lam^2), n = K..N
    n = mode_numbers(traj.n_modes)[k0:]
    nxt = np.zeros_like(U[:, k0:])
    nxt[:, :-1] = U[:, K:]
    kout = p.kappa ** (n + 1)
    lhs = p.lam ** (2 * n) + kout * nxt
    rhs = p.lam ** (2 * n) * (1 - eps2 * p.lam**2)
    cor = int(np.sum(lhs < rhs - kout * tol))
    return BoundReport(
        name="lower_bound",
        K=K,
        eps=eps2,
        tol=tol,
        t_valid=traj.t_end,
        violations=violations,
        worst_margin=float(np.min(margin)) if margin.size else 0.0,
        positivity_violations=cor,
    )


def check_envelope(traj: Trajectory, eps3: float, K: int, tol: float | None = None) -> BoundReport:
    """|u_n(t)| <= eps3 lam^((2-beta)n) for n >= K on [0, T'], with T' set by mode K."""
    _require_viscous(traj, "check_envelope")
    _check_K(traj, K)
    p = traj.params
    emax = compute_constants(p).eps3_max
    if eps3 > emax * (1 + _CONST_SLACK):
        raise HypothesisViolation(f"eps3={eps3!r} exceeds (lambda^2 + lambda^(2 beta - 4))^-1={emax!r}")
    tol = check_tolerance(traj) if tol is None else tol
    env = envelope(p, traj.n_modes, eps3)
    a = traj.initial
    k0 = K - 1
    bad = np.flatnonzero(np.abs(a[k0:]) > env[k0:] * (1 + _CONST_SLACK))
    if bad.size:
        raise HypothesisViolation(f"initial data outside eps3 envelope at mode {int(bad[0]) + K}")
    t = traj.sample_times()
    U = traj(t)
    over = np.flatnonzero(np.abs(U[:, k0]) > env[k0] + tol)
    if over.size == 0:
        t_valid = traj.t_end
        keep = t.size
    else:
        j = int(over[0])
        g = lambda s: abs(float(traj(s)[k0])) - env[k0] - tol  # noqa: E731
        t_valid = brentq(g, t[j - 1], t[j], xtol=1e-14) if j > 0 else 0.0
        keep = j
    margin = env[k0:] - np.abs(U[:keep, k0:])
    violations = int(np.sum(margin < -tol))
    return BoundReport(
        name="envelope",
        K=K,
        eps=eps3,
        tol=tol,
        t_valid=float(t_valid),
        violations=violations,
        worst_margin=float(np.min(margin)) if margin.size else 0.0,
    )


# convergence in N -----------------------------------------------------------

def convergence_study(params: ModelParams, a, N_list, cfg: IntegratorConfig, kind: str = VISCOUS):
    """max_t max_{n<=N} |u_n^(N) - u_n^(N')| for consecutive truncations.

    ``a`` is either a vector (truncated or zero-padded to each N) or a
    callable N -> vector.
    """
    N_list = list(N_list)
    if any(b <= a_ for a_, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    make = a if callable(a) else (lambda N: truncate_or_pad(a, N))
    trajs = [integrate(params, make(N), cfg, kind) for N in N_list]
    rows = []
    for (N, tA), (N2, tB) in zip(zip(N_list, trajs), zip(N_list[1:], trajs[1:])):
        t = np.unique(np.concatenate([tA.sample_times(), tB.sample_times()]))
        diff = np.max(np.abs(tA(t) - tB(t)[:, :N]))
        rows.append({"N": N, "N_next": N2, "max_diff": float(diff)})
    diffs = [r["max_diff"] for r in rows]
    decreasing = all(d2 < d1 for d1, d2 in zip(diffs, diffs[1:]))
    return {"rows": rows, "decreasing": decreasing}
