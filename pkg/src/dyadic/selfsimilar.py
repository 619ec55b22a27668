"""Self-similar blow-up of the inviscid system.

If b solves b_n b_{n+1} = b_n + u b_{n-1}^2 with u = kappa^2, then

    u_n(t) = -b_n kappa^(-n) / (1 - t)

solves du_n/dt = kappa^n u_{n-1}^2 - kappa^(n+1) u_n u_{n+1} exactly, and
every norm of it is infinite at t = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .galerkin import INVISCID, IntegratorConfig, integrate
from .io import write_csv
from .model import ModelParams, mode_numbers
from .stationary import shoot_u

# modes at the truncation boundary left out of comparisons
BOUNDARY_MODES = 3
T_MAX = 1.0 - 1e-3


@dataclass(frozen=True)
class SelfSimilarSolution:
    kappa: float
    b: np.ndarray
    profile: np.ndarray
    t_star: float = 1.0
    shooting_parameter: float | None = None

    @property
    def n_modes(self) -> int:
        return self.b.size

    @property
    def u_param(self) -> float:
        return self.kappa**2

    def params(self) -> ModelParams:
        """Any (lam, beta) with lam^beta = kappa; lam = 2 is used."""
        return ModelParams(2.0, math.log(self.kappa) / math.log(2.0))

    def at(self, t) -> np.ndarray:
        """Analytic state at time(s) t < 1."""
        t = np.asarray(t, dtype=float)
        return self.profile / (1.0 - t)[..., None] if t.ndim else self.profile / (1.0 - t)

    def norm(self, t) -> float:
        return float(np.linalg.norm(self.profile)) / (1.0 - t)

    def ode_residual(self, t) -> np.ndarray:
        """Relative residual of the inviscid equations for modes 1..K-1 at time t."""
        u = self.at(t)
        n = mode_numbers(u.size - 1)
        k = self.kappa
        prev = np.concatenate(([0.0], u[:-2]))
        lhs = self.profile[:-1] / (1.0 - t) ** 2
        t_in = k**n * prev**2
        t_out = k ** (n + 1) * u[:-1] * u[1:]
        scale = np.maximum.reduce([np.abs(lhs), np.abs(t_in), np.abs(t_out)])
        r = np.abs(lhs - t_in + t_out)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(scale > 0, r / scale, 0.0)


def build_selfsimilar(kappa, prefix_len: int) -> SelfSimilarSolution:
    """Shoot b with u = kappa^2 and assemble the profile -b_n kappa^(-n).

    ``kappa`` may be a number or a ``ModelParams`` (its lam^beta is used).
    """
    k = kappa.kappa if isinstance(kappa, ModelParams) else float(kappa)
    if not k > 1:
        raise ValueError("kappa must exceed 1")
    if prefix_len < 5:
        raise ValueError("prefix_len must be at least 5")
    aux = shoot_u(k * k, prefix_len - 2)
    b = aux.c[::-1].copy()
    profile = -b * k ** -mode_numbers(b.size)
    return SelfSimilarSolution(k, b, profile, shooting_parameter=aux.shooting_parameter)


def zero_selfsimilar(kappa: float, n_modes: int) -> SelfSimilarSolution:
    b = np.zeros(n_modes)
    return SelfSimilarSolution(float(kappa), b, np.zeros(n_modes))


@dataclass(frozen=True)
class BlowupReport:
    times: np.ndarray
    compared_modes: int
    max_abs_diff: np.ndarray
    max_rel_diff: np.ndarray
    analytic_norm: np.ndarray
    norm_ratio_near_blowup: float
    galerkin_energy: np.ndarray
    l2_gap_lower_bound: np.ndarray
    per_mode: np.ndarray = field(repr=False)
    simulated: np.ndarray = field(repr=False)

    def rows(self):
        """(t, n, analytic, simulated, abs diff) for every time and mode."""
        n_modes = self.simulated.shape[1]
        for i, t in enumerate(self.times):
            for j in range(n_modes):
                an = self.simulated[i, j] + self.per_mode[i, j]
                yield [t, j + 1, an, self.simulated[i, j], abs(self.per_mode[i, j])]

    header = ("t", "n", "analytic", "simulated", "abs_diff")


def verify_blowup(sol: SelfSimilarSolution, times, cfg: IntegratorConfig | None = None) -> BlowupReport:
    """Integrate the inviscid Galerkin system from the profile and compare."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times >= 1):
        raise ValueError("times must lie in [0, 1)")
    if np.any(times > T_MAX):
        raise ValueError(f"simulated times are limited to {T_MAX}")
    t_end = float(np.max(times)) if times.size else 0.0
    if t_end > 0:
        base = cfg or IntegratorConfig(t_end=t_end, rel_tol=1e-12, abs_tol=1e-14)
        cfg = IntegratorConfig.from_dict({**base.to_dict(), "t_end": t_end})
        traj = integrate(sol.params(), sol.profile, cfg, INVISCID)
        sim = traj(times)
    else:
        sim = np.repeat(sol.profile[None, :], times.size, axis=0)
    ana = sol.at(times) if times.size else np.zeros((0, sol.n_modes))
    m = max(sol.n_modes - BOUNDARY_MODES, 1)
    diff = ana - sim
    d = np.abs(diff[:, :m])
    rel = d / np.abs(ana[:, :m]).clip(min=np.finfo(float).tiny)
    return BlowupReport(
        times=times,
        compared_modes=m,
        max_abs_diff=d.max(axis=1) if d.size else np.zeros(times.size),
        max_rel_diff=rel.max(axis=1) if rel.size else np.zeros(times.size),
        analytic_norm=np.linalg.norm(ana, axis=1),
        norm_ratio_near_blowup=sol.norm(T_MAX) / sol.norm(0.0) if np.any(sol.b) else math.nan,
        galerkin_energy=np.sum(sim**2, axis=1),
        # the truncated system conserves sum u_n^2, the analytic one grows
        # like (1-t)^-2, so ||diff|| on the compared modes is at least this
        l2_gap_lower_bound=np.clip(
            np.linalg.norm(ana[:, :m], axis=1) - np.linalg.norm(sol.profile), 0.0, None
        ),
        per_mode=diff,
        simulated=sim,
    )


def write_blowup_csv(path, report: BlowupReport):
    write_csv(path, BlowupReport.header, report.rows())
