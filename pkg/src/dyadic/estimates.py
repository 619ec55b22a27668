"""Level-set measures, the cube-integral bound, the blow-up functional and
the psi metric, all evaluated on computed trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DyadicError, HypothesisViolation, UnsupportedKindError
from .galerkin import VISCOUS, Trajectory
from .io import write_csv
from .model import ModelParams, as_state, compute_constants, mode_numbers

REFINE_RTOL = 1e-8
MAX_REFINE = 8


def _check_mode(traj, n, need_next2=False):
    top = traj.n_modes - 2 if need_next2 else traj.n_modes
    if not 1 <= n <= top:
        raise DyadicError(f"mode {n} out of range 1..{top}")


def _nonneg_from(traj, n):
    a = traj.initial
    if np.any(a[n - 1 :] < 0):
        raise HypothesisViolation(f"initial data negative beyond mode {n}")


def _superlevel_measure(traj, f, t, U):
    """Measure of {f >= 0} on [0, t_end] from samples (t, U) plus root refinement."""
    v = f(U)
    inside = v >= 0
    total = 0.0
    # full intervals between consecutive inside samples
    both = inside[:-1] & inside[1:]
    total += float(np.sum(np.diff(t)[both]))
    g = lambda s: float(f(traj(s)))  # noqa: E731
    for j in np.flatnonzero(inside[:-1] != inside[1:]):
        lo, hi = t[j], t[j + 1]
        r = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15) if v[j] * v[j + 1] < 0 else (
            hi if v[j + 1] == 0 else lo
        )
        total += (hi - r) if inside[j + 1] else (r - lo)
    return total


def _samples(traj, per_step, cache):
    if per_step not in cache:
        t = traj.sample_times(per_step=per_step)
        cache[per_step] = (t, traj(t))
    return cache[per_step]


def _measure(traj, f, cache):
    """Refine the sample grid until the measure moves by < REFINE_RTOL t_end."""
    per_step = 1
    prev = None
    for _ in range(MAX_REFINE):
        m = _superlevel_measure(traj, f, *_samples(traj, per_step, cache))
        if prev is not None and abs(m - prev) < REFINE_RTOL * traj.t_end:
            return m
        prev = m
        per_step = 2 * per_step + 1
    return prev


@dataclass(frozen=True)
class LevelSetStats:
    mode: int
    level: float
    measure_A: float
    measure_B: float
    bound_A: float
    bound_B: float

    @property
    def ok(self) -> bool:
        return self.measure_A <= self.bound_A and self.measure_B <= self.bound_B

    def row(self):
        return [self.mode, self.level, self.measure_A, self.measure_B, self.bound_A, self.bound_B]

    header = ("n", "y", "measure_A", "measure_B", "bound_A", "bound_B")


def level_set_bounds(params: ModelParams, n: int, y: float, norm_a: float) -> tuple[float, float]:
    """Closed-form bounds for |A_n(y)| (constant c2) and |B_n(y)| (constant c3)."""
    c = compute_constants(params)
    denom = y**3 * params.lam ** (params.beta * n) + y**2 * params.lam ** (2.0 * n)
    return c.c2 * norm_a**2 / denom, c.c3 * norm_a**2 / denom


def level_set_measure(traj: Trajectory, n: int, y: float, _cache=None) -> LevelSetStats:
    """|A_n(y)| with A_n(y) = {u_n >= y >= u_{n+2}} and |B_n(y)| with B_n(y) = {u_n >= y}."""
    if not y > 0:
        raise ValueError("level y must be positive")
    _require_viscous(traj)
    _check_mode(traj, n, need_next2=True)
    _nonneg_from(traj, n)
    i = n - 1
    cache = {} if _cache is None else _cache
    mB = _measure(traj, lambda s: s[..., i] - y, cache)
    mA = _measure(traj, lambda s: np.minimum(s[..., i] - y, y - s[..., i + 2]), cache)
    bA, bB = level_set_bounds(traj.params, n, y, traj.data_norm)
    return LevelSetStats(n, float(y), float(mA), float(mB), float(bA), float(bB))


def level_set_grid(traj: Trajectory, modes, levels):
    cache = {}
    return [level_set_measure(traj, n, y, cache) for n in modes for y in levels]


def write_level_sets(path, stats):
    write_csv(path, LevelSetStats.header, (s.row() for s in stats))


# cube integral --------------------------------------------------------------

@dataclass(frozen=True)
class CubeIntegralReport:
    mode: int
    integral_value: float
    tail_bound: float
    paper_bound: float

    @property
    def total(self) -> float:
        return self.integral_value + self.tail_bound

    @property
    def ok(self) -> bool:
        return self.total <= self.paper_bound

    def row(self):
        return [self.mode, self.integral_value, self.tail_bound, self.paper_bound]

    header = ("n", "integral_value", "tail_bound", "paper_bound")


def cube_bound(params: ModelParams, n: int, norm_a: float) -> float:
    """3 c3 ||a||^2 lam^(-beta n) log(lam^((beta-2)n) ||a|| + 1)."""
    c3 = compute_constants(params).c3
    return (3.0 * c3 * norm_a**2 * params.lam ** (-params.beta * n)
            * math.log1p(params.lam ** ((params.beta - 2.0) * n) * norm_a))


def cube_integral(traj: Trajectory, n: int) -> CubeIntegralReport:
    """int_0^T u_n^3 plus a bound on the remainder past T.

    Past T the energy identity leaves int_T^inf lam^(2n) u_n^2 <= E(T)/2,
    and |u_n| <= ||a||, so int_T^inf u_n^3 <= ||a|| lam^(-2n) E(T) with a
    factor 2 to spare.
    """
    _require_viscous(traj)
    _check_mode(traj, n)
    _nonneg_from(traj, n)
    i = n - 1
    value = float(np.sum(traj.step_integrals(lambda s: s[..., i] ** 3)))
    norm_a = traj.data_norm
    e_end = float(np.sum(traj.states[-1] ** 2))
    tail = norm_a * traj.params.lam ** (-2.0 * n) * e_end
    return CubeIntegralReport(n, value, tail, cube_bound(traj.params, n, norm_a))


def write_cube_table(path, reports):
    write_csv(path, CubeIntegralReport.header, (r.row() for r in reports))


# blow-up functional ----------------------------------------------------------

def blowup_functional(traj: Trajectory, eps: float) -> float:
    """int_0^T (sum_n lam^(2(eps + 1/3) beta n) u_n^2)^(3/2) dt (diagnostic only)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    p = traj.params
    w = p.lam ** (2.0 * (eps + 1.0 / 3.0) * p.beta * mode_numbers(traj.n_modes))
    return float(np.sum(traj.step_integrals(lambda s: np.sum(w * s * s, axis=-1) ** 1.5)))


# psi metric ------------------------------------------------------------------

class ConstantTrajectory:
    """A time-independent state presented with the trajectory interface."""

    def __init__(self, params: ModelParams, state, t_end: float = math.inf):
        self.params = params
        self.state = as_state(state)
        self.t_end = t_end
        self.kind = "stationary"

    @property
    def n_modes(self) -> int:
        return self.state.size

    @property
    def initial(self) -> np.ndarray:
        return self.state

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.state.copy()
        return np.repeat(self.state[None, :], t.size, axis=0)

    def sample_times(self, **_):
        return np.array([0.0])


@dataclass(frozen=True)
class PsiSeries:
    times: np.ndarray
    values: np.ndarray
    n_cap: int

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))


def psi_metric(trajA, trajB, N_cap: int, times=None) -> PsiSeries:
    """psi(t) = sum_{n <= N_cap} 2^-n (u_n(t) - v_n(t))^2 on a common grid."""
    if trajA.params != trajB.params:
        raise DyadicError("psi_metric needs trajectories with the same parameters")
    N_cap = int(N_cap)
    if not 1 <= N_cap <= min(trajA.n_modes, trajB.n_modes):
        raise DyadicError(f"N_cap={N_cap} exceeds the available modes")
    m = min(trajA.n_modes, trajB.n_modes)
    a, b = trajA.initial[:m], trajB.initial[:m]
    if not np.allclose(a, b, rtol=1e-14, atol=0.0):
        raise DyadicError("psi_metric needs the same initial data")
    span = min(trajA.t_end, trajB.t_end)
    if times is None:
        grids = [g.sample_times() for g in (trajA, trajB)]
        t = np.unique(np.concatenate(grids + [[0.0]]))
        t = t[t <= span]
        if not math.isfinite(span):
            raise DyadicError("explicit times are needed when both inputs are constant")
    else:
        t = np.asarray(times, dtype=float)
        if np.any(t < 0) or np.any(t > span):
            raise DyadicError("times outside the common span")
    w = 2.0 ** -mode_numbers(N_cap)
    d = trajA(t)[:, :N_cap] - trajB(t)[:, :N_cap]
    return PsiSeries(times=t, values=np.sum(w * d * d, axis=1), n_cap=N_cap)


def _require_viscous(traj):
    if traj.kind != VISCOUS:
        raise UnsupportedKindError(f"needs a viscous trajectory, got {traj.kind}")
