"""Galerkin integration of the viscous and inviscid dyadic systems."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DyadicError, StiffnessFailure
from .expint import STATUS_BLOWUP, STATUS_DONE, STATUS_UNDERFLOW, dense_eval_steps, run_dyadic
from .model import ModelParams, as_state, mode_numbers

VISCOUS = "viscous"
INVISCID = "inviscid"
EXPRK = "exprk"
RK45 = "rk45"

MODE_CAP = 24
BLOWUP_NORM = 1e12

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(6)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    dense_samples_per_unit_time: int = 200
    scheme: str = EXPRK
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.scheme not in (EXPRK, RK45):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dense_samples_per_unit_time < 1:
            raise ValueError("dense_samples_per_unit_time must be positive")

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["max_step"]):
            d["max_step"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("max_step") is None:
            d.pop("max_step", None)
        return cls(**d)


class _System:
    """Fast right-hand side without input validation."""

    def __init__(self, params: ModelParams, n_modes: int, kind: str):
        n = mode_numbers(n_modes)
        self.kind = kind
        self.lin = params.lam ** (2 * n) if kind == VISCOUS else np.zeros(n_modes)
        self.k_in = params.kappa**n
        self.k_out = params.kappa ** (n + 1)

    def rhs(self, u):
        du = -self.lin * u
        du[1:] += self.k_in[1:] * u[:-1] ** 2
        du[:-1] -= self.k_out[:-1] * u[:-1] * u[1:]
        return du

    def diagonal(self, u):
        d = -self.lin.copy()
        d[:-1] -= self.k_out[:-1] * u[1:]
        return d


class Trajectory:
    """Time-ordered Galerkin states with a piecewise dense output.

    ``times`` are the accepted step end points (starting at 0) and
    ``states[i]`` the state at ``times[i]``.  Calling the trajectory with an
    array of times evaluates the interpolant of the integration scheme.
    Instances are read-only after construction.
    """

    def __init__(self, params, kind, config, times, states, steps=None, ode_solution=None,
                 blowup_time=None):
        self.params = params
        self.kind = kind
        self.config = config
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.times.flags.writeable = False
        self.states.flags.writeable = False
        self._steps = steps
        self._sol = ode_solution
        self.blowup_time = blowup_time
        self._quad = None
        if steps is not None:
            for v in steps.values():
                v.flags.writeable = False

    @property
    def n_modes(self) -> int:
        return self.states.shape[1]

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def data_norm(self) -> float:
        return float(np.linalg.norm(self.states[0]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if self.n_steps == 0:
            out = np.repeat(self.states[:1], t.size, axis=0)
        elif self._sol is not None:
            out = self._sol(t).T
        else:
            idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.n_steps - 1)
            out = self._eval_steps(idx, t - self.times[idx])
        return out[0] if scalar else out

    def _eval_steps(self, idx, tau):
        s = self._steps
        idx = np.ascontiguousarray(np.ravel(idx), dtype=np.int64)
        tau = np.ascontiguousarray(np.ravel(tau), dtype=float)
        return dense_eval_steps(s["u0"], s["a"], s["h"], s["g1"], s["g4"], s["g5"], idx, tau)

    def sample_times(self, per_step: int = 3, per_unit_time: int | None = None) -> np.ndarray:
        """Step end points, ``per_step`` interior points per step and a uniform grid."""
        pts = [self.times]
        if self.n_steps and per_step > 0:
            frac = np.arange(1, per_step + 1) / (per_step + 1)
            h = np.diff(self.times)
            pts.append((self.times[:-1, None] + h[:, None] * frac).ravel())
        density = self.config.dense_samples_per_unit_time if per_unit_time is None else per_unit_time
        m = max(2, int(math.ceil(density * self.t_end)) + 1)
        pts.append(np.linspace(0.0, self.t_end, m))
        return np.unique(np.concatenate(pts))

    def step_integrals(self, func) -> np.ndarray:
        """Integral of ``func(states)`` over every step by graded Gauss--Legendre.

        ``func`` maps an array of states of shape (..., N) to values of shape
        (...,) or (..., k).  Steps whose frozen diagonal is stiff are split
        into geometrically graded pieces so that the initial exponential
        layer of fast modes is resolved.
        """
        if self.n_steps == 0:
            probe = np.asarray(func(self.states[:1]))
            return np.zeros((0,) + probe.shape[1:])
        h = np.diff(self.times)
        result = None
        for sel, wts, tau, states in self._quadrature_nodes():
            vals = np.asarray(func(states))
            integral = np.tensordot(wts, np.moveaxis(vals, 1, 0), axes=1) * (
                h[sel].reshape((-1,) + (1,) * (vals.ndim - 2))
            )
            if result is None:
                result = np.zeros((self.n_steps,) + integral.shape[1:])
            result[sel] = integral
        return result

    def _quadrature_nodes(self):
        # the dense states at the Gauss nodes are shared by every integrand
        if self._quad is not None:
            return self._quad
        h = np.diff(self.times)
        if self._steps is not None:
            stiff = h * np.max(np.abs(self._steps["a"]), axis=1)
            levels = np.clip(np.ceil(np.log2(np.maximum(stiff, 1.0))), 0, 60).astype(int)
        else:
            levels = np.zeros(self.n_steps, dtype=int)
        nodes = []
        for J in np.unique(levels):
            sel = np.flatnonzero(levels == J)
            # piece boundaries as fractions of the step: 0, 2^-J, ..., 1/2, 1
            bounds = np.concatenate(([0.0], 2.0 ** -np.arange(J, -1, -1, dtype=float)))
            lo, width = bounds[:-1], np.diff(bounds)
            frac = (lo[:, None] + width[:, None] * _GAUSS_X).ravel()
            wts = (width[:, None] * _GAUSS_W).ravel()
            tau = h[sel, None] * frac
            if self._steps is not None:
                idx = np.repeat(sel, frac.size)
                states = self._eval_steps(idx, tau.ravel())
            else:
                states = self((self.times[sel, None] + tau).ravel())
            states = states.reshape(tau.shape + (self.n_modes,))
            states.flags.writeable = False
            nodes.append((sel, wts, tau, states))
        self._quad = nodes
        return nodes

    def cumulative_integral(self, func) -> np.ndarray:
        """Running integral of ``func(states)`` at every entry of ``times``."""
        steps = self.step_integrals(func)
        out = np.zeros((len(self.times),) + steps.shape[1:])
        out[1:] = np.cumsum(steps, axis=0)
        return out

    # export

    def to_csv(self, path, times=None):
        from .io import write_csv

        t = self.times if times is None else np.asarray(times, dtype=float)
        rows = self.states if times is None else self(t)
        header = ["t"] + [f"u_{n}" for n in range(1, self.n_modes + 1)]
        write_csv(path, header, np.column_stack([t, rows]))

    def to_json_dict(self):
        return {
            "params": self.params.to_dict(),
            "kind": self.kind,
            "config": self.config.to_dict(),
            "n_modes": self.n_modes,
            "blowup_time": self.blowup_time,
            "times": self.times.tolist(),
            "states": self.states.tolist(),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)


def _initial_step(sys, u, a, cfg):
    g = sys.rhs(u) - a * u
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(u)
    d0 = np.max(np.abs(u) / scale)
    d1 = np.max(np.abs(g) / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    return min(h, cfg.t_end, cfg.max_step)


def integrate(params: ModelParams, a, cfg: IntegratorConfig, kind: str = VISCOUS) -> Trajectory:
    """Integrate the N-mode Galerkin system from ``a`` on [0, cfg.t_end].

    Raises ``StiffnessFailure`` if the step size underflows.  If the state
    norm exceeds ``BLOWUP_NORM`` the integration stops early; the returned
    trajectory then ends at the last valid time and ``blowup_time`` is set.
    """
    if kind not in (VISCOUS, INVISCID):
        raise ValueError(f"unknown kind {kind!r}")
    u = as_state(a)
    if u.size > MODE_CAP:
        warnings.warn(
            f"{u.size} modes exceeds the recommended cap of {MODE_CAP}; "
            "fast modes will force very small initial steps",
            RuntimeWarning,
            stacklevel=2,
        )
    a_init = u.copy()
    sys = _System(params, u.size, kind)
    if cfg.scheme == RK45:
        return _integrate_rk45(params, u, cfg, kind, sys)

    u = u.copy()
    t = 0.0
    h = _initial_step(sys, u, sys.diagonal(u), cfg)
    chunks = []
    chunk = 1024
    blowup_time = None
    total = 0
    while True:
        buf = {k: np.empty((chunk, u.size)) for k in ("u0", "u1", "a", "g1", "g4", "g5")}
        buf["t"] = np.empty(chunk)
        buf["h"] = np.empty(chunk)
        acc, t, h, status, bad = run_dyadic(
            sys.lin, sys.k_in, sys.k_out, u, t, cfg.t_end, h,
            cfg.rel_tol, cfg.abs_tol, cfg.max_step, BLOWUP_NORM,
            buf["t"], buf["u0"], buf["u1"], buf["a"], buf["h"], buf["g1"], buf["g4"], buf["g5"],
        )
        chunks.append({k: v[:acc] for k, v in buf.items()})
        total += acc
        if status == STATUS_UNDERFLOW:
            raise StiffnessFailure(
                f"step size underflow at t={t:.6g}; largest error in mode {bad + 1}",
                t=t, mode=bad + 1,
            )
        if status == STATUS_BLOWUP:
            blowup_time = t
            break
        if status == STATUS_DONE:
            break
        if total >= cfg.max_steps:
            raise StiffnessFailure(f"exceeded {cfg.max_steps} steps at t={t:.6g}", t=t)
        chunk = min(chunk * 2, 65536)
    steps = {k: np.concatenate([c[k] for c in chunks]) for k in chunks[0]}
    times = np.concatenate(([0.0], steps.pop("t")))
    states = np.vstack([a_init[None, :], steps.pop("u1")])
    return Trajectory(params, kind, cfg, times, states, steps=steps, blowup_time=blowup_time)


def _integrate_rk45(params, u, cfg, kind, sys):
    res = solve_ivp(
        lambda t, y: sys.rhs(y.copy()),
        (0.0, cfg.t_end),
        u,
        method="RK45",
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        dense_output=True,
    )
    if res.status != 0:
        raise StiffnessFailure(f"RK45 failed: {res.message}")
    return Trajectory(params, kind, cfg, res.t, res.y.T, ode_solution=res.sol)


def truncate_or_pad(a, n_modes: int) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    out = np.zeros(n_modes)
    m = min(n_modes, a.size)
    out[:m] = a[:m]
    return out


__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "truncate_or_pad",
    "VISCOUS",
    "INVISCID",
    "EXPRK",
    "RK45",
    "DyadicError",
]
