"""Parameters, right-hand sides, residuals and closed-form constants of the
dyadic model

    du_n/dt = -lam^(2n) u_n + lam^(beta n) u_{n-1}^2 - lam^(beta (n+1)) u_n u_{n+1}

with u_0 = 0.  Finite states are numpy vectors ``u[0..N-1]`` holding the
modes ``u_1..u_N``; the Galerkin closure u_{N+1} = 0 is the only truncation
supported.  Mode numbers in every public report are 1-based.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientModesError, InvalidParamsError, InvalidStateError

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"

# |u - 1| below this is reported as a marginal regime classification
REGIME_MARGIN = 1e-12


@dataclass(frozen=True)
class ModelParams:
    lam: float
    beta: float
    kappa: float = field(init=False)
    u: float = field(init=False)

    def __post_init__(self):
        lam, beta = float(self.lam), float(self.beta)
        if not (math.isfinite(lam) and lam > 1.0):
            raise InvalidParamsError(f"lambda must be > 1, got {self.lam!r}")
        if not (math.isfinite(beta) and beta > 0.0):
            raise InvalidParamsError(f"beta must be > 0, got {self.beta!r}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "kappa", lam**beta)
        object.__setattr__(self, "u", lam ** (2.0 * beta - 6.0))

    @property
    def regime(self) -> str:
        return classify_regime(self.u)

    def to_dict(self):
        return {"lambda": self.lam, "beta": self.beta}


def classify_regime(u: float) -> str:
    """Regime of the recurrence parameter ``u`` (u < 1, u == 1, u > 1)."""
    if u <= 0 or not math.isfinite(u):
        raise InvalidParamsError(f"recurrence parameter u must be positive, got {u!r}")
    if u != 1.0 and abs(u - 1.0) < REGIME_MARGIN:
        warnings.warn(
            f"u = {u!r} is within {REGIME_MARGIN} of 1; regime classification is marginal",
            RuntimeWarning,
            stacklevel=2,
        )
    if u == 1.0:
        return CRITICAL
    return SUBCRITICAL if u < 1.0 else SUPERCRITICAL


def as_state(values, min_modes: int = 1) -> np.ndarray:
    """Validate and copy a finite shell vector."""
    a = np.array(values, dtype=float).reshape(-1)
    if a.size < min_modes:
        raise InsufficientModesError(f"need at least {min_modes} modes, got {a.size}")
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(a))[0]) + 1
        raise InvalidStateError(f"non-finite entry at mode {bad}")
    return a


def mode_numbers(n_modes: int) -> np.ndarray:
    return np.arange(1, n_modes + 1, dtype=float)


def nonlinear_terms(params: ModelParams, state) -> np.ndarray:
    """lam^(beta n) u_{n-1}^2 - lam^(beta(n+1)) u_n u_{n+1}, Galerkin closed."""
    u = as_state(state)
    n = mode_numbers(u.size)
    lower = np.zeros_like(u)
    lower[1:] = u[:-1] ** 2
    upper = np.zeros_like(u)
    upper[:-1] = u[1:]
    kb = params.kappa
    return kb**n * lower - kb ** (n + 1) * u * upper


def rhs_viscous(params: ModelParams, state) -> np.ndarray:
    u = as_state(state)
    n = mode_numbers(u.size)
    return -(params.lam ** (2 * n)) * u + nonlinear_terms(params, u)


def rhs_inviscid(params: ModelParams, state) -> np.ndarray:
    return nonlinear_terms(params, state)


@dataclass(frozen=True)
class StationaryResidual:
    """Residuals r_n of the stationary equations for n = 1..N-1."""

    absolute: np.ndarray
    relative: np.ndarray

    @property
    def max_absolute(self) -> float:
        return float(np.max(np.abs(self.absolute))) if self.absolute.size else 0.0

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative)) if self.relative.size else 0.0

    def max_relative_from(self, first_mode: int) -> float:
        rel = self.relative[first_mode - 1 :]
        return float(np.max(rel)) if rel.size else 0.0


def stationary_residual(params: ModelParams, a) -> StationaryResidual:
    """Residual of lam^(2n) a_n - lam^(beta n) a_{n-1}^2 + lam^(beta(n+1)) a_n a_{n+1}.

    The last mode is skipped because a_{N+1} is unknown.  The relative
    residual divides by the largest of the three terms (0 where all vanish).
    """
    a = as_state(a, min_modes=2)
    n = mode_numbers(a.size - 1)
    am = a[:-1]
    prev = np.concatenate(([0.0], a[:-2]))
    nxt = a[1:]
    lam, kb = params.lam, params.kappa
    t_lin = lam ** (2 * n) * am
    t_in = kb**n * prev**2
    t_out = kb ** (n + 1) * am * nxt
    r = t_lin - t_in + t_out
    scale = np.maximum.reduce([np.abs(t_lin), np.abs(t_in), np.abs(t_out)])
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, np.abs(r) / scale, 0.0)
    return StationaryResidual(absolute=r, relative=rel)


@dataclass(frozen=True)
class PaperConstants:
    eps1: float
    eps2_max: float
    eps3_max: float
    eps_init: float
    c1: float
    c2: float
    c3: float
    kappa_rate: float
    nu_rate: float

    def to_dict(self):
        return dict(self.__dict__)


def growth_rates(u: float) -> tuple[float, float]:
    """The pair (kappa, nu) bounding deviation growth of the backward recurrence."""
    kappa_rate = 0.5 + math.sqrt(0.25 + 1.0 / u)
    nu_rate = 0.25 * (1.0 + math.sqrt(1.0 + 8.0 / u))
    return kappa_rate, nu_rate


def compute_constants(params: ModelParams) -> PaperConstants:
    lam, beta = params.lam, params.beta
    eps1 = 1.0 / (lam**2 + lam ** (beta - 1.0))
    eps2_max = lam**-2.0
    eps3_max = 1.0 / (lam**2 + lam ** (2.0 * beta - 4.0))
    c1 = min(1.0 / (2.0 * lam**2), 1.0 / (64.0 * lam ** (2.0 * beta)))
    c2 = 4.0 * (3.0 + c1) / (3.0 * c1) * max(lam**-2.0, 1.0 / (2.0 * lam ** (2.0 * beta)))
    c3 = c2 / (1.0 - lam ** (-2.0 * beta))
    kappa_rate, nu_rate = growth_rates(params.u)
    return PaperConstants(
        eps1=eps1,
        eps2_max=eps2_max,
        eps3_max=eps3_max,
        eps_init=min(eps1, eps3_max),
        c1=c1,
        c2=c2,
        c3=c3,
        kappa_rate=kappa_rate,
        nu_rate=nu_rate,
    )


def energy_and_dissipation(params: ModelParams, state) -> tuple[float, float]:
    """(sum u_n^2, sum lam^(2n) u_n^2)."""
    u = as_state(state)
    n = mode_numbers(u.size)
    sq = u * u
    return float(np.sum(sq)), float(np.sum(params.lam ** (2 * n) * sq))


def partial_energies(state) -> np.ndarray:
    """E_n = sum_{k<=n} u_k^2 for n = 1..N (works on stacked states too)."""
    u = np.asarray(state, dtype=float)
    return np.cumsum(u * u, axis=-1)


def envelope(params: ModelParams, n_modes: int, scale: float = 1.0) -> np.ndarray:
    """scale * lam^((2-beta) n), the cone used by the lower-bound and envelope checks."""
    return scale * params.lam ** ((2.0 - params.beta) * mode_numbers(n_modes))
