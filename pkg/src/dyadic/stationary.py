"""Stationary solutions by backward recurrence and shooting.

With a_n = -lam^((2-beta)n - 2) b_n the stationary equations become

    b_n b_{n+1} = b_n + u b_{n-1}^2,   b_0 = 0,   u = lam^(2 beta - 6),

so b_2 = 1.  The forward form d_{k+1} = 1 + u d_{k-1}^2 / d_k is unstable,
so sequences are produced backwards,

    c_{k+1} = sqrt(c_k (c_{k-1} - 1) / u)     (while c_{k-1} > 1),

with the free starting value chosen by bisection so that c_n = 1.  Reversing
(d_k = c_{n+2-k}) gives an exact prefix b_1..b_{n+2}.

For u < 1 the sequence sits next to the fixed point C = 1/(1-u) and the
recurrence is evaluated in the deviations eps_k = C - c_k, which keeps the
shooting parameter resolvable far beyond what c_0 = C - delta allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAuxError, PrecisionExhaustedError, ShootingBracketError
from .model import (
    CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    ModelParams,
    classify_regime,
    growth_rates,
    mode_numbers,
)

HIT_TOL = 1e-12
MAX_EXPANSIONS = 4000
MAX_BISECTIONS = 400


@dataclass(frozen=True)
class AuxSequence:
    """A finite backward sequence c_0, c_1, ...

    ``stopped_at`` is the index k of the last element when the run ended
    because c_{k-1} <= 1, and None when it was cut at ``max_len``.
    """

    u_param: float
    regime: str
    c: np.ndarray
    stopped_at: int | None
    shooting_parameter: float | None = None
    parameter_name: str | None = None
    hit_error: float | None = None
    bracket_history: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.c)

    @property
    def target_len(self) -> int | None:
        return None if self.stopped_at is None else self.stopped_at - 1

    def recurrence_error(self) -> float:
        """Largest relative error of c_{k+1} against the backward step."""
        return backward_recurrence_error(self.u_param, self.c)


def backward_step(u, c_prev, c_cur):
    """c_{k+1} from (c_{k-1}, c_k); requires c_{k-1} > 1."""
    return np.sqrt(c_cur * (c_prev - 1.0) / u)


def forward_step(u, d_prev, d_cur):
    """d_{k+1} = 1 + u d_{k-1}^2 / d_k, the inverse of ``backward_step``."""
    return 1.0 + u * d_prev * d_prev / d_cur


def backward_recurrence_error(u, c) -> float:
    c = np.asarray(c, dtype=float)
    if c.size < 3:
        return 0.0
    rec = backward_step(u, c[:-2], c[1:-1])
    return float(np.max(np.abs(rec - c[2:]) / np.abs(c[2:])))


def backward_run(u: float, c0: float, c1: float, max_len: int = 10_000) -> AuxSequence:
    """Iterate the backward recurrence until it stops or holds ``max_len`` terms."""
    if not (u > 0):
        raise ValueError("u must be positive")
    if not (c0 > 1 and c1 > 1):
        raise ValueError("c0 and c1 must exceed 1")
    c = [float(c0), float(c1)]
    stopped = None
    while len(c) < max_len:
        if c[-2] <= 1.0:
            stopped = len(c) - 1
            break
        radicand = c[-1] * (c[-2] - 1.0) / u
        assert radicand >= 0.0, "negative radicand with c_{k-1} > 1"
        c.append(math.sqrt(radicand))
    else:
        if c[-2] <= 1.0:
            stopped = len(c) - 1
    return AuxSequence(u, classify_regime(u), np.array(c), stopped)


# subcritical sequences in deviation variables -------------------------------

def _deviation_run(u, delta, n_stop):
    """eps_0..eps_m for c_0 = C - delta, c_1 = C - nu delta.

    Stops after eps_{n_stop} or as soon as c_{k-1} <= 1 prevents the next
    term.  Returns the list of deviations.
    """
    C = 1.0 / (1.0 - u)
    floor = u * C  # c <= 1  <=>  eps >= u C
    _, nu = growth_rates(u)
    eps = [delta, nu * delta]
    while len(eps) <= n_stop:
        e_prev, e_cur = eps[-2], eps[-1]
        if e_prev >= floor:
            break
        r = C * e_prev / u + C * e_cur - e_cur * e_prev / u
        eps.append(r / (C + math.sqrt(max(C * C - r, 0.0))))
    return eps


def _subcritical_mismatch(u, delta, n):
    """c_n(delta) - 1, or a negative surrogate if the run stops before index n."""
    eps = _deviation_run(u, delta, n)
    C = 1.0 / (1.0 - u)
    if len(eps) <= n:
        return -1.0 - (n + 1 - len(eps))
    return (u * C - eps[n])


# generic plain-form runs (u >= 1) -------------------------------------------

def _plain_run(u, c0, c1, n_stop):
    c = [c0, c1]
    while len(c) <= n_stop:
        if c[-2] <= 1.0:
            break
        c.append(math.sqrt(c[-1] * (c[-2] - 1.0) / u))
    return c


def _plain_mismatch(u, c0, c1, n):
    c = _plain_run(u, c0, c1, n)
    if len(c) <= n:
        return -1.0 - (n + 1 - len(c))
    return c[n] - 1.0


def _bisect(F, lo, hi, history):
    """Bisection for F(lo) > 0 > F(hi) (either order of lo/hi on the line).

    Runs to float adjacency and returns the point with the smallest |F|,
    preferring the side with F >= 0 on ties.
    """
    f_lo, f_hi = F(lo), F(hi)
    history.append((lo, f_lo))
    history.append((hi, f_hi))
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = F(mid)
        history.append((mid, f_mid))
        if f_mid == 0.0:
            return mid, f_mid
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if abs(f_lo) <= abs(f_hi) or abs(f_lo) <= HIT_TOL:
        return lo, f_lo
    return hi, f_hi


def _finish(u, c_head, n, param, name, history, hit_error):
    """Force c_n = 1 exactly and append c_{n+1}.

    ``hit_error`` is |c_n - 1| at the returned parameter before forcing.
    """
    c = list(c_head[:n])
    c.append(1.0)
    c.append(math.sqrt((c[n - 1] - 1.0) / u))
    return AuxSequence(
        u_param=u,
        regime=classify_regime(u),
        c=np.array(c),
        stopped_at=n + 1,
        shooting_parameter=param,
        parameter_name=name,
        hit_error=float(abs(hit_error)),
        bracket_history=tuple(history),
    )


def shoot_u(u: float, target_len: int) -> AuxSequence:
    """Backward sequence with c_{target_len} = 1, for the recurrence parameter ``u``."""
    n = int(target_len)
    if n < 3:
        raise ValueError("target_len must be at least 3")
    regime = classify_regime(u)
    history: list = []

    if regime == SUBCRITICAL:
        kappa, nu = growth_rates(u)
        C = 1.0 / (1.0 - u)
        # c_n > 1 is guaranteed below this (lower growth bound)
        lo = 0.5 * (u / (1.0 - u)) / kappa**n
        if lo == 0.0:
            raise PrecisionExhaustedError(f"shooting parameter underflows at length {n}")
        limit = u * C / nu
        F = lambda d: _subcritical_mismatch(u, d, n)  # noqa: E731
        hi = lo
        for _ in range(MAX_EXPANSIONS):
            hi = min(2.0 * hi, limit * (1 - 1e-15))
            if F(hi) < 0:
                break
            lo = hi
            if hi >= limit * (1 - 1e-15):
                raise ShootingBracketError(f"no sign change up to delta={limit:g}")
        else:
            raise ShootingBracketError("bracket expansion limit reached")
        delta, f = _bisect(F, lo, hi, history)
        if abs(f) > HIT_TOL:
            raise PrecisionExhaustedError(
                f"|c_n - 1| = {abs(f):.3g} at length {n}", max_length=n - 1
            )
        eps = _deviation_run(u, delta, n)
        head = [C - e for e in eps]
        return _finish(u, head, n, delta, "delta", history, f)

    if regime == CRITICAL:
        def c1_of(A):
            return A - 1.0 / 3.0
        lo = 4.0 / 3.0 * (1 + 1e-9)
        hi = n + 2.0
    else:
        r = u ** (-1.0 / 3.0)

        def c1_of(A):
            return A * r
        lo = u ** (1.0 / 3.0) * (1 + 1e-9)
        hi = 2.0 * (1.0 + u ** (n / 3.0) * (1.0 + 1.0 / (u ** (1.0 / 3.0) - 1.0)))

    def F(A):
        return _plain_mismatch(u, A, c1_of(A), n)

    for _ in range(MAX_EXPANSIONS):
        if F(hi) > 0:
            break
        hi *= 2.0
        if not math.isfinite(hi):
            raise ShootingBracketError("no upper bracket for the shooting parameter")
    else:
        raise ShootingBracketError("bracket expansion limit reached")
    if F(lo) >= 0:
        raise ShootingBracketError("lower bracket already reaches the target length")
    # F increases with A; bisect on -F so the helper's sign convention holds
    A, f = _bisect(lambda x: -F(x), lo, hi, history)
    if abs(f) > HIT_TOL:
        raise PrecisionExhaustedError(
            f"|c_n - 1| = {abs(f):.3g} at length {n}", max_length=n - 1
        )
    head = _plain_run(u, A, c1_of(A), n)
    return _finish(u, head, n, A, "A", history, f)


def shoot(params: ModelParams, target_len: int) -> AuxSequence:
    return shoot_u(params.u, target_len)


def conditioning_cap(u: float, limit: int = 200, start: int = 3) -> int:
    """Largest target length <= ``limit`` reachable before shooting fails.

    Returns ``limit`` when every length up to it succeeds.
    """
    best = start - 1
    for n in range(start, limit + 1):
        try:
            shoot_u(u, n)
        except (PrecisionExhaustedError, ShootingBracketError):
            break
        best = n
    return best


# solutions -----------------------------------------------------------------

@dataclass(frozen=True)
class StationarySolution:
    params: ModelParams | None
    u_param: float
    regime: str
    b: np.ndarray
    a: np.ndarray | None
    envelope_constant: float
    prefix_length_exact: int
    shooting_parameter: float | None = None

    @property
    def n_modes(self) -> int:
        return self.b.size

    @property
    def e(self) -> np.ndarray | None:
        """-a_n lam^(beta n / 3), the supercritical normalisation."""
        if self.a is None or self.params is None:
            return None
        n = mode_numbers(self.b.size)
        return -self.a * self.params.lam ** (self.params.beta * n / 3.0)

    def recurrence_residual(self) -> np.ndarray:
        """Relative residual of b_k b_{k+1} = b_k + u b_{k-1}^2 for k = 1..K-1."""
        b = self.b
        prev = np.concatenate(([0.0], b[:-2]))
        lhs = b[:-1] * b[1:]
        rhs = b[:-1] + self.u_param * prev**2
        return np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs))

    def scaled_b(self) -> np.ndarray:
        """b_n u^(-n/3)."""
        n = mode_numbers(self.b.size)
        return self.b * self.u_param ** (-n / 3.0)

    def rows(self):
        n = mode_numbers(self.b.size)
        env = regime_envelope(self.regime, self.u_param, self.b.size)
        a = self.a if self.a is not None else np.full(self.b.size, np.nan)
        for k in range(self.b.size):
            yield int(n[k]), self.b[k], a[k], env[k]


def regime_envelope(regime, u, K):
    """Upper envelope for b_1..b_K in each regime (inf where none applies)."""
    k = mode_numbers(K)
    if regime == SUBCRITICAL:
        return np.full(K, 1.0 / (1.0 - u))
    if regime == CRITICAL:
        return k.copy()
    env = np.full(K, np.inf)
    # b_{k+1} <= (u^(k/3) - 1) / (u^(1/3) - 1), k >= 1
    env[1:] = (u ** (k[:-1] / 3.0) - 1.0) / (u ** (1.0 / 3.0) - 1.0)
    return env


def reverse_to_solution(aux: AuxSequence, params: ModelParams | None = None) -> StationarySolution:
    """Reverse a shot sequence into b_1..b_{n+2} and map it to a_n."""
    c = np.asarray(aux.c, dtype=float)
    if aux.stopped_at is None or aux.stopped_at != c.size - 1:
        raise InvalidAuxError("auxiliary sequence did not stop")
    n = aux.stopped_at - 1
    if abs(c[n] - 1.0) > HIT_TOL:
        raise InvalidAuxError(f"c_{n} = {c[n]!r} is not 1")
    b = c[::-1].copy()
    # forward recurrence must reproduce the prefix
    if b.size >= 3:
        fwd = forward_step(aux.u_param, b[:-2], b[1:-1])
        bad = np.abs(fwd - b[2:]) / b[2:]
        if np.max(bad) > 1e-10:
            raise InvalidAuxError(f"forward recurrence mismatch {np.max(bad):.3g}")
    a = None
    if params is not None:
        k = mode_numbers(b.size)
        a = -params.lam ** ((2.0 - params.beta) * k - 2.0) * b
    if aux.regime == SUBCRITICAL:
        const = 1.0 / (1.0 - aux.u_param)
    elif aux.regime == CRITICAL:
        const = float(np.max(b / mode_numbers(b.size)))
    else:
        const = float(b[-1] * aux.u_param ** (-b.size / 3.0))
    return StationarySolution(
        params=params,
        u_param=aux.u_param,
        regime=aux.regime,
        b=b,
        a=a,
        envelope_constant=const,
        prefix_length_exact=int(c.size),
        shooting_parameter=aux.shooting_parameter,
    )


def stationary_solution(params: ModelParams, target_len: int) -> StationarySolution:
    return reverse_to_solution(shoot(params, target_len), params)


def limit_study(params: ModelParams, lengths, u: float | None = None):
    """Tabulate d_1 (the first prefix element) against the shooting length."""
    u = params.u if u is None else u
    rows = []
    prev = None
    for n in sorted(lengths):
        sol = reverse_to_solution(shoot_u(u, n), params if u == params.u else None)
        d1 = float(sol.b[0])
        row = {"length": n, "d1": d1, "increment": None if prev is None else abs(d1 - prev)}
        if classify_regime(u) == SUPERCRITICAL:
            half = sol.scaled_b()[sol.b.size // 2 :]
            row["scaled_min"] = float(np.min(half))
            row["scaled_max"] = float(np.max(half))
        rows.append(row)
        prev = d1
    d = [r["d1"] for r in rows]
    if len(d) >= 3:
        denom = d[-1] - 2 * d[-2] + d[-3]
        extrap = d[-1] - (d[-1] - d[-2]) ** 2 / denom if denom != 0 else d[-1]
    else:
        extrap = d[-1] if d else None
    return {"rows": rows, "extrapolated_b1": extrap}


def envelope_check(sol: StationarySolution, tol: float = 1e-12) -> dict:
    """Regime envelopes and the universal lower bound for a shot solution."""
    b = sol.b
    K = b.size
    k = mode_numbers(K)
    env = regime_envelope(sol.regime, sol.u_param, K)
    report = {
        "regime": sol.regime,
        "positive": bool(np.all(b > 0)),
        "b2_is_one": bool(K >= 2 and b[1] == 1.0),
        "envelope_ok": bool(np.all(b <= env * (1 + tol))),
        "lower_bound_ok": bool(np.all(b[1:] >= 1.0 - tol)),
        "max_envelope_ratio": float(np.max(b / env)),
    }
    if sol.a is not None and sol.params is not None:
        p = sol.params
        bound = -p.lam ** ((2.0 - p.beta) * k[1:] - 2.0)
        report["a_lower_bound_ok"] = bool(np.all(sol.a[1:] <= bound * (1 - tol)))
    if sol.regime == SUBCRITICAL:
        inc = np.diff(b[1:])
        report["increasing"] = bool(np.all(inc > 0))
        report["limit"] = 1.0 / (1.0 - sol.u_param)
        report["gap_to_limit"] = float(report["limit"] - b[-1])
    elif sol.regime == CRITICAL:
        report["increasing"] = bool(np.all(np.diff(b[1:]) > 0))
        report["max_b_over_k"] = float(np.max(b / k))
    else:
        half = sol.scaled_b()[K // 2 :]
        lo, hi = float(np.min(half)), float(np.max(half))
        report["scaled_lo"] = lo
        report["scaled_hi"] = hi
        report["scaled_variation"] = (hi - lo) / hi if hi > 0 else 0.0
        report["scaled_positive"] = lo > 0
    report["ok"] = bool(
        report["positive"] and report["envelope_ok"] and report["lower_bound_ok"]
        and report.get("increasing", True) and report.get("scaled_positive", True)
    )
    return report
