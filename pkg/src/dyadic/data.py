"""Initial-data generators for experiment configs."""

from __future__ import annotations

import numpy as np

from .errors import InvalidStateError
from .model import ModelParams, as_state, envelope, mode_numbers

KINDS = ("zero", "explicit", "geometric", "envelope", "random")


def _signs(pattern, n_modes):
    if pattern in (None, "+", "positive"):
        return np.ones(n_modes)
    if pattern in ("-", "negative"):
        return -np.ones(n_modes)
    if pattern == "alternating":
        return (-1.0) ** (mode_numbers(n_modes) + 1)
    s = np.asarray(pattern, dtype=float)
    if s.size != n_modes:
        raise InvalidStateError(f"sign pattern has {s.size} entries, expected {n_modes}")
    return np.sign(s)


def random_data(n_modes: int, seed: int, decay: float = 0.5, nonnegative: bool = True,
                norm: float = 1.0) -> np.ndarray:
    """Random amplitudes damped by decay^n, rescaled to the given l2 norm."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, n_modes) * decay ** mode_numbers(n_modes)
    if not nonnegative:
        a *= rng.choice([-1.0, 1.0], n_modes)
    nrm = np.linalg.norm(a)
    return a * (norm / nrm) if nrm > 0 else a


def make_data(desc: dict, params: ModelParams, n_modes: int, seed: int | None = None) -> np.ndarray:
    """Build an initial vector from a description dict with a ``type`` key.

    zero; explicit {values}; geometric {A, r}: A r^n; envelope {scale, eps,
    signs}: sign_n scale eps lam^((2-beta)n); random {seed, decay,
    nonnegative, norm}.
    """
    kind = desc.get("type", "explicit")
    if kind == "zero":
        a = np.zeros(n_modes)
    elif kind == "explicit":
        vals = as_state(desc["values"])
        a = np.zeros(n_modes)
        m = min(vals.size, n_modes)
        a[:m] = vals[:m]
    elif kind == "geometric":
        a = float(desc.get("A", 1.0)) * float(desc.get("r", 0.5)) ** mode_numbers(n_modes)
    elif kind == "envelope":
        eps = float(desc["eps"])
        a = float(desc.get("scale", 1.0)) * _signs(desc.get("signs"), n_modes) * envelope(
            params, n_modes, eps
        )
    elif kind == "random":
        s = desc.get("seed", seed) if seed is None else seed
        if s is None:
            raise InvalidStateError("random initial data needs a seed")
        a = random_data(
            n_modes,
            int(s),
            decay=float(desc.get("decay", 0.5)),
            nonnegative=bool(desc.get("nonnegative", True)),
            norm=float(desc.get("norm", 1.0)),
        )
    else:
        raise InvalidStateError(f"unknown data type {kind!r}; expected one of {KINDS}")
    return as_state(a)
