"""Simba: EMA-of-gradients preconditioning on randomly sampled rows.

Every parameter block is treated as a ``q x d`` matrix (vectors as ``q x 1``).
Each iteration, per block::

    G  <- beta * G + grad                    (no (1 - beta), no bias correction)
    Gl <- R G                                (random rows, n_l = ceil(frac * q))
    Q  =  Gl Gl^T,  top r+1 eigenpairs by randomized subspace iteration
    x  <- x - t * P Q^{-1/2} Gl             (floored, fill beyond the r-th)

Only the sampled rows of a block move in a coarse step. In ``"guarded"`` mode
a step whose sampled rows carry too little of ``||G||`` falls back to the full
(fine) preconditioner built from all rows.
"""
from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .linalg import (
    InvalidInputError,
    InvalidParameterError,
    apply_preconditioner,
    build_inverse_sqrt,
    randomized_truncated_eig,
)
from .restriction import RestrictionOp, guard, restrict, sample_restriction

__all__ = [
    "SimbaParams",
    "EmaState",
    "StepReport",
    "ema_update",
    "coarse_step",
    "fine_step",
    "step",
    "block_rng",
    "Simba",
]

COARSE = "coarse"
FINE = "fine"


@dataclass(frozen=True)
class SimbaParams:
    lr: float = 1e-2
    beta: float = 0.9
    rank: int = 20
    coarse_fraction: float = 0.5
    floor: float = 1e-8
    xi: float = 0.1
    e: float = 1e-12
    oversample: int = 10
    power_iters: int = 2
    mode: str = "coarse"  # "coarse" (always coarse) or "guarded"
    seed: int = 0

    def __post_init__(self):
        if not (callable(self.lr) or self.lr > 0):
            raise InvalidParameterError("lr must be positive or a callable")
        if not 0.0 <= self.beta < 1.0:
            raise InvalidParameterError("beta must lie in [0, 1)")
        if self.rank < 0:
            raise InvalidParameterError("rank must be non-negative")
        if not 0.0 < self.coarse_fraction <= 1.0:
            raise InvalidParameterError("coarse_fraction must lie in (0, 1]")
        if not self.floor > 0:
            raise InvalidParameterError("floor must be positive")
        if not 0.0 < self.xi < 1.0:
            raise InvalidParameterError("xi must lie in (0, 1)")
        if not self.e > 0:
            raise InvalidParameterError("e must be positive")
        if self.mode not in ("coarse", "guarded"):
            raise InvalidParameterError(f"unknown mode {self.mode!r}")

    def coarse_dim(self, q: int) -> int:
        return min(q, max(1, math.ceil(self.coarse_fraction * q)))


@dataclass
class EmaState:
    G: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, x):
        return cls(np.zeros_like(np.asarray(x, dtype=float)))


@dataclass
class StepReport:
    block: str
    kind: str
    grad_norm: float  # ||G_k||_F
    restricted_norm: float  # ||R G_k||_F
    top_eig: float  # largest kept eigenvalue of Q, before flooring
    n_floored: int  # kept eigenvalues raised to the floor
    top_floored: float = 0.0  # max(top_eig, m): upper curvature bound M_k
    coarse_dim: int = 0
    step_size: float = 0.0
    seconds: float = 0.0

    @property
    def ratio(self) -> float:
        return self.restricted_norm / self.grad_norm if self.grad_norm > 0 else 0.0


StepSize = Union[float, Callable[[StepReport], float]]


def ema_update(state: EmaState, grad, beta: float) -> EmaState:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.G.shape:
        raise InvalidInputError(f"gradient shape {grad.shape} != state shape {state.G.shape}")
    if not np.all(np.isfinite(grad)):
        raise InvalidInputError("gradient contains non-finite entries")
    return EmaState(beta * state.G + grad, state.step_count + 1)


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    return a.reshape(a.shape[0], -1) if a.ndim != 2 else a


def _preconditioned_update(x, state, hp, rng, R, kind, lr, block_id):
    t0 = time.perf_counter()
    X = _as_matrix(x)
    G = _as_matrix(state.G)
    Gl = restrict(R, G)
    k = min(hp.rank + 1, R.coarse_dim)
    spec = randomized_truncated_eig(Gl, k, hp.oversample, hp.power_iters, seed=rng)
    P = build_inverse_sqrt(spec, hp.floor)
    report = StepReport(
        block=block_id,
        kind=kind,
        grad_norm=float(np.linalg.norm(G)),
        restricted_norm=float(np.linalg.norm(Gl)),
        top_eig=float(spec.eigvals[0]),
        n_floored=int(np.count_nonzero(spec.eigvals < hp.floor)),
        top_floored=P.top_floored,
        coarse_dim=R.coarse_dim,
    )
    lr = hp.lr if lr is None else lr
    t = float(lr(report)) if callable(lr) else float(lr)
    report.step_size = t

    new = X.copy()
    new[R.indices] -= t * apply_preconditioner(P, Gl)
    report.seconds = time.perf_counter() - t0
    return new.reshape(np.shape(x)), report


def coarse_step(x, state: EmaState, hp: SimbaParams, rng=None, *, lr: StepSize = None,
                restriction: RestrictionOp = None, block_id: str = ""):
    """Coarse update of one block from its (already updated) EMA state.

    ``restriction`` lets the caller reuse the operator it ran the guard on;
    otherwise one is drawn from ``rng``. ``lr`` overrides ``hp.lr`` and may be
    a callable receiving the partially filled :class:`StepReport`.
    """
    rng = np.random.default_rng(rng)
    q = np.shape(x)[0]
    if restriction is None:
        n_l = q if q <= hp.rank + 1 else hp.coarse_dim(q)
        restriction = sample_restriction(q, n_l, rng)
    return _preconditioned_update(x, state, hp, rng, restriction, COARSE, lr, block_id)


def fine_step(x, state: EmaState, hp: SimbaParams, rng=None, *, lr: StepSize = None,
              block_id: str = ""):
    """Same update with ``R = I``: every row is kept."""
    rng = np.random.default_rng(rng)
    q = np.shape(x)[0]
    return _preconditioned_update(
        x, state, hp, rng, RestrictionOp(q, np.arange(q)), FINE, lr, block_id
    )


def block_rng(seed: int, block_id: str) -> np.random.Generator:
    """Independent stream per block, derived from the master seed and the block name."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(block_id.encode()),))
    return np.random.default_rng(ss)


def step(params: Mapping[str, np.ndarray], states: Mapping[str, EmaState], grads,
         hp: SimbaParams, rngs: Mapping[str, np.random.Generator], mode: str = None,
         lr: StepSize = None):
    """One Simba iteration over every block.

    Returns ``(new_params, new_states, reports)``; inputs are not modified.
    """
    mode = hp.mode if mode is None else mode
    new_params, new_states, reports = {}, {}, []
    for name, x in params.items():
        st = ema_update(states[name], grads[name], hp.beta)
        rng = rngs[name]
        q = np.shape(x)[0]
        if mode == "guarded":
            n_l = q if q <= hp.rank + 1 else hp.coarse_dim(q)
            R = sample_restriction(q, n_l, rng)
            if guard(R, _as_matrix(st.G), hp.xi, hp.e):
                x_new, rep = coarse_step(x, st, hp, rng, lr=lr, restriction=R, block_id=name)
            else:
                x_new, rep = fine_step(x, st, hp, rng, lr=lr, block_id=name)
        elif mode == "coarse":
            x_new, rep = coarse_step(x, st, hp, rng, lr=lr, block_id=name)
        else:
            raise InvalidParameterError(f"unknown mode {mode!r}")
        new_params[name] = x_new
        new_states[name] = st
        reports.append(rep)
    return new_params, new_states, reports


@dataclass
class Simba:
    """Stateful wrapper holding the EMA accumulators and per-block RNG streams.

    >>> opt = Simba(SimbaParams(lr=0.05))
    >>> params, reports = opt.step(params, grads)      # doctest: +SKIP
    """

    hp: SimbaParams = field(default_factory=SimbaParams)
    states: dict = field(default_factory=dict)
    rngs: dict = field(default_factory=dict)
    name: str = "simba"

    def step(self, params, grads, lr: StepSize = None):
        for k, x in params.items():
            if k not in self.states:
                self.states[k] = EmaState.zeros_like(x)
                self.rngs[k] = block_rng(self.hp.seed, k)
        new_params, self.states, reports = step(
            params, self.states, grads, self.hp, self.rngs, lr=lr
        )
        return new_params, reports
