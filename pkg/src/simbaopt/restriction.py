"""Row-sampling restriction ``R`` and prolongation ``P = R.T``.

``R`` keeps a sorted subset of rows of the identity, so restriction is a
gather and prolongation a scatter into zeros. Neither ever forms a matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import InvalidInputError, InvalidParameterError

__all__ = ["RestrictionOp", "sample_restriction", "restrict", "prolong", "guard"]


@dataclass(frozen=True)
class RestrictionOp:
    source_dim: int
    indices: np.ndarray  # strictly increasing, int64

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise InvalidParameterError("restriction needs a non-empty 1-D index set")
        if idx[0] < 0 or idx[-1] >= self.source_dim or np.any(np.diff(idx) <= 0):
            raise InvalidParameterError("indices must be strictly increasing and inside [0, q)")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def coarse_dim(self) -> int:
        return self.indices.size

    @property
    def norm(self) -> float:
        # rows of the identity: ||R||_2 = ||P||_2 = 1
        return 1.0

    def matrix(self) -> np.ndarray:
        """Dense ``n_l x q`` matrix; for tests and small demos only."""
        R = np.zeros((self.coarse_dim, self.source_dim))
        R[np.arange(self.coarse_dim), self.indices] = 1.0
        return R


def sample_restriction(q: int, n_coarse: int, rng) -> RestrictionOp:
    """Draw ``n_coarse`` of ``q`` rows uniformly without replacement.

    Full sampling returns every row and does not touch ``rng``.
    """
    if not 1 <= n_coarse <= q:
        raise InvalidParameterError(f"need 1 <= n_coarse <= q, got n_coarse={n_coarse}, q={q}")
    if n_coarse == q:
        return RestrictionOp(q, np.arange(q))
    rng = np.random.default_rng(rng)
    idx = rng.choice(q, size=n_coarse, replace=False)
    idx.sort()
    return RestrictionOp(q, idx)


def _as_rows(a, rows, what):
    a = np.asarray(a, dtype=float)
    if a.shape[0] != rows:
        raise InvalidInputError(f"{what} has {a.shape[0]} rows, expected {rows}")
    return a


def restrict(R: RestrictionOp, G):
    G = _as_rows(G, R.source_dim, "G")
    return G[R.indices]


def prolong(R: RestrictionOp, Y):
    Y = _as_rows(Y, R.coarse_dim, "Y")
    out = np.zeros((R.source_dim,) + Y.shape[1:])
    out[R.indices] = Y
    return out


def guard(R: RestrictionOp, G, xi: float, e: float) -> bool:
    """Coarse-step acceptance test on the (Frobenius) norm of ``R G``.

    True iff ``||R G|| > xi ||G||`` and ``||R G|| > e``.
    """
    if not 0.0 < xi < min(1.0, R.norm):
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")
    if not e > 0:
        raise InvalidParameterError(f"e must be positive, got {e}")
    G = _as_rows(G, R.source_dim, "G")
    rg = np.linalg.norm(G[R.indices])
    return bool(rg > xi * np.linalg.norm(G) and rg > e)
