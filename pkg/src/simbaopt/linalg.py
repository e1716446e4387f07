"""Symmetric eigendecompositions and the floored inverse-square-root preconditioner.

The preconditioner is kept in compact form: a scalar ``fill`` for every
direction outside the leading ``r`` eigenvectors plus a length-``r``
correction on that subspace, so applying it never builds an ``n x n`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidInputError",
    "InvalidParameterError",
    "TruncatedSpectrum",
    "Preconditioner",
    "sym_eig_dense",
    "randomized_truncated_eig",
    "floor_eigenvalues",
    "build_inverse_sqrt",
    "apply_preconditioner",
    "dense_inverse_sqrt",
]


class InvalidInputError(ValueError):
    """Malformed array input (non-finite entries, wrong shape)."""


class InvalidParameterError(ValueError):
    """A scalar or integer parameter outside its admissible range."""


@dataclass(frozen=True)
class TruncatedSpectrum:
    eigvals: np.ndarray  # (k,), descending, >= 0
    eigvecs: np.ndarray  # (n, k), orthonormal columns

    @property
    def source_dim(self) -> int:
        return self.eigvecs.shape[0]

    @property
    def k(self) -> int:
        return self.eigvals.shape[0]


@dataclass(frozen=True)
class Preconditioner:
    """Compact representation of ``fill * I + basis @ diag(correction) @ basis.T``."""

    fill: float
    basis: np.ndarray  # (n, r)
    correction: np.ndarray  # (r,), every entry <= 0
    floor_m: float
    top_floored: float  # largest eigenvalue of Q after flooring

    @property
    def source_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def operator_eigvals(self) -> np.ndarray:
        """Distinct eigenvalues of the implied operator (kept subspace first, then fill)."""
        return np.append(self.fill + self.correction, self.fill)

    def dense(self) -> np.ndarray:
        n = self.source_dim
        U = self.basis
        return self.fill * np.eye(n) + (U * self.correction) @ U.T


def _check_finite(a, name="input"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def _fix_signs(U):
    # first entry that is not round-off noise gets a positive sign
    if U.size == 0:
        return U
    mag = np.abs(U)
    tol = 1e-10 * mag.max(axis=0, keepdims=True)
    first = np.argmax(mag > tol, axis=0)
    signs = np.sign(U[first, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def sym_eig_dense(A):
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(eigvals, eigvecs)`` with ``A = eigvecs @ diag(eigvals) @ eigvecs.T``.
    """
    A = _check_finite(A, "matrix")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    w, U = np.linalg.eigh(0.5 * (A + A.T))
    w = w[::-1]
    U = _fix_signs(U[:, ::-1])
    return w, U


def _gram_eig_dense(G, k):
    w, U = sym_eig_dense(G @ G.T)
    return w[:k], U[:, :k]


def randomized_truncated_eig(G, k, oversample=10, power_iters=2, seed=None):
    """Top-``k`` eigenpairs of ``Q = G @ G.T`` by randomized subspace iteration.

    When ``G`` has fewer columns than rows the sketch is taken of ``G`` itself
    and squared singular values are returned; otherwise ``Q`` is formed and
    sketched directly. Falls back to the dense path when ``k + oversample``
    reaches the row count.

    Parameters
    ----------
    G : array, shape (n, d)
    k : int
        Number of eigenpairs kept (``r + 1`` for the preconditioner).
    seed : int, Generator or None
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    n, d = G.shape
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k must lie in [1, {n}], got {k}")
    if oversample < 0 or power_iters < 0:
        raise InvalidParameterError("oversample and power_iters must be non-negative")

    if k + oversample >= n:
        w, U = _gram_eig_dense(_check_finite(G, "G"), k)
    else:
        rng = np.random.default_rng(seed)
        ell = k + oversample
        if d < n:
            w, U = _sketch_factor(_check_finite(G, "G"), ell, power_iters, rng)
        else:
            Q = G @ G.T
            # a non-finite entry of G always reaches the diagonal of Q,
            # which is cheaper to scan than G itself
            if not np.all(np.isfinite(np.diagonal(Q))):
                raise InvalidInputError("G contains non-finite entries")
            w, U = _sketch_gram(Q, ell, power_iters, rng)
        w, U = w[:k], _fix_signs(U[:, :k])
    return TruncatedSpectrum(np.maximum(w, 0.0), U)


def _sketch_factor(G, ell, power_iters, rng):
    n, d = G.shape
    Y = G @ rng.standard_normal((d, ell))
    V, _ = np.linalg.qr(Y)
    # with ell >= d the sketch already spans range(G)
    for _ in range(power_iters if ell < d else 0):
        Z, _ = np.linalg.qr(G.T @ V)
        V, _ = np.linalg.qr(G @ Z)
    B = V.T @ G  # (ell, d)
    Ub, s, _ = np.linalg.svd(B, full_matrices=True)
    w = np.zeros(ell)
    w[: s.size] = s**2
    return w, V @ Ub


def _sketch_gram(Q, ell, power_iters, rng):
    n = Q.shape[0]
    V, _ = np.linalg.qr(Q @ rng.standard_normal((n, ell)))
    for _ in range(power_iters):
        V, _ = np.linalg.qr(Q @ V)
    B = V.T @ Q @ V
    w, Ub = np.linalg.eigh(0.5 * (B + B.T))
    return w[::-1], V @ Ub[:, ::-1]


def floor_eigenvalues(eigvals, m):
    """Replace every eigenvalue below ``m`` by ``m``."""
    if not m > 0:
        raise InvalidParameterError(f"floor m must be positive, got {m}")
    return np.maximum(np.asarray(eigvals, dtype=float), m)


def build_inverse_sqrt(spec: TruncatedSpectrum, m: float) -> Preconditioner:
    """Assemble the floored ``Q^{-1/2}`` from ``r + 1`` leading eigenpairs.

    The last kept eigenvalue (after flooring) stands in for every eigenvalue
    beyond the ``r``-th.
    """
    if spec.k < 1:
        raise InvalidParameterError("need at least one eigenpair (r + 1 >= 1)")
    lam = floor_eigenvalues(np.maximum(spec.eigvals, 0.0), m)
    fill = lam[-1] ** -0.5
    r = spec.k - 1
    correction = lam[:r] ** -0.5 - fill
    # guard the sign invariant against round-off on ties
    correction = np.minimum(correction, 0.0)
    return Preconditioner(
        fill=float(fill),
        basis=spec.eigvecs[:, :r],
        correction=correction,
        floor_m=float(m),
        top_floored=float(lam[0]),
    )


def apply_preconditioner(P: Preconditioner, V):
    """Return ``P @ V`` in O(r n d) without forming the ``n x n`` operator."""
    V = np.asarray(V, dtype=float)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    if V.shape[0] != P.source_dim:
        raise InvalidInputError(
            f"row dimension {V.shape[0]} does not match preconditioner size {P.source_dim}"
        )
    out = P.fill * V
    if P.rank:
        out = out + P.basis @ (P.correction[:, None] * (P.basis.T @ V))
    return out[:, 0] if squeeze else out


def dense_inverse_sqrt(Q, r, m):
    """Reference operator from a full eigendecomposition of ``Q``.

    Every eigenvalue is floored at ``m``; those past the ``r``-th are replaced
    by the floored ``(r+1)``-th one. Used as the oracle for the compact path.
    """
    w, U = sym_eig_dense(Q)
    w = np.maximum(w, 0.0)
    lam = floor_eigenvalues(w, m)
    if r + 1 < lam.size:
        lam[r + 1 :] = lam[r]
    return (U * lam**-0.5) @ U.T
