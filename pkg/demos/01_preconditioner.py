"""Building the floored, low-rank inverse square root by hand.

Walks through the pieces Simba assembles every iteration: sample rows of a
gradient matrix, take the top eigenpairs of the row Gram matrix, floor them,
and apply the compact operator. Run with ``python3 demos/01_preconditioner.py``.
"""
import numpy as np

from simbaopt import (
    apply_preconditioner,
    build_inverse_sqrt,
    dense_inverse_sqrt,
    randomized_truncated_eig,
    restrict,
    sample_restriction,
)

rng = np.random.default_rng(0)

# %% A gradient block with a few dominant directions
q, d = 400, 60
G = rng.standard_normal((q, 5)) @ np.diag([50, 20, 10, 5, 2]) @ rng.standard_normal((5, d))
G += 0.01 * rng.standard_normal((q, d))

# %% Keep a quarter of the rows
R = sample_restriction(q, q // 4, rng)
Gl = restrict(R, G)
print("coarse block:", Gl.shape, " kept energy:", np.sum(Gl**2) / np.sum(G**2))

# %% Top r + 1 eigenpairs of Gl Gl^T without forming it (d < n_l here)
r, m = 8, 1e-8
spec = randomized_truncated_eig(Gl, r + 1, seed=1)
print("leading eigenvalues:", np.round(spec.eigvals, 2))

# %% Floor, fill beyond the r-th direction, compare to the dense recipe
# The noise makes Q full rank, so the sketched (r+1)-th eigenvalue, and hence
# the fill, is only approximate; with rank(Q) <= r the two agree to round-off.
P = build_inverse_sqrt(spec, m)
ref = dense_inverse_sqrt(Gl @ Gl.T, r, m)
err = np.linalg.norm(P.dense() - ref, 2) / np.linalg.norm(ref, 2)
print(f"fill = {P.fill:.4g}, rank = {P.rank}, relative error vs dense = {err:.2e}")

# %% Every eigenvalue of the operator is positive and at most m^{-1/2}
lam = P.operator_eigvals()
print(f"operator spectrum in [{lam.min():.3g}, {lam.max():.3g}], cap m^-1/2 = {m**-0.5:.3g}")

# %% The preconditioned direction flattens the spectrum of the step
D = apply_preconditioner(P, Gl)
s_before = np.linalg.svd(Gl, compute_uv=False)[: r]
s_after = np.linalg.svd(D, compute_uv=False)[: r]
print("singular values before:", np.round(s_before, 2))
print("singular values after: ", np.round(s_after, 3))
