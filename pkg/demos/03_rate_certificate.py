"""Checking the linear-rate certificate on a strongly convex quadratic.

With ``beta = 0`` and the step sizes prescribed by the analysis, each
accepted coarse step must shrink ``f - f*`` by at least ``c_hat`` and each
fine step by at least ``c``; ``M`` and ``xi`` are read off the run.
"""
import numpy as np

from simbaopt import quadratic_problem, rate_constants, run_theorem_check

prob = quadratic_problem(mu=1.0, L=100.0, n=200, seed=0)

# %% Large floor: the preconditioner is m^{-1/2} I, the fastest certified rate
for m in (1e6, 1.0):
    run = run_theorem_check(prob, iters=300, m=m, xi=0.65, seed=0)
    cert = run.certificate
    print(f"m = {m:g}: {run.n_coarse} coarse / {run.n_fine} fine steps, "
          f"violations {run.n_violations}")
    print(f"   M = {cert.M:.4g}, realized xi = {cert.xi:.3f}, "
          f"c_hat = {cert.c_hat:.6f}, c = {cert.c:.6f}, K_hat = {cert.K_hat:.0f}")
    print(f"   worst observed ratio {run.stepwise_report.worst_ratio:.6f}, "
          f"final gap / initial gap {(run.f[-1] - prob.f_star) / (run.f[0] - prob.f_star):.3e}")

# %% K_hat grows like log(1/eps)
for eps in (1e-2, 1e-4, 1e-6, 1e-8):
    print(f"eps = {eps:g}: K_hat = {rate_constants(1.0, 100.0, 1e6, 1e6, 0.65, gap0=1.0, eps=eps).K_hat:.0f}")

# %% Follow one run far enough to actually reach eps
run = run_theorem_check(prob, iters=4000, m=1e6, xi=0.65, seed=0)
print(f"first iteration with gap <= eps: {run.first_hit}, certified bound K_hat = {run.certificate.K_hat:.0f}")

# %% Forcing an impossible factor shows what a failure looks like
bad = run_theorem_check(prob, iters=50, m=1.0, xi=0.65, seed=0, factor=0.5)
print("with factor 0.5:", bad.stepwise_report.n_violations, "of 50 steps flagged, first at",
      bad.stepwise_report.violations[:3])
