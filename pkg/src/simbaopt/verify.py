"""Linear-rate certificates for Simba on strongly convex problems.

For a ``mu``-strongly convex, ``L``-smooth ``f`` and floored curvature
``m I <= Q <= M I``, the coarse step ``t = xi^2 m / (L sqrt(M) omega^4)``
contracts the optimality gap by ``c_hat = 1 - xi^4 m mu / (omega^4 M L)``
and the fine step ``t = m / (L sqrt(M))`` by ``c = 1 - m mu / (M L)``.
``M`` and ``xi`` are not known before a run, so the certificate is formed
a posteriori from the values realized along the trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import InvalidInputError, InvalidParameterError, Preconditioner, apply_preconditioner
from .restriction import RestrictionOp, prolong, restrict
from .simba import COARSE, FINE, EmaState, SimbaParams, StepReport, block_rng, step

__all__ = [
    "NumericalConsistencyError",
    "RateCertificate",
    "ContractionReport",
    "theoretical_step_coarse",
    "theoretical_step_fine",
    "rate_constants",
    "iteration_bound",
    "lambda_hat",
    "check_contraction",
    "finite_diff_grad",
    "gradient_check",
    "TheoremRun",
    "run_theorem_check",
]

GAP_FLOOR = 1e-14


class NumericalConsistencyError(ArithmeticError):
    pass


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise InvalidParameterError(f"{k} must be positive, got {v}")


def theoretical_step_coarse(xi, m, L, M, omega=1.0):
    _positive(xi=xi, m=m, L=L, M=M, omega=omega)
    if xi > omega:
        raise InvalidParameterError("xi must not exceed omega")
    return xi**2 * m / (L * math.sqrt(M) * omega**4)


def theoretical_step_fine(m, L, M):
    _positive(m=m, L=L, M=M)
    return m / (L * math.sqrt(M))


def iteration_bound(rate, gap0, eps):
    """Iterations after which ``rate**k * gap0 <= eps``."""
    if not 0 < rate < 1:
        raise InvalidParameterError(f"rate must lie in (0, 1), got {rate}")
    _positive(gap0=gap0, eps=eps)
    return math.log(gap0 / eps) / math.log(1.0 / rate)


@dataclass(frozen=True)
class RateCertificate:
    mu: float
    L: float
    m: float
    M: float
    xi: float
    omega: float
    c_hat: float
    c: float
    K_hat: Optional[float] = None
    K: Optional[float] = None


def rate_constants(mu, L, m, M, xi, omega=1.0, gap0=None, eps=None) -> RateCertificate:
    """Contraction constants and (optionally) iteration bounds for accuracy ``eps``."""
    if not 0 < mu < L:
        raise InvalidParameterError(f"need 0 < mu < L, got mu={mu}, L={L}")
    if not 0 < m <= M:
        raise InvalidParameterError(f"need 0 < m <= M, got m={m}, M={M}")
    if not 0 < xi <= omega:
        raise InvalidParameterError(f"need 0 < xi <= omega, got xi={xi}, omega={omega}")
    c_hat = 1.0 - xi**4 * m * mu / (omega**4 * M * L)
    c = 1.0 - m * mu / (M * L)
    K_hat = K = None
    if gap0 is not None and eps is not None:
        K_hat = iteration_bound(c_hat, gap0, eps)
        K = iteration_bound(c, gap0, eps)
    return RateCertificate(mu, L, m, M, xi, omega, c_hat, c, K_hat, K)


def lambda_hat(grad, R: RestrictionOp, P: Preconditioner, atol=1e-10):
    """``sqrt(g^T P_op Q^{-1/2} R g)`` for one block.

    Also checks it against ``-<g, d>`` with ``d = -prolong(Q^{-1/2} R g)``.
    """
    g = np.asarray(grad, dtype=float)
    g = g.reshape(g.shape[0], -1)
    rg = restrict(R, g)
    qrg = apply_preconditioner(P, rg)
    quad = float(np.sum(rg * qrg))
    d = -prolong(R, qrg)
    other = -float(np.sum(g * d))
    if quad < -1e-12:
        raise NumericalConsistencyError(f"negative quadratic form {quad}")
    if abs(quad - other) > atol * max(1.0, abs(quad)):
        raise NumericalConsistencyError(f"lambda^2 mismatch: {quad} vs {other}")
    return math.sqrt(max(quad, 0.0))


@dataclass
class ContractionReport:
    ratios: np.ndarray
    factors: np.ndarray
    violations: np.ndarray  # iteration indices k where gap_{k+1} > factor_k * gap_k
    worst_ratio: float
    slope: float  # fitted slope of log(gap) against k

    @property
    def n_violations(self) -> int:
        return int(self.violations.size)


def check_contraction(trace, f_star, factor, floor=GAP_FLOOR) -> ContractionReport:
    """Compare successive optimality-gap ratios against ``factor``.

    ``factor`` is a scalar or one value per transition ``k -> k+1``. Ratios
    are only formed while the gap exceeds ``floor``.
    """
    f = np.asarray(trace, dtype=float)
    if f.size < 2:
        raise InvalidInputError("need at least two objective values")
    gap = f - f_star
    factors = np.broadcast_to(np.asarray(factor, dtype=float), (f.size - 1,))
    live = gap[:-1] > floor
    ratios = np.full(f.size - 1, np.nan)
    ratios[live] = gap[1:][live] / gap[:-1][live]
    bad = np.flatnonzero(live & (ratios > factors + 1e-12))
    worst = float(np.nanmax(ratios)) if live.any() else float("nan")
    pos = np.flatnonzero(gap > floor)
    slope = float(np.polyfit(pos, np.log(gap[pos]), 1)[0]) if pos.size >= 2 else float("nan")
    return ContractionReport(ratios, np.array(factors), bad, worst, slope)


def finite_diff_grad(fun: Callable[[np.ndarray], float], x, h=1e-5, coords=None):
    """Central differences of ``fun`` at ``x``.

    Returns the full gradient, or only the entries at the flat indices
    ``coords`` when given.
    """
    if not h > 0:
        raise InvalidParameterError("h must be positive")
    x = np.array(x, dtype=float)
    flat = x.reshape(-1)
    idx = np.arange(flat.size) if coords is None else np.asarray(coords)
    out = np.empty(idx.size)
    for n, j in enumerate(idx):
        old = flat[j]
        flat[j] = old + h
        fp = fun(x)
        flat[j] = old - h
        fm = fun(x)
        flat[j] = old
        out[n] = (fp - fm) / (2 * h)
    return out.reshape(x.shape) if coords is None else out


def gradient_check(problem, params, idx=None, h=1e-5, max_coords=50, rng=None):
    """Worst relative error between analytic and central-difference gradients.

    Blocks with more than ``max_coords`` entries are probed on a random
    subset of ``max_coords`` coordinates.
    """
    rng = np.random.default_rng(rng)
    analytic = problem.grad(params, idx)
    worst = 0.0
    for name, x in params.items():
        coords = None
        if x.size > max_coords:
            coords = rng.choice(x.size, size=max_coords, replace=False)

        def f(v, name=name):
            return problem.loss({**params, name: v}, idx)

        fd = finite_diff_grad(f, x, h, coords)
        an = analytic[name].reshape(-1) if coords is None else analytic[name].reshape(-1)[coords]
        fd = fd.reshape(-1)
        scale = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-300)
        worst = max(worst, float(np.linalg.norm(fd - an) / scale))
    return worst


# -- end-to-end theorem check ----------------------------------------------


@dataclass
class TheoremRun:
    f: np.ndarray  # objective values f(x_0), ..., f(x_K)
    kinds: list
    step_rates: np.ndarray  # per-step contraction constant from that step's (xi, M)
    ratios_realized: np.ndarray  # ||R g|| / ||g|| on every step
    top_floored: np.ndarray  # M_k
    step_sizes: np.ndarray
    lambda_bound_ok: bool  # lambda_hat^2 >= ||R g||^2 / sqrt(M_k) on every step
    direction_bound_ok: bool  # ||d|| <= omega^2 / sqrt(m) ||g|| on every step
    certificate: RateCertificate = None
    coarse_report: ContractionReport = None
    fine_report: ContractionReport = None
    stepwise_report: ContractionReport = None
    eps: float = None
    bound_holds: bool = None
    first_hit: Optional[int] = None

    @property
    def n_coarse(self):
        return sum(k == COARSE for k in self.kinds)

    @property
    def n_fine(self):
        return sum(k == FINE for k in self.kinds)

    @property
    def n_violations(self):
        return (self.coarse_report.n_violations + self.fine_report.n_violations
                + self.stepwise_report.n_violations)


def run_theorem_check(problem, iters=300, m=1.0, xi=0.5, e=1e-12, coarse_fraction=0.5,
                      rank=20, seed=0, eps_rel=1e-6, x0=None, factor=None) -> TheoremRun:
    """Run guarded Simba with ``beta = 0`` and the theoretical step sizes.

    The coarse step uses the realized ratio ``||R g|| / ||g||`` (which exceeds
    the guard threshold ``xi`` on every accepted step) and the realized top
    floored eigenvalue ``M_k``; the fine step uses ``M_k``. Afterwards the
    trajectory is checked against the run-level certificate built from
    ``max M_k`` and the smallest accepted ratio, against each step's own
    constant, and against the iteration bound for ``eps = eps_rel * gap0``.
    ``factor`` overrides both certificate constants (to exercise the failure path).
    """
    if problem.mu is None or problem.L is None or problem.f_star is None:
        raise InvalidParameterError("problem does not expose mu, L and f*")
    mu, L, f_star = problem.mu, problem.L, problem.f_star
    hp = SimbaParams(lr=1.0, beta=0.0, rank=rank, coarse_fraction=coarse_fraction,
                     floor=m, xi=xi, e=e, mode="guarded", seed=seed)
    omega = 1.0

    def theory_lr(rep: StepReport):
        if rep.kind == COARSE:
            return theoretical_step_coarse(rep.ratio, m, L, rep.top_floored, omega)
        return theoretical_step_fine(m, L, rep.top_floored)

    params = problem.init_params(seed) if x0 is None else {k: np.array(v, float) for k, v in x0.items()}
    states = {k: EmaState.zeros_like(v) for k, v in params.items()}
    rngs = {k: block_rng(seed, k) for k in params}
    f = [problem.loss(params)]
    kinds, rates, ratios, tops, sizes = [], [], [], [], []
    lam_ok, dir_ok = True, True
    for _ in range(iters):
        grads = problem.grad(params)
        new, states, reps = step(params, states, grads, hp, rngs, lr=theory_lr)
        (rep,) = reps
        (name,) = params
        g = grads[name]
        if rep.step_size > 0:
            # direction recovered from the realized update: d = dx / t
            d = (new[name] - params[name]) / rep.step_size
            lam_sq = -float(np.sum(g * d))
            lower = rep.restricted_norm**2 / math.sqrt(rep.top_floored)
            lam_ok &= lam_sq >= lower * (1 - 1e-10)
            dir_ok &= bool(np.linalg.norm(d) <= omega**2 / math.sqrt(m) * np.linalg.norm(g) * (1 + 1e-10))
        params = new
        f.append(problem.loss(params))
        kinds.append(rep.kind)
        ratios.append(rep.ratio)
        tops.append(rep.top_floored)
        sizes.append(rep.step_size)
        xi_k = rep.ratio if rep.kind == COARSE else 1.0
        rates.append(1.0 - xi_k**4 * m * mu / (omega**4 * rep.top_floored * L))

    f = np.array(f)
    kinds_arr = np.array(kinds)
    tops = np.array(tops)
    ratios = np.array(ratios)
    coarse = kinds_arr == COARSE
    M = float(max(tops.max(), m))
    xi_real = float(ratios[coarse].min()) if coarse.any() else 1.0
    gap0 = f[0] - f_star
    eps = eps_rel * gap0
    cert = rate_constants(mu, L, m, M, min(xi_real, omega), omega, gap0=gap0, eps=eps)

    c_hat = cert.c_hat if factor is None else factor
    c_fine = cert.c if factor is None else factor
    # transitions k -> k+1 tagged by the kind of step k; others get an infinite factor
    coarse_factor = np.where(coarse, c_hat, np.inf)
    fine_factor = np.where(~coarse, c_fine, np.inf)
    step_factor = np.array(rates) if factor is None else np.full(iters, factor)
    run = TheoremRun(
        f=f, kinds=kinds, step_rates=np.array(rates), ratios_realized=ratios,
        top_floored=tops, step_sizes=np.array(sizes),
        lambda_bound_ok=bool(lam_ok), direction_bound_ok=dir_ok,
        certificate=cert,
        coarse_report=check_contraction(f, f_star, coarse_factor),
        fine_report=check_contraction(f, f_star, fine_factor),
        stepwise_report=check_contraction(f, f_star, step_factor),
        eps=eps,
    )
    gap = f - f_star
    hits = np.flatnonzero(gap <= eps)
    run.first_hit = int(hits[0]) if hits.size else None
    k0 = math.ceil(cert.K_hat)
    run.bound_holds = bool(np.all(gap[k0:] <= eps)) if k0 <= iters else True
    return run
