"""Differentiable test problems with analytic gradients.

Every problem exposes its parameters as a dict of named blocks and evaluates
``loss(params, idx)`` / ``grad(params, idx)`` on the samples ``idx`` (all
samples when ``idx is None``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import ortho_group

from .linalg import InvalidInputError, InvalidParameterError

__all__ = [
    "Dataset",
    "Problem",
    "QuadraticProblem",
    "NLLSProblem",
    "MlpSpec",
    "AutoencoderProblem",
    "quadratic_problem",
    "nlls_problem",
    "autoencoder_problem",
    "synthetic_nlls",
    "synthetic_autoencoder_data",
]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (m, n)
    labels: np.ndarray  # (m,)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidInputError("features must be a non-empty 2-D array")
        if y.shape != (X.shape[0],):
            raise InvalidInputError(f"labels shape {y.shape} does not match {X.shape[0]} samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


class Problem:
    """Interface shared by the test problems.

    Subclasses set ``shapes`` (block name -> shape) and ``n_samples`` and
    implement ``loss`` and ``grad``. Known constants (``mu``, ``L``,
    ``f_star``, ``x_star``) are ``None`` unless the problem provides them.
    """

    shapes: dict
    n_samples: int = 1
    mu: Optional[float] = None
    L: Optional[float] = None
    f_star: Optional[float] = None
    x_star: Optional[dict] = None

    def loss(self, params, idx=None) -> float:
        raise NotImplementedError

    def grad(self, params, idx=None) -> dict:
        raise NotImplementedError

    def init_params(self, rng=None, kind="default") -> dict:
        rng = np.random.default_rng(rng)
        if kind == "zeros":
            return {k: np.zeros(s) for k, s in self.shapes.items()}
        if kind == "normal":
            return {k: rng.standard_normal(s) for k, s in self.shapes.items()}
        raise InvalidParameterError(f"unknown init kind {kind!r}")

    def grad_norm(self, params, idx=None) -> float:
        g = self.grad(params, idx)
        return float(np.sqrt(sum(np.sum(v**2) for v in g.values())))


# -- quadratic -------------------------------------------------------------


class QuadraticProblem(Problem):
    """``f(x) = 0.5 (x - x*)^T A (x - x*)`` with a prescribed spectrum."""

    def __init__(self, A, x_star, eigvals):
        self.A = A
        self.eigvals = eigvals
        n = A.shape[0]
        self.shapes = {"x": (n,)}
        self.mu = float(eigvals.min())
        self.L = float(eigvals.max())
        self.f_star = 0.0
        self.x_star = {"x": x_star}

    def loss(self, params, idx=None):
        r = params["x"] - self.x_star["x"]
        return float(0.5 * r @ (self.A @ r))

    def grad(self, params, idx=None):
        return {"x": self.A @ (params["x"] - self.x_star["x"])}

    def init_params(self, rng=None, kind="zeros"):
        if kind == "default":
            kind = "zeros"
        return super().init_params(rng, kind)


def quadratic_problem(mu, L, n=None, x_star=None, seed=None, basis="random"):
    """Strongly convex quadratic whose Hessian has eigenvalues ``linspace(mu, L, n)``.

    ``basis="identity"`` keeps the Hessian diagonal.
    """
    if not 0 < mu < L:
        raise InvalidParameterError(f"need 0 < mu < L, got mu={mu}, L={L}")
    rng = np.random.default_rng(seed)
    if x_star is None:
        if n is None:
            raise InvalidParameterError("give either n or x_star")
        x_star = rng.standard_normal(n)
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.size
    lam = np.linspace(mu, L, n) if n > 1 else np.array([mu])
    if basis == "identity" or n == 1:
        A = np.diag(lam)
    else:
        U = ortho_group.rvs(n, random_state=rng)
        A = (U * lam) @ U.T
        A = 0.5 * (A + A.T)
    return QuadraticProblem(A, x_star, lam)


# -- non-linear least squares -----------------------------------------------


def _g(w):
    # g(w) = 1 / (1 + exp(w)); expit saturates cleanly for any |w|
    return expit(-w)


class NLLSProblem(Problem):
    """``(1/m) sum_i (b_i - g(a_i^T x))^2`` with ``g(w) = 1/(1 + e^w)``."""

    def __init__(self, data: Dataset):
        self.data = data
        self.shapes = {"x": (data.n_features,)}
        self.n_samples = data.n_samples

    def _batch(self, idx):
        if idx is None:
            return self.data.features, self.data.labels
        return self.data.features[idx], self.data.labels[idx]

    def loss(self, params, idx=None):
        A, b = self._batch(idx)
        x = params["x"]
        if x.shape != self.shapes["x"]:
            raise InvalidInputError(f"x has shape {x.shape}, expected {self.shapes['x']}")
        return float(np.mean((b - _g(A @ x)) ** 2))

    def grad(self, params, idx=None):
        A, b = self._batch(idx)
        x = params["x"]
        if x.shape != self.shapes["x"]:
            raise InvalidInputError(f"x has shape {x.shape}, expected {self.shapes['x']}")
        g = _g(A @ x)
        # d/dw (b - g)^2 = 2 (b - g) * g (1 - g), since g' = -g (1 - g)
        coef = 2.0 * (b - g) * g * (1.0 - g)
        return {"x": A.T @ coef / b.size}

    def init_params(self, rng=None, kind="zeros"):
        if kind == "default":
            kind = "zeros"
        return super().init_params(rng, kind)


def nlls_problem(data: Dataset) -> NLLSProblem:
    return NLLSProblem(data)


def synthetic_nlls(m, n, sparsity=0.1, seed=None, df=3.0, row_norm=1.0):
    """Sparse heavy-tailed features with labels planted through ``g``.

    ``sparsity`` is the expected fraction of non-zero features per row;
    values are Student-t with ``df`` degrees of freedom, scaled so a row has
    expected squared norm ``row_norm**2``. ``b_i = 1`` iff
    ``g(a_i^T x_true) > 0.5``. Returns ``(dataset, x_true)``.
    """
    if m < 1 or n < 1:
        raise InvalidParameterError("m and n must be positive")
    if not 0 < sparsity <= 1:
        raise InvalidParameterError("sparsity must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < sparsity
    # at least one non-zero per row
    mask[np.arange(m), rng.integers(0, n, size=m)] = True
    vals = rng.standard_t(df, size=(m, n))
    X = np.where(mask, vals, 0.0) * (row_norm / np.sqrt(sparsity * n * df / (df - 2.0)))
    x_true = rng.standard_normal(n) * np.sqrt(n) / row_norm
    b = (_g(X @ x_true) > 0.5).astype(float)
    return Dataset(X, b), x_true


# -- autoencoder -------------------------------------------------------------


_ACTIVATIONS = {
    "sigmoid": (expit, lambda a: a * (1.0 - a)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(float)),
}


@dataclass(frozen=True)
class MlpSpec:
    """Autoencoder layout: full width list, e.g. ``(64, 32, 16, 8, 16, 32, 64)``."""

    widths: Sequence[int]
    activation: str = "sigmoid"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        if len(w) < 2 or any(v < 1 for v in w):
            raise InvalidParameterError("need at least two positive widths")
        if w != w[::-1]:
            raise InvalidParameterError(f"encoder/decoder widths are not mirrored: {w}")
        if self.activation not in _ACTIVATIONS:
            raise InvalidParameterError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "widths", w)

    @property
    def n_layers(self):
        return len(self.widths) - 1


class AutoencoderProblem(Problem):
    """Fully connected autoencoder, mean squared reconstruction error.

    Layer ``l`` computes ``a_l = act(W_l a_{l-1} + b_l)`` with ``W_l`` of shape
    ``(fan_out, fan_in)``; the activation is applied on every layer, output
    included. Gradients are back-propagated by hand.
    """

    def __init__(self, spec: MlpSpec, data: Dataset):
        if data.n_features != spec.widths[0]:
            raise InvalidInputError(
                f"data width {data.n_features} != autoencoder input width {spec.widths[0]}"
            )
        self.spec = spec
        self.data = data
        self.n_samples = data.n_samples
        self.act, self.dact = _ACTIVATIONS[spec.activation]
        self.shapes = {}
        for l, (fi, fo) in enumerate(zip(spec.widths[:-1], spec.widths[1:]), start=1):
            self.shapes[f"W{l}"] = (fo, fi)
            self.shapes[f"b{l}"] = (fo,)

    def init_params(self, rng=None, kind="default"):
        if kind != "default":
            return super().init_params(rng, kind)
        rng = np.random.default_rng(self.spec.seed if rng is None else rng)
        params = {}
        for name, shape in self.shapes.items():
            if name.startswith("W"):
                bound = self.spec.init_scale / np.sqrt(shape[1])
                params[name] = rng.uniform(-bound, bound, size=shape)
            else:
                params[name] = np.zeros(shape)
        return params

    def _inputs(self, idx):
        return self.data.features if idx is None else self.data.features[idx]

    def _forward(self, params, X):
        acts = [X]
        a = X
        for l in range(1, self.spec.n_layers + 1):
            W, b = params[f"W{l}"], params[f"b{l}"]
            if W.shape != self.shapes[f"W{l}"] or b.shape != self.shapes[f"b{l}"]:
                raise InvalidInputError(f"layer {l} parameter shapes do not match the layout")
            a = self.act(a @ W.T + b)
            acts.append(a)
        return acts

    def loss(self, params, idx=None):
        X = self._inputs(idx)
        out = self._forward(params, X)[-1]
        return float(np.mean((out - X) ** 2))

    def grad(self, params, idx=None):
        X = self._inputs(idx)
        acts = self._forward(params, X)
        grads = {}
        # d loss / d output, loss = mean over batch and features
        delta = 2.0 * (acts[-1] - X) / X.size
        for l in range(self.spec.n_layers, 0, -1):
            dz = delta * self.dact(acts[l])
            grads[f"W{l}"] = dz.T @ acts[l - 1]
            grads[f"b{l}"] = dz.sum(axis=0)
            delta = dz @ params[f"W{l}"]
        return {k: grads[k] for k in self.shapes}


def autoencoder_problem(spec: MlpSpec, data: Dataset) -> AutoencoderProblem:
    return AutoencoderProblem(spec, data)


def synthetic_autoencoder_data(n_samples=512, width=64, latent=4, seed=None):
    """Points in ``(0, 1)^width`` lying near a smooth ``latent``-dimensional manifold.

    Labels are zero; only the features matter for reconstruction.
    """
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, size=(n_samples, latent))
    mix = rng.standard_normal((latent, width)) * 2.0
    phase = rng.uniform(0, 2 * np.pi, size=width)
    X = expit(np.sin(z @ mix + phase) * 3.0)
    return Dataset(X, np.zeros(n_samples))
