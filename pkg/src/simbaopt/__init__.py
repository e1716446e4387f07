"""Subspace-sampled, low-rank preconditioned gradient methods in numpy.

The main entry points are :class:`Simba` (the optimizer), the problems in
:mod:`simbaopt.problems`, the rate certificates in :mod:`simbaopt.verify` and
the config-driven runner in :mod:`simbaopt.bench`.
"""
from .baselines import Adam, SGDMomentum
from .linalg import (
    InvalidInputError,
    InvalidParameterError,
    Preconditioner,
    TruncatedSpectrum,
    apply_preconditioner,
    build_inverse_sqrt,
    dense_inverse_sqrt,
    floor_eigenvalues,
    randomized_truncated_eig,
    sym_eig_dense,
)
from .libsvm import LibsvmParseError, parse_libsvm, write_libsvm
from .problems import (
    Dataset,
    MlpSpec,
    autoencoder_problem,
    nlls_problem,
    quadratic_problem,
    synthetic_autoencoder_data,
    synthetic_nlls,
)
from .restriction import RestrictionOp, guard, prolong, restrict, sample_restriction
from .simba import EmaState, Simba, SimbaParams, StepReport, coarse_step, fine_step, step
from .verify import check_contraction, rate_constants, run_theorem_check

__version__ = "0.1.0"
