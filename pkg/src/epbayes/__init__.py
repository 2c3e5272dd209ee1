"""Empirical partially Bayes two-sample tests for many features with few replicates.

The package estimates a prior for the nuisance variances by nonparametric
maximum likelihood and averages classical tail areas over the resulting
posterior:

* VREPB averages the pooled-t tail over the posterior of the variance ratio;
* DVEPB averages the normal tail over the posterior of both variances.

Classical baselines (equal-variance t, Welch, fiducial Behrens-Fisher), the
Benjamini-Hochberg procedure, precision weights and a simulation harness are
included.
"""

from .distributions import Tolerance
from .errors import ConfigurationError, DataError, DomainError, EpbError, NumericError, ShapeError
from .mtp import RejectionResult, benjamini_hochberg
from .npmle import (
    DiscretePrior1D,
    DiscretePrior2D,
    NpmleFit,
    build_grid_1d,
    build_grid_2d,
    fit_dv_prior,
    fit_npmle,
    fit_vr_prior,
)
from .pvalues import (
    MethodId,
    TestRow,
    p_bf,
    p_ev,
    p_welch,
    pdv_fixed,
    pdv_prior,
    pvalue_arrays,
    pvr_fixed_lambda,
    pvr_prior,
    run_all,
)
from .simulate import LambdaLaw, SimulationReport, SimulationScenario, generate, run_study
from .summary import DerivedStats, FeatureSummary, FeatureTable, behrens_fisher_stat, summarize, summarize_matrix

__version__ = "0.1.0"
