"""Surrogates, designs, and calibration for stochastic computer simulators.

The package groups into:

* ``data`` / ``kernels`` / ``gp``: replicate-aware datasets, correlation
  kernels, and the homoscedastic GP surrogate.
* ``hetgp`` / ``sk`` / ``qk`` / ``multioutput``: input-dependent variance
  modeling, stochastic kriging, quantile kriging, and basis surrogates.
* ``design``: space-filling and IMSPE-driven sequential designs.
* ``calibration``: Kennedy-O'Hagan MCMC, history matching, rejection ABC,
  and the OLS / SINGLE / NOCAL comparators.
* ``analysis``: expected improvement, contour uncertainty, Sobol indices,
  RMSE / Score metrics.
* ``testbeds``: the fish mark-recapture ABM and the ocean random-walk
  simulator, plus synthetic field-data generation.
* ``pipelines`` / ``cli``: reproducible experiment runner.
"""

from .analysis import (BOTrace, MetricReport, SobolIndices, bo_loop, ei_plugin,
                       ei_value, expected_improvement, mcu, rmse, score,
                       sobol_indices, variance_sobol)
from .calibration import (ABCResult, CalibrationPrior, FieldData, HMConfig,
                          ImplausibilityResult, InvGammaPrior, MCMCConfig,
                          OLSResult, PosteriorSamples, abc_reject, hm_wave,
                          implausibility, koh_fit, koh_predict, nocal_predict,
                          ols_calibrate, simulator_evaluator,
                          surrogate_evaluator)
from .data import (MultiOutputDataset, ReplicateDataset, SufficientStats,
                   reduce_replicates)
from .design import (CandidateSet, DesignPlan, HypotheticalGP, allocate_replicates,
                     imspe, lhd, maximin_lhd, run_sequential_design, scale_to,
                     seq_design_step, sobol_points)
from .errors import (CalibrationError, ConditioningError, FitError,
                     SimulatorError, StochsurrError)
from .gp import (GPModel, PredictiveDist, SearchConfig, fit_homgp,
                 neg_log_likelihood, predict)
from .hetgp import HetGPModel, fit_hetgp, predict_hetgp, smooth_log_variances
from .kernels import KernelSpec, corr, corr_qual, cross_corr
from .multioutput import (BasisSurrogate, fit_multioutput, pca_basis,
                          predict_multioutput)
from .qk import QKModel, empirical_quantiles, fit_qk, predict_qk
from .sk import SKModel, fit_sk

__version__ = "0.1.0"
