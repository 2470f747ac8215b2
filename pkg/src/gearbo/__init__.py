"""Sample-efficient gear-ratio tuning for a knee energy harvester.

Multi-task Gaussian-process Bayesian optimization over a discrete grid of
CVT gear ratios, a simulated participant-plus-device oracle with known optima,
and a paired benchmark against random search.
"""

from .errors import ConfigurationError, NumericalDegeneracyError, ParameterDomainError
from .gp import (Dataset, HyperPrior, MtgpHyperparams, MultiTaskGP, Posterior,
                 Standardizer, build_gram, fit_hyperparameters, kernel_input,
                 log_marginal_likelihood, posterior)
from .mtbo import (AcquisitionConfig, BOConfig, FitConfig, TaskResult, TerminationConfig,
                   check_termination, optimize_task, run_sequence, select_next, ucb)
from .harvester import (DeviceConstants, ScoreConfig, TaskProfile, make_profile,
                        trial_score, ground_truth)
from .bench import Scenario, ScenarioReport, random_search, run_scenario, summarize

__version__ = "0.1.0"
