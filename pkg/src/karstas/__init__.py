"""Lumped karst-spring modeling with active-subspace Bayesian calibration."""

from .bayes import (DensityEstimate, MarkovChain, MisfitEvaluator,
                    ObservationSet, PosteriorEnsemble, PushForwardSummary,
                    build_ensemble, data_misfit, effective_sample_size,
                    estimate_marginal_prior, lift, mh_active, push_forward,
                    sample_inactive, thin)
from .errors import (ChainError, ConfigError, EvaluationError, InputError,
                     KarstasError, ParameterError)
from .lukars import (CatchmentMeta, DischargeSeries, EffectiveInputSeries,
                     ForcingConfig, ForcingSeries, HydrotopeParams, ModelState,
                     initial_state, linear_discharges, nse, preprocess_forcing,
                     quickflow, simulate, step, update_indicator)
from .params import (COORD_NAMES, PHYS_NAMES, PhysicalParams, PriorSpec,
                     check_constraints, default_prior, sample_prior,
                     to_physical, transform_to_physical)
from .subspace import (GradientSample, PolySurrogate, SubspaceDecomposition,
                       bootstrap_bands, decompose, estimate_c_matrix,
                       fit_response_surface, global_sensitivities,
                       gradient_sweep, misfit_gradient, monomial_exponents,
                       recommended_sample_count)

__version__ = "0.1.0"
