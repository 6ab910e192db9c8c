"""Fair regression by post-processing with barycenter transport maps."""

from .errors import (ConfigError, DomainError, FairbaryError,
                     InfeasibilityError, SchemaError, SidecarError)
from .measures import (DomainInterval, EmpiricalMeasure, QuantileFunction,
                       Weights, barycenter_oracle, minimax_center_upper_bound,
                       oracle_map, transport_cost, w2_distance)
from .maps import (CongruentFamily, KnotGrid, MonotoneMap, invert,
                   make_congruent, project_to_lipschitz, sieve_level)
from .potentials import (CorrelationValue, PotentialPair, QuadratureSpec,
                         correlation_gap, multiple_correlation)
from .estimator import (BarycenterAligner, FitReport, SieveSpec, SolverConfig,
                        fit_maps, map_error, nearest_congruent_family,
                        select_level)
from .regression import (FairBarycenterRegressor, FairRegressor, GroupSample,
                         KNNRegressor, NadarayaWatsonRegressor,
                         averaged_reduction, fit_base, fit_fair)
from .metrics import (BernsteinCase, BoundCheck, EvalSpec, UnfairnessReport,
                      bernstein_check, check_fairness_bound, ks_statistic,
                      unfairness, weighted_sq_distance)
from .synth import (GroundTruth, MonotoneLinkLaw, ScenarioSpec, TruncNormalLaw,
                    UniformLaw, congruent_family_from_quantiles, generate,
                    make_truth, oracle_family_from_measures,
                    pushforward_samples, random_congruent_family, truth_error)

__version__ = "0.1.0"
