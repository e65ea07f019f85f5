"""Stochastic reconstruction of random germs on dyadic grids."""
__version__ = "0.1.0"

from .errors import (ArgumentError, CapabilityError, ConstructionError, DomainError, Error,
                     NumericError, PreconditionError, ResolutionError, ValidationError)
from .fitting import RateFit, fit_loglog
from .germ import (CoherenceReport, ConstantGerm, DeterministicDistribution, EffectiveSupport,
                   Germ, NoiseProductGerm, SewingGerm, YoungGerm, effective_support,
                   estimate_coherence, monte_carlo_conditioned, noise_product_germ,
                   sewing_germ, young_germ)
from .grid import Grid, GridFunction, ScalingVector, TestFunction, inner_product, localize
from .integrate import (SewingInput, SewingOutput, additive_input, extend_domain,
                        homogeneity_check, ito_input, sew, walsh_integral)
from .kernels import BACKEND
from .noise import (CovarianceMeasure, FiltrationCut, NoiseField, RandomField, condition_past,
                    sample_holder_field, sample_martingale_measure, sample_noise,
                    sample_white_noise)
from .reconstruct import (BDGTable, CovarianceCheck, KolmogorovEstimate, ReconstructionRun,
                          bdg_verify, covariance_uniqueness_check, fit_error_rate,
                          kolmogorov_constant, reconstruct, run_reconstruction,
                          two_sided_offsets)
from .wavelet import (DyadicMesh, WaveletBasis, build_basis, cascade_eval, mesh_points,
                      project, verify_lemma1)
