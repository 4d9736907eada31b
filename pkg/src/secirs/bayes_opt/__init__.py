"""Channel-free design search with Gaussian-process surrogates."""
from .acquisition import acquisition_cucb, acquisition_eic, beta, expected_improvement
from .codec import (LatentCodec, PerturbedSampler, RayleighSampler, decode, encode, feature_map,
                    kernel_latent, mc_objective)
from .gp import GPHyper, GPSurrogate, KernelSpec, gp_fit, gp_predict, information_gain
from .loop import BoConfig, BoResult, BoState, DesignBoConfig, constrained_bo, run_bo
from .synthetic import ConstrainedQuadratic
