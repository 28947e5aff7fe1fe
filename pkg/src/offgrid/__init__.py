"""Off-the-grid recovery of sparse measures from sketched mixture data.

Submodules: geometry (measures, Fisher-Rao metric, regions), kernels (translation-invariant
kernels and their derivatives), lpc (curvature constants and audits), switch (kernel-switch
constant), sketching (random Fourier feature sketches), certificates (dual certificates),
solver (BLASSO and Frank-Wolfe with sliding), pipeline (end-to-end experiments).
"""
from .errors import (ConfigurationError, DiagnosticError, EmbeddingViolation, IllPosedError, InvalidArgument,
                     OffgridError, PreconditionError, UnsupportedError)
from .geometry import (DiscreteMeasure, MetricTensor, ParameterBox, RegionLabeling, classify_regions,
                       fisher_rao_distance, min_separation, model_membership, region_statistics)
from .kernels import (GaussianKernel, Sinc4Kernel, SincSmoothingKernel, SpectralGrid, TIKernel,
                      TemplateDistribution, cauchy_template, covariant_derivative, gaussian_template,
                      kernel_from_config, model_kernel_from_template, operator_norm, point_mass_template,
                      template_from_config)
from .lpc import (LpcReport, audit_curvature, audit_sinc4, derivative_bound_audit, interference_check,
                  sinc4_lpc_params)
from .switch import SwitchConstant, supermix_switch_constant, supersmooth_scaling_probe, switch_constant
from .sketching import (IrwinHallLaw, SketchOperator, SketchVector, UniformCubeLaw, draw_operator,
                        merge_sketches, noise_level_bound, sketch_dataset, sketch_from_json, sketch_size,
                        sketch_to_json, tail_bound_levels)
from .certificates import (CertificateAudit, DualCertificate, SketchedCertificate, UpsilonSystem,
                           assemble_upsilon, audit_certificate, bregman_divergence, build_certificate,
                           build_localizing_certificate, build_sketched_certificate, divergence_lower_bound)
from .solver import (BlassoProblem, BoundConstants, BoundReport, SolveConfig, SolveTrace, bound_verdict,
                     calibrate_kappa, effective_radius, near_optimality, objective, solve)
from .pipeline import ExperimentConfig, RunRecord, run_experiment, simulate_mixture, tau_max

__version__ = "0.1.0"
