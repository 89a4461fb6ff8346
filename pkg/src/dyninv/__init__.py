"""Solvers for dynamic linear inverse imaging problems.

Couples per-frame linear measurements with linear-Gaussian dynamics and
reconstructs the full frame sequence by ADMM, with the quadratic x-step
computed exactly, by one-step gradient descent, by one-step exact line
search, or by a Kalman smoother, and the regularization step computed by
proximity operators or plug-and-play denoisers.
"""

from .admm import (
    AdmmState,
    SolveTrace,
    SolverConfig,
    SolverError,
    cg_x_update,
    compute_z_rho,
    dual_update,
    estimate_hessian_norm,
    exact_x_update,
    gd_x_update,
    grad_phi,
    hessian_apply,
    solve,
    w_update_denoiser,
    w_update_prox,
)
from .estimator import SequenceReconstructor
from .kalman import (
    Belief,
    FilterTrace,
    SmootherOutput,
    forward_filter,
    ks_x_update,
    predict,
    rts_smooth,
    update_auxiliary,
    update_measurement,
)
from .metrics import mean_psnr, psnr
from .operators import (
    Covariance,
    DenseOp,
    FirstDifferenceOp,
    GaussianBlurOp,
    IdentityOp,
    LinOp,
    dense_operator,
    first_difference_operator,
    gaussian_blur_operator,
    identity_operator,
    mahalanobis_sq,
)
from .priors import Denoiser, DenoiserError, ProxOp, denoise, external_denoise, make_denoiser, prox, tv_chambolle
from .ssm import (
    FrameSequence,
    SequenceModel,
    apply_psi,
    apply_psi_adjoint,
    eval_F,
    eval_phi,
    shifted_patch_sequence,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmState",
    "Belief",
    "Covariance",
    "DenseOp",
    "Denoiser",
    "DenoiserError",
    "FilterTrace",
    "FirstDifferenceOp",
    "FrameSequence",
    "GaussianBlurOp",
    "IdentityOp",
    "LinOp",
    "ProxOp",
    "SequenceModel",
    "SequenceReconstructor",
    "SmootherOutput",
    "SolveTrace",
    "SolverConfig",
    "SolverError",
    "apply_psi",
    "apply_psi_adjoint",
    "cg_x_update",
    "compute_z_rho",
    "denoise",
    "dense_operator",
    "dual_update",
    "estimate_hessian_norm",
    "eval_F",
    "eval_phi",
    "exact_x_update",
    "external_denoise",
    "first_difference_operator",
    "forward_filter",
    "gaussian_blur_operator",
    "gd_x_update",
    "grad_phi",
    "hessian_apply",
    "identity_operator",
    "ks_x_update",
    "mahalanobis_sq",
    "make_denoiser",
    "mean_psnr",
    "predict",
    "prox",
    "psnr",
    "rts_smooth",
    "shifted_patch_sequence",
    "simulate",
    "solve",
    "tv_chambolle",
    "update_auxiliary",
    "update_measurement",
    "w_update_denoiser",
    "w_update_prox",
]
