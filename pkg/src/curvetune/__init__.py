"""Curvature steering of ReLU networks by blending smooth activation paths,
with spline-smoothing foundations, toy trainers, curvature diagnostics, and
an exact circle-boundary error oracle."""

from .activations import (CtuParams, RawCtuParams, ctu, ctu_derivative,
                          gelu_reference, hbar_bound, relu, silu_eta,
                          softplus_gamma)
from .spline import (MaxAffineSpline, SelectionVector, affine_compute,
                     blended_eval, entropy, hard_select, lse_smooth, mas_eval,
                     soft_select, vq_objective)
from .network import (MlpSpec, Network, attach_lora, build_mlp, param_count,
                      replace_relu_shared, replace_relu_trainable)
from .data import CircleTask, Dataset, gen_annulus, gen_regression_1d
from .circle import total_error_closed, total_error_quadrature

__version__ = "0.1.0"
