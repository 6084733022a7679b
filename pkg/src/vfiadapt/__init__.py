"""Test-time cycle-consistency motion adaptation for midpoint frame interpolation.

A classical coarse-to-fine Horn-Schunck estimator plays the frozen motion
module; a per-pixel affine flow adapter is tuned per sequence by plain
gradient descent on a cycle-consistency loss.
"""

from ._kernels import BACKEND
from .adaptation import (AdaptationConfig, AdaptationReport, Septuplet, adapt,
                         cycle_loss_step, e2e_adapt, naive_loss_step)
from .adapter import AdapterGrad, AdapterParams, apply, backward, init_identity, sgd_step
from .flow_estimator import EstimatorParams, estimate_flow, extract_features, intermediate_flows
from .imaging import (FlowField, SampleJacobian, backward_warp, gaussian_pyramid, load_frame,
                      read_flo, save_frame, write_flo)
from .metrics import MetricReport, l1_loss, psnr, ssim
from .synthesizer import interpolate, interpolate_backward, interpolate_frozen

__version__ = "0.1.0"
