"""Differentiable advection-diffusion-reaction operators on 2D grids."""

from .advection import assemble_push_matrix, push, push_color, push_mass
from .container import load_container, save_container
from .diffusion import (DctPlan, dct2, dense_neumann_laplacian, diffuse_explicit,
                        diffuse_implicit, idct2, laplacian_5pt, softplus_inverse)
from .errors import (AdrflowError, ConfigError, ContainerFormatError,
                     DivergenceError, ShapeMismatchError)
from .fields import DisplacementField, GridField, PushMode
from .metrics import MetricReport, compute_report, mae, mse, nmse, nrmse, psnr, rmse, ssim
from .model import (AdrLayerParams, AdrModel, DisplacementNetParams, HistoryWindow,
                    ModelConfig, adr_layer, count_parameters, displacement_net,
                    forward, init_model, load_checkpoint, matched_ablation_config,
                    named_parameters, rollout, save_checkpoint, watch_model)
from .reaction import (Conv3x3Params, Mlp1x1Params, apply_mlp, channel_linear,
                       conv3x3, reaction_step, residual_conv_block)
from .tape import (Tape, Var, backward, elementwise, finite_difference_grad,
                   silu, silu_grad, softplus)
from .training import (AdamState, TrainConfig, TrainResult, adam_step,
                       gradcheck_model, mse_loss, train)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
