"""Morphological activation/pooling layers with trainable parameters,
plus minimal-kernel representation tools and a small training harness."""

from .activations import (MorphoActivationParams, MorphoLayerParams,
                          activation_curve, morpho_act1_forward,
                          morpho_act2_forward, pl_activation)
from .autodiff import Tensor, finite_difference_grad, make_rng, no_grad
from .data import Dataset, load_dataset, load_idx, subset, write_idx
from .gradcheck import run_gradcheck
from .morphops import (PoolSpec, StructuringFunction, act_pool, dilate,
                       dilate_pool, erode, max_pool, min_pool,
                       posneg_pool_param, prelu2, relu, selfdual_pool)
from .representation import PLFunction, dc_decompose, minimal_basis, pl_eval
# the train() entry point stays in morphnn.train: re-exporting it here would
# shadow the submodule of the same name
from .train import (ModelSpec, TrainConfig, build_model, evaluate,
                    load_model, save_model)

__all__ = [
    "Tensor", "make_rng", "no_grad", "finite_difference_grad",
    "StructuringFunction", "PoolSpec", "dilate", "erode", "relu",
    "dilate_pool", "max_pool", "min_pool", "act_pool", "prelu2",
    "selfdual_pool", "posneg_pool_param",
    "MorphoActivationParams", "MorphoLayerParams", "pl_activation",
    "morpho_act1_forward", "morpho_act2_forward", "activation_curve",
    "PLFunction", "pl_eval", "dc_decompose", "minimal_basis",
    "Dataset", "load_idx", "write_idx", "load_dataset", "subset",
    "ModelSpec", "TrainConfig", "build_model", "evaluate",
    "save_model", "load_model",
    "run_gradcheck",
]
__version__ = "0.1.0"
