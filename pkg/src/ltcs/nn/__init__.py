"""Dense numerics with reverse-mode gradients for the layers the ranker needs."""
from . import kernels
from .functional import layer_norm, log_softmax, smelu, smelu_grad, softmax
from .gradcheck import grad_check
from .layers import (AttentionLayerParams, Dense, Encoder, EncoderLayer, LayerNorm, MLP,
                     OpCounter, multi_head_self_attention)
from .params import EXTENDED, ParamStore

__all__ = [
    "AttentionLayerParams", "Dense", "EXTENDED", "Encoder", "EncoderLayer", "LayerNorm", "MLP",
    "OpCounter", "ParamStore", "grad_check", "kernels", "layer_norm", "log_softmax",
    "multi_head_self_attention", "smelu", "smelu_grad", "softmax",
]
