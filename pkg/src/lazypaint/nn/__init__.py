from .autodiff import (
    Tensor,
    concat,
    detach,
    exp,
    gelu,
    grad_enabled,
    layer_norm,
    log,
    matmul,
    no_grad,
    reduce_mean,
    reduce_sum,
    reshape,
    set_check_finite,
    softmax,
    sqrt,
    take_rows,
    tanh,
)
from .gradcheck import grad_check
from .layers import (
    EncoderBlock,
    FinalLayer,
    LabelEmbedder,
    LayerNorm,
    Linear,
    Mlp,
    ModulatedBlock,
    Module,
    MultiHeadAttention,
    TimestepEmbedder,
    pos_embed_2d,
    sequence_concat,
    sinusoid_embed,
    trunc_normal,
)

__all__ = [
    "Tensor", "concat", "detach", "exp", "gelu", "grad_enabled", "layer_norm",
    "log", "matmul", "no_grad", "reduce_mean", "reduce_sum", "reshape",
    "set_check_finite", "softmax", "sqrt", "take_rows", "tanh", "grad_check",
    "EncoderBlock", "FinalLayer", "LabelEmbedder", "LayerNorm", "Linear",
    "Mlp", "ModulatedBlock", "Module", "MultiHeadAttention", "TimestepEmbedder",
    "pos_embed_2d", "sequence_concat", "sinusoid_embed", "trunc_normal",
]
