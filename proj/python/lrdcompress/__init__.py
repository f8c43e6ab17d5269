"""Low-rank decomposition of CNN weight checkpoints.

Architectures and rank plans cross the boundary as JSON text; `load` turns
them into dicts when you want to poke at them.
"""

import json

from ._core import (
    apply_weakening,
    build_resnet,
    compress,
    conv_forward,
    count_macs,
    count_params,
    decompose_dense,
    decompose_pointwise,
    decompose_tucker2,
    evbmf,
    fold,
    mode_mult,
    plan_ranks,
    pr_rank_dense,
    pr_ranks_tucker2,
    quantize_rank,
    random_checkpoint,
    read_checkpoint,
    select_layers,
    svd,
    truncated_svd,
    unfold,
    vbmf_rank,
    verify,
    write_checkpoint,
)


def load(text):
    return json.loads(text)


__all__ = [
    "apply_weakening",
    "build_resnet",
    "compress",
    "conv_forward",
    "count_macs",
    "count_params",
    "decompose_dense",
    "decompose_pointwise",
    "decompose_tucker2",
    "evbmf",
    "fold",
    "load",
    "mode_mult",
    "plan_ranks",
    "pr_rank_dense",
    "pr_ranks_tucker2",
    "quantize_rank",
    "random_checkpoint",
    "read_checkpoint",
    "select_layers",
    "svd",
    "truncated_svd",
    "unfold",
    "vbmf_rank",
    "verify",
    "write_checkpoint",
]
