"""Contrastive pretraining: NT-Xent (SimCLR-style) and InfoNCE with a momentum queue (MoCo-style)."""

from senres.contrastive.losses import info_nce, nt_xent
from senres.contrastive.moco import Queue, momentum_update, queue_push
from senres.contrastive.pretrain import (
    DESK,
    DESK_ENCODER,
    PretrainConfig,
    embed,
    moco_loss,
    pretrain,
    simclr_loss,
)

__all__ = [
    "DESK", "DESK_ENCODER", "PretrainConfig", "Queue", "embed", "info_nce", "moco_loss", "momentum_update",
    "nt_xent", "pretrain", "queue_push", "simclr_loss",
]
