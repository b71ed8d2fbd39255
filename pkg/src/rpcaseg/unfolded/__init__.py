"""Deep-unfolded robust PCA network for sparse object segmentation."""

from .config import LossConfig, NetConfig, TrainSchedule
from .loss import loss, soft_iou
from .modules import bam_forward, contrast_prior, dcpm_forward, irm_forward, oem_forward
from .pipeline import StageState, init_params, pipeline_forward, predict
from .train import TrainResult, train

__all__ = [
    "NetConfig", "LossConfig", "TrainSchedule", "StageState", "TrainResult",
    "init_params", "pipeline_forward", "predict", "bam_forward", "dcpm_forward",
    "contrast_prior", "oem_forward", "irm_forward", "loss", "soft_iou", "train",
]
