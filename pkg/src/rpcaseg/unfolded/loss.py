from ..autodiff import functional as F
from ..autodiff.tensor import as_tensor
from ..errors import DimensionError
from .config import LossConfig


def soft_iou(pred, gt, smooth=1e-6):
    """Per-sample soft IoU, shape (N,)."""
    inter = F.sum(pred * gt, axis=(1, 2, 3))
    union = F.sum(pred + gt - pred * gt, axis=(1, 2, 3))
    return (inter + smooth) / (union + smooth)


def loss(pred, gt, d_final, image, cfg=LossConfig()):
    """``(1 - mean soft IoU) + sigma * MSE(D^K, image)``.

    ``pred`` is the sigmoid of the final object map, ``gt`` the binary mask.
    The smoothing term keeps target-free samples defined (they score 1 when
    the prediction is empty).
    """
    pred, gt = as_tensor(pred), as_tensor(gt)
    d_final, image = as_tensor(d_final), as_tensor(image)
    if not (pred.shape == gt.shape == d_final.shape == image.shape):
        raise DimensionError(
            f"loss inputs differ in shape: {pred.shape}, {gt.shape}, {d_final.shape}, {image.shape}")
    seg = 1.0 - F.mean(soft_iou(pred, gt, cfg.smooth))
    diff = d_final - image
    return seg + cfg.sigma * F.mean(diff * diff)
