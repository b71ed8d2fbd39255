"""Per-stage analysis of a trained network.

Each stage ``k`` produces a background ``B^k``, an object map ``O^k`` and a
restored image ``D^k``. The background should become more low-rank and the
object map sparser as ``k`` grows; :func:`analyse` measures both.

``O^k`` lives in logit space (only ``sigmoid(O^K)`` is supervised), so its
raw values are never zero. Sparsity is measured on the object heatmap
``sigmoid(O^k)``: a pixel counts as zero when it would render as 0 in an
8-bit image, i.e. below half a grey level.
"""

from dataclasses import dataclass, field

import numpy as np

from .metrics import InterpretabilityReport, evaluate, sparsity_rate
from .unfolded.pipeline import predict

TOP_K = 5
HEATMAP_ZERO_TOL = 0.5 / 255


def object_heatmap(o):
    """``sigmoid(o)`` written through tanh so large logits do not overflow."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(o, dtype=np.float64)))


def stage_outputs(images, cfg, params, batch_size=16):
    """``(B, O, D, prob)``: arrays of shape (N, K, H, W) for the maps, (N, H, W) for ``prob``."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    outs = {"B": [], "O": [], "D": []}
    probs = []
    for start in range(0, len(images), batch_size):
        x = images[start:start + batch_size, None].astype(params.dtype)
        stages, prob = predict(x, cfg, params)
        for key in outs:
            outs[key].append(np.stack([getattr(s, key).data[:, 0] for s in stages], axis=1))
        probs.append(prob[:, 0])
    return (*(np.concatenate(outs[k]).astype(np.float64) for k in ("B", "O", "D")),
            np.concatenate(probs).astype(np.float64))


@dataclass
class Analysis:
    """Interpretability measurements over a set of images.

    ``reports[i]`` holds image ``i``'s per-stage spectra and sparsity rates.
    ``top_share[i, k]`` is the energy share of the top five singular values
    of ``B^{k+1}``; ``sparsity[i, k]`` is ``r_s`` of the heatmap of
    ``O^{k+1}``. ``sparsity_minmax[i, k]`` is the same rate on the raw map
    after per-image min-max scaling, kept for comparison.
    """

    reports: list = field(default_factory=list)
    top_share: np.ndarray = None
    sparsity: np.ndarray = None
    metrics: dict = None
    sparsity_minmax: np.ndarray = None

    @property
    def stages(self):
        return self.top_share.shape[1]

    def median_top_share(self):
        return np.median(self.top_share, axis=0)

    def median_sparsity(self):
        return np.median(self.sparsity, axis=0)

    def median_spectrum(self):
        """Per-stage median singular values and cumulative energy across images."""
        s = np.median([[r.singular_values[k] for k in range(self.stages)] for r in self.reports], axis=0)
        c = np.median([[r.cum_energy[k] for k in range(self.stages)] for r in self.reports], axis=0)
        return InterpretabilityReport(list(s), list(c), list(self.median_sparsity()))

    def trend(self):
        """The two end-to-end comparisons between the first and last stage."""
        ts, sp = self.median_top_share(), self.median_sparsity()
        return {
            "median_top5_share_first": float(ts[0]),
            "median_top5_share_last": float(ts[-1]),
            "low_rank_trend_holds": bool(ts[-1] >= ts[0]),
            "median_sparsity_first": float(sp[0]),
            "median_sparsity_last": float(sp[-1]),
            "sparsity_trend_holds": bool(sp[-1] <= sp[0]),
        }


def analyse(images, masks, cfg, params, zero_tol=HEATMAP_ZERO_TOL, names=None):
    b, o, _, prob = stage_outputs(images, cfg, params)
    heat = object_heatmap(o)
    reports = [InterpretabilityReport.from_stages(list(b[i]), list(heat[i]), zero_tol) for i in range(len(b))]
    top = np.array([[r.cum_energy[k][min(TOP_K, len(r.cum_energy[k])) - 1] for k in range(cfg.stages)]
                    for r in reports])
    sparsity = np.array([r.sparsity for r in reports])
    minmax = np.array([[sparsity_rate(o[i, k], 1e-6, normalize=True) for k in range(cfg.stages)]
                       for i in range(len(o))])
    metrics = evaluate(prob, np.asarray(masks) >= 0.5, names) if masks is not None else None
    return Analysis(reports, top, sparsity, metrics, minmax)

