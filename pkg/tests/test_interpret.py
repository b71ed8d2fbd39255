import warnings

import numpy as np
import pytest

from rpcaseg.interpret import HEATMAP_ZERO_TOL, analyse, object_heatmap, stage_outputs
from rpcaseg.io.synth import SynthParams, generate
from rpcaseg.unfolded import NetConfig, init_params


def test_heatmap_is_a_stable_sigmoid():
    x = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        h = object_heatmap(x)
    np.testing.assert_allclose(h[1:4], 1 / (1 + np.exp(-x[1:4])), rtol=1e-14)
    assert h[0] == 0.0 and h[-1] == 1.0


def test_zero_tolerance_is_half_a_grey_level():
    # Logits below about -6.2 render as grey level 0; above that they do not.
    assert object_heatmap(-6.3) <= HEATMAP_ZERO_TOL < object_heatmap(-6.2)
    assert round(255 * object_heatmap(-6.3)) == 0


@pytest.fixture(scope="module")
def small_model():
    cfg = NetConfig(stages=2, channels=2, oem_layers=1, irm_layers=1, dcpm_kernel=3)
    params = init_params(cfg, np.random.default_rng(0))
    images, masks = generate(0, 3, SynthParams(size=16))
    return cfg, params, images, masks


def test_analysis_sparsity_is_measured_on_heatmaps(small_model):
    cfg, params, images, masks = small_model
    a = analyse(images, masks, cfg, params)
    _, o, _, _ = stage_outputs(images, cfg, params)
    expect = (object_heatmap(o) > HEATMAP_ZERO_TOL).mean(axis=(2, 3))
    np.testing.assert_array_equal(a.sparsity, expect)
    minmax = np.array([[np.count_nonzero((m - m.min()) / (m.max() - m.min()) > 1e-6) / m.size for m in row]
                       for row in o])
    np.testing.assert_allclose(a.sparsity_minmax, minmax, rtol=0, atol=1e-15)
    assert a.top_share.shape == a.sparsity.shape == (3, 2)
    trend = a.trend()
    assert trend["sparsity_trend_holds"] == (np.median(a.sparsity[:, -1]) <= np.median(a.sparsity[:, 0]))


def test_analysis_without_masks(small_model):
    cfg, params, images, _ = small_model
    assert analyse(images, None, cfg, params).metrics is None
