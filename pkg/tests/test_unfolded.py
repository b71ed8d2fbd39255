import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netcheck import GRAD_TOL, fd_check, pipeline_gradcheck, randomize
from oracles import conv2d_loops
from rpcaseg.autodiff import Tensor
from rpcaseg.autodiff import functional as F
from rpcaseg.errors import ConfigError, DataError, DimensionError, TrainingDiverged
from rpcaseg.io.synth import SynthParams, generate
from rpcaseg.unfolded import (LossConfig, NetConfig, TrainSchedule, bam_forward, contrast_prior,
                              dcpm_forward, init_params, irm_forward, loss, oem_forward,
                              pipeline_forward, train)
from rpcaseg.unfolded.modules import zeros_like_features

CFG = NetConfig(stages=2, channels=4)


def fresh(cfg=CFG, seed=0):
    params = init_params(cfg, seed)
    randomize(params, np.random.default_rng(seed + 100))
    return params


def image(rng, n=1, size=8):
    return Tensor(rng.uniform(size=(n, 1, size, size)))


def zero_matching(params, pattern, what=("weight", "bias", "w_x", "w_h")):
    for name, t in params.params.items():
        if pattern in name and name.rsplit(".", 1)[-1] in what:
            t.data[...] = 0


def identity_bn(params):
    for name, t in params.params.items():
        if ".bn" in name:
            t.data[...] = 1.0 if name.endswith("weight") else 0.0
    for name, b in params.buffers.items():
        b[...] = 0.0 if name.endswith("running_mean") else 1.0


# ------------------------------------------------------------- config

@pytest.mark.parametrize("kwargs", [{"stages": 0}, {"channels": 0}, {"dcpm_kernel": 4},
                                    {"lstm_kernel": 2}, {"se_ratio": 0}])
def test_net_config_validation(kwargs):
    with pytest.raises(ConfigError):
        NetConfig(**kwargs)


def test_paper_configuration():
    cfg = NetConfig.paper()
    assert (cfg.stages, cfg.channels, cfg.oem_layers, cfg.irm_layers, cfg.dcpm_kernel, cfg.se_ratio) == \
        (6, 32, 6, 3, 17, 4)


def test_loss_config_validation():
    with pytest.raises(ConfigError):
        LossConfig(sigma=-0.1)
    with pytest.raises(ConfigError):
        LossConfig(sigma=float("nan"))


# ---------------------------------------------------------------- BAM

def test_bam_zero_branch_is_residual_identity():
    rng = np.random.default_rng(0)
    params = fresh()
    zero_matching(params, "stage1.bam")
    identity_bn(params)
    s = params.scope("stage1.bam")
    d, o = image(rng), image(rng)
    h = c = zeros_like_features(d, CFG)
    b, _, _ = bam_forward(d, o, h, c, s, CFG)
    np.testing.assert_array_equal(b.data, d.data - o.data)


@pytest.mark.parametrize("mam", [True, False])
def test_bam_shapes_and_memory(mam):
    cfg = NetConfig(stages=1, channels=4, mam_enabled=mam)
    params = fresh(cfg)
    rng = np.random.default_rng(1)
    d = image(rng, n=2, size=11)
    h = c = zeros_like_features(d, cfg)
    b, h2, c2 = bam_forward(d, Tensor(np.zeros_like(d.data)), h, c, params.scope("stage1.bam"), cfg)
    assert b.shape == d.shape and h2.shape == c2.shape == (2, 4, 11, 11)
    if not mam:
        assert not h2.data.any() and not c2.data.any()


def test_bam_shape_mismatch():
    params = fresh()
    rng = np.random.default_rng(2)
    d = image(rng)
    h = c = zeros_like_features(d, CFG)
    with pytest.raises(DimensionError):
        bam_forward(d, image(rng, size=6), h, c, params.scope("stage1.bam"), CFG)


def test_bam_gradients_reach_every_block():
    rng = np.random.default_rng(3)
    params = fresh()
    d, o = image(rng), image(rng)
    h = Tensor(rng.normal(size=(1, 4, 8, 8)) * 0.1)
    c = Tensor(rng.normal(size=(1, 4, 8, 8)) * 0.1)
    s = params.scope("stage1.bam")
    w = rng.normal(size=(1, 1, 8, 8))
    fn = lambda: F.sum(bam_forward(d, o, h, c, s, CFG)[0] * Tensor(w))
    names = [n for n in params.params if n.startswith("stage1.bam.")]
    assert any("conv_b1" in n for n in names) and any("mam" in n for n in names)
    rows = fd_check(fn, [params.params[n] for n in names], names, picks_per_tensor=6)
    for name, err, _, _ in rows:
        assert err <= GRAD_TOL, name


# --------------------------------------------------------------- DCPM

def test_contrast_prior_vanishes_on_flat_interior():
    params = fresh()
    s = params.scope("stage1.oem.dcpm")
    k = CFG.dcpm_kernel
    feat = Tensor(np.full((1, CFG.channels, 20, 20), 0.7))
    p = contrast_prior(feat, s, theta=1.0).data
    r = k // 2
    np.testing.assert_allclose(p[:, :, r:-r, r:-r], 0.0, atol=1e-12)
    assert np.abs(p[:, :, 0, 0]).max() > 1e-6  # zero padding shows at the border


def test_contrast_prior_without_attention_is_negated_conv():
    params = fresh()
    s = params.scope("stage1.oem.dcpm")
    rng = np.random.default_rng(4)
    feat = Tensor(rng.normal(size=(2, CFG.channels, 10, 10)))
    w = s["p_o.weight"].data
    expected = -conv2d_loops(feat.data, w, padding=w.shape[2] // 2)
    np.testing.assert_allclose(contrast_prior(feat, s, theta=0.0).data, expected, atol=1e-12)


def test_contrast_prior_matches_centre_difference():
    """theta * (sum of kernel) * x_centre - full convolution, built from loops."""
    params = fresh()
    s = params.scope("stage1.oem.dcpm")
    rng = np.random.default_rng(5)
    feat = rng.normal(size=(1, CFG.channels, 9, 9))
    w = s["p_o.weight"].data
    theta = rng.uniform(size=(1, CFG.channels, 1, 1))
    centre = np.einsum("oc,nchw->nohw", w.sum(axis=(2, 3)), feat)
    expected = theta * centre - conv2d_loops(feat, w, padding=w.shape[2] // 2)
    np.testing.assert_allclose(contrast_prior(Tensor(feat), s, theta=Tensor(theta)).data, expected, atol=1e-12)


def test_dcpm_gradients_including_attention():
    rng = np.random.default_rng(6)
    params = fresh()
    x = image(rng)
    s = params.scope("stage1.oem.dcpm")
    w = rng.normal(size=(1, 1, 8, 8))
    fn = lambda: F.sum(dcpm_forward(x, s, CFG) * Tensor(w))
    names = [n for n in params.params if ".dcpm." in n and n.startswith("stage1")]
    assert any(".att." in n for n in names)
    for name, err, _, _ in fd_check(fn, [params.params[n] for n in names], names, 8):
        assert err <= GRAD_TOL, name


# ---------------------------------------------------------------- OEM

def oem_inputs(seed=7):
    rng = np.random.default_rng(seed)
    return image(rng), image(rng), image(rng)


def test_oem_zero_step_is_plain_difference():
    params = fresh()
    o, d, b = oem_inputs()
    out = oem_forward(o, d, b, Tensor(np.array(0.0)), params.scope("stage1.oem"), CFG)
    np.testing.assert_array_equal(out.data, o.data + d.data - b.data)


def test_oem_zero_network():
    params = fresh()
    zero_matching(params, "stage1.oem.g")
    o, d, b = oem_inputs()
    out = oem_forward(o, d, b, Tensor(np.array(0.3)), params.scope("stage1.oem"), CFG)
    np.testing.assert_array_equal(out.data, o.data + d.data - b.data)
    last = params.params[f"stage1.oem.g.{CFG.oem_layers + 1}.bias"]
    last.data[...] = 0.25
    out = oem_forward(o, d, b, Tensor(np.array(0.3)), params.scope("stage1.oem"), CFG)
    np.testing.assert_allclose(out.data, o.data + d.data - b.data - 0.3 * 0.25, atol=1e-15)


@settings(max_examples=20)
@given(st.floats(-2, 2), st.integers(0, 50))
def test_oem_is_affine_in_step(a, seed):
    params = fresh(seed=seed % 5)
    o, d, b = oem_inputs(seed)
    s = params.scope("stage1.oem")
    run = lambda r: oem_forward(o, d, b, Tensor(np.array(r)), s, CFG).data
    base = run(0.0)
    np.testing.assert_allclose(run(2 * a) - base, 2 * (run(a) - base), atol=1e-10)


def test_oem_gradient_with_respect_to_step():
    params = fresh()
    o, d, b = oem_inputs()
    rho = params.params["stage1.oem.rho"]
    w = np.random.default_rng(8).normal(size=(1, 1, 8, 8))
    fn = lambda: F.sum(oem_forward(o, d, b, rho, params.scope("stage1.oem"), CFG) * Tensor(w))
    [(_, err, _, _)] = fd_check(fn, [rho], ["rho"])
    assert err <= GRAD_TOL


def test_oem_without_prior_ignores_dcpm():
    cfg = NetConfig(stages=1, channels=4, dcpm_enabled=False)
    params = fresh(cfg)
    assert not any(".dcpm." in n for n in params.params)
    o, d, b = oem_inputs()
    assert oem_forward(o, d, b, params.params["stage1.oem.rho"], params.scope("stage1.oem"), cfg).shape == o.shape


# ---------------------------------------------------------------- IRM

def test_irm_zero_network_gives_zero():
    params = fresh()
    zero_matching(params, "stage1.irm")
    identity_bn(params)
    rng = np.random.default_rng(9)
    out = irm_forward(image(rng), image(rng), params.scope("stage1.irm"), CFG)
    assert not out.data.any()


def test_irm_shape_and_gradients():
    params = fresh()
    rng = np.random.default_rng(10)
    b, o = image(rng, size=9), image(rng, size=9)
    s = params.scope("stage1.irm")
    assert irm_forward(b, o, s, CFG).shape == b.shape
    w = rng.normal(size=(1, 1, 9, 9))
    fn = lambda: F.sum(irm_forward(b, o, s, CFG) * Tensor(w))
    names = [n for n in params.params if n.startswith("stage1.irm.")]
    for name, err, _, _ in fd_check(fn, [params.params[n] for n in names], names, 6):
        assert err <= GRAD_TOL, name


# ----------------------------------------------------------- pipeline

def test_single_stage_is_the_module_composition():
    cfg = NetConfig(stages=1, channels=4)
    params = fresh(cfg)
    rng = np.random.default_rng(11)
    x = image(rng, n=2)
    stages, logits = pipeline_forward(x, cfg, params)
    s = params.scope("stage1")
    zeros = Tensor(np.zeros_like(x.data))
    mem = zeros_like_features(x, cfg)
    b, _, _ = bam_forward(x, zeros, mem, mem, s.child("bam"), cfg)
    o = oem_forward(zeros, x, b, s["oem.rho"], s.child("oem"), cfg)
    d = irm_forward(b, o, s.child("irm"), cfg)
    np.testing.assert_array_equal(stages[0].B.data, b.data)
    np.testing.assert_array_equal(stages[0].O.data, o.data)
    np.testing.assert_array_equal(stages[0].D.data, d.data)
    np.testing.assert_array_equal(logits.data, o.data)


def test_zero_image_with_zero_biases_stays_zero():
    params = init_params(CFG, 0)
    for name, t in params.params.items():
        if name.endswith("bias"):
            t.data[...] = 0
    stages, logits = pipeline_forward(np.zeros((1, 1, 8, 8)), CFG, params)
    for st_ in stages:
        assert not st_.B.data.any() and not st_.O.data.any() and not st_.D.data.any()
    assert not logits.data.any()


@settings(max_examples=10)
@given(st.integers(1, 3), st.integers(3, 12), st.integers(3, 12))
def test_every_stage_preserves_shape(n, h, w):
    x = np.random.default_rng(h * w).uniform(size=(n, 1, h, w))
    stages, logits = pipeline_forward(x, CFG, init_params(CFG, 0))
    assert logits.shape == x.shape
    assert all(s.B.shape == s.O.shape == s.D.shape == x.shape for s in stages)


def test_pipeline_rejects_bad_inputs():
    params = init_params(CFG, 0)
    with pytest.raises(DimensionError):
        pipeline_forward(np.zeros((1, 2, 8, 8)), CFG, params)
    with pytest.raises(Exception):
        pipeline_forward(np.full((1, 1, 8, 8), np.nan), CFG, params)


@pytest.mark.parametrize("training", [False, True])
def test_full_pipeline_gradients(training):
    rows = pipeline_gradcheck(training)
    assert len(rows) == len(init_params(CFG, 0).params)
    assert max(r[1] for r in rows) <= GRAD_TOL
    # Only a small share of entries may land on a ReLU kink.
    assert sum(r[3] for r in rows) <= 0.1 * sum(r[2] for r in rows)


# --------------------------------------------------------------- loss

def test_loss_perfect_prediction_is_zero():
    g = np.zeros((2, 1, 6, 6))
    g[:, :, 2:4, 2:4] = 1
    img = np.random.default_rng(12).uniform(size=g.shape)
    assert float(loss(g, g, img, img).data) == pytest.approx(0.0, abs=1e-12)


def test_loss_disjoint_masks_cost_one():
    p = np.zeros((1, 1, 6, 6))
    g = np.zeros_like(p)
    p[0, 0, 0, :3] = 1
    g[0, 0, 5, :3] = 1
    img = np.zeros_like(p)
    assert float(loss(p, g, img, img).data) == pytest.approx(1.0, abs=1e-6)


def test_loss_counts_example():
    # TP = 2, FP = 2, FN = 2 -> IoU = 1/3, segmentation loss 2/3.
    p = np.zeros((1, 1, 4, 4))
    g = np.zeros_like(p)
    p[0, 0, 0, :4] = 1
    g[0, 0, 0, 2:4] = 1
    g[0, 0, 1, :2] = 1
    img = np.zeros_like(p)
    assert float(loss(p, g, img, img).data) == pytest.approx(2 / 3, abs=1e-6)


def test_loss_restoration_term():
    g = np.ones((1, 1, 2, 2))
    img = np.zeros_like(g)
    d = np.full_like(g, 0.5)
    assert float(loss(g, g, d, img, LossConfig(sigma=0.1)).data) == pytest.approx(0.1 * 0.25, abs=1e-12)


def test_loss_empty_ground_truth_is_defined():
    z = np.zeros((1, 1, 4, 4))
    assert float(loss(z, z, z, z).data) == pytest.approx(0.0, abs=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)))


# ------------------------------------------------------------ training

def tiny_data(count=8):
    return generate(3, count, SynthParams(size=16))


def test_zero_epochs_leave_params_unchanged():
    x, y = tiny_data(4)
    cfg = NetConfig(stages=1, channels=2)
    expected = init_params(cfg, np.random.default_rng(np.random.SeedSequence(0).spawn(2)[0]), np.float32)
    res = train(x, y, cfg, TrainSchedule(epochs=0))
    assert res.loss_trace == [] and res.iterations == 0
    for name, arr in expected.state_dict().items():
        np.testing.assert_array_equal(res.params.state_dict()[name], arr)


def test_empty_training_set():
    with pytest.raises(DataError):
        train(np.zeros((0, 16, 16)), np.zeros((0, 16, 16)), NetConfig(stages=1, channels=2),
              TrainSchedule(epochs=1))


@pytest.mark.slow
def test_fifty_epoch_trace_is_finite_and_deterministic():
    x, y = tiny_data(8)
    cfg = NetConfig(stages=1, channels=4, oem_layers=2, irm_layers=1, dcpm_kernel=5)
    sched = TrainSchedule(epochs=50, batch_size=4, seed=5)
    a = train(x, y, cfg, sched)
    assert len(a.loss_trace) == 50 and np.all(np.isfinite(a.loss_trace))
    assert a.loss_trace[-1] < a.loss_trace[0]
    b = train(x, y, cfg, sched)
    assert a.loss_trace == b.loss_trace
    for name, arr in a.params.state_dict().items():
        assert arr.tobytes() == b.params.state_dict()[name].tobytes()


def test_divergence_aborts_with_last_good_params():
    x, y = tiny_data(4)
    cfg = NetConfig(stages=1, channels=2)
    seen = {}

    def poison(epoch, _loss):
        if epoch == 1:
            res_params = seen["params"]
            seen["good"] = res_params.snapshot()
            next(iter(res_params.params.values())).data[...] = np.nan

    params = init_params(cfg, 0, np.float32)
    seen["params"] = params
    with pytest.raises(TrainingDiverged) as info:
        train(x, y, cfg, TrainSchedule(epochs=5, batch_size=2), params=params, on_epoch=poison)
    assert info.value.epoch == 2
    for name, arr in seen["good"].items():
        np.testing.assert_array_equal(info.value.last_good[name], arr)
