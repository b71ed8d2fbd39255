"""The nine acceptance criteria at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL ...`` line; the lines are also
collected into the pytest terminal summary. Criteria 6 to 8 share one
module-scoped fixture that drives the command line end to end (synth, two
identical training runs, verify), which takes roughly half an hour on one
core.
"""

import csv
import json
import os
import time

import numpy as np
import pytest

import conftest
from netcheck import GRAD_TOL, fd_check, pipeline_gradcheck
from oracles import (grid_argmin, jacobi_eigen_singular_values, pixel_counts_loop,
                     roc_auc_loop, target_oracle)
from rpcaseg.autodiff import ParamStore, Tensor
from rpcaseg.autodiff import functional as F
from rpcaseg.autodiff.layers import (channel_attention, conv_lstm_cell, init_channel_attention,
                                     init_conv_lstm)
from rpcaseg.classical import SolverParams, pcp_solve, taylor_majorizer_check
from rpcaseg.cli import main
from rpcaseg.linalg import jacobi_svd, soft_threshold, svd, svt
from rpcaseg.metrics import ConfusionCounts, roc_auc, target_counts

TOY_EPOCHS = 200
TOY_STAGES = 3


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


# ------------------------------------------------------------ criterion 1

def op_cases(rng):
    """(label, scalar fn, leaves) for every differentiable op."""
    leaf = lambda *s, scale=1.0: Tensor(rng.normal(size=s) * scale, requires_grad=True)
    w = lambda *s: Tensor(rng.normal(size=s))
    cases = []
    a, b = leaf(2, 3, 4), leaf(3, 1)
    wa = w(2, 3, 4)
    cases += [("add", lambda: F.sum(F.add(a, b) * wa), [a, b]),
              ("sub", lambda: F.sum(F.sub(a, b) * wa), [a, b]),
              ("mul", lambda: F.sum(F.mul(a, b) * wa), [a, b]),
              ("neg", lambda: F.sum(F.neg(a) * wa), [a])]
    num, den = leaf(3, 4), Tensor(rng.uniform(0.5, 2, (3, 4)) * rng.choice([-1, 1], (3, 4)),
                                  requires_grad=True)
    cases.append(("div", lambda: F.sum(F.div(num, den)), [num, den]))
    x = leaf(2, 3, 5, 5)
    wx, ws, wm, wg, wsl = w(2, 3, 5, 5), w(3, 5), w(2, 1, 5, 5), w(2, 3, 1, 1), w(2, 2, 5, 5)
    cases += [("relu", lambda: F.sum(F.relu(x) * wx), [x]),
              ("sigmoid", lambda: F.sum(F.sigmoid(x) * wx), [x]),
              ("tanh", lambda: F.sum(F.tanh(x) * wx), [x]),
              ("sum", lambda: F.sum(F.sum(x, axis=(0, 2)) * ws), [x]),
              ("mean", lambda: F.sum(F.mean(x, axis=1, keepdims=True) * wm), [x]),
              ("global_avg_pool", lambda: F.sum(F.global_avg_pool(x) * wg), [x]),
              ("channel_slice", lambda: F.sum(F.channel_slice(x, 1, 3) * wsl), [x])]
    for k, s, p in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (2, 1, 2), (7, 1, 3)]:
        xc, wc, bc = leaf(2, 3, 8, 8), leaf(4, 3, k, k, scale=0.3), leaf(4)
        ho = (8 + 2 * p - k) // s + 1
        wy = w(2, 4, ho, ho)
        cases.append((f"conv2d k{k} s{s} p{p}",
                      lambda xc=xc, wc=wc, bc=bc, s=s, p=p, wy=wy: F.sum(F.conv2d(xc, wc, bc, s, p) * wy),
                      [xc, wc, bc]))
    for training in (True, False):
        xb, g, be = leaf(3, 2, 4, 4), leaf(2), leaf(2)
        rm, rv = rng.normal(size=2), rng.uniform(0.5, 2, 2)
        wb = w(3, 2, 4, 4)
        cases.append((f"batch_norm {'train' if training else 'eval'}",
                      lambda xb=xb, g=g, be=be, rm=rm, rv=rv, t=training, wb=wb:
                      F.sum(F.batch_norm(xb, g, be, rm.copy(), rv.copy(), t) * wb), [xb, g, be]))
    store = ParamStore()
    init_conv_lstm(store.scope("lstm"), 2, 3, 3, rng)
    init_channel_attention(store.scope("att"), 8, 4, rng)
    xl, hl, cl = leaf(1, 2, 5, 5), leaf(1, 3, 5, 5, scale=0.5), leaf(1, 3, 5, 5, scale=0.5)
    wh, wcell = w(1, 3, 5, 5), w(1, 3, 5, 5)

    def lstm():
        h, c = conv_lstm_cell(xl, hl, cl, store.scope("lstm"))
        return F.sum(h * wh) + F.sum(c * wcell)

    lstm_leaves = [xl, hl, cl] + [store.params[f"lstm.{n}"] for n in ("w_x", "w_h", "bias")]
    cases.append(("conv_lstm_cell", lstm, lstm_leaves))
    xa, wa8 = leaf(2, 8, 4, 4), w(2, 8, 1, 1)
    for t in store.params.values():
        if t.name.endswith("bias"):
            t.data[...] = rng.uniform(-0.2, 0.2, t.data.shape)
    att_leaves = [xa] + [t for n, t in store.params.items() if n.startswith("att.")]
    cases.append(("channel_attention", lambda: F.sum(channel_attention(xa, store.scope("att")) * wa8),
                  att_leaves))
    return cases


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    worst, worst_name, skipped, checked = 0.0, "", 0, 0
    for label, fn, leaves in op_cases(np.random.default_rng(0)):
        for name, err, n, skip in fd_check(fn, leaves, [f"{label}[{i}]" for i in range(len(leaves))]):
            checked, skipped = checked + n, skipped + skip
            if err > worst:
                worst, worst_name = err, name
    for training in (False, True):
        for name, err, n, skip in pipeline_gradcheck(training):
            checked, skipped = checked + n, skipped + skip
            if err > worst:
                worst, worst_name = err, f"pipeline {name}"
    elapsed = time.perf_counter() - start
    ok = worst <= GRAD_TOL and elapsed < 60 and skipped <= 0.05 * checked
    verdict(1, ok, f"max rel err {worst:.2e} ({worst_name}), {checked} entries, {skipped} on ReLU kinks "
                   f"skipped, {elapsed:.1f}s")


# ------------------------------------------------------------ criterion 2

def random_matrix(rng):
    m, n = rng.integers(1, 33, 2)
    kind = rng.integers(0, 4)
    if kind == 0:
        return rng.normal(size=(m, n))
    if kind == 1:
        return rng.uniform(-1, 1, (m, n)) * 10.0 ** rng.integers(-3, 4)
    r = int(rng.integers(1, min(m, n) + 1))
    a = rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
    return a if kind == 2 else np.round(a, 1)


def test_criterion_2_svd_oracle():
    rng = np.random.default_rng(2)
    worst_rec = worst_sv = 0.0
    for _ in range(200):
        a = random_matrix(rng)
        oracle = jacobi_eigen_singular_values(a)
        scale = np.linalg.norm(a)
        for res in (svd(a), jacobi_svd(a)):
            worst_rec = max(worst_rec, np.linalg.norm(a - res.reconstruct()) / scale)
            worst_sv = max(worst_sv, np.abs(res.singular_values - oracle).max())
    verdict(2, worst_rec <= 1e-10 and worst_sv <= 1e-8,
            f"200 matrices (LAPACK and Jacobi), max recon {worst_rec:.1e}, max |sigma - oracle| {worst_sv:.1e}")


# ------------------------------------------------------------ criterion 3

def test_criterion_3_proximal_optimality():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        a, tau = rng.uniform(-5, 5), rng.uniform(0, 3)
        best = grid_argmin(lambda x: tau * abs(x) + 0.5 * (x - a) ** 2, -6, 6, 1e-3)
        worst = max(worst, abs(soft_threshold(a, tau) - best))
    off = 0.0
    for _ in range(30):
        d = rng.uniform(0, 4, 3)
        mu = rng.uniform(0, 3)
        x = svt(np.diag(d), mu)
        off = max(off, np.abs(x - np.diag(np.diag(x))).max())
        for i, di in enumerate(d):
            best = grid_argmin(lambda v: mu * abs(v) + 0.5 * (v - di) ** 2, -1, 5, 1e-3)
            worst = max(worst, abs(x[i, i] - best))
    verdict(3, worst <= 1e-3 and off <= 1e-12,
            f"100 scalar + 30 diagonal instances, max distance to grid minimiser {worst:.1e}")


# ------------------------------------------------------------ criterion 4

def test_criterion_4_pcp_recovery():
    rng = np.random.default_rng(0)
    l0 = rng.standard_normal((64, 2)) @ rng.standard_normal((2, 64))
    s0 = np.zeros((64, 64))
    mask = rng.random((64, 64)) < 0.05
    s0[mask] = rng.choice([-1.0, 1.0], mask.sum())
    start = time.perf_counter()
    res = pcp_solve(l0 + s0, SolverParams(lam=1 / 8))
    elapsed = time.perf_counter() - start
    err = np.linalg.norm(res.B - l0) / np.linalg.norm(l0)
    verdict(4, err <= 1e-3 and res.iterations_used <= 500 and not res.non_converged and elapsed < 5,
            f"rel err {err:.1e} in {res.iterations_used} iterations, {elapsed:.2f}s")


# ------------------------------------------------------------ criterion 5

def test_criterion_5_majorizer_bound():
    rng = np.random.default_rng(5)
    eps = 0.01
    # Half the pairs near zero, where the curvature of smooth-l1 peaks.
    pairs = [(rng.uniform(-s, s, (4, 4)), rng.uniform(-s, s, (4, 4)))
             for s in (1.0,) * 500 + (0.01,) * 500]
    holds = sum(taylor_majorizer_check(None, o, o0, 1 / eps, eps) for o, o0 in pairs)
    tight = sum(not taylor_majorizer_check(None, o, o0, 0.1 / eps, eps) for o, o0 in pairs)
    verdict(5, holds == 1000 and tight >= 1,
            f"L=1/eps holds on {holds}/1000 pairs, L/10 violated on {tight}")


# ------------------------------------------------------------ criteria 6-8

@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    data = root / "data"
    assert main(["synth", "--seed", "0", "--count", "200", "--size", "32", "--out", str(data)]) == 0
    cfg = root / "toy.ini"
    cfg.write_text(f"[net]\nstages = {TOY_STAGES}\nchannels = 8\n[train]\nepochs = {TOY_EPOCHS}\nseed = 0\n")
    times = []
    for name in ("a", "b"):
        start = time.perf_counter()
        assert main(["train", "--config", str(cfg), "--data", str(data / "manifest.json"),
                     "--out", str(root / f"{name}.ckpt")]) == 0
        times.append(time.perf_counter() - start)
    assert main(["verify", "--ckpt", str(root / "a.ckpt"), "--data", str(data / "manifest.json"),
                 "--out", str(root / "verify")]) == 0
    return root, times


def read_trace(path):
    with open(path) as fh:
        return [float(r["loss"]) for r in csv.DictReader(fh)]


@pytest.mark.slow
def test_criterion_6_toy_training(toy_runs):
    root, times = toy_runs
    trace = read_trace(root / "a.loss.csv")
    report = json.loads((root / "verify/metrics.json").read_text())
    iou = report["aggregate"]["IoU"]
    ratio = trace[-1] / trace[0]
    cores = os.cpu_count() or 1
    ok = len(trace) == TOY_EPOCHS and np.isfinite(trace).all() and iou >= 0.6 and ratio <= 0.5
    if cores >= 4:
        ok = ok and times[0] < 600
        timing = f"{times[0]:.0f}s (bound 600s)"
    else:
        timing = f"{times[0]:.0f}s on {cores} core(s); 600s bound is for 4 cores, not checked here"
    verdict(6, ok, f"test IoU {iou:.3f}, final/initial loss {ratio:.3f}, train time {timing}")


@pytest.mark.slow
def test_criterion_7_interpretability_trends(toy_runs):
    root, _ = toy_runs
    out = root / "verify"
    interp = json.loads((out / "metrics.json").read_text())["interpretability"]
    share, sparsity = interp["median_top5_share"], interp["median_sparsity"]
    with open(out / "lowrank.csv") as fh:
        lr_rows = list(csv.DictReader(fh))
    with open(out / "sparsity.csv") as fh:
        sp_rows = list(csv.DictReader(fh))
    # The JSON medians must be reproducible from the emitted per-image CSV.
    from_csv = [float(np.median([float(r["sparsity_rate"]) for r in sp_rows if int(r["stage"]) == k]))
                for k in range(1, TOY_STAGES + 1)]
    consistent = np.allclose(from_csv, sparsity, rtol=0, atol=1e-12) and len(lr_rows) == TOY_STAGES * 32
    ok = share[-1] >= share[0] and sparsity[-1] <= sparsity[0] and consistent
    verdict(7, ok, f"median top-5 energy share per stage {np.round(share, 4).tolist()}, "
                   f"median heatmap sparsity per stage {np.round(sparsity, 4).tolist()} "
                   f"(min-max logits: {np.round(interp['median_sparsity_minmax_logits'], 4).tolist()})")


@pytest.mark.slow
def test_criterion_8_determinism(toy_runs):
    root, _ = toy_runs
    same_ckpt = (root / "a.ckpt").read_bytes() == (root / "b.ckpt").read_bytes()
    same_trace = (root / "a.loss.csv").read_bytes() == (root / "b.loss.csv").read_bytes()
    verdict(8, same_ckpt and same_trace,
            f"checkpoints identical: {same_ckpt}, loss traces identical: {same_trace}")


# ------------------------------------------------------------ criterion 9

def sparse_mask(rng, size):
    m = rng.random((size, size)) < rng.uniform(0.02, 0.15)
    for _ in range(rng.integers(0, 4)):
        i, j = rng.integers(0, size - 2, 2)
        m[i:i + rng.integers(1, 4), j:j + rng.integers(1, 4)] = True
    return m


def test_criterion_9_metric_oracles():
    rng = np.random.default_rng(9)
    pixel_ok = target_ok = 0
    auc_err = 0.0
    for _ in range(100):
        size = int(rng.integers(4, 17))
        gt, pred = sparse_mask(rng, size), sparse_mask(rng, size)
        c = ConfusionCounts.from_masks(pred, gt)
        pixel_ok += (c.TP, c.FP, c.FN, c.TN) == pixel_counts_loop(pred, gt)
        t = target_counts(pred, gt, 3.0)
        target_ok += (t.gt_targets, t.detected, t.false_alarm_pixels) == target_oracle(pred, gt, 3.0)
        gt.flat[0], gt.flat[1] = True, False
        prob = np.round(np.clip(gt * 0.3 + rng.random(gt.shape) * 0.7, 0, 1), 2)
        thr = np.linspace(0, 1, 256)
        auc_err = max(auc_err, abs(roc_auc(prob, gt, thr)["AUC"] - roc_auc_loop(prob, gt, thr)))
    verdict(9, pixel_ok == 100 and target_ok == 100 and auc_err <= 1e-12,
            f"pixel counts {pixel_ok}/100 exact, target counts {target_ok}/100 exact, "
            f"max AUC diff {auc_err:.1e}")
