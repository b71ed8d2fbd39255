"""Command line front end: ``rpcaseg <command> ...``.

Every failure prints one line ``error code=<CODE> <message>`` on stderr and
exits with 2 (usage), 3 (data) or 4 (numeric).
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .classical import SolverParams, pcp_solve, relaxed_solve
from .errors import DataError, RpcaError, TrainingDiverged, UsageError
from .interpret import HEATMAP_ZERO_TOL, analyse, stage_outputs
from .io.configfile import RunConfig, load_config
from .io.images import load_image, normalize_minmax, save_image, save_raw
from .io.manifest import load_manifest, load_split
from .io.model import load_model, save_model
from .io.synth import SynthParams, synth_generate
from .metrics import evaluate, write_json, write_lowrank_csv, write_sparsity_csv
from .unfolded.pipeline import init_params
from .unfolded.train import train

log = logging.getLogger("rpcaseg")
IMAGE_SUFFIXES = (".png", ".pgm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_trace(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _save_map(path, arr, raw):
    if raw:
        save_raw(path.with_suffix(".raw"), arr)
    else:
        save_image(path, normalize_minmax(arr))


# --------------------------------------------------------------- commands

def cmd_decompose(args):
    d = load_image(args.input)
    params = SolverParams(lam=args.lam, mu=args.mu, tol=args.tol, max_iter=args.max_iter,
                          reweight=args.reweight)
    solve = pcp_solve if args.solver == "pcp" else relaxed_solve
    res = solve(d, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # B and D live on the input's [0, 1] scale; O is signed and min-max scaled.
    for name, arr in (("B", res.B), ("O", res.O), ("D", res.D)):
        if args.raw:
            save_raw(out / f"{name}.raw", arr)
        elif name == "O":
            save_image(out / "O.png", normalize_minmax(arr))
        else:
            save_image(out / f"{name}.png", np.clip(arr, 0.0, 1.0))
    _write_trace(out / "residual.csv", ["iteration", "residual"],
                 [(i, repr(r)) for i, r in enumerate(res.residual_trace, start=1)])
    print(json.dumps({"solver": args.solver, "iterations": res.iterations_used,
                      "residual": res.residual_trace[-1], "non_converged": res.non_converged}))
    return 0


def cmd_train(args):
    run = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        run = replace(run, train=replace(run.train, seed=args.seed))
    if args.epochs is not None:
        run = replace(run, train=replace(run.train, epochs=args.epochs))
    manifest = load_manifest(args.data)
    images, masks, _ = load_split(manifest, "train")
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".loss.csv")

    def on_epoch(epoch, loss):
        log.info("epoch %d loss %.6f", epoch + 1, loss)

    try:
        result = train(images, masks, run.net, run.train, run.loss, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        if exc.last_good is not None:
            params = init_params(run.net, 0, run.train.dtype)
            params.load_state_dict(exc.last_good)
            save_model(out, run, params)
        raise
    save_model(out, run, result.params)
    _write_trace(trace_path, ["epoch", "loss"],
                 [(i, repr(v)) for i, v in enumerate(result.loss_trace, start=1)])
    print(json.dumps({"checkpoint": str(out), "epochs": len(result.loss_trace),
                      "final_loss": result.loss_trace[-1] if result.loss_trace else None}))
    return 0


def cmd_infer(args):
    run, params = load_model(args.ckpt)
    img = load_image(args.input)
    b, o, d, prob = stage_outputs(img[None], run.net, params)
    out = Path(args.out) if args.out else Path(Path(args.input).stem + "_mask.png")
    save_image(out, (prob[0] >= args.threshold).astype(np.float64))
    if args.dump_stages:
        dump = Path(args.dump_stages)
        dump.mkdir(parents=True, exist_ok=True)
        for k in range(run.net.stages):
            for name, maps in (("B", b), ("O", o), ("D", d)):
                _save_map(dump / f"stage{k + 1}_{name}.png", maps[0, k], args.raw)
    print(json.dumps({"mask": str(out), "positive_pixels": int((prob[0] >= args.threshold).sum())}))
    return 0


def cmd_verify(args):
    run, params = load_model(args.ckpt)
    manifest = load_manifest(args.data)
    split = None if args.split == "all" else args.split
    images, masks, names = load_split(manifest, split)
    res = analyse(images, masks, run.net, params, zero_tol=args.zero_tol, names=names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_lowrank_csv(out / "lowrank.csv", res.median_spectrum())
    write_sparsity_csv(out / "sparsity.csv",
                       [(names[i], k + 1, res.sparsity[i, k], res.sparsity_minmax[i, k])
                        for i in range(len(names)) for k in range(res.stages)],
                       ("sparsity_rate", "sparsity_rate_minmax_logits"))
    report = dict(res.metrics)
    report["interpretability"] = {
        "stages": res.stages,
        "median_top5_share": [float(v) for v in res.median_top_share()],
        "median_sparsity": [float(v) for v in res.median_sparsity()],
        "median_sparsity_minmax_logits": [float(v) for v in np.median(res.sparsity_minmax, axis=0)],
        **res.trend(),
    }
    write_json(out / "metrics.json", report)
    print(json.dumps(report["interpretability"]))
    return 0


def _image_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d} is not a directory")
    return {p.name: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def cmd_metrics(args):
    preds, gts = _image_files(args.pred), _image_files(args.gt)
    names = sorted(set(preds) & set(gts))
    if not names:
        raise DataError(f"no matching image names between {args.pred} and {args.gt}")
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise DataError(f"{len(missing)} ground-truth images have no prediction, e.g. {missing[0]}")
    probs = [load_image(preds[n]) for n in names]
    gt = [load_image(gts[n]) >= 0.5 for n in names]
    report = evaluate(probs, gt, names, threshold=args.threshold, match_radius=args.match_radius)
    if args.out:
        write_json(args.out, report)
    print(json.dumps(report["aggregate"]))
    return 0


def cmd_synth(args):
    params = SynthParams(size=args.size, rank_max=args.rank_max, noise_std=args.noise)
    manifest = synth_generate(args.seed, args.count, args.out, params, test_fraction=args.test_fraction)
    print(json.dumps({"manifest": str(manifest), "count": args.count}))
    return 0


# ----------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="rpcaseg", description="Low-rank + sparse decomposition and unfolded segmentation.")
    p.add_argument("--version", action="version", version=f"rpcaseg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("decompose", help="classical B + O decomposition of one image")
    c.add_argument("--input", required=True)
    c.add_argument("--solver", choices=("pcp", "relaxed"), default="pcp")
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--mu", type=float)
    c.add_argument("--tol", type=float, default=1e-7)
    c.add_argument("--max-iter", type=int, default=500)
    c.add_argument("--reweight", action="store_true")
    c.add_argument("--out", default="decomposition")
    c.add_argument("--raw", action="store_true", help="write float dumps instead of PNG")
    c.set_defaults(fn=cmd_decompose)

    c = sub.add_parser("train", help="train the unfolded network")
    c.add_argument("--config")
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--trace", help="loss trace CSV (default: next to the checkpoint)")
    c.add_argument("--seed", type=int)
    c.add_argument("--epochs", type=int)
    c.set_defaults(fn=cmd_train)

    c = sub.add_parser("infer", help="segment one image")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--out")
    c.add_argument("--threshold", type=float, default=0.5)
    c.add_argument("--dump-stages")
    c.add_argument("--raw", action="store_true")
    c.set_defaults(fn=cmd_infer)

    c = sub.add_parser("verify", help="per-stage low-rank and sparsity analysis")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--split", choices=("train", "test", "all"), default="test")
    c.add_argument("--zero-tol", type=float, default=HEATMAP_ZERO_TOL,
                   help="heatmap values at or below this count as zero (default: half an 8-bit level)")
    c.set_defaults(fn=cmd_verify)

    c = sub.add_parser("metrics", help="score probability maps against masks")
    c.add_argument("--pred", required=True)
    c.add_argument("--gt", required=True)
    c.add_argument("--out")
    c.add_argument("--threshold", type=float, default=0.5)
    c.add_argument("--match-radius", type=float, default=3.0)
    c.set_defaults(fn=cmd_metrics)

    c = sub.add_parser("synth", help="write a synthetic dataset")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--count", type=int, default=200)
    c.add_argument("--size", type=int, default=32)
    c.add_argument("--rank-max", type=int, default=3)
    c.add_argument("--noise", type=float, default=0.02)
    c.add_argument("--test-fraction", type=float, default=0.2)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_synth)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        return args.fn(args)
    except RpcaError as exc:
        msg = " ".join(str(exc).split())
        print(f"error code={exc.code} {msg}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error code=USAGE {' '.join(str(exc).split())}", file=sys.stderr)
        return UsageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
