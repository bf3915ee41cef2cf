"""Command-line entry point: ``freqdepth <command> [flags]``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .block_spectrum import (DepthMap, forward_block_dct, make_schedule, patchify, reflect_pad,
                             subdiagonal_groups)
from .dct_core import dct2_fast, dct2_naive, make_basis
from .fileio import load_pfm, save_pfm, save_pgm
from .losses import LossWeights, MetricReport, eval_metrics
from .progressive import reconstruct_from_truth, rmse
from .synth import gen_scene, make_dataset, scene_specs
from .tensor_ad import Tensor, checkpoint
from .train import TrainConfig, evaluate, train_toy


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: {message}\n")


def parse_merge_spec(text: str, size: int):
    """'default', 'none', or runs like '0|1|2|3|4|5|6-7|8-14'."""
    if text == "default":
        return None
    if text == "none":
        return [[i] for i in range(2 * size - 1)]
    runs = []
    for part in text.split("|"):
        lo, _, hi = part.partition("-")
        try:
            a, b = int(lo), int(hi or lo)
        except ValueError:
            raise CliError(f"bad schedule run {part!r}") from None
        runs.append(list(range(a, b + 1)))
    return runs


def _seed(args) -> int:
    env = os.environ.get("FREQDEPTH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"FREQDEPTH_SEED must be an integer, got {env!r}") from None
    return args.seed


def _schedule(text, size=8):
    try:
        return make_schedule(size, parse_merge_spec(text, size))
    except ValueError as e:
        raise CliError(str(e)) from None


def _load_depth(path) -> DepthMap:
    try:
        return DepthMap(load_pfm(path))
    except OSError as e:
        raise CliError(f"{path}: {e.strerror or e}") from None
    except ValueError as e:
        raise CliError(f"{path}: {e}") from None


def _fmt(x: float) -> str:
    return f"{x:.9g}"


# ---------------------------------------------------------------------------
# commands

def cmd_analyze_spectrum(args, out):
    d = _load_depth(args.depth)
    sched = _schedule(args.schedule)
    vol = forward_block_dct(d, sched.size, pad=True)
    energy = (vol.array ** 2).sum(axis=(-2, -1))
    total = energy.sum()
    if total == 0:
        raise CliError(f"{args.depth}: map has zero energy")
    out.write("kind\tindex\tchannels\tenergy_fraction\tcumulative_fraction\n")
    cum = 0.0
    for i, g in enumerate(subdiagonal_groups(sched.size)):
        e = sum(energy[u * sched.size + v] for u, v in g) / total
        cum += e
        out.write(f"group\t{i}\t{len(g)}\t{_fmt(e)}\t{_fmt(cum)}\n")
    cum = 0.0
    for k in range(len(sched)):
        e = energy[sched.step_mask(k)].sum() / total
        cum += e
        out.write(f"step\t{k}\t{int(sched.cumulative_mask(k).sum())}\t{_fmt(e)}\t{_fmt(cum)}\n")
    dc = vol.array[0] / sched.size
    out.write(f"\ndc_patch_variance\t{_fmt(float(dc.var()))}\n")


def cmd_progressive_reconstruct(args, out):
    d = _load_depth(args.depth)
    sched = _schedule(args.schedule)
    steps = len(sched) if args.steps is None else args.steps
    if not 1 <= steps <= len(sched):
        raise CliError(f"--steps must be in 1..{len(sched)}")
    vol = forward_block_dct(d, sched.size, pad=True)
    energy = (vol.array ** 2).sum(axis=(-2, -1))
    outs = reconstruct_from_truth(DepthMap(reflect_pad(d.array, sched.size)), sched)
    h, w = d.shape
    dest = Path(args.out) if args.out else None
    if dest:
        dest.mkdir(parents=True, exist_ok=True)
    lines = ["step\tchannels\tenergy_pct\trmse"]
    for k in range(steps):
        rec = outs[k].array[:h, :w]
        mask = sched.cumulative_mask(k)
        pct = 100.0 * energy[mask].sum() / energy.sum() if energy.sum() else 100.0
        lines.append(f"{k}\t{int(mask.sum())}\t{_fmt(pct)}\t{_fmt(rmse(rec, d.array))}")
        if dest:
            save_pfm(dest / f"step_{k:02d}.pfm", rec)
    text = "\n".join(lines) + "\n"
    if dest:
        (dest / "steps.tsv").write_text(text)
    out.write(text)


def cmd_train_toy(args, out):
    seed = _seed(args)
    w = LossWeights(alpha_total=args.alpha, beta_total=args.beta)
    try:
        cfg = TrainConfig(seed=seed, epochs=args.epochs, batch=args.batch, lr=args.lr, weights=w,
                          scenes=args.scenes, out=args.out)
    except ValueError as e:
        raise CliError(str(e)) from None
    res = train_toy(cfg)
    out.write("epoch\ttrain_loss\tval_rmse\n")
    for k, (a, b) in enumerate(zip(res.loss_curve, res.val_curve)):
        out.write(f"{k}\t{_fmt(a)}\t{_fmt(b)}\n")
    out.write("\n" + "\n".join(res.report.lines()) + "\n")
    if res.aborted:
        raise CliError("training diverged; kept the last finite checkpoint")


def _table1_block(m: MetricReport) -> str:
    return ("\t".join(MetricReport.TABLE_ORDER) + "\n"
            + "\t".join(f"{getattr(m, k):.4f}" for k in MetricReport.TABLE_ORDER) + "\n")


def cmd_eval(args, out):
    if args.checkpoint:
        if args.pred or args.gt:
            raise CliError("use either --checkpoint or --pred/--gt")
        try:
            params = {k: Tensor(v) for k, v in checkpoint.load(args.checkpoint).items()}
        except (OSError, ValueError) as e:
            raise CliError(f"{args.checkpoint}: {e}") from None
        images, depths = make_dataset(_seed(args) + 1_000_003, args.scenes)
        rep = evaluate(params, images, depths, TrainConfig())
        m = rep.metrics
    else:
        if not (args.pred and args.gt):
            raise CliError("eval needs --pred and --gt, or --checkpoint")
        pred, gt = _load_depth(args.pred), _load_depth(args.gt)
        if pred.shape != gt.shape:
            raise CliError(f"{args.pred}: shape {pred.shape} does not match {args.gt} shape {gt.shape}")
        try:
            m = eval_metrics(pred.array, gt, cap=args.cap)
        except ValueError as e:
            raise CliError(str(e)) from None
    out.write(m.tsv() + "\n\n" + _table1_block(m))


def _write_scene(job):
    spec, dest = job
    img, d = gen_scene(spec)
    save_pgm(dest.with_suffix(".pgm"), img)
    save_pfm(dest.with_suffix(".pfm"), d.array)
    return dest.name


def cmd_gen_data(args, out):
    if args.count < 0:
        raise CliError("--count must be non-negative")
    if args.size <= 0 or args.size % 8:
        raise CliError("--size must be a positive multiple of 8")
    dest = Path(args.out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    jobs = [(s, dest / f"scene_{i:04d}") for i, s in enumerate(scene_specs(_seed(args), args.count, args.size))]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            names = list(ex.map(_write_scene, jobs))
    else:
        names = [_write_scene(j) for j in jobs]
    out.write("scene\timage\tdepth\n")
    for n in names:
        out.write(f"{n}\t{n}.pgm\t{n}.pfm\n")


def _checksum(coeffs: np.ndarray) -> str:
    # rounding absorbs last-bit differences between summation orders
    q = np.round(np.asarray(coeffs) * 1e8).astype(np.int64)
    return hashlib.sha256(q.tobytes()).hexdigest()[:16]


def cmd_bench_dct(args, out):
    try:
        w, h = (int(t) for t in args.size.lower().split("x"))
    except ValueError:
        raise CliError(f"--size must look like WxH, got {args.size!r}") from None
    if w <= 0 or h <= 0 or w % 8 or h % 8:
        raise CliError("--size extents must be positive multiples of 8")
    if args.iters < 0:
        raise CliError("--iters must be non-negative")
    x = np.random.default_rng(0).uniform(1.0, 10.0, size=(h, w))
    blocks = patchify(x, 8).reshape(-1, 8, 8)
    basis = make_basis(8)
    rows = []
    for name, fn in (("naive", lambda: np.stack([dct2_naive(b, basis) for b in blocks])),
                     ("separable", lambda: dct2_fast(blocks, basis))):
        if args.iters == 0:
            rows.append((name, 0, 0.0, 0.0, "-"))
            continue
        t0 = time.perf_counter()
        for _ in range(args.iters):
            res = fn()
        dt = time.perf_counter() - t0
        rows.append((name, args.iters, dt, args.iters * len(blocks) / dt, _checksum(res)))
    out.write("path\titers\tseconds\tblocks_per_s\tchecksum\n")
    for name, it, dt, rate, cs in rows:
        out.write(f"{name}\t{it}\t{dt:.6f}\t{rate:.1f}\t{cs}\n")
    if args.iters:
        speedup = rows[1][3] / rows[0][3]
        same = rows[0][4] == rows[1][4]
        out.write(f"\nspeedup\t{speedup:.2f}\nchecksums_equal\t{str(same).lower()}\n")
        if not same:
            raise CliError("naive and separable checksums differ")
    else:
        out.write("\nspeedup\tnan\nchecksums_equal\ttrue\n")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freqdepth", description="Block-DCT depth toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze-spectrum", help="energy per frequency group and schedule step")
    a.add_argument("depth", help="depth map (.pfm)")
    a.add_argument("--schedule", default="default", help="'default', 'none' or runs like '0|1|2-3|4-14'")
    a.set_defaults(func=cmd_analyze_spectrum)

    r = sub.add_parser("progressive-reconstruct", help="truth-coefficient playback, one map per step")
    r.add_argument("depth", help="depth map (.pfm)")
    r.add_argument("--steps", type=int, default=None, help="number of steps to emit (default: all)")
    r.add_argument("--schedule", default="default")
    r.add_argument("--out", default=None, help="directory for step_NN.pfm and steps.tsv")
    r.set_defaults(func=cmd_progressive_reconstruct)

    t = sub.add_parser("train-toy", help="train the toy model on synthetic scenes")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--alpha", type=float, default=2e-3, help="weight of the frequency regularizer")
    t.add_argument("--beta", type=float, default=0.0, help="weight of the smoothness regularizer")
    t.add_argument("--scenes", type=int, default=200)
    t.add_argument("--out", default=None, help="directory for best.fdp, loss_curve.tsv, eval_report.tsv")
    t.set_defaults(func=cmd_train_toy)

    e = sub.add_parser("eval", help="depth metrics for a prediction or a checkpoint")
    e.add_argument("--pred", help="predicted depth (.pfm)")
    e.add_argument("--gt", help="ground-truth depth (.pfm)")
    e.add_argument("--cap", type=float, default=10.0, help="maximum evaluated depth in meters")
    e.add_argument("--checkpoint", help="toy-model checkpoint; evaluated on synthetic validation scenes")
    e.add_argument("--scenes", type=int, default=40)
    e.add_argument("--seed", type=int, default=0, help="data seed the checkpoint was trained with")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-data", help="write synthetic scene_NNNN.pgm / .pfm pairs")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    b = sub.add_parser("bench-dct", help="naive vs separable block DCT throughput")
    b.add_argument("--size", default="640x480", help="WxH")
    b.add_argument("--iters", type=int, default=1)
    b.set_defaults(func=cmd_bench_dct)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(message)s")
    try:
        args.func(args, out)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
