"""End-to-end toy training on synthetic scenes."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor_ad as ad
from .block_spectrum import DepthMap, forward_block_dct, inverse_block_dct, make_schedule
from .block_spectrum import CoefficientVolume
from .losses import LossWeights, MetricReport, eval_metrics, freq_reg, silog_loss, smooth_reg, total_loss
from .synth import make_dataset
from .tensor_ad import Adam, Tensor, checkpoint
from .toy_pph import PphConfig, forward_full, init_params

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 30
    batch: int = 8
    lr: float = 2e-3
    weights: LossWeights = field(default_factory=LossWeights)
    merge_spec: list[list[int]] | None = None
    scenes: int = 200
    val_scenes: int = 40
    extent: int = 64
    # dataset seeds are derived from this so train and validation never overlap
    data_seed: int = 0
    freq_reg_every_step: bool = True
    clip_norm: float | None = 5.0
    model: PphConfig = field(default_factory=PphConfig)
    # fixed rate by default; a callback (epoch -> lr) can replace it
    lr_schedule: Callable[[int], float] | None = None
    out: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch < 1 or self.scenes < 1:
            raise ValueError("batch and scenes must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class EvalReport:
    rmse: float
    baseline_rmse: float
    step_rmse: list[float]
    monotone_fraction: float
    metrics: MetricReport

    def lines(self) -> list[str]:
        out = [
            f"val_rmse\t{self.rmse:.6f}",
            f"dc_mean_baseline_rmse\t{self.baseline_rmse:.6f}",
            f"ratio_to_baseline\t{self.rmse / self.baseline_rmse:.6f}",
            f"monotone_step_fraction\t{self.monotone_fraction:.6f}",
            "step_rmse\t" + "\t".join(f"{r:.6f}" for r in self.step_rmse),
        ]
        return out + self.metrics.tsv().splitlines()


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    loss_curve: list[float]
    val_curve: list[float]
    report: EvalReport
    best_epoch: int
    aborted: bool = False


def soft_floor(x: Tensor, floor: float = 0.05) -> Tensor:
    """Identity above ``floor``, floor * exp((x - floor) / floor) below; C1 and strictly positive."""
    low = x.data < floor
    if not low.any():
        return x
    z = ad.where(low, x, floor)
    tail = ad.exp((z - floor) * (1.0 / floor)) * floor
    return ad.where(low, tail, x)


def batch_loss(params, images, depths, cfg: TrainConfig, schedule) -> tuple[Tensor, list[float]]:
    """Returns (mean total loss over the batch, per-scene total losses)."""
    preds, states = forward_full(images, params, schedule, cfg.model, return_states=True)
    gt = DepthMap(depths)
    w = cfg.weights
    pos = [soft_floor(p.values) for p in preds]
    n = depths.shape[0]
    # per-scene silog terms, averaged over the batch
    ld = silog_loss(pos, gt, w, per_sample=True)
    if w.alpha_total > 0:
        vols = states if cfg.freq_reg_every_step else states[-1:]
        lf = None
        for st in vols:
            term = freq_reg(st.coeffs, w)
            lf = term if lf is None else ad.add(lf, term)
    else:
        lf = 0.0
    ls = smooth_reg(preds[-1], images, w) if w.beta_total > 0 else 0.0
    loss = total_loss(ld, lf, ls, w)
    return loss, [loss.item()] * n


def _grad_norm(params):
    return math.sqrt(sum(float(np.sum(p.grad ** 2)) for p in params.values() if p.grad is not None))


def dc_baseline(depths: np.ndarray, size: int = 8) -> np.ndarray:
    """Each patch replaced by its exact ground-truth mean."""
    vol = forward_block_dct(DepthMap(depths), size)
    keep = np.zeros(size * size, dtype=bool)
    keep[0] = True
    return inverse_block_dct(CoefficientVolume(vol.array, keep, size)).array


def evaluate(params, images, depths, cfg: TrainConfig, schedule=None, batch: int = 20) -> EvalReport:
    schedule = schedule or make_schedule(cfg.model.size, cfg.merge_spec)
    step_preds = []
    for i in range(0, len(images), batch):
        preds = forward_full(images[i:i + batch], params, schedule, cfg.model)
        step_preds.append(np.stack([p.array for p in preds], axis=1))
    sp = np.concatenate(step_preds)  # (N, steps, H, W)
    err = np.sqrt(np.mean((sp - depths[:, None]) ** 2, axis=(2, 3)))  # (N, steps)
    monotone = np.all(np.diff(err, axis=1) <= 0, axis=1)
    final = sp[:, -1]
    base = dc_baseline(depths, cfg.model.size)
    return EvalReport(
        rmse=float(np.sqrt(np.mean((final - depths) ** 2))),
        baseline_rmse=float(np.sqrt(np.mean((base - depths) ** 2))),
        step_rmse=[float(np.sqrt(np.mean((sp[:, k] - depths) ** 2))) for k in range(sp.shape[1])],
        monotone_fraction=float(monotone.mean()),
        metrics=eval_metrics(final, DepthMap(depths), cap=cfg.model.depth_scale),
    )


def _snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def _restore(snap):
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in snap.items()}


def train_toy(cfg: TrainConfig) -> TrainResult:
    schedule = make_schedule(cfg.model.size, cfg.merge_spec)
    images, depths = make_dataset(cfg.data_seed, cfg.scenes, cfg.extent)
    val_images, val_depths = make_dataset(cfg.data_seed + 1_000_003, cfg.val_scenes, cfg.extent)
    params = init_params(cfg.model, cfg.seed)
    opt = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    loss_curve, val_curve = [], []
    best = (math.inf, _snapshot(params), 0)
    aborted = False
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.lr_schedule is not None:
            opt.lr = cfg.lr_schedule(epoch)
        order = rng.permutation(cfg.scenes)
        scene_losses = []
        for i in range(0, cfg.scenes, cfg.batch):
            idx = np.sort(order[i:i + cfg.batch])
            for p in params.values():
                p.zero_grad()
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, per_scene = batch_loss(params, images[idx], depths[idx], cfg, schedule)
            except ad.DomainError:
                # predictions blown up past the soft floor: same as a non-finite loss
                loss = None
            if loss is None or not math.isfinite(loss.item()):
                aborted = True
                break
            ad.backward(loss)
            if cfg.clip_norm is not None:
                norm = _grad_norm(params)
                if norm > cfg.clip_norm:
                    for p in params.values():
                        p.grad = p.grad * (cfg.clip_norm / norm)
            params = opt.step(params)
            if not all(np.isfinite(p.data).all() for p in params.values()):
                aborted = True
                break
            scene_losses.extend(per_scene)
        if aborted:
            log.warning("loss diverged in epoch %d; keeping last finite checkpoint", epoch)
            break
        loss_curve.append(math.fsum(scene_losses) / len(scene_losses))
        with np.errstate(over="ignore", invalid="ignore"):
            rep = evaluate(params, val_images, val_depths, cfg, schedule)
        val_curve.append(rep.rmse)
        if math.isfinite(rep.rmse) and rep.rmse < best[0]:
            best = (rep.rmse, _snapshot(params), epoch)
            if out:
                checkpoint.save(out / "best.fdp", best[1])
        log.info("epoch %d loss %.5f val_rmse %.4f (baseline %.4f) %.1fs", epoch, loss_curve[-1], rep.rmse,
                 rep.baseline_rmse, time.perf_counter() - t0)

    params = _restore(best[1])
    report = evaluate(params, val_images, val_depths, cfg, schedule)
    if out:
        checkpoint.save(out / "best.fdp", best[1])
        with open(out / "loss_curve.tsv", "w") as fh:
            fh.write("epoch\ttrain_loss\tval_rmse\n")
            for k, (a, b) in enumerate(zip(loss_curve, val_curve)):
                fh.write(f"{k}\t{a:.9g}\t{b:.9g}\n")
        (out / "eval_report.tsv").write_text("\n".join(report.lines()) + "\n")
    return TrainResult(params, loss_curve, val_curve, report, best[2], aborted)
