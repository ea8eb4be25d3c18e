"""Desk-scale training loop: augmentation, exact gradients, Adam, early stopping.

The unit of work is one bound complex. Augmentation rigidly moves the ligand
(the receptor stays in its bound pose), the full pipeline runs on the moved
graphs, and the four objectives compare the closed-form docking against the
known inverse motion. Gradients come from reverse-mode differentiation of the
scalar total; the optimizer is a plain functional Adam over named arrays.
"""

from __future__ import annotations

import glob
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import checkpoint as ckpt
from .docking import dock
from .errors import ConfigError, NoContacts, NonFiniteLoss
from .geometry import random_transform
from .graphs import GraphConfig, PocketSet, ProteinGraph, build_graph, extract_pockets, track_pockets
from .losses import LossReport, LossWeights, dock_loss, fit_loss, overlap_loss, refinement_loss, total_loss
from .model import ModelConfig, PairEncoder
from .pdbio import ProteinStructure, load_pdb

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
VAL_RNG_OFFSET = 9973


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    layers: int = 2
    embed: int = 64
    hidden: int = 128
    heads: int = 16
    neighbors: int = 10
    rbf_size: int = 20
    radial_cut: float = 3.0
    dropout: float = 0.1
    peak_blocks: int = 3
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    epochs: int = 64
    patience: int = 8
    top_k_checkpoints: int = 10
    translation_halfwidth: float = 10.0
    refine: bool = True
    grad_clip: float = 1.0
    max_steps: int | None = None
    batch_size: int = 1
    parallel: int = 1
    val_fraction: float = 0.2
    dtype: str = "float64"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("epochs", "patience", "top_k_checkpoints", "batch_size", "parallel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if isinstance(self.weights, (list, tuple)):
            object.__setattr__(self, "weights", LossWeights(*self.weights))
        elif isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))

    def graph_config(self) -> GraphConfig:
        return GraphConfig(
            k=self.neighbors,
            rbf_size=self.rbf_size,
            radial_cut=self.radial_cut,
            pos_dim=self.embed,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden=self.hidden,
            embed=self.embed,
            layers=self.layers,
            heads=self.heads,
            peak_blocks=self.peak_blocks,
            dropout=self.dropout,
            edge_dim=self.graph_config().edge_dim,
            dtype=self.dtype,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights.as_tuple())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown training config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            with open(path, "r", encoding="ascii") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


@dataclass(eq=False)
class ComplexSample:
    """One bound complex prepared for training."""

    name: str
    ligand_structure: ProteinStructure
    receptor_structure: ProteinStructure
    ligand_coords: np.ndarray
    receptor_graph: ProteinGraph
    pockets: PocketSet | None
    graph_config: GraphConfig


@dataclass(eq=False)
class AugmentedSample:
    """A training sample after its per-step rigid augmentation of the ligand."""

    sample: ComplexSample
    ligand_graph: ProteinGraph
    q_gt: np.ndarray
    t_gt: np.ndarray
    pockets_ligand: np.ndarray | None   # (K, 3) midpoints tracked with the ligand
    pockets_receptor: np.ndarray | None  # (K, 3) midpoints at the bound pose
    dropout_seed: int


def load_sample(name: str, ligand_path, receptor_path, gcfg: GraphConfig) -> ComplexSample:
    lig = load_pdb(ligand_path)
    rec = load_pdb(receptor_path)
    try:
        pockets = extract_pockets(lig.coords, rec.coords)
    except NoContacts:
        pockets = None
    return ComplexSample(
        name=name,
        ligand_structure=lig,
        receptor_structure=rec,
        ligand_coords=lig.coords,
        receptor_graph=build_graph(rec, gcfg),
        pockets=pockets,
        graph_config=gcfg,
    )


def load_dataset(data_dir, gcfg: GraphConfig) -> list[ComplexSample]:
    """Collect `<name>_ligand_bound.pdb` / `<name>_receptor_bound.pdb` pairs."""
    lig_paths = sorted(glob.glob(os.path.join(str(data_dir), "*_ligand_bound.pdb")))
    if not lig_paths:
        raise ConfigError(f"no *_ligand_bound.pdb files under {data_dir}")
    samples = []
    for lp in lig_paths:
        name = os.path.basename(lp)[: -len("_ligand_bound.pdb")]
        rp = os.path.join(os.path.dirname(lp), f"{name}_receptor_bound.pdb")
        if not os.path.exists(rp):
            raise ConfigError(f"missing receptor file for {name}: {rp}")
        samples.append(load_sample(name, lp, rp, gcfg))
    return samples


def augment(sample: ComplexSample, rng: np.random.Generator,
            halfwidth: float = 10.0) -> AugmentedSample:
    """Move the ligand by a fresh Haar rotation + cube-uniform translation.

    The receptor keeps its bound pose; pockets follow their proteins.
    """
    t = random_transform(rng, halfwidth)
    unbound = t.apply(sample.ligand_coords).numpy()
    graph = build_graph(sample.ligand_structure.with_coords(unbound), sample.graph_config)
    if sample.pockets is not None:
        p_l = track_pockets(sample.pockets, t, "ligand").midpoints
        p_r = sample.pockets.midpoints.copy()
    else:
        p_l = p_r = None
    q_gt, t_gt = t.numpy()
    return AugmentedSample(
        sample=sample,
        ligand_graph=graph,
        q_gt=q_gt,
        t_gt=t_gt,
        pockets_ligand=p_l,
        pockets_receptor=p_r,
        dropout_seed=int(rng.integers(0, 2**62)),
    )


def compute_losses(model: PairEncoder, aug: AugmentedSample, weights: LossWeights,
                   refine: bool = True, training: bool = True,
                   refinement_target=None):
    """Run the pipeline on one augmented sample and assemble the weighted loss.

    Components with weight 0 are not computed (their logged value is 0), which
    is what the ablation configurations key on. Returns (total tensor, report,
    docking result).
    """
    rng = None
    if training and model.cfg.dropout > 0:
        rng = torch.Generator().manual_seed(aug.dropout_seed)
    result = dock(aug.ligand_graph, aug.sample.receptor_graph, model,
                  refine=refine, training=training, rng=rng)
    iface = result.interfaces
    have_pockets = aug.pockets_ligand is not None
    fit = ref = None
    skipped = False
    if weights.fit > 0 and have_pockets:
        fit = fit_loss(iface, aug.pockets_ligand, aug.pockets_receptor)
    if weights.refinement > 0 and have_pockets:
        ref = refinement_loss(
            result.theta, aug.pockets_ligand, aug.pockets_receptor,
            iface.ligand.transform, iface.receptor.transform,
            target=refinement_target,
        )
        skipped = ref is None
    overlap = None
    if weights.overlap > 0:
        overlap = overlap_loss(iface, aug.ligand_graph.coords, aug.sample.receptor_graph.coords)
    dk = None
    if weights.dock > 0:
        dk = dock_loss(result.transform, aug.q_gt, aug.t_gt)
    total, report = total_loss(fit, overlap, ref, dk, weights, refinement_skipped=skipped)
    return total, report, result


def _merge_reports(reports: list[LossReport], weights: LossWeights) -> LossReport:
    return LossReport(
        fit=sum(r.fit for r in reports),
        overlap=sum(r.overlap for r in reports),
        refinement=sum(r.refinement for r in reports),
        dock=sum(r.dock for r in reports),
        total=sum(r.total for r in reports),
        weights=weights,
        refinement_skipped=any(r.refinement_skipped for r in reports),
    )


def loss_gradient(model: PairEncoder, batch: list[AugmentedSample], weights: LossWeights,
                  refine: bool = True, training: bool = True, parallel: int = 1,
                  refinement_targets: list | None = None):
    """Summed loss and exact gradients over a batch (sum, not mean).

    Per-sample gradients are reduced in batch order, so a parallel evaluation
    is bit-identical to the sequential one. ``refinement_targets`` optionally
    pins the per-sample alignment targets (used by gradient verification).
    """
    if not batch:
        raise ConfigError("empty batch")
    params = dict(model.named_parameters())
    plist = list(params.values())
    targets = refinement_targets or [None] * len(batch)

    def one(item):
        aug, target = item
        total, report, _ = compute_losses(model, aug, weights, refine=refine,
                                          training=training, refinement_target=target)
        if not math.isfinite(float(total.detach())):
            raise NonFiniteLoss("total loss is not finite", sample=aug.sample.name)
        if total.requires_grad:
            grads = torch.autograd.grad(total, plist, allow_unused=True)
        else:
            grads = [None] * len(plist)
        grads = [torch.zeros_like(p) if g is None else g for p, g in zip(plist, grads)]
        return report, grads

    items = list(zip(batch, targets))
    if parallel > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]

    reports = [r for r, _ in results]
    summed = [g.clone() for g in results[0][1]]
    for _, grads in results[1:]:
        for acc, g in zip(summed, grads):
            acc += g
    grad_map = {name: g for name, g in zip(params, summed)}
    return _merge_reports(reports, weights), grad_map


def clip_gradients(grads: dict[str, torch.Tensor], max_norm: float) -> float:
    """Scale gradients in place to a global norm cap; returns the pre-clip norm."""
    sq = sum(float((g * g).sum()) for g in grads.values())
    norm = math.sqrt(sq)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass(eq=False)
class AdamState:
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    step: int = 0


def init_adam(params: dict[str, torch.Tensor]) -> AdamState:
    return AdamState(
        m={k: torch.zeros_like(p) for k, p in params.items()},
        v={k: torch.zeros_like(p) for k, p in params.items()},
    )


def optimizer_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor],
                   state: AdamState, lr: float) -> None:
    """One Adam update, in place over the parameter tensors."""
    state.step += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.step
    bc2 = 1.0 - ADAM_BETA2 ** state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            state.m[name].mul_(ADAM_BETA1).add_(g, alpha=1.0 - ADAM_BETA1)
            state.v[name].mul_(ADAM_BETA2).addcmul_(g, g, value=1.0 - ADAM_BETA2)
            m_hat = state.m[name] / bc1
            v_hat = state.v[name] / bc2
            p.add_(-lr * m_hat / (v_hat.sqrt() + ADAM_EPS))


def validation_loss(model: PairEncoder, samples: list[ComplexSample],
                    cfg: TrainConfig) -> float:
    """Mean total loss over the validation set with epoch-stable augmentations."""
    rng = np.random.default_rng(cfg.seed + VAL_RNG_OFFSET)
    totals = []
    with torch.no_grad():
        for sample in samples:
            aug = augment(sample, rng, cfg.translation_halfwidth)
            total, _, _ = compute_losses(model, aug, cfg.weights,
                                         refine=cfg.refine, training=False)
            totals.append(float(total))
    return float(np.mean(totals))


@dataclass(eq=False)
class TrainResult:
    history: list[dict]
    log_path: str
    checkpoints: list[tuple[int, float, str]]   # (epoch, val loss, path) kept
    best_epoch: int
    best_val: float
    steps_run: int
    stopped_early: bool
    no_progress: bool
    model: PairEncoder


def train_loop(train_samples: list[ComplexSample], val_samples: list[ComplexSample],
               cfg: TrainConfig, out_dir) -> TrainResult:
    """Run the full loop; writes checkpoints and a JSONL step log under out_dir."""
    if not train_samples:
        raise ConfigError("training set is empty")
    val_set = val_samples if val_samples else train_samples
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(str(out_dir), "train_log.jsonl")

    no_progress = all(w == 0.0 for w in cfg.weights.as_tuple())
    model = PairEncoder(cfg.model_config(), seed=cfg.seed)
    params = dict(model.named_parameters())
    state = init_adam(params)
    aug_rng = np.random.default_rng(cfg.seed)

    history: list[dict] = []
    kept: list[tuple[float, int, str]] = []   # (val, epoch, path), sorted ascending
    best_val = math.inf
    best_epoch = -1
    step = 0
    stopped_early = False
    out_of_steps = False

    with open(log_path, "w", encoding="ascii") as log:
        if no_progress:
            entry = {"event": "warning", "warning": "NoProgress",
                     "detail": "all loss weights are zero; parameters cannot change"}
            history.append(entry)
            log.write(json.dumps(entry) + "\n")
        for epoch in range(cfg.epochs):
            batch: list[AugmentedSample] = []
            for sample in train_samples:
                batch.append(augment(sample, aug_rng, cfg.translation_halfwidth))
                if len(batch) < cfg.batch_size and sample is not train_samples[-1]:
                    continue
                report, grads = loss_gradient(
                    model, batch, cfg.weights,
                    refine=cfg.refine, training=True, parallel=cfg.parallel,
                )
                norm = clip_gradients(grads, cfg.grad_clip)
                optimizer_step(params, grads, state, cfg.learning_rate)
                step += 1
                entry = {"event": "step", "step": step, "epoch": epoch,
                         "samples": [a.sample.name for a in batch],
                         "grad_norm": norm, "lr": cfg.learning_rate}
                entry.update(report.to_dict())
                history.append(entry)
                log.write(json.dumps(entry) + "\n")
                batch = []
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    out_of_steps = True
                    break
            val = validation_loss(model, val_set, cfg)
            path = os.path.join(str(out_dir), f"ckpt_epoch{epoch:04d}.ckpt")
            _save_train_checkpoint(path, model, state, cfg, epoch, val)
            kept.append((val, epoch, path))
            kept.sort()
            while len(kept) > cfg.top_k_checkpoints:
                _, _, evicted = kept.pop()
                os.remove(evicted)
            entry = {"event": "epoch", "epoch": epoch, "val_total": val,
                     "checkpoint": path}
            history.append(entry)
            log.write(json.dumps(entry) + "\n")
            if val < best_val - 1e-12:
                best_val = val
                best_epoch = epoch
            elif epoch - best_epoch >= cfg.patience:
                stopped_early = True
                entry = {"event": "early_stop", "epoch": epoch,
                         "best_epoch": best_epoch, "best_val": best_val}
                history.append(entry)
                log.write(json.dumps(entry) + "\n")
                break
            if out_of_steps:
                break

    return TrainResult(
        history=history,
        log_path=log_path,
        checkpoints=[(e, v, p) for (v, e, p) in sorted(kept, key=lambda t: t[1])],
        best_epoch=best_epoch,
        best_val=best_val,
        steps_run=step,
        stopped_early=stopped_early,
        no_progress=no_progress,
        model=model,
    )


def _save_train_checkpoint(path, model: PairEncoder, state: AdamState,
                           cfg: TrainConfig, epoch: int, val: float) -> None:
    arrays = model.state_arrays()
    for name, t in state.m.items():
        arrays[f"opt.m.{name}"] = t.detach().cpu().numpy().astype("<f8")
    for name, t in state.v.items():
        arrays[f"opt.v.{name}"] = t.detach().cpu().numpy().astype("<f8")
    meta = {
        "kind": "train",
        "model_config": model.config_dict(),
        "graph_config": asdict(cfg.graph_config()),
        "train_config": cfg.to_dict(),
        "opt_step": state.step,
        "epoch": epoch,
        "val_loss": val,
    }
    ckpt.save_arrays(path, arrays, meta)


def load_train_checkpoint(path):
    """Rebuild (model, AdamState, meta) from a training checkpoint."""
    arrays, meta = ckpt.load_arrays(path)
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    cfg = ModelConfig(**meta["model_config"])
    model = PairEncoder(cfg, seed=None)
    model.load_state_arrays(model_arrays)
    params = dict(model.named_parameters())
    state = init_adam(params)
    state.step = int(meta.get("opt_step", 0))
    for name in params:
        mk, vk = f"opt.m.{name}", f"opt.v.{name}"
        if mk in arrays:
            state.m[name] = torch.as_tensor(arrays[mk], dtype=params[name].dtype)
        if vk in arrays:
            state.v[name] = torch.as_tensor(arrays[vk], dtype=params[name].dtype)
    return model, state, meta
