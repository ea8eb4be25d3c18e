"""Training objectives: interface fitness, side separation, twist refinement, docking.

All functions take torch tensors (any float dtype, promoted to float64) and
return scalar tensors that are differentiable w.r.t. their inputs. Values for
logging live in LossReport.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .docking import InterfacePrediction
from .errors import (
    ConfigError,
    DegenerateConfiguration,
    NoContacts,
    TooFewPoints,
)
from .geometry import RigidTransform, _f64, kabsch2d, refinement_rotation


def sqrt_relu(x: torch.Tensor) -> torch.Tensor:
    """sqrt(max(x, 0)) with subgradient 0 at x <= 0."""
    positive = x > 0
    safe = torch.where(positive, x, torch.ones_like(x))
    return torch.where(positive, torch.sqrt(safe), torch.zeros_like(x))


def fit_loss(iface: InterfacePrediction, pockets_ligand, pockets_receptor) -> torch.Tensor:
    """How well the tracked pocket points sit on each interface.

    Per pocket point and protein: squared quadric residual plus absolute
    distance to the tangent plane at the peak; averaged by the pocket count.
    """
    p1, p2 = _f64(pockets_ligand), _f64(pockets_receptor)
    if p1.dim() != 2 or p1.shape != p2.shape or p1.shape[1] != 3:
        raise ValueError("pocket sets must both be (K, 3)")
    k = p1.shape[0]
    if k == 0:
        raise NoContacts("no pocket points to fit")
    total = torch.zeros((), dtype=torch.float64)
    for side, pts in ((iface.ligand, p1), (iface.receptor, p2)):
        phi = side.general.evaluate(pts)
        plane = ((pts - side.peak) @ side.normal).abs()
        total = total + (phi * phi + plane).sum()
    return total / k


def overlap_loss(iface: InterfacePrediction, ligand_coords, receptor_coords) -> torch.Tensor:
    """Penalty for the two proteins sharing a side of the interface.

    Each branch pushes one protein to the negative side of its own quadric and
    the other to the positive side; the better branch is kept, so which protein
    sits inside is not prescribed.
    """
    x1, x2 = _f64(ligand_coords), _f64(receptor_coords)
    phi1 = iface.ligand.general.evaluate(x1)
    phi2 = iface.receptor.general.evaluate(x2)
    branch_a = sqrt_relu(phi1).mean() + sqrt_relu(-phi2).mean()
    branch_b = sqrt_relu(-phi1).mean() + sqrt_relu(phi2).mean()
    return torch.minimum(branch_a, branch_b)


def refinement_target(pockets_ligand, pockets_receptor,
                      t_ligand: RigidTransform, t_receptor: RigidTransform):
    """Planar alignment target for the refinement angle, or None when degenerate.

    Pocket points are carried into each interface's standard frame and the
    optimal in-plane rotation between the two point sets is computed; the
    result is detached (it is a target, not a differentiated quantity).
    """
    p1 = ((_f64(pockets_ligand) - t_ligand.translation) @ t_ligand.rotation).detach()
    p2 = ((_f64(pockets_receptor) - t_receptor.translation) @ t_receptor.rotation).detach()
    try:
        return kabsch2d(p1[:, :2], p2[:, :2])
    except (DegenerateConfiguration, TooFewPoints):
        return None


def refinement_loss(theta, pockets_ligand, pockets_receptor,
                    t_ligand: RigidTransform, t_receptor: RigidTransform,
                    target=None):
    """Squared Frobenius gap between the predicted twist and the alignment target.

    Returns None when the alignment is degenerate (the caller counts the skip).
    An explicit ``target`` overrides the internally computed one; gradients flow
    through theta only.
    """
    if target is None:
        target = refinement_target(pockets_ligand, pockets_receptor, t_ligand, t_receptor)
        if target is None:
            return None
    qr = refinement_rotation(theta)
    diff = qr[:2, :2] - _f64(target)
    return (diff * diff).sum()


def dock_loss(t_pred: RigidTransform, q_gt, t_gt) -> torch.Tensor:
    """Distance of the predicted transform from the exact inverse of the augmentation."""
    q_gt, t_gt = _f64(q_gt), _f64(t_gt)
    dr = t_pred.rotation - q_gt.T
    dt = t_pred.translation + q_gt.T @ t_gt
    return (dr * dr).sum() + (dt * dt).sum()


@dataclass(frozen=True)
class LossWeights:
    fit: float = 1.0
    overlap: float = 1.0
    refinement: float = 1.0
    dock: float = 1.0

    def __post_init__(self):
        for name in ("fit", "overlap", "refinement", "dock"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.fit, self.overlap, self.refinement, self.dock)


@dataclass
class LossReport:
    fit: float
    overlap: float
    refinement: float
    dock: float
    total: float
    weights: LossWeights
    refinement_skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "fit": self.fit,
            "overlap": self.overlap,
            "refinement": self.refinement,
            "dock": self.dock,
            "total": self.total,
            "weights": list(self.weights.as_tuple()),
            "refinement_skipped": self.refinement_skipped,
        }


def total_loss(fit, overlap, refinement, dock, weights: LossWeights,
               refinement_skipped: bool = False):
    """Weighted sum of the enabled components.

    Components are scalar tensors or None (disabled/skipped, contributing 0).
    Returns (total tensor, LossReport); the report's total equals the weighted
    sum of its own component values exactly.
    """
    parts = {"fit": fit, "overlap": overlap, "refinement": refinement, "dock": dock}
    total = torch.zeros((), dtype=torch.float64)
    values = {}
    for name, w in zip(parts, weights.as_tuple()):
        comp = parts[name]
        if comp is None:
            values[name] = 0.0
            continue
        total = total + w * comp
        values[name] = float(comp.detach())
    report_total = 0.0
    for name, w in zip(values, weights.as_tuple()):
        report_total += w * values[name]
    report = LossReport(
        fit=values["fit"],
        overlap=values["overlap"],
        refinement=values["refinement"],
        dock=values["dock"],
        total=report_total,
        weights=weights,
        refinement_skipped=refinement_skipped,
    )
    return total, report
