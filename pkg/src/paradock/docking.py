"""Closed-form docking from predicted interface parameters.

The heads yield, per protein, four invariant scalars F and a stack of
(3M+1) vectors E. The scalars fix a shared standard-form paraboloid and an
in-plane refinement angle; the vectors fix each protein's interface placement
(rotation via polar decomposition of the summed 3x3 blocks, translation via
the last vector plus the protein's input centroid). Making the two placements
coincide gives the docking transform in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DegenerateHead
from .geometry import (
    Quadric,
    RigidTransform,
    StandardParaboloid,
    compose_relative,
    polar_rotation,
    refinement_rotation,
    to_general_form,
    _f64,
)
from .graphs import ProteinGraph

HEAD_DET_TOL = 1e-10
HEAD_EPS = 1e-6


@dataclass(eq=False)
class InterfaceSide:
    """One protein's placement of the shared interface."""

    transform: RigidTransform
    general: Quadric

    @property
    def peak(self) -> torch.Tensor:
        return self.transform.translation

    @property
    def normal(self) -> torch.Tensor:
        """Unit normal of the tangent plane at the peak (image of the z axis)."""
        return self.transform.rotation[:, 2]


@dataclass(eq=False)
class InterfacePrediction:
    standard: StandardParaboloid
    ligand: InterfaceSide
    receptor: InterfaceSide


@dataclass(eq=False)
class DockingResult:
    transform: RigidTransform
    interfaces: InterfacePrediction
    theta: torch.Tensor
    docked_coords: torch.Tensor

    @property
    def refinement_matrix(self) -> torch.Tensor:
        return refinement_rotation(self.theta)


def predict_standard_form(f1, f2) -> StandardParaboloid:
    """Shared standard form from both proteins' invariant head outputs."""
    f1, f2 = _f64(f1), _f64(f2)
    s = f1 + f2
    return StandardParaboloid(
        torch.nn.functional.softplus(s[0]),
        torch.nn.functional.softplus(s[1]),
        s[2],
    )


def refinement_angle(f1, f2) -> torch.Tensor:
    """In-plane refinement angle theta, unbounded as produced."""
    return (_f64(f1)[3] - _f64(f2)[3]).reshape(())


def predict_se3(e, centroid, training: bool = False) -> RigidTransform:
    """Interface placement from the vector head output.

    The first M 3x3 blocks of E are summed; the summed block stores the frame
    axes as rows, so it is transposed before the polar projection (this is what
    makes a rigid motion of the input act on the result from the left). A block
    sum with |det| under 1e-10 raises DegenerateHead at inference; during
    training it is nudged by adding a small multiple of the identity so
    gradients stay finite.
    """
    e = _f64(e)
    if e.dim() != 2 or e.shape[1] != 3 or (e.shape[0] - 1) % 3:
        raise ValueError(f"E must be (3M+1, 3), got {tuple(e.shape)}")
    m = (e.shape[0] - 1) // 3
    frame = e[: 3 * m].reshape(m, 3, 3).sum(0).T
    det = torch.linalg.det(frame)
    if abs(det.item()) < HEAD_DET_TOL:
        if not training:
            raise DegenerateHead(f"pose head block sum has |det| = {abs(det.item()):.3e}")
        frame = frame + HEAD_EPS * torch.eye(3, dtype=frame.dtype)
        det = torch.linalg.det(frame)
    if det.item() < 0:
        frame = -frame
    rotation = polar_rotation(frame)
    translation = e[3 * m] + _f64(centroid)
    return RigidTransform(rotation, translation)


def make_interfaces(
    std: StandardParaboloid, t_ligand: RigidTransform, t_receptor: RigidTransform
) -> InterfacePrediction:
    """Bundle the shared standard form with both placements and general forms."""
    return InterfacePrediction(
        standard=std,
        ligand=InterfaceSide(t_ligand, to_general_form(std, t_ligand)),
        receptor=InterfaceSide(t_receptor, to_general_form(std, t_receptor)),
    )


def dock_from_heads(
    f1, f2, e1, e2,
    ligand_coords, receptor_centroid,
    refine: bool = True,
    training: bool = False,
) -> DockingResult:
    """Assemble the docking result from raw head outputs (shared by dock and oracles)."""
    ligand_coords = _f64(ligand_coords)
    std = predict_standard_form(f1, f2)
    t1 = predict_se3(e1, ligand_coords.mean(0), training=training)
    t2 = predict_se3(e2, receptor_centroid, training=training)
    theta = refinement_angle(f1, f2)
    qr = refinement_rotation(theta) if refine else None
    transform = compose_relative(t1, t2, qr)
    return DockingResult(
        transform=transform,
        interfaces=make_interfaces(std, t1, t2),
        theta=theta,
        docked_coords=transform.apply(ligand_coords),
    )


def dock(
    ligand: ProteinGraph,
    receptor: ProteinGraph,
    model,
    refine: bool = True,
    training: bool = False,
    rng=None,
) -> DockingResult:
    """Full pipeline: encoder heads to docked ligand coordinates.

    ``model`` is anything exposing run_heads(g1, g2, training, rng) -> (F1, F2,
    E1, E2); ``rng`` is an optional torch.Generator for dropout. Disabling
    ``refine`` replaces the in-plane twist with the identity (the reported
    theta is still the head value).
    """
    f1, f2, e1, e2 = model.run_heads(ligand, receptor, training=training, rng=rng)
    return dock_from_heads(
        f1, f2, e1, e2,
        ligand_coords=ligand.coords,
        receptor_centroid=_f64(receptor.coords).mean(0),
        refine=refine,
        training=training,
    )
