"""Synthetic docking complexes with exactly known interface geometry.

Each complex starts from a drawn standard paraboloid. Contact residues sit in
matched pairs straddling shared surface anchors (ligand strictly inside the
surface, receptor strictly outside), body residues sit deeper on their own
side. The whole arrangement is posed rigidly in space, and both proteins then
receive independent rigid motions to make the unbound inputs. The truth file
stores every transform and full-precision coordinates so oracle tests can run
at tight tolerances; PDB output is limited to 3 decimals by the format.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from .docking import DockingResult, make_interfaces
from .geometry import (
    RigidTransform,
    StandardParaboloid,
    compose_relative,
    random_rotation,
    random_transform,
)
from .graphs import CONTACT_THRESHOLD
from .pdbio import ProteinStructure, save_pdb

TRUTH_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SynthConfig:
    n_contacts: int = 6
    n_body_ligand: int = 18
    n_body_receptor: int = 22
    lambda_range: tuple = (0.04, 0.18)
    beta_range: tuple = (1.0, 2.5)
    anchor_radius: float = 9.0
    contact_offset: tuple = (0.75, 3.0)
    body_offset: tuple = (3.0, 8.0)
    clearance: float = 1.0
    margin: float = 0.5
    threshold_guard: float = 0.25
    spacing: float = 1.5
    pose_translation: float = 12.0
    unbound_translation: float = 10.0


@dataclass(eq=False)
class SynthComplex:
    name: str
    lambda1: float
    lambda2: float
    beta: float
    pose: RigidTransform                # standard frame -> bound frame
    ligand_motion: RigidTransform       # bound -> unbound ligand
    receptor_motion: RigidTransform     # bound -> unbound receptor
    ligand_bound: np.ndarray
    receptor_bound: np.ndarray
    ligand_types: np.ndarray
    receptor_types: np.ndarray
    clearance: float

    @property
    def standard(self) -> StandardParaboloid:
        return StandardParaboloid(self.lambda1, self.lambda2, self.beta)

    @property
    def ligand_unbound(self) -> np.ndarray:
        return self.ligand_motion.apply(self.ligand_bound).numpy()

    @property
    def receptor_unbound(self) -> np.ndarray:
        return self.receptor_motion.apply(self.receptor_bound).numpy()

    @property
    def ligand_interface(self) -> RigidTransform:
        """Standard frame -> the interface as seen from the unbound ligand."""
        return self.ligand_motion.compose(self.pose)

    @property
    def receptor_interface(self) -> RigidTransform:
        return self.receptor_motion.compose(self.pose)

    @property
    def gt_transform(self) -> RigidTransform:
        """(Q_gt, t_gt): unbound ligand = Q_gt @ docked target + t_gt."""
        return self.ligand_motion.compose(self.receptor_motion.inverse())

    @property
    def docked_target(self) -> np.ndarray:
        """Bound ligand carried into the receptor's unbound frame."""
        return self.receptor_motion.apply(self.ligand_bound).numpy()


def _surface_z(lambda1, lambda2, beta, xy):
    return -(lambda1 * xy[:, 0] ** 2 + lambda2 * xy[:, 1] ** 2) / beta


def _phi(lambda1, lambda2, beta, pts):
    return lambda1 * pts[:, 0] ** 2 + lambda2 * pts[:, 1] ** 2 + beta * pts[:, 2]


def _normals(lambda1, lambda2, beta, pts):
    grad = np.stack(
        [2 * lambda1 * pts[:, 0], 2 * lambda2 * pts[:, 1], np.full(pts.shape[0], beta)],
        axis=1,
    )
    return grad / np.linalg.norm(grad, axis=1, keepdims=True)


def _disc_anchors(rng, n, radius, lambda1, lambda2, beta):
    r = radius * np.sqrt(rng.uniform(size=n))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    xy = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    z = _surface_z(lambda1, lambda2, beta, xy)
    return np.concatenate([xy, z[:, None]], axis=1)


def _surface_cloud(lambda1, lambda2, beta, extent, step=0.25):
    ax = np.arange(-extent, extent + step, step)
    gx, gy = np.meshgrid(ax, ax)
    xy = np.stack([gx.ravel(), gy.ravel()], axis=1)
    z = _surface_z(lambda1, lambda2, beta, xy)
    return np.concatenate([xy, z[:, None]], axis=1)


def _min_dist_to(points, cloud):
    out = np.empty(points.shape[0])
    for i, p in enumerate(points):
        d = cloud - p
        out[i] = np.sqrt((d * d).sum(1).min())
    return out


def _cross_ok(point, others, clearance, lo, hi):
    """Clearance plus keep-out band around the contact threshold, vs all others."""
    if len(others) == 0:
        return True
    d = np.sqrt(((np.asarray(others) - point) ** 2).sum(1))
    return bool(d.min() >= clearance and not ((d > lo) & (d < hi)).any())


def _spacing_ok(point, same_side, spacing):
    if len(same_side) == 0:
        return True
    d = np.sqrt(((np.asarray(same_side) - point) ** 2).sum(1))
    return bool(d.min() >= spacing)


def _build_standard_frame(rng, cfg: SynthConfig):
    """Place all points in the standard frame by per-point rejection sampling.

    Ligand points are fixed first; every receptor candidate is then checked
    against the whole ligand set, so each cross pair respects the clearance
    and stays outside the keep-out band around the contact threshold. Returns
    None only if some point exhausts its redraw budget.
    """
    lam1, lam2 = rng.uniform(*cfg.lambda_range, size=2)
    beta = rng.uniform(*cfg.beta_range) * rng.choice([-1.0, 1.0])
    extent = cfg.anchor_radius + cfg.body_offset[1] + 2.0
    cloud = _surface_cloud(lam1, lam2, beta, extent)
    lo = CONTACT_THRESHOLD - cfg.threshold_guard
    hi = CONTACT_THRESHOLD + cfg.threshold_guard

    def on_good_side(point, side):
        phi = _phi(lam1, lam2, beta, point[None, :])[0]
        if (phi >= 0) if side < 0 else (phi <= 0):
            return False
        return _min_dist_to(point[None, :], cloud)[0] >= cfg.margin

    def draw(side, offset_range, ligand_pts, own_pts, anchor=None):
        for _ in range(200):
            a = anchor if anchor is not None else _disc_anchors(
                rng, 1, cfg.anchor_radius, lam1, lam2, beta)[0]
            n = _normals(lam1, lam2, beta, a[None, :])[0]
            p = a + side * rng.uniform(*offset_range) * n
            if not on_good_side(p, side):
                continue
            if not _spacing_ok(p, own_pts, cfg.spacing):
                continue
            if side > 0 and not _cross_ok(p, ligand_pts, cfg.clearance, lo, hi):
                continue
            return p
        return None

    ligand, receptor, anchors = [], [], []
    for _ in range(cfg.n_contacts):
        a = _disc_anchors(rng, 1, cfg.anchor_radius, lam1, lam2, beta)[0]
        p = draw(-1, cfg.contact_offset, None, ligand, anchor=a)
        if p is None:
            return None
        ligand.append(p)
        anchors.append(a)
    for _ in range(cfg.n_body_ligand):
        p = draw(-1, cfg.body_offset, None, ligand)
        if p is None:
            return None
        ligand.append(p)
    for a in anchors:
        p = draw(+1, cfg.contact_offset, ligand, receptor, anchor=a)
        if p is None:
            return None
        receptor.append(p)
    for _ in range(cfg.n_body_receptor):
        p = draw(+1, cfg.body_offset, ligand, receptor)
        if p is None:
            return None
        receptor.append(p)

    ligand = np.array(ligand)
    receptor = np.array(receptor)
    diff = ligand[:, None, :] - receptor[None, :, :]
    cross = np.sqrt((diff * diff).sum(-1))
    assert cross.min() >= cfg.clearance and not ((cross > lo) & (cross < hi)).any()
    if not (cross < lo).any():
        return None
    return lam1, lam2, beta, ligand, receptor


def generate_complex(rng: np.random.Generator, name: str,
                     cfg: SynthConfig | None = None) -> SynthComplex:
    """Draw one synthetic complex; deterministic given the generator state."""
    cfg = cfg or SynthConfig()
    attempt = None
    for _ in range(64):
        attempt = _build_standard_frame(rng, cfg)
        if attempt is not None:
            break
    if attempt is None:
        raise RuntimeError(f"could not satisfy synthetic constraints for {name}")
    lam1, lam2, beta, ligand_std, receptor_std = attempt

    pose = RigidTransform(
        random_rotation(rng),
        rng.uniform(-cfg.pose_translation, cfg.pose_translation, size=3),
    )
    return SynthComplex(
        name=name,
        lambda1=float(lam1),
        lambda2=float(lam2),
        beta=float(beta),
        pose=pose,
        ligand_motion=random_transform(rng, cfg.unbound_translation),
        receptor_motion=random_transform(rng, cfg.unbound_translation),
        ligand_bound=pose.apply(ligand_std).numpy(),
        receptor_bound=pose.apply(receptor_std).numpy(),
        ligand_types=rng.integers(0, 20, size=ligand_std.shape[0]),
        receptor_types=rng.integers(0, 20, size=receptor_std.shape[0]),
        clearance=cfg.clearance,
    )


def _transform_dict(t: RigidTransform) -> dict:
    q, tr = t.numpy()
    return {"rotation": q.tolist(), "translation": tr.tolist()}


def _transform_from_dict(d: dict) -> RigidTransform:
    return RigidTransform(np.array(d["rotation"]), np.array(d["translation"]))


def truth_dict(cplx: SynthComplex) -> dict:
    return {
        "schema_version": TRUTH_SCHEMA_VERSION,
        "name": cplx.name,
        "standard": {
            "lambda1": cplx.lambda1,
            "lambda2": cplx.lambda2,
            "beta": cplx.beta,
        },
        "interface_pose": _transform_dict(cplx.pose),
        "ligand_motion": _transform_dict(cplx.ligand_motion),
        "receptor_motion": _transform_dict(cplx.receptor_motion),
        "oracle_interfaces": {
            "ligand": _transform_dict(cplx.ligand_interface),
            "receptor": _transform_dict(cplx.receptor_interface),
        },
        "gt_transform": _transform_dict(cplx.gt_transform),
        "ligand_bound": cplx.ligand_bound.tolist(),
        "receptor_bound": cplx.receptor_bound.tolist(),
        "ligand_unbound": cplx.ligand_unbound.tolist(),
        "receptor_unbound": cplx.receptor_unbound.tolist(),
        "ligand_types": cplx.ligand_types.tolist(),
        "receptor_types": cplx.receptor_types.tolist(),
        "clearance": cplx.clearance,
        "contact_threshold": CONTACT_THRESHOLD,
    }


@dataclass(eq=False)
class SynthTruth:
    """Parsed truth file: oracle interfaces, ground-truth motion, exact coords."""

    name: str
    standard: StandardParaboloid
    ligand_interface: RigidTransform
    receptor_interface: RigidTransform
    gt_transform: RigidTransform
    ligand_bound: np.ndarray
    receptor_bound: np.ndarray
    ligand_unbound: np.ndarray
    receptor_unbound: np.ndarray
    receptor_motion: RigidTransform
    clearance: float

    @property
    def docked_target(self) -> np.ndarray:
        return self.receptor_motion.apply(self.ligand_bound).numpy()


def load_truth(path) -> SynthTruth:
    with open(path, "r", encoding="ascii") as fh:
        d = json.load(fh)
    std = d["standard"]
    return SynthTruth(
        name=d["name"],
        standard=StandardParaboloid(std["lambda1"], std["lambda2"], std["beta"]),
        ligand_interface=_transform_from_dict(d["oracle_interfaces"]["ligand"]),
        receptor_interface=_transform_from_dict(d["oracle_interfaces"]["receptor"]),
        gt_transform=_transform_from_dict(d["gt_transform"]),
        ligand_bound=np.array(d["ligand_bound"], dtype=np.float64),
        receptor_bound=np.array(d["receptor_bound"], dtype=np.float64),
        ligand_unbound=np.array(d["ligand_unbound"], dtype=np.float64),
        receptor_unbound=np.array(d["receptor_unbound"], dtype=np.float64),
        receptor_motion=_transform_from_dict(d["receptor_motion"]),
        clearance=float(d["clearance"]),
    )


def oracle_dock(truth: SynthTruth) -> DockingResult:
    """Dock using the stored interfaces in place of network heads (theta = 0)."""
    transform = compose_relative(truth.ligand_interface, truth.receptor_interface)
    return DockingResult(
        transform=transform,
        interfaces=make_interfaces(
            truth.standard, truth.ligand_interface, truth.receptor_interface
        ),
        theta=torch.zeros((), dtype=torch.float64),
        docked_coords=transform.apply(truth.ligand_unbound),
    )


def write_complex_files(cplx: SynthComplex, out_dir) -> list[str]:
    """Write the four PDB files and the truth JSON; returns the paths."""
    paths = []
    specs = [
        ("ligand_bound", cplx.ligand_bound, cplx.ligand_types, "A"),
        ("receptor_bound", cplx.receptor_bound, cplx.receptor_types, "B"),
        ("ligand_unbound", cplx.ligand_unbound, cplx.ligand_types, "A"),
        ("receptor_unbound", cplx.receptor_unbound, cplx.receptor_types, "B"),
    ]
    for suffix, coords, types, chain in specs:
        path = os.path.join(out_dir, f"{cplx.name}_{suffix}.pdb")
        save_pdb(path, ProteinStructure.from_arrays(coords, types, chain_id=chain))
        paths.append(path)
    truth_path = os.path.join(out_dir, f"{cplx.name}_truth.json")
    with open(truth_path, "w", encoding="ascii") as fh:
        json.dump(truth_dict(cplx), fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths.append(truth_path)
    return paths
