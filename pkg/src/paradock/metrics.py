"""Complex-quality metrics: CRMSD, IRMSD, and the DockQ-lite composite.

DockQ-lite follows the public DockQ combination formula but measures contacts
at residue level (CA-CA under 8 A) because this package only carries alpha
carbons; every serialized report labels the variant explicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CorrespondenceError, NoContacts
from .geometry import kabsch
from .graphs import CONTACT_THRESHOLD, PocketSet, extract_pockets

DOCKQ_VARIANT = "DockQ-lite"
IRMSD_SCALE = 1.5
LRMSD_SCALE = 8.5


@dataclass(eq=False)
class ComplexCoords:
    """CA coordinates of a two-protein complex, ligand first."""

    ligand: np.ndarray
    receptor: np.ndarray

    def __post_init__(self):
        self.ligand = np.asarray(self.ligand, dtype=np.float64).reshape(-1, 3)
        self.receptor = np.asarray(self.receptor, dtype=np.float64).reshape(-1, 3)

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.ligand, self.receptor], axis=0)


@dataclass
class MetricReport:
    crmsd: float
    irmsd: float
    dockq: float
    fnat: float
    lrmsd: float

    def to_dict(self) -> dict:
        return {
            "crmsd": self.crmsd,
            "irmsd": self.irmsd,
            "dockq": self.dockq,
            "fnat": self.fnat,
            "lrmsd": self.lrmsd,
            "dockq_variant": DOCKQ_VARIANT,
        }


def _rmsd(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.sqrt((diff * diff).sum() / a.shape[0]))


def crmsd(x_ref, x_pred) -> float:
    """RMSD after least-squares rigid superposition of the full point sets."""
    ref = np.asarray(x_ref, dtype=np.float64)
    pred = np.asarray(x_pred, dtype=np.float64)
    if ref.shape != pred.shape:
        raise CorrespondenceError(f"point sets differ in shape: {ref.shape} vs {pred.shape}")
    t = kabsch(pred, ref)
    aligned = t.apply(pred).detach().cpu().numpy()
    return _rmsd(ref, aligned)


def irmsd(ref: ComplexCoords, pred: ComplexCoords, pockets: PocketSet) -> float:
    """CRMSD restricted to the pocket-index nodes of both proteins (2K rows)."""
    if pockets.size == 0:
        raise NoContacts("empty pocket set")
    _check_correspondence(ref, pred)
    li, ri = pockets.ligand_indices, pockets.receptor_indices
    sel_ref = np.concatenate([ref.ligand[li], ref.receptor[ri]], axis=0)
    sel_pred = np.concatenate([pred.ligand[li], pred.receptor[ri]], axis=0)
    return crmsd(sel_ref, sel_pred)


def lrmsd(ref: ComplexCoords, pred: ComplexCoords) -> float:
    """Ligand RMSD after superposing the predicted receptor onto the reference."""
    _check_correspondence(ref, pred)
    t = kabsch(pred.receptor, ref.receptor)
    moved = t.apply(pred.ligand).detach().cpu().numpy()
    return _rmsd(ref.ligand, moved)


def fnat(ref: ComplexCoords, pred: ComplexCoords,
         threshold: float = CONTACT_THRESHOLD) -> float:
    """Fraction of reference cross contacts present in the prediction."""
    _check_correspondence(ref, pred)
    ref_mask = _contact_mask(ref, threshold)
    n_ref = int(ref_mask.sum())
    if n_ref == 0:
        raise NoContacts("reference complex has no cross contacts")
    pred_mask = _contact_mask(pred, threshold)
    return float((ref_mask & pred_mask).sum() / n_ref)


def dockq_score(fnat_value: float, irmsd_value: float, lrmsd_value: float) -> float:
    """The three-term DockQ combination on already-computed ingredients."""
    return (
        fnat_value
        + 1.0 / (1.0 + (irmsd_value / IRMSD_SCALE) ** 2)
        + 1.0 / (1.0 + (lrmsd_value / LRMSD_SCALE) ** 2)
    ) / 3.0


def dockq(ref: ComplexCoords, pred: ComplexCoords,
          contact_threshold: float = CONTACT_THRESHOLD) -> MetricReport:
    """Full metric report against a reference complex.

    Pocket indices come from the reference (ground-truth) contacts.
    """
    _check_correspondence(ref, pred)
    pockets = extract_pockets(ref.ligand, ref.receptor, contact_threshold)
    f = fnat(ref, pred, contact_threshold)
    i = irmsd(ref, pred, pockets)
    l = lrmsd(ref, pred)
    return MetricReport(
        crmsd=crmsd(ref.stacked, pred.stacked),
        irmsd=i,
        dockq=dockq_score(f, i, l),
        fnat=f,
        lrmsd=l,
    )


def aggregate(reports: list[MetricReport]) -> dict[str, dict[str, float]]:
    """Median/mean/std (population) per metric over a batch of reports."""
    if not reports:
        raise CorrespondenceError("no reports to aggregate")
    out = {}
    for name in ("crmsd", "irmsd", "dockq", "fnat", "lrmsd"):
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {
            "median": float(np.median(vals)),
            "mean": float(vals.mean()),
            "std": float(vals.std()),
        }
    return out


def write_metrics_csv(path, names: list[str], reports: list[MetricReport]) -> None:
    """Per-complex rows plus median/mean/std aggregate footer rows."""
    agg = aggregate(reports)
    fields = ("crmsd", "irmsd", "dockq", "fnat", "lrmsd")
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow(["complex"] + list(fields) + ["dockq_variant"])
        for name, rep in zip(names, reports):
            w.writerow([name] + [f"{getattr(rep, f):.6f}" for f in fields] + [DOCKQ_VARIANT])
        for stat in ("median", "mean", "std"):
            w.writerow([stat] + [f"{agg[f][stat]:.6f}" for f in fields] + [""])


def _contact_mask(c: ComplexCoords, threshold: float) -> np.ndarray:
    diff = c.ligand[:, None, :] - c.receptor[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    return dist < threshold


def _check_correspondence(ref: ComplexCoords, pred: ComplexCoords) -> None:
    if ref.ligand.shape != pred.ligand.shape or ref.receptor.shape != pred.receptor.shape:
        raise CorrespondenceError(
            "complexes do not correspond: "
            f"ligand {ref.ligand.shape} vs {pred.ligand.shape}, "
            f"receptor {ref.receptor.shape} vs {pred.receptor.shape}"
        )
