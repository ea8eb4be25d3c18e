"""Residue-level kNN graphs with rigid-motion invariant features.

Node features stored on the graph are the purely geometric/positional part;
the learned residue-type embedding lives in the model so its gradients flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoContacts
from .geometry import RigidTransform
from .pdbio import ProteinStructure

CONTACT_THRESHOLD = 8.0


@dataclass(frozen=True)
class GraphConfig:
    k: int = 10
    rbf_size: int = 20
    radial_cut: float = 3.0
    rbf_span: float = 20.0
    pos_dim: int = 64
    force_orders: tuple = (2, 3, 4)

    def __post_init__(self):
        object.__setattr__(self, "force_orders", tuple(self.force_orders))
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.rbf_size < 1:
            raise ConfigError(f"rbf_size must be >= 1, got {self.rbf_size}")
        if self.radial_cut <= 0:
            raise ConfigError(f"radial_cut must be positive, got {self.radial_cut}")
        if self.rbf_span <= 0:
            raise ConfigError(f"rbf_span must be positive, got {self.rbf_span}")
        if self.pos_dim < 2 or self.pos_dim % 2:
            raise ConfigError(f"pos_dim must be a positive even number, got {self.pos_dim}")

    @property
    def edge_dim(self) -> int:
        return self.rbf_size + len(self.force_orders) + 1


@dataclass(eq=False)
class ProteinGraph:
    """kNN residue graph: per-node neighbor lists, invariant node/edge features."""

    coords: np.ndarray          # (N, 3) CA coordinates
    residue_types: np.ndarray   # (N,) int codes, 0..20
    node_features: np.ndarray   # (N, pos_dim) invariant positional features
    neighbors: np.ndarray       # (N, n_nbr) in-neighbor indices, nearest first
    edge_features: np.ndarray   # (N, n_nbr, edge_dim)
    config: GraphConfig = field(default_factory=GraphConfig)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.coords.mean(axis=0)


@dataclass(eq=False)
class PocketSet:
    """Midpoints of close cross-protein residue pairs, with their source indices."""

    midpoints: np.ndarray        # (K, 3)
    ligand_indices: np.ndarray   # (K,)
    receptor_indices: np.ndarray  # (K,)

    @property
    def size(self) -> int:
        return self.midpoints.shape[0]


def positional_embedding(i: int, dim: int) -> np.ndarray:
    """Relative positional features of a single residue index.

    Entry pairs are [i * sin(10000^(-2d/dim)), i * cos(10000^(-2d/dim))] for
    d = 0 .. dim/2 - 1; note the index multiplies the fixed angles.
    """
    if dim < 2 or dim % 2:
        raise ConfigError(f"embedding width must be even and positive, got {dim}")
    if i < 0:
        raise ConfigError(f"residue index must be >= 0, got {i}")
    return _positional_features(np.array([i], dtype=np.int64), dim)[0]


def _positional_features(positions: np.ndarray, dim: int) -> np.ndarray:
    d = np.arange(dim // 2, dtype=np.float64)
    angles = np.power(10000.0, -2.0 * d / dim)
    out = np.empty((positions.shape[0], dim), dtype=np.float64)
    scaled = positions.astype(np.float64)[:, None]
    out[:, 0::2] = scaled * np.sin(angles)[None, :]
    out[:, 1::2] = scaled * np.cos(angles)[None, :]
    return out


def rbf_expand(distance, cfg: GraphConfig) -> np.ndarray:
    """Gaussian radial basis responses of one or more distances.

    Centers are evenly spaced on [0, rbf_span]; the width is the radial cut.
    Output has shape (..., rbf_size), each entry in (0, 1].
    """
    d = np.asarray(distance, dtype=np.float64)
    centers = np.linspace(0.0, cfg.rbf_span, cfg.rbf_size)
    z = (d[..., None] - centers) / cfg.radial_cut
    return np.exp(-0.5 * z * z)


def _knn(coords: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other nodes per node, ties broken by lower index."""
    n = coords.shape[0]
    n_nbr = min(k, n - 1)
    if n_nbr <= 0:
        return np.zeros((n, 0), dtype=np.int64)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    np.fill_diagonal(dist, np.inf)
    out = np.empty((n, n_nbr), dtype=np.int64)
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, dist[i]))
        out[i] = order[:n_nbr]
    return out


def _resultant_directions(coords: np.ndarray, neighbors: np.ndarray, alpha: int) -> np.ndarray:
    """Per-node unit resultant of inverse-power-weighted neighbor offsets.

    A resultant with magnitude under 1e-12 yields the zero vector (sentinel).
    """
    if neighbors.shape[1] == 0:
        return np.zeros_like(coords)
    s = coords[:, None, :] - coords[neighbors]          # (N, n_nbr, 3)
    norms = np.linalg.norm(s, axis=-1)
    w = np.where(norms > 0, norms, 1.0) ** (-(alpha + 1))
    w = np.where(norms > 0, w, 0.0)
    r = (w[..., None] * s).sum(axis=1)
    mag = np.linalg.norm(r, axis=-1, keepdims=True)
    return np.where(mag > 1e-12, r / np.where(mag > 0, mag, 1.0), 0.0)


def build_graph(structure: ProteinStructure, cfg: GraphConfig | None = None) -> ProteinGraph:
    """Assemble the kNN graph of a structure with all invariant features.

    Edge features per neighbor j of node i, in order: RBF expansion of the
    CA distance, one resultant-direction inner product per configured order,
    and the raw distance.
    """
    cfg = cfg or GraphConfig()
    coords = structure.coords
    n = coords.shape[0]
    if n < 1:
        raise ConfigError("structure has no residues")
    neighbors = _knn(coords, cfg.k)
    node_features = _positional_features(structure.chain_positions, cfg.pos_dim)
    n_nbr = neighbors.shape[1]
    edge_features = np.zeros((n, n_nbr, cfg.edge_dim), dtype=np.float64)
    if n_nbr > 0:
        offsets = coords[:, None, :] - coords[neighbors]
        dists = np.linalg.norm(offsets, axis=-1)
        edge_features[:, :, : cfg.rbf_size] = rbf_expand(dists, cfg)
        col = cfg.rbf_size
        for alpha in cfg.force_orders:
            res = _resultant_directions(coords, neighbors, alpha)
            edge_features[:, :, col] = (res[:, None, :] * res[neighbors]).sum(-1)
            col += 1
        edge_features[:, :, col] = dists
    return ProteinGraph(
        coords=coords,
        residue_types=structure.residue_types,
        node_features=node_features,
        neighbors=neighbors,
        edge_features=edge_features,
        config=cfg,
    )


def extract_pockets(
    ligand_coords, receptor_coords, threshold: float = CONTACT_THRESHOLD
) -> PocketSet:
    """All cross pairs strictly closer than the threshold, with their midpoints.

    Works on bound (docked) coordinates; raises NoContacts when no pair
    qualifies. Pair order is ligand-major, then receptor index.
    """
    x1 = np.asarray(ligand_coords, dtype=np.float64)
    x2 = np.asarray(receptor_coords, dtype=np.float64)
    diff = x1[:, None, :] - x2[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    pairs = np.argwhere(dist < threshold)
    if pairs.shape[0] == 0:
        raise NoContacts(
            f"no cross pair under {threshold} A (closest {dist.min():.3f} A)"
        )
    li, ri = pairs[:, 0], pairs[:, 1]
    mid = 0.5 * (x1[li] + x2[ri])
    return PocketSet(mid, li.astype(np.int64), ri.astype(np.int64))


def track_pockets(pockets: PocketSet, transform: RigidTransform, side: str) -> PocketSet:
    """Copy of the pocket set with midpoints carried along the named protein's motion."""
    if side not in ("ligand", "receptor"):
        raise ConfigError(f"side must be 'ligand' or 'receptor', got {side!r}")
    moved = transform.apply(pockets.midpoints).detach().cpu().numpy()
    return PocketSet(moved, pockets.ligand_indices.copy(), pockets.receptor_indices.copy())
