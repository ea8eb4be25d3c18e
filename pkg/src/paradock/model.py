"""Pairwise-independent equivariant encoder over two residue graphs.

Each protein carries invariant features H (N x hidden) and vector channels
V (N x hidden x 3, initialized to zero). Layers run an intra-protein message
block whose scalar pathway is aggregated by multi-head attention over each
node's in-edges, a gated vector/scalar update block, and a dense inter-protein
scalar update. Rigid motions of one input rotate only that protein's V and
leave all H untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn

from .errors import ConfigError
from .graphs import GraphConfig, ProteinGraph

VEC_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    embed: int = 64
    layers: int = 2
    heads: int = 16
    peak_blocks: int = 3      # number of summed 3x3 blocks in the pose head
    dropout: float = 0.1
    edge_dim: int = 24
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("hidden", "embed", "layers", "heads", "peak_blocks", "edge_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0 or (v == 0 and name != "layers"):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    @classmethod
    def from_graph_config(cls, gcfg: GraphConfig, **kwargs) -> "ModelConfig":
        kwargs.setdefault("edge_dim", gcfg.edge_dim)
        kwargs.setdefault("embed", gcfg.pos_dim)
        return cls(**kwargs)


def fc_stack(d_in: int, d_mid: int, d_out: int) -> nn.Sequential:
    """The FC block used throughout: Linear -> SiLU -> Linear."""
    return nn.Sequential(nn.Linear(d_in, d_mid), nn.SiLU(), nn.Linear(d_mid, d_out))


def _dropout(x: torch.Tensor, p: float, training: bool,
             rng: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout that honors an explicit generator when given one."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        return nn.functional.dropout(x, p, training=True)
    keep = (torch.rand(x.shape, generator=rng, dtype=x.dtype) >= p).to(x.dtype)
    return x * keep / (1.0 - p)


@dataclass(eq=False)
class GraphTensors:
    """A ProteinGraph converted to tensors once per forward pass."""

    types: torch.Tensor          # (N,) long
    node_features: torch.Tensor  # (N, pos_dim)
    coords: torch.Tensor         # (N, 3)
    neighbors: torch.Tensor      # (N, n_nbr) long
    directions: torch.Tensor     # (N, n_nbr, 3) unit vectors neighbor -> center
    edge_features: torch.Tensor  # (N, n_nbr, edge_dim)

    @classmethod
    def from_graph(cls, graph: ProteinGraph, dtype: torch.dtype) -> "GraphTensors":
        coords = torch.as_tensor(graph.coords, dtype=dtype)
        nbr = torch.as_tensor(graph.neighbors, dtype=torch.long)
        if nbr.shape[1] > 0:
            offsets = coords.unsqueeze(1) - coords[nbr]
            dist = torch.linalg.norm(offsets, dim=-1, keepdim=True)
            dirs = torch.where(dist > 1e-12, offsets / torch.clamp(dist, min=1e-30), offsets * 0.0)
        else:
            dirs = torch.zeros((coords.shape[0], 0, 3), dtype=dtype)
        return cls(
            types=torch.as_tensor(graph.residue_types, dtype=torch.long),
            node_features=torch.as_tensor(graph.node_features, dtype=dtype),
            coords=coords,
            neighbors=nbr,
            directions=dirs,
            edge_features=torch.as_tensor(graph.edge_features, dtype=dtype),
        )


class GraphAttention(nn.Module):
    """Multi-head attention over each node's in-edges.

    Per head, q/k/v keep the full feature width (as configured, not divided by
    the head count); scores are scaled by 1/sqrt(width) and softmaxed over the
    neighbor axis.
    """

    def __init__(self, hidden: int, heads: int, dropout: float):
        super().__init__()
        self.hidden = hidden
        self.heads = heads
        self.dropout = dropout
        self.fc_qkv = fc_stack(hidden, hidden, 3 * heads * hidden)
        self.fc_out = fc_stack(heads * hidden, hidden, hidden)

    def forward(self, messages, training: bool = False, rng: torch.Generator | None = None,
                return_weights: bool = False):
        n, k, h = messages.shape
        qkv = self.fc_qkv(messages).reshape(n, k, 3, self.heads, h)
        q, key, val = qkv.unbind(2)
        scores = (q * key).sum(-1) / math.sqrt(h)          # (N, k, U)
        alpha = torch.softmax(scores, dim=1)
        mixed = (alpha.unsqueeze(-1) * val).reshape(n, k, self.heads * h)
        mixed = _dropout(mixed, self.dropout, training, rng)
        per_edge = self.fc_out(mixed)                        # (N, k, H)
        aggregated = per_edge.mean(dim=1)
        if return_weights:
            return aggregated, alpha
        return aggregated


class MessageBlock(nn.Module):
    """Edge messages, attention-aggregated scalar update, gated vector update."""

    def __init__(self, hidden: int, edge_dim: int, heads: int, dropout: float):
        super().__init__()
        self.fc_message = fc_stack(hidden + edge_dim, hidden, hidden)
        self.attention = GraphAttention(hidden, heads, dropout)
        self.gate_proj = nn.Linear(hidden, 2 * hidden)

    def edge_message(self, h_j, edge_feat):
        """Raw per-edge message m = FC([h_j, e]); accepts any leading shape."""
        return self.fc_message(torch.cat([h_j, edge_feat], dim=-1))

    def forward(self, h, v, gt: GraphTensors, training: bool = False,
                rng: torch.Generator | None = None):
        if gt.neighbors.shape[1] == 0:
            return h, v
        m = self.edge_message(h[gt.neighbors], gt.edge_features)   # (N, k, H)
        h_new = h + self.attention(m, training=training, rng=rng)
        g_vv, g_vs = self.gate_proj(m).chunk(2, dim=-1)            # (N, k, H) each
        v_j = v[gt.neighbors]                                      # (N, k, H, 3)
        dv = (v_j * g_vv.unsqueeze(-1)).sum(1)
        dv = dv + (g_vs.unsqueeze(-1) * gt.directions.unsqueeze(2)).sum(1)
        return h_new, v + dv


class UpdateBlock(nn.Module):
    """Per-node scalar/vector mixing with channel-mixed vector norms as gates."""

    def __init__(self, hidden: int):
        super().__init__()
        self.mix_u = nn.Linear(hidden, hidden, bias=False)
        self.mix_v = nn.Linear(hidden, hidden, bias=False)
        self.fc = fc_stack(2 * hidden, hidden, 3 * hidden)

    def forward(self, h, v):
        u_mix = torch.einsum("oc,ncd->nod", self.mix_u.weight, v)
        v_mix = torch.einsum("oc,ncd->nod", self.mix_v.weight, v)
        v_norm = torch.sqrt((v_mix * v_mix).sum(-1) + VEC_NORM_EPS)
        a = self.fc(torch.cat([h, v_norm], dim=-1))
        a_ss, a_sv, a_vv = a.chunk(3, dim=-1)
        h_new = h + a_ss + a_sv * (u_mix * v_mix).sum(-1)
        v_new = v + a_vv.unsqueeze(-1) * u_mix
        return h_new, v_new


class CrossUpdate(nn.Module):
    """Dense inter-protein gate on invariant features; shared weights per layer."""

    def __init__(self, hidden: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(hidden, hidden))
        self.fc = fc_stack(hidden, hidden, hidden)

    def gate(self, h_self, h_other):
        return torch.sigmoid((h_self @ self.weight @ h_other.T).mean(dim=1))

    def forward(self, h1, h2):
        b1 = self.gate(h1, h2)
        b2 = self.gate(h2, h1)
        return h1 + b1.unsqueeze(-1) * self.fc(h1), h2 + b2.unsqueeze(-1) * self.fc(h2)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.message = MessageBlock(cfg.hidden, cfg.edge_dim, cfg.heads, cfg.dropout)
        self.update = UpdateBlock(cfg.hidden)
        self.cross = CrossUpdate(cfg.hidden)


class InvariantHead(nn.Module):
    """Gated sum over nodes producing the 4 scalar interface parameters."""

    def __init__(self, hidden: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(hidden, hidden))
        self.fc = fc_stack(hidden, hidden, 4)

    def forward(self, h_self, h_other):
        gate = torch.sigmoid((h_self @ self.weight @ h_other.T).mean(dim=1))
        return self.fc(h_self * gate.unsqueeze(-1)).sum(dim=0)


class VectorHead(nn.Module):
    """Scalar-gated sum of vector channels into (3M+1) output 3-vectors."""

    def __init__(self, hidden: int, peak_blocks: int):
        super().__init__()
        self.linear = nn.Linear(hidden, 3 * peak_blocks + 1, bias=False)

    def forward(self, h, v):
        gated = h.unsqueeze(-1) * v                        # (N, H, 3)
        return torch.einsum("oh,nhd->od", self.linear.weight, gated)


class PairEncoder(nn.Module):
    """The full two-protein encoder plus its interface heads."""

    def __init__(self, cfg: ModelConfig, seed: int | None = 0):
        super().__init__()
        self.cfg = cfg
        self.residue_embed = nn.Embedding(21, cfg.embed)
        self.input_proj = nn.Linear(2 * cfg.embed, cfg.hidden)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        self.invariant_head = InvariantHead(cfg.hidden)
        self.vector_head = VectorHead(cfg.hidden, cfg.peak_blocks)
        self.to(cfg.torch_dtype)
        if seed is not None:
            init_parameters(self, seed)

    def embed_nodes(self, gt: GraphTensors):
        if gt.node_features.shape[1] != self.cfg.embed:
            raise ConfigError(
                f"graph positional width {gt.node_features.shape[1]} does not match "
                f"model embed width {self.cfg.embed}"
            )
        feats = torch.cat([self.residue_embed(gt.types), gt.node_features], dim=-1)
        h = self.input_proj(feats)
        v = torch.zeros(h.shape[0], self.cfg.hidden, 3, dtype=h.dtype)
        return h, v

    def forward(self, g1: ProteinGraph, g2: ProteinGraph, training: bool = False,
                rng: torch.Generator | None = None):
        dt = self.cfg.torch_dtype
        t1 = GraphTensors.from_graph(g1, dt)
        t2 = GraphTensors.from_graph(g2, dt)
        h1, v1 = self.embed_nodes(t1)
        h2, v2 = self.embed_nodes(t2)
        for layer in self.layers:
            h1, v1 = layer.message(h1, v1, t1, training=training, rng=rng)
            h2, v2 = layer.message(h2, v2, t2, training=training, rng=rng)
            h1, v1 = layer.update(h1, v1)
            h2, v2 = layer.update(h2, v2)
            h1, h2 = layer.cross(h1, h2)
        return (h1, v1), (h2, v2)

    def run_heads(self, g1: ProteinGraph, g2: ProteinGraph, training: bool = False,
                  rng: torch.Generator | None = None):
        """Forward pass plus both heads: returns (F1, F2, E1, E2)."""
        (h1, v1), (h2, v2) = self.forward(g1, g2, training=training, rng=rng)
        f1 = self.invariant_head(h1, h2)
        f2 = self.invariant_head(h2, h1)
        e1 = self.vector_head(h1, v1)
        e2 = self.vector_head(h2, v2)
        return f1, f2, e1, e2

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Named parameter arrays as little-endian float64, for checkpointing."""
        return {
            name: p.detach().cpu().numpy().astype("<f8")
            for name, p in self.named_parameters()
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ConfigError(f"parameter name mismatch: missing {missing}, extra {extra}")
        with torch.no_grad():
            for name, p in params.items():
                arr = np.asarray(arrays[name])
                if tuple(arr.shape) != tuple(p.shape):
                    raise ConfigError(
                        f"shape mismatch for {name}: file {arr.shape} vs model {tuple(p.shape)}"
                    )
                p.copy_(torch.as_tensor(arr, dtype=p.dtype))

    def config_dict(self) -> dict:
        return asdict(self.cfg)


def init_parameters(model: nn.Module, seed: int) -> None:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init over every parameter.

    fan_in is the input width of the owning layer (embedding rows use the
    embedding width; standalone square gate matrices use their last dimension).
    """
    gen = torch.Generator().manual_seed(seed)
    for mod in model.modules():
        if isinstance(mod, nn.Linear):
            bound = 1.0 / math.sqrt(mod.in_features)
            with torch.no_grad():
                mod.weight.uniform_(-bound, bound, generator=gen)
                if mod.bias is not None:
                    mod.bias.uniform_(-bound, bound, generator=gen)
        elif isinstance(mod, nn.Embedding):
            bound = 1.0 / math.sqrt(mod.embedding_dim)
            with torch.no_grad():
                mod.weight.uniform_(-bound, bound, generator=gen)
        elif isinstance(mod, (CrossUpdate, InvariantHead)):
            bound = 1.0 / math.sqrt(mod.weight.shape[-1])
            with torch.no_grad():
                mod.weight.uniform_(-bound, bound, generator=gen)
