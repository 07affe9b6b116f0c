"""Differentiable core: time encoding, GRU memory, attention embedding, NCN head."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import torch
from torch import Tensor, nn

from .events import NeighborDictionary, recent_neighbors


class CausalityError(ValueError):
    """A time delta went negative: something is using the future."""


class UsageError(RuntimeError):
    pass


class TimeEncoder(nn.Module):
    """``cos(freq * dt + phase)`` with learnable frequencies and phases.

    Frequencies start on a geometric grid ``10 ** -linspace(0, 9, dim)``
    so that both fast and slow time scales are represented.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.freq = nn.Parameter(torch.from_numpy(1.0 / 10 ** np.linspace(0, 9, dim)))
        self.phase = nn.Parameter(torch.zeros(dim, dtype=torch.float64))

    def forward(self, dt: Tensor) -> Tensor:
        if torch.any(dt < 0):
            raise CausalityError("negative time delta passed to the time encoder")
        return torch.cos(dt.unsqueeze(-1) * self.freq + self.phase)


@dataclass
class MemoryState:
    memory: Tensor  # [num_nodes, mem_dim], never requires grad
    last_update: np.ndarray  # [num_nodes] float64

    @classmethod
    def zeros(cls, num_nodes: int, mem_dim: int, dtype=torch.float32) -> "MemoryState":
        return cls(torch.zeros(num_nodes, mem_dim, dtype=dtype), np.zeros(num_nodes))

    def copy(self) -> "MemoryState":
        return MemoryState(self.memory.clone(), self.last_update.copy())


class MemoryUpdater(nn.Module):
    """Role-specific GRU cells updating source and destination memories.

    The message of an event for one endpoint is
    ``[edge_feat || time_enc(t - last_update) || counterpart memory]``.
    """

    def __init__(self, mem_dim: int, time_dim: int, feat_dim: int):
        super().__init__()
        msg_dim = feat_dim + time_dim + mem_dim
        self.upd_src = nn.GRUCell(msg_dim, mem_dim)
        self.upd_dst = nn.GRUCell(msg_dim, mem_dim)


def _rounds(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Wave number per event so that each node appears at most once per wave.

    Replaying waves in order is equivalent to replaying events one by one.
    """
    last: dict[int, int] = {}
    out = np.empty(len(src), dtype=np.int64)
    for k, (s, d) in enumerate(zip(src.tolist(), dst.tolist())):
        r = max(last.get(s, -1), last.get(d, -1)) + 1
        out[k] = r
        last[s] = last[d] = r
    return out


def memory_update(state: MemoryState, updater: MemoryUpdater, time_enc: TimeEncoder,
                  src, dst, t, feats) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Apply a batch of events to memory in timestamp order.

    Returns ``(memory, last_update, touched)``: a new memory tensor that is
    differentiable with respect to the updater (the incoming state is a
    constant), the new last-update times and the sorted touched node ids.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    t = np.asarray(t, dtype=np.float64)
    if len(src) == 0:
        return state.memory, state.last_update.copy(), np.zeros(0, dtype=np.int64)
    touched, inv = np.unique(np.concatenate([src, dst]), return_inverse=True)
    ls, ld = inv[: len(src)], inv[len(src):]
    last = state.last_update[touched].copy()
    first_t = np.full(len(touched), np.inf)
    np.minimum.at(first_t, ls, t)
    np.minimum.at(first_t, ld, t)
    if np.any(first_t < last):
        raise CausalityError("batch event precedes a node's last memory update")
    dtype = state.memory.dtype
    feats = torch.as_tensor(np.asarray(feats, dtype=np.float64).reshape(len(src), -1), dtype=dtype)
    local = state.memory[torch.from_numpy(touched)]
    waves = _rounds(src, dst)
    for r in range(int(waves.max()) + 1):
        ev = np.flatnonzero(waves == r)
        s, d = ls[ev], ld[ev]
        te = t[ev]
        loop = s == d
        ts = torch.from_numpy(s)
        td = torch.from_numpy(d)
        enc_s = time_enc(torch.as_tensor(te - last[s], dtype=time_enc.freq.dtype)).to(dtype)
        enc_d = time_enc(torch.as_tensor(te - last[d], dtype=time_enc.freq.dtype)).to(dtype)
        fe = feats[torch.from_numpy(ev)]
        mem_s, mem_d = local[ts], local[td]
        new_s = updater.upd_src(torch.cat([fe, enc_s, mem_d], dim=1), mem_s)
        keep = ~loop
        rows = [ts]
        vals = [new_s]
        if keep.any():
            kd = torch.from_numpy(keep)
            new_d = updater.upd_dst(torch.cat([fe[kd], enc_d[kd], mem_s[kd]], dim=1), mem_d[kd])
            rows.append(td[kd])
            vals.append(new_d)
        local = local.index_put((torch.cat(rows),), torch.cat(vals))
        last[s] = te
        last[d] = te
    memory = state.memory.index_put((torch.from_numpy(touched),), local)
    new_last = state.last_update.copy()
    new_last[touched] = last
    return memory, new_last, touched


class GraphAttentionEmbedding(nn.Module):
    """One multi-head attention layer over a node's recent interactions.

    Keys and values read ``[neighbor memory || edge feature || time_enc(t - t')]``;
    the query reads the node's own memory.  A root projection of the own
    memory is added to the attention output, so isolated nodes still get
    an embedding.
    """

    def __init__(self, mem_dim: int, feat_dim: int, time_dim: int, emb_dim: int, heads: int = 2):
        super().__init__()
        if emb_dim % heads:
            raise ValueError("emb_dim must be divisible by heads")
        self.heads = heads
        self.head_dim = emb_dim // heads
        kv_dim = mem_dim + feat_dim + time_dim
        self.query = nn.Linear(mem_dim, emb_dim)
        self.key = nn.Linear(kv_dim, emb_dim)
        self.value = nn.Linear(kv_dim, emb_dim)
        self.out = nn.Linear(emb_dim, emb_dim)
        self.root = nn.Linear(mem_dim, emb_dim, bias=False)

    def forward(self, h_self: Tensor, kv: Tensor, mask: Tensor) -> Tensor:
        m, n = mask.shape
        H, C = self.heads, self.head_dim
        q = self.query(h_self).view(m, 1, H, C)
        k = self.key(kv).view(m, n, H, C)
        v = self.value(kv).view(m, n, H, C)
        score = (q * k).sum(-1) / math.sqrt(C)  # [m, n, H]
        score = score.masked_fill(~mask.unsqueeze(-1), -1e9)
        has_any = mask.any(dim=1)
        alpha = torch.softmax(score, dim=1)
        alpha = torch.where(has_any.view(m, 1, 1), alpha, torch.zeros_like(alpha))
        agg = (alpha.unsqueeze(-1) * v).sum(1).reshape(m, H * C)
        return self.out(agg) + self.root(h_self)


def gather_neighbors(d: NeighborDictionary, nodes: Sequence[int], n: int):
    """Padded ``[len(nodes), n]`` arrays of neighbor id, time, edge ref and mask."""
    m = len(nodes)
    nbr = np.zeros((m, max(n, 1)), dtype=np.int64)
    ts = np.zeros((m, max(n, 1)), dtype=np.float64)
    ref = np.full((m, max(n, 1)), -1, dtype=np.int64)
    mask = np.zeros((m, max(n, 1)), dtype=bool)
    for r, u in enumerate(nodes):
        for c, (w, tw, e) in enumerate(recent_neighbors(d, int(u), n)):
            nbr[r, c], ts[r, c], ref[r, c], mask[r, c] = w, tw, e, True
    return nbr, ts, ref, mask


_MIN_ROWS = 8


def compute_embeddings(memory: Tensor, embedder: GraphAttentionEmbedding, time_enc: TimeEncoder,
                       d: NeighborDictionary, nodes, t, edge_feats: np.ndarray | None,
                       num_neighbors: int) -> Tensor:
    """Embeddings ``[len(nodes), emb_dim]`` at query time ``t`` (scalar or per node).

    ``edge_feats`` is indexed by global event ordinal; ``None`` or zero width
    means unattributed events.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    m = len(nodes)
    if 0 < m < _MIN_ROWS:
        # very short inputs take a different BLAS path; pad so rows match a larger batch bitwise
        pad = np.concatenate([nodes, np.full(_MIN_ROWS - m, nodes[0])])
        t_pad = np.broadcast_to(np.asarray(t, dtype=np.float64), (m,))
        t_pad = np.concatenate([t_pad, np.full(_MIN_ROWS - m, t_pad[0])])
        return compute_embeddings(memory, embedder, time_enc, d, pad, t_pad, edge_feats, num_neighbors)[:m]
    dtype = memory.dtype
    nbr, tn, ref, mask = gather_neighbors(d, nodes, num_neighbors)
    tq = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(nodes),))[:, None]
    dt = np.where(mask, tq - tn, 0.0)
    h_self = memory[torch.from_numpy(nodes)]
    h_nbr = memory[torch.from_numpy(nbr)]
    enc = time_enc(torch.from_numpy(dt).to(time_enc.freq.dtype)).to(dtype)
    parts = [h_nbr]
    if edge_feats is not None and edge_feats.shape[1]:
        fe = np.where(mask[..., None], edge_feats[np.maximum(ref, 0)], 0.0)
        parts.append(torch.as_tensor(fe, dtype=dtype))
    parts.append(enc)
    kv = torch.cat(parts, dim=-1)
    return embedder(h_self, kv, torch.from_numpy(mask))


def ncn_aggregate(embeddings: Mapping[int, Tensor], cns: Mapping, weighted: bool = False) -> dict:
    """Sum of CN embeddings per hop pair for a single pair.

    ``cns`` maps hop pairs to :class:`~tncn.cn.CnVector` or ``{node: weight}``.
    """
    dim = next(iter(embeddings.values())).shape[-1] if embeddings else 0
    out = {}
    for hop, vec in cns.items():
        items = vec.as_dict() if hasattr(vec, "as_dict") else dict(vec)
        acc = torch.zeros(dim, dtype=next(iter(embeddings.values())).dtype) if embeddings else torch.zeros(0)
        for node, w in items.items():
            acc = acc + (w if weighted else 1) * embeddings[node]
        out[tuple(hop)] = acc
    return out


def ncn_aggregate_batch(emb_local: Tensor, block: sp.csr_matrix, weighted: bool = False) -> Tensor:
    """``block @ emb_local`` with ``block`` an (n_pairs x N_local) CN matrix."""
    coo = block.tocoo()
    vals = coo.data.astype(np.float64) if weighted else np.ones(coo.nnz)
    idx = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    mat = torch.sparse_coo_tensor(idx, torch.from_numpy(vals).to(emb_local.dtype), size=coo.shape,
                                  check_invariants=False)
    return torch.sparse.mm(mat, emb_local)


def pair_representation(emb_u: Tensor, emb_v: Tensor, ncn_blocks: Mapping, hop_order: Sequence) -> Tensor:
    """``[emb_u * emb_v || NCN blocks in hop order]``; missing hop pairs give zeros."""
    x = emb_u * emb_v
    parts = [x]
    for hop in hop_order:
        block = ncn_blocks.get(tuple(hop))
        if block is None:
            block = torch.zeros_like(x)
        if block.shape != x.shape:
            raise ValueError(f"NCN block {tuple(hop)} has shape {tuple(block.shape)}, expected {tuple(x.shape)}")
        parts.append(block)
    return torch.cat(parts, dim=-1)


class ProjectionHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(), nn.Linear(hidden, 1))

    def forward(self, repr_: Tensor) -> Tensor:
        return self.mlp(repr_).squeeze(-1)


def predict(head: ProjectionHead, repr_: Tensor) -> Tensor:
    return torch.sigmoid(head(repr_))


class TNCN(nn.Module):
    """Parameter container; the forward logic lives in :mod:`tncn.pipeline`."""

    GROUPS = ("time_encoder", "memory_updater", "embedder", "head")

    def __init__(self, feat_dim: int, mem_dim: int = 100, emb_dim: int = 100, time_dim: int = 100,
                 hop_order: Sequence = (), heads: int = 2, head_hidden: int | None = None,
                 dtype=torch.float32):
        super().__init__()
        self.hop_order = [tuple(h) for h in hop_order]
        self.time_encoder = TimeEncoder(time_dim)
        self.memory_updater = MemoryUpdater(mem_dim, time_dim, feat_dim)
        self.embedder = GraphAttentionEmbedding(mem_dim, feat_dim, time_dim, emb_dim, heads)
        in_dim = emb_dim * (1 + len(self.hop_order))
        self.head = ProjectionHead(in_dim, head_hidden or emb_dim)
        self.to(dtype)
        self.streaming_eval = False

    def groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        return {g: list(getattr(self, g).named_parameters()) for g in self.GROUPS}


def backward(model: TNCN, loss: Tensor) -> dict[str, dict[str, Tensor]]:
    """Backpropagate ``loss`` and return gradients grouped by parameter group."""
    if model.streaming_eval:
        raise UsageError("backward called during streaming evaluation")
    if not isinstance(loss, Tensor) or loss.grad_fn is None:
        raise UsageError("backward needs a loss produced by a recorded forward pass")
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {}
    for g, params in model.groups().items():
        grads[g] = {name: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
                    for name, p in params}
    return grads
