"""Batched multi-hop common-neighbor extraction over sparse adjacency powers.

The neighbor dictionary of a batch is compressed into a local integer CSR
matrix ``A`` whose entries are pairwise interaction frequencies.  Rows of
``A**i`` and ``A**j`` for a pair's endpoints are multiplied element-wise to
get (i, j)-hop common neighbors.  Matrix powers count *walks*; for the hop
pairs (1, 2), (2, 1) and (2, 2) the walk counts are corrected so that every
(u -> x, v -> x) path pair concatenates into a simple u-x-v path.

Everything here is exact integer arithmetic on ``int64``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .events import NeighborDictionary

MAX_HOP = 2
DEFAULT_HOPS = ((0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2))


class UnsupportedOrderError(ValueError):
    """Hop orders beyond 2 have no exact walk-to-path correction here."""


class MissingNodeError(KeyError):
    pass


class DegenerateHopError(ValueError):
    pass


@dataclass
class BatchIndex:
    nodes: np.ndarray  # local id -> node id
    forward: dict = field(default_factory=dict)  # node id -> local id

    @classmethod
    def from_nodes(cls, nodes: Sequence[int]) -> "BatchIndex":
        nodes = np.asarray(nodes, dtype=np.int64)
        return cls(nodes, {int(n): i for i, n in enumerate(nodes.tolist())})

    @property
    def size(self) -> int:
        return len(self.nodes)

    def local(self, node: int) -> int:
        try:
            return self.forward[int(node)]
        except KeyError:
            raise MissingNodeError(f"node {node} is not in the batch universe") from None

    def local_many(self, nodes) -> np.ndarray:
        return np.fromiter((self.local(n) for n in nodes), dtype=np.int64, count=len(nodes))


@dataclass
class CnVector:
    """Sparse CN result for one pair: parallel arrays of node ids and weights."""

    hops: tuple
    nodes: np.ndarray
    weights: np.ndarray
    clamped: int = 0

    def as_dict(self) -> dict[int, int]:
        return {int(n): int(w) for n, w in zip(self.nodes, self.weights)}

    def __len__(self) -> int:
        return len(self.nodes)

    def to_json(self, pair) -> dict:
        return {"pair": list(pair), "hops": list(self.hops),
                "cns": [{"node": n, "weight": w} for n, w in sorted(self.as_dict().items())]}


def _empty(n_rows: int, n_cols: int) -> sp.csr_matrix:
    return sp.csr_matrix((n_rows, n_cols), dtype=np.int64)


def build_local_adjacency(d: NeighborDictionary, batch_pairs: Iterable, k_hop_max: int = MAX_HOP):
    """Reindex the batch neighborhood and fill its frequency matrix.

    The universe holds every endpoint (first-appearance order) followed by
    the nodes reached within ``k_hop_max`` hops, one sorted layer at a time.
    Returns ``(BatchIndex, A)`` with ``A`` a symmetric ``int64`` CSR matrix
    without diagonal.
    """
    order: list[int] = []
    seen: set[int] = set()
    for pair in batch_pairs:
        for node in pair:
            node = int(node)
            if node not in seen:
                seen.add(node)
                order.append(node)
    frontier = list(order)
    for _ in range(k_hop_max):
        layer = set()
        for node in frontier:
            for nbr in d.neighbors(node):
                if nbr not in seen:
                    layer.add(nbr)
        if not layer:
            break
        frontier = sorted(layer)
        seen.update(layer)
        order.extend(frontier)
    index = BatchIndex.from_nodes(order)
    fwd = index.forward
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    for node in order:
        row = d.neighbors(node)
        cols = sorted((fwd[n], q) for n, q in row.items() if n in fwd)
        indices.extend(c for c, _ in cols)
        data.extend(q for _, q in cols)
        indptr.append(len(indices))
    n = index.size
    A = sp.csr_matrix((np.asarray(data, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                       np.asarray(indptr, dtype=np.int64)), shape=(n, n))
    return index, A


def khop_powers(A: sp.csr_matrix, k_hop_max: int) -> list:
    """``[I, A, A @ A, ...]`` up to ``k_hop_max``."""
    if k_hop_max > MAX_HOP:
        raise UnsupportedOrderError(
            f"k_hop_max={k_hop_max}: exact path corrections are only defined up to (2,2)-hop")
    if k_hop_max < 0:
        raise ValueError("k_hop_max must be non-negative")
    n = A.shape[0]
    powers = [sp.identity(n, dtype=np.int64, format="csr")]
    for _ in range(k_hop_max):
        nxt = powers[-1] @ A if len(powers) > 1 else A.copy()
        nxt = sp.csr_matrix(nxt, dtype=np.int64)
        nxt.sort_indices()
        powers.append(nxt)
    return powers


# --- batched kernels over row-index arrays -----------------------------------------------------


def _check_hops(powers, i, j):
    top = len(powers) - 1
    if not (0 <= i <= top and 0 <= j <= top):
        raise UnsupportedOrderError(f"hops ({i},{j}) need powers up to {max(i, j)}, have {top}")


def raw_cn_rows(powers, iu: np.ndarray, iv: np.ndarray, i: int, j: int) -> sp.csr_matrix:
    """Walk-based CN for many pairs: row r is ``A^i[iu[r]] * A^j[iv[r]]``."""
    _check_hops(powers, i, j)
    n = powers[0].shape[0]
    if len(iu) == 0:
        return _empty(0, n)
    out = powers[i][iu].multiply(powers[j][iv])
    return sp.csr_matrix(out, dtype=np.int64)


def _finish(M, iu, iv) -> sp.csr_matrix:
    """Drop the pair's own endpoints and non-positive entries.

    Negative entries would mean a correction term over-subtracted, which
    is a bug rather than a data condition.
    """
    M = sp.coo_matrix(M)
    if M.nnz and M.data.min() < 0:
        raise ArithmeticError("path correction produced a negative count")
    keep = (M.col != iu[M.row]) & (M.col != iv[M.row]) & (M.data > 0)
    out = sp.csr_matrix((M.data[keep], (M.row[keep], M.col[keep])), shape=M.shape, dtype=np.int64)
    out.sort_indices()
    return out


def _pair_q(A, iu, iv) -> np.ndarray:
    if len(iu) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.asarray(A[iu, iv], dtype=np.int64).ravel()


def _scale_rows(M, s):
    return sp.diags(s.astype(np.int64), format="csr", dtype=np.int64) @ M


def corrected_rows_12(powers, iu, iv) -> sp.csr_matrix:
    """Path-based (1,2)-hop CN weights.

    For candidate ``x`` the raw count ``A[u,x] * A2[v,x]`` includes walks
    ``v-u-x`` (intermediate equals ``u``), contributing ``q(u,v) q(u,x)^2``,
    and at ``x = v`` the whole entry comes from closed walks ``v-w-v``; the
    latter is removed by dropping the endpoint columns.
    """
    _check_hops(powers, 1, 2)
    A, A2 = powers[1], powers[2]
    if len(iu) == 0:
        return _empty(0, A.shape[0])
    Au = A[iu]
    quv = _pair_q(A, iu, iv)
    M = Au.multiply(A2[iv]) - _scale_rows(Au.multiply(Au), quv)
    return _finish(M, iu, iv)


def corrected_rows_21(powers, iu, iv) -> sp.csr_matrix:
    return corrected_rows_12(powers, iv, iu)


def corrected_rows_22(powers, iu, iv) -> sp.csr_matrix:
    """Path-based (2,2)-hop CN weights.

    Counts path pairs ``u-a-x``, ``v-b-x`` with ``u, v, a, b, x`` distinct.
    ``a != u, x`` and ``b != v, x`` hold for any walk without self-loops, so
    inclusion-exclusion runs over the three coincidences ``a = v``,
    ``b = u`` and ``a = b``:

        S_u S_v - q_uv A[v,x] S_v - q_uv A[u,x] S_u
                - sum_a A[u,a] A[v,a] A[a,x]^2 + q_uv^2 A[u,x] A[v,x]

    where ``S_u = A2[u, x]``.  The pairwise intersections involving
    ``a = b`` are empty (they would force ``a = v = b`` or ``b = u = a``).
    """
    _check_hops(powers, 2, 2)
    A, A2 = powers[1], powers[2]
    if len(iu) == 0:
        return _empty(0, A.shape[0])
    Au, Av = A[iu], A[iv]
    Su, Sv = A2[iu], A2[iv]
    quv = _pair_q(A, iu, iv)
    shared = Au.multiply(Av)
    M = (Su.multiply(Sv)
         - _scale_rows(Av.multiply(Sv), quv)
         - _scale_rows(Au.multiply(Su), quv)
         - sp.csr_matrix(shared) @ A.multiply(A)
         + _scale_rows(shared, quv * quv))
    return _finish(M, iu, iv)


def corrected_rows(powers, iu, iv, i: int, j: int) -> sp.csr_matrix:
    """Exact path-pair CN weights for any ``(i, j)`` with ``i, j <= 2``."""
    iu = np.asarray(iu, dtype=np.int64)
    iv = np.asarray(iv, dtype=np.int64)
    _check_hops(powers, i, j)
    if (i, j) == (1, 2):
        out = corrected_rows_12(powers, iu, iv)
    elif (i, j) == (2, 1):
        out = corrected_rows_21(powers, iu, iv)
    elif (i, j) == (2, 2):
        out = corrected_rows_22(powers, iu, iv)
    else:
        # (0,*), (*,0) and (1,1): walks of length <= 2 without self-loops are paths
        out = raw_cn_rows(powers, iu, iv, i, j)
        if (i, j) == (0, 0):
            out = _empty(len(iu), powers[0].shape[0])
    same = iu == iv
    if same.any():
        # a node paired with itself has no common-neighbor structure
        mask = sp.diags((~same).astype(np.int64), format="csr", dtype=np.int64)
        out = mask @ out
        out.eliminate_zeros()
    return out


def exact_hop_rows(powers, iu, iv, k: int):
    """Nodes first reached at hop ``k`` from both sides.

    With ``B = A + I``, cumulative CNs are ``B^k[u] * B^k[v]``; the exact
    k-hop shell is their support minus the support of the ``k-1`` product,
    endpoints excluded.  Returns ``(matrix, clamped)`` where ``clamped``
    counts entries whose numeric difference was negative.
    """
    if k == 0:
        raise DegenerateHopError("k=0 has no shell; use the (0,0) hop pair instead")
    if not 1 <= k <= len(powers) - 1:
        raise UnsupportedOrderError(f"k={k} needs powers up to {k}")
    iu = np.asarray(iu, dtype=np.int64)
    iv = np.asarray(iv, dtype=np.int64)
    I, A = powers[0], powers[1]
    B = [I, sp.csr_matrix(I + A)]
    if k == 2:
        B.append(sp.csr_matrix(I + 2 * A + powers[2]))
    hi = B[k][iu].multiply(B[k][iv]).tocsr()
    lo = B[k - 1][iu].multiply(B[k - 1][iv]).tocsr()
    diff = sp.csr_matrix(hi - lo)
    clamped = int((diff.data < 0).sum())
    shell = hi.copy()
    shell.data = np.ones_like(shell.data)
    lo_ind = lo.copy()
    lo_ind.data = np.ones_like(lo_ind.data)
    new = sp.csr_matrix(shell - lo_ind)
    new.data[new.data < 0] = 0
    out = sp.csr_matrix(new.multiply(hi), dtype=np.int64)
    return _finish(out, iu, iv), clamped


# --- per-pair wrappers -------------------------------------------------------------------------


def _vector(M, index: BatchIndex, hops, clamped=0) -> CnVector:
    row = sp.csr_matrix(M[0])
    return CnVector(tuple(hops), index.nodes[row.indices].copy(), row.data.astype(np.int64), clamped)


def _locals(index, u, v):
    return np.array([index.local(u)]), np.array([index.local(v)])


def raw_cn(powers, index: BatchIndex, u, v, i: int, j: int) -> CnVector:
    iu, iv = _locals(index, u, v)
    return _vector(raw_cn_rows(powers, iu, iv, i, j), index, (i, j))


def corrected_cn(powers, index: BatchIndex, u, v, i: int, j: int) -> CnVector:
    iu, iv = _locals(index, u, v)
    return _vector(corrected_rows(powers, iu, iv, i, j), index, (i, j))


def corrected_cn_12(powers, index, u, v) -> CnVector:
    return corrected_cn(powers, index, u, v, 1, 2)


def corrected_cn_21(powers, index, u, v) -> CnVector:
    return corrected_cn(powers, index, u, v, 2, 1)


def corrected_cn_22(powers, index, u, v) -> CnVector:
    return corrected_cn(powers, index, u, v, 2, 2)


def exact_hop_cn(powers, index: BatchIndex, u, v, k: int) -> CnVector:
    iu, iv = _locals(index, u, v)
    M, clamped = exact_hop_rows(powers, iu, iv, k)
    return _vector(M, index, (k, k), clamped)


# --- batch entry point ------------------------------------------------------------------------


@dataclass
class BatchCn:
    index: BatchIndex
    iu: np.ndarray
    iv: np.ndarray
    blocks: dict  # (i, j) -> csr (n_pairs x N_local)


def extract_batch(d: NeighborDictionary, pairs: Sequence, hop_order: Sequence = DEFAULT_HOPS,
                  correction: bool = True) -> BatchCn:
    """CN matrices for every pair and hop pair, sharing one set of powers."""
    hop_order = [tuple(h) for h in hop_order]
    k = max((max(h) for h in hop_order), default=0)
    pairs = [(int(a), int(b)) for a, b in pairs]
    index, A = build_local_adjacency(d, pairs, k_hop_max=k)
    powers = khop_powers(A, k)
    iu = index.local_many([a for a, _ in pairs])
    iv = index.local_many([b for _, b in pairs])
    rows = corrected_rows if correction else raw_cn_rows
    blocks = {h: rows(powers, iu, iv, *h) for h in hop_order}
    return BatchCn(index, iu, iv, blocks)


def cn_json(pair, vec: CnVector, id_map: dict | None = None) -> str:
    inverse = {v: k for k, v in (id_map or {}).items()}
    payload = vec.to_json(pair)
    if inverse:
        for rec in payload["cns"]:
            rec["node"] = inverse.get(rec["node"], rec["node"])
    return json.dumps(payload)
