"""Seeded synthetic temporal graphs standing in for benchmark datasets.

``bipartite-triadic``
    Users and items in drifting communities.  Most events close a recent
    user-item-user-item path, so the new pair has a (1,2)- and a
    (2,1)-hop common neighbor even though a bipartite graph never has
    (1,1)-hop ones.
``periodic``
    A fixed pool of pairs, each recurring with its own period and jitter.
``erdos-temporal``
    Uniform random pairs, one candidate slot per timestamp, each kept with
    probability ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventLog, NeighborDictionary, chronological_split

KINDS = ("bipartite-triadic", "periodic", "erdos-temporal")


class SynthParamError(ValueError):
    pass


@dataclass
class SynthResult:
    log: EventLog
    split: dict
    info: dict


def _log(src, dst, t, n) -> EventLog:
    idmap = {str(i): i for i in range(n)}
    return EventLog.from_arrays(np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                                np.asarray(t, dtype=np.float64), node_count=n, id_map=idmap)


def has_cross_cn(d: NeighborDictionary, u: int, v: int) -> bool:
    """Whether ``(u, v)`` has a (1,2)- or (2,1)-hop common neighbor in ``d``.

    In a bipartite graph any such witness is a simple path u-x-w-v (or its
    mirror), so it suffices to look for an edge between N(u) and N(v).
    """
    nu, nv = d.neighbors(u), d.neighbors(v)
    for x in nu:
        if x == v:
            continue
        for w in d.neighbors(x):
            if w != u and w != v and w in nv:
                return True
    return False


def bipartite_triadic(nodes: int = 200, events: int = 20000, seed: int = 7, communities: int = 10,
                      window: int = 5, p_close: float = 0.95, p_community: float = 0.03, alpha: float = 6.0,
                      p_move: float = 0.002, min_cn_frac: float = 0.7,
                      val_frac: float = 0.15, test_frac: float = 0.15) -> SynthResult:
    if nodes < 4 or events < 0:
        raise SynthParamError("need at least 4 nodes and a non-negative event count")
    if not (0 <= p_close <= 1 and 0 <= p_community <= 1 - p_close + 1e-12):
        raise SynthParamError("p_close and p_community must be probabilities summing to at most 1")
    if communities < 1 or window < 1:
        raise SynthParamError("communities and window must be positive")
    rng = np.random.default_rng(seed)
    n_users = nodes // 2
    n_items = nodes - n_users
    items = np.arange(n_users, nodes)
    user_comm = rng.integers(0, communities, n_users)
    item_comm = np.arange(n_items) % communities
    comm_items = [items[item_comm == c] for c in range(communities)]
    d = NeighborDictionary(window)
    split = chronological_split(events, val_frac, test_frac)
    test_start = split["test"][0]
    src, dst = [], []
    witnessed = 0
    for k in range(events):
        u = int(rng.integers(0, n_users))
        if rng.random() < p_move:
            user_comm[u] = rng.integers(0, communities)
        roll = rng.random()
        v = None
        if roll < p_close:
            v = _close(d, u, rng, alpha)
        if v is None and roll < p_close + p_community:
            pool = comm_items[user_comm[u]]
            v = int(pool[rng.integers(0, len(pool))]) if len(pool) else None
        if v is None:
            v = int(items[rng.integers(0, n_items)])
        if k >= test_start and has_cross_cn(d, u, v):
            witnessed += 1
        d.add(u, v, float(k), k)
        src.append(u)
        dst.append(v)
    n_test = events - test_start
    frac = witnessed / n_test if n_test else 1.0
    if n_test and frac < min_cn_frac:
        raise SynthParamError(f"only {frac:.2f} of test positives have a (1,2)/(2,1)-hop CN; "
                              f"raise p_close or the event count")
    return SynthResult(_log(src, dst, np.arange(events), nodes), split,
                       {"kind": "bipartite-triadic", "n_users": n_users, "test_cn_fraction": frac})


def _close(d: NeighborDictionary, u: int, rng, alpha: float) -> int | None:
    """Pick an item closing a recent path u - x - w - v.

    Candidates are weighted by their number of such paths raised to
    ``alpha``, so items reachable in many ways are preferred.
    """
    counts: dict[int, float] = {}
    for x, qx in d.neighbors(u).items():
        for w, qw in d.neighbors(x).items():
            if w == u:
                continue
            for v, qv in d.neighbors(w).items():
                if v != x:
                    counts[v] = counts.get(v, 0) + qx * qw * qv
    if not counts:
        return None
    cand = sorted(counts)
    weight = np.array([counts[v] for v in cand], dtype=np.float64) ** alpha
    return int(cand[rng.choice(len(cand), p=weight / weight.sum())])


def periodic(nodes: int = 200, events: int = 20000, seed: int = 7, pairs: int | None = None,
             min_period: int = 5, max_period: int = 200, val_frac: float = 0.15,
             test_frac: float = 0.15) -> SynthResult:
    if nodes < 2 or events < 0 or min_period < 1 or max_period < min_period:
        raise SynthParamError("invalid periodic parameters")
    rng = np.random.default_rng(seed)
    pairs = pairs or max(1, nodes)
    a = rng.integers(0, nodes, pairs)
    b = (a + rng.integers(1, nodes, pairs)) % nodes
    period = rng.integers(min_period, max_period + 1, pairs)
    per_pair = events // pairs + 2
    times = (period[:, None] * np.arange(per_pair)[None, :]
             + rng.integers(0, min_period, (pairs, per_pair)) + rng.integers(0, max_period, pairs)[:, None])
    owner = np.repeat(np.arange(pairs), per_pair)
    flat = times.ravel()
    order = np.lexsort((owner, flat))[:events]
    return SynthResult(_log(a[owner[order]], b[owner[order]], flat[order], nodes),
                       chronological_split(len(order), val_frac, test_frac), {"kind": "periodic"})


def erdos_temporal(nodes: int = 200, events: int = 20000, seed: int = 7, p: float = 1.0,
                   val_frac: float = 0.15, test_frac: float = 0.15) -> SynthResult:
    if nodes < 2 or events < 0 or not 0 <= p <= 1:
        raise SynthParamError("invalid erdos-temporal parameters")
    rng = np.random.default_rng(seed)
    keep = rng.random(events) < p
    a = rng.integers(0, nodes, events)
    b = (a + rng.integers(1, nodes, events)) % nodes
    t = np.arange(events)
    return SynthResult(_log(a[keep], b[keep], t[keep], nodes),
                       chronological_split(int(keep.sum()), val_frac, test_frac), {"kind": "erdos-temporal"})


def synth_generate(kind: str, seed: int = 7, **params) -> SynthResult:
    try:
        fn = {"bipartite-triadic": bipartite_triadic, "periodic": periodic,
              "erdos-temporal": erdos_temporal}[kind]
    except KeyError:
        raise SynthParamError(f"unknown kind {kind!r}; choose from {KINDS}") from None
    try:
        return fn(seed=seed, **params)
    except TypeError as exc:
        raise SynthParamError(str(exc)) from None
