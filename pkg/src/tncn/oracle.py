"""Brute-force common-neighbor counts by explicit path enumeration.

This is the ground truth for the sparse extractor and deliberately shares
no code with it: retention is recomputed from the raw log, and paths are
enumerated one event at a time, so interaction multiplicity appears as
repeated enumerations rather than as multiplied frequencies.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from .events import EventLog


def retained_events(log: EventLog, t: float, K_recent: int | None):
    """Non-self-loop events before ``t`` that both endpoints still hold."""
    events = [(int(s), int(d), float(tt), int(i))
              for s, d, tt, i in zip(log.src, log.dst, log.t, log.event_idx)
              if tt < t and s != d]
    if K_recent is None or (isinstance(K_recent, float) and math.isinf(K_recent)):
        return events
    incident = defaultdict(list)
    for ev in events:
        incident[ev[0]].append(ev)
        incident[ev[1]].append(ev)
    kept = {}
    for node, evs in incident.items():
        evs.sort(key=lambda e: (e[2], e[3]))
        kept[node] = {e[3] for e in evs[-K_recent:]}
    return [e for e in events if e[3] in kept[e[0]] and e[3] in kept[e[1]]]


def _walk_paths(incidence, start, length):
    """Every simple path of ``length`` edges from ``start``, one per event sequence."""
    out = []

    def dfs(path):
        if len(path) == length + 1:
            out.append(tuple(path))
            return
        for nbr in incidence[path[-1]]:
            if nbr not in path:
                path.append(nbr)
                dfs(path)
                path.pop()

    dfs([start])
    return out


def cn_oracle(log: EventLog, u: int, v: int, i: int, j: int, t: float,
              K_recent: int | None = None) -> dict[int, int]:
    """Count path pairs certifying ``x`` as an (i, j)-hop common neighbor.

    A certificate is a path ``P`` of ``i`` edges from ``u`` to ``x`` and a
    path ``Q`` of ``j`` edges from ``v`` to ``x`` whose nodes are all
    distinct apart from the shared ``x``.  Each distinct choice of events
    along ``P`` and ``Q`` is one certificate.
    """
    if u == v:
        return {}
    incidence = defaultdict(list)
    for s, d, _, _ in retained_events(log, t, K_recent):
        incidence[s].append(d)
        incidence[d].append(s)
    from_u = Counter(_walk_paths(incidence, u, i))
    from_v = defaultdict(list)
    for q, m in Counter(_walk_paths(incidence, v, j)).items():
        from_v[q[-1]].append((q, m))
    counts: Counter = Counter()
    for p, mp in from_u.items():
        x = p[-1]
        for q, mq in from_v.get(x, ()):
            if len(set(p) | set(q)) == len(p) + len(q) - 1:
                counts[x] += mp * mq
    return dict(counts)
