"""Phase timings and a batched-versus-naive CN extraction comparison.

Timings are wall-clock seconds from ``time.perf_counter``; every other
field of the report is deterministic for a given dataset and config.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import torch

from .cn import extract_batch
from .events import EventLog, NeighborDictionary, split_log, update_dictionary
from .pipeline import RunConfig, _batches, build_state, evaluate_stream, train_epoch


def _paths(d: NeighborDictionary, start: int, length: int):
    """Simple node paths of ``length`` hops, each weighted by its frequency product."""
    out = [((start,), 1)]
    for _ in range(length):
        nxt = []
        for path, w in out:
            for nbr, q in d.neighbors(path[-1]).items():
                if nbr not in path:
                    nxt.append((path + (nbr,), w * q))
        out = nxt
    return out


def naive_pair_cn(d: NeighborDictionary, u: int, v: int, i: int, j: int) -> dict[int, int]:
    """Path-pair CN weights for one pair by direct traversal of ``d``."""
    if u == v or (i, j) == (0, 0):
        return {}
    by_end = defaultdict(list)
    for path, w in _paths(d, v, j):
        by_end[path[-1]].append((path, w))
    counts: dict[int, int] = {}
    for p, wp in _paths(d, u, i):
        x = p[-1]
        for q, wq in by_end.get(x, ()):
            if len(set(p) | set(q)) == len(p) + len(q) - 1:
                counts[x] = counts.get(x, 0) + wp * wq
    return counts


def naive_extract(d: NeighborDictionary, pairs, hop_order) -> list[dict]:
    return [{tuple(h): naive_pair_cn(d, int(a), int(b), *h) for h in hop_order} for a, b in pairs]


@dataclass
class BenchReport:
    phases: dict = field(default_factory=dict)  # seconds per phase
    total_s: float = 0.0
    throughput: dict = field(default_factory=dict)  # events/s or pairs/s
    counts: dict = field(default_factory=dict)
    cn_speedup: float = 0.0
    cn_agree: bool = True

    def to_dict(self) -> dict:
        return {"phases": self.phases, "total_s": self.total_s, "throughput": self.throughput,
                "counts": self.counts, "cn_speedup": self.cn_speedup, "cn_agree": self.cn_agree}


def _rate(n, secs):
    return float(n / secs) if secs > 0 else 0.0


def _sampled(n_batches: int, limit: int | None) -> set:
    if limit is None or limit >= n_batches:
        return set(range(n_batches))
    return set(np.linspace(0, n_batches - 1, limit).round().astype(int).tolist())


def run_bench(config: RunConfig, log: EventLog, split: dict, train_epochs: int = 1,
              cn_batches: int | None = 50, check: bool = True) -> BenchReport:
    """Time dictionary streaming, CN extraction, training and evaluation.

    CN extraction is timed on the positive pairs of up to ``cn_batches``
    evenly spaced batches, each against the dictionary left by the batches
    before it, once through the sparse extractor and once by per-pair
    traversal.
    """
    rep = BenchReport()
    hops = config.hops or [(1, 1)]
    batches = list(_batches(log, config.batch_size))
    chosen = _sampled(len(batches), cn_batches)

    d = NeighborDictionary(config.K_recent)
    dict_s = batch_s = naive_s = 0.0
    n_pairs = 0
    for b, (_, batch) in enumerate(batches):
        if b in chosen:
            pairs = list(zip(batch.src.tolist(), batch.dst.tolist()))
            t0 = time.perf_counter()
            bc = extract_batch(d, pairs, hops, correction=config.cn_correction)
            batch_s += time.perf_counter() - t0
            t0 = time.perf_counter()
            naive = naive_extract(d, pairs, hops)
            naive_s += time.perf_counter() - t0
            n_pairs += len(pairs)
            if check and config.cn_correction:
                for h in hops:
                    blk = bc.blocks[h]
                    for k in range(len(pairs)):
                        lo, hi = blk.indptr[k], blk.indptr[k + 1]
                        got = dict(zip(bc.index.nodes[blk.indices[lo:hi]].tolist(), blk.data[lo:hi].tolist()))
                        if got != naive[k][h]:
                            rep.cn_agree = False
        t0 = time.perf_counter()
        update_dictionary(d, batch)
        dict_s += time.perf_counter() - t0

    parts = split_log(log, split)
    state = build_state(config, log)
    opt = torch.optim.Adam(state.model.parameters(), lr=config.lr)
    train_s = 0.0
    for epoch in range(train_epochs):
        state.reset_stream()
        t0 = time.perf_counter()
        train_epoch(state, parts["train"], opt, epoch)
        train_s += time.perf_counter() - t0
    t0 = time.perf_counter()
    evaluate_stream(state, parts["val"], "val")
    eval_s = time.perf_counter() - t0

    rep.phases = {"dictionary_s": dict_s, "cn_batch_s": batch_s, "cn_naive_s": naive_s,
                  "train_s": train_s, "eval_s": eval_s}
    rep.total_s = float(sum(rep.phases.values()))
    rep.counts = {"events": len(log), "cn_pairs": n_pairs, "cn_batches": len(chosen),
                  "train_events": len(parts["train"]) * train_epochs, "eval_events": len(parts["val"])}
    rep.throughput = {
        "dictionary_eps": _rate(len(log), dict_s),
        "cn_batch_pps": _rate(n_pairs, batch_s),
        "cn_naive_pps": _rate(n_pairs, naive_s),
        "train_eps": _rate(rep.counts["train_events"], train_s),
        "eval_eps": _rate(len(parts["val"]), eval_s),
    }
    rep.cn_speedup = float(naive_s / batch_s) if batch_s > 0 else 0.0
    return rep
