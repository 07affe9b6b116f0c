"""Batched streaming training and evaluation.

Each batch is scored against the state left by the previous batch
(memory, neighbor dictionary, EdgeBank), then used to advance that state.
Memory updates are deferred by one batch: the events of batch ``b - 1`` are
applied at the start of batch ``b`` inside the autograd graph, which lets
the GRU updater learn while committed memory stays a constant.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn.functional as F

from .cn import DEFAULT_HOPS, extract_batch
from .events import EventLog, NeighborDictionary, split_log, update_dictionary
from .heuristics import EdgeBankMemory, edgebank_score
from .model import TNCN, MemoryState, compute_embeddings, memory_update, ncn_aggregate_batch

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


class ConfigError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class SamplingError(ValueError):
    pass


@dataclass
class RunConfig:
    batch_size: int = 200
    k_hop_max: int = 2
    K_recent: int | None = 10
    num_neighbors: int = 10
    mem_dim: int = 100
    emb_dim: int = 100
    time_dim: int = 100
    hop_order: list = field(default_factory=lambda: [list(h) for h in DEFAULT_HOPS])
    setting: str = "official"
    cn_correction: bool = True
    cn_weighted: bool = False
    seed: int = 0
    epochs: int = 10
    patience: int = 3
    lr: float = 1e-3
    heads: int = 2
    n_neg_train: int = 1
    n_neg_eval: int = 20
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("batch_size", "k_hop_max", "num_neighbors", "mem_dim", "emb_dim", "time_dim", "seed",
                     "epochs", "patience", "heads", "n_neg_train", "n_neg_eval"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{name} must be an integer, got {val!r}")
        if self.K_recent is not None and (isinstance(self.K_recent, bool) or not isinstance(self.K_recent, int)):
            raise ConfigError(f"K_recent must be an integer or null, got {self.K_recent!r}")
        if not isinstance(self.lr, (int, float)) or isinstance(self.lr, bool) or not self.lr > 0:
            raise ConfigError(f"lr must be a positive number, got {self.lr!r}")
        for name in ("epochs", "n_neg_train", "n_neg_eval", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if not isinstance(self.cn_correction, bool) or not isinstance(self.cn_weighted, bool):
            raise ConfigError("cn_correction and cn_weighted must be booleans")
        if self.setting not in ("official", "ns"):
            raise ConfigError(f"setting must be 'official' or 'ns', got {self.setting!r}")
        for name in ("batch_size", "num_neighbors", "mem_dim", "emb_dim", "time_dim", "heads"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.K_recent is not None and self.K_recent <= 0:
            raise ConfigError("K_recent must be positive or null")
        if self.K_recent is not None and self.num_neighbors > self.K_recent:
            raise ConfigError("num_neighbors cannot exceed K_recent")
        hops = [tuple(h) for h in self.hop_order]
        if any(len(h) != 2 or min(h) < 0 or max(h) > self.k_hop_max for h in hops):
            raise ConfigError(f"hop_order entries must be (i, j) with 0 <= i, j <= k_hop_max={self.k_hop_max}")
        if self.k_hop_max > 2:
            raise ConfigError("k_hop_max above 2 is not supported")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def hops(self) -> list[tuple]:
        return [tuple(h) for h in self.hop_order]

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("K_recent") in (0, "inf", "none", "None"):
            data["K_recent"] = None
        return cls(**data)


# --- negatives and ranking ---------------------------------------------------------------------


def negative_sample(rng: np.random.Generator, positive_dst: int, n_neg: int, universe) -> list[int]:
    """``n_neg`` distinct destinations drawn uniformly, never the true one."""
    universe = np.asarray(universe, dtype=np.int64)
    if universe.size == 0:
        raise SamplingError("empty node universe")
    pool = universe[universe != positive_dst]
    if n_neg > pool.size:
        raise SamplingError(f"cannot draw {n_neg} negatives from {pool.size} candidates")
    if n_neg == 0:
        return []
    return rng.choice(pool, size=n_neg, replace=False).tolist()


def event_rng(seed: int, split: str, epoch: int, event_idx: int) -> np.random.Generator:
    return np.random.default_rng([seed, SPLIT_CODES[split], epoch, event_idx])


def pessimistic_rank(pos_score: float, neg_scores) -> int:
    """Rank of the positive with ties counted against it."""
    return 1 + int(np.sum(np.asarray(neg_scores) >= pos_score))


def mrr(ranks) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("MRR of zero queries is undefined")
    return float(np.mean(1.0 / ranks))


def random_mrr_expectation(n_neg: int) -> tuple[float, float]:
    """Mean and standard deviation of 1/rank for a uniformly random rank."""
    r = np.arange(1, n_neg + 2, dtype=np.float64)
    mean = float(np.mean(1.0 / r))
    return mean, float(math.sqrt(np.mean(1.0 / r ** 2) - mean ** 2))


@dataclass
class EvalReport:
    mrr: float
    ranks: np.ndarray
    pos_scores: np.ndarray
    neg_scores: np.ndarray
    batch_of: np.ndarray
    timings: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)


# --- streaming state --------------------------------------------------------------------------


@dataclass
class StreamState:
    model: TNCN
    config: RunConfig
    num_nodes: int
    edge_feats: np.ndarray  # [n_events_total, feat_dim] by global event ordinal
    dst_universe: np.ndarray
    memory: MemoryState = None
    dictionary: NeighborDictionary = None
    edgebank: EdgeBankMemory = None
    pending: EventLog | None = None
    memory_updates: int = 0
    events_seen: int = 0

    def reset_stream(self) -> None:
        cfg = self.config
        self.memory = MemoryState.zeros(self.num_nodes, cfg.mem_dim, cfg.torch_dtype)
        self.dictionary = NeighborDictionary(cfg.K_recent)
        self.edgebank = EdgeBankMemory()
        self.pending = None
        self.memory_updates = 0
        self.events_seen = 0

    def snapshot(self) -> dict:
        return {
            "memory": self.memory.copy(),
            "dictionary": self.dictionary.copy(),
            "edgebank": copy.deepcopy(self.edgebank),
            "pending": self.pending,
            "memory_updates": self.memory_updates,
            "events_seen": self.events_seen,
        }

    def restore(self, snap: dict) -> None:
        self.memory = snap["memory"].copy()
        self.dictionary = snap["dictionary"].copy()
        self.edgebank = copy.deepcopy(snap["edgebank"])
        self.pending = snap["pending"]
        self.memory_updates = snap["memory_updates"]
        self.events_seen = snap["events_seen"]


def build_state(config: RunConfig, log: EventLog) -> StreamState:
    torch.manual_seed(config.seed)
    model = TNCN(log.feat_dim, config.mem_dim, config.emb_dim, config.time_dim, config.hops,
                 heads=config.heads, dtype=config.torch_dtype)
    universe = np.unique(log.dst) if len(log) else np.arange(log.node_count)
    state = StreamState(model, config, log.node_count, log.feats, universe)
    state.reset_stream()
    return state


def _pending_memory(state: StreamState):
    """Memory with the deferred events applied; differentiable if grad is enabled."""
    p = state.pending
    if p is None or len(p) == 0:
        return state.memory.memory, state.memory.last_update, 0
    mem, last, _ = memory_update(state.memory, state.model.memory_updater, state.model.time_encoder,
                                 p.src, p.dst, p.t, p.feats)
    return mem, last, len(p)


def _commit(state: StreamState, mem, last, applied: int, batch: EventLog) -> None:
    state.memory = MemoryState(mem.detach(), last)
    state.memory_updates += applied
    state.pending = batch
    state.events_seen += len(batch)


def flush_pending(state: StreamState) -> None:
    with torch.no_grad():
        mem, last, applied = _pending_memory(state)
    state.memory = MemoryState(mem.detach(), last)
    state.memory_updates += applied
    state.pending = None


def score_pairs(state: StreamState, memory, src, dst, t_query: float) -> torch.Tensor:
    """Logits for pairs ``(src[k], dst[k])`` from the current dictionary."""
    cfg = state.config
    model = state.model
    pairs = list(zip(np.asarray(src).tolist(), np.asarray(dst).tolist()))
    hops = cfg.hops
    if hops:
        bc = extract_batch(state.dictionary, pairs, hops, correction=cfg.cn_correction)
        cols = [bc.iu, bc.iv] + [blk.indices for blk in bc.blocks.values()]
        needed = np.unique(np.concatenate(cols))
        nodes = bc.index.nodes[needed]
        emb = compute_embeddings(memory, model.embedder, model.time_encoder, state.dictionary, nodes,
                                 t_query, state.edge_feats, cfg.num_neighbors)
        table = torch.zeros(bc.index.size, emb.shape[1], dtype=emb.dtype)
        table = table.index_put((torch.from_numpy(needed),), emb)
        eu, ev = table[torch.from_numpy(bc.iu)], table[torch.from_numpy(bc.iv)]
        # sum each CN set in global-id order, so a pair's score is independent of its batch-mates
        order = np.argsort(bc.index.nodes, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        table = table[torch.from_numpy(order)]
        blocks = []
        for h in hops:
            blk = bc.blocks[h]
            canon = sp.csr_matrix((blk.data, rank[blk.indices], blk.indptr), shape=blk.shape)
            canon.sort_indices()
            blocks.append(ncn_aggregate_batch(table, canon, cfg.cn_weighted))
        rep = torch.cat([eu * ev] + blocks, dim=1)
    else:
        nodes, inv = np.unique(np.concatenate([np.asarray(src), np.asarray(dst)]), return_inverse=True)
        emb = compute_embeddings(memory, model.embedder, model.time_encoder, state.dictionary, nodes,
                                 t_query, state.edge_feats, cfg.num_neighbors)
        k = len(pairs)
        rep = emb[torch.from_numpy(inv[:k])] * emb[torch.from_numpy(inv[k:])]
    return model.head(rep)


def _batches(log: EventLog, size: int):
    for start in range(0, len(log), size):
        yield start, log.slice(start, min(start + size, len(log)))


def _negatives(state: StreamState, batch: EventLog, n_neg: int, split: str, epoch: int) -> np.ndarray:
    seed = state.config.seed
    out = np.empty((len(batch), n_neg), dtype=np.int64)
    for k in range(len(batch)):
        rng = event_rng(seed, split, epoch, int(batch.event_idx[k]))
        out[k] = negative_sample(rng, int(batch.dst[k]), n_neg, state.dst_universe)
    return out


def train_epoch(state: StreamState, train: EventLog, optimizer, epoch: int = 0) -> float:
    """One pass over ``train`` from the current stream state; returns mean loss.

    Every positive event is applied to memory exactly once: as pending input
    of the next batch, or by the final flush.
    """
    cfg = state.config
    model = state.model
    model.train()
    model.streaming_eval = False
    losses = []
    for _, batch in _batches(train, cfg.batch_size):
        neg = _negatives(state, batch, cfg.n_neg_train, "train", epoch)
        mem, last, applied = _pending_memory(state)
        src = np.concatenate([batch.src, np.repeat(batch.src, cfg.n_neg_train)])
        dst = np.concatenate([batch.dst, neg.ravel()])
        logits = score_pairs(state, mem, src, dst, float(batch.t[0]))
        n_pos = len(batch)
        pos, negl = logits[:n_pos], logits[n_pos:]
        loss = F.binary_cross_entropy_with_logits(pos, torch.ones_like(pos))
        if negl.numel():
            loss = loss + F.binary_cross_entropy_with_logits(negl, torch.zeros_like(negl))
        if not torch.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))
        _commit(state, mem, last, applied, batch)
        update_dictionary(state.dictionary, batch)
        state.edgebank.update(batch)
    flush_pending(state)
    return float(np.mean(losses)) if losses else float("nan")


class ModelScorer:
    needs_memory = True

    def __call__(self, state, memory, src, dst, t_query):
        return score_pairs(state, memory, src, dst, t_query).double().numpy()


class EdgeBankScorer:
    needs_memory = False

    def __init__(self, mode: str = "un"):
        self.mode = mode

    def __call__(self, state, memory, src, dst, t_query):
        eb = state.edgebank
        return np.array([edgebank_score(eb, int(a), int(b), self.mode, t_query).value
                         for a, b in zip(src, dst)])


def _time_groups(batch: EventLog):
    t = batch.t
    bounds = np.flatnonzero(np.diff(t)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(t)]])
    return list(zip(starts.tolist(), stops.tolist()))


def evaluate_stream(state: StreamState, split_events: EventLog, split: str = "val",
                    scorer: Callable | None = None, n_neg: int | None = None) -> EvalReport:
    """Score every positive against sampled negatives, streaming the split.

    Scores never see gradients.  Under ``official`` each batch sees the
    state at the end of the previous batch; under ``ns`` the neighbor
    dictionary (not memory) also holds same-batch events with earlier
    timestamps.
    """
    cfg = state.config
    scorer = scorer or ModelScorer()
    n_neg = cfg.n_neg_eval if n_neg is None else n_neg
    model = state.model
    model.eval()
    model.streaming_eval = True
    ranks, pos_all, neg_all, batch_of = [], [], [], []
    t0 = time.perf_counter()
    try:
        with torch.no_grad():
            for b, (_, batch) in enumerate(_batches(split_events, cfg.batch_size)):
                neg = _negatives(state, batch, n_neg, split, 0)
                if scorer.needs_memory:
                    mem, last, applied = _pending_memory(state)
                else:
                    mem, last, applied = state.memory.memory, state.memory.last_update, 0
                groups = _time_groups(batch) if cfg.setting == "ns" else [(0, len(batch))]
                for g0, g1 in groups:
                    sl = batch.slice(g0, g1)
                    m = len(sl)
                    src = np.concatenate([sl.src, np.repeat(sl.src, n_neg)])
                    dst = np.concatenate([sl.dst, neg[g0:g1].ravel()])
                    scores = np.asarray(scorer(state, mem, src, dst, float(sl.t[0])))
                    pos = scores[:m]
                    negs = scores[m:].reshape(m, n_neg)
                    for k in range(m):
                        ranks.append(pessimistic_rank(pos[k], negs[k]))
                    pos_all.append(pos)
                    neg_all.append(negs)
                    batch_of.extend([b] * m)
                    if cfg.setting == "ns":
                        update_dictionary(state.dictionary, sl)
                if scorer.needs_memory:
                    _commit(state, mem, last, applied, batch)
                else:
                    state.events_seen += len(batch)
                if cfg.setting == "official":
                    update_dictionary(state.dictionary, batch)
                state.edgebank.update(batch)
            if scorer.needs_memory:
                flush_pending(state)
    finally:
        model.streaming_eval = False
    ranks = np.asarray(ranks, dtype=np.int64)
    return EvalReport(
        mrr=mrr(ranks) if len(ranks) else float("nan"),
        ranks=ranks,
        pos_scores=np.concatenate(pos_all) if pos_all else np.zeros(0),
        neg_scores=np.concatenate(neg_all) if neg_all else np.zeros((0, n_neg)),
        batch_of=np.asarray(batch_of, dtype=np.int64),
        timings={"eval_s": time.perf_counter() - t0},
        counters={"events": len(split_events), "memory_updates": state.memory_updates},
    )


# --- experiment driver -----------------------------------------------------------------------


@dataclass
class ExperimentResult:
    metrics: dict
    checkpoint: bytes
    test_report: EvalReport
    val_history: list


def run_experiment(config: RunConfig, log: EventLog, split: dict, baseline: str | None = None,
                   log_fn: Callable[[str], None] | None = None) -> ExperimentResult:
    """Train with validation early stopping, then test the best checkpoint.

    ``baseline`` in ``{"edgebank_un", "edgebank_tw"}`` streams the splits
    through EdgeBank instead of training.
    """
    from .checkpoint import dump_checkpoint

    parts = split_log(log, split)
    state = build_state(config, log)
    timings = {"train_s": 0.0, "val_s": 0.0, "test_s": 0.0}
    history = []
    if baseline:
        mode = {"edgebank_un": "un", "edgebank_tw": "tw"}[baseline]
        state.edgebank.update(parts["train"])
        state.events_seen = len(parts["train"])
        scorer = EdgeBankScorer(mode)
        t0 = time.perf_counter()
        val = evaluate_stream(state, parts["val"], "val", scorer)
        timings["val_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        test = evaluate_stream(state, parts["test"], "test", scorer)
        timings["test_s"] = time.perf_counter() - t0
        history.append(val.mrr)
        epochs_run, best_val = 0, val.mrr
    else:
        optimizer = torch.optim.Adam(state.model.parameters(), lr=config.lr)
        best_val, best = -math.inf, None
        bad = 0
        epochs_run = 0
        for epoch in range(config.epochs):
            state.reset_stream()
            t0 = time.perf_counter()
            loss = train_epoch(state, parts["train"], optimizer, epoch)
            timings["train_s"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            val = evaluate_stream(state, parts["val"], "val")
            timings["val_s"] += time.perf_counter() - t0
            epochs_run += 1
            history.append(val.mrr)
            if log_fn:
                log_fn(f"epoch {epoch}: loss={loss:.4f} val_mrr={val.mrr:.4f}")
            if val.mrr > best_val:
                best_val, bad = val.mrr, 0
                best = (copy.deepcopy(state.model.state_dict()), state.snapshot())
            else:
                bad += 1
                if bad >= config.patience:
                    break
        if best is not None:
            state.model.load_state_dict(best[0])
            state.restore(best[1])
        t0 = time.perf_counter()
        test = evaluate_stream(state, parts["test"], "test")
        timings["test_s"] = time.perf_counter() - t0
    metrics = {
        "setting": config.setting,
        "seed": config.seed,
        "baseline": baseline,
        "epochs_run": epochs_run,
        "val_mrr": best_val,
        "test_mrr": test.mrr,
        "val_history": history,
        "timings": timings,
        "counters": {"events": state.events_seen, "memory_updates": state.memory_updates},
        "id_map_hash": log.id_map_hash(),
        "config": config.to_dict(),
    }
    ckpt = dump_checkpoint(state.model, config.to_dict(), log.id_map_hash())
    return ExperimentResult(metrics, ckpt, test, history)


def metrics_json(metrics: dict, drop_timings: bool = False) -> str:
    m = dict(metrics)
    if drop_timings:
        m.pop("timings", None)
    return json.dumps(m, indent=2, sort_keys=True, default=float) + "\n"


def warm_stream(state: StreamState, events: EventLog) -> None:
    """Advance memory, dictionary and EdgeBank through ``events`` without scoring."""
    with torch.no_grad():
        for _, batch in _batches(events, state.config.batch_size):
            mem, last, applied = _pending_memory(state)
            _commit(state, mem, last, applied, batch)
            update_dictionary(state.dictionary, batch)
            state.edgebank.update(batch)
        flush_pending(state)


def evaluate_checkpoint(data: bytes, log: EventLog, split: dict, setting: str | None = None,
                        overrides: dict | None = None) -> dict:
    """Replay train and validation into a restored model, then score the test split."""
    from .checkpoint import CheckpointError, load_checkpoint

    params, cfg_dict, id_hash = load_checkpoint(data)
    if id_hash != log.id_map_hash():
        raise CheckpointError("checkpoint was trained on a different id map")
    cfg_dict = dict(cfg_dict, **(overrides or {}))
    if setting is not None:
        cfg_dict["setting"] = setting
    config = RunConfig.from_dict(cfg_dict)
    parts = split_log(log, split)
    state = build_state(config, log)
    state.model.load_state_dict(params)
    t0 = time.perf_counter()
    warm_stream(state, parts["train"])
    warm_s = time.perf_counter() - t0
    val = evaluate_stream(state, parts["val"], "val")
    test = evaluate_stream(state, parts["test"], "test")
    return {
        "setting": config.setting,
        "seed": config.seed,
        "val_mrr": val.mrr,
        "test_mrr": test.mrr,
        "timings": {"warm_s": warm_s, "val_s": val.timings["eval_s"], "test_s": test.timings["eval_s"]},
        "counters": {"events": state.events_seen, "memory_updates": state.memory_updates},
        "id_map_hash": id_hash,
        "config": config.to_dict(),
    }
