"""Event logs, neighbor dictionaries and dataset statistics.

An :class:`EventLog` is the chronologically ordered interaction stream.  A
:class:`NeighborDictionary` keeps, per node, the ``K_recent`` most recent
interactions and the pairwise interaction frequencies derived from them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class EventOrderError(ValueError):
    """Raised when timestamps go backwards."""


class SchemaError(ValueError):
    """Raised on malformed rows (missing columns, ragged features)."""


class TemporalRegressionError(ValueError):
    """Raised when a dictionary update is older than its frontier."""


@dataclass(frozen=True)
class Event:
    src: int
    dst: int
    t: float
    event_idx: int
    edge_feat: np.ndarray | None = None

    @property
    def is_self_loop(self) -> bool:
        return self.src == self.dst


@dataclass
class EventLog:
    """Columnar storage of an ordered event stream.

    ``event_idx`` is the global ordinal of each event; slices of a log keep
    the original ordinals so edge references stay valid across splits.
    """

    src: np.ndarray
    dst: np.ndarray
    t: np.ndarray
    feats: np.ndarray
    event_idx: np.ndarray
    node_count: int
    id_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.float64)
        self.event_idx = np.asarray(self.event_idx, dtype=np.int64)
        feats = np.asarray(self.feats, dtype=np.float64)
        width = feats.shape[1] if feats.ndim == 2 else (feats.size // max(len(self.src), 1))
        self.feats = feats.reshape(len(self.src), width)
        if self.t.size > 1 and np.any(np.diff(self.t) < 0):
            bad = int(np.argmax(np.diff(self.t) < 0)) + 1
            raise EventOrderError(f"timestamp decreases at row {bad + 1}")
        if self.event_idx.size > 1 and np.any(np.diff(self.event_idx) <= 0):
            raise SchemaError("event_idx must be strictly increasing")

    @classmethod
    def from_arrays(cls, src, dst, t, feats=None, node_count=None, id_map=None):
        src = np.asarray(src, dtype=np.int64)
        n = len(src)
        if feats is None:
            feats = np.zeros((n, 0))
        if node_count is None:
            node_count = int(max(src.max(initial=-1), np.max(dst, initial=-1)) + 1)
        return cls(src, dst, t, feats, np.arange(n), node_count, dict(id_map or {}))

    @property
    def feat_dim(self) -> int:
        return self.feats.shape[1]

    def __len__(self) -> int:
        return len(self.src)

    def __getitem__(self, i: int) -> Event:
        feat = self.feats[i] if self.feat_dim else None
        return Event(int(self.src[i]), int(self.dst[i]), float(self.t[i]), int(self.event_idx[i]), feat)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def slice(self, start: int, stop: int) -> "EventLog":
        s = slice(start, stop)
        return EventLog(self.src[s], self.dst[s], self.t[s], self.feats[s], self.event_idx[s],
                        self.node_count, self.id_map)

    def before(self, t: float) -> "EventLog":
        """Events strictly earlier than ``t``."""
        return self.slice(0, int(np.searchsorted(self.t, t, side="left")))

    def feature_of(self, event_idx) -> np.ndarray:
        """Edge features by global event ordinal."""
        pos = np.asarray(event_idx, dtype=np.int64) - (self.event_idx[0] if len(self) else 0)
        return self.feats[pos]

    def id_map_hash(self) -> str:
        payload = json.dumps(sorted((str(k), v) for k, v in self.id_map.items()))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _parse_time(raw: str, row: int) -> float:
    try:
        return float(int(raw))
    except ValueError:
        try:
            value = float(raw)
        except ValueError:
            raise SchemaError(f"row {row}: timestamp {raw!r} is not numeric") from None
    if not math.isfinite(value):
        raise SchemaError(f"row {row}: non-finite timestamp")
    return value


def ingest(rows: Iterable[Sequence | Mapping], id_map: Mapping | None = None) -> EventLog:
    """Build an :class:`EventLog` from ``(src, dst, t, *features)`` records.

    Records may be sequences or mappings with ``src``, ``dst``, ``t`` and
    optional ``f0..fD`` keys.  Raw node ids are densified in order of first
    appearance (source before destination); pass ``id_map`` to extend an
    existing mapping, e.g. when ingesting a test split.
    """
    mapping: dict = dict(id_map or {})
    src, dst, ts, feats = [], [], [], []
    feat_dim = None
    last_t = -math.inf
    for row_no, rec in enumerate(rows, start=1):
        if isinstance(rec, Mapping):
            keys = sorted((k for k in rec if k not in ("src", "dst", "t")), key=lambda k: int(k[1:]))
            try:
                head = [rec["src"], rec["dst"], rec["t"]]
            except KeyError as exc:
                raise SchemaError(f"row {row_no}: missing column {exc.args[0]}") from None
            fvals = [rec[k] for k in keys]
        else:
            rec = list(rec)
            if len(rec) < 3:
                raise SchemaError(f"row {row_no}: expected at least src,dst,t")
            head, fvals = rec[:3], rec[3:]
        if feat_dim is None:
            feat_dim = len(fvals)
        elif len(fvals) != feat_dim:
            raise SchemaError(f"row {row_no}: {len(fvals)} features, expected {feat_dim}")
        t = _parse_time(str(head[2]), row_no) if not isinstance(head[2], (int, float)) else float(head[2])
        if t < last_t:
            raise EventOrderError(f"row {row_no}: timestamp {t} precedes {last_t}")
        last_t = t
        ids = []
        for raw in head[:2]:
            key = str(raw)
            if key not in mapping:
                mapping[key] = len(mapping)
            ids.append(mapping[key])
        src.append(ids[0])
        dst.append(ids[1])
        ts.append(t)
        try:
            feats.append([float(x) for x in fvals])
        except ValueError:
            raise SchemaError(f"row {row_no}: non-numeric feature") from None
    n = len(src)
    farr = np.asarray(feats, dtype=np.float64).reshape(n, feat_dim or 0)
    return EventLog(np.asarray(src), np.asarray(dst), np.asarray(ts), farr, np.arange(n), len(mapping), mapping)


# --- file interfaces --------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path, id_map: Mapping | None = None) -> EventLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return ingest([], id_map)
        header = [h.strip() for h in header]
        if header[:3] != ["src", "dst", "t"]:
            raise SchemaError(f"header must start with src,dst,t; got {header[:3]}")
        expected = [f"f{i}" for i in range(len(header) - 3)]
        if header[3:] != expected:
            raise SchemaError("feature columns must be named f0..fD")
        return ingest(reader, id_map)


def _fmt_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def events_to_csv(log: EventLog, raw_ids: bool = True) -> str:
    inverse = {v: k for k, v in log.id_map.items()}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src", "dst", "t"] + [f"f{i}" for i in range(log.feat_dim)])
    for i in range(len(log)):
        s, d = int(log.src[i]), int(log.dst[i])
        if raw_ids and inverse:
            s, d = inverse[s], inverse[d]
        w.writerow([s, d, _fmt_time(log.t[i])] + [repr(float(x)) for x in log.feats[i]])
    return buf.getvalue()


def write_id_map(path, id_map: Mapping) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["raw_id", "dense_id"])
    for raw, dense in sorted(id_map.items(), key=lambda kv: kv[1]):
        w.writerow([raw, dense])
    atomic_write_text(path, buf.getvalue())


def read_id_map(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["raw_id", "dense_id"]:
            raise SchemaError("id map header must be raw_id,dense_id")
        return {raw: int(dense) for raw, dense in reader}


def chronological_split(n: int, val_frac: float = 0.15, test_frac: float = 0.15) -> dict:
    n_test = int(round(n * test_frac))
    n_val = int(round(n * val_frac))
    n_train = n - n_val - n_test
    return {"train": [0, n_train], "val": [n_train, n_train + n_val], "test": [n_train + n_val, n]}


def write_manifest(path, split: Mapping) -> None:
    atomic_write_text(path, json.dumps(dict(split), indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        split = json.load(fh)
    for name in ("train", "val", "test"):
        if name not in split or len(split[name]) != 2:
            raise SchemaError(f"manifest needs a [start, stop] range for {name!r}")
    return split


def split_log(log: EventLog, split: Mapping) -> dict[str, EventLog]:
    return {name: log.slice(*split[name]) for name in ("train", "val", "test")}


# --- neighbor dictionary ----------------------------------------------------------------------


class NeighborDictionary:
    """Per-node bounded interaction history.

    Each non-self-loop event ``(u, v, t)`` is appended to the lists of both
    ``u`` and ``v``; lists keep the newest ``K_recent`` entries
    (``K_recent=None`` keeps everything).  An event counts toward the pair
    frequency ``q(u, v)`` while it is retained by *both* endpoints, which
    keeps the adjacency symmetric and every node's distinct degree bounded
    by ``K_recent``.
    """

    def __init__(self, K_recent: int | None = 10, track_full_degree: bool = False):
        if K_recent is not None and K_recent < 1:
            raise ValueError("K_recent must be positive or None")
        self.K_recent = K_recent
        self.track_full_degree = track_full_degree
        self._lists: dict[int, deque] = {}
        self._adj: dict[int, dict[int, int]] = {}
        self._live: set[int] = set()
        self._full_nbrs: dict[int, set] = {}
        self.frontier = (-math.inf, -1)

    def __contains__(self, u) -> bool:
        return u in self._lists

    def nodes(self):
        return self._lists.keys()

    def entries(self, u) -> list:
        """Oldest-first ``(neighbor, t, edge_ref)`` entries of ``u``."""
        return list(self._lists.get(u, ()))

    def q(self, u, v) -> int:
        return self._adj.get(u, {}).get(v, 0)

    def neighbors(self, u) -> dict[int, int]:
        """Mapping neighbor -> frequency over mutually retained events."""
        return self._adj.get(u, {})

    def degree(self, u, full_history: bool = False) -> int:
        if full_history:
            if not self.track_full_degree:
                raise ValueError("full-history degrees need track_full_degree=True")
            return len(self._full_nbrs.get(u, ()))
        return len(self._adj.get(u, ()))

    def _bump(self, u, v, delta):
        row = self._adj.setdefault(u, {})
        val = row.get(v, 0) + delta
        if val:
            row[v] = val
        else:
            del row[v]

    def _append(self, u, entry):
        lst = self._lists.get(u)
        if lst is None:
            lst = self._lists[u] = deque()
        lst.append(entry)
        if self.K_recent is not None and len(lst) > self.K_recent:
            nbr, _, ref = lst.popleft()
            if ref in self._live:
                self._live.discard(ref)
                self._bump(u, nbr, -1)
                self._bump(nbr, u, -1)

    def add(self, src: int, dst: int, t: float, edge_ref: int) -> None:
        key = (t, edge_ref)
        if key < self.frontier:
            raise TemporalRegressionError(
                f"event at t={t} (idx {edge_ref}) is older than frontier t={self.frontier[0]}")
        self.frontier = key
        if src == dst:
            return
        self._live.add(edge_ref)
        self._bump(src, dst, 1)
        self._bump(dst, src, 1)
        if self.track_full_degree:
            self._full_nbrs.setdefault(src, set()).add(dst)
            self._full_nbrs.setdefault(dst, set()).add(src)
        self._append(src, (dst, t, edge_ref))
        self._append(dst, (src, t, edge_ref))

    def copy(self) -> "NeighborDictionary":
        new = NeighborDictionary(self.K_recent, self.track_full_degree)
        new._lists = {u: deque(lst) for u, lst in self._lists.items()}
        new._adj = {u: dict(row) for u, row in self._adj.items()}
        new._live = set(self._live)
        new._full_nbrs = {u: set(s) for u, s in self._full_nbrs.items()}
        new.frontier = self.frontier
        return new


def update_dictionary(d: NeighborDictionary, batch, K_recent: int | None = None) -> NeighborDictionary:
    """Append a batch of events (an :class:`EventLog` or iterable of :class:`Event`) in place.

    Events in the batch are validated against the frontier before any is
    applied, so a rejected batch leaves the dictionary untouched.
    """
    if K_recent is not None and K_recent != d.K_recent:
        raise ValueError(f"dictionary was built with K_recent={d.K_recent}, got {K_recent}")
    if isinstance(batch, EventLog):
        rows = zip(batch.src.tolist(), batch.dst.tolist(), batch.t.tolist(), batch.event_idx.tolist())
    else:
        rows = [(e.src, e.dst, e.t, e.event_idx) for e in batch]
    rows = list(rows)
    frontier = d.frontier
    for s, r, t, ref in rows:
        if (t, ref) < frontier:
            raise TemporalRegressionError(
                f"event at t={t} (idx {ref}) is older than frontier t={frontier[0]}")
        frontier = (t, ref)
    for s, r, t, ref in rows:
        d.add(s, r, t, ref)
    return d


def recent_neighbors(d: NeighborDictionary, u: int, n: int) -> list:
    """Newest-first slice of at most ``n`` entries of ``u``."""
    if d.K_recent is not None and n > d.K_recent:
        raise ValueError(f"n={n} exceeds K_recent={d.K_recent}")
    lst = d._lists.get(u)
    if not lst:
        return []
    out = []
    for entry in reversed(lst):
        if len(out) >= n:
            break
        out.append(entry)
    return out


# --- statistics -------------------------------------------------------------------------------


class UndefinedRatioError(ValueError):
    pass


def _pairs(log: EventLog):
    return zip(log.src.tolist(), log.dst.tolist())


def surprise_index(train: EventLog, test: EventLog, directed: bool = True) -> float:
    """Fraction of test events whose pair never occurs in ``train``."""
    if len(test) == 0:
        raise UndefinedRatioError("surprise index of an empty test log is undefined")

    def key(p):
        return p if directed else tuple(sorted(p))

    seen = {key(p) for p in _pairs(train)}
    unseen = sum(1 for p in _pairs(test) if key(p) not in seen)
    return unseen / len(test)


@dataclass
class DatasetStats:
    surprise: float | None
    node_count: int
    edge_count: int
    unique_steps: int
    is_bipartite: bool
    self_loops: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def is_bipartite(log: EventLog) -> bool:
    import networkx as nx

    g = nx.Graph()
    g.add_nodes_from(range(log.node_count))
    g.add_edges_from(_pairs(log))
    return nx.is_bipartite(g)


def dataset_stats(log: EventLog, split: Mapping | None = None) -> DatasetStats:
    surprise = None
    if split is not None:
        parts = split_log(log, split)
        if len(parts["test"]):
            surprise = surprise_index(parts["train"], parts["test"])
    return DatasetStats(
        surprise=surprise,
        node_count=log.node_count,
        edge_count=len(log),
        unique_steps=int(np.unique(log.t).size),
        is_bipartite=is_bipartite(log),
        self_loops=int(np.sum(log.src == log.dst)),
    )
