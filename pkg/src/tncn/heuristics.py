"""Non-neural link scorers: common neighbors, resource allocation, Adamic-Adar, EdgeBank."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .events import EventLog, NeighborDictionary


class Kind(str, Enum):
    CN = "CN"
    RA = "RA"
    AA = "AA"
    EDGEBANK_UN = "EDGEBANK_UN"
    EDGEBANK_TW = "EDGEBANK_TW"


@dataclass(frozen=True)
class HeuristicScore:
    value: float
    kind: Kind

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("heuristic scores are non-negative")


@dataclass
class DegenerateDegreeCounter:
    """Counts AA terms skipped because ``log d(w) = 0``."""

    count: int = 0


DEGENERATE = DegenerateDegreeCounter()


def heuristic_scores(d: NeighborDictionary, u: int, v: int, full_history_degree: bool = False,
                     counter: DegenerateDegreeCounter = DEGENERATE):
    """CN, RA and AA over distinct 1-hop neighbors in the dictionary.

    Degrees are distinct-neighbor counts; AA uses the natural log and a
    common neighbor of degree 1 contributes nothing to it.
    """
    nu, nv = d.neighbors(u), d.neighbors(v)
    if len(nu) > len(nv):
        nu, nv = nv, nu
    common = [w for w in nu if w in nv and w != u and w != v]
    ra = aa = 0.0
    for w in sorted(common):
        deg = d.degree(w, full_history=full_history_degree)
        ra += 1.0 / deg
        if deg > 1:
            aa += 1.0 / math.log(deg)
        else:
            counter.count += 1
    return (HeuristicScore(float(len(common)), Kind.CN),
            HeuristicScore(ra, Kind.RA),
            HeuristicScore(aa, Kind.AA))


@dataclass
class EdgeBankMemory:
    """Last-seen time of every undirected pair observed so far.

    ``window`` is the trailing window length for ``tw`` mode; ``None`` means
    it is set from the duration of the first log passed to :meth:`update`.
    """

    window: float | None = None
    last_seen: dict = field(default_factory=dict)

    def update(self, log: EventLog) -> None:
        if self.window is None and len(log):
            self.window = float(log.t[-1] - log.t[0])
        for s, d, t in zip(log.src.tolist(), log.dst.tolist(), log.t.tolist()):
            self.last_seen[(s, d) if s <= d else (d, s)] = t

    def observe(self, u, v, t) -> None:
        self.last_seen[(u, v) if u <= v else (v, u)] = t


def edgebank_score(mem: EdgeBankMemory, u: int, v: int, mode: str = "un", t: float | None = None) -> HeuristicScore:
    key = (u, v) if u <= v else (v, u)
    seen = mem.last_seen.get(key)
    if mode == "un":
        return HeuristicScore(float(seen is not None), Kind.EDGEBANK_UN)
    if mode == "tw":
        if t is None:
            raise ValueError("tw mode needs the query time")
        window = mem.window if mem.window is not None else math.inf
        hit = seen is not None and t - seen <= window
        return HeuristicScore(float(hit), Kind.EDGEBANK_TW)
    raise ValueError(f"unknown EdgeBank mode {mode!r}")
