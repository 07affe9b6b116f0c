"""Neighbor dictionaries and multi-hop common neighbors on a hand-made log.

Run: python3 tutorials/01_common_neighbors.py
"""

from tncn.cn import build_local_adjacency, corrected_cn, exact_hop_cn, khop_powers, raw_cn
from tncn.events import NeighborDictionary, ingest, update_dictionary
from tncn.oracle import cn_oracle

rows = [
    ("alice", "book", 1), ("bob", "book", 2), ("bob", "lamp", 3),
    ("carol", "lamp", 4), ("alice", "bob", 5), ("alice", "bob", 6),
    ("carol", "mug", 7), ("dave", "mug", 8),
]
log = ingest(rows)
ids = log.id_map
name = {i: n for n, i in ids.items()}
print("events:", len(log), "nodes:", log.node_count)

# Each node remembers its K most recent partners; q(u, v) counts retained events.
d = update_dictionary(NeighborDictionary(K_recent=3), log)
for node in ("alice", "bob"):
    print(f"{node:>6} recent:", [(name[n], t) for n, t, _ in d.entries(ids[node])])
print("q(alice, bob) =", d.q(ids["alice"], ids["bob"]))

# Query a pair at a time after the whole log.
u, v = ids["alice"], ids["bob"]  # they interacted twice
index, A = build_local_adjacency(d, [(u, v)])
powers = khop_powers(A, 2)
t_query = 100.0
print("\n(i,j)   walk-count                 path-corrected        oracle")
for i, j in [(1, 1), (1, 2), (2, 1), (2, 2)]:
    walk = {name[n]: w for n, w in raw_cn(powers, index, u, v, i, j).as_dict().items()}
    path = {name[n]: w for n, w in corrected_cn(powers, index, u, v, i, j).as_dict().items()}
    oracle = {name[n]: w for n, w in cn_oracle(log, u, v, i, j, t_query, K_recent=3).items()}
    print(f"({i},{j})  {str(walk):<26} {str(path):<21} {oracle}")

# Walk counts include endpoints and back-and-forth walks; the corrected counts do not.
shell = exact_hop_cn(powers, index, u, v, 2)
print("\nnodes first reached at hop 2 from both ends:", {name[n]: w for n, w in shell.as_dict().items()})
