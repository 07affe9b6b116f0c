"""Classic pairwise heuristics and the EdgeBank memorization baseline.

Run: python3 tutorials/02_heuristics.py
"""

from tncn.events import NeighborDictionary, ingest, update_dictionary
from tncn.heuristics import EdgeBankMemory, edgebank_score, heuristic_scores

log = ingest([("a", "x", 1), ("b", "x", 2), ("b", "y", 3), ("a", "y", 4), ("c", "y", 5), ("c", "z", 30)])
ids = log.id_map
d = update_dictionary(NeighborDictionary(K_recent=10), log)

for u, v in [("a", "b"), ("a", "c"), ("b", "c")]:
    cn, ra, aa = heuristic_scores(d, ids[u], ids[v])
    print(f"{u}-{v}: CN={cn.value:.0f}  RA={ra.value:.3f}  AA={aa.value:.3f}")

# EdgeBank remembers seen pairs; the windowed variant forgets pairs older than the window.
bank = EdgeBankMemory(window=10)
bank.update(log)
for u, v, t in [("a", "x", 31), ("c", "z", 31), ("a", "z", 31)]:
    un = edgebank_score(bank, ids[u], ids[v], "un").value
    tw = edgebank_score(bank, ids[u], ids[v], "tw", t=t).value
    print(f"EdgeBank {u}-{v} at t={t}: unlimited={un:.0f} windowed={tw:.0f}")
