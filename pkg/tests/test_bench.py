import math

import pytest

from tncn.bench import naive_extract, naive_pair_cn, run_bench
from tncn.cn import extract_batch
from tncn.events import NeighborDictionary, update_dictionary
from tncn.pipeline import RunConfig
from tncn.synth import synth_generate

from conftest import random_log

SMALL = RunConfig(mem_dim=8, emb_dim=8, time_dim=8, num_neighbors=5, K_recent=5, batch_size=100)


@pytest.fixture(scope="module")
def large():
    res = synth_generate("bipartite-triadic", seed=7, nodes=200, events=100_000)
    return res.log, res.split


def test_naive_matches_sparse_on_random_graphs():
    hops = [(0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2)]
    for seed in range(20):
        log = random_log(seed, n_nodes=10, n_events=50)
        d = update_dictionary(NeighborDictionary(4), log)
        pairs = [(u, v) for u in range(10) for v in range(10)]
        bc = extract_batch(d, pairs, hops)
        naive = naive_extract(d, pairs, hops)
        for h in hops:
            blk = bc.blocks[h]
            for k in range(len(pairs)):
                lo, hi = blk.indptr[k], blk.indptr[k + 1]
                got = dict(zip(bc.index.nodes[blk.indices[lo:hi]].tolist(), blk.data[lo:hi].tolist()))
                assert got == naive[k][h], (seed, pairs[k], h)


def test_naive_pair_path_weights():
    d = NeighborDictionary(None)
    for i, (u, v) in enumerate([(0, 1), (0, 1), (1, 2), (2, 3)]):
        d.add(u, v, float(i), i)
    assert naive_pair_cn(d, 0, 3, 1, 2) == {1: 2}
    assert naive_pair_cn(d, 0, 3, 2, 1) == {2: 2}


def test_report_fields_small():
    log = random_log(0, n_nodes=20, n_events=400)
    split = {"train": [0, 280], "val": [280, 340], "test": [340, 400]}
    cfg = RunConfig(**dict(SMALL.to_dict(), n_neg_eval=5))
    rep = run_bench(cfg, log, split, train_epochs=1, cn_batches=None).to_dict()
    assert all(v >= 0 for v in rep["phases"].values())
    assert math.isclose(rep["total_s"], sum(rep["phases"].values()))
    assert all(v >= 0 for v in rep["throughput"].values())
    assert rep["counts"]["cn_batches"] == 4 and rep["counts"]["cn_pairs"] == 400
    assert rep["counts"]["train_events"] == 280 and rep["cn_agree"]


def test_batch_extraction_not_slower_than_naive(large):
    log, split = large
    rep = run_bench(RunConfig(), log, split, train_epochs=0, cn_batches=50)
    assert rep.cn_agree
    assert rep.throughput["cn_batch_pps"] >= rep.throughput["cn_naive_pps"], rep.to_dict()


def test_two_runs_are_consistent(large):
    log, split = large
    sub = log.slice(0, 20_000)
    sp = {"train": [0, 14_000], "val": [14_000, 17_000], "test": [17_000, 20_000]}
    a = run_bench(SMALL, sub, sp, train_epochs=0, cn_batches=20)
    b = run_bench(SMALL, sub, sp, train_epochs=0, cn_batches=20)
    assert a.counts == b.counts
    for k in ("dictionary_s", "cn_batch_s", "cn_naive_s"):
        ratio = a.phases[k] / b.phases[k]
        assert 0.5 <= ratio <= 2.0, (k, a.phases[k], b.phases[k])
