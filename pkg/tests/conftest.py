import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tncn.events import EventLog

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_log(seed, n_nodes=12, n_events=60, self_loops=0.05, tie_prob=0.3, feat_dim=0) -> EventLog:
    """Random temporal multigraph with repeated pairs, timestamp ties and a few self-loops."""
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n_nodes, n_events)
    dst = rng.integers(0, n_nodes, n_events)
    loop = rng.random(n_events) < self_loops
    dst = np.where(loop, src, dst)
    clash = (src == dst) & ~loop
    dst = np.where(clash, (dst + 1) % n_nodes, dst)
    steps = np.where(rng.random(n_events) < tie_prob, 0, rng.integers(1, 4, n_events))
    t = np.cumsum(steps).astype(np.float64)
    feats = rng.normal(size=(n_events, feat_dim)) if feat_dim else None
    return EventLog.from_arrays(src, dst, t, feats=feats, node_count=n_nodes)


def log_from(triples, n_nodes=None, feats=None) -> EventLog:
    src, dst, t = zip(*triples) if triples else ((), (), ())
    n = n_nodes if n_nodes is not None else (max(max(src), max(dst)) + 1 if triples else 0)
    return EventLog.from_arrays(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                                np.array(t, dtype=np.float64), feats=feats, node_count=n)


@pytest.fixture
def rlog():
    return random_log


def toy_problem(seed=0, hops=None):
    """A 5-node, 20-event float64 problem whose loss touches every parameter group.

    The first ten events sit in the pending memory buffer and the neighbor
    dictionary; the last ten are scored against one fixed negative each.
    """
    import torch
    import torch.nn.functional as F

    from tncn.cn import DEFAULT_HOPS
    from tncn.events import update_dictionary
    from tncn.pipeline import RunConfig, _pending_memory, build_state, score_pairs

    log = random_log(seed, n_nodes=5, n_events=20, self_loops=0.0, tie_prob=0.0, feat_dim=2)
    cfg = RunConfig(batch_size=10, K_recent=5, num_neighbors=3, mem_dim=4, emb_dim=4, time_dim=3, heads=2,
                    dtype="float64", seed=seed, hop_order=[list(h) for h in (hops or DEFAULT_HOPS)])
    state = build_state(cfg, log)
    first, second = log.slice(0, 10), log.slice(10, 20)
    neg = (second.dst + 1 + np.arange(10) % 3) % 5
    neg = np.where(neg == second.dst, (neg + 1) % 5, neg)

    def loss_fn():
        state.reset_stream()
        state.pending = first
        update_dictionary(state.dictionary, first)
        mem, _, _ = _pending_memory(state)
        src = np.concatenate([second.src, second.src])
        dst = np.concatenate([second.dst, neg])
        logits = score_pairs(state, mem, src, dst, float(second.t[0]))
        target = torch.cat([torch.ones(10, dtype=logits.dtype), torch.zeros(10, dtype=logits.dtype)])
        return F.binary_cross_entropy_with_logits(logits, target)

    return state, loss_fn


def finite_difference_check(model, loss_fn, h=1e-6, rel=1e-4, abs_tol=1e-6):
    """Compare analytic and central-difference gradients for every parameter.

    Returns ``{group: (n_checked, n_bad, worst_excess)}``.
    """
    import torch

    from tncn.model import backward

    grads = backward(model, loss_fn())
    report = {}
    for group, params in model.groups().items():
        checked = bad = 0
        worst = 0.0
        for name, p in params:
            g = grads[group][name].reshape(-1)
            flat = p.data.view(-1)
            for k in range(flat.numel()):
                old = float(flat[k])
                with torch.no_grad():
                    flat[k] = old + h
                    up = float(loss_fn())
                    flat[k] = old - h
                    down = float(loss_fn())
                    flat[k] = old
                num = (up - down) / (2 * h)
                excess = abs(float(g[k]) - num) - (abs_tol + rel * abs(num))
                checked += 1
                if excess > 0:
                    bad += 1
                worst = max(worst, excess)
        report[group] = (checked, bad, worst)
    return report


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    rows = {}
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when != "call" or "criterion" not in props:
                continue
            n, title = props["criterion"]
            if rep.passed:
                detail = props.get("detail", "")
            else:
                crash = getattr(rep.longrepr, "reprcrash", None)
                detail = (crash.message if crash else str(rep.longrepr)).splitlines()[0]
            rows[n] = ("PASS" if rep.passed else "FAIL", title, detail)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(rows):
        status, title, detail = rows[n]
        terminalreporter.write_line(f"{status} criterion {n:>2} ({title}): {detail}")
