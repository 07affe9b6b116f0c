"""Command-line interface: ``tncn <command> [flags]``.

Dataset directories hold ``events.csv`` (raw ids), ``id_map.csv`` and
``manifest.json``.  Run configs are TOML::

    data = "data/"
    [run]          # any RunConfig field
    epochs = 5
    [bench]
    train_epochs = 1
    cn_batches = 50

Flags override file values and the resolved config is echoed into every
JSON the command writes.  Exit codes: 0 success, 2 usage, 3 data or
schema, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import tomli

from . import events as ev
from .bench import run_bench
from .checkpoint import CheckpointError
from .cn import (DegenerateHopError, MissingNodeError, UnsupportedOrderError, build_local_adjacency,
                 cn_json, corrected_cn, exact_hop_cn, khop_powers, raw_cn)
from .model import CausalityError, UsageError
from .pipeline import ConfigError, NumericalError, RunConfig, SamplingError, evaluate_checkpoint, run_experiment
from .synth import KINDS, SynthParamError, synth_generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

_ERRORS = [
    ((ConfigError, SynthParamError, UsageError, UnsupportedOrderError, DegenerateHopError,
      tomli.TOMLDecodeError), EXIT_USAGE),
    ((ev.EventOrderError, ev.SchemaError, ev.TemporalRegressionError, ev.UndefinedRatioError,
      MissingNodeError, CheckpointError, CausalityError, SamplingError), EXIT_DATA),
    ((NumericalError, ArithmeticError), EXIT_NUMERIC),
    ((OSError,), EXIT_IO),
]


# --- datasets and configs ---------------------------------------------------------------------


def save_dataset(out, log: ev.EventLog, split: dict) -> None:
    out = Path(out)
    ev.atomic_write_text(out / "events.csv", ev.events_to_csv(log, raw_ids=True))
    ev.write_id_map(out / "id_map.csv", log.id_map)
    ev.write_manifest(out / "manifest.json", split)


def load_dataset(path) -> tuple[ev.EventLog, dict]:
    path = Path(path)
    id_map = ev.read_id_map(path / "id_map.csv")
    log = ev.read_csv(path / "events.csv", id_map=id_map)
    split = ev.read_manifest(path / "manifest.json")
    if split["test"][1] != len(log):
        raise ev.SchemaError(f"manifest covers {split['test'][1]} events but the log has {len(log)}")
    return log, split


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(args) -> dict:
    """Merge the TOML file (if any) with command-line overrides."""
    cfg = {"data": None, "run": {}, "bench": {}}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            raw = tomli.load(fh)
        unknown = set(raw) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        cfg.update({k: raw[k] for k in raw})
        cfg["run"] = dict(cfg["run"])
        cfg["bench"] = dict(cfg["bench"])
    if getattr(args, "data", None):
        cfg["data"] = args.data
    for name in ("seed", "epochs", "setting"):
        val = getattr(args, name, None)
        if val is not None:
            cfg["run"][name] = val
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        section, dot, field = key.partition(".")
        if dot and section in ("run", "bench"):
            cfg[section][field] = _parse_value(val)
        else:
            cfg["run"][key] = _parse_value(val)
    return cfg


def _run_config(cfg: dict) -> RunConfig:
    return RunConfig.from_dict(cfg["run"])


def _need_data(cfg: dict) -> str:
    if not cfg.get("data"):
        raise ConfigError("no dataset given: pass --data or set data in the config file")
    return cfg["data"]


def _emit(payload: dict, out: str | None = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if out:
        ev.atomic_write_text(out, text)
    sys.stdout.write(text)


# --- commands ---------------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    log = ev.read_csv(args.input)
    split = ev.chronological_split(len(log), args.val_frac, args.test_frac)
    save_dataset(args.out, log, split)
    _emit({"events": len(log), "nodes": log.node_count, "feat_dim": log.feat_dim, "split": split,
           "id_map_hash": log.id_map_hash(), "out": str(args.out)})
    return EXIT_OK


def cmd_stats(args) -> int:
    log, split = load_dataset(args.data)
    _emit(ev.dataset_stats(log, split).to_dict(), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    params = {"nodes": args.nodes, "events": args.events}
    if args.kind == "erdos-temporal" and args.p is not None:
        params["p"] = args.p
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        params[key] = _parse_value(val)
    res = synth_generate(args.kind, seed=args.seed, **params)
    save_dataset(args.out, res.log, res.split)
    _emit({"kind": args.kind, "seed": args.seed, "params": params, "events": len(res.log),
           "info": res.info, "split": res.split, "out": str(args.out)})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    config = _run_config(cfg)
    log, split = load_dataset(_need_data(cfg))
    out = Path(args.out)
    res = run_experiment(config, log, split, baseline=args.baseline,
                         log_fn=(lambda m: print(m, file=sys.stderr)) if args.verbose else None)
    ev.atomic_write_bytes(out / "checkpoint.tncn", res.checkpoint)
    metrics = dict(res.metrics, checkpoint=str(out / "checkpoint.tncn"), resolved_config=cfg)
    ev.atomic_write_text(out / "run.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    _emit(metrics, str(out / "metrics.json"))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    ck = Path(args.checkpoint)
    if not cfg.get("data"):
        run_file = ck.parent / "run.json"
        if run_file.exists():
            cfg["data"] = json.loads(run_file.read_text())["data"]
    log, split = load_dataset(_need_data(cfg))
    metrics = evaluate_checkpoint(ck.read_bytes(), log, split, setting=args.setting, overrides=cfg["run"])
    metrics["checkpoint"] = str(ck)
    metrics["resolved_config"] = cfg
    _emit(metrics, args.out)
    return EXIT_OK


def _int_pair(raw: str, what: str) -> tuple[str, str]:
    parts = raw.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{what} expects two comma-separated values, got {raw!r}")
    return parts[0].strip(), parts[1].strip()


def cmd_extract_cn(args) -> int:
    cfg = resolve_config(args)
    log, _ = load_dataset(_need_data(cfg))
    raw_u, raw_v = _int_pair(args.pair, "--pair")
    for raw in (raw_u, raw_v):
        if raw not in log.id_map:
            raise MissingNodeError(f"node {raw!r} is not in the dataset")
    u, v = log.id_map[raw_u], log.id_map[raw_v]
    K = cfg["run"].get("K_recent", RunConfig().K_recent)
    K = None if K in (0, "inf", "none", "None") else K
    d = ev.NeighborDictionary(K)
    ev.update_dictionary(d, log.before(args.at_time))
    if args.exact_hop is not None:
        index, A = build_local_adjacency(d, [(u, v)], k_hop_max=args.exact_hop)
        vec = exact_hop_cn(khop_powers(A, args.exact_hop), index, u, v, args.exact_hop)
    else:
        try:
            i, j = (int(x) for x in _int_pair(args.hops, "--hops"))
        except ValueError:
            raise ConfigError(f"--hops expects integers, got {args.hops!r}") from None
        k = max(i, j)
        index, A = build_local_adjacency(d, [(u, v)], k_hop_max=k)
        fn = raw_cn if args.raw else corrected_cn
        vec = fn(khop_powers(A, k), index, u, v, i, j)
    payload = json.loads(cn_json((raw_u, raw_v), vec, log.id_map))
    payload["at_time"] = args.at_time
    payload["clamped"] = vec.clamped
    payload["resolved_config"] = cfg
    _emit(payload, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    config = _run_config(cfg)
    log, split = load_dataset(_need_data(cfg))
    bcfg = cfg["bench"]
    unknown = set(bcfg) - {"train_epochs", "cn_batches"}
    if unknown:
        raise ConfigError(f"unknown bench keys: {sorted(unknown)}")
    rep = run_bench(config, log, split, train_epochs=int(bcfg.get("train_epochs", 1)),
                    cn_batches=bcfg.get("cn_batches", 50))
    payload = rep.to_dict()
    payload["resolved_config"] = cfg
    _emit(payload, args.out)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------------


def _overrides(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="TOML run config")
    p.add_argument("--data", help="dataset directory (overrides the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field; 'bench.' prefix targets the bench table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tncn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a CSV event log and write a dataset directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-frac", type=float, default=0.15)
    p.add_argument("--test-frac", type=float, default=0.15)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--events", type=int, default=20000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--p", type=float, help="slot probability for erdos-temporal")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="extra generator parameter")
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train with early stopping and write checkpoint + metrics")
    _overrides(p)
    p.add_argument("--setting", choices=("official", "ns"))
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=("edgebank_un", "edgebank_tw"))
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="stream a checkpoint through validation and test")
    _overrides(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--setting", choices=("official", "ns"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract-cn", help="print the CNs of one pair at a point in time")
    _overrides(p)
    p.add_argument("--pair", required=True, metavar="U,V")
    p.add_argument("--hops", default="1,1", metavar="I,J")
    p.add_argument("--at-time", type=float, required=True)
    p.add_argument("--raw", action="store_true", help="walk counts without path corrections")
    p.add_argument("--exact-hop", type=int, metavar="K", help="nodes first reached at hop K from both ends")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract_cn)

    p = sub.add_parser("bench", help="phase timings and CN extraction throughput")
    _overrides(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        for types, code in _ERRORS:
            if isinstance(exc, types):
                print(f"tncn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
