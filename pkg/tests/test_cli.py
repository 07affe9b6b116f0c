import json

import pytest

from tncn.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, load_dataset, main

FAST = ["--set", "mem_dim=8", "--set", "emb_dim=8", "--set", "time_dim=8", "--set", "num_neighbors=5",
        "--set", "batch_size=100", "--epochs", "1"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == EXIT_OK and out.strip() else None)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--kind", "bipartite-triadic", "--nodes", "60", "--events", "1500", "--seed", "3",
                 "--param", "min_cn_frac=0.0", "--out", str(path)]) == EXIT_OK
    return path


def test_synth_writes_dataset(dataset):
    log, split = load_dataset(dataset)
    assert len(log) == 1500 and split["test"][1] == 1500
    assert {p.name for p in dataset.iterdir()} == {"events.csv", "id_map.csv", "manifest.json"}


def test_synth_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(["synth", "--kind", "periodic", "--nodes", 20, "--events", 300, "--out", tmp_path / name], capsys)
    assert (tmp_path / "a/events.csv").read_bytes() == (tmp_path / "b/events.csv").read_bytes()


def test_ingest_and_stats(tmp_path, capsys):
    src = tmp_path / "raw.csv"
    src.write_text("src,dst,t\nalice,bob,1\nalice,carol,2\nbob,carol,3\ncarol,carol,4\n")
    code, out = run(["ingest", "--input", src, "--out", tmp_path / "d"], capsys)
    assert code == EXIT_OK and out["events"] == 4 and out["nodes"] == 3
    code, stats = run(["stats", "--data", tmp_path / "d", "--out", tmp_path / "s.json"], capsys)
    assert code == EXIT_OK and stats["self_loops"] == 1
    assert json.loads((tmp_path / "s.json").read_text()) == stats


def test_ingest_rejects_unsorted(tmp_path, capsys):
    src = tmp_path / "raw.csv"
    src.write_text("src,dst,t\na,b,5\na,c,1\n")
    assert run(["ingest", "--input", src, "--out", tmp_path / "d"], capsys)[0] == EXIT_DATA
    assert not (tmp_path / "d").exists()


def test_train_eval_round_trip(dataset, tmp_path, capsys):
    out = tmp_path / "run"
    code, metrics = run(["train", "--data", dataset, "--out", out, *FAST], capsys)
    assert code == EXIT_OK and 0 < metrics["test_mrr"] <= 1
    assert {p.name for p in out.iterdir()} == {"checkpoint.tncn", "metrics.json", "run.json"}
    assert metrics["resolved_config"]["run"]["mem_dim"] == 8
    assert not list(out.glob("*.tmp*"))
    code, ev = run(["eval", "--checkpoint", out / "checkpoint.tncn", "--setting", "ns"], capsys)
    assert code == EXIT_OK and ev["setting"] == "ns" and ev["id_map_hash"] == metrics["id_map_hash"]


def test_train_is_deterministic(dataset, tmp_path, capsys):
    blobs = []
    for name in ("a", "b"):
        run(["train", "--data", dataset, "--out", tmp_path / name, *FAST], capsys)
        blobs.append((tmp_path / name / "checkpoint.tncn").read_bytes())
    assert blobs[0] == blobs[1]


def test_train_from_toml(dataset, tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'data = "{dataset.as_posix()}"\n[run]\nmem_dim = 8\nemb_dim = 8\ntime_dim = 8\n'
                   f'num_neighbors = 5\nepochs = 1\nseed = 2\n')
    code, m = run(["train", "--config", cfg, "--out", tmp_path / "r", "--set", "batch_size=300"], capsys)
    assert code == EXIT_OK and m["seed"] == 2 and m["config"]["batch_size"] == 300


def test_baseline_train(dataset, tmp_path, capsys):
    code, m = run(["train", "--data", dataset, "--out", tmp_path / "eb", "--baseline", "edgebank_tw"], capsys)
    assert code == EXIT_OK and m["baseline"] == "edgebank_tw"


def test_extract_cn(dataset, capsys):
    code, out = run(["extract-cn", "--data", dataset, "--pair", "0,1", "--hops", "2,2", "--at-time", 1000],
                    capsys)
    assert code == EXIT_OK and out["at_time"] == 1000
    assert "resolved_config" in out
    code, out = run(["extract-cn", "--data", dataset, "--pair", "0,40", "--exact-hop", 2, "--at-time", 1000],
                    capsys)
    assert code == EXIT_OK and out["clamped"] == 0


def test_bench_command(dataset, tmp_path, capsys):
    code, out = run(["bench", "--data", dataset, "--set", "bench.train_epochs=0", "--set", "bench.cn_batches=3",
                     "--out", tmp_path / "b.json"], capsys)
    assert code == EXIT_OK and out["counts"]["cn_batches"] == 3 and out["cn_agree"]
    assert json.loads((tmp_path / "b.json").read_text())["counts"] == out["counts"]


@pytest.mark.parametrize("argv,code", [
    (["extract-cn", "--pair", "0,999", "--at-time", "5"], EXIT_DATA),
    (["extract-cn", "--pair", "0,1", "--hops", "3,1", "--at-time", "5"], EXIT_USAGE),
    (["extract-cn", "--pair", "0", "--at-time", "5"], EXIT_USAGE),
    (["extract-cn", "--pair", "0,1", "--exact-hop", "3", "--at-time", "5"], EXIT_USAGE),
    (["extract-cn", "--pair", "0,1", "--exact-hop", "0", "--at-time", "5"], EXIT_USAGE),
    (["train", "--out", "x", "--set", "epochs=-1"], EXIT_USAGE),
    (["train", "--out", "x", "--set", "bogus=1"], EXIT_USAGE),
])
def test_error_codes(dataset, argv, code, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run([*argv, "--data", dataset], capsys)[0] == code


def test_missing_data_is_io_error(tmp_path, capsys):
    assert run(["stats", "--data", tmp_path / "nowhere"], capsys)[0] == EXIT_IO


def test_train_without_data_is_usage_error(tmp_path, capsys):
    assert run(["train", "--out", tmp_path / "r"], capsys)[0] == EXIT_USAGE


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_bad_toml_key(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("colour = 1\n")
    assert run(["train", "--config", cfg, "--out", tmp_path / "r"], capsys)[0] == EXIT_USAGE
