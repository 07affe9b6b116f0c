import struct

import pytest
import torch

from tncn.checkpoint import MAGIC, CheckpointError, dump_checkpoint, load_checkpoint
from tncn.model import TNCN
from tncn.pipeline import RunConfig, build_state

from conftest import random_log


def _model(seed=0):
    cfg = RunConfig(mem_dim=6, emb_dim=6, time_dim=4, num_neighbors=3, seed=seed)
    return build_state(cfg, random_log(0)).model, cfg


def test_bitwise_round_trip():
    model, cfg = _model()
    blob = dump_checkpoint(model, cfg.to_dict(), "abc")
    params, config, h = load_checkpoint(blob)
    assert config == cfg.to_dict() and h == "abc"
    for name, tensor in model.state_dict().items():
        assert params[name].dtype == tensor.dtype and torch.equal(params[name], tensor)
    other, _ = _model(seed=1)
    other.load_state_dict(params)
    assert dump_checkpoint(other, cfg.to_dict(), "abc") == blob


def test_same_seed_same_bytes():
    a, cfg = _model(seed=4)
    b, _ = _model(seed=4)
    assert dump_checkpoint(a, cfg.to_dict(), "h") == dump_checkpoint(b, cfg.to_dict(), "h")
    c, _ = _model(seed=5)
    assert dump_checkpoint(c, cfg.to_dict(), "h") != dump_checkpoint(a, cfg.to_dict(), "h")


def test_bad_magic_and_version():
    model, cfg = _model()
    blob = dump_checkpoint(model, cfg.to_dict(), "h")
    with pytest.raises(CheckpointError, match="not a TNCN"):
        load_checkpoint(b"X" + blob[1:])
    bumped = MAGIC + struct.pack("<I", 99) + blob[12:]
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bumped)


def test_model_class_is_torch_module():
    model, _ = _model()
    assert isinstance(model, TNCN) and isinstance(model, torch.nn.Module)
