import json

import pytest

from nmsparse.config import RunConfig, TrainerSettings
from nmsparse.masks import SparsePattern
from nmsparse.schedule import Schedule


def sample_doc():
    return {
        "pattern": {"n": 2, "m": 4},
        "schedule": {"t_i": 0, "t_f": 30, "kind": "cubic", "ordering": "l1_descending", "mode": "block_percentage"},
        "trainer": {
            "arch": "mlp",
            "hidden": [32, 32],
            "epochs": 40,
            "batch_size": 64,
            "learning_rate": 0.3,
            "lr_schedule": "cosine",
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "sr_ste_weight": None,
        },
        "dataset": {"kind": "two_spirals", "samples": 2000, "noise": 0.2, "seed": 7},
        "tau": 0.1,
        "seed": 1234,
        "out_dir": "runs/demo",
    }


def test_parse_serialize_parse_is_identity():
    cfg = RunConfig.from_dict(sample_doc())
    text = cfg.to_json()
    again = RunConfig.from_json(text)
    assert again == cfg
    assert again.to_json() == text
    # and the dict round trip preserves every field
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_parsed_fields():
    cfg = RunConfig.from_dict(sample_doc())
    assert cfg.pattern == SparsePattern(2, 4)
    assert cfg.schedule == Schedule(0, 30)
    assert cfg.trainer.hidden == (32, 32)
    assert cfg.seed == 1234
    tc = cfg.to_train_config()
    assert tc.sr_weight == pytest.approx(2e-4)
    assert tc.pattern == SparsePattern(2, 4)


def test_null_pattern_means_dense():
    doc = sample_doc()
    doc["pattern"] = None
    cfg = RunConfig.from_dict(doc)
    assert cfg.pattern is None
    assert cfg.to_train_config().pattern is None


def test_unknown_keys_rejected():
    doc = sample_doc()
    doc["extra"] = 1
    with pytest.raises(ValueError):
        RunConfig.from_dict(doc)


def test_invalid_values_rejected_up_front():
    bad_pattern = sample_doc()
    bad_pattern["pattern"] = {"n": 4, "m": 4}
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_pattern)

    bad_sched = sample_doc()
    bad_sched["schedule"]["t_f"] = 0
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_sched)

    bad_tau = sample_doc()
    bad_tau["tau"] = 0.0
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_tau)

    bad_lr = sample_doc()
    bad_lr["trainer"]["learning_rate"] = -1.0
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_lr)

    bad_dataset = sample_doc()
    bad_dataset["dataset"] = {"kind": "csv"}
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_dataset)

    bad_arch = sample_doc()
    bad_arch["trainer"]["arch"] = "transformer"
    with pytest.raises(ValueError):
        RunConfig.from_dict(bad_arch)


def test_json_integers_survive_bit_exactly():
    doc = sample_doc()
    doc["seed"] = 2**53 - 1
    cfg = RunConfig.from_dict(doc)
    assert json.loads(cfg.to_json())["seed"] == 2**53 - 1


def test_trainer_settings_defaults():
    t = TrainerSettings()
    assert t.arch == "mlp" and t.hidden == (32, 32)
    with pytest.raises(ValueError):
        TrainerSettings(arch="mlp", hidden=())
