import math

import pytest

import etp

SMALL = """
layers = dense:12:relu, dense:8:relu, dense:2
dataset = two_spirals
dataset_size = 200
epochs = 5
batch_size = 16
optimizer = sgd_momentum
lr = 0.05
scheme = exponential_etp
beta = 1e-2
"""

CNN = """
layers = conv:8:k3:s1:p1:relu, dense:10
input_shape = 3x32x32
dataset = gaussian_blobs
dataset_classes = 10
"""


def test_scalar_rules():
    assert etp.resolve_exp_base(256) == pytest.approx(math.exp(5 / 256), abs=1e-12)
    assert etp.distance_weight("exponential_etp", 2, exp_base=2.0) == 4.0
    assert etp.distance_weight("linear_torque", 0) == 0.0
    assert etp.distance_weight("heaviside", 3, heaviside_threshold=3, heaviside_force=10) == 10.0
    assert etp.accuracy_drop(93.44, 93.66) == pytest.approx(0.22)
    assert etp.speedup(100, 25) == 4.0
    assert len(etp.default_beta_grid()) == 7


def test_macs_of_cnn():
    model = etp.Model(etp.Config.parse(CNN))
    total, per_layer = model.macs()
    assert per_layer == [221184, 81920]
    assert total == 303104


def test_config_errors_are_typed():
    with pytest.raises(etp.ConfigError, match="foo"):
        etp.Config.parse(SMALL + "foo = 1\n")
    with pytest.raises(etp.ContractError):
        etp.resolve_exp_base(0)


def test_pipeline_and_pruning(tmp_path):
    cfg = etp.Config.parse(SMALL)
    summary, pruned = etp.run_pipeline(cfg)
    assert summary["scheme"] == "exponential_etp"
    assert summary["speedup"] >= 1.0
    assert summary["total_groups"] == 20
    assert pruned.total_groups == 22 - summary["groups_removed"]

    model, metrics, test_metric = etp.train(cfg)
    assert len(metrics) == 5
    assert 0.0 <= test_metric <= 1.0
    plan = model.plan_budget(2.0)
    assert plan["predicted_speedup"] >= 2.0
    smaller = model.prune(plan["removals"])
    assert model.macs()[0] / smaller.macs()[0] == pytest.approx(plan["predicted_speedup"])

    path = tmp_path / "model.ckpt"
    model.save(path)
    again = etp.Model.load(path)
    assert again.group_norms(0) == model.group_norms(0)

    with pytest.raises(etp.UnreachableTarget):
        model.plan_budget(1e6)


def test_sweep_rows():
    rows = etp.sweep(etp.Config.parse(SMALL), [0.0, 1e-2])
    assert [r["status"] for r in rows] == ["ok", "ok"]
    assert {r["beta"] for r in rows} == {0.0, 1e-2}
