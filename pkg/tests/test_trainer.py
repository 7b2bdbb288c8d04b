import numpy as np
import pytest

from tripletreg.datasets import Dataset, SyntheticSpec, gen_synthetic
from tripletreg.errors import InvalidConfig, OutOfRange, ShapeError
from tripletreg.network import ConvSpec, NetConfig, desk_config, init_params
from tripletreg.trainer import (
    LOG_COLUMNS,
    CollapseMonitor,
    TrainConfig,
    evaluate_model,
    lr_schedule,
    sgd_momentum_step,
    train,
)


def vector_net(data, d_emb=8, seed=0):
    cfg = NetConfig(data.input_shape, data.n_classes, d_emb, (ConvSpec(16, 1, 1, 0), ConvSpec(16, 1, 1, 0)))
    return init_params(cfg, seed)


@pytest.fixture(scope="module")
def gauss():
    return gen_synthetic(SyntheticSpec(n_classes=10, samples_per_class=50, dim=2, sigma=0.1, seed=0))


def test_lr_examples():
    assert lr_schedule(0, 100) == 0.01
    assert lr_schedule(50, 100, 0.01, 1.0) == pytest.approx(0.005)
    assert lr_schedule(100, 100) == 0.0
    with pytest.raises(OutOfRange):
        lr_schedule(101, 100)
    vals = [lr_schedule(t, 37, 0.1, 2.0) for t in range(38)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_momentum_examples():
    p = {"w": np.array([1.0])}
    v = {}
    g = {"w": np.array([1.0])}
    sgd_momentum_step(p, g, v, 0.1, 0.9)
    assert v["w"][0] == pytest.approx(-0.1) and p["w"][0] == pytest.approx(0.9)
    sgd_momentum_step(p, g, v, 0.1, 0.9)
    assert v["w"][0] == pytest.approx(-0.19) and p["w"][0] == pytest.approx(0.71)


def test_momentum_decays_geometrically():
    p = {"w": np.array([0.0])}
    v = {"w": np.array([-1.0])}
    zero = {"w": np.array([0.0])}
    steps = []
    for _ in range(50):
        before = v["w"][0]
        sgd_momentum_step(p, zero, v, 0.1, 0.9)
        steps.append(v["w"][0] / before)
    assert np.allclose(steps, 0.9)
    # total displacement converges to -1 * 0.9 / (1 - 0.9) = -9
    assert p["w"][0] == pytest.approx(-9.0, abs=0.1)


def test_momentum_shape_mismatch():
    with pytest.raises(ShapeError):
        sgd_momentum_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, {}, 0.1, 0.9)


def test_config_validation():
    with pytest.raises(InvalidConfig, match="train.bogus"):
        TrainConfig.from_dict({"bogus": 1})
    for bad in ({"base_lr": 0}, {"momentum": 1.0}, {"iterations": 0}, {"regularizer": "x"},
                {"mining": "easy"}, {"sampler": "x"}, {"lam": -1}):
        with pytest.raises(InvalidConfig):
            TrainConfig.from_dict(bad)


def test_collapse_monitor_hysteresis():
    m = CollapseMonitor(threshold=1e-3, min_distance=1e-2)
    assert m.update(1.0, 1.0) == (False, None)
    assert m.update(5e-4, 1.0) == (True, "collapse")
    # above threshold but below 10x threshold: stays raised
    assert m.update(5e-3, 1.0) == (True, None)
    assert m.update(2e-2, 1.0) == (False, "recovered")
    assert m.update(1.0, 1e-3) == (True, "collapse")
    # distance back above its threshold but not 10x: still raised
    assert m.update(1.0, 5e-2) == (True, None)
    assert m.update(1.0, 0.2) == (False, "recovered")


def test_smoke_loss_decreases(gauss):
    windows = []
    for seed in range(3):
        data = gen_synthetic(SyntheticSpec(n_classes=10, samples_per_class=50, dim=2, sigma=0.1, seed=seed))
        _, log = train(vector_net(data, seed=seed), data, TrainConfig(iterations=500, seed=seed))
        assert len(log) == 500
        loss = log.column("loss_total")
        windows.append([loss[i:i + 100].mean() for i in range(0, 500, 100)])
    mean = np.mean(windows, axis=0)
    assert all(b <= a for a, b in zip(mean, mean[1:]))


@pytest.mark.parametrize("kw", [dict(mining="semi_hard"), dict(mining="hard"),
                                dict(regularizer="center"), dict(regularizer="tcl"),
                                dict(regularizer="magnet")])
def test_lambda_zero_matches_softmax_only(gauss, kw):
    net = vector_net(gauss)
    base, _ = train(net, gauss, TrainConfig(iterations=30, regularizer="none", seed=3))
    other, _ = train(net, gauss, TrainConfig(iterations=30, lam=0.0, seed=3, **kw))
    for k in net.params:
        assert np.array_equal(base.params[k], other.params[k]), k
    assert np.array_equal(other.params["W_emb"], net.params["W_emb"])


def test_determinism(gauss):
    cfg = TrainConfig(iterations=40, seed=11)
    a, la = train(vector_net(gauss), gauss, cfg)
    b, lb = train(vector_net(gauss), gauss, cfg)
    assert la.to_csv() == lb.to_csv()
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_train_does_not_mutate_input_net(gauss):
    net = vector_net(gauss)
    before = {k: v.copy() for k, v in net.params.items()}
    train(net, gauss, TrainConfig(iterations=5))
    assert all(np.array_equal(before[k], net.params[k]) for k in before)


@pytest.mark.parametrize("reg", ["center", "tcl", "magnet"])
def test_other_regularizers_run(gauss, reg):
    _, log = train(vector_net(gauss), gauss, TrainConfig(iterations=40, regularizer=reg,
                                                           lam=0.003 if reg == "center" else 1.0))
    assert np.all(np.isfinite(log.column("loss_total")))
    assert log.column("loss_embed").any()


def test_log_columns_and_formats(gauss, tmp_path):
    _, log = train(vector_net(gauss), gauss, TrainConfig(iterations=5))
    text = log.to_csv(tmp_path / "log.csv")
    lines = text.splitlines()
    assert lines[0].split(",") == list(LOG_COLUMNS)
    assert len(lines) == 6
    assert (tmp_path / "log.csv").read_text() == text
    assert len(log.to_jsonl().splitlines()) == 5
    rec = log.records[0]
    assert rec["n_semi"] + rec["n_easy"] + rec["n_hard"] > 0


def test_empty_triplet_batches_survive():
    # uniform batches of 3 from six singleton-ish classes often lack positive pairs
    data = Dataset(np.random.default_rng(0).normal(size=(12, 2)), np.arange(12) % 6)
    _, log = train(vector_net(data), data, TrainConfig(iterations=30, sampler="uniform", batch_size=3))
    assert len(log) == 30
    assert any(e["event"] == "empty_triplet_set" for e in log.events)


def test_magnet_skips_unusable_batches():
    data = Dataset(np.random.default_rng(0).normal(size=(12, 2)), np.arange(12) % 4)
    _, log = train(vector_net(data), data, TrainConfig(iterations=20, sampler="uniform", batch_size=5,
                                                        regularizer="magnet"))
    assert len(log) == 20


def test_imbalanced_sampler_runs():
    spec = SyntheticSpec(n_classes=4, samples_per_class=[40, 20, 8, 4], dim=2, sigma=0.1, seed=0)
    data = gen_synthetic(spec)
    _, log = train(vector_net(data), data, TrainConfig(iterations=30, sampler="imbalanced", batch_size=12))
    assert len(log) == 30
    assert log.column("n_semi").max() <= 4


def test_dataset_shape_mismatch(gauss):
    with pytest.raises(ShapeError):
        train(init_params(desk_config(), 0), gauss, TrainConfig(iterations=1))


def test_zero_embedding_raises_collapse_flag(gauss):
    net = vector_net(gauss)
    net.params["W_emb"][:] = 0.0
    _, log = train(net, gauss, TrainConfig(iterations=3, regularizer="none"))
    assert log.records[0]["collapse"]
    assert log.events[0]["event"] == "collapse"


def test_evaluate_model_reports(gauss):
    net, _ = train(vector_net(gauss), gauss, TrainConfig(iterations=50))
    reps = evaluate_model(net, gauss, ks=(1, 4))
    assert set(reps) == {"embedding", "penultimate"}
    assert reps["embedding"].micro_acc == reps["penultimate"].micro_acc
    assert set(reps["embedding"].recall_at) == {1, 4}
