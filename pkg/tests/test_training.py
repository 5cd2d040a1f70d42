import numpy as np
import pytest

from vcsnet import kernels as K
from vcsnet.exceptions import DimensionError, NumericError
from vcsnet.io import read_vcub
from vcsnet.sensing import forward_measure, generate_masks
from vcsnet.training import (TrainConfig, mse_loss, stage_weights, stage_wise_loss, synth_dataset, synth_scene,
                             train)
from vcsnet.unfold_net import SensingBatch, UnfoldModel, cubes_to_net, forward_stages


def test_lr_schedule_values():
    cfg = TrainConfig()
    assert [cfg.lr(e) for e in range(8)] == [5e-5] * 8
    assert cfg.lr(8) == 2.5e-5
    assert cfg.lr(12) == 2.5e-5
    assert cfg.lr(13) == 1.25e-5
    assert cfg.lr(18) == 6.25e-6


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs_per_phase=(1, 2))
    with pytest.raises(ValueError):
        TrainConfig(mode="depth")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_mse_cases(rng):
    assert mse_loss(np.array([[[0.9]]]), np.array([[[1.0]]])) == pytest.approx(0.01, abs=1e-15)
    a = rng.random((4, 5, 3))
    assert mse_loss(a, a) == 0.0
    b = rng.random((4, 5, 3))
    total = 0.0
    for v in (a - b).ravel():
        total += v * v
    assert mse_loss(a, b) == pytest.approx(total / a.size, rel=1e-13)
    with pytest.raises(DimensionError):
        mse_loss(a, b[:2])


def test_stage_wise_cases(rng):
    t = np.ones((1, 1, 1))
    assert stage_wise_loss(t - 0.2, t - 0.1, t) == pytest.approx(0.03, abs=1e-15)
    assert stage_wise_loss(t, t, t) == 0.0
    x = rng.random((4, 4, 2))
    e1 = rng.standard_normal(x.shape) * 0.1
    e2 = rng.standard_normal(x.shape) * 0.1
    base = stage_wise_loss(x + e1, x + e2, x)
    doubled = stage_wise_loss(x + 2 * e1, x + e2, x)
    assert doubled - base == pytest.approx(3 * 0.5 * mse_loss(x + e1, x), rel=1e-12)


def test_stage_weights():
    assert stage_weights(2, 1) == [1.0, 0.0]
    assert stage_weights(2, 2) == [0.0, 1.0]
    assert stage_weights(2) == [0.5, 1.0]
    assert stage_weights(3) == [0.5, 0.5, 1.0]


def test_synth_deterministic_range_motion():
    cfg = TrainConfig(samples=12, frame_dims=(16, 16, 4))
    a, b = synth_dataset(cfg), synth_dataset(cfg)
    for x, z in zip(a, b):
        np.testing.assert_array_equal(x, z)
        assert x.shape == (16, 16, 4) and x.min() >= 0 and x.max() <= 1
        assert np.sum(np.diff(x, axis=2) ** 2) > 0
    other = synth_dataset(TrainConfig(samples=12, frame_dims=(16, 16, 4), seed=1))
    assert any(not np.array_equal(x, z) for x, z in zip(a, other))


def test_synth_color_shape(rng):
    x = synth_scene(rng, 16, 12, 3, color=True)
    assert x.shape == (16, 12, 3, 3) and 0 <= x.min() and x.max() <= 1


def tiny_cfg(**kw):
    base = dict(epochs_per_phase=(2, 2, 1), samples=6, batch_size=3, frame_dims=(8, 8, 2), lr0=1e-3)
    base.update(kw)
    return TrainConfig(**base)


def test_phases_and_freeze_contract(tmp_path):
    model = UnfoldModel(channels=4, blocks=1, seed=1)
    init = model.state_dict()
    res = train(model, tiny_cfg(), checkpoint_dir=tmp_path, log_path=tmp_path / "loss.csv")
    p1 = read_vcub(tmp_path / "phase1.vcub")
    p2 = read_vcub(tmp_path / "phase2.vcub")
    p3 = read_vcub(tmp_path / "phase3.vcub")
    s0 = [k for k in init if k.startswith("stage0.")]
    s1 = [k for k in init if k.startswith("stage1.")]
    # phase 1 leaves stage 2 alone and changes stage 1
    assert all(p1[k].tobytes() == init[k].tobytes() for k in s1)
    assert any(p1[k].tobytes() != init[k].tobytes() for k in s0)
    # phase 2 freezes stage 1 bitwise
    assert all(p2[k].tobytes() == p1[k].tobytes() for k in s0)
    assert any(p2[k].tobytes() != p1[k].tobytes() for k in s1)
    # phase 3 moves both
    assert any(p3[k].tobytes() != p2[k].tobytes() for k in s0)
    assert any(p3[k].tobytes() != p2[k].tobytes() for k in s1)
    assert [r["phase"] for r in res.log] == [1, 1, 2, 2, 3]
    assert [r["epoch"] for r in res.log] == list(range(5))
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,phase,lr,loss" and len(lines) == 6
    assert set(res.phase_initial_loss) == {1, 2, 3}
    assert all(p.requires_grad for p in model.parameters())


def test_training_deterministic():
    logs = []
    for _ in range(2):
        res = train(UnfoldModel(channels=4, blocks=1, seed=2), tiny_cfg(epochs_per_phase=(1, 1, 1)))
        logs.append([r["loss"] for r in res.log])
    assert logs[0] == logs[1]


def test_training_reduces_loss():
    cfg = tiny_cfg(epochs_per_phase=(6, 0, 0), samples=8, lr0=3e-3)
    res = train(UnfoldModel(channels=4, blocks=1, seed=0), cfg)
    assert res.log[-1]["loss"] < res.phase_initial_loss[1]


def test_single_stage_fallback():
    res = train(UnfoldModel(stages=1, channels=4, blocks=1), tiny_cfg(epochs_per_phase=(1, 1, 0)))
    assert [r["phase"] for r in res.log] == [0, 0]


def test_three_stage_fallback_weights():
    res = train(UnfoldModel(stages=3, channels=4, blocks=1), tiny_cfg(epochs_per_phase=(1, 0, 0)))
    assert [r["phase"] for r in res.log] == [0]


def test_mode_mismatch_rejected():
    with pytest.raises(ValueError):
        train(UnfoldModel(channels=4, blocks=1, mode="color"), tiny_cfg())


def test_non_finite_loss_aborts(tmp_path):
    model = UnfoldModel(channels=4, blocks=1)
    model.stages[0].head.bias.data[...] = np.nan
    with pytest.raises(NumericError):
        train(model, tiny_cfg(), checkpoint_dir=tmp_path)
    assert (tmp_path / "last_finite.vcub").exists()


def test_color_training_runs():
    res = train(UnfoldModel(channels=4, blocks=1, mode="color"), tiny_cfg(mode="color", epochs_per_phase=(1, 1, 1)))
    assert len(res.log) == 3 and all(np.isfinite(r["loss"]) for r in res.log)


def test_mask_resampling_runs():
    res = train(UnfoldModel(channels=4, blocks=1), tiny_cfg(resample_masks_per_batch=True, epochs_per_phase=(1, 0, 0)))
    assert np.isfinite(res.log[0]["loss"])


def test_phase3_gradient_accumulation(rng):
    """Stage-1 gradient of the stage-wise loss = 0.5 * term-1 gradient + term-2 gradient, and matches FD."""
    model = UnfoldModel(channels=4, blocks=1, dtype="float64", seed=4)
    x = synth_scene(rng, 8, 8, 2)
    m = generate_masks(8, 8, 2, 9).data
    batch = SensingBatch(forward_measure(x, m).data, m, np.float64)
    truth = cubes_to_net(x[None])
    stage0 = model.stages[0].parameters()

    def grads(weights):
        for p in model.parameters():
            p.grad = None
        outs = forward_stages(model, batch)
        loss = None
        for o, wgt in zip(outs, weights):
            if wgt:
                term = K.scale(K.mse(o, truth), wgt)
                loss = term if loss is None else K.add(loss, term)
        loss.backward()
        return [p.grad.copy() for p in stage0]

    g_full = grads([0.5, 1.0])
    g_1 = grads([1.0, 0.0])
    g_2 = grads([0.0, 1.0])
    assert any(np.abs(g).max() > 0 for g in g_2)
    for a, b, c in zip(g_full, g_1, g_2):
        np.testing.assert_allclose(a, 0.5 * b + c, rtol=1e-10, atol=1e-14)

    def value():
        with K.no_grad():
            v1, v2 = forward_stages(model, batch)
        return stage_wise_loss(v1.data, v2.data, truth)

    prng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(20):
        k = int(prng.integers(len(stage0)))
        p = stage0[k]
        idx = tuple(int(prng.integers(s)) for s in p.shape)
        old = p.data[idx]
        p.data[idx] = old + h
        lp = value()
        p.data[idx] = old - h
        lm = value()
        p.data[idx] = old
        fd = (lp - lm) / (2 * h)
        assert abs(fd - g_full[k][idx]) <= 1e-4 * max(abs(fd), abs(g_full[k][idx]), 1e-7)
