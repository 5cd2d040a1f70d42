import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vcsnet import GapTVReconstructor, MeasurementSimulator, UnfoldingReconstructor
from vcsnet.exceptions import DimensionError
from vcsnet.gap_tv import GapTvConfig, gap_tv_reconstruct
from vcsnet.sensing import forward_measure, generate_masks
from vcsnet.training import synth_scene
from vcsnet.unfold_net import UnfoldModel, reconstruct_gray


def test_simulator_matches_functional(rng):
    x = rng.random((8, 8, 3))
    sim = MeasurementSimulator(mask_seed=4).fit(x)
    np.testing.assert_array_equal(sim.mask_, generate_masks(8, 8, 3, 4).data)
    np.testing.assert_array_equal(sim.transform(x), forward_measure(x, sim.mask_).data)
    stack = np.stack([x, x * 0.5])
    assert sim.fit_transform(stack).shape == (2, 8, 8)


def test_simulator_color_and_errors(rng):
    xc = rng.random((8, 8, 2, 3))
    assert MeasurementSimulator(color=True).fit_transform(xc).shape == (8, 8)
    with pytest.raises(NotFittedError):
        MeasurementSimulator().transform(rng.random((8, 8, 2)))
    with pytest.raises(DimensionError):
        MeasurementSimulator(mask=np.ones((4, 4, 2))).fit(rng.random((8, 8, 2)))


def test_params_and_clone():
    est = GapTVReconstructor(tv_weight=0.02)
    assert est.get_params()["tv_weight"] == 0.02
    c = clone(est.set_params(iters=7))
    assert c.iters == 7 and not hasattr(c, "config_")
    u = clone(UnfoldingReconstructor(channels=8, blocks=2))
    assert u.get_params()["channels"] == 8


def test_gap_tv_estimator_matches_functional(rng):
    x = rng.random((8, 8, 2))
    m = generate_masks(8, 8, 2, 0).data
    y = forward_measure(x, m).data
    est = GapTVReconstructor(mask=m, iters=5).fit()
    np.testing.assert_array_equal(est.predict(y), gap_tv_reconstruct(y, m, GapTvConfig(iters=5)))
    assert est.predict(np.stack([y, y])).shape == (2, 8, 8, 2)
    assert np.isfinite(est.score(x))
    with pytest.raises(ValueError):
        GapTVReconstructor().fit().predict(y)


def test_unfolding_estimator_fit_predict(rng):
    scenes = np.stack([synth_scene(rng, 8, 8, 2) for _ in range(4)])
    est = UnfoldingReconstructor(channels=4, blocks=1, epochs_per_phase=(1, 1, 1), batch_size=2, lr0=1e-3)
    est.fit(scenes)
    assert est.mask_.shape == (8, 8, 2) and len(est.loss_log_) == 3
    y = forward_measure(scenes[0], est.mask_).data
    np.testing.assert_array_equal(est.predict(y), reconstruct_gray(est.model_, y, est.mask_)[0])
    assert np.isfinite(est.score(scenes))


def test_unfolding_from_model(rng):
    model = UnfoldModel(channels=4, blocks=1)
    m = generate_masks(8, 8, 2, 0).data
    est = UnfoldingReconstructor.from_model(model, m)
    assert est.get_params()["channels"] == 4
    assert est.predict(np.zeros((8, 8))).shape == (8, 8, 2)
    with pytest.raises(NotFittedError):
        UnfoldingReconstructor().predict(np.zeros((8, 8)), mask=m)
