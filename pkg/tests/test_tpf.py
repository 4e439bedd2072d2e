import math

import numpy as np
import pytest

from tcslam.channel import MultipathObservation, NoiseModel, angles_to, observation_vector
from tcslam.rng import substream
from tcslam.tpf import (
    CvtFilter,
    TpfConfig,
    VehicleFilter,
    cvt_path_loglik,
    estimate,
    init_cvt_filter,
    init_vehicle_filter,
    kernel_width,
    log_kernel,
    predict_cvt,
    predict_vehicle,
    random_batches,
    resample,
    run_slot,
    update_cvt_batch,
    update_vehicle_batch,
    vehicle_path_loglik,
)

from oracles import single_pass_dual_update

UE_H = 1.5


def _obs(ue_xy, vt, vehicle=0, path=1):
    th, ph, d = angles_to(np.asarray(vt, dtype=float) - np.array([*ue_xy, UE_H]))
    return MultipathObservation(th, ph, d, vehicle, path)


def _point(pos, n=1, cls=VehicleFilter, fid=0):
    return cls(np.tile(np.asarray(pos, dtype=float), (n, 1)), None, fid)


def test_predict_trapezoid_and_zero_motion():
    f = _point([0, 0], 5)
    predict_vehicle(f, [1, 0], [2, 0], 0.1, NoiseModel.noiseless(), np.random.default_rng(0))
    np.testing.assert_allclose(f.positions, np.tile([0.15, 0], (5, 1)), atol=1e-15)
    g = _point([3, 4], 5)
    predict_vehicle(g, [0, 0], [0, 0], 0.1, NoiseModel.noiseless(), np.random.default_rng(0))
    np.testing.assert_array_equal(g.positions, np.tile([3, 4], (5, 1)))


def test_predict_deterministic_and_weights_untouched():
    noise = NoiseModel()
    a = init_vehicle_filter([0, 0], 50, 3.0, 2.0, substream(1, "gps", 0, 1))
    b = a.copy()
    a.weights = b.weights = np.linspace(1, 2, 50) / np.linspace(1, 2, 50).sum()
    w = a.weights.copy()
    predict_vehicle(a, [5, 0], [6, 0], 0.1, noise, substream(1, "predict", 3, 0))
    predict_vehicle(b, [5, 0], [6, 0], 0.1, noise, substream(1, "predict", 3, 0))
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.weights, w)


def test_predict_cvt_identity():
    f = CvtFilter(np.random.default_rng(0).normal(size=(10, 3)))
    before = f.positions.copy()
    assert predict_cvt(predict_cvt(f)) is f
    np.testing.assert_array_equal(f.positions, before)


def test_init_cvt_point_mass_noiseless():
    vf = _point([10, 2], 30)
    vt = np.array([50.0, 36.0, 8.0])
    cf = init_cvt_filter([(vf, _obs([10, 2], vt))], 40, NoiseModel.noiseless(), np.random.default_rng(0))
    np.testing.assert_allclose(cf.positions, np.tile(vt, (40, 1)), atol=1e-9)
    np.testing.assert_allclose(cf.weights, 1 / 40)


def test_init_cvt_spread_along_ray():
    vf = _point([0, 0], 10)
    z = _obs([0, 0], [40.0, 10.0, 8.0])
    noise = NoiseModel(sigma_d=2.61, sigma_angle=math.radians(2.08))
    cf = init_cvt_filter([(vf, z)], 10_000, noise, np.random.default_rng(5))
    u = observation_vector(z) / z.distance
    along = (cf.positions - np.array([0, 0, UE_H])) @ u - z.distance
    # truncated at 2 sigma: std = sigma * sqrt(1 - 2*2*phi(2)/(2*Phi(2)-1))
    from scipy.stats import norm

    k = 2.0
    trunc_std = 2.61 * math.sqrt(1 - 2 * k * norm.pdf(k) / (2 * norm.cdf(k) - 1))
    assert np.std(along) == pytest.approx(trunc_std, rel=0.10)
    # the spread grows with sigma_d
    wide = init_cvt_filter([(vf, z)], 10_000, NoiseModel(sigma_d=5.0, sigma_angle=math.radians(2.08)),
                           np.random.default_rng(5))
    assert np.std((wide.positions - [0, 0, UE_H]) @ u) > np.std(along)


def test_log_kernel_is_gaussian_pdf():
    d = np.array([0.0, 1.0, 2.5])
    np.testing.assert_allclose(np.exp(log_kernel(d**2, 2.0)),
                               np.exp(-0.5 * d**2 / 4) / (2 * math.sqrt(2 * math.pi)))


def test_kernel_width():
    z = MultipathObservation(0, 1, 50.0, 0, 1)
    noise = NoiseModel()
    assert kernel_width(z, noise, TpfConfig()) == pytest.approx(math.hypot(2.61, 50 * math.radians(2.08)))
    assert kernel_width(z, noise, TpfConfig(sigma_w=0.7)) == 0.7
    assert kernel_width(z, NoiseModel.noiseless(), TpfConfig()) == 1e-3


def test_cvt_update_peak_and_far_particle():
    truth_xy = np.array([10.0, 2.0])
    vt = np.array([50.0, 36.0, 8.0])
    z = _obs(truth_xy, vt)
    vf = _point(truth_xy)
    ll = cvt_path_loglik(np.array([vt, vt + [100, 0, 0]]), vf, z, 1.0, UE_H)
    assert ll[0] == pytest.approx(log_kernel(np.array([0.0]), 1.0)[0])
    cf = CvtFilter(np.array([vt, vt + [100, 0, 0]]))
    update_cvt_batch(cf, np.arange(2), [z], {0: vf}, [1.0], UE_H)
    assert cf.weights[1] < 1e-300 and cf.weights[0] == pytest.approx(1.0)


def test_vehicle_update_peak_and_empty_paths():
    truth_xy = np.array([10.0, 2.0])
    vt = np.array([50.0, 0.0, 8.0])
    z = _obs(truth_xy, vt)
    cf = _point(vt, cls=CvtFilter)
    ll = vehicle_path_loglik(np.array([truth_xy, truth_xy + 1]), cf, z, 1.0)
    assert ll[0] == pytest.approx(log_kernel(np.array([0.0]), 1.0)[0])
    assert ll[0] > ll[1]
    vf = VehicleFilter(np.random.default_rng(0).normal(size=(8, 2)))
    w = vf.weights.copy()
    assert update_vehicle_batch(vf, np.arange(8), []) is False
    np.testing.assert_array_equal(vf.weights, w)


def test_multipath_likelihood_factorizes():
    rng = np.random.default_rng(3)
    truth_xy = np.array([20.0, -4.0])
    vts = [np.array([50.0, 0, 8]), np.array([50.0, 36, 8])]
    zs = [_obs(truth_xy, v, 0, p + 1) for p, v in enumerate(vts)]
    cvts = [CvtFilter(v + rng.normal(0, 1, (30, 3))) for v in vts]
    pts = truth_xy + rng.normal(0, 2, (12, 2))
    prod = sum(vehicle_path_loglik(pts, c, z, 2.0) for c, z in zip(cvts, zs))
    vf = VehicleFilter(pts.copy())
    update_vehicle_batch(vf, np.arange(12), [(c, z, 2.0) for c, z in zip(cvts, zs)])
    expected = np.exp(prod - prod.max())
    np.testing.assert_allclose(vf.weights, expected / expected.sum(), rtol=1e-10)

    cf = CvtFilter(vts[0] + rng.normal(0, 1, (20, 3)))
    vfs = {0: VehicleFilter(truth_xy + rng.normal(0, 1, (15, 2))), 1: VehicleFilter(truth_xy + 3 + rng.normal(0, 1, (15, 2)))}
    z1 = _obs(truth_xy + 3, vts[0], 1, 1)
    single = cvt_path_loglik(cf.positions, vfs[0], zs[0], 2.0, UE_H) + cvt_path_loglik(cf.positions, vfs[1], z1, 2.0, UE_H)
    update_cvt_batch(cf, np.arange(20), [zs[0], z1], vfs, [2.0, 2.0], UE_H)
    expected = np.exp(single - single.max())
    np.testing.assert_allclose(cf.weights, expected / expected.sum(), rtol=1e-10)


def test_batch_update_keeps_batch_mass():
    vf = VehicleFilter(np.random.default_rng(0).normal(size=(12, 2)))
    cf = _point([50.0, 0.0, 8.0], 4, CvtFilter)
    z = _obs([0, 0], [50, 0, 8])
    batch = np.array([1, 4, 7])
    update_vehicle_batch(vf, batch, [(cf, z, 1.0)])
    assert vf.weights[batch].sum() == pytest.approx(3 / 12)
    rest = np.setdiff1d(np.arange(12), batch)
    np.testing.assert_allclose(vf.weights[rest], 1 / 12)
    assert vf.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_far_particles_do_not_underflow():
    # Log-domain weights: a cloud 1e6 m away still ranks particles instead of
    # collapsing to all-zero weights.
    vf = VehicleFilter(np.array([[0.0, 0], [1, 0], [2, 0]]))
    cf = _point([1e6, 0, 0], 2, CvtFilter)
    z = MultipathObservation(0.0, math.pi / 2, 1.0, 0, 1)
    assert update_vehicle_batch(vf, np.arange(3), [(cf, z, 1e-3)]) is False
    assert vf.weights[2] == pytest.approx(1.0)


def test_degeneracy_resets_uniform():
    vf = VehicleFilter(np.zeros((6, 2)))
    cf = _point([np.inf, 0, 0], 2, CvtFilter)
    z = MultipathObservation(0.0, math.pi / 2, 1.0, 0, 1)
    with np.errstate(invalid="ignore"):
        assert update_vehicle_batch(vf, np.arange(6), [(cf, z, 1.0)]) is True
    np.testing.assert_allclose(vf.weights, 1 / 6)


def test_resample():
    rng = np.random.default_rng(0)
    f = VehicleFilter(rng.normal(size=(20, 2)))
    pos = f.positions.copy()
    assert resample(f, 0.5, rng) is False
    np.testing.assert_array_equal(f.positions, pos)
    f.weights = np.zeros(20)
    f.weights[7] = 1.0
    assert resample(f, 0.5, rng) is True
    np.testing.assert_array_equal(f.positions, np.tile(pos[7], (20, 1)))
    np.testing.assert_allclose(f.weights, 1 / 20)


def test_estimate():
    f = VehicleFilter(np.array([[0.0, 0], [2, 0]]))
    np.testing.assert_allclose(estimate(f), [1, 0])
    f.weights = np.array([0.0, 1.0])
    np.testing.assert_allclose(estimate(f), [2, 0])
    pts = np.random.default_rng(1).normal(size=(10, 2))
    sym = VehicleFilter(np.vstack([pts, -pts]))
    np.testing.assert_allclose(estimate(sym), [0, 0], atol=1e-15)


def test_random_batches_partition():
    for n, nb in [(120, 10), (121, 10), (10, 10), (7, 1)]:
        bs = random_batches(n, nb, np.random.default_rng(n))
        allidx = np.concatenate(bs)
        assert len(bs) == nb
        assert sorted(allidx.tolist()) == list(range(n))
        assert max(map(len, bs)) - min(map(len, bs)) <= 1


def test_config_validation():
    with pytest.raises(ValueError):
        TpfConfig(n_batches=0)
    with pytest.raises(ValueError):
        TpfConfig(n_vehicle=5, n_batches=10)
    with pytest.raises(ValueError):
        TpfConfig(xi=0)
    with pytest.raises(ValueError):
        TpfConfig(sigma_w=-1)


def _scene(rng, n_v=12, n_c=9):
    truth_xy = np.array([20.0, 3.0])
    vt = np.array([50.0, 0.0, 8.0])
    z = _obs(truth_xy, vt)
    z = MultipathObservation(z.theta + 0.01, z.phi - 0.01, z.distance + 0.7, 0, 1)
    vf = VehicleFilter(truth_xy + rng.normal(0, 2, (n_v, 2)), None, 0)
    vf.weights = rng.uniform(0.5, 1.5, n_v)
    vf.weights /= vf.weights.sum()
    cf = CvtFilter(vt + rng.normal(0, 2, (n_c, 3)), None, 0)
    return vf, cf, z


def test_single_batch_matches_direct_implementation():
    rng = np.random.default_rng(11)
    vf, cf, z = _scene(rng)
    sigma = 2.5
    exp_v, exp_c = single_pass_dual_update(vf.positions.tolist(), vf.weights.tolist(), cf.positions.tolist(),
                                           cf.weights.tolist(), observation_vector(z).tolist(), sigma, UE_H)
    cfg = TpfConfig(n_vehicle=12, n_cvt=9, n_batches=1, sigma_w=sigma, resample_trigger=0.0)
    res = run_slot({0: vf}, {0: cf}, {0: [(0, 1)]}, {(0, 1): z}, cfg, NoiseModel())
    assert res.iterations == 1
    np.testing.assert_allclose(vf.weights, exp_v, rtol=1e-9)
    np.testing.assert_allclose(cf.weights, exp_c, rtol=1e-9)


def test_run_slot_weights_stay_normalized():
    rng = np.random.default_rng(2)
    vf, cf, z = _scene(rng, 120, 120)
    res = run_slot({0: vf}, {0: cf}, {0: [(0, 1)]}, {(0, 1): z}, TpfConfig(), NoiseModel(), keep_history=True)
    assert abs(vf.weights.sum() - 1) < 1e-9 and abs(cf.weights.sum() - 1) < 1e-9
    assert 1 <= res.iterations <= 10 and len(res.history) == res.iterations


def test_run_slot_zero_noise_exact():
    truth_xy = np.array([20.0, 3.0])
    vts = [np.array([50.0, 0.0, 8.0]), np.array([50.0, 36.0, 8.0])]
    vf = _point(truth_xy, 120)
    cfs = {u: _point(v, 120, CvtFilter, u) for u, v in enumerate(vts)}
    obs = {(0, p + 1): _obs(truth_xy, v, 0, p + 1) for p, v in enumerate(vts)}
    res = run_slot({0: vf}, cfs, {0: [(0, 1)], 1: [(0, 2)]}, obs, TpfConfig(), NoiseModel.noiseless())
    assert np.linalg.norm(res.vehicles[0] - truth_xy) < 1e-6
    for u, v in enumerate(vts):
        assert np.linalg.norm(res.cvts[u] - v) < 1e-6


def test_run_slot_without_paths_leaves_weights():
    vf = VehicleFilter(np.random.default_rng(0).normal(size=(20, 2)))
    w = vf.weights.copy()
    res = run_slot({0: vf}, {}, {}, {}, TpfConfig(n_vehicle=20, n_cvt=20), NoiseModel())
    np.testing.assert_array_equal(vf.weights, w)
    assert res.iterations == 1
