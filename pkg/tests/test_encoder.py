import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qsnn import encoder as enc
from qsnn import neuro
from qsnn.encoder import EncodeConfig

CFG = EncodeConfig()
HP = math.pi / 2

unit = st.floats(0, 1)
angle = st.floats(0, HP)


def rate_oracle(b, phi):
    """Straight evaluation of the recovery formula, no guard or clamp."""
    return (b - math.sin(phi)) / (math.cos(phi) - math.sin(phi))


class TestConfig:
    def test_defaults(self):
        assert (CFG.T, CFG.T_sp, CFG.r_max, CFG.dt) == (50.0, 20.0, 250.0, 1.0)
        assert CFG.n_steps == 50 and CFG.n_window == 20
        assert CFG.spike_probability == pytest.approx(0.25)

    @pytest.mark.parametrize("kw", [dict(T_sp=60), dict(T_sp=0), dict(dt=0), dict(dt=25),
                                    dict(measurement="x"), dict(shots=0), dict(dt=5.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EncodeConfig(**kw)


class TestSuperpose:
    def test_white_full_inversion(self):
        assert enc.superpose(np.array([1.0]), HP).blended[0] == pytest.approx(0.0, abs=1e-15)

    def test_identity(self):
        assert enc.superpose(np.array([0.3]), 0.0).blended[0] == 0.3

    def test_quarter(self):
        assert enc.superpose(np.array([0.2]), math.pi / 4).blended[0] == pytest.approx(0.70711, abs=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            enc.superpose(np.zeros(4), np.zeros(3))

    @pytest.mark.parametrize("theta", [-0.01, HP + 0.01, math.nan])
    def test_theta_range(self, theta):
        with pytest.raises(ValueError):
            enc.superpose(np.zeros(3), theta)

    def test_intensity_range(self):
        with pytest.raises(ValueError):
            enc.superpose(np.array([1.2]), 0.0)

    @given(hnp.arrays(np.float64, 16, elements=unit), hnp.arrays(np.float64, 16, elements=angle))
    def test_invariants(self, x, t):
        s = enc.superpose(x, t)
        assert np.all(np.abs(np.cos(s.theta) ** 2 + np.sin(s.theta) ** 2 - 1) <= 1e-12)
        ref = x * np.cos(t) + (1 - x) * np.sin(t)
        assert np.all(np.abs(s.blended - ref) <= 1e-12)
        assert np.all((s.blended >= 0) & (s.blended <= math.sqrt(2) + 1e-12))

    def test_batch_rows(self):
        s = enc.superpose(np.full((3, 4), 0.5), 0.0)
        assert len(s) == 3 and s.row(1).clean.shape == (4,)


class TestPixelPhase:
    def test_zero(self):
        assert enc.pixel_phase(0.0, 1.0) == 0.0

    def test_quarter(self):
        assert enc.pixel_phase(0.5, 0.5) == pytest.approx(0.78540, abs=1e-5)

    def test_pi8(self):
        P, Q = math.sin(math.pi / 8) ** 2, math.cos(math.pi / 8) ** 2
        assert enc.pixel_phase(P, Q) == pytest.approx(math.atan(math.tan(math.pi / 8) ** 2), abs=1e-15)
        # the rounded reference 0.16994 carries ~2e-5 of rounding; the exact value is 0.169918
        assert enc.pixel_phase(0.14645, 0.85355) == pytest.approx(0.16994, abs=5e-5)

    def test_q_zero(self):
        assert enc.pixel_phase(1.0, 0.0) == pytest.approx(HP)

    def test_both_zero(self):
        with pytest.raises(ValueError):
            enc.pixel_phase(0.0, 0.0)

    def test_monotone_in_theta(self):
        t = np.linspace(0, HP, 2001)
        P, Q = np.sin(t) ** 2, np.cos(t) ** 2
        assert np.all(np.diff(enc.pixel_phase(P, Q)) > 0)


class TestAggregate:
    def test_per_pixel(self):
        assert np.array_equal(enc.aggregate_phase([0.1, 0.2], "per_pixel").aggregated, [0.1, 0.2])

    def test_mean_30_percent(self):
        phases = np.zeros(784)
        phases[: int(0.3 * 784)] = HP
        est = enc.aggregate_phase(phases, "mean")
        assert est.aggregated == pytest.approx(phases.mean())
        assert est.aggregated == pytest.approx(0.47124, abs=2e-3)  # 235/784 pixels, not exactly 30%

    def test_mean_exact_fraction(self):
        phases = np.zeros(1000)
        phases[:300] = HP
        assert enc.aggregate_phase(phases, "mean").aggregated == pytest.approx(0.47124, abs=1e-5)

    def test_median_zeros(self):
        assert enc.aggregate_phase(np.zeros(784), "median").aggregated == 0.0

    def test_median_lower_middle(self):
        assert enc.aggregate_phase([0.4, 0.1, 0.3, 0.2], "median").aggregated == 0.2
        assert enc.aggregate_phase([0.3, 0.1, 0.2], "median").aggregated == 0.2

    def test_median_scale(self):
        assert enc.aggregate_phase([0.4, 0.4, 0.4], "median", median_scale=0.5).aggregated == 0.2

    def test_empty(self):
        with pytest.raises(ValueError):
            enc.aggregate_phase([], "mean")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            enc.aggregate_phase([0.1], "max")

    def test_batched_broadcast(self):
        est = enc.aggregate_phase(np.array([[0.0, HP], [HP, HP]]), "mean")
        assert np.allclose(est.broadcast(), [[HP / 2] * 2, [HP] * 2])


class TestRecoverRate:
    def test_examples(self):
        assert enc.recover_rate(0.8, 0.0) == pytest.approx(0.8)
        assert enc.recover_rate(0.2, HP) == pytest.approx(0.8)
        # rounded reference 0.95585 was computed from 5-digit sines; exact value 0.955876
        assert enc.recover_rate(0.9, math.pi / 8) == pytest.approx(0.95585, abs=5e-5)
        assert enc.recover_rate(0.9, math.pi / 8) == pytest.approx(rate_oracle(0.9, math.pi / 8), abs=1e-15)

    @given(unit)
    def test_singular_guard(self, b):
        assert enc.recover_rate(b, math.pi / 4) == 0.5

    def test_limit_at_quarter(self):
        # at phi -> pi/4 with blended = (x + 1 - x)/sqrt(2) the formula tends to 0.5
        b = 1 / math.sqrt(2)
        for d in (1e-4, -1e-4):
            assert rate_oracle(b, math.pi / 4 + d) == pytest.approx(0.5, abs=1e-4)

    @given(unit, angle)
    def test_clamped(self, b, phi):
        r = enc.recover_rate(b, phi)
        assert 0.0 <= r <= 1.0

    @given(hnp.arrays(np.float64, 64, elements=unit), st.sampled_from([0.0, HP]))
    def test_round_trip_identity(self, x, theta):
        s = enc.superpose(x, theta)
        P, Q = enc.qcircuit.exact_probabilities(s.theta)
        phi = enc.pixel_phase(P, Q)
        assert np.all(np.abs(enc.recover_rate(s.blended, phi) - x) <= 1e-9)

    @given(hnp.arrays(np.float64, 64, elements=unit), angle.filter(lambda t: abs(t - math.pi / 4) > 0.05))
    def test_blend_consistency(self, x, theta):
        s = enc.superpose(x, theta)
        assert np.all(np.abs(enc.recover_rate(s.blended, theta) - x) <= 1e-9)


class TestSpikeTrain:
    def test_rate_zero_empty(self):
        assert enc.gen_spike_train(0.0, 0.3, CFG, seed=1).sum() == 0

    def test_phase_zero_window(self):
        trains = np.array([enc.gen_spike_train(1.0, 0.0, CFG, seed=s) for s in range(200)])
        assert trains[:, 20:].sum() == 0 and trains[:, :20].sum() > 0

    def test_phase_half_pi_window_and_mean(self):
        trains = np.array([enc.gen_spike_train(1.0, HP, CFG, seed=s) for s in range(1000)])
        assert trains[:, :30].sum() == 0
        counts = trains.sum(axis=1)
        se = math.sqrt(20 * 0.25 * 0.75 / 1000)
        assert abs(counts.mean() - 5.0) <= 4 * se

    def test_window_start(self):
        assert enc.window_start(0.0, CFG) == 0
        assert enc.window_start(HP, CFG) == 30
        assert enc.window_start(math.pi / 4, CFG) == 15

    def test_rate_range(self):
        with pytest.raises(ValueError):
            enc.gen_spike_train(1.5, 0.0, CFG, seed=0)

    def test_probability_overflow_is_config_error(self):
        with pytest.raises(ValueError):
            EncodeConfig(r_max=2000.0, dt=1.0)

    def test_seeded_per_pixel(self):
        a = enc.gen_spike_train(0.7, 0.2, CFG, seed=4, sample=3, pixel=10)
        b = enc.gen_spike_train(0.7, 0.2, CFG, seed=4, sample=3, pixel=10)
        c = enc.gen_spike_train(0.7, 0.2, CFG, seed=4, sample=3, pixel=11)
        assert np.array_equal(a, b) and not np.array_equal(a, c)


def _image(seed=0, n=784):
    rng = np.random.default_rng(seed)
    return rng.random(n) * (rng.random(n) < 0.4)


class TestEncodeImage:
    def test_theta_zero(self):
        x = _image()
        t = enc.encode_image(enc.superpose(x, 0.0), "per_pixel", CFG, seed=2)
        assert np.all(t.t0 == 0)
        assert np.allclose(t.rates, x, atol=1e-12)
        assert t.trains[:, 20:].sum() == 0

    def test_theta_half_pi(self):
        x = _image()
        t = enc.encode_image(enc.superpose(x, HP), "per_pixel", CFG, seed=2)
        assert np.all(t.t0 == 30)
        assert np.allclose(t.rates, x, atol=1e-9)
        assert t.trains[:, :30].sum() == 0

    def test_theta_quarter(self):
        t = enc.encode_image(enc.superpose(_image(), math.pi / 4), "per_pixel", CFG, seed=2)
        assert np.all(t.rates == 0.5) and np.all(t.t0 == 15)

    def test_deterministic(self):
        img = enc.superpose(_image(3), 0.4)
        a = enc.encode_image(img, "mean", CFG, seed=7, sample_id=2)
        b = enc.encode_image(img, "mean", CFG, seed=7, sample_id=2)
        assert np.array_equal(a.trains, b.trains) and np.array_equal(a.t0, b.t0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from(enc.AGGREGATION_MODES),
           hnp.arrays(np.float64, 49, elements=angle), st.sampled_from(["exact", "sampled"]))
    def test_window_confinement(self, seed, mode, theta, measurement):
        cfg = EncodeConfig(measurement=measurement, shots=50)
        x = np.random.default_rng(seed).random(49)
        t = enc.encode_image(enc.superpose(x, theta), mode, cfg, seed=seed)
        steps = np.arange(cfg.n_steps)
        inside = (steps >= t.t0[:, None]) & (steps < t.t0[:, None] + cfg.n_window)
        assert t.trains[~inside].sum() == 0

    def test_batch_rejected(self):
        with pytest.raises(ValueError):
            enc.encode_image(enc.superpose(np.zeros((2, 4)), 0.0), "mean", CFG, 0)

    @pytest.mark.parametrize("mode", enc.AGGREGATION_MODES)
    @pytest.mark.parametrize("measurement", ["exact", "sampled"])
    def test_psp_matrix_matches_rasters(self, mode, measurement):
        cfg = EncodeConfig(measurement=measurement)
        rng = np.random.default_rng(5)
        imgs = enc.superpose(rng.random((4, 100)), rng.random((4, 100)) * HP)
        ids = np.array([3, 9, 10, 40])
        mat = enc.encode_psp(imgs, mode, cfg, seed=13, sample_ids=ids)
        kern = neuro.make_kernel()
        for i, sid in enumerate(ids):
            t = enc.encode_image(imgs.row(i), mode, cfg, seed=13, sample_id=sid)
            ref = np.array([neuro.psp(tr, kern, cfg.T) for tr in t.trains])
            assert np.allclose(mat[i], ref, rtol=1e-12, atol=1e-15)
