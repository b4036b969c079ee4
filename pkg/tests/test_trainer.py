import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from qsnn import _accel, baseline, trainer
from qsnn.neuro import CompartmentLayer, layer_forward, sigmoid
from qsnn.trainer import AdamState, Network

OUT = CompartmentLayer(np.zeros((1, 1)), np.zeros(1))  # r_max = 250 Hz, default conductances


def sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


# --- scalar oracle of the printed rule, one loop per index


def oracle_grads(net: Network, psp, label):
    h, o = net.hidden, net.output
    gain_h = h.g_B / (h.g_B + h.g_L)
    gain_o = o.g_B / (o.g_B + o.g_L)
    n_in, n_h, n_o = h.n_in, h.n_out, o.n_out
    vh = [gain_h * (sum(h.weights[i, j] * psp[j] for j in range(n_in)) + h.bias[i]) for i in range(n_h)]
    rh = [h.r_max * sig(v) for v in vh]
    vb = [sum(o.weights[k, i] * rh[i] for i in range(n_h)) + o.bias[k] for k in range(n_o)]
    vstar = [gain_o * v for v in vb]
    ratio = o.g_B / o.g_L
    delta = []
    for k in range(n_o):
        drive = (net.E_E if k == label else net.E_I) - vstar[k]
        v = (ratio * vb[k] + net.r_B * drive) / (2 + ratio)
        s = sig(vstar[k])
        delta.append(o.r_max * gain_o * (s - sig(v)) * s * (1 - s))
    dwo = [[delta[k] * rh[i] for i in range(n_h)] for k in range(n_o)]
    dwh, dbh = [], []
    for i in range(n_h):
        s = sig(vh[i])
        back = sum(delta[k] * o.weights[k, i] for k in range(n_o)) * h.r_max * gain_h * s * (1 - s)
        dbh.append(back)
        dwh.append([back * psp[j] for j in range(n_in)])
    return np.array(dwh), np.array(dbh), np.array(dwo), np.array(delta)


def small_net(rng, dims=(2, 3, 2), r_max=0.25):
    n_in, n_h, n_o = dims
    return Network.from_arrays(rng.normal(size=(n_h, n_in)), rng.normal(size=n_h),
                               rng.normal(size=(n_o, n_h)), rng.normal(size=n_o), r_max=r_max)


class TestTeaching:
    def test_examples(self):
        t = trainer.teaching_signal(0, np.zeros(10))
        assert t.v_inject[0] == 8.0
        assert np.all(t.v_inject[1:] == -8.0)
        assert trainer.teaching_signal(3, np.full(10, 8.0)).v_inject[3] == 0.0

    @given(st.integers(0, 9))
    def test_one_excitatory(self, label):
        v = np.random.default_rng(label).normal(size=10)
        t = trainer.teaching_signal(label, v)
        exc = np.isclose(t.v_inject, 8.0 - v)
        assert exc.sum() == 1 and exc[label]

    @pytest.mark.parametrize("label", [-1, 10])
    def test_label_range(self, label):
        with pytest.raises(ValueError):
            trainer.teaching_signal(label, np.zeros(10))

    def test_batched(self):
        t = trainer.teaching_signal(np.array([1, 2]), np.zeros((2, 10)))
        assert t.v_inject.shape == (2, 10) and t.v_inject[0, 1] == 8 and t.v_inject[1, 2] == 8


class TestNudgedSoma:
    def test_examples(self):
        assert trainer.nudged_soma(0.0, 8.0, OUT) == pytest.approx(0.57143, abs=1e-5)
        assert trainer.nudged_soma(1.0, 0.0, OUT) == pytest.approx(0.85714, abs=1e-5)

    @pytest.mark.parametrize("vb,vi", [(0.0, 8.0), (1.0, 0.0), (-2.3, -8.0), (0.7, 5.5)])
    def test_ode_oracle(self, vb, vi):
        ratio, tau = OUT.g_B / OUT.g_L, OUT.tau_L

        def rhs(_, v):
            return (-v + ratio * (vb - v) + vi - v) / tau

        sol = solve_ivp(rhs, (0, 50), [0.0], method="LSODA", rtol=1e-13, atol=1e-14)
        assert abs(sol.y[0, -1] - trainer.nudged_soma(vb, vi, OUT)) <= 1e-9

    def test_euler_oracle(self):
        ratio, tau, dt = 12.0, 10.0, 0.01
        v = 0.0
        for _ in range(5000):
            v += dt / tau * (-v + ratio * (0.4 - v) + 8.0 - v)
        assert abs(v - trainer.nudged_soma(0.4, 8.0, OUT)) <= 1e-9


class TestLoss:
    def test_zero_at_equal(self):
        v = np.linspace(-3, 3, 10)
        assert trainer.loss(v, v) == 0.0

    @given(st.lists(st.floats(-20, 20), min_size=10, max_size=10),
           st.lists(st.floats(-20, 20), min_size=10, max_size=10))
    def test_symmetric_nonnegative(self, a, b):
        a, b = np.array(a), np.array(b)
        assert trainer.loss(a, b) == trainer.loss(b, a) >= 0.0

    def test_one_unit(self):
        v = np.zeros(10)
        assert trainer.loss(v, v.copy()) == 0.0


class TestOutputGradient:
    def test_example(self):
        delta, dw, db = trainer.grads_output(np.array([0.57143]), np.array([0.0]), np.array([1.0]), OUT)
        exact = 250 * (12 / 13) * (0.5 - sig(0.57143)) * 0.25
        assert delta[0] == pytest.approx(exact, abs=1e-12)
        assert dw[0, 0] == db[0] == delta[0]
        # the reference value -8.0207 uses a mis-rounded sigma(0.57143) = 0.63901 (exact 0.639093)
        assert delta[0] == pytest.approx(-8.0207, abs=5e-3)

    def test_zero_when_matched(self):
        v = np.linspace(-1, 1, 4)
        lay = CompartmentLayer(np.ones((4, 3)), np.zeros(4))
        delta, dw, db = trainer.grads_output(v, v, np.ones(3), lay)
        assert not delta.any() and not dw.any() and not db.any()

    def test_linear_in_rates(self):
        _, dw1, db1 = trainer.grads_output(np.array([0.3]), np.array([0.1]), np.array([1.0]), OUT)
        _, dw2, db2 = trainer.grads_output(np.array([0.3]), np.array([0.1]), np.array([2.0]), OUT)
        assert dw2[0, 0] == 2 * dw1[0, 0] and db1[0] == db2[0]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            trainer.grads_output(np.zeros(2), np.zeros(2), np.ones(3), OUT)


class TestHiddenGradient:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.net = small_net(rng, (4, 3, 2))
        self.psp = rng.random(4)
        self.h = layer_forward(self.psp, self.net.hidden)

    def test_zero_delta(self):
        dw, db = trainer.grads_hidden(np.zeros(2), self.net.output.weights, self.h, self.psp, self.net.hidden)
        assert not dw.any() and not db.any()

    def test_orthogonality(self):
        w = self.net.output.weights.copy()
        w[:, 1] = 0.0
        dw, db = trainer.grads_hidden(np.array([0.7, -1.2]), w, self.h, self.psp, self.net.hidden)
        assert not dw[1].any() and db[1] == 0.0
        assert dw[0].any() and dw[2].any()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            trainer.grads_hidden(np.zeros(3), self.net.output.weights, self.h, self.psp, self.net.hidden)


def test_rule_matches_scalar_oracle_100_draws():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        net = small_net(rng)
        psp = rng.random(2) * 2
        label = int(rng.integers(0, 2))
        grads, _, _ = trainer.batch_gradients(net, psp[None], np.array([label]))
        dwh, dbh, dwo, delta = oracle_grads(net, psp, label)
        for got, ref in ((grads[0], dwh), (grads[1], dbh), (grads[2], dwo), (grads[3], delta)):
            worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst <= 1e-12


class TestFiniteDifferenceDiagnostic:
    def test_shapes_and_descent(self):
        rng = np.random.default_rng(0)
        net = small_net(rng, (3, 4, 2), r_max=1.0)
        psp, y = rng.random((5, 3)), rng.integers(0, 2, 5)
        before = [p.copy() for p in net.params]
        fd = trainer.finite_difference_gradients(net, psp, y)
        assert all(np.array_equal(a, b) for a, b in zip(before, net.params))
        assert [g.shape for g in fd] == [p.shape for p in net.params]
        start = trainer.batch_loss(net, psp, y)
        for p, g in zip(net.params, fd):
            p -= 1e-3 * g
        assert trainer.batch_loss(net, psp, y) < start

    def test_differs_from_rule(self):
        # the rule is not the exact gradient of the loss
        rng = np.random.default_rng(1)
        net = small_net(rng, (3, 4, 2), r_max=1.0)
        psp, y = rng.random((5, 3)), rng.integers(0, 2, 5)
        rule, _, _ = trainer.batch_gradients(net, psp, y)
        fd = trainer.finite_difference_gradients(net, psp, y)
        assert not np.allclose(rule[2], fd[2], rtol=1e-3, atol=0)


def _descends(seed):
    rng = np.random.default_rng(seed)
    net = trainer.init_network(20, 16, 10, seed=seed)
    psp = rng.random((8, 20))
    labels = rng.integers(0, 10, 8)

    def batch_loss():
        h, o = net.forward(psp)
        teach = trainer.teaching_signal(labels, o.v_soma)
        return trainer.loss(trainer.nudged_soma(o.v_basal, teach.v_inject, net.output), o.v_soma,
                            net.output.r_max)

    prev = batch_loss()
    for _ in range(20):
        grads, _, _ = trainer.batch_gradients(net, psp, labels)
        for p, g in zip(net.params, grads):
            p -= 1e-3 * g
        cur = batch_loss()
        if not cur < prev:
            return False
        prev = cur
    return True


def test_descent_property():
    assert sum(_descends(s) for s in range(100)) >= 95


def test_teaching_sign():
    # label unit already winning with V* near E_E: delta pulls sigma(V*) toward the nudged sigma(V)
    rng = np.random.default_rng(2)
    for _ in range(200):
        vb = rng.uniform(7.5, 9.5)
        v_star = OUT.soma_gain * vb
        v = trainer.nudged_soma(vb, 8.0 - v_star, OUT)
        delta = trainer.output_delta(np.array([v]), np.array([v_star]), OUT)[0]
        assert np.sign(delta) == np.sign(sigmoid(v_star) - sigmoid(v)) or delta == 0


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        trainer.adam_step(p, [np.zeros(2)], AdamState())
        assert np.array_equal(p[0], [1.0, -2.0])

    def test_first_step(self):
        p = [np.zeros(1)]
        trainer.adam_step(p, [np.ones(1)], AdamState())
        assert p[0][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-15)

    def test_scale_invariance(self):
        p = [np.zeros(2)]
        st_ = AdamState()
        for _ in range(100):
            trainer.adam_step(p, [np.array([1.0, 2.0])], st_)
        a, b = np.abs(p[0])
        assert abs(a - b) / b <= 0.05

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            trainer.adam_step([np.zeros(2)], [np.zeros(3)], AdamState())

    def test_moments_checked(self):
        st_ = AdamState()
        trainer.adam_step([np.zeros(2)], [np.ones(2)], st_)
        with pytest.raises(ValueError):
            trainer.adam_step([np.zeros(3)], [np.ones(3)], st_)


def _toy(n=200, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.random((10, 30))
    labels = rng.integers(0, 10, n)
    psp = np.clip(centers[labels] + rng.normal(0, 0.1, (n, 30)), 0, None)
    return psp, labels


class TestTraining:
    def test_empty(self):
        with pytest.raises(ValueError):
            trainer.train_epoch(trainer.init_network(30, 8, 10), np.zeros((0, 30)), np.zeros(0, int), 1, 0)

    def test_bad_batch(self):
        psp, y = _toy(10)
        with pytest.raises(ValueError):
            trainer.train_epoch(trainer.init_network(30, 8, 10), psp, y, 0, 0)

    @pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
    @pytest.mark.parametrize("bs", [1, 7])
    def test_backends_agree(self, bs):
        psp, y = _toy()
        a, b = trainer.init_network(30, 16, 10, seed=3), trainer.init_network(30, 16, 10, seed=3)
        oa, ob = AdamState(), AdamState()
        for ep in range(2):
            ma = trainer.train_epoch(a, psp, y, bs, ep, oa, backend="numba")
            mb = trainer.train_epoch(b, psp, y, bs, ep, ob, backend="numpy")
            assert ma.n_correct == mb.n_correct
            assert ma.loss_mean == pytest.approx(mb.loss_mean, rel=1e-12)
        for pa, pb in zip(a.params, b.params):
            assert np.allclose(pa, pb, rtol=0, atol=1e-12)
        assert oa.step == ob.step

    @pytest.mark.parametrize("backend", ["numpy", "numba"])
    def test_identical_samples_batch_size(self, backend):
        if backend == "numba" and not _accel.HAVE_NUMBA:
            pytest.skip("numba not installed")
        psp = np.tile(np.random.default_rng(0).random(30), (8, 1))
        y = np.full(8, 4)
        a, b = trainer.init_network(30, 16, 10, seed=1), trainer.init_network(30, 16, 10, seed=1)
        oa, ob = AdamState(), AdamState()
        trainer.train_epoch(a, psp, y, 8, 0, oa, backend=backend)
        trainer.train_epoch(b, psp[:1], y[:1], 1, 0, ob, backend=backend)
        for pa, pb in zip(a.params, b.params):
            assert np.allclose(pa, pb, rtol=0, atol=1e-15)

    def test_deterministic(self):
        psp, y = _toy()
        runs = []
        for _ in range(2):
            net = trainer.init_network(30, 16, 10, seed=9)
            m = trainer.train_epoch(net, psp, y, 4, 11)
            runs.append((m, [p.copy() for p in net.params]))
        assert runs[0][0] == runs[1][0]
        assert all(np.array_equal(p, q) for p, q in zip(runs[0][1], runs[1][1]))

    def test_loss_decreases_three_epochs(self):
        psp, y = _toy(1000, seed=4)
        net, opt = trainer.init_network(30, 32, 10, seed=0), AdamState()
        losses = [trainer.train_epoch(net, psp, y, 1, ep, opt).loss_mean for ep in range(3)]
        assert losses[0] > losses[1] > losses[2]

    def test_evaluate_after_training_bound(self):
        psp, y = _toy(500, seed=6)
        net, opt = trainer.init_network(30, 32, 10, seed=0), AdamState()
        for ep in range(3):
            m = trainer.train_epoch(net, psp, y, 1, ep, opt)
        assert trainer.evaluate(net, psp, y).accuracy >= m.accuracy - 0.05


class TestPredictEvaluate:
    def test_zero_net_tie_break(self):
        net = Network.from_arrays(np.zeros((5, 4)), np.zeros(5), np.zeros((10, 5)), np.zeros(10))
        assert trainer.predict(net, np.random.default_rng(0).random(4)) == 0

    @settings(max_examples=30)
    @given(st.integers(0, 2**31), st.floats(0.01, 100))
    def test_positive_scaling(self, seed, c):
        rng = np.random.default_rng(seed)
        net = Network.from_arrays(rng.normal(size=(6, 5)), np.zeros(6), rng.normal(size=(10, 6)), np.zeros(10))
        x = rng.random((20, 5))
        before = trainer.predict_batch(net, x)
        net.output.weights *= c
        assert np.array_equal(before, trainer.predict_batch(net, x))

    def test_purity_and_determinism(self):
        psp, y = _toy()
        net = trainer.init_network(30, 16, 10, seed=2)
        before = [p.copy() for p in net.params]
        m1, m2 = trainer.evaluate(net, psp, y), trainer.evaluate(net, psp, y)
        assert m1 == m2
        assert all(np.array_equal(p, q) and p.tobytes() == q.tobytes() for p, q in zip(before, net.params))

    def test_empty(self):
        with pytest.raises(ValueError):
            trainer.evaluate(trainer.init_network(30, 4, 10), np.zeros((0, 30)), np.zeros(0, int))

    def test_metrics_invariant(self):
        with pytest.raises(ValueError):
            trainer.Metrics(1.0, 5, 4)


class TestBaseline:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        m = baseline.MLP.init(6, 5, 10, seed=1)
        x, y = rng.random((4, 6)), rng.integers(0, 10, 4)
        grads, _ = m.gradients(x, y)
        for p, g in zip(m.params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(0, flat.size, max(1, flat.size // 7)):
                old = flat[i]
                flat[i] = old + 1e-6
                up = m.gradients(x, y)[1]
                flat[i] = old - 1e-6
                down = m.gradients(x, y)[1]
                flat[i] = old
                assert (up - down) / 2e-6 / len(y) == pytest.approx(gflat[i], abs=1e-6)

    def test_fit_learns_toy(self):
        psp, y = _toy(400)
        model = baseline.fit(psp, y, n_hidden=32, epochs=5, batch_size=16, seed=0)
        assert baseline.evaluate(model, psp, y).accuracy > 0.9

    def test_empty(self):
        with pytest.raises(ValueError):
            baseline.fit(np.zeros((0, 3)), np.zeros(0, int))
