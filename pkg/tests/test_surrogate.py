"""Network, optimizer, and training-loop checks.

Gradients are verified against central finite differences; the training
loop is exercised on the constant family, whose targets are exact, so
convergence and determinism are separable from Monte Carlo noise.
"""

import math

import numpy as np
import pytest

from spherewalk.pde import ConstantFamily, LinearFamily
from spherewalk.surrogate import (
    Adam,
    PlateauScheduler,
    Surrogate,
    TrainConfig,
    TrainingDivergedError,
    backward,
    build_reference,
    surrogate_mse,
    train,
    weak_supervision_loss,
    write_history_csv,
)
from spherewalk.walker import WalkConfig


def zero_model(sizes):
    return Surrogate(sizes, init=False)


class TestForward:
    def test_zero_parameters_give_zero(self):
        model = zero_model([5, 8, 1])
        X = np.random.default_rng(0).normal(size=(6, 5))
        assert np.all(model.forward(X) == 0.0)

    def test_purity(self):
        model = Surrogate([4, 16, 1], np.random.default_rng(1))
        X = np.random.default_rng(2).normal(size=(3, 4))
        assert np.array_equal(model.forward(X), model.forward(X))

    def test_linear_passthrough(self):
        model = zero_model([3, 1])
        model.weights[0][0, 0] = 1.0
        assert model.forward([[3.5, -2.0, 7.0]])[0] == 3.5

    def test_tanh_unit(self):
        model = zero_model([3, 1, 1])
        model.weights[0][0, 0] = 1.0
        model.weights[1][0, 0] = 1.0
        out = model.forward([[3.5, 0.0, 0.0]])[0]
        assert out == pytest.approx(math.tanh(3.5), abs=1e-15)
        assert out == pytest.approx(0.9982, abs=1e-4)

    def test_feature_width_checked(self):
        model = zero_model([3, 1])
        with pytest.raises(ValueError):
            model.forward([[1.0, 2.0]])

    def test_glorot_init_scale(self):
        model = Surrogate([64, 64, 1], np.random.default_rng(3))
        limit = math.sqrt(6.0 / 128.0)
        w = model.weights[0]
        assert np.abs(w).max() <= limit
        assert np.abs(w).max() > 0.5 * limit


class TestLoss:
    def test_perfect_fit_zero_loss_zero_grads(self):
        model = Surrogate([3, 6, 1], np.random.default_rng(4))
        X = np.random.default_rng(5).normal(size=(10, 3))
        y = model.forward(X)
        assert weak_supervision_loss(model, X, y) == 0.0
        gw, gb = backward(model, X, y)
        assert all(np.all(g == 0.0) for g in gw)
        assert all(np.all(g == 0.0) for g in gb)

    def test_unit_gap_unit_loss(self):
        model = zero_model([2, 1])
        model.biases[-1][0] = 1.0
        assert weak_supervision_loss(model, [[0.3, 0.4]], [0.0]) == 1.0

    def test_duplicating_pairs_preserves_loss(self):
        model = Surrogate([3, 5, 1], np.random.default_rng(6))
        X = np.random.default_rng(7).normal(size=(8, 3))
        y = np.random.default_rng(8).normal(size=8)
        once = weak_supervision_loss(model, X, y)
        twice = weak_supervision_loss(model, np.tile(X, (2, 1)), np.tile(y, 2))
        assert twice == pytest.approx(once, rel=1e-15)

    def test_count_mismatch_rejected(self):
        model = zero_model([2, 1])
        with pytest.raises(ValueError):
            weak_supervision_loss(model, [[1.0, 2.0]], [1.0, 2.0])

    def test_gradients_match_finite_differences(self):
        model = Surrogate([4, 8, 1], np.random.default_rng(9))
        X = np.random.default_rng(10).normal(size=(6, 4))
        y = np.random.default_rng(11).normal(size=6)
        _, (gw, gb) = model.loss_and_grads(X, y)
        rng = np.random.default_rng(12)
        h = 1e-5
        checked = 0
        while checked < 20:
            k = int(rng.integers(len(model.weights)))
            use_bias = bool(rng.integers(2))
            arr = model.biases[k] if use_bias else model.weights[k]
            grad = gb[k] if use_bias else gw[k]
            idx = tuple(int(rng.integers(s)) for s in arr.shape)
            keep = arr[idx]
            arr[idx] = keep + h
            hi = weak_supervision_loss(model, X, y)
            arr[idx] = keep - h
            lo = weak_supervision_loss(model, X, y)
            arr[idx] = keep
            fd = (hi - lo) / (2.0 * h)
            assert abs(grad[idx] - fd) <= 1e-4 * max(1.0, abs(fd))
            checked += 1

    def test_target_scaling_chain_rule(self):
        # zero linear model: grad_W = -(2/n) X^T y, exactly linear in y
        model = zero_model([3, 1])
        X = np.random.default_rng(13).normal(size=(5, 3))
        y = np.random.default_rng(14).normal(size=5)
        (gw1, _) = backward(model, X, y)
        (gw2, _) = backward(model, X, 2.0 * y)
        assert np.allclose(gw2[0], 2.0 * gw1[0], rtol=1e-14)
        assert np.allclose(gw1[0], -(2.0 / 5.0) * X.T @ y[:, None], rtol=1e-12)


class TestOptimizer:
    def test_adam_first_step_magnitude(self):
        model = zero_model([1, 1])
        opt = Adam(model, lr=0.1, weight_decay=0.0)
        opt.step(([np.array([[1.0]])], [np.array([0.0])]))
        assert model.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-7)

    def test_weight_decay_shrinks_parameters(self):
        model = zero_model([1, 1])
        model.weights[0][0, 0] = 1.0
        opt = Adam(model, lr=0.01, weight_decay=0.1)
        zero = ([np.zeros((1, 1))], [np.zeros(1)])
        for _ in range(5):
            opt.step(zero)
        assert 0.0 < model.weights[0][0, 0] < 1.0

    def test_plateau_decays_on_stagnation(self):
        sched = PlateauScheduler(1.0, factor=0.9, patience=2, window=5)
        lr = 1.0
        for _ in range(20):
            lr = sched.step(1.0)
        assert lr == pytest.approx(0.9)

    def test_plateau_holds_while_improving(self):
        sched = PlateauScheduler(1.0, factor=0.9, patience=2, window=5)
        loss, lr = 1.0, 1.0
        for _ in range(40):
            lr = sched.step(loss)
            loss *= 0.9
        assert lr == 1.0

    def test_plateau_respects_floor(self):
        sched = PlateauScheduler(1e-6, factor=0.5, patience=0, window=1, min_lr=1e-6)
        for _ in range(10):
            lr = sched.step(1.0)
        assert lr == 1e-6


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        model = Surrogate([5, 16, 8, 1], np.random.default_rng(15))
        path = tmp_path / "model.bin"
        model.save(path)
        again = Surrogate.load(path)
        assert again.sizes == model.sizes
        for a, b in zip(again.weights, model.weights):
            assert np.array_equal(a, b)
        for a, b in zip(again.biases, model.biases):
            assert np.array_equal(a, b)
        X = np.random.default_rng(16).normal(size=(4, 5))
        assert np.array_equal(again.forward(X), model.forward(X))

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"abcdefgh")
        with pytest.raises(ValueError):
            Surrogate.load(path)


def const_cfg(**kw):
    base = dict(
        epochs=300,
        points_per_instance=32,
        instances=4,
        trajectories=4,
        lr=1e-3,
        plateau_window=50,
        seed=0,
        walk=WalkConfig(rng_seed=3),
    )
    base.update(kw)
    return TrainConfig(**base)


class TestTraining:
    def test_zero_epochs_is_identity(self):
        fam = ConstantFamily()
        model = Surrogate([3, 8, 1], np.random.default_rng(17))
        before = [w.copy() for w in model.weights]
        _, history = train(model, fam, const_cfg(epochs=0), np.random.default_rng(18))
        assert history == []
        assert all(np.array_equal(a, b) for a, b in zip(before, model.weights))

    def test_constant_family_converges(self):
        fam = ConstantFamily()
        model = Surrogate([3, 64, 64, 1], np.random.default_rng(19))
        cfg = const_cfg(
            epochs=2000,
            instances=32,
            points_per_instance=64,
            trajectories=1,
            lr=3e-3,
            plateau_window=25,
        )
        _, history = train(model, fam, cfg, np.random.default_rng(20))
        assert len(history) == 2000
        # exact targets: c is both the boundary constant and the solution
        rng = np.random.default_rng(21)
        errs = []
        for k in range(20):
            inst = fam.sample_instance(rng, 1000 + k)
            pts = fam.sample_points(inst, 16, rng)
            pred = model.forward(fam.features(inst, pts))
            errs.append((pred - inst.c) ** 2)
        assert float(np.concatenate(errs).mean()) < 1e-4

    def test_cached_loss_decreases(self):
        fam = ConstantFamily()
        model = Surrogate([3, 16, 16, 1], np.random.default_rng(22))
        _, history = train(model, fam, const_cfg(epochs=400), np.random.default_rng(23))
        losses = [h.loss for h in history]
        head = np.median(losses[: len(losses) // 10])
        tail = np.median(losses[-len(losses) // 10 :])
        assert tail < head

    def test_deterministic_training(self):
        fam = ConstantFamily()

        def run():
            model = Surrogate([3, 8, 8, 1], np.random.default_rng(24))
            train(model, fam, const_cfg(epochs=40), np.random.default_rng(25))
            return model

        a, b = run(), run()
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        assert all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))

    def test_divergence_guard(self):
        fam = ConstantFamily()
        model = Surrogate([3, 16, 1], np.random.default_rng(26))
        with pytest.raises(TrainingDivergedError):
            train(model, fam, const_cfg(epochs=50, lr=1e6), np.random.default_rng(27))

    def test_non_cached_mode_runs(self):
        fam = ConstantFamily()
        model = Surrogate([3, 8, 1], np.random.default_rng(28))
        cfg = const_cfg(epochs=30, caching=False, instances=2, points_per_instance=8)
        _, history = train(model, fam, cfg, np.random.default_rng(29))
        assert len(history) == 30
        assert all(np.isfinite(h.loss) for h in history)

    def test_history_csv(self, tmp_path):
        fam = ConstantFamily()
        model = Surrogate([3, 8, 1], np.random.default_rng(30))
        _, history = train(model, fam, const_cfg(epochs=5), np.random.default_rng(31))
        path = tmp_path / "history.csv"
        write_history_csv(path, history)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,lr,wall"
        assert len(lines) == 6


class TestReference:
    def test_reference_and_scoring(self):
        fam = LinearFamily()
        rng = np.random.default_rng(32)
        ref = build_reference(fam, 3, 4, 50, WalkConfig(rng_seed=33), rng)
        assert len(ref.instances) == 3
        assert ref.means[0].shape == (4,)
        model = Surrogate([fam.feature_dim, 8, 1], np.random.default_rng(34))
        raw, corrected = surrogate_mse(model, fam, ref)
        assert raw > 0.0
        assert corrected <= raw
