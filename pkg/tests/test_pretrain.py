import csv

import numpy as np
import pytest

import sgdelf.pretrain as pretrain
from sgdelf import (AdamState, DivergenceError, FactorModel, TrainConfig,
                    adam_step, init_model, parse_ratings, sgd_step, train_adam,
                    train_sgd)
from sgdelf.data import make_synthetic, split
from sgdelf.pretrain import EpochTrace, write_epoch_trace

from conftest import random_model


def clone(model):
    return model.copy()


class TestSgdStep:
    def test_no_error_no_regularization_is_identity(self):
        rng = np.random.default_rng(1)
        m = random_model(rng, 2, 2, 3)
        before = clone(m)
        sgd_step(m, 0, 1, m.predict(0, 1), eta=0.1, lam=0.0)
        assert np.array_equal(m.P, before.P) and np.array_equal(m.Q, before.Q)
        assert np.array_equal(m.b, before.b) and np.array_equal(m.c, before.c)

    def test_hand_evaluated_step(self):
        m = FactorModel([[1.0]], [[1.0]], [0.0], [0.0])
        sgd_step(m, 0, 0, 2.0, eta=0.1, lam=0.0)
        assert m.P[0, 0] == pytest.approx(1.1, abs=1e-15)
        assert m.Q[0, 0] == pytest.approx(1.1, abs=1e-15)
        assert m.b[0] == pytest.approx(0.1, abs=1e-15)
        assert m.c[0] == pytest.approx(0.1, abs=1e-15)

    def test_pure_decay_when_residual_is_zero(self):
        rng = np.random.default_rng(6)
        m = random_model(rng, 2, 2, 4)
        eta, lam = 0.05, 0.3
        p_before = m.P[0].copy()
        sgd_step(m, 0, 0, m.predict(0, 0), eta=eta, lam=lam)
        np.testing.assert_allclose(m.P[0], p_before * (1 - eta * lam),
                                   rtol=1e-14)

    def test_simultaneous_update_uses_old_item_row(self):
        # The q update must see the pre-step p, not the freshly updated one.
        m = FactorModel([[2.0]], [[3.0]], [0.0], [0.0])
        sgd_step(m, 0, 0, 7.0, eta=0.1, lam=0.0)  # e = 1
        assert m.P[0, 0] == pytest.approx(2.0 + 0.1 * 3.0, abs=1e-15)
        assert m.Q[0, 0] == pytest.approx(3.0 + 0.1 * 2.0, abs=1e-15)

    def test_single_step_decreases_instance_loss(self):
        rng = np.random.default_rng(40)
        for _ in range(30):
            m = random_model(rng, 3, 3, 3)
            u, i = int(rng.integers(3)), int(rng.integers(3))
            r = float(rng.normal(scale=2.0))
            lam = float(rng.uniform(0, 0.3))
            before = m.instance_loss(u, i, r, lam)
            sgd_step(m, u, i, r, eta=1e-4, lam=lam)
            if before > 1e-12:
                assert m.instance_loss(u, i, r, lam) < before

    def test_divergence_raises_with_eta(self):
        m = FactorModel([[1.0]], [[1.0]], [0.0], [0.0])
        m.P[0, 0] = 1e300
        m.Q[0, 0] = 1e300
        with np.errstate(over="ignore"):
            with pytest.raises(DivergenceError, match="eta=0.5"):
                sgd_step(m, 0, 0, 1.0, eta=0.5, lam=0.0)


class TestTrainSgd:
    def data(self):
        m = make_synthetic(30, 20, rank=2, density=0.2, noise=0.05, seed=3)
        return split(m, 0.8, seed=0)

    def test_zero_epochs_untouched(self):
        train, valid = self.data()
        cfg = TrainConfig(factors=2, max_epochs=0, seed=1)
        m = init_model(cfg, 30, 20)
        before = clone(m)
        assert train_sgd(m, train, valid, cfg) == []
        assert np.array_equal(m.P, before.P) and np.array_equal(m.Q, before.Q)

    def test_deterministic_per_seed(self):
        train, valid = self.data()
        cfg = TrainConfig(eta=0.05, factors=2, max_epochs=5, seed=7)
        m1 = init_model(cfg, 30, 20)
        m2 = init_model(cfg, 30, 20)
        t1 = train_sgd(m1, train, valid, cfg)
        t2 = train_sgd(m2, train, valid, cfg)
        assert [(e.epoch, e.train_rmse, e.valid_rmse) for e in t1] == \
               [(e.epoch, e.train_rmse, e.valid_rmse) for e in t2]
        assert np.array_equal(m1.P, m2.P)

    def test_each_epoch_visits_every_triple_once(self, monkeypatch):
        train, valid = self.data()
        visits = []
        real_step = pretrain.sgd_step

        def recording(model, u, i, v, eta, lam):
            visits.append((int(u), int(i)))
            real_step(model, u, i, v, eta, lam)

        monkeypatch.setattr(pretrain, "sgd_step", recording)
        cfg = TrainConfig(factors=2, max_epochs=2, seed=0)
        m = init_model(cfg, 30, 20)
        train_sgd(m, train, valid, cfg)
        per_epoch = len(train)
        expected = sorted((int(u), int(i)) for u, i in zip(train.users,
                                                           train.items))
        assert sorted(visits[:per_epoch]) == expected
        assert sorted(visits[per_epoch:]) == expected
        # Shuffled order differs between epochs.
        assert visits[:per_epoch] != visits[per_epoch:]

    def test_single_triple_residual_shrinks_monotonically(self):
        data = parse_ratings(["u x 3.0"])
        cfg = TrainConfig(eta=0.01, lam=0.0, factors=2, max_epochs=1, seed=0)
        m = init_model(cfg, 1, 1)
        errors = []
        for _ in range(60):
            errors.append(abs(3.0 - m.predict(0, 0)))
            sgd_step(m, 0, 0, 3.0, eta=0.01, lam=0.0)
        assert all(a >= b for a, b in zip(errors, errors[1:]))

    def test_fits_noiseless_low_rank_data(self):
        data = make_synthetic(200, 150, rank=3, density=0.05, noise=0.0,
                              seed=11)
        train, valid = split(data, 0.8, seed=0)
        cfg = TrainConfig(eta=0.05, lam=0.0, factors=3, max_epochs=300,
                          convergence_threshold=1e-6, seed=0)
        m = init_model(cfg, 200, 150)
        trace = train_sgd(m, train, valid, cfg)
        # Observed 0.032 at build time; frozen with headroom.
        assert trace[-1].train_rmse < 0.05

    def test_empty_training_set_rejected(self):
        cfg = TrainConfig(factors=2)
        m = init_model(cfg, 1, 1)
        empty = parse_ratings([])
        with pytest.raises(ValueError):
            train_sgd(m, empty, empty, cfg)

    def test_divergent_eta_raises(self):
        train, valid = self.data()
        cfg = TrainConfig(eta=50.0, factors=2, max_epochs=50, seed=0)
        m = init_model(cfg, 30, 20)
        with pytest.raises(DivergenceError):
            train_sgd(m, train, valid, cfg)


class TestAdamStep:
    def test_zero_gradient_keeps_parameters(self):
        rng = np.random.default_rng(14)
        m = random_model(rng, 2, 2, 3)
        state = AdamState.for_model(m)
        before = clone(m)
        adam_step(m, state, 0, 0, m.predict(0, 0), eta=0.01, lam=0.0)
        assert np.array_equal(m.P, before.P) and np.array_equal(m.Q, before.Q)
        assert state.step == 1

    def test_first_step_moves_by_eta(self):
        # f=1, p=q=1, b=c=0, r=2: every gradient is -1, and the
        # bias-corrected ratio at step 1 is g / (|g| + epsilon).
        m = FactorModel([[1.0]], [[1.0]], [0.0], [0.0])
        state = AdamState.for_model(m)
        eta = 0.001
        adam_step(m, state, 0, 0, 2.0, eta=eta, lam=0.0)
        for moved in (m.P[0, 0] - 1.0, m.Q[0, 0] - 1.0, m.b[0], m.c[0]):
            assert moved == pytest.approx(eta, rel=1e-6)

    def test_long_run_matches_sgd_quality(self):
        data = make_synthetic(200, 150, rank=3, density=0.05, noise=0.0,
                              seed=11)
        train, valid = split(data, 0.8, seed=0)
        sgd_cfg = TrainConfig(eta=0.05, lam=0.0, factors=3, max_epochs=300,
                              convergence_threshold=1e-6, seed=0)
        adam_cfg = TrainConfig(eta=0.01, lam=0.0, factors=3, max_epochs=300,
                               convergence_threshold=1e-6, seed=0)
        ms = init_model(sgd_cfg, 200, 150)
        ts = train_sgd(ms, train, valid, sgd_cfg)
        ma = init_model(adam_cfg, 200, 150)
        ta = train_adam(ma, train, valid, adam_cfg)
        assert ta[-1].train_rmse <= 2.0 * ts[-1].train_rmse


class TestTrainAdam:
    def test_zero_epochs_empty_trace(self):
        data = parse_ratings(["a x 1.0"])
        cfg = TrainConfig(factors=2, max_epochs=0)
        m = init_model(cfg, 1, 1)
        assert train_adam(m, data, data, cfg) == []

    def test_deterministic_per_seed(self):
        data = make_synthetic(20, 15, rank=2, density=0.3, noise=0.05, seed=9)
        train, valid = split(data, 0.8, seed=0)
        cfg = TrainConfig(eta=0.01, factors=2, max_epochs=4, seed=5)
        m1, m2 = init_model(cfg, 20, 15), init_model(cfg, 20, 15)
        t1 = train_adam(m1, train, valid, cfg)
        t2 = train_adam(m2, train, valid, cfg)
        assert np.array_equal(m1.P, m2.P) and np.array_equal(m1.c, m2.c)
        assert [e.valid_rmse for e in t1] == [e.valid_rmse for e in t2]


class TestEpochTraceCsv:
    def test_round_trip_at_printed_precision(self, tmp_path):
        trace = [EpochTrace(1, 0.91234567, 0.95123456, 0.25),
                 EpochTrace(2, 0.81234567, 0.85123456, 0.5)]
        path = tmp_path / "trace.csv"
        write_epoch_trace(trace, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["epoch"]) for r in rows] == [1, 2]
        assert [float(r["train_rmse"]) for r in rows] == \
               [t.train_rmse for t in trace]
        assert [float(r["seconds"]) for r in rows] == \
               [round(t.seconds, 6) for t in trace]
