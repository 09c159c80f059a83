import numpy as np
import pytest

from biolearn._backprop import cross_entropy, one_hot
from biolearn.attacks import (AttackConfig, fgsm, input_gradient, pgd,
                              robustness_sweep)
from biolearn.errors import ParameterError
from biolearn.network import Architecture, forward, init_model
from biolearn.numerics import Rng

from conftest import fd_input_grads, make_net, rel_err


def _linear_model(seed=0, d=4, k=3):
    model = init_model(Architecture(d, (), k), Rng(seed))
    model.weights[0] = Rng(seed + 1).normal(0, 1.0, d * k).reshape(d, k)
    model.bias = Rng(seed + 2).normal(0, 0.5, k)
    return model


class TestInputGradient:
    def test_linear_model_closed_form(self):
        model = _linear_model()
        x = Rng(5).uniform(0, 1, 8).reshape(2, 4)
        labels = np.array([0, 2])
        g = input_gradient(model, x, labels)
        trace = forward(model, x)
        expected = (trace.probs - one_hot(labels, 3)) / 2 @ model.weights[0].T
        assert np.allclose(g, expected, atol=1e-14)

    @pytest.mark.parametrize("nonneg", [False, True])
    def test_matches_finite_differences(self, nonneg):
        model, rng = make_net(nonneg, seed=400 + nonneg)
        x = rng.uniform(0, 1, 8 * 6).reshape(8, 6)
        labels = np.arange(8) % 3
        g = input_gradient(model, x, labels)
        fd = fd_input_grads(model, x, labels)
        assert rel_err(g, fd) < 1e-4

    def test_duplicated_rows_get_duplicated_gradients(self):
        model, rng = make_net(False, seed=410)
        row = rng.uniform(0, 1, 6).reshape(1, 6)
        x = np.vstack([row, row, row])
        labels = np.array([1, 1, 1])
        g = input_gradient(model, x, labels)
        assert np.allclose(g[0], g[1]) and np.allclose(g[1], g[2])

    def test_model_not_mutated(self):
        model, rng = make_net(True, seed=420)
        before = [w.copy() for w in model.weights]
        stats_before = [s.copy() for s in model.norm_stats]
        x = rng.uniform(0, 1, 30).reshape(5, 6)
        input_gradient(model, x, np.zeros(5, dtype=int))
        for wb, wa in zip(before, model.weights):
            assert np.array_equal(wb, wa)
        for sb, sa in zip(stats_before, model.norm_stats):
            assert sb == sa


class TestFgsm:
    def test_zero_epsilon_is_identity(self):
        model = _linear_model()
        x = Rng(1).uniform(0, 1, 12).reshape(3, 4)
        adv = fgsm(model, x, np.array([0, 1, 2]), 0.0)
        assert np.array_equal(adv, x)

    def test_stays_in_ball_and_unit_box(self):
        model, rng = make_net(True, seed=430)
        x = rng.uniform(0, 1, 60).reshape(10, 6)
        labels = np.arange(10) % 3
        eps = 0.07
        adv = fgsm(model, x, labels, eps)
        # monotone float comparisons against the computed bounds are exact
        assert np.all(adv <= x + eps) and np.all(adv >= x - eps)
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_first_order_loss_increase_on_linear_model(self):
        model = _linear_model(seed=7)
        x = Rng(8).uniform(0.2, 0.8, 20).reshape(5, 4)
        labels = np.array([0, 1, 2, 0, 1])
        adv = fgsm(model, x, labels, 1e-3)
        before = cross_entropy(forward(model, x).logits, labels)
        after = cross_entropy(forward(model, adv).logits, labels)
        assert after >= before

    def test_negative_epsilon_rejected(self):
        model = _linear_model()
        with pytest.raises(ParameterError):
            fgsm(model, np.zeros((1, 4)), np.array([0]), -0.1)


class TestPgd:
    def test_single_step_equals_fgsm_exactly(self):
        model, rng = make_net(True, seed=440)
        x = rng.uniform(0, 1, 60).reshape(10, 6)
        labels = np.arange(10) % 3
        eps = 0.05
        via_fgsm = fgsm(model, x, labels, eps)
        via_pgd = pgd(model, x, labels, eps, AttackConfig(method="pgd", step=eps, iters=1))
        assert np.array_equal(via_fgsm, via_pgd)

    def test_oversized_step_equals_fgsm_after_projection(self):
        model, rng = make_net(False, seed=441)
        x = rng.uniform(0, 1, 30).reshape(5, 6)
        labels = np.arange(5) % 3
        eps = 0.03
        via_pgd = pgd(model, x, labels, eps,
                      AttackConfig(method="pgd", step=0.5, iters=1))
        g = input_gradient(model, x, labels)
        expected = np.clip(np.clip(x + 0.5 * np.sign(g), x - eps, x + eps), 0, 1)
        assert np.array_equal(via_pgd, expected)

    def test_iterates_stay_feasible(self):
        model, rng = make_net(True, seed=442)
        x = rng.uniform(0, 1, 60).reshape(10, 6)
        labels = np.arange(10) % 3
        eps = 0.1
        adv = pgd(model, x, labels, eps,
                  AttackConfig(method="pgd", step=0.03, iters=12))
        assert np.all(adv <= x + eps) and np.all(adv >= x - eps)
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_zero_epsilon_unchanged_regardless_of_iters(self):
        model, rng = make_net(False, seed=443)
        x = rng.uniform(0, 1, 30).reshape(5, 6)
        labels = np.arange(5) % 3
        adv = pgd(model, x, labels, 0.0, AttackConfig(method="pgd", step=0.01, iters=7))
        assert np.array_equal(adv, x)

    def test_random_start_feasible_and_needs_rng(self):
        model, rng = make_net(True, seed=444)
        x = rng.uniform(0, 1, 30).reshape(5, 6)
        labels = np.arange(5) % 3
        cfg = AttackConfig(method="pgd", step=0.01, iters=3, random_start=True)
        with pytest.raises(ParameterError):
            pgd(model, x, labels, 0.05, cfg)
        adv = pgd(model, x, labels, 0.05, cfg, rng=Rng(7))
        assert np.all(adv <= x + 0.05) and np.all(adv >= x - 0.05)
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_pgd_at_least_as_strong_as_fgsm_on_trained_model(self):
        # multi-step refinement should not lose to the single step here
        from biolearn.plasticity import BpHyperParams, train_bp
        from conftest import prototype_dataset

        ds_train, ds_test = prototype_dataset(seed=17)
        model = init_model(Architecture(40, (16,), 5), Rng(450))
        train_bp(model, ds_train, ds_test, BpHyperParams(lr=0.5, batch_size=32, epochs=20), Rng(451))
        x, y = ds_test.inputs, ds_test.labels
        eps = 0.1
        acc_fgsm = float(np.mean(np.argmax(forward(model, fgsm(model, x, y, eps)).logits, 1) == y))
        adv = pgd(model, x, y, eps, AttackConfig(method="pgd", step=0.02, iters=20))
        acc_pgd = float(np.mean(np.argmax(forward(model, adv).logits, 1) == y))
        assert acc_pgd <= acc_fgsm + 0.02


class TestRobustnessSweep:
    def _trained(self):
        from biolearn.plasticity import BpHyperParams, train_bp
        from conftest import prototype_dataset

        ds_train, ds_test = prototype_dataset(seed=23)
        model = init_model(Architecture(40, (16,), 5), Rng(460))
        train_bp(model, ds_train, ds_test, BpHyperParams(lr=0.5, batch_size=32, epochs=15), Rng(461))
        return model, ds_test

    def test_zero_only_curve_equals_clean_accuracy(self):
        model, ds = self._trained()
        curve = robustness_sweep(model, ds, "fgsm", [0.0])
        assert curve.epsilons == [0.0]
        assert curve.accuracies[0] == curve.clean_accuracy

    def test_unsorted_epsilons_rejected(self):
        model, ds = self._trained()
        with pytest.raises(ParameterError):
            robustness_sweep(model, ds, "fgsm", [0.1, 0.05])

    def test_csv_format_and_pgd_header_comment(self):
        model, ds = self._trained()
        cfg = AttackConfig(method="pgd", step=0.01, iters=2)
        curve = robustness_sweep(model, ds, "pgd", [0.0, 0.05], cfg)
        csv = curve.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0].startswith("#") and "step=0.01" in lines[0] and "iters=2" in lines[0]
        assert lines[1] == "epsilon,accuracy"
        assert len(lines) == 4

    def test_model_unchanged_by_sweep(self):
        model, ds = self._trained()
        before = [w.copy() for w in model.weights]
        robustness_sweep(model, ds, "fgsm", [0.0, 0.02, 0.05])
        for wb, wa in zip(before, model.weights):
            assert np.array_equal(wb, wa)

    def test_batched_attack_covers_all_samples(self):
        model, ds = self._trained()
        cfg = AttackConfig(method="fgsm", batch_size=7)  # uneven batching
        curve = robustness_sweep(model, ds, "fgsm", [0.02], cfg)
        assert 0.0 <= curve.accuracies[0] <= 1.0
