"""Softmax classifier: prototype init, objective gradients, training loop."""

import math

import numpy as np
import pytest

from selfshot import (
    ClassifierError,
    DivergenceError,
    SoftmaxClassifier,
    TrainConfig,
    conditional_entropy_and_grad,
    gaussian_gram,
    objective_and_grad,
    predict_proba,
    prototype_init,
    pseudo_label,
    train,
)


def random_problem(rng, n=5, d=4, k=1, u=12):
    support = rng.normal(size=(n * k, d))
    labels = np.repeat(np.arange(n), k)
    unlabeled = rng.normal(size=(u, d))
    return support, labels, unlabeled


def finite_diff_grads(loss_of, clf, h=1e-6):
    """Central differences over every weight and bias entry."""
    gw = np.zeros_like(clf.weights)
    gb = np.zeros_like(clf.bias)
    for idx in np.ndindex(*clf.weights.shape):
        w = clf.weights.copy()
        w[idx] += h
        up = loss_of(SoftmaxClassifier(w, clf.bias.copy()))
        w[idx] -= 2 * h
        down = loss_of(SoftmaxClassifier(w, clf.bias.copy()))
        gw[idx] = (up - down) / (2 * h)
    for j in range(clf.bias.size):
        b = clf.bias.copy()
        b[j] += h
        up = loss_of(SoftmaxClassifier(clf.weights.copy(), b))
        b[j] -= 2 * h
        down = loss_of(SoftmaxClassifier(clf.weights.copy(), b))
        gb[j] = (up - down) / (2 * h)
    return gw, gb


class TestPrototypeInit:
    def test_two_point_example(self):
        feats = np.array([[1.0, 0.0], [0.0, 1.0]])
        labels = np.array([0, 1])
        clf = prototype_init(feats, labels)
        np.testing.assert_allclose(clf.weights[:, 0], [2.0, 0.0])
        np.testing.assert_allclose(clf.weights[:, 1], [0.0, 2.0])
        np.testing.assert_allclose(clf.bias, [-1.0, -1.0])

    def test_multi_shot_uses_class_means(self):
        feats = np.array([[2.0, 0.0], [4.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
        labels = np.array([0, 0, 1, 1])
        clf = prototype_init(feats, labels)
        np.testing.assert_allclose(clf.weights[:, 0], [6.0, 0.0])  # 2 * mean
        np.testing.assert_allclose(clf.bias[0], -9.0)  # -||mean||^2

    def test_argmax_equals_nearest_prototype(self):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(20, 6))
        labels = np.repeat(np.arange(5), 4)
        clf = prototype_init(feats, labels)
        probs = predict_proba(clf, feats)
        protos = np.stack([feats[labels == c].mean(axis=0) for c in range(5)])
        d2 = ((feats[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(np.argmax(probs, axis=1), np.argmin(d2, axis=1))

    def test_empty_class_rejected(self):
        with pytest.raises(ClassifierError):
            prototype_init(np.zeros((2, 3)), np.array([0, 0]), n_way=2)


class TestPredict:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        clf = SoftmaxClassifier(rng.normal(size=(4, 5)), rng.normal(size=5))
        probs = predict_proba(clf, rng.normal(size=(10, 4)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs > 0)

    def test_known_logits(self):
        clf = SoftmaxClassifier(np.eye(2), np.zeros(2))
        probs = predict_proba(clf, np.array([[math.log(3.0), 0.0]]))
        np.testing.assert_allclose(probs, [[0.75, 0.25]], atol=1e-12)

    def test_large_logits_stay_finite(self):
        clf = SoftmaxClassifier(np.eye(2) * 500.0, np.zeros(2))
        probs = predict_proba(clf, np.array([[2.0, -2.0]]))
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_pseudo_label_tie_takes_lowest_class(self):
        clf = SoftmaxClassifier(np.zeros((2, 3)), np.zeros(3))
        labels, conf = pseudo_label(clf, np.ones((4, 2)))
        np.testing.assert_array_equal(labels, 0)
        np.testing.assert_allclose(conf, 1.0 / 3.0, atol=1e-12)


class TestObjective:
    def test_ce_gradient_closed_form(self):
        # lam = 0: grad_logits = (probs - onehot) / n
        rng = np.random.default_rng(5)
        support, labels, unlabeled = random_problem(rng)
        clf = SoftmaxClassifier(rng.normal(size=(4, 5)), rng.normal(size=5))
        cfg = TrainConfig(lam=0.0, loss="ce+dm")
        obj = objective_and_grad(clf, support, labels, unlabeled, cfg)
        probs = predict_proba(clf, support)
        onehot = np.eye(5)[labels]
        dlogits = (probs - onehot) / support.shape[0]
        np.testing.assert_allclose(obj.grad_w, support.T @ dlogits, atol=1e-12)
        np.testing.assert_allclose(obj.grad_b, dlogits.sum(axis=0), atol=1e-12)
        assert obj.dependence is None  # term inactive at lam=0

    def test_dependence_term_reduces_loss(self):
        rng = np.random.default_rng(6)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        lo = objective_and_grad(clf, support, labels, unlabeled, TrainConfig(lam=0.0))
        hi = objective_and_grad(clf, support, labels, unlabeled, TrainConfig(lam=2.0))
        assert hi.dependence > 0.0
        assert hi.loss == pytest.approx(lo.ce - 2.0 * hi.dependence, abs=1e-12)

    def test_full_objective_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        support, labels, unlabeled = random_problem(rng, d=3, u=8)
        clf = SoftmaxClassifier(rng.normal(size=(3, 5)) * 0.5, rng.normal(size=5) * 0.1)
        cfg = TrainConfig(lam=1.5, sigma=0.7)
        obj = objective_and_grad(clf, support, labels, unlabeled, cfg)

        def loss_of(c):
            return objective_and_grad(c, support, labels, unlabeled, cfg).loss

        gw, gb = finite_diff_grads(loss_of, clf)
        np.testing.assert_allclose(obj.grad_w, gw, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(obj.grad_b, gb, rtol=1e-5, atol=1e-7)

    def test_dm_skipped_below_two_unlabeled(self):
        rng = np.random.default_rng(8)
        support, labels, _ = random_problem(rng)
        clf = prototype_init(support, labels)
        obj = objective_and_grad(clf, support, labels, np.zeros((1, 4)), TrainConfig(lam=1.0))
        assert obj.dm_skipped
        assert obj.dependence is None

    def test_identical_unlabeled_rows_stay_finite(self):
        # feature gram all ones: centered kernel vanishes
        rng = np.random.default_rng(9)
        support, labels, _ = random_problem(rng)
        clf = prototype_init(support, labels)
        unl = np.ones((6, 4))
        obj = objective_and_grad(clf, support, labels, unl, TrainConfig(lam=1.0))
        assert np.isfinite(obj.loss)
        assert abs(obj.dependence) < 1e-12

    def test_precomputed_gram_matches(self):
        rng = np.random.default_rng(10)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        cfg = TrainConfig(lam=1.0)
        from selfshot.kernels import double_center

        km = gaussian_gram(unlabeled, cfg.sigma).entries
        direct = objective_and_grad(clf, support, labels, unlabeled, cfg)
        cached = objective_and_grad(
            clf, support, labels, unlabeled, cfg,
            centered_feature_gram=double_center(km),
        )
        assert direct.loss == cached.loss
        np.testing.assert_array_equal(direct.grad_w, cached.grad_w)


class TestConditionalEntropy:
    def test_uniform_predictions_give_log_n(self):
        clf = SoftmaxClassifier(np.zeros((3, 4)), np.zeros(4))
        ent, _, _ = conditional_entropy_and_grad(clf, np.random.default_rng(0).normal(size=(5, 3)))
        assert ent == pytest.approx(math.log(4.0), abs=1e-12)

    def test_confident_predictions_give_zero(self):
        clf = SoftmaxClassifier(np.eye(2) * 200.0, np.zeros(2))
        ent, _, _ = conditional_entropy_and_grad(clf, np.array([[5.0, -5.0], [-5.0, 5.0]]))
        assert ent < 1e-6

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        unl = rng.normal(size=(7, 3))
        clf = SoftmaxClassifier(rng.normal(size=(3, 4)) * 0.5, rng.normal(size=4) * 0.1)
        ent, gw, gb = conditional_entropy_and_grad(clf, unl)

        def loss_of(c):
            return conditional_entropy_and_grad(c, unl)[0]

        fw, fb = finite_diff_grads(loss_of, clf)
        np.testing.assert_allclose(gw, fw, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(gb, fb, rtol=1e-5, atol=1e-7)


class TestTrain:
    def test_zero_iterations_returns_init(self):
        rng = np.random.default_rng(13)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        out, trace = train(clf, support, labels, unlabeled, TrainConfig(iters=0))
        np.testing.assert_array_equal(out.weights, clf.weights)
        assert len(trace.ce) == 1  # initial state only

    def test_trace_lengths(self):
        rng = np.random.default_rng(14)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        _, trace = train(clf, support, labels, unlabeled, TrainConfig(iters=25))
        assert len(trace.ce) == 26
        assert len(trace.total) == 26
        assert len(trace.dependence) == 26

    def test_separable_support_reaches_low_ce(self):
        feats = np.array([[4.0, 0.0], [0.0, 4.0]])
        labels = np.array([0, 1])
        clf = prototype_init(feats, labels)
        _, trace = train(
            clf, feats, labels, np.zeros((0, 2)),
            TrainConfig(lam=0.0, loss="ce", lr=0.05, iters=400),
        )
        assert trace.ce[-1] < 1e-3

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(15)
        support, labels, unlabeled = random_problem(rng)
        cfg = TrainConfig(iters=50)
        a, _ = train(prototype_init(support, labels), support, labels, unlabeled, cfg)
        b, _ = train(prototype_init(support, labels), support, labels, unlabeled, cfg)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)

    def test_gd_optimizer_runs(self):
        rng = np.random.default_rng(16)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        _, trace = train(
            clf, support, labels, unlabeled,
            TrainConfig(optimizer="gd", lr=0.05, iters=40, lam=0.5),
        )
        assert trace.total[-1] < trace.total[0]

    def test_eval_accuracy_recorded(self):
        rng = np.random.default_rng(17)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        _, trace = train(
            clf, support, labels, unlabeled, TrainConfig(iters=5),
            eval_features=support, eval_labels=labels,
        )
        assert trace.accuracy is not None
        assert len(trace.accuracy) == 6
        assert trace.accuracy[-1] == 1.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        rng = np.random.default_rng(18)
        support, labels, unlabeled = random_problem(rng)
        clf = SoftmaxClassifier(np.full((4, 5), 1e300), np.zeros(5))
        with pytest.raises(DivergenceError):
            train(clf, support * 1e8, labels, unlabeled, TrainConfig(iters=3, lr=1e280))

    def test_cond_ent_loss_trains(self):
        rng = np.random.default_rng(19)
        support, labels, unlabeled = random_problem(rng)
        clf = prototype_init(support, labels)
        _, trace = train(
            clf, support, labels, unlabeled,
            TrainConfig(loss="ce+cond-ent", iters=30, lr=0.05),
        )
        assert len(trace.entropy) == 31
        assert np.all(np.isfinite(trace.entropy))


class TestConfigValidation:
    def test_rejects_unknown_loss(self):
        with pytest.raises(ClassifierError):
            TrainConfig(loss="hinge")

    def test_rejects_unknown_optimizer(self):
        with pytest.raises(ClassifierError):
            TrainConfig(optimizer="sgdm")

    def test_rejects_negative_lam(self):
        with pytest.raises(ClassifierError):
            TrainConfig(lam=-0.5)

    def test_sigma_pred_defaults_to_sigma(self):
        cfg = TrainConfig(sigma=0.9)
        assert cfg.pred_bandwidth == 0.9
        assert TrainConfig(sigma=0.9, sigma_pred=0.3).pred_bandwidth == 0.3
