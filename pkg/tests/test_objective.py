import math

import numpy as np
import pytest

from arnet.errors import ConfigError, DataError
from arnet.memory import Memory, read, sinkhorn_targets
from arnet.model import ModelDims, backward, forward, init_params
from arnet.numkernel import (
    cosine_similarity,
    cosine_similarity_vjp,
    finite_diff_grad,
    l2_normalize_rows,
    seeded_rng,
    softmax_rows,
)
from arnet.objective import (
    LossReport,
    bootstrap_targets,
    combined_loss,
    cross_entropy,
    elr_regularizer,
    one_hot,
)


def random_probs(rng, batch, n_classes):
    return softmax_rows(rng.standard_normal((batch, n_classes)))


class TestCrossEntropy:
    def test_onehot_prediction_zero_loss(self):
        probs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        loss, _ = cross_entropy(probs, np.array([0, 2]))
        assert loss < 1e-10

    def test_uniform_prediction_log_k(self):
        probs = np.full((4, 5), 0.2)
        loss, _ = cross_entropy(probs, np.array([0, 1, 2, 3]))
        assert abs(loss - math.log(5)) < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = seeded_rng(1)
        logits = rng.standard_normal((5, 3))
        labels = np.array([0, 2, 1, 1, 0])

        def loss_of(z):
            return cross_entropy(softmax_rows(z), labels)[0]

        _, d_logits = cross_entropy(softmax_rows(logits), labels)
        numeric = finite_diff_grad(loss_of, logits, h=1e-5)
        np.testing.assert_allclose(d_logits, numeric, atol=1e-6)

    def test_out_of_range_label(self):
        with pytest.raises(DataError):
            cross_entropy(np.full((1, 2), 0.5), np.array([2]))


class TestElrRegularizer:
    def test_uniform_vs_onehot(self):
        k = 4
        probs = np.full((3, k), 1.0 / k)
        targets = one_hot(np.array([0, 1, 2]), k)
        reg, _, per_sample = elr_regularizer(probs, targets)
        expected = math.log(1.0 - 1.0 / k)
        np.testing.assert_allclose(per_sample, expected, atol=1e-12)
        assert abs(reg - expected) < 1e-12

    def test_clamp_engages_without_blowup(self):
        probs = one_hot(np.array([1]), 3)
        targets = one_hot(np.array([1]), 3)
        reg, d_logits, per_sample = elr_regularizer(probs, targets)
        assert abs(per_sample[0] - math.log(1e-8)) < 1e-9
        assert np.all(np.isfinite(d_logits))

    def test_gradient_matches_finite_differences_away_from_clamp(self):
        rng = seeded_rng(2)
        logits = rng.standard_normal((6, 4))
        targets = rng.dirichlet(np.ones(4), size=6)

        def loss_of(z):
            return elr_regularizer(softmax_rows(z), targets)[0]

        _, d_logits, _ = elr_regularizer(softmax_rows(logits), targets)
        numeric = finite_diff_grad(loss_of, logits, h=1e-5)
        np.testing.assert_allclose(d_logits, numeric, atol=1e-6)

    def test_nonpositive_for_valid_inputs(self):
        rng = seeded_rng(3)
        for _ in range(10):
            probs = random_probs(rng, 4, 3)
            targets = rng.dirichlet(np.ones(3), size=4)
            reg, _, per_sample = elr_regularizer(probs, targets)
            assert reg <= 0
            assert np.all(per_sample <= 0)

    def test_sub_simplex_targets_accepted(self):
        # momentum targets start at zero and grow toward the simplex
        probs = np.full((2, 2), 0.5)
        reg, d_logits, _ = elr_regularizer(probs, np.zeros((2, 2)))
        assert reg == 0.0
        np.testing.assert_array_equal(d_logits, np.zeros((2, 2)))


class TestCombinedLoss:
    def test_ce_mode_reduces_to_cross_entropy(self):
        rng = seeded_rng(4)
        probs = random_probs(rng, 5, 3)
        labels = np.array([0, 1, 2, 0, 1])
        report, d_logits, d_scores = combined_loss("ce", probs, labels)
        ce, d_ce = cross_entropy(probs, labels)
        assert report.total == ce
        assert report.reg_term == 0.0 and report.cluster_term == 0.0
        np.testing.assert_array_equal(d_logits, d_ce)
        assert d_scores is None

    def test_alpha_zero_cluster_disabled_reduces_to_ce(self):
        rng = seeded_rng(5)
        probs = random_probs(rng, 4, 2)
        labels = np.array([0, 1, 1, 0])
        pseudo = random_probs(rng, 4, 2)
        report, d_logits, d_scores = combined_loss(
            "arnet", probs, labels, pseudo=pseudo, alpha=0.0, cluster_enabled=False
        )
        ce, d_ce = cross_entropy(probs, labels)
        assert report.total == ce
        np.testing.assert_array_equal(d_logits, d_ce)
        assert d_scores is None

    def test_decomposition_identity(self):
        rng = seeded_rng(6)
        probs = random_probs(rng, 6, 3)
        labels = rng.integers(0, 3, size=6)
        pseudo = random_probs(rng, 6, 3)
        assign = random_probs(rng, 6, 4)
        targets = rng.dirichlet(np.ones(4), size=6)
        report, _, _ = combined_loss(
            "arnet", probs, labels, pseudo=pseudo, assign=assign, targets_batch=targets, alpha=3.0
        )
        recomposed = report.ce_term + 3.0 * report.reg_term + report.cluster_term
        assert abs(report.total - recomposed) < 1e-9
        assert abs(report.reg_term - report.reg_per_sample.mean()) < 1e-12

    def test_matched_assignment_and_self_pseudo(self):
        # with Q = P the cluster term is the assignment entropy and its
        # gradient vanishes; with T = R the regularizer is log(1 - sum r^2)
        rng = seeded_rng(7)
        probs = random_probs(rng, 5, 3)
        labels = rng.integers(0, 3, size=5)
        assign = random_probs(rng, 5, 4)
        report, _, d_scores = combined_loss(
            "arnet", probs, labels, pseudo=probs, assign=assign, targets_batch=assign, alpha=3.0
        )
        ce, _ = cross_entropy(probs, labels)
        entropy = float(-(assign * np.log(assign)).sum() / 5)
        reg = float(np.log(1.0 - (probs ** 2).sum(axis=1)).mean())
        assert abs(report.total - (ce + 3.0 * reg + entropy)) < 1e-9
        np.testing.assert_array_equal(d_scores, np.zeros_like(assign))

    def test_bootstrap_uses_mixed_target(self):
        rng = seeded_rng(8)
        probs = random_probs(rng, 4, 3)
        labels = np.array([0, 1, 2, 2])
        report, d_logits, _ = combined_loss("bootstrap", probs, labels, bootstrap_mix=0.2)
        mixed = bootstrap_targets(probs, labels, 0.2)
        np.testing.assert_allclose(d_logits, (probs - mixed) / 4)
        assert report.reg_term == 0.0

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            combined_loss("mystery", np.full((1, 2), 0.5), np.array([0]))

    def test_full_gradient_matches_finite_differences(self):
        # composed objective on a (B=5, K=3, L=4, d=2) instance: gradients
        # w.r.t. every model tensor and the prototypes
        rng = seeded_rng(9)
        dims = ModelDims(n_features=3, hidden_dim=4, latent_dim=2, n_classes=3)
        params = init_params(rng, dims)
        protos = l2_normalize_rows(rng.standard_normal((4, 2)))
        mem = Memory(
            prototypes=protos.copy(),
            soft_labels=rng.dirichlet(np.ones(3), size=4),
            cache_capacity=16,
            rng=rng,
        )
        x = rng.standard_normal((5, 3))
        labels = rng.integers(0, 3, size=5)
        tau, alpha, lam, xi = 0.8, 3.0, 0.8, 0.05

        trace = forward(params, x)
        pseudo, _, assign = read(mem, trace.latents, trace.probs, lam, tau)
        pseudo = pseudo.copy()
        targets = sinkhorn_targets(mem, l2_normalize_rows(trace.latents), xi, 3).copy()

        def total_of(p, c):
            t = forward(p, x)
            a = softmax_rows(cosine_similarity(t.latents, c) / tau)
            rep, _, _ = combined_loss(
                "arnet", t.probs, labels, pseudo=pseudo, assign=a, targets_batch=targets, alpha=alpha
            )
            return rep.total

        report, d_logits, d_scores = combined_loss(
            "arnet", trace.probs, labels, pseudo=pseudo, assign=assign,
            targets_batch=targets, alpha=alpha,
        )
        d_latents, d_protos = cosine_similarity_vjp(trace.latents, protos, d_scores / tau)
        grads = backward(params, trace, d_logits, d_latents)

        for name, grad in grads.items():
            def loss_of(tensor, _name=name):
                trial = params.copy()
                setattr(trial, _name, tensor)
                return total_of(trial, protos)

            numeric = finite_diff_grad(loss_of, getattr(params, name), h=1e-5)
            scale = max(np.abs(numeric).max(), 1e-8)
            assert np.abs(grad - numeric).max() / scale < 1e-4, name

        numeric_protos = finite_diff_grad(lambda c: total_of(params, c), protos, h=1e-5)
        scale = max(np.abs(numeric_protos).max(), 1e-8)
        assert np.abs(d_protos - numeric_protos).max() / scale < 1e-4


class TestLossReport:
    def test_all_terms_finite(self):
        rng = seeded_rng(10)
        probs = random_probs(rng, 3, 2)
        report, _, _ = combined_loss(
            "elr", probs, np.array([0, 1, 0]), pseudo=random_probs(rng, 3, 2), alpha=3.0
        )
        assert isinstance(report, LossReport)
        for value in (report.total, report.ce_term, report.reg_term, report.cluster_term):
            assert np.isfinite(value)
