import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from respkit.augment import one_hot
from respkit.errors import ContractError
from respkit.models import build_inception_net, build_mlp_head, fixture_embedding_provider
from respkit.train import (
    TrainConfig,
    kl_loss,
    train_mlp_on_embeddings,
    train_model,
    weight_sq_norm,
)

simplex4 = st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4).map(
    lambda v: np.array(v) / np.sum(v)
)


def naive_kl(y, y_hat, theta_sq_norm=0.0, lambda_reg=0.0):
    """Independent double-loop reference implementation."""
    total = 0.0
    for n in range(len(y)):
        for c in range(len(y[n])):
            if y[n][c] > 0:
                total += y[n][c] * math.log(y[n][c] / max(y_hat[n][c], 1e-8))
    return total + (lambda_reg / 2.0) * theta_sq_norm


class TestKlLoss:
    def test_self_divergence_is_zero(self):
        y = np.array([[0.25, 0.25, 0.25, 0.25], [0.7, 0.1, 0.1, 0.1]])
        assert kl_loss(y, y) == pytest.approx(0.0, abs=1e-12)

    def test_onehot_vs_uniform_is_log4(self):
        y = np.array([one_hot(2)])
        y_hat = np.full((1, 4), 0.25)
        assert kl_loss(y, y_hat) == pytest.approx(math.log(4), abs=1e-9)

    def test_regularized_uniform_example(self):
        # log 4 + (0.0001/2)*4 = 1.38629... + 0.0002
        y = np.array([one_hot(0)])
        y_hat = np.full((1, 4), 0.25)
        loss = kl_loss(y, y_hat, theta_sq_norm=4.0, lambda_reg=0.0001)
        assert loss == pytest.approx(math.log(4) + 0.0002, abs=1e-9)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            y = rng.dirichlet(np.ones(4), size=n)
            y_hat = rng.dirichlet(np.ones(4), size=n)
            theta = float(rng.uniform(0, 10))
            lam = float(rng.uniform(0, 0.01))
            assert kl_loss(y, y_hat, theta, lam) == pytest.approx(
                naive_kl(y, y_hat, theta, lam), abs=1e-10
            )

    def test_zero_target_mass_contributes_nothing(self):
        y = np.array([[1.0, 0.0, 0.0, 0.0]])
        y_hat = np.array([[1.0, 0.0, 0.0, 0.0]])  # zeros in y_hat where y is 0
        assert kl_loss(y, y_hat) == pytest.approx(0.0, abs=1e-12)

    def test_decomposition_is_exact(self):
        rng = np.random.default_rng(1)
        y = rng.dirichlet(np.ones(4), size=5)
        y_hat = rng.dirichlet(np.ones(4), size=5)
        lam, theta = 0.037, 11.5
        assert kl_loss(y, y_hat, theta, lam) - kl_loss(y, y_hat, theta, 0.0) == (
            pytest.approx(lam / 2 * theta, abs=1e-12)
        )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            kl_loss(np.ones((2, 4)) / 4, np.ones((3, 4)) / 3)

    def test_average_flag_divides_by_batch(self):
        rng = np.random.default_rng(2)
        y = rng.dirichlet(np.ones(4), size=10)
        y_hat = rng.dirichlet(np.ones(4), size=10)
        assert kl_loss(y, y_hat, average=True) == pytest.approx(
            kl_loss(y, y_hat) / 10, abs=1e-12
        )

    @settings(max_examples=200, deadline=None)
    @given(simplex4, simplex4)
    def test_nonnegative_on_simplex_pairs(self, y, y_hat):
        assert kl_loss(y[None], y_hat[None]) >= -1e-12

    def test_torch_path_matches_numpy(self):
        rng = np.random.default_rng(3)
        y = rng.dirichlet(np.ones(4), size=6)
        y_hat = rng.dirichlet(np.ones(4), size=6)
        t = kl_loss(torch.as_tensor(y), torch.as_tensor(y_hat), 3.0, 0.001)
        assert float(t) == pytest.approx(kl_loss(y, y_hat, 3.0, 0.001), abs=1e-12)


class TestGradients:
    def test_analytic_gradients_match_finite_differences(self):
        # tiny 4 -> 3 -> 4 head trained with the KL + L2 objective
        torch.manual_seed(0)
        head = torch.nn.Sequential(torch.nn.Linear(4, 3), torch.nn.Tanh(), torch.nn.Linear(3, 4))
        head = head.double()
        x = torch.randn(6, 4, dtype=torch.float64)
        y = torch.as_tensor(np.random.default_rng(0).dirichlet(np.ones(4), size=6))
        lam = 0.0001

        def loss_value():
            probs = torch.softmax(head(x), dim=1)
            return kl_loss(y, probs, weight_sq_norm(head), lam)

        loss = loss_value()
        loss.backward()
        eps = 1e-6
        for p in head.parameters():
            grad = p.grad.clone()
            flat = p.data.view(-1)
            for idx in range(0, flat.numel(), max(1, flat.numel() // 5)):
                orig = float(flat[idx])
                flat[idx] = orig + eps
                up = float(loss_value().detach())
                flat[idx] = orig - eps
                down = float(loss_value().detach())
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                an = float(grad.view(-1)[idx])
                assert an == pytest.approx(fd, rel=1e-4, abs=1e-7)


def tiny_dataset(n=8, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return [
        (rng.standard_normal(dim).astype(np.float32), one_hot(i % 4))
        for i in range(n)
    ]


class TestTrainModel:
    def test_zero_epochs_leaves_weights_untouched(self):
        handle = build_mlp_head(16)
        before = {k: v.clone() for k, v in handle.module.state_dict().items()}
        _, history = train_model(handle, tiny_dataset(), TrainConfig(epochs=0))
        after = handle.module.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)
        assert history.loss == []

    def test_empty_dataset_rejected(self):
        with pytest.raises(ContractError):
            train_model(build_mlp_head(16), [], TrainConfig(epochs=1))

    def test_history_decomposition(self):
        handle = build_mlp_head(16)
        _, history = train_model(
            handle, tiny_dataset(), TrainConfig(epochs=3, batch_size=4, seed=1)
        )
        for loss, kl, reg in zip(history.loss, history.kl, history.reg):
            assert loss == pytest.approx(kl + reg, abs=1e-6)

    def test_same_seed_same_loss_curve(self):
        curves = []
        for _ in range(2):
            torch.manual_seed(7)  # init is part of the seeded run
            handle = build_mlp_head(16)
            _, history = train_model(
                handle, tiny_dataset(), TrainConfig(epochs=3, batch_size=4, seed=7)
            )
            curves.append(history.loss)
        assert np.allclose(curves[0], curves[1], atol=1e-6)

    def test_defaults_match_training_setup(self):
        cfg = TrainConfig()
        assert cfg.epochs == 100
        assert cfg.batch_size == 100
        assert cfg.lambda_reg == 0.0001
        assert cfg.optimizer == "Adam"

    def test_unknown_optimizer_rejected(self):
        with pytest.raises(ContractError):
            TrainConfig(optimizer="SGD")

    def test_history_csv(self, tmp_path):
        handle = build_mlp_head(16)
        _, history = train_model(
            handle, tiny_dataset(), TrainConfig(epochs=2, batch_size=8, seed=0)
        )
        path = tmp_path / "history.csv"
        history.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,kl,reg,seconds"
        assert len(lines) == 3


def separable_embeddings(per_class=10, dim=2048, seed=0):
    """Analytically separable: classes sit on orthogonal coordinate blocks."""
    rng = np.random.default_rng(seed)
    data = []
    for cls in range(4):
        for _ in range(per_class):
            v = rng.standard_normal(dim).astype(np.float32) * 0.01
            v[cls * (dim // 4) : (cls + 1) * (dim // 4)] += 1.0
            data.append((v, one_hot(cls)))
    return data


class TestMlpTraining:
    def test_separable_embeddings_reach_full_training_accuracy(self):
        # closed-form check first: a nearest-block-mean rule is perfect
        data = separable_embeddings()
        dim = data[0][0].shape[0]
        for v, y in data:
            block_means = [v[i * dim // 4 : (i + 1) * dim // 4].mean() for i in range(4)]
            assert int(np.argmax(block_means)) == int(np.argmax(y))
        handle = build_mlp_head(dim)
        handle, _ = train_model(
            handle,
            data,
            TrainConfig(epochs=100, batch_size=40, learning_rate=1e-4, seed=0),
            target_kl=0.01,
        )
        x = np.stack([v for v, _ in data])
        pred = np.argmax(handle.forward(x), axis=1)
        true = np.array([np.argmax(y) for _, y in data])
        assert np.all(pred == true)

    def test_train_mlp_on_embeddings_plumbing(self):
        provider = fixture_embedding_provider(dim=64, seed=0)
        rng = np.random.default_rng(0)
        data = [
            (rng.standard_normal((128, 1000)).astype(np.float32), one_hot(i % 4))
            for i in range(8)
        ]
        handle, history = train_mlp_on_embeddings(
            provider, data, TrainConfig(epochs=1, batch_size=4, seed=0)
        )
        assert handle.module.input_dim == 64
        assert len(history.loss) == 1

    def test_empty_dataset_rejected(self):
        provider = fixture_embedding_provider(dim=64, seed=0)
        with pytest.raises(ContractError):
            train_mlp_on_embeddings(provider, [], TrainConfig(epochs=1))
