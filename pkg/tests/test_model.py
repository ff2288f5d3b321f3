"""Network components: encoding, proportions, decoder, losses, gradients,
snapshot round-trips.  Gradient checks use central finite differences."""

import math

import numpy as np
import pytest
import torch

from vmftopics import geometry
from vmftopics import model as mdl
from vmftopics.embeddings import EmbeddingMatrix


def _unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _small_model(seed=0, latent="vmf", m=4, v=30, d=8, radius=10.0, **kw):
    rng = np.random.default_rng(seed)
    emb = EmbeddingMatrix(vectors=_unit_rows(rng, v, d))
    config = mdl.ModelConfig(
        num_topics=m, vocab_size=v, embedding_dim=d,
        hidden_sizes=(16, 8), dropout=0.5, latent_kind=latent,
        radius=radius, seed=seed, **kw,
    )
    return mdl.TopicModel(config, emb)


def _bow(rng, n, v, scale=20):
    return torch.from_numpy(rng.poisson(scale / v, size=(n, v)).astype(np.float64))


class TestEncode:
    def test_unit_mu_always(self):
        model = _small_model()
        rng = np.random.default_rng(1)
        mu, kappa = model.encode(_bow(rng, 64, 30), train_mode=False)
        norms = torch.linalg.vector_norm(mu, dim=1)
        assert torch.allclose(norms, torch.ones(64, dtype=torch.float64), atol=1e-6)
        assert torch.all(kappa > 0)

    def test_eval_mode_deterministic(self):
        model = _small_model()
        rng = np.random.default_rng(2)
        x = _bow(rng, 8, 30)
        a = model.encode(x, train_mode=False)
        b = model.encode(x, train_mode=False)
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])

    def test_zero_input_uses_bias_direction(self):
        model = _small_model()
        with torch.no_grad():
            for b in model.enc_b:
                b.zero_()
            model.mu_b.copy_(torch.tensor([3.0, 4.0, 0.0, 0.0], dtype=torch.float64))
        mu, _ = model.encode(torch.zeros(1, 30, dtype=torch.float64), train_mode=False)
        np.testing.assert_allclose(mu[0].detach().numpy(), [0.6, 0.8, 0.0, 0.0], atol=1e-12)

    def test_gaussian_head_shapes(self):
        model = _small_model(latent="gaussian")
        rng = np.random.default_rng(3)
        mu, log_sigma = model.encode(_bow(rng, 5, 30), train_mode=False)
        assert mu.shape == (5, 4) and log_sigma.shape == (5, 4)

    def test_nan_input_fails_fast(self):
        model = _small_model()
        x = torch.full((1, 30), float("nan"), dtype=torch.float64)
        with pytest.raises(mdl.ModelDivergence):
            model.encode(x, train_mode=False)


class TestTopicProportions:
    def test_zero_radius_uniform(self):
        eta = torch.tensor([[0.3, -0.2, 0.5]], dtype=torch.float64)
        z = mdl.topic_proportions(eta, 0.0)
        np.testing.assert_allclose(z.numpy()[0], np.full(3, 1 / 3), atol=1e-12)

    def test_maximizer_reaches_expected_peak(self):
        eta = torch.from_numpy(geometry.softmax_maximizer(10)).unsqueeze(0)
        z = mdl.topic_proportions(eta, 10.0)
        assert float(z.max()) == pytest.approx(
            geometry.max_softmax_on_sphere(10, 10.0), abs=1e-12
        )
        assert float(z.max()) == pytest.approx(0.99976, abs=5e-6)

    def test_joint_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        eta = torch.from_numpy(rng.standard_normal((1, 6)))
        radius = torch.from_numpy(rng.uniform(1, 5, size=6))
        perm = rng.permutation(6)
        z = mdl.topic_proportions(eta, radius)
        z_perm = mdl.topic_proportions(eta[:, perm], radius[perm])
        np.testing.assert_allclose(z_perm.numpy()[0], z.numpy()[0][perm], atol=1e-12)

    def test_simplex(self):
        rng = np.random.default_rng(5)
        eta = torch.from_numpy(_unit_rows(rng, 100, 7))
        z = mdl.topic_proportions(eta, 10.0)
        np.testing.assert_allclose(z.sum(dim=1).numpy(), 1.0, atol=1e-9)
        assert torch.all(z > 0)


class TestDecoder:
    def test_orthonormal_two_by_two(self):
        rng = np.random.default_rng(6)
        emb = EmbeddingMatrix(vectors=np.eye(2))
        config = mdl.ModelConfig(num_topics=2, vocab_size=2, embedding_dim=2,
                                 hidden_sizes=(4,), seed=0)
        model = mdl.TopicModel(config, emb)
        with torch.no_grad():
            model.topic_emb.copy_(torch.eye(2, dtype=torch.float64))
        e = model.topic_word_matrix().detach().numpy()
        expected = np.exp(1.0) / (np.exp(1.0) + 1.0)
        np.testing.assert_allclose(e[0], [expected, 1 - expected], atol=1e-12)
        np.testing.assert_allclose(e[1], [1 - expected, expected], atol=1e-12)

    def test_identical_topic_rows(self):
        model = _small_model()
        with torch.no_grad():
            model.topic_emb.copy_(model.topic_emb[0].repeat(4, 1))
        e = model.topic_word_matrix().detach().numpy()
        for t in range(1, 4):
            np.testing.assert_allclose(e[t], e[0], atol=1e-15)

    def test_rows_stochastic(self):
        e = _small_model(seed=7).topic_word_matrix().detach()
        np.testing.assert_allclose(e.sum(dim=1).numpy(), 1.0, atol=1e-8)


class TestReconstruct:
    def test_one_hot_recovers_row(self):
        model = _small_model(seed=8)
        e = model.topic_word_matrix()
        z = torch.zeros(1, 4, dtype=torch.float64)
        z[0, 2] = 1.0
        lp = mdl.reconstruct_log_probs(z, e)
        np.testing.assert_allclose(lp.detach().numpy()[0], np.log(e.detach().numpy())[2], atol=1e-12)

    def test_uniform_mix_of_identical_rows(self):
        model = _small_model(seed=9)
        with torch.no_grad():
            model.topic_emb.copy_(model.topic_emb[0].repeat(4, 1))
        e = model.topic_word_matrix()
        z = torch.full((1, 4), 0.25, dtype=torch.float64)
        lp = mdl.reconstruct_log_probs(z, e)
        np.testing.assert_allclose(lp.detach().numpy()[0], np.log(e.detach().numpy()[0]), atol=1e-12)

    def test_exp_sums_to_one(self):
        model = _small_model(seed=10)
        rng = np.random.default_rng(10)
        fwd = model(_bow(rng, 16, 30), train_mode=True)
        np.testing.assert_allclose(
            torch.exp(fwd.recon_log_probs).sum(dim=1).detach().numpy(), 1.0, atol=1e-8
        )


class TestLosses:
    def test_zero_counts_zero_recon(self):
        model = _small_model(seed=11)
        x = torch.zeros(1, 30, dtype=torch.float64)
        fwd = model(x, train_mode=False)
        parts = mdl.elbo_loss(x, fwd)
        assert float(parts["recon"]) == 0.0

    def test_kappa_zero_kl_zero(self):
        kl = mdl.vmf_kl_torch(torch.zeros(3, dtype=torch.float64), 5)
        np.testing.assert_allclose(kl.numpy(), 0.0, atol=1e-15)

    def test_recon_lower_bound(self):
        model = _small_model(seed=12)
        rng = np.random.default_rng(12)
        x = _bow(rng, 8, 30)
        fwd = model(x, train_mode=False)
        recon = -(x * fwd.recon_log_probs).sum(dim=1)
        bound = x.sum(dim=1) * (-fwd.recon_log_probs.max(dim=1).values)
        assert torch.all(recon >= bound - 1e-9)

    def test_entropy_examples(self):
        one_hot = torch.eye(3, dtype=torch.float64)
        assert float(mdl.topic_word_entropy(one_hot)) == pytest.approx(0.0, abs=1e-12)
        uniform = torch.full((4, 50), 1 / 50, dtype=torch.float64)
        assert float(mdl.topic_word_entropy(uniform)) == pytest.approx(
            4 * np.log(50), abs=1e-9
        )
        half = torch.full((2, 2), 0.5, dtype=torch.float64)
        assert float(mdl.topic_word_entropy(half)) == pytest.approx(
            2 * np.log(2), abs=1e-12
        )


class TestGradients:
    def test_decoder_gradients_match_fd(self):
        """Fixed latent draw; autograd vs central differences on e_T."""
        model = _small_model(seed=13)
        rng = np.random.default_rng(13)
        x = _bow(rng, 4, 30)
        z = torch.from_numpy(
            np.abs(rng.dirichlet(np.ones(4), size=4))
        )

        def loss_fn():
            e = model.topic_word_matrix()
            lp = mdl.reconstruct_log_probs(z, e)
            return -(x * lp).sum()

        loss = loss_fn()
        loss.backward()
        grad = model.topic_emb.grad.clone()
        h = 1e-5
        for idx in [(0, 0), (1, 3), (3, 7)]:
            with torch.no_grad():
                model.topic_emb[idx] += h
                up = float(loss_fn())
                model.topic_emb[idx] -= 2 * h
                down = float(loss_fn())
                model.topic_emb[idx] += h
            fd = (up - down) / (2 * h)
            assert abs(fd - float(grad[idx])) / max(abs(fd), 1e-12) <= 1e-4

    def test_encoder_gradients_match_fd(self):
        """Eval-mode forward (eta = mu) is deterministic: FD applies."""
        model = _small_model(seed=14)
        rng = np.random.default_rng(14)
        x = _bow(rng, 4, 30)

        def loss_fn():
            fwd = model(x, train_mode=False)
            parts = mdl.elbo_loss(x, fwd)
            return parts["total"]

        loss = loss_fn()
        model.zero_grad()
        loss.backward()
        for name, param in [("enc_w.0", model.enc_w[0]), ("mu_w", model.mu_w)]:
            grad = param.grad
            flat_idx = (0, 1)
            h = 1e-6
            with torch.no_grad():
                param[flat_idx] += h
                up = float(loss_fn())
                param[flat_idx] -= 2 * h
                down = float(loss_fn())
                param[flat_idx] += h
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), 1e-10)
            assert abs(fd - float(grad[flat_idx])) / denom <= 1e-4, name

    def test_kl_gradient_matches_fd(self):
        kappa = torch.tensor([5.0], dtype=torch.float64, requires_grad=True)
        kl = mdl.vmf_kl_torch(kappa, 10).sum()
        kl.backward()
        h = 1e-6
        fd = (geometry.vmf_kl(10, 5.0 + h) - geometry.vmf_kl(10, 5.0 - h)) / (2 * h)
        assert abs(float(kappa.grad[0]) - fd) / abs(fd) <= 1e-5

    def test_zero_weight_zero_gradient(self):
        """With the entropy term weighted zero, e_V-direction entropy
        gradient contributes nothing beyond reconstruction."""
        model = _small_model(seed=15)
        rng = np.random.default_rng(15)
        x = _bow(rng, 4, 30)
        fwd = model(x, train_mode=False)
        parts = mdl.elbo_loss(x, fwd)
        h = fwd.losses["entropy_reg"]
        model.zero_grad()
        (parts["total"] + 0.0 * h).backward()
        only_elbo = model.topic_emb.grad.clone()
        model.zero_grad()
        fwd = model(x, train_mode=False)
        parts = mdl.elbo_loss(x, fwd)
        parts["total"].backward()
        np.testing.assert_allclose(only_elbo.numpy(), model.topic_emb.grad.numpy(), atol=1e-12)

    def test_stochastic_kappa_gradient(self):
        """Reparameterized kappa gradient of the expected reconstruction.

        Two oracles: (a) the finite difference of independent MC
        estimates, with the tolerance 3x the combined standard error;
        (b) the exact score-function gradient E[(f - mean f)(omega - A)],
        available because the marginal of omega is an exponential family
        in kappa.  (b) resolves the bias of the omitted accept/reject
        correction term, which stays below 15% at this operating point.
        """
        m = 5
        rng = np.random.default_rng(16)
        mu_np = _unit_rows(rng, 1, m)[0]
        e_rows = np.abs(rng.dirichlet(np.ones(25), size=m))
        x_np = rng.poisson(1.0, size=25).astype(np.float64)
        e_t = torch.from_numpy(e_rows)
        x_t = torch.from_numpy(x_np)
        kappa0 = 8.0
        radius = 10.0

        def recon_of_eta(eta):
            z = mdl.topic_proportions(eta, radius)
            lp = mdl.reconstruct_log_probs(z, e_t)
            return -(x_t * lp).sum(dim=1)

        def draw_eta(kappa_val, n, seed):
            om, _, _ = geometry.sample_omega(
                m, np.full(n, kappa_val), np.random.default_rng(seed)
            )
            tg = geometry.sample_uniform_sphere(n, m - 1, np.random.default_rng(seed + 1))
            loc = np.concatenate(
                [om[:, None], np.sqrt(np.maximum(1 - om * om, 0))[:, None] * tg], axis=1
            )
            return geometry.householder_rotate(np.tile(mu_np, (n, 1)), loc), om

        n_grad = 10_000
        kappa = torch.full((n_grad,), kappa0, dtype=torch.float64, requires_grad=True)
        _, eps_np, _ = geometry.sample_omega(
            m, np.full(n_grad, kappa0), np.random.default_rng(17)
        )
        tangent = geometry.sample_uniform_sphere(n_grad, m - 1, np.random.default_rng(18))
        eps = torch.from_numpy(eps_np)
        v = torch.from_numpy(tangent)
        disc = torch.sqrt(4 * kappa * kappa + (m - 1.0) ** 2)
        b = (-2 * kappa + disc) / (m - 1.0)
        omega = (1 - (1 + b) * eps) / (1 - (1 - b) * eps)
        local = torch.cat(
            [omega.unsqueeze(1),
             torch.sqrt(torch.clamp(1 - omega * omega, min=0.0)).unsqueeze(1) * v],
            dim=1,
        )
        mu_b = torch.from_numpy(np.tile(mu_np, (n_grad, 1)))
        eta = mdl._householder_rotate_torch(mu_b, local)
        recon_of_eta(eta).sum().backward()
        grads = kappa.grad.numpy()
        grad_mean = grads.mean()
        grad_se = grads.std(ddof=1) / np.sqrt(n_grad)

        # (a) finite difference of independent 1e5-sample estimates
        h = 0.5
        n_mc = 100_000
        vals = {}
        ses = {}
        for sgn, seed in ((+1, 900), (-1, 902)):
            eta_np, _ = draw_eta(kappa0 + sgn * h, n_mc, seed)
            f = recon_of_eta(torch.from_numpy(eta_np)).numpy()
            vals[sgn] = f.mean()
            ses[sgn] = f.std(ddof=1) / np.sqrt(n_mc)
        fd = (vals[+1] - vals[-1]) / (2 * h)
        fd_se = math.sqrt(ses[+1] ** 2 + ses[-1] ** 2) / (2 * h)
        combined = math.sqrt(grad_se**2 + fd_se**2)
        assert abs(grad_mean - fd) <= 3 * combined, (grad_mean, fd, combined)

        # (b) exact score-function gradient with a mean control variate
        n_score = 1_000_000
        eta_np, om = draw_eta(kappa0, n_score, 904)
        f = recon_of_eta(torch.from_numpy(eta_np)).numpy()
        score = om - geometry.bessel_ratio(m, kappa0)
        g = (f - f.mean()) * score
        exact = g.mean()
        exact_se = g.std(ddof=1) / np.sqrt(n_score)
        tol = 0.15 * abs(exact) + 3 * math.sqrt(grad_se**2 + exact_se**2)
        assert abs(grad_mean - exact) <= tol, (grad_mean, exact, tol)


class TestForwardInvariants:
    def test_eval_forward_pure(self):
        model = _small_model(seed=17)
        rng = np.random.default_rng(17)
        x = _bow(rng, 6, 30)
        a = model(x, train_mode=False)
        b = model(x, train_mode=False)
        assert torch.equal(a.z, b.z)

    def test_train_mode_samples_unit_eta(self):
        model = _small_model(seed=18)
        rng = np.random.default_rng(18)
        fwd = model(_bow(rng, 32, 30), train_mode=True)
        norms = torch.linalg.vector_norm(fwd.eta, dim=1)
        assert torch.allclose(norms, torch.ones(32, dtype=torch.float64), atol=1e-9)

    def test_z_simplex_strictly_positive(self):
        model = _small_model(seed=19)
        rng = np.random.default_rng(19)
        fwd = model(_bow(rng, 32, 30), train_mode=True)
        np.testing.assert_allclose(fwd.z.sum(dim=1).detach().numpy(), 1.0, atol=1e-6)
        assert torch.all(fwd.z > 0)

    def test_fixed_kappa_mode(self):
        model = _small_model(seed=20, kappa_mode="fixed", kappa_fixed=50.0)
        rng = np.random.default_rng(20)
        _, kappa = model.encode(_bow(rng, 4, 30), train_mode=False)
        np.testing.assert_allclose(kappa.detach().numpy(), 50.0)
        assert "kappa_raw" not in [n for n, p in model.named_parameters() if p.requires_grad]

    def test_radius_modes(self):
        scalar = _small_model(seed=21, radius_mode="scalar")
        assert scalar.radius_param.requires_grad
        vector = _small_model(seed=21, radius_mode="vector")
        assert vector.radius_param.shape == (4,)
        np.testing.assert_allclose(vector.radius_param.detach().numpy(), 10.0)


class TestSnapshot:
    def test_save_load_save_byte_identical(self, tmp_path):
        model = _small_model(seed=22)
        data1 = mdl.save_checkpoint(model, "hash123", tmp_path / "m.bin")
        loaded, vh = mdl.load_checkpoint(tmp_path / "m.bin")
        assert vh == "hash123"
        data2 = mdl.save_checkpoint(loaded, vh)
        assert data1 == data2

    def test_vocab_hash_mismatch_rejected(self, tmp_path):
        model = _small_model(seed=23)
        mdl.save_checkpoint(model, "aaa", tmp_path / "m.bin")
        with pytest.raises(ValueError, match="vocabulary"):
            mdl.load_checkpoint(tmp_path / "m.bin", expected_vocab_hash="bbb")

    def test_loaded_model_same_outputs(self, tmp_path):
        model = _small_model(seed=24)
        rng = np.random.default_rng(24)
        x = _bow(rng, 4, 30)
        before = model(x, train_mode=False).z.detach()
        mdl.save_checkpoint(model, "h", tmp_path / "m.bin")
        loaded, _ = mdl.load_checkpoint(tmp_path / "m.bin")
        after = loaded(x, train_mode=False).z.detach()
        # parameters round-trip through float32 blocks
        np.testing.assert_allclose(before.numpy(), after.numpy(), atol=1e-5)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"nope" + b"\x00" * 100)
        with pytest.raises(ValueError, match="magic"):
            mdl.load_checkpoint(path)
