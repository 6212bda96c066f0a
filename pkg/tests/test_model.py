"""Scoring-network behavior: attention normalization, social fusion,
prediction reconstruction, ablation equivalences, and gradient checks."""

import numpy as np
import pytest

from gdsrec import GDSRec, ModelConfig, ParamStore, compute_stats
from gdsrec.autodiff import Tape, constant, grad_check
from gdsrec.errors import ConfigError
from gdsrec.graphs import SampleSet, build_interaction_graph, compute_relationship_coefficients
from gdsrec.model import fuse_scores

from synthdata import random_table, random_trust, small_instance


class TestAttentionWeights:
    def make(self, mode, n=4, seed=0):
        inst = small_instance(seed=seed, attention_mode=mode)
        model = inst["model"]
        rng = np.random.default_rng(seed)
        feats = constant(rng.normal(size=(n, model.config.embedding_size)))
        center = constant(rng.normal(size=model.config.embedding_size))
        return model.attention_weights(feats, center, "user", n)

    def test_softmax_singleton_is_exactly_one(self):
        w = self.make("softmax", n=1)
        assert w.data[0] == 1.0

    def test_avg_mode_uniform(self):
        w = self.make("avg", n=4)
        np.testing.assert_array_equal(w.data, [0.25] * 4)

    def test_softmax_normalized(self):
        for n in (1, 2, 5, 9):
            w = self.make("softmax", n=n, seed=n)
            assert (w.data >= 0).all()
            assert abs(w.data.sum() - 1.0) <= 1e-9

    def test_max_mode_all_equal(self):
        w = self.make("max", n=5)
        assert len(set(w.data.tolist())) == 1
        assert w.data[0] >= 1.0 / 5.0  # the max of a 5-way softmax

    def test_identical_neighbors_share_weight(self):
        inst = small_instance(seed=3)
        model = inst["model"]
        d = model.config.embedding_size
        row = np.random.default_rng(5).normal(size=d)
        feats = constant(np.stack([row, row]))
        center = constant(np.zeros(d))
        w = model.attention_weights(feats, center, "item", 2)
        np.testing.assert_allclose(w.data, [0.5, 0.5], atol=1e-12)


class TestLatents:
    def test_cold_user_uses_learned_default(self):
        # user with no train ratings aggregates nothing but stays scorable
        table = random_table(4, 4, 10, seed=2)
        mask = table.users != 3
        from gdsrec import RatingTable
        pruned = RatingTable(table.users[mask], table.items[mask], table.ratings[mask],
                             n_users=4, n_items=4)
        stats = compute_stats(pruned)
        cfg = ModelConfig(embedding_size=5, reservation=3, use_social=False)
        graph = build_interaction_graph(pruned, stats)
        model = GDSRec(cfg, 4, 4, stats, seed=0)
        samples = SampleSet(graph, 3, seed=0, epoch=0)
        h = model.user_latent(3, samples)
        np.testing.assert_array_equal(h.data, model.params["user_cold"].data)

    def test_latents_are_finite(self):
        inst = small_instance(seed=9)
        model, samples = inst["model"], inst["samples"]
        for u in range(inst["table"].n_users):
            assert np.isfinite(model.user_latent(u, samples).data).all()
        for v in range(inst["table"].n_items):
            assert np.isfinite(model.item_latent(v, samples).data).all()

    def test_graph_mode_mismatch_is_fatal(self):
        inst = small_instance(seed=1, use_rating_difference=False, use_social=False)
        # difference-mode graph fed to a raw-rating model
        diff_graph = build_interaction_graph(inst["table"], inst["stats"], True)
        samples = SampleSet(diff_graph, 4, seed=0, epoch=0)
        with pytest.raises(ConfigError):
            inst["model"].user_latent(0, samples)


class TestPreferenceScore:
    def test_zero_offsets_zero_head_gives_zero(self):
        inst = small_instance(seed=0)
        model = inst["model"]
        for name in ("pref1_w", "pref1_b", "pref2_w", "pref2_b"):
            model.params[name].data[...] = 0.0
        d = model.config.embedding_size
        s = model.preference_score(constant(np.zeros(d)), constant(np.zeros(d)))
        assert s.item() == 0.0

    def test_output_finite_and_scalar(self):
        inst = small_instance(seed=4)
        model, samples = inst["model"], inst["samples"]
        s = model.preference_score(model.user_latent(0, samples),
                                   model.item_latent(0, samples))
        assert s.shape == ()
        assert np.isfinite(s.item())

    def test_toy_model_overfits_one_batch(self):
        """Repeated steps on a single batch of residual targets drive the
        preference path (alpha=0, no social term) below 0.05 MAE."""
        from gdsrec.params import Adam

        inst = small_instance(seed=6, use_social=False, alpha=0.0, d=8)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        users, items = table.users[:10], table.items[:10]
        targets = np.linspace(-1.0, 1.0, 10)

        opt = Adam(model.params, lr=0.02)
        for _ in range(400):
            model.params.zero_grad()
            with Tape() as tape:
                loss = model.batch_loss(users, items, targets, samples)
                tape.backward(loss)
            opt.step()
        preds = model.predict_many(users, items, samples)
        assert np.abs(preds - targets).mean() < 0.05


class TestFusion:
    def test_fuse_scores_arithmetic(self):
        assert fuse_scores(0.3, [0.2, 0.4], [0.5, 0.5]) == pytest.approx(0.3)

    def test_fuse_scores_degenerate_without_neighbors(self):
        assert fuse_scores(0.7, [], []) == 0.7

    def test_social_off_equals_own_preference(self):
        inst = small_instance(seed=5, use_social=False)
        model, samples = inst["model"], inst["samples"]
        for u, v in [(0, 0), (1, 3), (2, 2)]:
            f = model.fused_score(u, v, samples)
            rp = model._pair_preference(u, v, samples, None)
            assert f.item() == rp.item()

    def test_single_identical_neighbor_collapses_to_own_score(self):
        """In avg attention mode a neighbor with the same rated history
        produces the same latent, so the fusion is the own score exactly."""
        from gdsrec import RatingTable, TrustEdges

        # users 0 and 1 rate the same items identically; 0 trusts only 1
        table = RatingTable([0, 0, 1, 1, 2], [0, 1, 0, 1, 2], [5, 2, 5, 2, 4],
                            n_users=3, n_items=3)
        trust = TrustEdges(np.array([[0, 1]], dtype=np.int64))
        stats = compute_stats(table)
        cfg = ModelConfig(embedding_size=6, reservation=4, attention_mode="avg")
        graph = build_interaction_graph(table, stats)
        social = compute_relationship_coefficients(table, trust, delta=1)
        model = GDSRec(cfg, 3, 3, stats, social, seed=2)
        samples = SampleSet(graph, 4, seed=0, epoch=0)
        f = model.fused_score(0, 2, samples)
        rp = model._pair_preference(0, 2, samples, None)
        assert f.item() == pytest.approx(rp.item(), abs=1e-14)

    def test_matches_reference_arithmetic_on_real_graph(self):
        inst = small_instance(seed=11)
        model, samples, social = inst["model"], inst["samples"], inst["social"]
        u = next(i for i in range(inst["table"].n_users) if social.degree(i) >= 2)
        v = 1
        own = model._pair_preference(u, v, samples, None).item()
        nbr = [model._pair_preference(int(k), v, samples, None).item()
               for k in social.neighbor_ids[u]]
        expected = fuse_scores(own, nbr, social.neighbor_weights[u], model.config.social_mix)
        assert model.fused_score(u, v, samples).item() == pytest.approx(expected, abs=1e-12)


class TestPredict:
    def test_reconstruction_arithmetic(self):
        inst = small_instance(seed=1)
        model = inst["model"]
        model.stats.user_avg[0] = 4.0
        model.stats.item_avg[0] = 3.0
        assert model.benchmark(0, 0) == pytest.approx(3.5)
        f = model.fused_score(0, 0, inst["samples"]).item()
        got = model.predict_score(0, 0, inst["samples"]).item()
        assert got == pytest.approx(0.5 * (4.0 + 3.0) + f)

    def test_alpha_zero_removes_averages(self):
        inst = small_instance(seed=2, alpha=0.0)
        model, samples = inst["model"], inst["samples"]
        assert model.predict_score(0, 0, samples).item() == model.fused_score(0, 0, samples).item()

    def test_alpha_linearity(self):
        base = small_instance(seed=3)
        lo = small_instance(seed=3, alpha=0.4)
        hi = small_instance(seed=3, alpha=1.6)
        u, v = 1, 2
        slope = (hi["model"].predict_score(u, v, hi["samples"]).item()
                 - lo["model"].predict_score(u, v, lo["samples"]).item()) / 1.2
        expected = 0.5 * (base["stats"].user_avg[u] + base["stats"].item_avg[v])
        assert slope == pytest.approx(expected, abs=1e-9)

    def test_sn_variant_ignores_trust_contents(self):
        """Bitwise identical predictions under different trust graphs."""
        preds = []
        for trust_seed in (100, 200):
            table = random_table(10, 8, 40, seed=4)
            trust = random_trust(10, 12, seed=trust_seed)
            stats = compute_stats(table)
            cfg = ModelConfig(embedding_size=6, reservation=4, use_social=False)
            graph = build_interaction_graph(table, stats)
            model = GDSRec(cfg, 10, 8, stats, social=None, seed=0)
            samples = SampleSet(graph, 4, seed=0, epoch=0)
            preds.append(model.predict_many(table.users, table.items, samples))
        np.testing.assert_array_equal(preds[0], preds[1])

    def test_uniform_coefficients_make_delta_irrelevant(self):
        preds = []
        for delta in (0, 3):
            inst = small_instance(seed=7, delta=delta, use_relationship_coeff=False)
            model, samples, table = inst["model"], inst["samples"], inst["table"]
            preds.append(model.predict_many(table.users[:20], table.items[:20], samples))
        np.testing.assert_array_equal(preds[0], preds[1])


class TestDecentralizationInvariance:
    def test_integer_shift_of_one_item_leaves_user_side_levels(self):
        from gdsrec import RatingTable

        rng = np.random.default_rng(17)
        users = rng.integers(0, 8, 40)
        items = rng.integers(0, 6, 40)
        ratings = rng.integers(1, 5, 40)  # <= 4 so a +1 shift stays in range
        t0 = RatingTable(users, items, ratings, n_users=8, n_items=6)
        shifted = ratings + (items == 2).astype(np.int64)
        t1 = RatingTable(users, items, shifted, n_users=8, n_items=6)
        s0, s1 = compute_stats(t0), compute_stats(t1)
        assert s1.item_avg[2] == pytest.approx(s0.item_avg[2] + 1.0)
        g0 = build_interaction_graph(t0, s0)
        g1 = build_interaction_graph(t1, s1)
        for u in range(8):
            sel0 = g0.user_items[u] == 2
            np.testing.assert_array_equal(g0.user_levels[u][sel0], g1.user_levels[u][sel0])


class TestBatchLoss:
    def test_zero_when_targets_equal_predictions(self):
        inst = small_instance(seed=8)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        users, items = table.users[:6], table.items[:6]
        targets = model.predict_many(users, items, samples)
        loss = model.batch_loss(users, items, targets, samples)
        assert loss.item() == pytest.approx(0.0, abs=1e-24)

    def test_half_for_unit_error_single_pair(self):
        inst = small_instance(seed=8)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        u, v = table.users[:1], table.items[:1]
        target = model.predict_many(u, v, samples) - 1.0
        assert model.batch_loss(u, v, target, samples).item() == pytest.approx(0.5)

    def test_mae_loss_option(self):
        inst = small_instance(seed=8)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        u, v = table.users[:1], table.items[:1]
        target = model.predict_many(u, v, samples) - 2.0
        assert model.batch_loss(u, v, target, samples, loss="mae").item() == pytest.approx(2.0)

    def test_l2_penalty_adds_weighted_norms(self):
        inst = small_instance(seed=8, l2=0.1)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        users, items = table.users[:3], table.items[:3]
        targets = model.predict_many(users, items, samples)
        loss = model.batch_loss(users, items, targets, samples)
        norms = sum(float((t.data ** 2).sum()) for t in model.params.tensors())
        assert loss.item() == pytest.approx(0.05 * norms, rel=1e-12)


class TestGradients:
    def test_full_scoring_gradcheck_on_toy_graph(self):
        """Reverse-mode through the entire scorer (5 users) vs central
        differences, every parameter coordinate probed."""
        inst = small_instance(n_users=5, n_items=4, n_ratings=14, n_trust=6,
                              seed=21, d=3, k=3)
        model, samples = inst["model"], inst["samples"]
        err = grad_check(lambda: model.predict_score(0, 1, samples, cache={}),
                         model.params.tensors(), eps=1e-5)
        assert err < 1e-4

    def test_batch_loss_gradcheck(self):
        inst = small_instance(n_users=5, n_items=4, n_ratings=14, n_trust=6,
                              seed=22, d=3, k=3)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        users, items = table.users[:5], table.items[:5]
        targets = np.linspace(1, 5, 5)
        err = grad_check(lambda: model.batch_loss(users, items, targets, samples),
                         model.params.tensors(), eps=1e-5)
        assert err < 1e-4


class TestCheckpointRoundTrip:
    def test_predictions_survive_save_load(self, tmp_path):
        inst = small_instance(seed=30)
        model, samples, table = inst["model"], inst["samples"], inst["table"]
        before = model.predict_many(table.users[:10], table.items[:10], samples)
        model.params.save(tmp_path / "ckpt")
        loaded = ParamStore.load(tmp_path / "ckpt")
        model.params.restore(loaded.snapshot())
        after = model.predict_many(table.users[:10], table.items[:10], samples)
        np.testing.assert_array_equal(before, after)

    def test_version_field_is_mandatory(self, tmp_path):
        inst = small_instance(seed=30)
        inst["model"].params.save(tmp_path / "ckpt")
        import json
        mpath = tmp_path / "ckpt.json"
        manifest = json.loads(mpath.read_text())
        del manifest["version"]
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(ValueError, match="version"):
            ParamStore.load(tmp_path / "ckpt")


class TestConfigValidation:
    def test_bad_attention_mode(self):
        with pytest.raises(ConfigError):
            ModelConfig(attention_mode="mean").validate()

    def test_negative_alpha(self):
        with pytest.raises(ConfigError):
            ModelConfig(alpha=-0.1).validate()

    def test_variant_substitutions(self):
        base = ModelConfig()
        assert base.for_variant("RC").use_relationship_coeff is False
        assert base.for_variant("SN").use_social is False
        assert base.for_variant("RD").use_rating_difference is False
        assert base.for_variant("avg").attention_mode == "avg"
        assert base.for_variant("max").attention_mode == "max"
        assert base.for_variant("full") == base
        with pytest.raises(ConfigError):
            base.for_variant("nope")
