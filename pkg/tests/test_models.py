"""Backbone objectives, training, scoring, top-N lists and checkpoints."""

import numpy as np
import pytest
from scipy import sparse

from src.corpus.splitting import split
from src.fusion.early import AlignedFeatures, FeatureBlock, fuse_concat
from src.models.base import HyperParams, Recommender, TrainingSet, recommend_all, recommend_topk, score
from src.models.checkpoint import load_checkpoint, save_checkpoint
from src.models.content import ContentModel, NegativeSampler, bpr_loss_and_grads, init_content, train_content
from src.models.mf import MfModel, mf_loss_and_grads, train_mf
from src.models.registry import needs_features, train_model
from src.models.vaecf import gaussian_kl, init_vaecf, train_vaecf, vaecf_loss_and_grads
from src.utils.errors import ArgumentError, DivergenceError, PreconditionError


class FixedScores(Recommender):
    """A recommender returning a stored score matrix."""

    family = "fixed"
    handles_cold_users = True

    def __init__(self, scores, seen=None):
        scores = np.asarray(scores, dtype=np.float64)
        seen = sparse.csr_matrix(scores.shape) if seen is None else seen
        super().__init__({"scores": scores}, HyperParams(), seen, np.zeros(scores.shape[1]))

    def _score_known(self, user):
        return self.params["scores"][user]


def _check_gradients(loss_fn, params, rng, probes=4, h=1e-5):
    """Compare analytic gradients with central differences at random coordinates of every block."""
    _, grads = loss_fn(params)
    for name, value in params.items():
        for flat in rng.choice(value.size, size=min(probes, value.size), replace=False):
            index = np.unravel_index(flat, value.shape)
            original = value[index]
            value[index] = original + h
            upper, _ = loss_fn(params)
            value[index] = original - h
            lower, _ = loss_fn(params)
            value[index] = original
            numeric = (upper - lower) / (2 * h)
            analytic = grads[name][index]
            scale = max(abs(numeric), abs(analytic), 1e-2)
            assert abs(numeric - analytic) / scale < 1e-4, (name, index, numeric, analytic)


def _triples(rng, n_users, n_items, size=12):
    return {
        "users": rng.integers(n_users, size=size),
        "positives": rng.integers(n_items, size=size),
        "negatives": rng.integers(n_items, size=size),
        "size": size,
    }


def _scaled(params, rng, std=0.5):
    return {name: rng.normal(0.0, std, size=value.shape) for name, value in params.items()}


@pytest.fixture(scope="module")
def planted_training(small_planted):
    log = small_planted.log
    return TrainingSet.from_split(log, split(log, "random", 0.2, seed=0))


class TestGradients:
    def test_mf(self):
        for point in range(10):
            rng = np.random.default_rng(point)
            params = {
                "mu": rng.normal(size=1),
                "b_user": rng.normal(size=5),
                "b_item": rng.normal(size=4),
                "P": rng.normal(size=(5, 3)),
                "Q": rng.normal(size=(4, 3)),
            }
            batch = {
                "users": rng.integers(5, size=10),
                "items": rng.integers(4, size=10),
                "ratings": rng.uniform(1, 5, size=10),
            }
            _check_gradients(lambda p: mf_loss_and_grads(p, batch, reg=0.1), params, rng)

    @pytest.mark.parametrize("variant", ["vbpr", "vmf", "amr"])
    def test_bpr(self, variant):
        for point in range(10):
            rng = np.random.default_rng(100 + point)
            features = [rng.normal(size=(6, 3)), rng.normal(size=(6, 2))]
            if variant != "amr":
                features = [np.hstack(features)]
            hp = HyperParams(latent_dim=3)
            params = _scaled(init_content(variant, 4, 6, features, hp, rng), rng)
            batch = _triples(rng, 4, 6)
            _check_gradients(lambda p: bpr_loss_and_grads(p, batch, variant, features, reg=0.05), params, rng)

    def test_elbo_with_fixed_noise(self):
        for point in range(10):
            rng = np.random.default_rng(200 + point)
            hp = HyperParams(hidden_dim=5, z_dim=3)
            params = _scaled(init_vaecf(7, hp, rng), rng, std=0.3)
            x = (rng.random((4, 7)) < 0.4).astype(np.float64)
            x[:, 0] = 1.0
            batch = {"x": x, "noise": rng.standard_normal((4, 3))}
            _check_gradients(lambda p: vaecf_loss_and_grads(p, batch, beta=0.7), params, rng)


class TestMf:
    def test_rank_one_ratings(self):
        rng = np.random.default_rng(0)
        p, q = rng.uniform(0.5, 1.5, size=20), rng.uniform(0.5, 1.5, size=20)
        cells = rng.choice(400, size=200, replace=False)
        users, items = cells // 20, cells % 20
        training = TrainingSet(20, 20, users, items, p[users] * q[items])
        hp = HyperParams(latent_dim=1, learning_rate=0.05, reg=0.0, epochs=200, batch_size=1, init_std=0.1, seed=1)
        model = train_mf(training, hp)
        predicted = np.array([model.score(u, i) for u, i in zip(users, items)])
        rmse = np.sqrt(np.mean((predicted - training.ratings) ** 2))
        assert rmse < 0.05
        assert model.loss_trace[-1] < model.loss_trace[0]

    def test_constant_ratings(self):
        rng = np.random.default_rng(1)
        users, items = rng.integers(10, size=60), rng.integers(8, size=60)
        training = TrainingSet(10, 8, users, items, np.full(60, 3.5))
        model = train_mf(training, HyperParams(learning_rate=1e-4, reg=0.0, epochs=5, seed=0))
        assert model.mu[0] == pytest.approx(3.5, abs=0.05)
        assert np.all(np.abs(model.b_user) < 0.05) and np.all(np.abs(model.b_item) < 0.05)

    def test_zero_latents_reduce_to_biases(self):
        seen = sparse.csr_matrix(([1.0], ([0], [0])), shape=(2, 3))
        params = {
            "mu": np.array([3.0]),
            "b_user": np.array([0.5, -0.5]),
            "b_item": np.array([0.1, 0.2, 0.3]),
            "P": np.zeros((2, 4)),
            "Q": np.zeros((3, 4)),
        }
        model = MfModel(params, HyperParams(latent_dim=4), seen, np.zeros(3))
        assert score(model, 0, 2) == pytest.approx(3.8)

    def test_divergence_names_epoch_and_rate(self):
        rng = np.random.default_rng(2)
        training = TrainingSet(5, 5, rng.integers(5, size=30), rng.integers(5, size=30), rng.uniform(1, 5, size=30))
        with pytest.raises(DivergenceError) as info:
            train_mf(training, HyperParams(learning_rate=1e6, epochs=50, batch_size=1, seed=0))
        assert info.value.learning_rate == 1e6
        assert info.value.epoch >= 1

    def test_cold_user_gets_popularity(self):
        training = TrainingSet(3, 3, [0, 0, 1], [0, 1, 1], [1.0, 1.0, 1.0])
        model = train_mf(training, HyperParams(epochs=1))
        np.testing.assert_array_equal(model.score_items(2), [1.0, 2.0, 0.0])
        assert recommend_topk(model, 2, 3).items == (1, 0, 2)


class TestVaecf:
    def test_kl_closed_form(self):
        assert gaussian_kl(np.zeros((1, 1)), np.zeros((1, 1)))[0] == 0.0
        assert gaussian_kl(np.ones((1, 1)), np.zeros((1, 1)))[0] == pytest.approx(0.5)

    def test_removing_kl_pressure_helps_reconstruction(self, planted_training):
        hp = HyperParams(hidden_dim=32, z_dim=8, learning_rate=0.01, epochs=60, batch_size=16, seed=4)
        free = train_vaecf(planted_training, hp.replace(beta=0.0))
        regularized = train_vaecf(planted_training, hp.replace(beta=1.0))
        assert free.reconstruction_loglik() >= regularized.reconstruction_loglik()

    def test_scoring_is_deterministic(self, planted_training):
        model = train_vaecf(planted_training, HyperParams(hidden_dim=8, z_dim=4, epochs=2, seed=0))
        assert model.score(3, 5) == model.score(3, 5)
        assert np.all(np.isfinite(model.score_items(0)))

    def test_needs_an_active_user(self):
        with pytest.raises(ArgumentError):
            train_vaecf(TrainingSet(2, 2, [], [], []), HyperParams())


class TestContent:
    def test_vbpr_score_is_squared_norm(self):
        rng = np.random.default_rng(3)
        features = rng.normal(size=(4, 5))
        features /= np.linalg.norm(features, axis=1, keepdims=True)
        params = {"P": np.zeros((2, 3)), "Q": np.zeros((4, 3)), "W": np.vstack([features[2], features[0]])}
        seen = sparse.csr_matrix(([1.0], ([0], [1])), shape=(2, 4))
        model = ContentModel("vbpr", params, HyperParams(latent_dim=3), seen, np.zeros(4), [features])
        assert score(model, 0, 2) == pytest.approx(1.0, abs=1e-12)

    def test_vmf_with_frozen_zero_projection_is_biased_mf(self, planted_training, small_planted):
        hp = HyperParams(latent_dim=4, init_std=0.0, frozen=("H",), epochs=3, seed=0)
        model = train_content(planted_training, small_planted.item_features, "vmf", hp)
        np.testing.assert_array_equal(model.H, 0.0)
        assert np.any(model.b_item != 0.0)
        np.testing.assert_array_equal(model.score_items(0), model.mu[0] + model.b_user[0] + model.b_item)

    def test_bpr_loss_decreases(self, planted_training, small_planted):
        hp = HyperParams(latent_dim=8, learning_rate=0.5, epochs=5, batch_size=8, seed=1)
        model = train_content(planted_training, small_planted.item_features, "vbpr", hp)
        assert model.loss_trace[-1] < model.loss_trace[0]

    def test_amr_attention_sums_to_one(self, planted_training, small_planted):
        n_items = planted_training.n_items
        blocks = [small_planted.item_features, np.zeros((n_items, 3)), np.zeros((n_items, 2))]
        model = train_content(planted_training, blocks, "amr", HyperParams(latent_dim=4, epochs=2, seed=0))
        for item in range(n_items):
            attention = model.attention(item)
            assert attention.sum() == pytest.approx(1.0)
            assert attention[1] == attention[2]
        with pytest.raises(ArgumentError):
            model.attention(n_items)

    def test_missing_feature_row_names_the_item(self, planted_training, small_planted):
        item_ids = planted_training.item_ids
        aligned = AlignedFeatures(item_ids[1:], (FeatureBlock("visual", "cnn", small_planted.item_features[1:]),))
        with pytest.raises(PreconditionError) as info:
            train_content(planted_training, fuse_concat(aligned), "vbpr", HyperParams(epochs=1))
        assert info.value.item_id == item_ids[0]

    def test_non_finite_feature_row(self, planted_training, small_planted):
        features = small_planted.item_features.copy()
        features[4, 0] = np.nan
        with pytest.raises(PreconditionError) as info:
            train_content(planted_training, features, "vmf", HyperParams(epochs=1))
        assert info.value.item_id == planted_training.item_ids[4]

    def test_negatives_are_unseen(self, planted_training):
        sampler = NegativeSampler(planted_training.matrix)
        rng = np.random.default_rng(0)
        users = np.repeat(np.arange(planted_training.n_users), 20)
        negatives = sampler.sample(users, rng)
        assert not np.asarray(planted_training.matrix[users, negatives]).any()


class TestTopK:
    def test_sorted_and_truncated(self):
        assert recommend_topk(FixedScores([[0.1, 0.9, 0.5]]), 0, 2).items == (1, 2)

    def test_ties_by_index(self):
        assert recommend_topk(FixedScores([[0.3, 0.3, 0.3, 0.3]]), 0, 4).items == (0, 1, 2, 3)

    def test_exclusion(self):
        ranked = recommend_topk(FixedScores([[0.1, 0.9, 0.5]]), 0, 2, exclude={1})
        assert ranked.items == (2, 0)
        assert ranked.scores == (0.5, 0.1)

    def test_short_catalogue_remainder(self):
        seen = sparse.csr_matrix(([1.0, 1.0], ([0, 0], [0, 2])), shape=(1, 3))
        assert recommend_topk(FixedScores([[0.1, 0.9, 0.5]], seen), 0, 10).items == (1,)

    def test_invalid_arguments(self):
        model = FixedScores([[0.1, 0.9, 0.5]])
        with pytest.raises(ArgumentError):
            recommend_topk(model, 0, 0)
        with pytest.raises(ArgumentError):
            model.score(1, 0)
        with pytest.raises(ArgumentError):
            model.score(0, 3)

    def test_item_relabeling(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=(6, 15))
        perm = rng.permutation(15)
        original = recommend_all(FixedScores(scores), range(6), 5)
        relabeled = recommend_all(FixedScores(scores[:, perm]), range(6), 5)
        for user in range(6):
            assert tuple(int(perm[j]) for j in relabeled[user].items) == original[user].items

    def test_train_items_never_returned(self, planted_training):
        model = train_mf(planted_training, HyperParams(latent_dim=4, epochs=2, seed=0))
        for user, ranked in recommend_all(model, range(planted_training.n_users), 10).items():
            assert len(set(ranked.items)) == len(ranked.items)
            assert not set(ranked.items) & set(model.history(user).tolist())
            assert list(ranked.scores) == sorted(ranked.scores, reverse=True)


def _train_every_family(training, features):
    hp = HyperParams(latent_dim=4, hidden_dim=8, z_dim=4, epochs=2, seed=11)
    blocks = [features[:, :2], features[:, 2:]]
    return {
        "mf": train_model("mf", training, hp=hp),
        "vaecf": train_model("vaecf", training, hp=hp),
        "vbpr": train_model("vbpr", training, features, hp),
        "vmf": train_model("vmf", training, features, hp),
        "amr": train_model("amr", training, blocks, hp),
    }


class TestDeterminismAndCheckpoints:
    def test_same_seed_same_parameters(self, planted_training, small_planted):
        first = _train_every_family(planted_training, small_planted.item_features)
        second = _train_every_family(planted_training, small_planted.item_features)
        for family, model in first.items():
            assert model.params.keys() == second[family].params.keys()
            for name, value in model.params.items():
                np.testing.assert_array_equal(value, second[family].params[name], err_msg=f"{family}.{name}")

    def test_round_trip(self, planted_training, small_planted, tmp_path):
        for family, model in _train_every_family(planted_training, small_planted.item_features).items():
            path = tmp_path / f"{family}.npz"
            save_checkpoint(model, path)
            loaded = load_checkpoint(path)
            assert loaded.family == family
            assert loaded.hp == model.hp
            assert loaded.loss_trace == model.loss_trace
            for name, value in model.params.items():
                np.testing.assert_array_equal(loaded.params[name], value)
            for user in (0, 7):
                np.testing.assert_array_equal(loaded.score_items(user), model.score_items(user))


class TestRegistry:
    def test_dispatch_checks(self, planted_training):
        with pytest.raises(ArgumentError):
            train_model("bert4rec", planted_training)
        with pytest.raises(PreconditionError):
            train_model("vbpr", planted_training)
        assert needs_features("amr") and not needs_features("vaecf")

    def test_hyperparameter_validation(self):
        with pytest.raises(ArgumentError):
            HyperParams(latent_dim=0)
        with pytest.raises(ArgumentError):
            HyperParams(learning_rate=0.0)
        with pytest.raises(ArgumentError):
            HyperParams.from_dict({"latent_dim": 4, "dropout": 0.5})
        assert HyperParams().optimizer_for("vaecf") == "adam"
        assert HyperParams(optimizer="adam").optimizer_for("mf") == "adam"
