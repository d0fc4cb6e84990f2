"""Gate algebra: saturation limits, frozen identity table, output bounds."""
import pytest
import torch

import scenecast as sc
from scenecast.model import DEFAULT_SCENE


def embedding(seed=0, scenes=3, variates=5, k=4, d=8, **kw):
    torch.manual_seed(seed)
    return sc.GatedVariateEmbedding(scenes, variates, k, d, **kw)


def small_forecaster(seed=0, gated=True):
    torch.manual_seed(seed)
    return sc.CurveForecaster(
        variate_count=6,
        window_length=5,
        horizon=2,
        scene_count=3,
        k_scene=4,
        d_model=16,
        layers=1,
        heads=4,
        gated=gated,
    )


class TestSceneVocab:
    def test_build_prepends_default_and_dedupes(self):
        vocab = sc.SceneVocab.build(["alpha", "beta", "alpha"])
        assert vocab.scenes == (DEFAULT_SCENE, "alpha", "beta")
        assert len(vocab) == 3

    def test_unknown_ids_map_to_the_default_row(self):
        vocab = sc.SceneVocab.build(["alpha"])
        assert vocab.index("alpha") == 1
        assert vocab.index(DEFAULT_SCENE) == 0
        assert vocab.index("never-seen") == 0

    def test_default_must_come_first(self):
        with pytest.raises(sc.ValidationError):
            sc.SceneVocab(scenes=("alpha", DEFAULT_SCENE))
        with pytest.raises(sc.ValidationError):
            sc.SceneVocab(scenes=())

    def test_duplicates_rejected(self):
        with pytest.raises(sc.ValidationError):
            sc.SceneVocab(scenes=(DEFAULT_SCENE, "a", "a"))


class TestGateAlgebra:
    def test_saturated_gate_passes_gamma_scaled_identity(self):
        emb = embedding()
        with torch.no_grad():
            emb.gate.weight.zero_()
            # exp(-120) underflows float32, so the sigmoid is exactly 1.0
            emb.gate.bias.fill_(120.0)
        out = emb(torch.tensor([0, 1, 2]))
        expected = emb.gamma * emb.variate_embed[None, :, :].expand_as(out)
        assert torch.equal(out, expected)

    def test_closed_gate_blocks_everything(self):
        emb = embedding()
        with torch.no_grad():
            emb.gate.weight.zero_()
            # exp(120) overflows float32, so the sigmoid is exactly 0.0
            emb.gate.bias.fill_(-120.0)
        out = emb(torch.tensor([0, 1]))
        assert torch.equal(out, torch.zeros_like(out))

    def test_gate_activations_stay_strictly_inside_unit_interval(self):
        for seed in range(5):
            emb = embedding(seed=seed)
            acts = emb.gate_activations(torch.tensor([0, 1, 2]))
            assert acts.shape == (3, 5, 8)
            assert torch.all(acts > 0.0)
            assert torch.all(acts < 1.0)

    def test_output_bounded_by_gamma_times_identity(self):
        for seed in range(5):
            emb = embedding(seed=seed)
            out = emb(torch.tensor([1]))
            bound = emb.gamma * emb.variate_embed.abs()[None, :, :]
            assert torch.all(out.abs() <= bound)

    def test_ungated_forward_is_the_identity_table(self):
        emb = embedding(gated=False)
        out = emb(torch.tensor([0, 2]))
        assert torch.equal(out[0], emb.variate_embed)
        assert torch.equal(out[1], emb.variate_embed)

    def test_constructor_validation(self):
        with pytest.raises(sc.ValidationError):
            sc.GatedVariateEmbedding(0, 5, 4, 8)
        with pytest.raises(sc.ValidationError):
            sc.GatedVariateEmbedding(3, 0, 4, 8)
        with pytest.raises(sc.ValidationError):
            sc.GatedVariateEmbedding(3, 5, 0, 8)


class TestFrozenIdentityTable:
    def test_training_steps_never_touch_the_table(self):
        model = small_forecaster(seed=3)
        frozen = model.scene_gate.variate_embed.clone()
        opt = torch.optim.Adagrad(model.parameters(), lr=0.1)
        torch.manual_seed(0)
        win = torch.randn(8, 5, 6)
        idx = torch.randint(0, 3, (8,))
        target = torch.randn(8, 2, 6)
        for _ in range(5):
            opt.zero_grad()
            loss = torch.mean((model(win, idx) - target) ** 2)
            loss.backward()
            opt.step()
        assert torch.equal(model.scene_gate.variate_embed, frozen)

    def test_table_is_not_a_parameter(self):
        model = small_forecaster()
        names = {name for name, _ in model.named_parameters()}
        assert "scene_gate.variate_embed" not in names
        assert not model.scene_gate.variate_embed.requires_grad
        # but it still travels with the weights
        assert "scene_gate.variate_embed" in model.state_dict()


class TestCurveForecaster:
    def test_output_shape(self):
        model = small_forecaster().eval()
        torch.manual_seed(7)
        out = model(torch.randn(3, 5, 6), torch.tensor([0, 1, 2]))
        assert out.shape == (3, 2, 6)

    def test_eval_forward_is_deterministic(self):
        model = small_forecaster().eval()
        torch.manual_seed(9)
        win = torch.randn(2, 5, 6)
        idx = torch.tensor([0, 1])
        with torch.no_grad():
            first = model(win, idx)
            second = model(win, idx)
        assert torch.equal(first, second)

    def test_window_shape_validated(self):
        model = small_forecaster().eval()
        with pytest.raises(sc.ValidationError):
            model(torch.randn(1, 4, 6), torch.tensor([0]))
        with pytest.raises(sc.ValidationError):
            model(torch.randn(1, 5, 7), torch.tensor([0]))

    def test_heads_must_divide_d_model(self):
        with pytest.raises(sc.ValidationError):
            sc.CurveForecaster(
                variate_count=3, window_length=4, horizon=2,
                scene_count=1, d_model=10, heads=4,
            )


class TestGatedEmbedLookup:
    def test_lookup_matches_the_forward_slice(self):
        model = small_forecaster(seed=4)
        vocab = sc.SceneVocab.build(["alpha", "beta"])
        vec = sc.gated_embed(model, vocab, "beta", 2)
        with torch.no_grad():
            full = model.scene_gate(torch.tensor([vocab.index("beta")]))
        assert vec.shape == (16,)
        assert torch.equal(vec, full[0, 2])

    def test_unknown_scene_equals_default_scene(self):
        model = small_forecaster(seed=5)
        vocab = sc.SceneVocab.build(["alpha"])
        mystery = sc.gated_embed(model, vocab, "mystery", 1)
        default = sc.gated_embed(model, vocab, DEFAULT_SCENE, 1)
        assert torch.equal(mystery, default)

    def test_variate_range_validated(self):
        model = small_forecaster()
        vocab = sc.SceneVocab.build(["alpha"])
        with pytest.raises(sc.ValidationError):
            sc.gated_embed(model, vocab, "alpha", 6)
        with pytest.raises(sc.ValidationError):
            sc.gated_embed(model, vocab, "alpha", -1)
