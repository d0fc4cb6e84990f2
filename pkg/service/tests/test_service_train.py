"""Training behavior: convergence, seeded determinism, checkpoint format."""
import numpy as np
import pytest
import torch

import scenecast as sc


def tiny_hyperparams(**overrides) -> sc.Hyperparams:
    base = dict(window_length=8, horizon=3, d_model=16, k_scene=4, heads=4,
                max_epochs=10, seed=1)
    base.update(overrides)
    return sc.Hyperparams(**base)


def constant_dataset(value=2.5, length=50, window=8, horizon=3, width=9):
    """Every row is the same constant vector; split at t=38."""
    rows = np.full((length, width), value, dtype=np.float64)
    vocab = sc.SceneVocab.build(["alpha"])
    split = 38

    def pack(starts):
        scenes = np.full(len(starts), vocab.index("alpha"), dtype=np.int64)
        wins = np.stack([rows[s:s + window] for s in starts]).astype(np.float32)
        futs = np.stack(
            [rows[s + window:s + window + horizon] for s in starts]
        ).astype(np.float32)
        return scenes, wins, futs

    train_starts = range(0, split - window - horizon + 1)
    val_starts = range(split, length - window - horizon + 1)
    tr = pack(list(train_starts))
    va = pack(list(val_starts))
    return sc.WindowDataset(
        vocab=vocab, grid=sc.default_grid(width), window_length=window,
        horizon=horizon,
        train_scenes=tr[0], train_windows=tr[1], train_futures=tr[2],
        val_scenes=va[0], val_windows=va[1], val_futures=va[2],
    )


class TestTraining:
    def test_constant_series_drives_val_mse_toward_zero(self):
        dataset = constant_dataset()
        hp = tiny_hyperparams(seed=0, max_epochs=50)
        _, result = sc.train(dataset, hp)
        assert result.val_mse < 1e-3
        assert result.epochs_run <= 50

    def test_same_seed_retrains_identically(self, tiny_checkpoint):
        model, result = sc.train(
            tiny_checkpoint["dataset"], tiny_checkpoint["hyperparams"]
        )
        first = tiny_checkpoint["result"]
        assert result.val_mse == first.val_mse
        assert result.val_history == first.val_history
        state = tiny_checkpoint["model"].state_dict()
        for name, tensor in model.state_dict().items():
            assert torch.equal(tensor, state[name]), name

    def test_empty_dataset_rejected(self):
        width = 9
        empty = sc.WindowDataset(
            vocab=sc.SceneVocab.build([]), grid=sc.default_grid(width),
            window_length=8, horizon=3,
            train_scenes=np.zeros(0, dtype=np.int64),
            train_windows=np.zeros((0, 8, width), dtype=np.float32),
            train_futures=np.zeros((0, 3, width), dtype=np.float32),
            val_scenes=np.zeros(0, dtype=np.int64),
            val_windows=np.zeros((0, 8, width), dtype=np.float32),
            val_futures=np.zeros((0, 3, width), dtype=np.float32),
        )
        with pytest.raises(sc.EmptyDataset):
            sc.train(empty, tiny_hyperparams())

    def test_hyperparams_must_match_dataset_shape(self):
        dataset = constant_dataset()
        with pytest.raises(sc.ValidationError):
            sc.train(dataset, tiny_hyperparams(window_length=7))
        with pytest.raises(sc.ValidationError):
            sc.train(dataset, tiny_hyperparams(horizon=4))

    def test_hyperparams_validation(self):
        with pytest.raises(sc.ValidationError):
            sc.Hyperparams(batch_size=0)
        with pytest.raises(sc.ValidationError):
            sc.Hyperparams(patience=0)
        with pytest.raises(sc.ValidationError):
            sc.Hyperparams(learning_rate=0.0)
        with pytest.raises(sc.ValidationError):
            sc.Hyperparams(max_epochs=0)


class TestCheckpoints:
    def test_round_trip_preserves_predictions_bitwise(self, tiny_checkpoint):
        model, manifest = sc.load_checkpoint(tiny_checkpoint["path"])
        dataset = tiny_checkpoint["dataset"]
        win = torch.from_numpy(dataset.val_windows[:4])
        idx = torch.from_numpy(dataset.val_scenes[:4])
        with torch.no_grad():
            reloaded = model(win, idx)
            original = tiny_checkpoint["model"](win, idx)
        assert torch.equal(reloaded, original)

    def test_manifest_contents(self, tiny_checkpoint):
        _, manifest = sc.load_checkpoint(tiny_checkpoint["path"])
        assert manifest["hyperparams"] == tiny_checkpoint["hyperparams"]
        assert manifest["grid"] == tuple(tiny_checkpoint["dataset"].grid)
        assert manifest["vocab"] == tiny_checkpoint["dataset"].vocab
        assert manifest["val_mse"] == tiny_checkpoint["result"].val_mse

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(sc.CheckpointError):
            sc.load_checkpoint(tmp_path / "nope.pt")

    def test_unsupported_format_version_raises(self, tmp_path, tiny_checkpoint):
        blob = torch.load(tiny_checkpoint["path"], map_location="cpu",
                          weights_only=False)
        blob["format_version"] = 99
        path = tmp_path / "future.pt"
        torch.save(blob, path)
        with pytest.raises(sc.CheckpointError):
            sc.load_checkpoint(path)

    def test_non_checkpoint_blob_raises(self, tmp_path):
        path = tmp_path / "junk.pt"
        torch.save([1, 2, 3], path)
        with pytest.raises(sc.CheckpointError):
            sc.load_checkpoint(path)


class TestDatasetConstruction:
    def test_time_split_counts_are_exact(self):
        # split at round(60 * 0.75) = 45: train starts 0..35, val 45..50
        dataset = sc.make_dataset(
            grid=sc.default_grid(5), length=60, window_length=8, horizon=2,
            val_fraction=0.25, seed=3,
        )
        scenes = len(dataset.vocab.scenes) - 1  # default row holds no data
        assert scenes == 2
        assert dataset.train_count == 36 * scenes
        assert dataset.val_count == 6 * scenes

    def test_arguments_validated(self):
        with pytest.raises(sc.ValidationError):
            sc.make_dataset(length=10, window_length=8, horizon=3)
        with pytest.raises(sc.ValidationError):
            sc.make_dataset(val_fraction=0.0)
        with pytest.raises(sc.ValidationError):
            sc.make_dataset(scene_scales={})

    def test_synthetic_rows_deterministic(self):
        grid = sc.default_grid(7)
        a = sc.synthetic_rows(grid, length=30, scale=2.0, seed=11)
        b = sc.synthetic_rows(grid, length=30, scale=2.0, seed=11)
        c = sc.synthetic_rows(grid, length=30, scale=2.0, seed=12)
        assert a.shape == (30, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.all(a > 0.0)
