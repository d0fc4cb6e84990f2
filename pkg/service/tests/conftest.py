"""Shared fixture: one small trained checkpoint reused across test modules."""
import pytest

import scenecast as sc

TINY_GRID_SIZE = 9
TINY_WINDOW = 8
TINY_HORIZON = 3


def tiny_hyperparams(**overrides) -> sc.Hyperparams:
    base = dict(
        window_length=TINY_WINDOW,
        horizon=TINY_HORIZON,
        d_model=16,
        k_scene=4,
        heads=4,
        max_epochs=10,
        seed=1,
    )
    base.update(overrides)
    return sc.Hyperparams(**base)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Train a small model once and save it; fit quality is irrelevant here."""
    dataset = sc.make_dataset(
        grid=sc.default_grid(TINY_GRID_SIZE),
        length=120,
        window_length=TINY_WINDOW,
        horizon=TINY_HORIZON,
        seed=1,
    )
    hp = tiny_hyperparams()
    model, result = sc.train(dataset, hp)
    path = tmp_path_factory.mktemp("checkpoints") / "tiny.pt"
    sc.save_checkpoint(path, model, hp, dataset.grid, dataset.vocab,
                       val_mse=result.val_mse)
    return {
        "path": path,
        "model": model,
        "dataset": dataset,
        "hyperparams": hp,
        "result": result,
    }
