"""Synthetic multi-scene curve series and time-ordered window datasets.

Each scene is a seasonal level series times a decaying exponential in the
grid price, so every generated row is positive, non-increasing, and convex
like the curves the engine produces. Scenes differ by a scale factor, which
is exactly the regime the scene gate is supposed to absorb.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import SceneVocab

DEFAULT_GRID_SIZE = 33
DEFAULT_SCENE_SCALES = {"alpha": 1.0, "beta": 3.0}


def default_grid(size: int = DEFAULT_GRID_SIZE) -> tuple[float, ...]:
    """Evenly spaced prices in [0, 2], the span the engine grids usually use."""
    if size < 2:
        raise ValidationError(f"grid size must be >= 2, got {size}")
    return tuple(float(v) for v in np.linspace(0.0, 2.0, size))


def synthetic_rows(
    grid,
    length: int,
    scale: float,
    seed: int,
    noise: float = 0.05,
    period: int = 24,
) -> np.ndarray:
    """One scene's series: rows[t, k] = scale * level(t) * exp(-decay(t) * grid[k])."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    level = 2.0 + np.sin(2.0 * np.pi * t / period)
    level = level + rng.normal(0.0, noise, size=length)
    level = np.maximum(level, 0.1)
    decay = 1.0 + 0.5 * np.sin(2.0 * np.pi * t / (period * 3))
    grid = np.asarray(grid, dtype=float)
    rows = scale * level[:, None] * np.exp(-decay[:, None] * grid[None, :])
    return rows.astype(np.float64)


@dataclass(frozen=True)
class WindowDataset:
    """Time-split (scene, window, future) triples, ready for training.

    Arrays are float32; scene ids are already vocab indices. No sample's
    window or future crosses the train/validation time boundary.
    """

    vocab: SceneVocab
    grid: tuple[float, ...]
    window_length: int
    horizon: int
    train_scenes: np.ndarray
    train_windows: np.ndarray
    train_futures: np.ndarray
    val_scenes: np.ndarray
    val_windows: np.ndarray
    val_futures: np.ndarray

    @property
    def train_count(self) -> int:
        return int(self.train_windows.shape[0])

    @property
    def val_count(self) -> int:
        return int(self.val_windows.shape[0])


def make_dataset(
    grid=None,
    scene_scales=None,
    length: int = 240,
    window_length: int = 16,
    horizon: int = 4,
    val_fraction: float = 0.25,
    seed: int = 0,
    noise: float = 0.05,
) -> WindowDataset:
    """Build the two-scene (by default) synthetic dataset with a time split.

    Training windows end at or before the split time; validation windows
    start at or after it. Windows that straddle the boundary are dropped, so
    nothing is shuffled across the split.
    """
    grid = tuple(float(g) for g in (grid if grid is not None else default_grid()))
    scales = dict(scene_scales if scene_scales is not None else DEFAULT_SCENE_SCALES)
    if not scales:
        raise ValidationError("need at least one scene")
    if not 0.0 < val_fraction < 1.0:
        raise ValidationError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if length < window_length + horizon:
        raise ValidationError(
            f"length {length} too short for window {window_length} + "
            f"horizon {horizon}"
        )
    vocab = SceneVocab.build(sorted(scales))
    split_time = int(round(length * (1.0 - val_fraction)))

    train, val = [], []
    for order, scene_id in enumerate(sorted(scales)):
        rows = synthetic_rows(grid, length, float(scales[scene_id]),
                              seed=seed * 1013 + order, noise=noise)
        idx = vocab.index(scene_id)
        for start in range(0, length - window_length - horizon + 1):
            end = start + window_length + horizon
            window = rows[start:start + window_length]
            future = rows[start + window_length:end]
            if end <= split_time:
                train.append((idx, window, future))
            elif start >= split_time:
                val.append((idx, window, future))

    def pack(samples):
        if not samples:
            v = len(grid)
            return (np.zeros(0, dtype=np.int64),
                    np.zeros((0, window_length, v), dtype=np.float32),
                    np.zeros((0, horizon, v), dtype=np.float32))
        scenes = np.array([s for s, _, _ in samples], dtype=np.int64)
        windows = np.stack([w for _, w, _ in samples]).astype(np.float32)
        futures = np.stack([f for _, _, f in samples]).astype(np.float32)
        return scenes, windows, futures

    tr = pack(train)
    va = pack(val)
    return WindowDataset(
        vocab=vocab, grid=grid, window_length=window_length, horizon=horizon,
        train_scenes=tr[0], train_windows=tr[1], train_futures=tr[2],
        val_scenes=va[0], val_windows=va[1], val_futures=va[2],
    )
