"""Scene-gated variate embeddings and the toy curve forecaster.

The forecaster tokenizes a window of curve rows by variate (one token per
grid column): each variate's history is linearly embedded, a scene-gated
identity embedding is added, a small transformer encoder mixes the tokens
across variates, and a linear head maps each token back to that variate's
next `horizon` values.

The gate is the part worth reading. Every variate owns a frozen identity
embedding e_v, stored as a buffer so it provably never receives a gradient
update. A scene embedding e_s picks how much of that identity passes
through:

    h_v = gamma * sigmoid(W [e_s ; e_v] + b) * e_v

Sigmoid activations stay in (0, 1), so |h_v| <= gamma * |e_v| holds
elementwise. The ungated ablation replaces h_v with e_v and changes nothing
else.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ValidationError

DEFAULT_GAMMA = 1.5
DEFAULT_SCENE = "default"


@dataclass(frozen=True)
class SceneVocab:
    """Ordered scene ids; row 0 is the fallback for unknown ids."""

    scenes: tuple[str, ...]

    def __post_init__(self):
        if not self.scenes or self.scenes[0] != DEFAULT_SCENE:
            raise ValidationError(f"scenes must start with {DEFAULT_SCENE!r}")
        if len(set(self.scenes)) != len(self.scenes):
            raise ValidationError("scene ids must be unique")

    @staticmethod
    def build(ids) -> "SceneVocab":
        ordered = [DEFAULT_SCENE]
        for sid in ids:
            sid = str(sid)
            if sid not in ordered:
                ordered.append(sid)
        return SceneVocab(scenes=tuple(ordered))

    def index(self, scene_id: str) -> int:
        try:
            return self.scenes.index(str(scene_id))
        except ValueError:
            return 0

    def __len__(self) -> int:
        return len(self.scenes)


class GatedVariateEmbedding(nn.Module):
    """Frozen per-variate identity embeddings behind a scene-driven gate."""

    def __init__(
        self,
        scene_count: int,
        variate_count: int,
        k_scene: int,
        d_model: int,
        gamma: float = DEFAULT_GAMMA,
        gated: bool = True,
    ):
        super().__init__()
        if scene_count < 1 or variate_count < 1:
            raise ValidationError("scene_count and variate_count must be >= 1")
        if k_scene < 1 or d_model < 1:
            raise ValidationError("k_scene and d_model must be >= 1")
        self.gamma = float(gamma)
        self.gated = bool(gated)
        self.scene_embed = nn.Embedding(scene_count, k_scene)
        # frozen identity table: a buffer is outside every optimizer's reach
        self.register_buffer(
            "variate_embed", torch.randn(variate_count, d_model) * d_model**-0.5
        )
        self.gate = nn.Linear(k_scene + d_model, d_model)

    def gate_activations(self, scene_index: torch.Tensor) -> torch.Tensor:
        """Sigmoid gate values, shape [batch, variates, d_model]."""
        e_s = self.scene_embed(scene_index)  # [B, k]
        b = e_s.shape[0]
        v, d = self.variate_embed.shape
        e_s = e_s[:, None, :].expand(b, v, e_s.shape[-1])
        e_v = self.variate_embed[None, :, :].expand(b, v, d)
        return torch.sigmoid(self.gate(torch.cat([e_s, e_v], dim=-1)))

    def forward(self, scene_index: torch.Tensor) -> torch.Tensor:
        """Per-variate embeddings for each scene, shape [batch, variates, d]."""
        b = scene_index.shape[0]
        v, d = self.variate_embed.shape
        e_v = self.variate_embed[None, :, :].expand(b, v, d)
        if not self.gated:
            return e_v
        return self.gamma * self.gate_activations(scene_index) * e_v


class CurveForecaster(nn.Module):
    """Variate-token transformer over a window of curve rows."""

    def __init__(
        self,
        variate_count: int,
        window_length: int,
        horizon: int,
        scene_count: int,
        k_scene: int = 8,
        d_model: int = 64,
        layers: int = 2,
        heads: int = 4,
        gamma: float = DEFAULT_GAMMA,
        gated: bool = True,
    ):
        super().__init__()
        if window_length < 1 or horizon < 1:
            raise ValidationError("window_length and horizon must be >= 1")
        if d_model % heads != 0:
            raise ValidationError(
                f"d_model {d_model} must be divisible by heads {heads}"
            )
        self.variate_count = variate_count
        self.window_length = window_length
        self.horizon = horizon
        self.series_embed = nn.Linear(window_length, d_model)
        self.scene_gate = GatedVariateEmbedding(
            scene_count, variate_count, k_scene, d_model, gamma, gated
        )
        layer = nn.TransformerEncoderLayer(
            d_model=d_model,
            nhead=heads,
            dim_feedforward=d_model,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=layers, enable_nested_tensor=False
        )
        self.head = nn.Linear(d_model, horizon)

    def forward(
        self, window: torch.Tensor, scene_index: torch.Tensor
    ) -> torch.Tensor:
        """window [B, L, V], scene_index [B] -> predictions [B, H, V]."""
        if window.shape[1] != self.window_length:
            raise ValidationError(
                f"window has {window.shape[1]} rows, model expects "
                f"{self.window_length}"
            )
        if window.shape[2] != self.variate_count:
            raise ValidationError(
                f"window has {window.shape[2]} variates, model expects "
                f"{self.variate_count}"
            )
        tokens = self.series_embed(window.transpose(1, 2))  # [B, V, d]
        tokens = tokens + self.scene_gate(scene_index)
        encoded = self.encoder(tokens)
        return self.head(encoded).transpose(1, 2)  # [B, H, V]


def gated_embed(
    model: CurveForecaster, vocab: SceneVocab, scene_id: str, variate_index: int
) -> torch.Tensor:
    """The h_v vector one scene induces for one variate (no grad)."""
    if not 0 <= variate_index < model.variate_count:
        raise ValidationError(
            f"variate_index {variate_index} out of range "
            f"[0, {model.variate_count})"
        )
    idx = torch.tensor([vocab.index(scene_id)], dtype=torch.long)
    with torch.no_grad():
        return model.scene_gate(idx)[0, variate_index].clone()
