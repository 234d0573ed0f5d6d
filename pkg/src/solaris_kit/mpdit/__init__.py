"""Multiplayer video transformer: model, rolling KV cache, rotary encoding."""

from .cache import KvCache
from .model import (
    ModelConfig,
    MultiplayerDiT,
    add_player_embeddings,
    condition_on_first_frame,
    embed_actions,
)
from .rope import apply_player_rope, rope_tables, rotate_array, rotate_tensor, split_pairs

__all__ = [
    "KvCache",
    "ModelConfig",
    "MultiplayerDiT",
    "add_player_embeddings",
    "apply_player_rope",
    "condition_on_first_frame",
    "embed_actions",
    "rope_tables",
    "rotate_array",
    "rotate_tensor",
    "split_pairs",
]
