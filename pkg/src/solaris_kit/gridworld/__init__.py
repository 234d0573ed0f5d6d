"""Two-agent gridworld engine, episode library, and dataset tooling."""

from .world import (
    ACTION_DIM,
    ACTION_KEYS,
    AIR,
    GROUND,
    HARDNESS,
    N_TILES,
    OBS_C,
    OBS_H,
    OBS_W,
    ORE,
    PASSABLE,
    PLANK,
    STONE,
    TORCH,
    Agent,
    World,
    action_features,
    blank_action,
    render_obs,
    step,
    validate_action,
    visible,
    world_gen,
)
from .episodes import (
    EPISODE_TYPES,
    PLAN_LENGTH,
    WATCHDOG_K,
    EpisodeLog,
    replay_episode,
    run_episode,
    setup_episode,
    spawn_pair,
)
from .io import load_episode, load_manifest, read_blob, save_episode, write_blob, write_manifest
from .collect import action_stats, collect, default_type_weights, filter_episodes

__all__ = [
    "ACTION_DIM", "ACTION_KEYS", "AIR", "GROUND", "HARDNESS", "N_TILES",
    "OBS_C", "OBS_H", "OBS_W", "ORE", "PASSABLE", "PLANK", "STONE", "TORCH",
    "Agent", "World", "action_features", "blank_action", "render_obs", "step",
    "validate_action", "visible", "world_gen",
    "EPISODE_TYPES", "PLAN_LENGTH", "WATCHDOG_K", "EpisodeLog",
    "replay_episode", "run_episode", "setup_episode", "spawn_pair",
    "load_episode", "load_manifest", "read_blob", "save_episode",
    "write_blob", "write_manifest",
    "action_stats", "collect", "default_type_weights", "filter_episodes",
]
