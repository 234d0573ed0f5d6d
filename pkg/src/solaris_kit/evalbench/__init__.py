"""Five-task benchmark: scripted scenarios, a programmatic judge, FFD."""

from .judge import (
    ENTITY_ID,
    SCENERY_THRESHOLD,
    STRUCTURE_SIZES,
    JudgeVerdict,
    decode_window,
    judge,
    judge_episode,
    query_observation,
)
from .scenarios import (
    TASKS,
    VARIANTS,
    EvalEpisode,
    Query,
    build_eval_world,
    gen_eval_episode,
)
from .ffd import ffd, frame_features, gaussian_frechet
from .bench import generate_episode, realize_episode, run_benchmark

__all__ = [
    "ENTITY_ID",
    "SCENERY_THRESHOLD",
    "STRUCTURE_SIZES",
    "JudgeVerdict",
    "decode_window",
    "judge",
    "judge_episode",
    "query_observation",
    "TASKS",
    "VARIANTS",
    "EvalEpisode",
    "Query",
    "build_eval_world",
    "gen_eval_episode",
    "ffd",
    "frame_features",
    "gaussian_frechet",
    "generate_episode",
    "realize_episode",
    "run_benchmark",
]
