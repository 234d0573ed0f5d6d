"""Programmatic ground-truth judge over decoded observation windows.

Answers the benchmark's closed-set queries straight from observations,
with no learned component. Generated frames are snapped to the nearest
channel per cell first, so the same predicates score exact engine output
and noisy model output alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gridworld.world import (
    N_TILES,
    OBS_C,
    OBS_H,
    OBS_W,
    ORE,
    PLANK,
    STONE,
)

ENTITY_ID = N_TILES  # decoded id for "the other player is here"
BLOCK_IDS = (STONE, ORE, PLANK)

STRUCTURE_RANGE = 6  # cells ahead that still count as "in front of the player"
STRUCTURE_SIZES = {"square": 4, "strip": 3}
SCENERY_THRESHOLD = 0.7  # decoded-tile agreement ratio for "same scenery"


def decode_window(obs: np.ndarray) -> np.ndarray:
    """Snap one observation to integer ids: tiles 0..5, entity 6.

    Per-cell argmax over the tile and entity channels; the HUD channel
    never participates. Exact one-hot frames decode losslessly.
    """
    obs = np.asarray(obs)
    if obs.shape != (OBS_H, OBS_W, OBS_C):
        raise ValueError(
            f"expected ({OBS_H}, {OBS_W}, {OBS_C}) observation, got {obs.shape}"
        )
    return np.argmax(obs[:, :, : N_TILES + 1], axis=-1).astype(np.int64)


def _entity_cell(ids: np.ndarray):
    hits = np.argwhere(ids == ENTITY_ID)
    if len(hits) == 0:
        return None
    # garbage frames can decode to several entity cells; break ties toward
    # the nearest, most central one so the answer stays deterministic
    hits = sorted(map(tuple, hits), key=lambda rc: (-rc[0], abs(rc[1] - OBS_W // 2)))
    return hits[0]


def answer_visibility(obs) -> str:
    return "yes" if bool((decode_window(obs) == ENTITY_ID).any()) else "no"


def answer_position(obs) -> str:
    """Column third of the entity cell: left / center / right / no player."""
    cell = _entity_cell(decode_window(obs))
    if cell is None:
        return "no player"
    col = cell[1]
    if col < OBS_W // 3:
        return "left"
    if col >= OBS_W - OBS_W // 3:
        return "right"
    return "center"


def answer_motion(obs_pair) -> str:
    """Dominant-axis motion of the entity cell between two frames.

    Rows grow toward the viewer, so a positive row delta reads "closer";
    the lateral axis maps to on-screen left/right. Missing entities and
    unmoved cells read "no motion".
    """
    first, last = obs_pair
    a = _entity_cell(decode_window(first))
    b = _entity_cell(decode_window(last))
    if a is None or b is None or a == b:
        return "no motion"
    drow = b[0] - a[0]
    dcol = b[1] - a[1]
    if abs(drow) >= abs(dcol):
        return "closer" if drow > 0 else "farther"
    return "right" if dcol > 0 else "left"


def _largest_component(mask: np.ndarray) -> int:
    # 4-connected flood fill; the window is 9x9 so plain BFS is plenty
    best = 0
    seen = np.zeros_like(mask, dtype=bool)
    for r, c in np.argwhere(mask):
        if seen[r, c]:
            continue
        seen[r, c] = True
        size = 0
        stack = [(int(r), int(c))]
        while stack:
            rr, cc = stack.pop()
            size += 1
            for nr, nc in ((rr - 1, cc), (rr + 1, cc), (rr, cc - 1), (rr, cc + 1)):
                if (
                    0 <= nr < mask.shape[0]
                    and 0 <= nc < mask.shape[1]
                    and mask[nr, nc]
                    and not seen[nr, nc]
                ):
                    seen[nr, nc] = True
                    stack.append((nr, nc))
        best = max(best, size)
    return best


def answer_structure(obs, min_size: int) -> str:
    """Is a built shape of at least `min_size` connected blocks in view?"""
    ids = decode_window(obs)
    near = np.zeros_like(ids, dtype=bool)
    near[OBS_H - 1 - STRUCTURE_RANGE : OBS_H - 1, :] = True
    blocks = near & np.isin(ids, BLOCK_IDS)
    return "yes" if _largest_component(blocks) >= min_size else "no"


def answer_same_scenery(obs_pair) -> str:
    a, b = (decode_window(o) for o in obs_pair)
    return "yes" if float(np.mean(a == b)) >= SCENERY_THRESHOLD else "no"


def judge(observation, query_kind: str) -> str:
    """Answer one closed-set query about an observation.

    Pair queries ("motion", "same_scenery") take a 2-tuple of frames; the
    rest take a single (9, 9, 8) array. "structure:<variant>" carries its
    component-size threshold in the kind string.
    """
    if query_kind == "visibility":
        return answer_visibility(observation)
    if query_kind == "position":
        return answer_position(observation)
    if query_kind == "motion":
        return answer_motion(observation)
    if query_kind == "same_scenery":
        return answer_same_scenery(observation)
    if query_kind.startswith("structure:"):
        variant = query_kind.split(":", 1)[1]
        if variant not in STRUCTURE_SIZES:
            raise ValueError(f"unknown structure variant {variant!r}")
        return answer_structure(observation, STRUCTURE_SIZES[variant])
    raise ValueError(f"unknown query kind {query_kind!r}")


@dataclass
class JudgeVerdict:
    """All per-query answers for one episode, plus the strict conjunction."""

    answers: list
    expected: list
    correct: list

    @property
    def episode_accurate(self) -> bool:
        return all(self.correct)


def query_observation(frames: np.ndarray, query):
    """Pick the frame (or frame pair) a query looks at.

    frames: (P, T+1, H, W, C); queries with perspective "both" compare the
    two players at one tick, motion queries compare two ticks of one player.
    """
    if query.kind == "motion":
        t0, t1 = query.ticks
        return (frames[query.perspective][t0], frames[query.perspective][t1])
    if query.kind == "same_scenery":
        t = query.ticks[0]
        return (frames[0][t], frames[1][t])
    return frames[query.perspective][query.ticks[0]]


def judge_episode(frames: np.ndarray, episode) -> JudgeVerdict:
    """Run every query of an episode's schedule against rendered frames."""
    answers = [judge(query_observation(frames, q), q.kind) for q in episode.queries]
    correct = [a == q.expected for a, q in zip(answers, episode.queries)]
    return JudgeVerdict(
        answers=answers,
        expected=[q.expected for q in episode.queries],
        correct=correct,
    )
