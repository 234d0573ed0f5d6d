"""Held-out evaluation scenarios with analytically known answers.

Each generator scripts both players in a fresh flat world and writes the
query schedule down next to the actions. Expected answers come from the
construction geometry itself, never from running the judge on the result,
so judge soundness stays a real check rather than a tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..substrate import Rng
from ..gridworld.world import (
    Agent,
    EAST,
    NORTH,
    PLANK,
    SOUTH,
    STONE,
    WEST,
    World,
    blank_action,
    world_gen,
)

TASKS = ("movement", "grounding", "memory", "building", "consistency")
VARIANTS = {
    "movement": ("translation", "rotation"),
    "grounding": ("turn_away",),
    "memory": ("both_turn_away",),
    "building": ("square", "strip"),
    "consistency": ("same_side", "opposite_sides"),
}

ANSWER_SETS = {
    "motion": ("closer", "farther", "left", "right", "no motion"),
    "position": ("left", "right", "center", "no player"),
    "visibility": ("yes", "no"),
    "structure:square": ("yes", "no"),
    "structure:strip": ("yes", "no"),
    "same_scenery": ("yes", "no"),
}

_YAW = {NORTH: 0.0, EAST: 90.0, SOUTH: 180.0, WEST: 270.0}


@dataclass(frozen=True)
class Query:
    """One judged question: which frames, whose perspective, what answer."""

    kind: str
    perspective: int | str  # player index, or "both"
    ticks: tuple
    expected: str


@dataclass
class EvalEpisode:
    task: str
    variant: str
    seed: int
    actions: list  # [player][tick] action records
    queries: list

    @property
    def length(self) -> int:
        return len(self.actions[0])

    def validate(self) -> None:
        lengths = {len(a) for a in self.actions}
        if len(lengths) != 1:
            raise ValueError("players must share one script length")
        for q in self.queries:
            if max(q.ticks) > self.length:
                raise ValueError(f"query tick {max(q.ticks)} beyond episode end")
            if q.expected not in ANSWER_SETS[q.kind]:
                raise ValueError(f"{q.expected!r} not a valid {q.kind} answer")


def _blanks(n: int) -> list:
    return [blank_action() for _ in range(n)]


def _turn(deg: float) -> dict:
    a = blank_action()
    a["camera"] = (float(deg), 0.0)
    return a


def _press(key: str) -> dict:
    a = blank_action()
    a[key] = 1
    return a


def _hotbar(slot: int) -> dict:
    a = blank_action()
    a[f"hotbar.{slot}"] = 1
    return a


def _turn_to(cur_heading: int, new_heading: int) -> dict:
    delta = (_YAW[new_heading] - _YAW[cur_heading] + 180.0) % 360.0 - 180.0
    return _turn(delta if delta != -180.0 else 180.0)


def _stage(rng: Rng, gap: int) -> tuple:
    """Flat world with player 0 at center-ish looking south at player 1."""
    world = world_gen("flat", int(rng.spawn("world").integers(0, 2**31 - 1)))
    row = 28 + int(rng.spawn("row").integers(0, 5))
    col = 28 + int(rng.spawn("col").integers(0, 5))
    world.agents = [
        Agent(row=row, col=col, yaw=_YAW[SOUTH]),
        Agent(row=row + gap, col=col, yaw=_YAW[NORTH]),
    ]
    return world, row, col


def _gen_movement_translation(rng: Rng):
    direction = ("closer", "farther", "left", "right")[int(rng.spawn("dir").integers(0, 4))]
    gap = {"closer": 6, "farther": 3}.get(direction, 4)
    world, _, _ = _stage(rng, gap)
    # on-screen chirality flips once per perspective, so a strafe to the
    # actor's own right reads "left" on both players' screens
    walk = {"closer": "forward", "farther": "back", "left": "right", "right": "left"}
    actor = _blanks(2) + [_press(walk[direction]) for _ in range(3)] + _blanks(2)
    actions = [actor, _blanks(len(actor))]
    end = len(actor)
    queries = [
        Query("motion", 0, (0, end), direction),
        Query("motion", 1, (0, end), direction),
    ]
    return world, actions, queries


def _gen_movement_rotation(rng: Rng):
    outcome = ("left", "right", "center")[int(rng.spawn("dir").integers(0, 3))]
    world, _, _ = _stage(rng, 3)
    if outcome == "left":
        actor = _blanks(2) + [_turn_to(SOUTH, WEST)] + _blanks(5)
    elif outcome == "right":
        actor = _blanks(2) + [_turn_to(SOUTH, EAST)] + _blanks(5)
    else:
        actor = _blanks(2) + [_turn_to(SOUTH, EAST)] + _blanks(3) + [_turn_to(EAST, SOUTH)] + _blanks(1)
    actions = [actor, _blanks(len(actor))]
    queries = [Query("position", 0, (len(actor),), outcome)]
    return world, actions, queries


def _gen_grounding(rng: Rng):
    world, _, _ = _stage(rng, 3)
    actor = _blanks(2) + [_turn(180.0)] + _blanks(6) + [_turn(180.0)] + _blanks(4)
    actions = [actor, _blanks(len(actor))]
    queries = [
        Query("visibility", 0, (6,), "no"),
        Query("visibility", 0, (len(actor),), "yes"),
    ]
    return world, actions, queries


def _gen_memory(rng: Rng):
    world, _, _ = _stage(rng, 3)

    def script() -> list:
        return _blanks(2) + [_turn(180.0)] + _blanks(6) + [_turn(180.0)] + _blanks(4)

    # both players share the same turn timing but own separate records
    actions = [script(), script()]
    end = len(actions[0])
    queries = [
        Query("visibility", 0, (6,), "no"),
        Query("visibility", 1, (6,), "no"),
        Query("visibility", 0, (end,), "yes"),
        Query("visibility", 1, (end,), "yes"),
    ]
    return world, actions, queries


def _gen_building(rng: Rng, variant: str):
    world, row, col = _stage(rng, 6)
    # player 0 builds between itself and the observing player 1; every
    # placed cell sits 5-6 cells ahead of the observer, inside judge range
    if variant == "square":
        actor = [
            _hotbar(1),
            _press("place_block"),
            _press("left"),
            _press("place_block"),
            _press("back"),
            _press("place_block"),
            _press("right"),
            _press("place_block"),
        ] + _blanks(2)
    else:  # strip
        world.agents[0].col = col - 1
        actor = [
            _hotbar(1),
            _press("place_block"),
            _press("left"),
            _press("place_block"),
            _press("left"),
            _press("place_block"),
        ] + _blanks(2)
    actions = [actor, _blanks(len(actor))]
    queries = [Query(f"structure:{variant}", 1, (len(actor),), "yes")]
    return world, actions, queries


def _paint_stripes(world: World, col: int) -> None:
    """Distinct scenery on each side of the players' shared column.

    Stripes run parallel to the corridor, so two views toward the same
    side decode identically regardless of where along the corridor each
    player stands; views toward opposite sides disagree on every stripe.
    """
    for k in range(1, 10):
        if k % 2 == 1:
            world.grid[:, col + k] = STONE
            world.grid[:, col - k] = PLANK


def _gen_consistency(rng: Rng, variant: str):
    world, row, col = _stage(rng, 4)
    _paint_stripes(world, col)
    side = (EAST, WEST)[int(rng.spawn("side").integers(0, 2))]
    other = WEST if side == EAST else EAST
    if variant == "same_side":
        turns = (side, side)
        expected = "yes"
    else:
        turns = (side, other)
        expected = "no"
    a0 = _blanks(2) + [_turn_to(SOUTH, turns[0])] + _blanks(3)
    a1 = _blanks(2) + [_turn_to(NORTH, turns[1])] + _blanks(3)
    actions = [a0, a1]
    queries = [Query("same_scenery", "both", (len(a0),), expected)]
    return world, actions, queries


def _build(task: str, variant: str, seed: int):
    rng = Rng(seed, ("eval", task, variant))
    if task == "movement":
        return _gen_movement_translation(rng) if variant == "translation" else _gen_movement_rotation(rng)
    if task == "grounding":
        return _gen_grounding(rng)
    if task == "memory":
        return _gen_memory(rng)
    if task == "building":
        return _gen_building(rng, variant)
    return _gen_consistency(rng, variant)


def gen_eval_episode(task: str, variant: str, seed: int) -> EvalEpisode:
    """Script one benchmark episode; a fixed seed pins it exactly."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if variant not in VARIANTS[task]:
        raise ValueError(f"unknown {task} variant {variant!r}")
    _, actions, queries = _build(task, variant, seed)
    ep = EvalEpisode(task=task, variant=variant, seed=seed, actions=actions, queries=queries)
    ep.validate()
    return ep


def build_eval_world(ep: EvalEpisode) -> World:
    """Reconstruct the episode's start world; judging and generation share it."""
    world, _, _ = _build(ep.task, ep.variant, ep.seed)
    return world
