"""Scripted two-agent episode library and the episode runner.

Each episode type is a pair of controllers driving the engine for a
seeded plan length. Controllers coordinate through a shared channel dict
(the in-process stand-in for a bot message bus) and mark themselves done;
the runner renders frames before applying actions, watches for stuck
state, and packages an EpisodeLog whose (type, seed) fully determine the
bytes. Replay rebuilds the initial world from the same seed and re-steps
the logged actions, which must reproduce the frames bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..substrate import Rng
from .world import (
    AIR,
    GROUND,
    HEADING_DELTAS,
    PLANK,
    STONE,
    SWORD_SLOT,
    World,
    Agent,
    blank_action,
    render_obs,
    step,
    visible,
    world_gen,
)

EPISODE_TYPES = (
    "walk_look",
    "walk_look_away",
    "build_structure",
    "chase",
    "place_and_mine",
    "pvp",
    "mine_tunnel",
)

# natural plan lengths in ticks; budgets add slack on top
PLAN_LENGTH = {
    "walk_look": 128,
    "walk_look_away": 144,
    "build_structure": 96,
    "chase": 160,
    "place_and_mine": 128,
    "pvp": 96,
    "mine_tunnel": 192,
}

WATCHDOG_K = 32


@dataclass
class EpisodeLog:
    episode_id: str
    episode_type: str
    world_kind: str
    seed: int
    frames: np.ndarray  # (P, T, H, W, C) float32
    actions: list       # [player][tick] action record dicts
    aborted: bool
    length: int

    def __post_init__(self):
        P, T = self.frames.shape[0], self.frames.shape[1]
        if any(len(a) != T for a in self.actions) or len(self.actions) != P:
            raise ValueError("frame count and action count must agree per player")


def _signed_turn(yaw: float, target_heading: int) -> float:
    return ((target_heading * 90.0 - yaw + 180.0) % 360.0) - 180.0


def _heading_toward(ag: Agent, pos: tuple) -> int:
    dr, dc = pos[0] - ag.row, pos[1] - ag.col
    if abs(dr) >= abs(dc):
        return 2 if dr > 0 else 0
    return 1 if dc > 0 else 3


def _dist(a: Agent, b: Agent) -> int:
    return abs(a.row - b.row) + abs(a.col - b.col)


def spawn_pair(
    world: World,
    rng: Rng,
    min_dist: int = 3,
    max_dist: int = 6,
    need_los: bool = True,
) -> None:
    """Teleport the two agents to face each other across clear ground."""
    H, W = world.grid.shape
    for attempt in range(100):
        r = int(rng.integers(2, H - 2))
        c = int(rng.integers(2, W - 2))
        heading = int(rng.integers(0, 4))
        k = int(rng.integers(min_dist, max_dist + 1))
        dr, dc = HEADING_DELTAS[heading]
        r2, c2 = r + dr * k, c + dc * k
        if not (1 <= r2 < H - 1 and 1 <= c2 < W - 1):
            continue
        cells = [(r + dr * i, c + dc * i) for i in range(k + 1)]
        if not all(world.passable(*cell) for cell in cells):
            continue
        world.agents[0].row, world.agents[0].col = r, c
        world.agents[0].yaw = heading * 90.0
        world.agents[1].row, world.agents[1].col = r2, c2
        world.agents[1].yaw = ((heading + 2) % 4) * 90.0
        for ag in world.agents:
            ag.health = 10
            ag.hotbar_slot = 1
            ag.mine_target = None
            ag.mine_progress = 0
        if need_los and not visible(world, world.agents[0].pos, world.agents[1].pos):
            continue
        return
    raise RuntimeError("no facing spawn pair found after 100 tries")


# --- controllers ------------------------------------------------------------
# A controller is called as ctl(world, idx, t, channel) -> action dict and
# sets channel[f"done{idx}"] when its script is finished.


class _Still:
    def __call__(self, world, idx, t, channel):
        channel[f"done{idx}"] = True
        return blank_action()


class _Stuck:
    """Fault injection: hangs emitting no-ops and never finishes."""

    def __call__(self, world, idx, t, channel):
        return blank_action()


class _WalkLook:
    """Random WASD bursts while holding the mutual gaze."""

    def __init__(self, rng: Rng, plan: int, mover: bool):
        self.rng = rng
        self.plan = plan
        self.mover = mover
        self.dir_key = "forward"

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        if not self.mover:
            return a
        if t % 8 == 0:
            keys = ("forward", "back", "left", "right")
            pick = int(self.rng.at(t).integers(0, 4))
            ag = world.agents[idx]
            deltas = {
                "forward": HEADING_DELTAS[ag.heading],
                "back": HEADING_DELTAS[(ag.heading + 2) % 4],
                "right": HEADING_DELTAS[(ag.heading + 1) % 4],
                "left": HEADING_DELTAS[(ag.heading + 3) % 4],
            }
            for off in range(4):  # skip walls so corners never wedge the walk
                cand = keys[(pick + off) % 4]
                dr, dc = deltas[cand]
                if world.passable(ag.row + dr, ag.col + dc):
                    self.dir_key = cand
                    break
            else:
                self.dir_key = keys[pick]
        a[self.dir_key] = 1
        return a


class _WalkLookAway:
    """Wander, turn 180 away, pause, turn back, repeat."""

    def __init__(self, rng: Rng, plan: int):
        self.rng = rng
        self.plan = plan

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        phase = t % 36
        if phase < 10:
            keys = ("forward", "back", "left", "right")
            a[keys[int(self.rng.at(t // 36).integers(0, 4))]] = 1
        elif phase in (10, 11):
            a["camera"] = (90.0, 0.0)  # two quarter turns away
        elif phase < 24:
            pass  # pause, facing away
        elif phase in (24, 25):
            a["camera"] = (-90.0, 0.0)  # turn back
        return a


class _Builder:
    """Place a short plank wall in front of the partner, then pace beside it."""

    def __init__(self, plan: int):
        self.plan = plan
        self.placed = 0
        self.phase = 0  # 0 select, 1 build, 2 pace

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        if self.phase == 0:
            a["hotbar.1"] = 1
            self.phase = 1
            return a
        if self.phase == 1:
            ag = world.agents[idx]
            fr, fc = HEADING_DELTAS[ag.heading]
            faced = (ag.row + fr, ag.col + fc)
            if world.tile(*faced) in (AIR, GROUND) and not world.occupied(*faced):
                a["place_block"] = 1
                self.placed += 1
            a["left"] = 1  # slide along the wall line for the next placement
            if self.placed >= 3 or t >= 20:
                # deadline covers the wedged case: blocked slide plus an
                # unplaceable faced cell would otherwise freeze the world
                self.phase = 2
            return a
        # pacing keeps the episode long enough to cut training windows from
        if t >= self.plan // 2:
            channel[f"done{idx}"] = True
            return a
        a["left" if (t // 4) % 2 == 0 else "right"] = 1
        if t % 8 == 0:
            # periodic glance: heading changes keep the watchdog fed even
            # when both strafe directions happen to be blocked
            a["camera"] = (90.0 if (t // 8) % 2 == 0 else -90.0, 0.0)
        return a


class _Runner:
    """Zig-zag escape: forward plus an alternating strafe."""

    def __init__(self, plan: int):
        self.plan = plan

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        ag = world.agents[idx]
        fr, fc = HEADING_DELTAS[ag.heading]
        if not world.passable(ag.row + fr, ag.col + fc):
            a["camera"] = (90.0, 0.0)
        a["forward"] = 1
        a["left" if (t // 6) % 2 == 0 else "right"] = 1
        return a


class _Pursuer:
    """Greedy chase at sprint speed; hovers when adjacent."""

    def __init__(self, plan: int, target_idx: int):
        self.plan = plan
        self.target_idx = target_idx

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        ag = world.agents[idx]
        target = world.agents[self.target_idx]
        want = _heading_toward(ag, target.pos)
        if want != ag.heading:
            a["camera"] = (_signed_turn(ag.yaw, want), 0.0)
        if _dist(ag, target) > 1:
            a["forward"] = 1
            a["sprint"] = 1
            a["jump"] = 1
        return a


class _Placer:
    """Half of place_and_mine: refill the gap cell with planks."""

    def __init__(self, plan: int):
        self.plan = plan
        self.selected = False

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        if not self.selected:
            a["hotbar.1"] = 1
            self.selected = True
            return a
        ag = world.agents[idx]
        fr, fc = HEADING_DELTAS[ag.heading]
        faced = (ag.row + fr, ag.col + fc)
        if world.tile(*faced) in (AIR, GROUND) and not world.occupied(*faced):
            a["place_block"] = 1
        return a


class _Breaker:
    """Other half of place_and_mine: mine whatever appears in the gap."""

    def __init__(self, plan: int):
        self.plan = plan

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        ag = world.agents[idx]
        fr, fc = HEADING_DELTAS[ag.heading]
        if world.tile(ag.row + fr, ag.col + fc) == PLANK:
            a["mine"] = 1
        return a


class _Duelist:
    """Sword out, close the gap, swing when the opponent is faced."""

    def __init__(self, rng: Rng, plan: int, other: int):
        self.rng = rng
        self.plan = plan
        self.other = other
        self.armed = False

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        opp = world.agents[self.other]
        ag = world.agents[idx]
        if t >= self.plan or opp.health == 0 or ag.health == 0:
            channel[f"done{idx}"] = True
            return a
        if not self.armed:
            a[f"hotbar.{SWORD_SLOT}"] = 1
            self.armed = True
            return a
        want = _heading_toward(ag, opp.pos)
        if want != ag.heading:
            a["camera"] = (_signed_turn(ag.yaw, want), 0.0)
        fr, fc = HEADING_DELTAS[want]
        if (ag.row + fr, ag.col + fc) == opp.pos:
            a["attack"] = 1
            if int(self.rng.at(t).integers(0, 3)) == 0:
                a["left" if int(self.rng.at(t + 1000).integers(0, 2)) else "right"] = 1
        else:
            a["forward"] = 1
        return a


class _Tunneler:
    """Mine the stone band toward the partner, then walk back home."""

    def __init__(self, plan: int, other: int):
        self.plan = plan
        self.other = other
        self.home = None
        self.returning = False

    def __call__(self, world, idx, t, channel):
        a = blank_action()
        ag = world.agents[idx]
        if self.home is None:
            self.home = ag.pos
        if t >= self.plan:
            channel[f"done{idx}"] = True
            return a
        if not self.returning and _dist(ag, world.agents[self.other]) <= 1:
            self.returning = True
        if self.returning:
            if ag.pos == self.home:
                channel[f"done{idx}"] = True
                return a
            want = _heading_toward(ag, self.home)
        else:
            want = _heading_toward(ag, world.agents[self.other].pos)
        if want != ag.heading:
            a["camera"] = (_signed_turn(ag.yaw, want), 0.0)
            return a
        fr, fc = HEADING_DELTAS[ag.heading]
        faced = (ag.row + fr, ag.col + fc)
        if world.tile(*faced) in (STONE,):
            a["mine"] = 1
        elif world.passable(*faced) and not world.occupied(*faced):
            a["forward"] = 1
        return a


def setup_episode(ep_type: str, seed: int):
    """Deterministically build (world, controllers, budget) for an episode.

    Both the runner and replay call this; everything that touches rng
    happens here, in a fixed order, so a (type, seed) pair pins the
    initial world bitwise.
    """
    if ep_type not in EPISODE_TYPES:
        raise ValueError(f"unknown episode type {ep_type!r}")
    rng = Rng(seed, ("episode", ep_type))
    plan = PLAN_LENGTH[ep_type]

    kind = "flat" if ep_type in ("build_structure", "place_and_mine", "pvp", "mine_tunnel") else (
        "flat" if int(rng.spawn("kind").integers(0, 2)) == 0 else "terrain"
    )
    world = world_gen(kind, seed)
    srng = rng.spawn("spawn")

    if ep_type == "walk_look":
        spawn_pair(world, srng)
        both = int(rng.spawn("movers").integers(0, 2)) == 1
        ctls = [
            _WalkLook(rng.spawn("w0"), plan, mover=True),
            _WalkLook(rng.spawn("w1"), plan, mover=both),
        ]
    elif ep_type == "walk_look_away":
        spawn_pair(world, srng)
        ctls = [_WalkLookAway(rng.spawn("w0"), plan), _Still()]
    elif ep_type == "build_structure":
        spawn_pair(world, srng, min_dist=4, max_dist=6)
        ctls = [_Builder(plan), _Builder(plan)]
    elif ep_type == "chase":
        spawn_pair(world, srng, min_dist=4, max_dist=6)
        ctls = [_Runner(plan), _Pursuer(plan, target_idx=0)]
    elif ep_type == "place_and_mine":
        spawn_pair(world, srng, min_dist=2, max_dist=2)
        ctls = [_Placer(plan), _Breaker(plan)]
    elif ep_type == "pvp":
        spawn_pair(world, srng, min_dist=2, max_dist=4)
        ctls = [_Duelist(rng.spawn("d0"), plan, other=1), _Duelist(rng.spawn("d1"), plan, other=0)]
    else:  # mine_tunnel
        spawn_pair(world, srng, min_dist=6, max_dist=9, need_los=False)
        a0, a1 = world.agents
        dr = np.sign(a1.row - a0.row)
        dc = np.sign(a1.col - a0.col)
        r, c = a0.row + dr, a0.col + dc
        while (r, c) != (a1.row, a1.col):
            world.grid[int(r), int(c)] = STONE
            r, c = r + dr, c + dc
        ctls = [_Tunneler(plan, other=1), _Tunneler(plan, other=0)]

    return world, ctls, plan + WATCHDOG_K


def run_episode(
    ep_type: str,
    seed: int,
    tick_budget: int | None = None,
    controllers_override: list | None = None,
) -> EpisodeLog:
    """Run one scripted episode and return its aligned log.

    Frame t is rendered before action t is applied, so action t is the
    input that leads to frame t+1. The watchdog aborts when the world
    fingerprint stays frozen for WATCHDOG_K ticks or the budget runs out
    before both controllers finish.
    """
    world, ctls, default_budget = setup_episode(ep_type, seed)
    if controllers_override is not None:
        ctls = controllers_override
    budget = default_budget if tick_budget is None else tick_budget

    channel: dict = {}
    frames: list = [[], []]
    actions: list = [[], []]
    aborted = False
    frozen = 0
    last_fp = world.fingerprint()

    t = 0
    while t < budget:
        if channel.get("done0") and channel.get("done1"):
            break
        for i in range(2):
            frames[i].append(render_obs(world, i))
        acts = [ctls[i](world, i, t, channel) for i in range(2)]
        for i in range(2):
            actions[i].append(acts[i])
        step(world, acts)
        t += 1
        fp = world.fingerprint()
        if fp == last_fp:
            frozen += 1
            if frozen >= WATCHDOG_K:
                aborted = True
                break
        else:
            frozen = 0
        last_fp = fp
    else:
        aborted = True  # budget exhausted before the scripts finished

    if not frames[0]:  # zero-tick degenerate run still logs one frame pair
        for i in range(2):
            frames[i].append(render_obs(world, i))
            actions[i].append(blank_action())

    frame_arr = np.stack([np.stack(f) for f in frames]).astype(np.float32)
    return EpisodeLog(
        episode_id=f"{ep_type}-{seed:08d}",
        episode_type=ep_type,
        world_kind=world.kind,
        seed=seed,
        frames=frame_arr,
        actions=actions,
        aborted=aborted,
        length=frame_arr.shape[1],
    )


def replay_episode(log: EpisodeLog) -> np.ndarray:
    """Re-simulate the logged actions from the seed; returns frames.

    The engine is its own oracle: the result must equal log.frames
    bitwise for any log this module produced.
    """
    world, _, _ = setup_episode(log.episode_type, log.seed)
    out: list = [[], []]
    for t in range(log.length):
        for i in range(2):
            out[i].append(render_obs(world, i))
        step(world, [log.actions[0][t], log.actions[1][t]])
    return np.stack([np.stack(f) for f in out]).astype(np.float32)
