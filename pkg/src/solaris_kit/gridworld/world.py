"""Deterministic two-agent tile world with egocentric rendering.

The grid is a top-down field of tile ids. Agents stand on passable tiles,
carry a hotbar, and act once per tick through flag records; all dynamics
are pure functions of (state, actions), so a logged episode replays
bitwise from its seed. Randomness exists only in world generation and in
the scripted controllers, never inside `step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..substrate import Rng

# tile ids
AIR = 0
GROUND = 1
STONE = 2
ORE = 3
PLANK = 4
TORCH = 5
N_TILES = 6

TILE_NAMES = ("air", "ground", "stone", "ore", "plank", "torch")

PASSABLE = frozenset({AIR, GROUND, TORCH})
OPAQUE = frozenset({STONE, ORE, PLANK})
# ticks of sustained mining before the tile breaks to air
HARDNESS = {GROUND: 1, TORCH: 1, PLANK: 2, STONE: 4, ORE: 6}

# observation geometry: 9x9 heading-up window, agent at bottom-center
OBS_H = 9
OBS_W = 9
ENTITY_CHANNEL = N_TILES        # 6
HUD_CHANNEL = N_TILES + 1       # 7
OBS_C = N_TILES + 2             # 8
AGENT_CELL = (OBS_H - 1, OBS_W // 2)

# hotbar: which tile each slot places; slot 4 is the sword (not placeable)
HOTBAR_ITEMS = {1: PLANK, 2: STONE, 3: TORCH}
SWORD_SLOT = 4
ATTACK_DAMAGE = 1
SWORD_DAMAGE = 2
MAX_HEALTH = 10

# headings are quarter turns clockwise from north
NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
HEADING_DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))

# action record schema, in canonical order; camera is a (yaw, pitch) pair
SUSTAINED_KEYS = ("forward", "back", "left", "right", "jump", "sprint", "sneak")
ONCE_KEYS = ("attack", "use", "mount", "dismount", "place_block", "place_entity")
HOTBAR_KEYS = tuple(f"hotbar.{i}" for i in range(1, 10))
ACTION_KEYS = SUSTAINED_KEYS + ("camera",) + ONCE_KEYS + ("mine",) + HOTBAR_KEYS

# feature layout for the model: 7 move flags, 2 camera, 7 event flags, 9 hotbar
ACTION_DIM = 25
CAMERA_SCALE = 90.0  # degrees per unit feature, one quarter turn


def blank_action() -> dict:
    a = {k: 0 for k in ACTION_KEYS}
    a["camera"] = (0.0, 0.0)
    return a


def validate_action(a: dict) -> None:
    for k in ACTION_KEYS:
        if k not in a:
            raise ValueError(f"action record missing key {k!r}")
        if k == "camera":
            if len(a["camera"]) != 2:
                raise ValueError("camera must be a (yaw, pitch) pair")
        elif a[k] not in (0, 1):
            raise ValueError(f"flag {k!r} must be 0 or 1, got {a[k]!r}")
    if sum(a[k] for k in HOTBAR_KEYS) > 1:
        raise ValueError("at most one hotbar flag per tick")


def action_features(a: dict) -> np.ndarray:
    """Flatten one action record to the model's 25-dim feature vector."""
    out = np.zeros(ACTION_DIM, dtype=np.float32)
    i = 0
    for k in SUSTAINED_KEYS:
        out[i] = a[k]
        i += 1
    out[i] = a["camera"][0] / CAMERA_SCALE
    out[i + 1] = a["camera"][1] / CAMERA_SCALE
    i += 2
    for k in ONCE_KEYS:
        out[i] = a[k]
        i += 1
    out[i] = a["mine"]
    i += 1
    for k in HOTBAR_KEYS:
        out[i] = a[k]
        i += 1
    return out


@dataclass
class Agent:
    row: int
    col: int
    yaw: float = 0.0           # degrees, clockwise, 0 = north
    pitch: float = 0.0
    hotbar_slot: int = 1
    health: int = MAX_HEALTH
    mine_target: tuple | None = None
    mine_progress: int = 0

    @property
    def heading(self) -> int:
        return int(round(self.yaw / 90.0)) % 4

    @property
    def pos(self) -> tuple:
        return (self.row, self.col)


@dataclass
class World:
    grid: np.ndarray
    agents: list
    rng: Rng
    kind: str = "flat"
    tick: int = 0
    weather: str = "clear"
    weather_period: int = 96

    @property
    def size(self) -> tuple:
        return self.grid.shape

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.grid.shape[0] and 0 <= c < self.grid.shape[1]

    def tile(self, r: int, c: int) -> int:
        if not self.in_bounds(r, c):
            return STONE  # the world edge is solid
        return int(self.grid[r, c])

    def passable(self, r: int, c: int) -> bool:
        return self.tile(r, c) in PASSABLE

    def occupied(self, r: int, c: int) -> bool:
        return any(ag.row == r and ag.col == c for ag in self.agents)

    def fingerprint(self) -> tuple:
        """Cheap state hash for the stuck-controller watchdog."""
        agents = tuple(
            (a.row, a.col, a.heading, a.hotbar_slot, a.health, a.mine_progress)
            for a in self.agents
        )
        return (agents, int(self.grid.sum()), hash(self.grid.tobytes()))


def _terrain_grid(size: int, rng: Rng) -> np.ndarray:
    """Long-wavelength value noise: ridges of stone with ore veins inside."""
    coarse_n = max(2, size // 8)
    coarse = rng.spawn("height").normal((coarse_n + 1, coarse_n + 1))
    ys = np.linspace(0, coarse_n, size)
    xs = np.linspace(0, coarse_n, size)
    y0 = np.clip(ys.astype(int), 0, coarse_n - 1)
    x0 = np.clip(xs.astype(int), 0, coarse_n - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    h = (
        coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + coarse[np.ix_(y0 + 1, x0)] * fy * (1 - fx)
        + coarse[np.ix_(y0, x0 + 1)] * (1 - fy) * fx
        + coarse[np.ix_(y0 + 1, x0 + 1)] * fy * fx
    )
    grid = np.full((size, size), GROUND, dtype=np.int8)
    ridge = h > np.quantile(h, 0.8)
    grid[ridge] = STONE
    ore_mask = ridge & (rng.spawn("ore").uniform((size, size)) < 0.12)
    grid[ore_mask] = ORE
    return grid


def world_gen(kind: str, seed: int, size: int = 64) -> World:
    """Build a world and teleport both agents to random valid spawns."""
    if kind not in ("flat", "terrain"):
        raise ValueError(f"unknown world kind {kind!r}")
    rng = Rng(seed, "world")
    if kind == "flat":
        grid = np.full((size, size), GROUND, dtype=np.int8)
    else:
        grid = _terrain_grid(size, rng)

    world = World(grid=grid, agents=[], rng=rng, kind=kind)
    spawn_rng = rng.spawn("spawn")
    agents = []
    for i in range(2):
        for attempt in range(100):
            r = int(spawn_rng.integers(1, size - 1))
            c = int(spawn_rng.integers(1, size - 1))
            if world.passable(r, c) and not any(a.row == r and a.col == c for a in agents):
                agents.append(Agent(row=r, col=c, yaw=90.0 * int(spawn_rng.integers(0, 4))))
                break
        else:
            raise RuntimeError(f"no valid spawn for agent {i} after 100 tries")
    world.agents = agents
    world.weather_period = 64 + int(rng.spawn("weather").integers(0, 64))
    return world


def _move_delta(heading: int, a: dict) -> tuple:
    dr, dc = 0, 0
    fr, fc = HEADING_DELTAS[heading]
    rr, rc = HEADING_DELTAS[(heading + 1) % 4]
    if a["forward"]:
        dr, dc = dr + fr, dc + fc
    if a["back"]:
        dr, dc = dr - fr, dc - fc
    if a["right"]:
        dr, dc = dr + rr, dc + rc
    if a["left"]:
        dr, dc = dr - rr, dc - rc
    return dr, dc


def _try_move(world: World, ag: Agent, dr: int, dc: int, jump: bool) -> None:
    if dr == 0 and dc == 0:
        return
    r, c = ag.row + dr, ag.col + dc
    if world.passable(r, c) and not world.occupied(r, c):
        ag.row, ag.col = r, c
        return
    if jump and not world.passable(r, c) and not world.occupied(r, c):
        # hop a one-tile obstacle when the landing cell is clear
        r2, c2 = ag.row + 2 * dr, ag.col + 2 * dc
        if world.passable(r2, c2) and not world.occupied(r2, c2):
            ag.row, ag.col = r2, c2
            return
    # axis sliding: blocked diagonals degrade to whichever axis is open
    if dr != 0 and dc != 0:
        if world.passable(ag.row + dr, ag.col) and not world.occupied(ag.row + dr, ag.col):
            ag.row += dr
        elif world.passable(ag.row, ag.col + dc) and not world.occupied(ag.row, ag.col + dc):
            ag.col += dc


def step(world: World, actions: list) -> World:
    """Advance one tick in place; returns the same World for chaining.

    Per-agent order each tick: hotbar, camera, movement, mining, placing,
    attacking. Invalid moves and placements are silent no-ops. The update
    is rng-free so logged action streams replay exactly.
    """
    if len(actions) != len(world.agents):
        raise ValueError("one action record per agent required")
    for a in actions:
        validate_action(a)

    for ag, a in zip(world.agents, actions):
        for i, k in enumerate(HOTBAR_KEYS):
            if a[k]:
                ag.hotbar_slot = i + 1
        ag.yaw = (ag.yaw + float(a["camera"][0])) % 360.0
        ag.pitch = float(np.clip(ag.pitch + float(a["camera"][1]), -90.0, 90.0))

        dr, dc = _move_delta(ag.heading, a)
        steps = 2 if a["sprint"] else 1
        if a["sneak"]:
            steps = 1 if world.tick % 2 == 0 else 0  # half speed, no sprint
        for _ in range(steps):
            _try_move(world, ag, dr, dc, bool(a["jump"]))

    for ag, a in zip(world.agents, actions):
        fr, fc = HEADING_DELTAS[ag.heading]
        faced = (ag.row + fr, ag.col + fc)

        if a["mine"]:
            tile = world.tile(*faced)
            if tile in HARDNESS and world.in_bounds(*faced):
                if ag.mine_target != faced:
                    ag.mine_target = faced
                    ag.mine_progress = 0
                ag.mine_progress += 1
                if ag.mine_progress >= HARDNESS[tile]:
                    world.grid[faced] = AIR
                    ag.mine_target = None
                    ag.mine_progress = 0
            else:
                ag.mine_target = None
                ag.mine_progress = 0
        else:
            ag.mine_target = None
            ag.mine_progress = 0

        if a["place_block"]:
            item = HOTBAR_ITEMS.get(ag.hotbar_slot)
            if (
                item is not None
                and world.in_bounds(*faced)
                and world.tile(*faced) in (AIR, GROUND)
                and not world.occupied(*faced)
            ):
                world.grid[faced] = item

        if a["attack"]:
            for other in world.agents:
                if other is not ag and (other.row, other.col) == faced:
                    dmg = SWORD_DAMAGE if ag.hotbar_slot == SWORD_SLOT else ATTACK_DAMAGE
                    other.health = max(0, other.health - dmg)

    world.tick += 1
    world.weather = "rain" if (world.tick // world.weather_period) % 2 else "clear"
    return world


def _los_cells(a: tuple, b: tuple):
    """Bresenham cells from a to b inclusive."""
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dr - dc
    r, c = r0, c0
    cells = [(r, c)]
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc
        cells.append((r, c))
    return cells


def visible(world: World, a: tuple, b: tuple) -> bool:
    """LOS with opacity checked strictly between the endpoints."""
    for cell in _los_cells(a, b)[1:-1]:
        if world.tile(*cell) in OPAQUE:
            return False
    return True


def _window_indices(ag: Agent) -> tuple:
    """World (row, col) index grids for the agent's heading-up window."""
    ahead = (OBS_H - 1) - np.arange(OBS_H)[:, None]          # rows: far..0
    lateral = np.arange(OBS_W)[None, :] - AGENT_CELL[1]      # cols: left..right
    h = ag.heading
    if h == NORTH:
        rows, cols = ag.row - ahead, ag.col + lateral
    elif h == EAST:
        rows, cols = ag.row + lateral, ag.col + ahead
    elif h == SOUTH:
        rows, cols = ag.row + ahead, ag.col - lateral
    else:
        rows, cols = ag.row - lateral, ag.col - ahead
    return np.broadcast_to(rows, (OBS_H, OBS_W)), np.broadcast_to(cols, (OBS_H, OBS_W))


def render_obs(world: World, agent_idx: int) -> np.ndarray:
    """Egocentric (9, 9, 8) observation: one-hot tiles, entity, HUD.

    Heading-up: the faced direction points to row 0, the agent sits at
    (8, 4). Out-of-window world edges render as stone. The other agent
    appears on the entity channel when inside the window with clear line
    of sight; its cell's tile channels are zeroed so each cell decodes to
    exactly one class. HUD corners carry hotbar slot and health.
    """
    if not 0 <= agent_idx < len(world.agents):
        raise ValueError(f"no agent {agent_idx}")
    ag = world.agents[agent_idx]
    rows, cols = _window_indices(ag)
    H, W = world.grid.shape
    oob = (rows < 0) | (rows >= H) | (cols < 0) | (cols >= W)
    tiles = np.where(
        oob, STONE, world.grid[np.clip(rows, 0, H - 1), np.clip(cols, 0, W - 1)]
    ).astype(np.int64)

    obs = np.zeros((OBS_H, OBS_W, OBS_C), dtype=np.float32)
    onehot = np.eye(N_TILES, dtype=np.float32)[tiles]
    obs[:, :, :N_TILES] = onehot

    for other in world.agents:
        if other is ag:
            continue
        hit = (rows == other.row) & (cols == other.col)
        if hit.any() and visible(world, ag.pos, other.pos):
            wr, wc = np.argwhere(hit)[0]
            obs[wr, wc, :N_TILES] = 0.0
            obs[wr, wc, ENTITY_CHANNEL] = 1.0

    obs[OBS_H - 1, 0, HUD_CHANNEL] = ag.hotbar_slot / 9.0
    obs[OBS_H - 1, OBS_W - 1, HUD_CHANNEL] = ag.health / MAX_HEALTH
    return obs
